//! SLIC over-segmentation (local k-means in CIELAB + image plane).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{Grid, Pixel, RasterImage};

const UNASSIGNED: u32 = u32::MAX;

/// Per-pixel object ids for one over-segmentation scale. Ids are dense in
/// `[0, count)` and every object is 4-connected.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    labels: Grid<u32>,
    count: usize,
}

impl LabelMap {
    /// Wraps a label grid after checking that ids are dense.
    pub fn from_grid(labels: Grid<u32>) -> Result<Self> {
        let count = labels.as_slice().iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut seen = vec![false; count];
        for &l in labels.as_slice() {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("label map skips id {missing}")));
        }
        Ok(LabelMap { labels, count })
    }

    pub fn grid(&self) -> &Grid<u32> {
        &self.labels
    }

    /// Number of objects.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> usize {
        *self.labels.get(row, col) as usize
    }

    /// Pixels of every object, each list in raster order.
    pub fn segments(&self) -> Vec<Vec<Pixel>> {
        let mut out = vec![Vec::new(); self.count];
        let w = self.labels.width();
        for (i, &l) in self.labels.as_slice().iter().enumerate() {
            out[l as usize].push((i / w, i % w));
        }
        out
    }

    /// Sorted, deduplicated 4-adjacency lists between objects.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.count];
        let (w, h) = self.labels.dims();
        for r in 0..h {
            for c in 0..w {
                let l = self.label(r, c);
                if c + 1 < w {
                    let m = self.label(r, c + 1);
                    if m != l {
                        adj[l].push(m);
                        adj[m].push(l);
                    }
                }
                if r + 1 < h {
                    let m = self.label(r + 1, c);
                    if m != l {
                        adj[l].push(m);
                        adj[m].push(l);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Mean object area in pixels.
    pub fn mean_area(&self) -> f64 {
        self.labels.len() as f64 / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicParams {
    /// Requested number of superpixels.
    pub k: usize,
    pub compactness: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl SlicParams {
    pub fn new(k: usize) -> Self {
        SlicParams {
            k,
            ..Default::default()
        }
    }
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            k: 10_000,
            compactness: 10.0,
            max_iterations: 10,
            seed: 0,
        }
    }
}

/// sRGB (D65) to CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    fn lin(u: u8) -> f64 {
        let v = u as f64 / 255.0;
        if v <= 0.04045 {
            v / 12.92
        } else {
            ((v + 0.055) / 1.055).powf(2.4)
        }
    }
    fn f(t: f64) -> f64 {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    }
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    row: f64,
    col: f64,
}

/// Over-segments `image` into roughly `params.k` compact superpixels.
pub fn slic_segment(image: &RasterImage, params: &SlicParams) -> Result<LabelMap> {
    let (w, h) = image.dims();
    let n = w * h;
    if params.k == 0 {
        return Err(Error::invalid("superpixel count k must be at least 1"));
    }
    if params.k > n {
        return Err(Error::invalid(format!(
            "superpixel count k = {} exceeds pixel count {n}",
            params.k
        )));
    }
    if !(params.compactness > 0.0 && params.compactness.is_finite()) {
        return Err(Error::invalid("compactness must be positive"));
    }
    let lab: Vec<[f64; 3]> = image.as_slice().iter().map(|&p| rgb_to_lab(p)).collect();

    let ny = ((params.k as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let nx = ((params.k as f64 / ny as f64).round() as usize).clamp(1, w);
    let cell_h = h as f64 / ny as f64;
    let cell_w = w as f64 / nx as f64;
    let step = (n as f64 / params.k as f64).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter_r = (cell_h * 0.1).floor() as i64;
    let jitter_c = (cell_w * 0.1).floor() as i64;
    let mut centers = Vec::with_capacity(ny * nx);
    for i in 0..ny {
        for j in 0..nx {
            let mut r = ((i as f64 + 0.5) * cell_h).floor() as i64;
            let mut c = ((j as f64 + 0.5) * cell_w).floor() as i64;
            if jitter_r > 0 {
                r += rng.random_range(-jitter_r..=jitter_r);
            }
            if jitter_c > 0 {
                c += rng.random_range(-jitter_c..=jitter_c);
            }
            let r = r.clamp(0, h as i64 - 1) as usize;
            let c = c.clamp(0, w as i64 - 1) as usize;
            let (r, c) = if cell_h >= 3.0 && cell_w >= 3.0 {
                lowest_gradient(&lab, w, h, r, c)
            } else {
                (r, c)
            };
            centers.push(Center {
                lab: lab[r * w + c],
                row: r as f64,
                col: c as f64,
            });
        }
    }

    let reach_r = cell_h.ceil() as i64;
    let reach_c = cell_w.ceil() as i64;
    let spatial = (params.compactness / step).powi(2);
    let mut labels = vec![UNASSIGNED; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.max_iterations.max(1) {
        dist.fill(f64::INFINITY);
        let mut changed = false;
        for (ci, ctr) in centers.iter().enumerate() {
            let r0 = (ctr.row.round() as i64 - reach_r).max(0) as usize;
            let r1 = (ctr.row.round() as i64 + reach_r).min(h as i64 - 1) as usize;
            let c0 = (ctr.col.round() as i64 - reach_c).max(0) as usize;
            let c1 = (ctr.col.round() as i64 + reach_c).min(w as i64 - 1) as usize;
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let i = r * w + c;
                    let p = &lab[i];
                    let dl = p[0] - ctr.lab[0];
                    let da = p[1] - ctr.lab[1];
                    let db = p[2] - ctr.lab[2];
                    let dr = r as f64 - ctr.row;
                    let dc = c as f64 - ctr.col;
                    let d = dl * dl + da * da + db * db + (dr * dr + dc * dc) * spatial;
                    if d < dist[i] {
                        dist[i] = d;
                        if labels[i] != ci as u32 {
                            labels[i] = ci as u32;
                            changed = true;
                        }
                    }
                }
            }
        }
        // Pixels that moved to a center which later lost them still count as
        // changed above; that only costs an extra iteration.
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == UNASSIGNED {
                continue;
            }
            let s = &mut sums[l as usize];
            s[0] += lab[i][0];
            s[1] += lab[i][1];
            s[2] += lab[i][2];
            s[3] += (i / w) as f64;
            s[4] += (i % w) as f64;
            s[5] += 1.0;
        }
        for (ctr, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                ctr.lab = [s[0] / s[5], s[1] / s[5], s[2] / s[5]];
                ctr.row = s[3] / s[5];
                ctr.col = s[4] / s[5];
            }
        }
        if !changed {
            break;
        }
    }

    let min_size = (n as f64 / params.k as f64 / 4.0).floor() as usize;
    let grid = enforce_connectivity(&labels, w, h, min_size);
    LabelMap::from_grid(Grid::from_vec(w, h, grid)?)
}

fn lowest_gradient(lab: &[[f64; 3]], w: usize, h: usize, r: usize, c: usize) -> (usize, usize) {
    let grad = |r: usize, c: usize| -> f64 {
        if r == 0 || c == 0 || r + 1 >= h || c + 1 >= w {
            return f64::INFINITY;
        }
        let d = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()
        };
        d(&lab[r * w + c + 1], &lab[r * w + c - 1]) + d(&lab[(r + 1) * w + c], &lab[(r - 1) * w + c])
    };
    let mut best = (r, c);
    let mut best_g = grad(r, c);
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            let rr = r as i64 + dr;
            let cc = c as i64 + dc;
            if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                continue;
            }
            let g = grad(rr as usize, cc as usize);
            if g < best_g {
                best_g = g;
                best = (rr as usize, cc as usize);
            }
        }
    }
    best
}

/// Splits labels into 4-connected fragments, merges fragments smaller than
/// `min_size` into their largest adjacent fragment and relabels densely in
/// raster order of first pixel.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![u32::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut unassigned: Vec<bool> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let value = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && labels[j] == value {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        sizes.push(size);
        unassigned.push(value == UNASSIGNED);
    }
    let m = sizes.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
    for r in 0..h {
        for c in 0..w {
            let a = comp[r * w + c];
            if c + 1 < w {
                let b = comp[r * w + c + 1];
                if a != b {
                    adj[a as usize].push(b);
                    adj[b as usize].push(a);
                }
            }
            if r + 1 < h {
                let b = comp[(r + 1) * w + c];
                if a != b {
                    adj[a as usize].push(b);
                    adj[b as usize].push(a);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let mut parent: Vec<usize> = (0..m).collect();
    let mut size = sizes.clone();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for c in 0..m {
        if sizes[c] >= min_size && !unassigned[c] {
            continue;
        }
        let root = find(&mut parent, c);
        if size[root] >= min_size && !unassigned[root] {
            // Grown past the threshold, or absorbed by an earlier merge.
            continue;
        }
        let mut best: Option<usize> = None;
        for &nb in &adj[c] {
            let nr = find(&mut parent, nb as usize);
            if nr == root {
                continue;
            }
            best = match best {
                None => Some(nr),
                Some(b) if size[nr] > size[b] || (size[nr] == size[b] && nr < b) => Some(nr),
                keep => keep,
            };
        }
        if let Some(target) = best {
            parent[root] = target;
            size[target] += size[root];
        }
    }

    let mut dense = vec![u32::MAX; m];
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for i in 0..n {
        let root = find(&mut parent, comp[i] as usize);
        if dense[root] == u32::MAX {
            dense[root] = next;
            next += 1;
        }
        out[i] = dense[root];
    }
    out
}

/// One SLIC run per requested superpixel count.
pub fn multiscale_segment(image: &RasterImage, ks: &[usize], base: &SlicParams) -> Result<Vec<LabelMap>> {
    if ks.is_empty() {
        return Err(Error::invalid("at least one superpixel scale is required"));
    }
    ks.iter()
        .map(|&k| slic_segment(image, &SlicParams { k, ..base.clone() }))
        .collect()
}

//! Grid types shared by every stage.
//!
//! All grids are row-major with the origin at the top-left corner. Points are
//! `(row, col)` pairs.

use serde::Serialize;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Integer pixel coordinate, `(row, col)`.
pub type Pixel = (usize, usize);

/// Row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// 8-bit RGB raster.
pub type RasterImage = Grid<Rgb>;
/// Boolean raster (road masks, centerline maps, junction maps).
pub type BinaryMask = Grid<bool>;
/// Real-valued raster (likelihoods, saliency maps).
pub type ScalarField = Grid<f64>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T: Clone + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::default())
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn check_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn check_point(&self, (row, col): Pixel) -> Result<()> {
        if row >= self.height || col >= self.width {
            return Err(Error::OutOfBounds {
                row,
                col,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Pixel]) -> Self {
        let mut m = BinaryMask::new(width, height);
        for &(r, c) in pixels {
            m.set(r, c, true);
        }
        m
    }

    /// Pixel-wise OR. Dimensions must agree.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

impl ScalarField {
    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0_f64, f64::max)
    }

    /// Bilinear sample at fractional `(row, col)`. Returns `None` outside the
    /// grid.
    pub fn bilinear(&self, row: f64, col: f64) -> Option<f64> {
        if !(row >= 0.0 && col >= 0.0) {
            return None;
        }
        let max_r = (self.height - 1) as f64;
        let max_c = (self.width - 1) as f64;
        if row > max_r || col > max_c {
            return None;
        }
        let r0 = row.floor() as usize;
        let c0 = col.floor() as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let fr = row - r0 as f64;
        let fc = col - c0 as f64;
        let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
        Some(top * (1.0 - fr) + bottom * fr)
    }
}

/// Pixel connectivity for component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Inclusive bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

/// A maximal connected set of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    /// Pixels in raster order.
    pub pixels: Vec<Pixel>,
    /// Number of pixel edges that border a pixel outside the component.
    pub perimeter: usize,
}

impl Component {
    /// Builds a component from an arbitrary pixel set, computing its
    /// perimeter as the number of exposed pixel edges.
    pub fn from_pixels(id: usize, mut pixels: Vec<Pixel>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        let perimeter = exposed_edges(&pixels);
        Component {
            id,
            pixels,
            perimeter,
        }
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox {
            min_row: usize::MAX,
            min_col: usize::MAX,
            max_row: 0,
            max_col: 0,
        };
        for &(r, c) in &self.pixels {
            b.min_row = b.min_row.min(r);
            b.min_col = b.min_col.min(c);
            b.max_row = b.max_row.max(r);
            b.max_col = b.max_col.max(c);
        }
        b
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(sr, sc), &(r, c)| (sr + r as f64, sc + c as f64));
        (sr / n, sc / n)
    }
}

/// Counts edges between a pixel of the (sorted) set and a pixel not in it.
fn exposed_edges(sorted: &[Pixel]) -> usize {
    let contains = |p: Pixel| sorted.binary_search(&p).is_ok();
    let mut exposed = 0;
    for &(r, c) in sorted {
        if r == 0 || !contains((r - 1, c)) {
            exposed += 1;
        }
        if c == 0 || !contains((r, c - 1)) {
            exposed += 1;
        }
        if !contains((r + 1, c)) {
            exposed += 1;
        }
        if !contains((r, c + 1)) {
            exposed += 1;
        }
    }
    exposed
}

/// Component summary for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentSummary {
    pub id: usize,
    pub area: usize,
    pub perimeter: usize,
    pub bbox: BBox,
}

impl From<&Component> for ComponentSummary {
    fn from(c: &Component) -> Self {
        ComponentSummary {
            id: c.id,
            area: c.area(),
            perimeter: c.perimeter,
            bbox: c.bbox(),
        }
    }
}

/// Labels the connected components of `mask`. Ids follow the raster order of
/// each component's first pixel.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            pixels.push((r, c));
            for &(dr, dc) in connectivity.offsets() {
                let nr = r as isize + dr;
                let nc = c as isize + dc;
                if !mask.in_bounds(nr, nc) {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if mask.data[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        pixels.sort_unstable();
        let perimeter = mask_perimeter(mask, &pixels);
        out.push(Component {
            id: out.len(),
            pixels,
            perimeter,
        });
    }
    out
}

fn mask_perimeter(mask: &BinaryMask, pixels: &[Pixel]) -> usize {
    let mut exposed = 0;
    for &(r, c) in pixels {
        for &(dr, dc) in Connectivity::Four.offsets() {
            let nr = r as isize + dr;
            let nc = c as isize + dc;
            if !mask.in_bounds(nr, nc) || !mask.get(nr as usize, nc as usize) {
                exposed += 1;
            }
        }
    }
    exposed
}

/// Pixels of the 8-connected digital straight line between `p0` and `p1`.
///
/// The line is always traced from the lexicographically smaller endpoint, so
/// both endpoint orders give the same pixel set.
pub fn line_pixels(p0: Pixel, p1: Pixel) -> Vec<Pixel> {
    let (a, b) = if p0 <= p1 { (p0, p1) } else { (p1, p0) };
    let (r0, c0) = (a.0 as i64, a.1 as i64);
    let (r1, c1) = (b.0 as i64, b.1 as i64);
    let dr = r1 - r0;
    let dc = c1 - c0;
    let steps = dr.abs().max(dc.abs());
    if steps == 0 {
        return vec![a];
    }
    // Exact rounding of the minor coordinate: floor(x + 1/2) on rationals.
    let round_div = |num: i64, den: i64| -> i64 { (2 * num + den).div_euclid(2 * den) };
    (0..=steps)
        .map(|i| {
            let r = r0 + round_div(i * dr, steps);
            let c = c0 + round_div(i * dc, steps);
            (r as usize, c as usize)
        })
        .collect()
}

/// Returns a copy of `mask` with the digital line from `p0` to `p1` set.
pub fn draw_segment(mask: &BinaryMask, p0: Pixel, p1: Pixel) -> Result<BinaryMask> {
    mask.check_point(p0)?;
    mask.check_point(p1)?;
    let mut out = mask.clone();
    for (r, c) in line_pixels(p0, p1) {
        out.set(r, c, true);
    }
    Ok(out)
}

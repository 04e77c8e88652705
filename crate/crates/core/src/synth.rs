//! Synthetic road scenes with exact ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{line_pixels, BinaryMask, Grid, RasterImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    /// Polyline vertices as `[row, col]`.
    pub points: Vec<[f64; 2]>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disk { center: [f64; 2], radius: f64 },
    Rect { row: f64, col: f64, height: f64, width: f64 },
}

impl Shape {
    fn contains(&self, r: f64, c: f64) -> bool {
        match *self {
            Shape::Disk { center, radius } => (r - center[0]).powi(2) + (c - center[1]).powi(2) <= radius * radius,
            Shape::Rect { row, col, height, width } => r >= row && r < row + height && c >= col && c < col + width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    #[serde(flatten)]
    pub shape: Shape,
    /// Defaults to the road color for distractors and to foliage green for occluders.
    #[serde(default)]
    pub color: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
    pub background: [u8; 3],
    pub road_color: [u8; 3],
    #[serde(default)]
    pub noise_sigma: f64,
    pub roads: Vec<Road>,
    /// Background-colored regions painted before roads.
    #[serde(default)]
    pub fields: Vec<Blob>,
    /// Painted over roads; ground truth is unaffected.
    #[serde(default)]
    pub occluders: Vec<Blob>,
    /// Road-like blobs that are not roads.
    #[serde(default)]
    pub distractors: Vec<Blob>,
}

const OCCLUDER_COLOR: [u8; 3] = [46, 92, 38];

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RasterImage,
    pub road: BinaryMask,
    pub centerline: BinaryMask,
    /// Road pixels not covered by an occluder.
    pub visible: BinaryMask,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidScene("canvas must be nonempty".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidScene("noise_sigma must be finite and >= 0".into()));
        }
        for (i, road) in self.roads.iter().enumerate() {
            if !(road.width >= 3.0) {
                return Err(Error::InvalidScene(format!("road {i}: width {} < 3", road.width)));
            }
            if road.points.len() < 2 {
                return Err(Error::InvalidScene(format!("road {i}: needs at least two points")));
            }
            for p in &road.points {
                let inside = p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (self.height - 1) as f64 && p[1] <= (self.width - 1) as f64;
                if !inside {
                    return Err(Error::InvalidScene(format!("road {i}: point {p:?} outside the canvas")));
                }
            }
        }
        Ok(())
    }
}

fn point_segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Pixels whose centers lie within `width / 2` of the polyline.
pub fn road_mask(width: usize, height: usize, road: &Road) -> BinaryMask {
    let mut m = BinaryMask::filled(width, height, false);
    let half = road.width / 2.0;
    for seg in road.points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let r0 = (a[0].min(b[0]) - half).floor().max(0.0) as usize;
        let r1 = ((a[0].max(b[0]) + half).ceil() as usize).min(height - 1);
        let c0 = (a[1].min(b[1]) - half).floor().max(0.0) as usize;
        let c1 = ((a[1].max(b[1]) + half).ceil() as usize).min(width - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if point_segment_dist2([r as f64, c as f64], a, b) <= half * half {
                    m.set(r, c, true);
                }
            }
        }
    }
    m
}

fn rounded(p: [f64; 2]) -> (usize, usize) {
    (p[0].round() as usize, p[1].round() as usize)
}

fn paint(image: &mut RasterImage, blob: &Blob, default: [u8; 3]) {
    let color = blob.color.unwrap_or(default);
    let (w, h) = image.dims();
    for r in 0..h {
        for c in 0..w {
            if blob.shape.contains(r as f64, c as f64) {
                image.set(r, c, color);
            }
        }
    }
}

/// Renders the image and its road and centerline references.
pub fn render(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut road = BinaryMask::filled(w, h, false);
    let mut centerline = BinaryMask::filled(w, h, false);
    for r in &spec.roads {
        road = road.union(&road_mask(w, h, r))?;
        for seg in r.points.windows(2) {
            for (pr, pc) in line_pixels(rounded(seg[0]), rounded(seg[1])) {
                centerline.set(pr, pc, true);
            }
        }
    }
    // Rounded vertices can fall a hair outside a thin road near its ends.
    for (c, &r) in centerline.as_mut_slice().iter_mut().zip(road.as_slice()) {
        *c = *c && r;
    }
    let mut image = Grid::filled(w, h, spec.background);
    for f in &spec.fields {
        paint(&mut image, f, spec.background);
    }
    for d in &spec.distractors {
        paint(&mut image, d, spec.road_color);
    }
    for (px, &on) in image.as_mut_slice().iter_mut().zip(road.as_slice()) {
        if on {
            *px = spec.road_color;
        }
    }
    let mut visible = road.clone();
    for o in &spec.occluders {
        paint(&mut image, o, OCCLUDER_COLOR);
        for (r, c) in road.pixels() {
            if o.shape.contains(r as f64, c as f64) {
                visible.set(r, c, false);
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidScene(e.to_string()))?;
        for px in image.as_mut_slice() {
            for ch in px.iter_mut() {
                *ch = (*ch as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(Scene { image, road, centerline, visible })
}

/// Built-in scenes used by tests and demos.
pub mod presets {
    use super::*;

    /// A straight horizontal road across the canvas.
    pub fn straight_road(size: usize, road_width: f64, noise: f64, seed: u64) -> SceneSpec {
        let mid = (size / 2) as f64;
        SceneSpec {
            width: size,
            height: size,
            seed,
            background: [112, 128, 84],
            road_color: [172, 168, 160],
            noise_sigma: noise,
            roads: vec![Road { points: vec![[mid, 0.0], [mid, (size - 1) as f64]], width: road_width }],
            fields: vec![],
            occluders: vec![],
            distractors: vec![],
        }
    }

    /// A gently curving road with road-colored distractor blobs and square
    /// occluders over about `occlusion` of the road's area.
    pub fn occluded_curve(size: usize, road_width: f64, occlusion: f64, noise: f64, seed: u64) -> SceneSpec {
        let s = size as f64;
        let n = 48;
        let curve: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                let col = t * (s - 1.0);
                let row = s * (0.45 + 0.10 * (std::f64::consts::PI * 1.5 * t).sin());
                [row, col]
            })
            .collect();
        let roads = vec![Road { points: curve.clone(), width: road_width }];
        let fields = vec![
            Blob { shape: Shape::Rect { row: 0.04 * s, col: 0.05 * s, height: 0.18 * s, width: 0.3 * s }, color: Some([138, 150, 96]) },
            Blob { shape: Shape::Rect { row: 0.72 * s, col: 0.08 * s, height: 0.2 * s, width: 0.34 * s }, color: Some([96, 110, 70]) },
            Blob { shape: Shape::Rect { row: 0.68 * s, col: 0.7 * s, height: 0.24 * s, width: 0.24 * s }, color: Some([150, 132, 104]) },
        ];
        let distractors = vec![
            Blob { shape: Shape::Disk { center: [0.16 * s, 0.84 * s], radius: 0.045 * s }, color: None },
            Blob { shape: Shape::Rect { row: 0.76 * s, col: 0.3 * s, height: 0.08 * s, width: 0.1 * s }, color: None },
        ];
        let mut spec = SceneSpec {
            width: size,
            height: size,
            seed,
            background: [112, 128, 84],
            road_color: [172, 168, 160],
            noise_sigma: noise,
            roads,
            fields,
            occluders: vec![],
            distractors,
        };
        // Occluders sit on the curve at evenly spaced arc positions, added
        // until the target share of the road is covered.
        let curve_mask = road_mask(size, size, &spec.roads[0]);
        let total = curve_mask.count() as f64;
        let side = 1.8 * road_width;
        let slots = 12;
        let order = [0, 6, 3, 9, 1, 7, 4, 10, 2, 8, 5, 11];
        let mut covered = BinaryMask::filled(size, size, false);
        for &k in order.iter().take(slots) {
            if (covered.count() as f64) >= occlusion * total {
                break;
            }
            let t = (k as f64 + 0.5) / slots as f64;
            let idx = ((t * n as f64).round() as usize).min(n);
            let [r, c] = curve[idx];
            let mut len = side;
            // Shorten the last square so coverage lands close to the target.
            let remaining = occlusion * total - covered.count() as f64;
            if remaining < side * road_width {
                len = (remaining / road_width).max(2.0);
            }
            let blob = Blob { shape: Shape::Rect { row: r - side / 2.0, col: c - len / 2.0, height: side, width: len }, color: None };
            for rr in 0..size {
                for cc in 0..size {
                    if blob.shape.contains(rr as f64, cc as f64) && *curve_mask.get(rr, cc) {
                        covered.set(rr, cc, true);
                    }
                }
            }
            spec.occluders.push(blob);
        }
        spec
    }
}

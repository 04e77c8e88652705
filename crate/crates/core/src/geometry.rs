//! Planar helpers: convex hull and minimum-area enclosing rectangle.

use crate::raster::Pixel;

/// Point in continuous `(x, y)` = `(col, row)` coordinates.
pub type Point2 = (f64, f64);

/// Oriented rectangle from the rotating-calipers search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub length: f64,
    pub width: f64,
    /// Direction of the long side, radians in `[0, pi)`.
    pub angle: f64,
}

impl OrientedBox {
    /// Long side over short side; `1` for degenerate boxes.
    pub fn elongation(&self) -> f64 {
        if self.width <= 0.0 {
            return 1.0;
        }
        self.length / self.width
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of integer points (Andrew's monotone chain), counter-clockwise,
/// without collinear vertices.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Hull of the pixel centers, in `(x, y)` = `(col, row)` order.
pub fn pixel_center_hull(pixels: &[Pixel]) -> Vec<(i64, i64)> {
    let centers: Vec<(i64, i64)> = pixels.iter().map(|&(r, c)| (c as i64, r as i64)).collect();
    convex_hull(&centers)
}

/// Minimum-area enclosing rectangle of a convex polygon. One side of the
/// optimum is collinear with a hull edge, so every edge direction is tried.
pub fn min_area_rect(hull: &[(i64, i64)]) -> OrientedBox {
    match hull.len() {
        0 => {
            return OrientedBox {
                length: 0.0,
                width: 0.0,
                angle: 0.0,
            }
        }
        1 => {
            return OrientedBox {
                length: 0.0,
                width: 0.0,
                angle: 0.0,
            }
        }
        _ => {}
    }
    let pts: Vec<Point2> = hull.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let norm = dx.hypot(dy);
        if norm == 0.0 {
            continue;
        }
        let (ux, uy) = (dx / norm, dy / norm);
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &pts {
            let u = x * ux + y * uy;
            let v = -x * uy + y * ux;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        let (su, sv) = (hi_u - lo_u, hi_v - lo_v);
        let area = su * sv;
        let edge_angle = uy.atan2(ux);
        let (length, width, angle) = if su >= sv {
            (su, sv, edge_angle)
        } else {
            (sv, su, edge_angle + std::f64::consts::FRAC_PI_2)
        };
        let angle = angle.rem_euclid(std::f64::consts::PI);
        let cand = OrientedBox {
            length,
            width,
            angle,
        };
        // Tie-break equal areas by the more elongated box, then by angle,
        // so the result does not depend on the hull's starting vertex.
        let better = match &best {
            None => true,
            Some((ba, bb)) => {
                area < ba - 1e-9
                    || ((area - ba).abs() <= 1e-9
                        && (cand.length > bb.length + 1e-9
                            || ((cand.length - bb.length).abs() <= 1e-9 && cand.angle < bb.angle)))
            }
        };
        if better {
            best = Some((area, cand));
        }
    }
    best.map(|(_, b)| b).unwrap_or(OrientedBox {
        length: 0.0,
        width: 0.0,
        angle: 0.0,
    })
}

/// Length/width of the minimum-area rectangle around the pixel centers.
///
/// Collinear pixel runs have a zero-width center box; they are measured as a
/// one-pixel-wide strip whose length includes the end pixels.
pub fn pixel_box_elongation(pixels: &[Pixel]) -> f64 {
    let hull = pixel_center_hull(pixels);
    if hull.len() <= 1 {
        return 1.0;
    }
    let rect = min_area_rect(&hull);
    if rect.width <= 1e-9 {
        return rect.length + 1.0;
    }
    rect.elongation()
}

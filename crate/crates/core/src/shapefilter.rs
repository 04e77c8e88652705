//! Removal of compact road-like blobs by area and ellipse elongation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::pixel_box_elongation;
use crate::raster::{connected_components, BinaryMask, Component, Connectivity, Pixel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    pub min_area: usize,
    pub lfi_threshold: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            min_area: 300,
            lfi_threshold: 3.0,
        }
    }
}

impl ShapeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lfi_threshold >= 1.0 && self.lfi_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "lfi_threshold must be >= 1, got {}",
                self.lfi_threshold
            )));
        }
        Ok(())
    }
}

/// Ellipse with the same second moments as a pixel set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentEllipse {
    /// `(row, col)`.
    pub center: (f64, f64),
    pub major_len: f64,
    pub minor_len: f64,
    /// Major-axis direction in `(x = col, y = row)` coordinates, radians in `(-pi/2, pi/2]`.
    pub orientation: f64,
}

/// Each pixel is treated as a unit square, so its own variance `1/12` is added
/// to both axes. Axes are `4 sqrt(eigenvalue)`; the minor axis is floored at 1 px.
pub fn equivalent_ellipse(pixels: &[Pixel]) -> EquivalentEllipse {
    assert!(!pixels.is_empty(), "ellipse of an empty pixel set");
    let n = pixels.len() as f64;
    let (sr, sc) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let (mr, mc) = (sr / n, sc / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let (dx, dy) = (c as f64 - mc, r as f64 - mr);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx = sxx / n + 1.0 / 12.0;
    syy = syy / n + 1.0 / 12.0;
    sxy /= n;
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let l1 = half_tr + disc;
    let l2 = (half_tr - disc).max(0.0);
    let mut orientation = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    }
    EquivalentEllipse {
        center: (mr, mc),
        major_len: 4.0 * l1.sqrt(),
        minor_len: (4.0 * l2.sqrt()).max(1.0),
        orientation,
    }
}

/// Ellipse-based linear feature index, always `>= 1`.
pub fn lfi_ellipse(pixels: &[Pixel]) -> f64 {
    let e = equivalent_ellipse(pixels);
    (e.major_len / e.minor_len).max(1.0)
}

/// Oriented-bounding-box linear feature index.
pub fn lfi_box(pixels: &[Pixel]) -> f64 {
    pixel_box_elongation(pixels)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentDiagnostics {
    pub id: usize,
    pub area: usize,
    pub lfi_box: f64,
    pub lfi_ellipse: f64,
    pub kept: bool,
}

/// Keeps the 8-connected components with `area >= min_area` and
/// `lfi_ellipse >= lfi_threshold`.
pub fn filter_road_like(mask: &BinaryMask, params: &ShapeParams) -> Result<(BinaryMask, Vec<ComponentDiagnostics>)> {
    params.validate()?;
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false);
    let mut diag = Vec::new();
    for comp in connected_components(mask, Connectivity::Eight) {
        let d = diagnose(&comp, params);
        if d.kept {
            for &(r, c) in &comp.pixels {
                out.set(r, c, true);
            }
        }
        diag.push(d);
    }
    Ok((out, diag))
}

fn diagnose(comp: &Component, params: &ShapeParams) -> ComponentDiagnostics {
    let lfi_e = lfi_ellipse(&comp.pixels);
    ComponentDiagnostics {
        id: comp.id,
        area: comp.area(),
        lfi_box: lfi_box(&comp.pixels),
        lfi_ellipse: lfi_e,
        kept: comp.area() >= params.min_area && lfi_e >= params.lfi_threshold,
    }
}

pub fn diagnostics_csv(rows: &[ComponentDiagnostics]) -> String {
    let mut s = String::from("id,area,lfi_box,lfi_ellipse,kept\n");
    for d in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            d.id, d.area, d.lfi_box, d.lfi_ellipse, d.kept as u8
        ));
    }
    s
}

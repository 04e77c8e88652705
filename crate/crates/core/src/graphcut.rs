//! Binary road labeling by exact min-cut.
//!
//! Energy = Σ regional(label_i) + α Σ_{8-neighbour pairs} [l_i ≠ l_j] / (s‖rgb_i − rgb_j‖ + ε).
//! Road is the source side of the cut. `s` is `color_scale`; the default
//! 1/255 measures colour distance on [0, 1] channels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maxflow::{Graph, Segment};
use crate::raster::{BinaryMask, Grid, RasterImage, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcParams {
    pub smoothness_weight: f64,
    pub epsilon: f64,
    pub likelihood_clamp: f64,
    pub color_scale: f64,
}

impl Default for GcParams {
    fn default() -> Self {
        GcParams {
            smoothness_weight: 0.8,
            epsilon: 0.001,
            likelihood_clamp: 0.01,
            color_scale: 1.0 / 255.0,
        }
    }
}

impl GcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness_weight.is_finite() && self.smoothness_weight >= 0.0) {
            return Err(Error::invalid("smoothness_weight must be finite and >= 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be finite and > 0"));
        }
        if !(self.likelihood_clamp > 0.0 && self.likelihood_clamp < 0.5) {
            return Err(Error::invalid("likelihood_clamp must lie in (0, 0.5)"));
        }
        if !(self.color_scale.is_finite() && self.color_scale > 0.0) {
            return Err(Error::invalid("color_scale must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub regional: f64,
    pub boundary: f64,
    pub total: f64,
}

/// Unordered 8-neighbour offsets (each pair visited once).
const HALF_NEIGHBOURS: [(isize, isize); 4] = [(0, 1), (1, -1), (1, 0), (1, 1)];

/// `-ln` of the clamped likelihood of `road` (or its complement).
pub fn regional_cost(p_road: f64, road: bool, clamp: f64) -> f64 {
    let p = if road { p_road } else { 1.0 - p_road };
    -p.clamp(clamp, 1.0 - clamp).ln()
}

fn pair_weight(a: [u8; 3], b: [u8; 3], params: &GcParams) -> f64 {
    let d2: f64 = (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum();
    1.0 / (params.color_scale * d2.sqrt() + params.epsilon)
}

/// Unweighted boundary term of a labeling.
pub fn boundary_cost(image: &RasterImage, labeling: &BinaryMask, params: &GcParams) -> Result<f64> {
    image.check_same_dims(labeling)?;
    let mut total = 0.0;
    for_each_pair(image.width(), image.height(), |i, j| {
        if labeling.as_slice()[i] != labeling.as_slice()[j] {
            total += pair_weight(image.as_slice()[i], image.as_slice()[j], params);
        }
    });
    Ok(total)
}

fn for_each_pair(w: usize, h: usize, mut f: impl FnMut(usize, usize)) {
    for r in 0..h {
        for c in 0..w {
            for (dr, dc) in HALF_NEIGHBOURS {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < h as isize && cc >= 0 && cc < w as isize {
                    f(r * w + c, rr as usize * w + cc as usize);
                }
            }
        }
    }
}

/// Full energy of a labeling.
pub fn energy(
    image: &RasterImage,
    likelihood: &ScalarField,
    labeling: &BinaryMask,
    params: &GcParams,
) -> Result<EnergyBreakdown> {
    image.check_same_dims(likelihood)?;
    let regional = likelihood
        .as_slice()
        .iter()
        .zip(labeling.as_slice())
        .map(|(&p, &l)| regional_cost(p, l, params.likelihood_clamp))
        .sum::<f64>();
    let boundary = boundary_cost(image, labeling, params)?;
    Ok(EnergyBreakdown {
        regional,
        boundary,
        total: regional + params.smoothness_weight * boundary,
    })
}

/// Globally optimal labeling. Pixels with no preference end up non-road.
pub fn min_cut_segment(
    image: &RasterImage,
    likelihood: &ScalarField,
    params: &GcParams,
) -> Result<(BinaryMask, EnergyBreakdown)> {
    params.validate()?;
    image.check_same_dims(likelihood)?;
    if let Some(bad) = likelihood.as_slice().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("likelihood {bad} outside [0, 1]")));
    }
    let (w, h) = image.dims();
    let n = w * h;
    let mut g = Graph::with_capacity(n, 4 * n);
    for (i, &p) in likelihood.as_slice().iter().enumerate() {
        let cost_road = regional_cost(p, true, params.likelihood_clamp);
        let cost_other = regional_cost(p, false, params.likelihood_clamp);
        g.add_tweights(i, cost_other, cost_road);
    }
    if params.smoothness_weight > 0.0 {
        let px = image.as_slice();
        for_each_pair(w, h, |i, j| {
            let c = params.smoothness_weight * pair_weight(px[i], px[j], params);
            g.add_edge(i, j, c, c);
        });
    }
    g.maxflow();
    let mask = Grid::from_vec(w, h, (0..n).map(|i| g.segment(i) == Segment::Source).collect())?;
    let e = energy(image, likelihood, &mask, params)?;
    Ok((mask, e))
}

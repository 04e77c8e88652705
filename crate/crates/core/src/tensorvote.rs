//! Second-order 2-D tensor voting.
//!
//! Coordinates are `x = col`, `y = row`. A stick tensor `e1 e1ᵀ` encodes a
//! curve whose *normal* is `e1`. Tokens first exchange ball votes to estimate
//! their orientation, then cast stick and ball votes to every pixel in range.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Grid, ScalarField};

/// Symmetric 2x2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor2 {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2 { sxx: 0.0, sxy: 0.0, syy: 0.0 };

    /// `w v vᵀ`.
    pub fn outer(v: [f64; 2], w: f64) -> Self {
        Tensor2 {
            sxx: w * v[0] * v[0],
            sxy: w * v[0] * v[1],
            syy: w * v[1] * v[1],
        }
    }

    pub fn identity() -> Self {
        Tensor2 { sxx: 1.0, sxy: 0.0, syy: 1.0 }
    }

    #[inline]
    pub fn add_scaled(&mut self, other: &Tensor2, w: f64) {
        self.sxx += w * other.sxx;
        self.sxy += w * other.sxy;
        self.syy += w * other.syy;
    }

    pub fn trace(&self) -> f64 {
        self.sxx + self.syy
    }
}

impl std::ops::Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2 {
            sxx: self.sxx + o.sxx,
            sxy: self.sxy + o.sxy,
            syy: self.syy + o.syy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorDecomp {
    pub lambda1: f64,
    pub lambda2: f64,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl TensorDecomp {
    pub fn stick_saliency(&self) -> f64 {
        self.lambda1 - self.lambda2
    }

    pub fn ball_saliency(&self) -> f64 {
        self.lambda2
    }

    pub fn reconstruct(&self) -> Tensor2 {
        Tensor2::outer(self.e1, self.lambda1) + Tensor2::outer(self.e2, self.lambda2)
    }
}

/// Closed-form eigen-decomposition. `e1` is canonicalized to `x > 0`, or
/// `y > 0` when `x = 0`; `e2` is `e1` rotated by +90°. Slightly negative
/// eigenvalues are clamped to zero.
pub fn decompose(t: &Tensor2) -> TensorDecomp {
    let half_tr = 0.5 * (t.sxx + t.syy);
    let half_diff = 0.5 * (t.sxx - t.syy);
    let disc = half_diff.hypot(t.sxy);
    let lambda1 = (half_tr + disc).max(0.0);
    let lambda2 = (half_tr - disc).max(0.0);
    let angle = 0.5 * t.sxy.atan2(half_diff);
    let mut e1 = [angle.cos(), angle.sin()];
    if e1[0] < 0.0 || (e1[0] == 0.0 && e1[1] < 0.0) {
        e1 = [-e1[0], -e1[1]];
    }
    TensorDecomp {
        lambda1,
        lambda2,
        e1,
        e2: [-e1[1], e1[0]],
    }
}

/// Curvature constant `-16 (σ - 1) ln(0.1) / π²`.
pub fn compute_c(sigma: f64) -> Result<f64> {
    if !(sigma >= 1.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be >= 1, got {sigma}")));
    }
    Ok(-16.0 * (sigma - 1.0) * 0.1f64.ln() / (PI * PI))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteParams {
    pub sigma: f64,
    pub c: f64,
    pub max_angle: f64,
}

impl VoteParams {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(VoteParams {
            sigma,
            c: compute_c(sigma)?,
            max_angle: FRAC_PI_4,
        })
    }

    pub fn radius(&self) -> usize {
        (3.0 * self.sigma).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 1.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be >= 1, got {}", self.sigma)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("c must be finite and >= 0, got {}", self.c)));
        }
        if !(self.max_angle > 0.0 && self.max_angle <= FRAC_PI_4) {
            return Err(Error::invalid("max_angle must lie in (0, pi/4]"));
        }
        Ok(())
    }
}

/// Saliency decay for a receiver at distance `l` and angle `theta` from the
/// voter's tangent. Zero outside the aperture.
pub fn decay(l: f64, theta: f64, params: &VoteParams) -> f64 {
    // The tolerance keeps receivers exactly on the aperture edge (pixel
    // diagonals) from being decided by rounding.
    if theta.abs() > params.max_angle + 1e-9 {
        return 0.0;
    }
    let sin = theta.sin();
    let (s, kappa) = if theta == 0.0 { (l, 0.0) } else { (l * theta / sin, 2.0 * sin / l) };
    (-(s * s + params.c * kappa * kappa) / (params.sigma * params.sigma)).exp()
}

/// Stick vote from a voter with curve normal `normal` to a receiver. The
/// result is aligned with the normal of the osculating circle at the receiver.
pub fn cast_stick_vote(voter: [f64; 2], normal: [f64; 2], receiver: [f64; 2], params: &VoteParams) -> Tensor2 {
    let v = [receiver[0] - voter[0], receiver[1] - voter[1]];
    let l = v[0].hypot(v[1]);
    if l == 0.0 {
        return Tensor2::ZERO;
    }
    let nn = normal[0].hypot(normal[1]);
    let n = [normal[0] / nn, normal[1] / nn];
    let t = [-n[1], n[0]];
    let mut along = v[0] * t[0] + v[1] * t[1];
    let mut across = v[0] * n[0] + v[1] * n[1];
    if along < 0.0 {
        // The field is symmetric under a half turn about the voter.
        along = -along;
        across = -across;
    }
    let theta = across.atan2(along);
    let w = decay(l, theta, params);
    if w == 0.0 {
        return Tensor2::ZERO;
    }
    let (s2, c2) = (2.0 * theta).sin_cos();
    let dir = [-s2 * t[0] + c2 * n[0], -s2 * t[1] + c2 * n[1]];
    Tensor2::outer(dir, w)
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    dr: i32,
    dc: i32,
    t: Tensor2,
}

/// Precomputed vote fields for one `VoteParams`.
#[derive(Debug, Clone)]
pub struct VoteStencils {
    radius: usize,
    /// Stick fields indexed by quantized normal angle in `[0, pi)`.
    sticks: Vec<Vec<Tap>>,
    ball: Vec<Tap>,
}

impl VoteStencils {
    pub fn new(params: &VoteParams) -> Result<Self> {
        params.validate()?;
        let radius = params.radius();
        // Angular step of about 1/radius keeps the far edge within half a pixel.
        let bins = 2 * ((PI * radius as f64) / 2.0).ceil().max(2.0) as usize;
        let offsets: Vec<(i32, i32)> = {
            let r = radius as i32;
            let r2 = (radius * radius) as i32;
            (-r..=r)
                .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
                .filter(|&(dr, dc)| (dr, dc) != (0, 0) && dr * dr + dc * dc <= r2)
                .collect()
        };
        let normal = |b: usize| {
            let a = b as f64 * PI / bins as f64;
            [a.cos(), a.sin()]
        };
        let mut sticks = Vec::with_capacity(bins);
        let mut ball_acc = vec![Tensor2::ZERO; offsets.len()];
        for b in 0..bins {
            let n = normal(b);
            let mut taps = Vec::new();
            for (k, &(dr, dc)) in offsets.iter().enumerate() {
                let t = cast_stick_vote([0.0, 0.0], n, [dc as f64, dr as f64], params);
                if t != Tensor2::ZERO {
                    ball_acc[k].add_scaled(&t, 1.0);
                    taps.push(Tap { dr, dc, t });
                }
            }
            sticks.push(taps);
        }
        let scale = 2.0 / bins as f64;
        let ball = offsets
            .iter()
            .zip(&ball_acc)
            .filter(|(_, t)| **t != Tensor2::ZERO)
            .map(|(&(dr, dc), t)| Tap {
                dr,
                dc,
                t: Tensor2 { sxx: t.sxx * scale, sxy: t.sxy * scale, syy: t.syy * scale },
            })
            .collect();
        Ok(VoteStencils { radius, sticks, ball })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn orientation_bins(&self) -> usize {
        self.sticks.len()
    }

    fn stick_for(&self, normal: [f64; 2]) -> &[Tap] {
        let bins = self.sticks.len();
        let a = normal[1].atan2(normal[0]).rem_euclid(PI);
        let b = (a / PI * bins as f64).round() as usize % bins;
        &self.sticks[b]
    }

    /// Ball vote received at offset `(dr, dc)` from a unit ball voter.
    pub fn ball_at(&self, dr: i32, dc: i32) -> Tensor2 {
        self.ball
            .iter()
            .find(|t| t.dr == dr && t.dc == dc)
            .map(|t| t.t)
            .unwrap_or(Tensor2::ZERO)
    }
}

pub type TensorField = Grid<Tensor2>;

fn splat(acc: &mut [Tensor2], w: usize, h: usize, (r, c): (usize, usize), taps: &[Tap], weight: f64, radius: usize) {
    if weight == 0.0 {
        return;
    }
    let inside = r >= radius && c >= radius && r + radius < h && c + radius < w;
    if inside {
        let base = (r * w + c) as isize;
        for tap in taps {
            let idx = base + tap.dr as isize * w as isize + tap.dc as isize;
            acc[idx as usize].add_scaled(&tap.t, weight);
        }
    } else {
        for tap in taps {
            let rr = r as isize + tap.dr as isize;
            let cc = c as isize + tap.dc as isize;
            if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                acc[rr as usize * w + cc as usize].add_scaled(&tap.t, weight);
            }
        }
    }
}

/// Token-to-token ball votes. Returns one tensor per token in raster order.
pub fn sparse_vote(mask: &BinaryMask, stencils: &VoteStencils) -> Vec<Tensor2> {
    let (w, h) = mask.dims();
    let bits = mask.as_slice();
    let tokens: Vec<(usize, usize)> = mask.pixels().collect();
    tokens
        .iter()
        .map(|&(r, c)| {
            let mut acc = Tensor2::ZERO;
            for tap in &stencils.ball {
                // The ball field is point-symmetric, so the vote from r - d equals that from r + d.
                let rr = r as isize + tap.dr as isize;
                let cc = c as isize + tap.dc as isize;
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && bits[rr as usize * w + cc as usize] {
                    acc.add_scaled(&tap.t, 1.0);
                }
            }
            acc
        })
        .collect()
}

/// Dense pass. Each token casts a stick vote along its estimated normal with
/// weight `(λ1 − λ2)/λ1`. Tokens without orientation evidence cast a unit
/// ball vote instead.
pub fn dense_vote(mask: &BinaryMask, token_tensors: &[Tensor2], stencils: &VoteStencils) -> TensorField {
    let (w, h) = mask.dims();
    let mut acc = vec![Tensor2::ZERO; w * h];
    for (p, t) in mask.pixels().zip(token_tensors) {
        let d = decompose(t);
        if d.stick_saliency() < 1e-6 {
            splat(&mut acc, w, h, p, &stencils.ball, 1.0, stencils.radius);
        } else {
            let weight = d.stick_saliency() / d.lambda1;
            splat(&mut acc, w, h, p, stencils.stick_for(d.e1), weight, stencils.radius);
        }
    }
    Grid::from_vec(w, h, acc).expect("accumulator matches dims")
}

/// Sparse pass followed by the dense pass. An empty mask gives a zero field.
pub fn sparse_then_dense_vote(mask: &BinaryMask, params: &VoteParams) -> Result<TensorField> {
    let stencils = VoteStencils::new(params)?;
    let sparse = sparse_vote(mask, &stencils);
    Ok(dense_vote(mask, &sparse, &stencils))
}

/// Per-pixel decomposition products.
#[derive(Debug, Clone, PartialEq)]
pub struct Saliency {
    pub stick: ScalarField,
    pub ball: ScalarField,
    /// `e1` per pixel, the curve normal.
    pub normal: Grid<[f64; 2]>,
}

pub fn saliency(field: &TensorField) -> Saliency {
    let decs = field.map(decompose);
    Saliency {
        stick: decs.map(|d| d.stick_saliency()),
        ball: decs.map(|d| d.ball_saliency()),
        normal: decs.map(|d| d.e1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    /// Fraction of the field's maximum stick saliency.
    pub stick_floor: f64,
    /// Fraction of the field's maximum ball saliency.
    pub ball_floor: f64,
    pub ball_ratio: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            stick_floor: 0.05,
            ball_floor: 0.2,
            ball_ratio: 0.6,
        }
    }
}

/// Curve and junction masks. With `support`, only those pixels are classified.
pub fn classify_points(
    sal: &Saliency,
    support: Option<&BinaryMask>,
    params: &ClassifyParams,
) -> Result<(BinaryMask, BinaryMask)> {
    if let Some(s) = support {
        sal.stick.check_same_dims(s)?;
    }
    let (w, h) = sal.stick.dims();
    let stick_floor = params.stick_floor * sal.stick.max_value();
    let ball_floor = params.ball_floor * sal.ball.max_value();
    let mut curve = BinaryMask::filled(w, h, false);
    let mut junction = BinaryMask::filled(w, h, false);
    for i in 0..w * h {
        if support.is_some_and(|s| !s.as_slice()[i]) {
            continue;
        }
        let stick = sal.stick.as_slice()[i];
        let ball = sal.ball.as_slice()[i];
        let l1 = stick + ball;
        if l1 <= 0.0 {
            continue;
        }
        if ball > 0.0 && ball >= ball_floor && ball / l1 >= params.ball_ratio {
            junction.as_mut_slice()[i] = true;
        } else if stick > ball && stick >= stick_floor && stick > 0.0 {
            curve.as_mut_slice()[i] = true;
        }
    }
    Ok((curve, junction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_mask(w: usize, h: usize, row: usize, c0: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |r, c| r == row && (c0..=c1).contains(&c))
    }

    fn angle_between_axes(a: [f64; 2], b: [f64; 2]) -> f64 {
        (a[0] * b[0] + a[1] * b[1]).abs().min(1.0).acos().to_degrees()
    }

    #[test]
    fn c_values() {
        assert_eq!(compute_c(1.0).unwrap(), 0.0);
        let c2 = 16.0 * 10f64.ln() / (PI * PI);
        assert!((compute_c(2.0).unwrap() - c2).abs() < 1e-12);
        assert!((c2 - 3.7325).abs() < 1e-3);
        assert!((compute_c(11.0).unwrap() - 10.0 * c2).abs() < 1e-12);
        assert!(compute_c(0.5).is_err());
    }

    #[test]
    fn decay_examples() {
        let p = VoteParams::new(5.0).unwrap();
        assert!((decay(5.0, 0.0, &p) - (-1f64).exp()).abs() < 1e-12);
        assert!((decay(1e-9, 0.0, &p) - 1.0).abs() < 1e-12);
        // Independent evaluation at theta = pi/6, l = sigma = 5.
        let theta = PI / 6.0;
        let s = 5.0 * theta / 0.5;
        let kappa = 2.0 * 0.5 / 5.0;
        let expected = (-(s * s + p.c * kappa * kappa) / 25.0).exp();
        assert!((decay(5.0, theta, &p) - expected).abs() < 1e-12);
        assert_eq!(decay(5.0, PI / 3.0, &p), 0.0);
    }

    #[test]
    fn decay_monotone_in_angle() {
        let p = VoteParams::new(5.0).unwrap();
        for i in 1..=10 {
            let l = i as f64 * 1.5;
            let mut last = f64::MAX;
            for j in 0..=10 {
                let v = decay(l, j as f64 * FRAC_PI_4 / 10.0, &p);
                assert!(v <= last);
                last = v;
            }
        }
    }

    #[test]
    fn decay_in_distance_turns_over_at_analytic_minimum() {
        // s² + cκ² = A l² + B / l², minimized at l* = (B/A)^(1/4).
        let p = VoteParams::new(5.0).unwrap();
        let theta = PI / 8.0;
        let a = (theta / theta.sin()).powi(2);
        let b = 4.0 * p.c * theta.sin().powi(2);
        let l_star = (b / a).powf(0.25);
        assert!(decay(0.5 * l_star, theta, &p) < decay(l_star, theta, &p));
        let mut last = f64::MAX;
        for k in 0..50 {
            let v = decay(l_star + k as f64 * 0.3, theta, &p);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn straight_continuation_vote() {
        let p = VoteParams::new(5.0).unwrap();
        let t = cast_stick_vote([0.0, 0.0], [0.0, 1.0], [5.0, 0.0], &p);
        assert!((t.syy - (-1f64).exp()).abs() < 1e-12);
        assert!(t.sxx.abs() < 1e-15 && t.sxy.abs() < 1e-15);
        let t = cast_stick_vote([0.0, 0.0], [0.0, 1.0], [-5.0, 0.0], &p);
        assert!((t.syy - (-1f64).exp()).abs() < 1e-12);
        let sixty = [5.0 * (PI / 3.0).cos(), 5.0 * (PI / 3.0).sin()];
        assert_eq!(cast_stick_vote([0.0, 0.0], [0.0, 1.0], sixty, &p), Tensor2::ZERO);
    }

    #[test]
    fn vote_field_mirror_symmetry() {
        let p = VoteParams::new(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (x, y) = (rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0));
            let a = cast_stick_vote([0.0, 0.0], [0.0, 1.0], [x, y], &p);
            let b = cast_stick_vote([0.0, 0.0], [0.0, 1.0], [x, -y], &p);
            assert!((a.sxx - b.sxx).abs() < 1e-12);
            assert!((a.syy - b.syy).abs() < 1e-12);
            assert!((a.sxy + b.sxy).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_examples() {
        let d = decompose(&Tensor2 { sxx: 1.0, sxy: 0.0, syy: 0.0 });
        assert_eq!((d.lambda1, d.lambda2, d.e1), (1.0, 0.0, [1.0, 0.0]));
        assert_eq!((d.stick_saliency(), d.ball_saliency()), (1.0, 0.0));
        let d = decompose(&Tensor2::identity());
        assert_eq!((d.lambda1, d.lambda2), (1.0, 1.0));
        assert_eq!(d.stick_saliency(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let t = Tensor2::outer(a, 1.0) + Tensor2::outer(b, 1.0);
            let d = decompose(&t);
            let r = d.reconstruct();
            assert!((r.sxx - t.sxx).abs() <= 1e-12 && (r.sxy - t.sxy).abs() <= 1e-12 && (r.syy - t.syy).abs() <= 1e-12);
            assert!((d.lambda1 + d.lambda2 - t.trace()).abs() <= 1e-12);
            assert!((d.e1[0] * d.e2[0] + d.e1[1] * d.e2[1]).abs() < 1e-15);
            assert!(d.lambda1 >= d.lambda2 && d.lambda2 >= 0.0);
        }
    }

    #[test]
    fn stencil_matches_direct_votes() {
        let p = VoteParams::new(3.0).unwrap();
        let st = VoteStencils::new(&p).unwrap();
        let bins = st.orientation_bins();
        assert_eq!(bins % 2, 0);
        let n = [1.0, 0.0];
        let taps = st.stick_for(n);
        for tap in taps {
            let direct = cast_stick_vote([0.0, 0.0], n, [tap.dc as f64, tap.dr as f64], &p);
            assert_eq!(direct, tap.t);
        }
        // Ball field is isotropic along the axes and point symmetric.
        let a = st.ball_at(0, 4);
        let b = st.ball_at(4, 0);
        assert!((a.sxx - b.syy).abs() < 1e-12 && (a.syy - b.sxx).abs() < 1e-12);
        assert_eq!(st.ball_at(2, 3), st.ball_at(-2, -3));
    }

    #[test]
    fn single_token_gets_ball_field() {
        let p = VoteParams::new(2.0).unwrap();
        let st = VoteStencils::new(&p).unwrap();
        let mask = BinaryMask::from_pixels(21, 21, &[(10, 10)]);
        let field = dense_vote(&mask, &sparse_vote(&mask, &st), &st);
        for r in 0..21 {
            for c in 0..21 {
                let expected = st.ball_at(r as i32 - 10, c as i32 - 10);
                assert_eq!(*field.get(r, c), expected);
            }
        }
        assert_eq!(*field.get(10, 10), Tensor2::ZERO);
    }

    #[test]
    fn empty_mask_gives_zero_field() {
        let f = sparse_then_dense_vote(&BinaryMask::filled(8, 8, false), &VoteParams::new(2.0).unwrap()).unwrap();
        assert!(f.as_slice().iter().all(|t| *t == Tensor2::ZERO));
    }

    #[test]
    fn straight_line_is_curve_with_vertical_normal() {
        let p = VoteParams::new(5.0).unwrap();
        let mask = line_mask(61, 41, 20, 20, 40);
        let field = sparse_then_dense_vote(&mask, &p).unwrap();
        let sal = saliency(&field);
        let (curve, junction) = classify_points(&sal, Some(&mask), &ClassifyParams::default()).unwrap();
        for c in 22..=38 {
            assert!(*curve.get(20, c), "col {c}");
            assert!(!*junction.get(20, c));
            assert!(angle_between_axes(*sal.normal.get(20, c), [0.0, 1.0]) < 2.0);
            assert!(*sal.stick.get(20, c) > 5.0 * *sal.ball.get(20, c));
        }
    }

    #[test]
    fn crossing_is_junction() {
        let p = VoteParams::new(5.0).unwrap();
        let mask = BinaryMask::from_fn(61, 61, |r, c| (r == 30 && (20..=40).contains(&c)) || (c == 30 && (20..=40).contains(&r)));
        let field = sparse_then_dense_vote(&mask, &p).unwrap();
        let sal = saliency(&field);
        let (_, junction) = classify_points(&sal, Some(&mask), &ClassifyParams::default()).unwrap();
        assert!(*junction.get(30, 30));
        let d = decompose(field.get(30, 30));
        assert!(d.lambda2 / d.lambda1 > 0.9);
        let (_, far) = classify_points(&sal, Some(&mask), &ClassifyParams::default()).unwrap();
        assert!(!*far.get(30, 21));
    }

    #[test]
    fn isolated_pixel_is_outlier() {
        let p = VoteParams::new(3.0).unwrap();
        let mut mask = line_mask(80, 30, 10, 5, 30);
        mask.set(25, 75, true);
        let sal = saliency(&sparse_then_dense_vote(&mask, &p).unwrap());
        let (curve, junction) = classify_points(&sal, Some(&mask), &ClassifyParams::default()).unwrap();
        assert!(!*curve.get(25, 75) && !*junction.get(25, 75));
    }

    #[test]
    fn quarter_turn_equivariance() {
        let p = VoteParams::new(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (40, 30);
        let mask = BinaryMask::from_fn(w, h, |r, c| {
            (r as isize - 15 - (c as isize - 20) / 3).abs() <= 1 || rng.random_bool(0.01)
        });
        // (r, c) -> (c, h - 1 - r): a rotation of the x-right, y-down frame.
        let rot = BinaryMask::from_fn(h, w, |r, c| *mask.get(h - 1 - c, r));
        let a = saliency(&sparse_then_dense_vote(&mask, &p).unwrap());
        let b = saliency(&sparse_then_dense_vote(&rot, &p).unwrap());
        for r in 0..h {
            for c in 0..w {
                let (rr, cc) = (c, h - 1 - r);
                assert!((a.stick.get(r, c) - b.stick.get(rr, cc)).abs() < 1e-6);
                assert!((a.ball.get(r, c) - b.ball.get(rr, cc)).abs() < 1e-6);
                if *a.stick.get(r, c) > 1e-3 {
                    let n = *a.normal.get(r, c);
                    // The normal (x, y) maps to (-y, x).
                    assert!(angle_between_axes([-n[1], n[0]], *b.normal.get(rr, cc)) < 1e-3);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn accumulation_order_irrelevant(seed in 0u64..500) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = VoteParams::new(2.0).unwrap();
                let st = VoteStencils::new(&p).unwrap();
                let mask = BinaryMask::from_fn(16, 12, |_, _| rng.random_bool(0.15));
                let sparse = sparse_vote(&mask, &st);
                let fwd = dense_vote(&mask, &sparse, &st);
                // Cast token votes in reverse order.
                let (w, h) = mask.dims();
                let mut acc = vec![Tensor2::ZERO; w * h];
                let toks: Vec<_> = mask.pixels().zip(&sparse).collect();
                for (p0, t) in toks.into_iter().rev() {
                    let single = BinaryMask::from_pixels(w, h, &[p0]);
                    let f = dense_vote(&single, &[*t], &st);
                    for (a, b) in acc.iter_mut().zip(f.as_slice()) {
                        a.add_scaled(b, 1.0);
                    }
                }
                for (a, b) in acc.iter().zip(fwd.as_slice()) {
                    prop_assert!((a.sxx - b.sxx).abs() < 1e-9 && (a.sxy - b.sxy).abs() < 1e-9 && (a.syy - b.syy).abs() < 1e-9);
                }
            }

            #[test]
            fn trace_equals_eigen_sum(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
                let t = Tensor2::outer([a, b], 1.0) + Tensor2::outer([c, d], 0.5);
                let dec = decompose(&t);
                prop_assert!((dec.lambda1 + dec.lambda2 - t.trace()).abs() <= 1e-12 * t.trace().max(1.0));
            }

            #[test]
            fn decay_decreasing_in_angle(l in 0.5f64..30.0, t1 in 0.0f64..FRAC_PI_4, t2 in 0.0f64..FRAC_PI_4, sigma in 1.0f64..20.0) {
                let p = VoteParams::new(sigma).unwrap();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(decay(l, hi, &p) <= decay(l, lo, &p) + 1e-15);
                prop_assert!(decay(l, -hi, &p) == decay(l, hi, &p));
            }
        }
    }
}

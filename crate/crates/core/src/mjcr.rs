//! Distance-biased collaborative representation classifier.
//!
//! A test descriptor is reconstructed from all training descriptors with a
//! Tikhonov penalty whose diagonal is the distance from the test descriptor to
//! each training sample. The class whose coefficients reconstruct it better
//! gets the larger likelihood. Per-object likelihoods are broadcast to pixels
//! and fused across scales.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::ScaleFeatures;
use crate::raster::{BinaryMask, Grid, Pixel, ScalarField};
use crate::superpixel::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoadClass {
    Road,
    NonRoad,
}

impl RoadClass {
    pub fn name(self) -> &'static str {
        match self {
            RoadClass::Road => "road",
            RoadClass::NonRoad => "non-road",
        }
    }
}

/// Labelled descriptors, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: DMatrix<f64>,
    labels: Vec<RoadClass>,
}

impl TrainingSet {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<RoadClass>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if samples.len() < 2 {
            return Err(Error::invalid("training set needs at least two samples"));
        }
        for class in [RoadClass::Road, RoadClass::NonRoad] {
            if !labels.contains(&class) {
                return Err(Error::InsufficientSamples {
                    class: class.name(),
                    needed: 1,
                    found: 0,
                });
            }
        }
        let d = samples[0].len();
        if d == 0 || samples.iter().any(|s| s.len() != d) {
            return Err(Error::invalid("training samples must share a nonzero dimension"));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training samples must be finite"));
        }
        let samples = DMatrix::from_fn(d, samples.len(), |i, j| samples[j][i]);
        Ok(TrainingSet { samples, labels })
    }

    /// `d x n` sample matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> &[RoadClass] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn count(&self, class: RoadClass) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrcParams {
    pub lambda: f64,
}

impl Default for CrcParams {
    fn default() -> Self {
        CrcParams { lambda: 10.0 }
    }
}

/// Distances from the test descriptor to every training column.
pub fn tikhonov_diagonal(samples: &DMatrix<f64>, test: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        samples.ncols(),
        samples.column_iter().map(|col| (test - col).norm()),
    )
}

/// The `n x n` diagonal Tikhonov matrix.
pub fn build_tikhonov(samples: &DMatrix<f64>, test: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&tikhonov_diagonal(samples, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrcSolution {
    pub alpha: DVector<f64>,
    /// Set when the system was singular and a `1e-10 I` ridge was added.
    pub ridge_fallback: bool,
}

fn solve_spd(mut a: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return (x, false);
        }
    }
    for i in 0..a.nrows() {
        a[(i, i)] += 1e-10;
    }
    if let Some(ch) = a.clone().cholesky() {
        return (ch.solve(rhs), true);
    }
    let x = a
        .lu()
        .solve(rhs)
        .unwrap_or_else(|| DVector::zeros(rhs.len()));
    (x, true)
}

/// Closed-form coefficients `(XᵀX + λΓᵀΓ)⁻¹ Xᵀ x` by dense factorization.
pub fn crc_solve(samples: &DMatrix<f64>, test: &DVector<f64>, params: &CrcParams) -> CrcSolution {
    let gamma = tikhonov_diagonal(samples, test);
    let mut a = samples.transpose() * samples;
    for i in 0..a.nrows() {
        a[(i, i)] += params.lambda * gamma[i] * gamma[i];
    }
    let rhs = samples.transpose() * test;
    let (alpha, ridge_fallback) = solve_spd(a, &rhs);
    CrcSolution {
        alpha,
        ridge_fallback,
    }
}

/// Squared reconstruction error of each class using only its own columns.
/// Returns `(road, non_road)`.
pub fn class_residuals(
    samples: &DMatrix<f64>,
    alpha: &DVector<f64>,
    test: &DVector<f64>,
    labels: &[RoadClass],
) -> (f64, f64) {
    let d = samples.nrows();
    let mut road = DVector::<f64>::zeros(d);
    let mut other = DVector::<f64>::zeros(d);
    for (j, col) in samples.column_iter().enumerate() {
        match labels[j] {
            RoadClass::Road => road.axpy(alpha[j], &col, 1.0),
            RoadClass::NonRoad => other.axpy(alpha[j], &col, 1.0),
        }
    }
    ((road - test).norm_squared(), (other - test).norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub road: f64,
    /// Both residuals were zero; `road` is 0.5.
    pub degenerate: bool,
}

impl Likelihood {
    pub fn non_road(&self) -> f64 {
        1.0 - self.road
    }
}

/// `R_nonroad / (R_road + R_nonroad)`.
pub fn road_likelihood(r_road: f64, r_nonroad: f64) -> Likelihood {
    let total = r_road + r_nonroad;
    if !(total > 0.0) {
        return Likelihood {
            road: 0.5,
            degenerate: true,
        };
    }
    Likelihood {
        road: (r_nonroad / total).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Trained classifier with z-score standardization from the training set.
#[derive(Debug, Clone)]
pub struct CrcClassifier {
    mean: DVector<f64>,
    scale: DVector<f64>,
    samples: DMatrix<f64>,
    labels: Vec<RoadClass>,
    params: CrcParams,
}

impl CrcClassifier {
    pub fn fit(training: &TrainingSet, params: CrcParams) -> Result<Self> {
        if !(params.lambda >= 0.0 && params.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", params.lambda)));
        }
        let x = training.matrix();
        let n = x.ncols() as f64;
        let mean = x.column_mean();
        let mut scale = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            let var = x.row(i).iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / n;
            scale[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let samples = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[i]) / scale[i]);
        Ok(CrcClassifier {
            mean,
            scale,
            samples,
            labels: training.labels().to_vec(),
            params,
        })
    }

    pub fn standardize(&self, feature: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.mean.len(), |i, _| (feature[i] - self.mean[i]) / self.scale[i])
    }

    /// Standardized training matrix.
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// Coefficients for a standardized test vector.
    ///
    /// With every penalty weight positive the `n x n` system is solved through
    /// the `d x d` Woodbury form; the normal-equation residual is checked and
    /// the dense solve used if it is not tight.
    pub fn coefficients(&self, test: &DVector<f64>) -> DVector<f64> {
        let x = &self.samples;
        let (d, n) = x.shape();
        let gamma = tikhonov_diagonal(x, test);
        let weights: Vec<f64> = gamma.iter().map(|g| self.params.lambda * g * g).collect();
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 && weights.iter().all(|&w| w > max_w * 1e-8) {
            let mut m = DMatrix::<f64>::identity(d, d);
            for (j, col) in x.column_iter().enumerate() {
                m.ger(1.0 / weights[j], &col, &col, 1.0);
            }
            if let Some(ch) = m.cholesky() {
                let y = ch.solve(test);
                let alpha = DVector::from_fn(n, |j, _| x.column(j).dot(&y) / weights[j]);
                let xtx_test = x.transpose() * test;
                let recon = x * &alpha - test;
                let mut residual = x.transpose() * recon;
                for j in 0..n {
                    residual[j] += weights[j] * alpha[j];
                }
                if residual.norm() <= 1e-8 * xtx_test.norm().max(f64::MIN_POSITIVE) {
                    return alpha;
                }
            }
        }
        crc_solve(x, test, &self.params).alpha
    }

    /// Road likelihood of a raw (unstandardized) descriptor.
    pub fn likelihood(&self, feature: &[f64]) -> Likelihood {
        let test = self.standardize(feature);
        let alpha = self.coefficients(&test);
        let (r_road, r_other) = class_residuals(&self.samples, &alpha, &test, &self.labels);
        road_likelihood(r_road, r_other)
    }
}

/// Rule for combining per-scale likelihoods at a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    #[default]
    Max,
    Mean,
    Median,
    Min,
}

impl std::str::FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Fusion::Max),
            "mean" => Ok(Fusion::Mean),
            "median" => Ok(Fusion::Median),
            "min" => Ok(Fusion::Min),
            other => Err(Error::Config(format!("unknown fusion rule '{other}'"))),
        }
    }
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Max => "max",
            Fusion::Mean => "mean",
            Fusion::Median => "median",
            Fusion::Min => "min",
        }
    }

    pub fn combine(self, values: &mut [f64]) -> f64 {
        match self {
            Fusion::Max => values.iter().copied().fold(f64::MIN, f64::max),
            Fusion::Min => values.iter().copied().fold(f64::MAX, f64::min),
            Fusion::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Fusion::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        }
    }
}

/// Gives every pixel its object's value.
pub fn broadcast(labels: &LabelMap, per_object: &[f64]) -> ScalarField {
    labels.grid().map(|&l| per_object[l as usize])
}

/// Per-object road likelihoods for one scale.
pub fn object_likelihoods(classifier: &CrcClassifier, features: &ScaleFeatures) -> Vec<f64> {
    features
        .ssc
        .iter()
        .map(|f| classifier.likelihood(f.as_slice()).road)
        .collect()
}

/// Fuses per-scale broadcast likelihoods pixel by pixel.
pub fn fuse_fields(fields: &[ScalarField], fusion: Fusion) -> Result<ScalarField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("at least one scale is required"))?;
    for f in fields {
        first.check_same_dims(f)?;
    }
    let mut buf = vec![0.0; fields.len()];
    let data = (0..first.len())
        .map(|i| {
            for (b, f) in buf.iter_mut().zip(fields) {
                *b = f.as_slice()[i];
            }
            fusion.combine(&mut buf)
        })
        .collect();
    Grid::from_vec(first.width(), first.height(), data)
}

/// Fused pixel likelihood from one classifier per scale.
pub fn likelihood_field(
    label_maps: &[LabelMap],
    features: &[ScaleFeatures],
    training: &[TrainingSet],
    params: CrcParams,
    fusion: Fusion,
) -> Result<ScalarField> {
    if label_maps.is_empty() {
        return Err(Error::invalid("at least one scale is required"));
    }
    if features.len() != label_maps.len() || training.len() != label_maps.len() {
        return Err(Error::invalid(format!(
            "scale count mismatch: {} label maps, {} feature sets, {} training sets",
            label_maps.len(),
            features.len(),
            training.len()
        )));
    }
    let fields = label_maps
        .iter()
        .zip(features)
        .zip(training)
        .map(|((lm, f), t)| {
            let clf = CrcClassifier::fit(t, params)?;
            Ok(broadcast(lm, &object_likelihoods(&clf, f)))
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_fields(&fields, fusion)
}

/// Fraction of each object's pixels that lie on the reference road mask.
pub fn road_fraction(labels: &LabelMap, reference: &BinaryMask) -> Result<Vec<f64>> {
    labels.grid().check_same_dims(reference)?;
    let mut road = vec![0usize; labels.count()];
    let mut total = vec![0usize; labels.count()];
    for (&l, &r) in labels.grid().as_slice().iter().zip(reference.as_slice()) {
        total[l as usize] += 1;
        if r {
            road[l as usize] += 1;
        }
    }
    Ok(road
        .iter()
        .zip(&total)
        .map(|(&r, &t)| r as f64 / t as f64)
        .collect())
}

/// Object ids chosen for training at one scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSelection {
    pub road: Vec<usize>,
    pub non_road: Vec<usize>,
}

/// Draws `count` objects per class among those at least `purity` pure.
pub fn select_training_objects(
    labels: &LabelMap,
    reference: &BinaryMask,
    count: usize,
    purity: f64,
    seed: u64,
) -> Result<TrainingSelection> {
    let frac = road_fraction(labels, reference)?;
    let road_ok: Vec<usize> = (0..frac.len()).filter(|&i| frac[i] >= purity).collect();
    let other_ok: Vec<usize> = (0..frac.len()).filter(|&i| 1.0 - frac[i] >= purity).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &[usize], class: RoadClass| -> Result<Vec<usize>> {
        if pool.len() < count {
            return Err(Error::InsufficientSamples {
                class: class.name(),
                needed: count,
                found: pool.len(),
            });
        }
        Ok(rand::seq::index::sample(&mut rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect())
    };
    let road = pick(&road_ok, RoadClass::Road)?;
    let non_road = pick(&other_ok, RoadClass::NonRoad)?;
    Ok(TrainingSelection { road, non_road })
}

/// Training set from selected objects' contextual descriptors.
pub fn training_from_selection(features: &ScaleFeatures, sel: &TrainingSelection) -> Result<TrainingSet> {
    let mut samples = Vec::with_capacity(sel.road.len() + sel.non_road.len());
    let mut labels = Vec::with_capacity(samples.capacity());
    for &i in &sel.road {
        samples.push(features.ssc[i].0.to_vec());
        labels.push(RoadClass::Road);
    }
    for &i in &sel.non_road {
        samples.push(features.ssc[i].0.to_vec());
        labels.push(RoadClass::NonRoad);
    }
    TrainingSet::new(samples, labels)
}

/// Samples a per-scale training set from the reference mask.
pub fn sample_training(
    labels: &LabelMap,
    reference: &BinaryMask,
    features: &ScaleFeatures,
    count_per_class: usize,
    purity: f64,
    seed: u64,
) -> Result<TrainingSet> {
    let sel = select_training_objects(labels, reference, count_per_class, purity, seed)?;
    training_from_selection(features, &sel)
}

/// Object pixel closest to the object's centroid.
pub fn representative_pixel(pixels: &[Pixel]) -> Pixel {
    let n = pixels.len() as f64;
    let (sr, sc) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let (mr, mc) = (sr / n, sc / n);
    *pixels
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - mr).powi(2) + (a.1 as f64 - mc).powi(2);
            let db = (b.0 as f64 - mr).powi(2) + (b.1 as f64 - mc).powi(2);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("object has pixels")
}

/// Maps a selection made at one scale onto another scale through each
/// selected object's representative pixel.
pub fn transfer_selection(
    from: &LabelMap,
    sel: &TrainingSelection,
    to: &LabelMap,
) -> TrainingSelection {
    let segs = from.segments();
    let map = |ids: &[usize]| -> Vec<usize> {
        ids.iter()
            .map(|&i| {
                let (r, c) = representative_pixel(&segs[i]);
                to.label(r, c)
            })
            .collect()
    };
    TrainingSelection {
        road: map(&sel.road),
        non_road: map(&sel.non_road),
    }
}

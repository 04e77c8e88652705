//! Per-object spectral, structural and contextual descriptors.
//!
//! Every object gets a hybrid feature (mean RGB, shape index, aspect ratio).
//! The contextual descriptor stacks the object's hybrid feature with those of
//! its two most similar adjacent objects, giving 15 values per object.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::pixel_box_elongation;
use crate::raster::{Pixel, RasterImage};
use crate::superpixel::LabelMap;

pub const HF_DIM: usize = 5;
pub const SSC_DIM: usize = 3 * HF_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridFeature {
    /// Mean R, G, B.
    pub spectral: [f64; 3],
    pub shape_index: f64,
    pub aspect_ratio: f64,
}

impl HybridFeature {
    pub fn to_array(&self) -> [f64; HF_DIM] {
        [
            self.spectral[0],
            self.spectral[1],
            self.spectral[2],
            self.shape_index,
            self.aspect_ratio,
        ]
    }
}

/// Center hybrid feature followed by the first- and second-ranked neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SscFeature(pub [f64; SSC_DIM]);

impl SscFeature {
    pub fn stack(center: &HybridFeature, first: &HybridFeature, second: &HybridFeature) -> Self {
        let mut v = [0.0; SSC_DIM];
        v[..HF_DIM].copy_from_slice(&center.to_array());
        v[HF_DIM..2 * HF_DIM].copy_from_slice(&first.to_array());
        v[2 * HF_DIM..].copy_from_slice(&second.to_array());
        SscFeature(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Which part of the hybrid feature ranks neighbors by similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborMetric {
    /// All five hybrid-feature values.
    #[default]
    Hybrid,
    /// Mean color only.
    Spectral,
}

impl std::str::FromStr for NeighborMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hf" | "hybrid" => Ok(NeighborMetric::Hybrid),
            "sa" | "spectral" => Ok(NeighborMetric::Spectral),
            other => Err(Error::Config(format!("unknown neighbor metric '{other}'"))),
        }
    }
}

impl NeighborMetric {
    fn dims(self) -> usize {
        match self {
            NeighborMetric::Hybrid => HF_DIM,
            NeighborMetric::Spectral => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NeighborMetric::Hybrid => "hf",
            NeighborMetric::Spectral => "sa",
        }
    }
}

/// Per-channel mean color of the object pixels.
pub fn spectral_attribute(image: &RasterImage, pixels: &[Pixel]) -> Result<[f64; 3]> {
    if pixels.is_empty() {
        return Err(Error::invalid("spectral attribute of an empty object"));
    }
    let mut sum = [0u64; 3];
    for &(r, c) in pixels {
        image.check_point((r, c))?;
        let p = image.get(r, c);
        for k in 0..3 {
            sum[k] += p[k] as u64;
        }
    }
    let n = pixels.len() as f64;
    Ok([sum[0] as f64 / n, sum[1] as f64 / n, sum[2] as f64 / n])
}

/// Perimeter over four times the square root of the area.
pub fn shape_index(area: usize, perimeter: usize) -> f64 {
    perimeter as f64 / (4.0 * (area as f64).sqrt())
}

/// Long side over short side of the minimum-area oriented rectangle.
pub fn aspect_ratio(pixels: &[Pixel]) -> f64 {
    pixel_box_elongation(pixels)
}

/// Exposed edge count per object (edges to another object or the border).
pub fn object_perimeters(labels: &LabelMap) -> Vec<usize> {
    let mut per = vec![0usize; labels.count()];
    let (w, h) = (labels.width(), labels.height());
    for r in 0..h {
        for c in 0..w {
            let l = labels.label(r, c);
            if r == 0 || labels.label(r - 1, c) != l {
                per[l] += 1;
            }
            if r + 1 == h || labels.label(r + 1, c) != l {
                per[l] += 1;
            }
            if c == 0 || labels.label(r, c - 1) != l {
                per[l] += 1;
            }
            if c + 1 == w || labels.label(r, c + 1) != l {
                per[l] += 1;
            }
        }
    }
    per
}

/// Hybrid features of every object of one scale.
pub fn hybrid_features(image: &RasterImage, labels: &LabelMap) -> Result<Vec<HybridFeature>> {
    image.check_same_dims(labels.grid())?;
    let per = object_perimeters(labels);
    labels
        .segments()
        .iter()
        .zip(per)
        .map(|(px, p)| {
            Ok(HybridFeature {
                spectral: spectral_attribute(image, px)?,
                shape_index: shape_index(px.len(), p),
                aspect_ratio: aspect_ratio(px),
            })
        })
        .collect()
}

/// Mean and standard deviation per dimension; zero deviations become one.
fn zscore_stats(hfs: &[HybridFeature]) -> ([f64; HF_DIM], [f64; HF_DIM]) {
    let n = hfs.len().max(1) as f64;
    let mut mean = [0.0; HF_DIM];
    for hf in hfs {
        for (m, v) in mean.iter_mut().zip(hf.to_array()) {
            *m += v / n;
        }
    }
    let mut std = [0.0; HF_DIM];
    for hf in hfs {
        for (k, v) in hf.to_array().iter().enumerate() {
            std[k] += (v - mean[k]).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (mean, std)
}

/// Neighbors of `center` ordered by similarity, most similar first. Ties go
/// to the smaller object id.
pub fn rank_neighbors(
    normalized: &[[f64; HF_DIM]],
    neighbors: &[usize],
    center: usize,
    metric: NeighborMetric,
) -> Vec<usize> {
    let d = metric.dims();
    let mut scored: Vec<(f64, usize)> = neighbors
        .iter()
        .map(|&j| {
            let dist = (0..d)
                .map(|k| (normalized[center][k] - normalized[j][k]).powi(2))
                .sum::<f64>()
                .sqrt();
            (dist, j)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Contextual descriptors from precomputed hybrid features and adjacency.
///
/// Objects with a single neighbor repeat their own hybrid feature in the
/// third slot; isolated objects repeat it in both neighbor slots.
pub fn contextual_features(
    hfs: &[HybridFeature],
    adjacency: &[Vec<usize>],
    metric: NeighborMetric,
) -> Vec<SscFeature> {
    let (mean, std) = zscore_stats(hfs);
    let normalized: Vec<[f64; HF_DIM]> = hfs
        .iter()
        .map(|hf| {
            let a = hf.to_array();
            std::array::from_fn(|k| (a[k] - mean[k]) / std[k])
        })
        .collect();
    (0..hfs.len())
        .map(|i| {
            let ranked = rank_neighbors(&normalized, &adjacency[i], i, metric);
            let first = ranked.first().map_or(&hfs[i], |&j| &hfs[j]);
            let second = ranked.get(1).map_or(&hfs[i], |&j| &hfs[j]);
            SscFeature::stack(&hfs[i], first, second)
        })
        .collect()
}

/// All descriptors of one over-segmentation scale.
#[derive(Debug, Clone)]
pub struct ScaleFeatures {
    pub hybrid: Vec<HybridFeature>,
    pub ssc: Vec<SscFeature>,
}

pub fn scale_features(image: &RasterImage, labels: &LabelMap, metric: NeighborMetric) -> Result<ScaleFeatures> {
    let hybrid = hybrid_features(image, labels)?;
    let ssc = contextual_features(&hybrid, &labels.adjacency(), metric);
    Ok(ScaleFeatures { hybrid, ssc })
}

/// Contextual descriptor of a single object.
pub fn contextual_feature(
    image: &RasterImage,
    labels: &LabelMap,
    object_id: usize,
    metric: NeighborMetric,
) -> Result<SscFeature> {
    if object_id >= labels.count() {
        return Err(Error::invalid(format!(
            "object {object_id} not in label map of {} objects",
            labels.count()
        )));
    }
    Ok(scale_features(image, labels, metric)?.ssc[object_id])
}

/// CSV table: `object_id,scale,f0..f14`.
pub fn features_csv(scale: usize, feats: &[SscFeature]) -> String {
    let mut out = String::from("object_id,scale");
    for k in 0..SSC_DIM {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for (i, f) in feats.iter().enumerate() {
        let _ = write!(out, "{i},{scale}");
        for v in f.0 {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use rand::{Rng, SeedableRng};

    #[test]
    fn spectral_attribute_means() {
        let img = RasterImage::from_fn(2, 1, |_, c| if c == 0 { [0, 0, 0] } else { [255, 255, 255] });
        assert_eq!(spectral_attribute(&img, &[(0, 0), (0, 1)]).unwrap(), [127.5; 3]);
        let flat = RasterImage::filled(3, 3, [10, 20, 30]);
        assert_eq!(spectral_attribute(&flat, &[(0, 0), (2, 2)]).unwrap(), [10.0, 20.0, 30.0]);
        assert!(spectral_attribute(&flat, &[]).is_err());
    }

    #[test]
    fn spectral_attribute_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = RasterImage::from_fn(6, 6, |_, _| [rng.random(), rng.random(), rng.random()]);
        let px = [(0, 1), (2, 3), (5, 5), (4, 0), (1, 1)];
        let got = spectral_attribute(&img, &px).unwrap();
        for k in 0..3 {
            let s: f64 = px.iter().map(|&(r, c)| img.get(r, c)[k] as f64).sum();
            assert!((got[k] - s / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_index_values() {
        for a in [1usize, 2, 5, 17] {
            assert!((shape_index(a * a, 4 * a) - 1.0).abs() < 1e-12);
        }
        assert!((shape_index(25, 52) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn aspect_ratio_values() {
        let ribbon: Vec<Pixel> = (0..25).map(|c| (0, c)).collect();
        assert!((aspect_ratio(&ribbon) - 25.0).abs() < 1e-9);
        let square: Vec<Pixel> = (0..7).flat_map(|r| (0..7).map(move |c| (r, c))).collect();
        assert!((aspect_ratio(&square) - 1.0).abs() < 1e-9);
        let rotated: Vec<Pixel> = ribbon.iter().map(|&(r, c)| (c, r)).collect();
        assert!((aspect_ratio(&rotated) - 25.0).abs() < 1e-9);
    }

    /// Label map of vertical stripes with given widths on an `h`-row grid.
    fn stripes(widths: &[usize], h: usize) -> LabelMap {
        let w: usize = widths.iter().sum();
        let mut bounds = Vec::new();
        let mut acc = 0;
        for &x in widths {
            acc += x;
            bounds.push(acc);
        }
        let g = Grid::from_fn(w, h, |_, c| bounds.iter().position(|&b| c < b).unwrap() as u32);
        LabelMap::from_grid(g).unwrap()
    }

    #[test]
    fn padding_for_single_neighbor() {
        let lm = stripes(&[2, 3], 4);
        let img = RasterImage::from_fn(5, 4, |_, c| if c < 2 { [10, 10, 10] } else { [200, 0, 0] });
        let f = scale_features(&img, &lm, NeighborMetric::Hybrid).unwrap();
        let (c, n) = (f.hybrid[0], f.hybrid[1]);
        assert_eq!(f.ssc[0], SscFeature::stack(&c, &n, &c));
        assert_eq!(f.ssc.iter().map(|s| s.0.len()).max(), Some(15));
    }

    #[test]
    fn two_neighbors_in_similarity_order() {
        // Middle stripe 1 has neighbors 0 and 2; stripe 2 matches its color.
        let lm = stripes(&[3, 3, 3], 3);
        let img = RasterImage::from_fn(9, 3, |_, c| match c / 3 {
            0 => [0, 0, 0],
            1 => [120, 120, 120],
            _ => [130, 130, 130],
        });
        let f = scale_features(&img, &lm, NeighborMetric::Spectral).unwrap();
        assert_eq!(f.ssc[1], SscFeature::stack(&f.hybrid[1], &f.hybrid[2], &f.hybrid[0]));
    }

    #[test]
    fn ranking_matches_brute_force() {
        let normalized = vec![[0.0; HF_DIM], [0.9, 0.0, 0.0, 0.0, 0.0], [0.1, 0.0, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0, 0.0]];
        let ranked = rank_neighbors(&normalized, &[1, 2, 3], 0, NeighborMetric::Hybrid);
        // Brute force: distances 0.9, 0.1, 0.5.
        let mut brute: Vec<(f64, usize)> = (1..4)
            .map(|j| (normalized[j].iter().map(|v| v * v).sum::<f64>().sqrt(), j))
            .collect();
        brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_eq!(ranked, brute.iter().map(|b| b.1).collect::<Vec<_>>());
        assert_eq!(&ranked[..2], &[2, 3]);
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let normalized = vec![[0.0; HF_DIM], [1.0, 0.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0, 0.0]];
        assert_eq!(rank_neighbors(&normalized, &[2, 1], 0, NeighborMetric::Hybrid), vec![1, 2]);
    }

    #[test]
    fn relabeling_permutes_features() {
        let lm = stripes(&[2, 3, 4, 2], 5);
        let img = RasterImage::from_fn(11, 5, |r, c| [(c * 20) as u8, (r * 30) as u8, 77]);
        let base = scale_features(&img, &lm, NeighborMetric::Hybrid).unwrap();
        // Reverse ids: object i becomes 3 - i.
        let rev = LabelMap::from_grid(lm.grid().map(|&l| 3 - l)).unwrap();
        let perm = scale_features(&img, &rev, NeighborMetric::Hybrid).unwrap();
        for i in 0..4 {
            assert_eq!(base.ssc[i], perm.ssc[3 - i]);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = vec![SscFeature([1.0; SSC_DIM]); 2];
        let csv = features_csv(8000, &f);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("object_id,scale,f0"));
        assert_eq!(lines[1].split(',').count(), 17);
    }
}

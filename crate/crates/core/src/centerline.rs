//! Thin centerlines from stick saliency, and junction completion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{connected_components, line_pixels, BinaryMask, Connectivity, Grid, Pixel, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsParams {
    /// Sampling window along the normal, in pixels.
    pub window: f64,
    /// Fraction of the maximum stick saliency below which pixels are dropped.
    pub saliency_floor: f64,
}

impl NmsParams {
    /// Window `2σ` and floor `0.1`.
    pub fn for_sigma(sigma: f64) -> Self {
        NmsParams {
            window: 2.0 * sigma,
            saliency_floor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window >= 1.0 && self.window.is_finite()) {
            return Err(Error::invalid(format!("nms window must be >= 1, got {}", self.window)));
        }
        if !(0.0..=1.0).contains(&self.saliency_floor) {
            return Err(Error::invalid("saliency_floor must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Keeps pixels that dominate their bilinear samples at `±1..±ceil(window/2)`
/// steps along the normal. A pixel must be `>=` every forward sample and `>`
/// every backward sample, so a two-pixel plateau keeps exactly one pixel.
pub fn nms(stick: &ScalarField, normal: &Grid<[f64; 2]>, params: &NmsParams) -> Result<BinaryMask> {
    params.validate()?;
    stick.check_same_dims(normal)?;
    let (w, h) = stick.dims();
    let max = stick.max_value();
    let mut out = BinaryMask::filled(w, h, false);
    if max <= 0.0 {
        return Ok(out);
    }
    let floor = params.saliency_floor * max;
    let steps = (params.window / 2.0).ceil() as usize;
    for r in 0..h {
        for c in 0..w {
            let v = *stick.get(r, c);
            if v <= 0.0 || v < floor {
                continue;
            }
            let n = *normal.get(r, c);
            let keep = (1..=steps).all(|k| {
                let (dy, dx) = (k as f64 * n[1], k as f64 * n[0]);
                let fwd = stick.bilinear(r as f64 + dy, c as f64 + dx);
                let back = stick.bilinear(r as f64 - dy, c as f64 - dx);
                fwd.is_none_or(|s| v >= s) && back.is_none_or(|s| v > s)
            });
            if keep {
                out.set(r, c, true);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JunctionCluster {
    /// `(row, col)` centroid of the members.
    pub center: (f64, f64),
    pub members: Vec<Pixel>,
}

impl JunctionCluster {
    pub fn center_pixel(&self) -> Pixel {
        (self.center.0.round() as usize, self.center.1.round() as usize)
    }
}

/// 8-connected clusters of junction pixels.
pub fn find_junction_clusters(junction: &BinaryMask) -> Vec<JunctionCluster> {
    connected_components(junction, Connectivity::Eight)
        .into_iter()
        .map(|c| JunctionCluster {
            center: c.centroid(),
            members: c.pixels,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectParams {
    pub radius: f64,
}

impl ConnectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 1.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("connect radius must be >= 1, got {}", self.radius)));
        }
        Ok(())
    }
}

fn segments(centerlines: &BinaryMask, junction: &BinaryMask) -> Vec<Vec<Pixel>> {
    let mut free = centerlines.clone();
    for (a, &j) in free.as_mut_slice().iter_mut().zip(junction.as_slice()) {
        *a = *a && !j;
    }
    connected_components(&free, Connectivity::Eight)
        .into_iter()
        .map(|c| c.pixels)
        .collect()
}

fn middle_points_of(segs: &[Vec<Pixel>], cluster: &JunctionCluster, radius: f64) -> Vec<(f64, f64)> {
    let (cr, cc) = cluster.center;
    let r2 = radius * radius;
    segs.iter()
        .filter_map(|seg| {
            let inside: Vec<&Pixel> = seg
                .iter()
                .filter(|&&(r, c)| (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2) <= r2)
                .collect();
            if inside.is_empty() {
                return None;
            }
            let n = inside.len() as f64;
            let (sr, sc) = inside.iter().fold((0.0, 0.0), |(a, b), &&(r, c)| (a + r as f64, b + c as f64));
            Some((sr / n, sc / n))
        })
        .collect()
}

/// Mean in-disk position of every centerline segment touching the disk around
/// the cluster center. Segments are the 8-connected pieces of the centerline
/// mask once junction pixels are removed.
pub fn middle_points(
    centerlines: &BinaryMask,
    junction: &BinaryMask,
    cluster: &JunctionCluster,
    params: &ConnectParams,
) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    centerlines.check_same_dims(junction)?;
    Ok(middle_points_of(&segments(centerlines, junction), cluster, params.radius))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JunctionLink {
    pub cluster: usize,
    pub from: Pixel,
    pub to: Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub mask: BinaryMask,
    pub clusters: Vec<JunctionCluster>,
    /// Links of the first pass, one per (cluster, segment).
    pub links: Vec<JunctionLink>,
    /// Passes until no link added a pixel.
    pub passes: usize,
}

/// Links each middle point to its cluster center with a digital segment.
///
/// A drawn link joins the segment it started from, which shifts that
/// segment's middle point, so passes repeat until nothing changes. This makes
/// the operation idempotent.
pub fn connect_junctions(centerlines: &BinaryMask, junction: &BinaryMask, params: &ConnectParams) -> Result<Connection> {
    params.validate()?;
    centerlines.check_same_dims(junction)?;
    let clusters = find_junction_clusters(junction);
    let mut mask = centerlines.clone();
    let mut links = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        let segs = segments(&mask, junction);
        let mut changed = false;
        for (id, cl) in clusters.iter().enumerate() {
            let to = cl.center_pixel();
            for (mr, mc) in middle_points_of(&segs, cl, params.radius) {
                let from = (mr.round() as usize, mc.round() as usize);
                for (r, c) in line_pixels(from, to) {
                    if !*mask.get(r, c) {
                        mask.set(r, c, true);
                        changed = true;
                    }
                }
                if passes == 1 {
                    links.push(JunctionLink { cluster: id, from, to });
                }
            }
        }
        // Growth is confined to the disks, so this terminates.
        if !changed {
            break;
        }
    }
    Ok(Connection {
        mask,
        clusters,
        links,
        passes,
    })
}

#[derive(Serialize)]
struct JunctionRecord<'a> {
    id: usize,
    center: (f64, f64),
    size: usize,
    links: Vec<&'a JunctionLink>,
}

/// JSON array of clusters with their links.
pub fn junctions_json(conn: &Connection) -> Result<String> {
    let records: Vec<JunctionRecord> = conn
        .clusters
        .iter()
        .enumerate()
        .map(|(id, c)| JunctionRecord {
            id,
            center: c.center,
            size: c.members.len(),
            links: conn.links.iter().filter(|l| l.cluster == id).collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_normals(w: usize, h: usize) -> Grid<[f64; 2]> {
        Grid::filled(w, h, [0.0, 1.0])
    }

    fn ridge(w: usize, h: usize, rows: &[f64]) -> ScalarField {
        ScalarField::from_fn(w, h, |r, _| {
            rows.iter().map(|&y| (-(r as f64 - y).powi(2) / 2.0).exp()).fold(0.0, f64::max)
        })
    }

    #[test]
    fn gaussian_ridge_keeps_crest_only() {
        let f = ridge(30, 41, &[20.0]);
        let m = nms(&f, &vertical_normals(30, 41), &NmsParams::for_sigma(3.0)).unwrap();
        let expected = BinaryMask::from_fn(30, 41, |r, _| r == 20);
        assert_eq!(m, expected);
    }

    #[test]
    fn zero_field_gives_empty_mask() {
        let m = nms(&ScalarField::filled(5, 5, 0.0), &vertical_normals(5, 5), &NmsParams::for_sigma(2.0)).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn parallel_ridges_both_survive() {
        let f = ridge(30, 50, &[20.0, 30.0]);
        let m = nms(&f, &vertical_normals(30, 50), &NmsParams { window: 6.0, saliency_floor: 0.1 }).unwrap();
        assert_eq!(m, BinaryMask::from_fn(30, 50, |r, _| r == 20 || r == 30));
    }

    #[test]
    fn plateau_keeps_one_row() {
        let f = ScalarField::from_fn(10, 10, |r, _| if r == 4 || r == 5 { 1.0 } else { 0.05 });
        let m = nms(&f, &vertical_normals(10, 10), &NmsParams::for_sigma(1.0)).unwrap();
        assert_eq!(m, BinaryMask::from_fn(10, 10, |r, _| r == 4));
    }

    #[test]
    fn cluster_examples() {
        assert!(find_junction_clusters(&BinaryMask::filled(5, 5, false)).is_empty());
        let one = find_junction_clusters(&BinaryMask::from_pixels(10, 10, &[(5, 7)]));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].center, (5.0, 7.0));
        let block = find_junction_clusters(&BinaryMask::from_pixels(10, 10, &[(4, 4), (4, 5), (5, 4), (5, 5)]));
        assert_eq!(block[0].center, (4.5, 4.5));
    }

    #[test]
    fn middle_point_of_symmetric_segment() {
        let lines = BinaryMask::from_fn(30, 12, |r, c| r == 5 && (10..=20).contains(&c));
        let cl = JunctionCluster { center: (5.0, 15.0), members: vec![] };
        let none = BinaryMask::filled(30, 12, false);
        let p = ConnectParams { radius: 4.0 };
        assert_eq!(middle_points(&lines, &none, &cl, &p).unwrap(), vec![(5.0, 15.0)]);
        let far = JunctionCluster { center: (5.0, 28.0), members: vec![] };
        assert!(middle_points(&lines, &none, &far, &p).unwrap().is_empty());
    }

    fn cross(size: usize, gap: usize) -> BinaryMask {
        let m = size / 2;
        BinaryMask::from_fn(size, size, |r, c| {
            let d = if r == m { c.abs_diff(m) } else if c == m { r.abs_diff(m) } else { usize::MAX };
            d != usize::MAX && d > gap / 2
        })
    }

    #[test]
    fn cross_arms_counted_separately() {
        // The junction area must cover the diagonal contacts between arms.
        let lines = cross(41, 0);
        let junction = BinaryMask::from_fn(41, 41, |r, c| r.abs_diff(20) <= 1 && c.abs_diff(20) <= 1);
        let cl = &find_junction_clusters(&junction)[0];
        let pts = middle_points(&lines, &junction, cl, &ConnectParams { radius: 5.0 }).unwrap();
        assert_eq!(pts.len(), 4);
    }

    #[test]
    fn gap_cross_becomes_connected() {
        let sigma = 4.0;
        let lines = cross(41, 8);
        assert_eq!(connected_components(&lines, Connectivity::Eight).len(), 4);
        let junction = BinaryMask::from_fn(41, 41, |r, c| r.abs_diff(20) <= 1 && c.abs_diff(20) <= 1);
        let conn = connect_junctions(&lines, &junction, &ConnectParams { radius: 1.5 * sigma }).unwrap();
        assert!(lines.is_subset_of(&conn.mask));
        assert_eq!(connected_components(&conn.mask, Connectivity::Eight).len(), 1);
        assert_eq!(conn.links.len(), 4);
    }

    #[test]
    fn t_junction_draws_three_links() {
        let lines = BinaryMask::from_fn(41, 41, |r, c| (r == 20 && c.abs_diff(20) > 3) || (c == 20 && r > 23));
        let junction = BinaryMask::from_pixels(41, 41, &[(20, 20), (20, 21), (21, 20)]);
        let conn = connect_junctions(&lines, &junction, &ConnectParams { radius: 6.0 }).unwrap();
        assert_eq!(conn.links.len(), 3);
        assert!(junctions_json(&conn).unwrap().contains("\"links\""));
    }

    #[test]
    fn no_junctions_is_identity() {
        let lines = cross(21, 4);
        let conn = connect_junctions(&lines, &BinaryMask::filled(21, 21, false), &ConnectParams { radius: 3.0 }).unwrap();
        assert_eq!(conn.mask, lines);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn connect_is_idempotent_and_additive(
                bits in proptest::collection::vec(proptest::bool::weighted(0.2), 24 * 24),
                junction_px in proptest::collection::vec((0usize..24, 0usize..24), 0..6),
                radius in 1.0f64..6.0,
            ) {
                let lines = BinaryMask::from_vec(24, 24, bits).unwrap();
                let junction = BinaryMask::from_pixels(24, 24, &junction_px);
                let p = ConnectParams { radius };
                let once = connect_junctions(&lines, &junction, &p).unwrap().mask;
                prop_assert!(lines.is_subset_of(&once));
                let twice = connect_junctions(&once, &junction, &p).unwrap().mask;
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn nms_is_thin_across_the_normal(
                vals in proptest::collection::vec(0.0f64..1.0, 16 * 16),
            ) {
                let f = ScalarField::from_vec(16, 16, vals).unwrap();
                let m = nms(&f, &vertical_normals(16, 16), &NmsParams::for_sigma(1.0)).unwrap();
                let floor = 0.1 * f.max_value();
                for r in 0..15 {
                    for c in 0..16 {
                        prop_assert!(!(*m.get(r, c) && *m.get(r + 1, c)));
                        if *m.get(r, c) { prop_assert!(*f.get(r, c) >= floor); }
                    }
                }
            }
        }
    }
}

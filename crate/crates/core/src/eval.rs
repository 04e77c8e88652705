//! Buffer-based completeness, correctness and quality.

use serde::Serialize;

use crate::error::Result;
use crate::raster::{BinaryMask, Grid};

/// Squared Euclidean distance from every pixel to the nearest set pixel.
/// `f64::INFINITY` everywhere when the mask is empty.
pub fn squared_distance_transform(mask: &BinaryMask) -> Grid<f64> {
    let (w, h) = mask.dims();
    let mut d: Vec<f64> = mask.as_slice().iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let mut buf = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for c in 0..w {
        for r in 0..h {
            buf[r] = d[r * w + c];
        }
        lower_envelope(&buf[..h], &mut out[..h]);
        for r in 0..h {
            d[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        buf[..w].copy_from_slice(&d[r * w..(r + 1) * w]);
        lower_envelope(&buf[..w], &mut out[..w]);
        d[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    Grid::from_vec(w, h, d).expect("dims preserved")
}

/// One-dimensional squared-distance transform by the lower envelope of parabolas.
fn lower_envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let inter = |q: usize, p: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for &q in &sites {
        while let Some(&p) = v.last() {
            let s = inter(q, p);
            if s <= z[z.len() - 1] {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        if v.is_empty() {
            z.clear();
            z.push(f64::NEG_INFINITY);
        } else {
            let s = inter(q, *v.last().unwrap());
            z.push(s);
        }
        v.push(q);
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while z[k + 1] < i as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (i as f64 - p as f64).powi(2) + f[p];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Predicted pixels within `rho` of the reference are true positives;
/// reference pixels farther than `rho` from any prediction are misses.
pub fn buffer_match(pred: &BinaryMask, reference: &BinaryMask, rho: f64) -> Result<MatchCounts> {
    pred.check_same_dims(reference)?;
    let rho2 = rho * rho;
    let to_ref = squared_distance_transform(reference);
    let to_pred = squared_distance_transform(pred);
    let mut c = MatchCounts::default();
    for i in 0..pred.len() {
        if pred.as_slice()[i] {
            if to_ref.as_slice()[i] <= rho2 {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        if reference.as_slice()[i] && to_pred.as_slice()[i] > rho2 {
            c.fn_ += 1;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub com: f64,
    pub cor: f64,
    pub q: f64,
    /// Some denominator was zero and the affected metrics were set to 0.
    pub degenerate: bool,
}

pub fn metrics(c: &MatchCounts) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let com = ratio(c.tp, c.tp + c.fn_);
    let cor = ratio(c.tp, c.tp + c.fp);
    let q = ratio(c.tp, c.tp + c.fp + c.fn_);
    Metrics {
        com: com.unwrap_or(0.0),
        cor: cor.unwrap_or(0.0),
        q: q.unwrap_or(0.0),
        degenerate: com.is_none() || cor.is_none() || q.is_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub id: String,
    pub rho: f64,
    #[serde(flatten)]
    pub counts: MatchCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
}

pub fn evaluate(id: &str, pred: &BinaryMask, reference: &BinaryMask, rho: f64) -> Result<EvalReport> {
    let counts = buffer_match(pred, reference, rho)?;
    Ok(EvalReport {
        id: id.to_string(),
        rho,
        counts,
        metrics: metrics(&counts),
    })
}

/// Pixel-exact comparison.
pub fn evaluate_area(id: &str, pred: &BinaryMask, reference: &BinaryMask) -> Result<EvalReport> {
    evaluate(id, pred, reference, 0.0)
}

pub fn report_json_line(r: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string(r)?)
}

/// Dataset totals: metrics of the summed counts and the mean of per-image metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub images: usize,
    pub summed: MatchCounts,
    pub pooled: Metrics,
    pub mean_com: f64,
    pub mean_cor: f64,
    pub mean_q: f64,
}

pub fn aggregate(reports: &[EvalReport]) -> Aggregate {
    let summed = reports.iter().fold(MatchCounts::default(), |a, r| a + r.counts);
    let n = reports.len();
    let mean = |f: fn(&EvalReport) -> f64| if n == 0 { 0.0 } else { reports.iter().map(f).sum::<f64>() / n as f64 };
    Aggregate {
        images: n,
        summed,
        pooled: metrics(&summed),
        mean_com: mean(|r| r.metrics.com),
        mean_cor: mean(|r| r.metrics.cor),
        mean_q: mean(|r| r.metrics.q),
    }
}

/// Per-image rows followed by `pooled` and `mean` rows.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("id,rho,tp,fp,fn,com,cor,q\n");
    let row = |s: &mut String, id: &str, rho: f64, c: &MatchCounts, com: f64, cor: f64, q: f64| {
        s.push_str(&format!("{id},{rho},{},{},{},{com:.6},{cor:.6},{q:.6}\n", c.tp, c.fp, c.fn_));
    };
    for r in reports {
        row(&mut s, &r.id, r.rho, &r.counts, r.metrics.com, r.metrics.cor, r.metrics.q);
    }
    let agg = aggregate(reports);
    let rho = reports.first().map_or(0.0, |r| r.rho);
    row(&mut s, "pooled", rho, &agg.summed, agg.pooled.com, agg.pooled.cor, agg.pooled.q);
    row(&mut s, "mean", rho, &agg.summed, agg.mean_com, agg.mean_cor, agg.mean_q);
    s
}

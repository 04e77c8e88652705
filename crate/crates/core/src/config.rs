//! Pipeline configuration as flat `section.key = value` text.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! superpixel.ks = 8000,10000,12000
//! tv.road_width = 12
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::centerline::{ConnectParams, NmsParams};
use crate::error::{Error, Result};
use crate::features::NeighborMetric;
use crate::graphcut::GcParams;
use crate::mjcr::{CrcParams, Fusion};
use crate::shapefilter::ShapeParams;
use crate::superpixel::SlicParams;
use crate::tensorvote::{ClassifyParams, VoteParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ks: Vec<usize>,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub neighbor_metric: NeighborMetric,
    pub samples_per_class: usize,
    pub purity: f64,
    pub lambda: f64,
    pub fusion: Fusion,
    pub shared_training: bool,
    pub gc: GcParams,
    pub shape: ShapeParams,
    /// Expected road width in pixels; sets the default voting scale.
    pub road_width: Option<f64>,
    pub sigma: Option<f64>,
    /// Overrides the curvature constant derived from `sigma`.
    pub curvature_c: Option<f64>,
    pub classify: ClassifyParams,
    /// Depth of the classification support inside the road, as a fraction
    /// of the estimated road width.
    pub core_depth: f64,
    pub nms_window: Option<f64>,
    pub nms_floor: f64,
    pub connect_radius: Option<f64>,
    /// Buffer width for centerline matching. Unset means 3 px for
    /// 12-15 px roads and 2 px otherwise.
    pub rho: Option<f64>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            ks: vec![8000, 10000, 12000],
            compactness: 10.0,
            slic_iterations: 10,
            neighbor_metric: NeighborMetric::Hybrid,
            samples_per_class: 50,
            purity: 0.8,
            lambda: 10.0,
            fusion: Fusion::Max,
            shared_training: false,
            gc: GcParams::default(),
            shape: ShapeParams::default(),
            road_width: None,
            sigma: None,
            curvature_c: None,
            classify: ClassifyParams::default(),
            core_depth: 1.0 / 3.0,
            nms_window: None,
            nms_floor: 0.1,
            connect_radius: None,
            rho: None,
            workers: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one dotted key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "superpixel.ks" => {
                self.ks = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "superpixel.compactness" => self.compactness = parse(key, value)?,
            "superpixel.iterations" => self.slic_iterations = parse(key, value)?,
            "features.neighbor_metric" => self.neighbor_metric = value.parse()?,
            "mjcr.samples_per_class" => self.samples_per_class = parse(key, value)?,
            "mjcr.purity" => self.purity = parse(key, value)?,
            "mjcr.lambda" => self.lambda = parse(key, value)?,
            "mjcr.fusion" => self.fusion = value.parse()?,
            "mjcr.shared_training" => self.shared_training = parse(key, value)?,
            "gc.smoothness_weight" => self.gc.smoothness_weight = parse(key, value)?,
            "gc.epsilon" => self.gc.epsilon = parse(key, value)?,
            "gc.likelihood_clamp" => self.gc.likelihood_clamp = parse(key, value)?,
            "gc.color_scale" => self.gc.color_scale = parse(key, value)?,
            "shape.min_area" => self.shape.min_area = parse(key, value)?,
            "shape.lfi_threshold" => self.shape.lfi_threshold = parse(key, value)?,
            "tv.road_width" => self.road_width = parse_opt(key, value)?,
            "tv.sigma" => self.sigma = parse_opt(key, value)?,
            "tv.c" => self.curvature_c = parse_opt(key, value)?,
            "tv.stick_floor" => self.classify.stick_floor = parse(key, value)?,
            "tv.ball_floor" => self.classify.ball_floor = parse(key, value)?,
            "tv.ball_ratio" => self.classify.ball_ratio = parse(key, value)?,
            "tv.core_depth" => self.core_depth = parse(key, value)?,
            "nms.window" => self.nms_window = parse_opt(key, value)?,
            "nms.saliency_floor" => self.nms_floor = parse(key, value)?,
            "connect.radius" => self.connect_radius = parse_opt(key, value)?,
            "eval.rho" => self.rho = parse_opt(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let ks = self.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        [
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("superpixel.ks", ks),
            ("superpixel.compactness", self.compactness.to_string()),
            ("superpixel.iterations", self.slic_iterations.to_string()),
            ("features.neighbor_metric", self.neighbor_metric.name().to_string()),
            ("mjcr.samples_per_class", self.samples_per_class.to_string()),
            ("mjcr.purity", self.purity.to_string()),
            ("mjcr.lambda", self.lambda.to_string()),
            ("mjcr.fusion", self.fusion.name().to_string()),
            ("mjcr.shared_training", self.shared_training.to_string()),
            ("gc.smoothness_weight", self.gc.smoothness_weight.to_string()),
            ("gc.epsilon", self.gc.epsilon.to_string()),
            ("gc.likelihood_clamp", self.gc.likelihood_clamp.to_string()),
            ("gc.color_scale", self.gc.color_scale.to_string()),
            ("shape.min_area", self.shape.min_area.to_string()),
            ("shape.lfi_threshold", self.shape.lfi_threshold.to_string()),
            ("tv.road_width", fmt_opt(self.road_width)),
            ("tv.sigma", fmt_opt(self.sigma)),
            ("tv.c", fmt_opt(self.curvature_c)),
            ("tv.stick_floor", self.classify.stick_floor.to_string()),
            ("tv.ball_floor", self.classify.ball_floor.to_string()),
            ("tv.ball_ratio", self.classify.ball_ratio.to_string()),
            ("tv.core_depth", self.core_depth.to_string()),
            ("nms.window", fmt_opt(self.nms_window)),
            ("nms.saliency_floor", self.nms_floor.to_string()),
            ("connect.radius", fmt_opt(self.connect_radius)),
            ("eval.rho", fmt_opt(self.rho)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Text that parses back to an equal config.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("superpixel.ks must list positive counts".into());
        }
        if !(self.compactness > 0.0) {
            return bad("superpixel.compactness must be > 0".into());
        }
        if self.samples_per_class == 0 {
            return bad("mjcr.samples_per_class must be > 0".into());
        }
        if !(self.purity > 0.5 && self.purity <= 1.0) {
            return bad("mjcr.purity must lie in (0.5, 1]".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("mjcr.lambda must be finite and >= 0".into());
        }
        self.gc.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.shape.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(w) = self.road_width {
            if !(w > 0.0 && w.is_finite()) {
                return bad("tv.road_width must be > 0".into());
            }
        }
        if let Some(s) = self.sigma {
            if !(s >= 1.0 && s.is_finite()) {
                return bad("tv.sigma must be >= 1".into());
            }
        }
        if !(self.core_depth >= 0.0 && self.core_depth <= 0.5) {
            return bad("tv.core_depth must lie in [0, 0.5]".into());
        }
        if let Some(r) = self.rho {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("eval.rho must be >= 0".into());
            }
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        Ok(())
    }

    pub fn slic(&self) -> SlicParams {
        SlicParams {
            k: self.ks[0],
            compactness: self.compactness,
            max_iterations: self.slic_iterations,
            seed: self.seed,
        }
    }

    pub fn crc(&self) -> CrcParams {
        CrcParams { lambda: self.lambda }
    }

    /// Explicit sigma, else `1.5 × road_width`, else `1.5 × estimated` width.
    pub fn resolve_sigma(&self, estimated_width: impl FnOnce() -> f64) -> f64 {
        self.sigma
            .unwrap_or_else(|| 1.5 * self.road_width.unwrap_or_else(estimated_width))
            .max(1.0)
    }

    pub fn vote(&self, sigma: f64) -> Result<VoteParams> {
        let mut p = VoteParams::new(sigma)?;
        if let Some(c) = self.curvature_c {
            p.c = c;
        }
        Ok(p)
    }

    pub fn nms(&self, sigma: f64) -> NmsParams {
        NmsParams {
            window: self.nms_window.unwrap_or(2.0 * sigma),
            saliency_floor: self.nms_floor,
        }
    }

    /// Explicit rho, else 3 px when `tv.road_width` lies in [12, 15], else 2 px.
    pub fn resolve_rho(&self) -> f64 {
        self.rho.unwrap_or(match self.road_width {
            Some(w) if (12.0..=15.0).contains(&w) => 3.0,
            _ => 2.0,
        })
    }

    pub fn connect(&self, sigma: f64) -> ConnectParams {
        ConnectParams {
            radius: self.connect_radius.unwrap_or(sigma).max(1.0),
        }
    }
}

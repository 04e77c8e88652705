//! End-to-end orchestration: segmentation, centerline extraction and
//! evaluation, with every intermediate written to disk and indexed in a
//! run manifest.
//!
//! The work is split in two halves so that a sigma sweep can reuse the
//! segmentation and only repeat the voting stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::centerline::{connect_junctions, junctions_json, nms, Connection};
use crate::config::PipelineConfig;
use crate::error::{Error, Result, Stage, StageExt};
use crate::eval::{aggregate, evaluate, evaluate_area, reports_csv, Aggregate, EvalReport};
use crate::features::{features_csv, scale_features, ScaleFeatures};
use crate::graphcut::{min_cut_segment, EnergyBreakdown};
use crate::io;
use crate::mjcr::{
    broadcast, fuse_fields, object_likelihoods, select_training_objects, training_from_selection, transfer_selection,
    CrcClassifier, TrainingSelection,
};
use crate::raster::{BinaryMask, RasterImage, ScalarField};
use crate::shapefilter::{diagnostics_csv, filter_road_like, ComponentDiagnostics};
use crate::superpixel::{multiscale_segment, LabelMap};
use crate::tensorvote::{classify_points, saliency, sparse_then_dense_vote, Saliency};

pub const MANIFEST_FORMAT: &str = "roadex-manifest/1";

/// Output of the segmentation half.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub label_maps: Vec<LabelMap>,
    pub features: Vec<ScaleFeatures>,
    pub selections: Vec<TrainingSelection>,
    pub likelihood: ScalarField,
    pub graphcut: BinaryMask,
    pub energy: EnergyBreakdown,
    pub road: BinaryMask,
    pub components: Vec<ComponentDiagnostics>,
}

/// Output of the centerline half for one sigma.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub sigma: f64,
    pub saliency: Saliency,
    pub curve: BinaryMask,
    pub junction: BinaryMask,
    pub thin: BinaryMask,
    pub connection: Connection,
}

impl Extraction {
    pub fn centerline(&self) -> &BinaryMask {
        &self.connection.mask
    }
}

fn training_seed(seed: u64, scale: usize) -> u64 {
    seed.wrapping_add((scale as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Superpixels, features, classification, graph cut and shape filtering.
pub fn segment(image: &RasterImage, train_mask: &BinaryMask, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate().stage(Stage::Config)?;
    image.check_same_dims(train_mask).stage(Stage::Io)?;
    let label_maps = multiscale_segment(image, &cfg.ks, &cfg.slic()).stage(Stage::Superpixel)?;
    let features = label_maps
        .iter()
        .map(|lm| scale_features(image, lm, cfg.neighbor_metric))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Features)?;

    let selections = if cfg.shared_training {
        let base = select_training_objects(&label_maps[0], train_mask, cfg.samples_per_class, cfg.purity, cfg.seed)
            .stage(Stage::Mjcr)?;
        label_maps
            .iter()
            .map(|lm| transfer_selection(&label_maps[0], &base, lm))
            .collect()
    } else {
        label_maps
            .iter()
            .enumerate()
            .map(|(i, lm)| {
                select_training_objects(lm, train_mask, cfg.samples_per_class, cfg.purity, training_seed(cfg.seed, i))
            })
            .collect::<Result<Vec<_>>>()
            .stage(Stage::Mjcr)?
    };
    let fields = label_maps
        .iter()
        .zip(&features)
        .zip(&selections)
        .map(|((lm, f), sel)| {
            let clf = CrcClassifier::fit(&training_from_selection(f, sel)?, cfg.crc())?;
            Ok(broadcast(lm, &object_likelihoods(&clf, f)))
        })
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Mjcr)?;
    let likelihood = fuse_fields(&fields, cfg.fusion).stage(Stage::Mjcr)?;

    let (graphcut, energy) = min_cut_segment(image, &likelihood, &cfg.gc).stage(Stage::Graphcut)?;
    let (road, components) = filter_road_like(&graphcut, &cfg.shape).stage(Stage::Shapefilter)?;
    Ok(Segmentation {
        label_maps,
        features,
        selections,
        likelihood,
        graphcut,
        energy,
        road,
        components,
    })
}

/// Road width from the mean interior distance to the background. A strip of
/// width `w` has distances spread evenly over `1..=w/2`.
pub fn estimate_road_width(road: &BinaryMask) -> Option<f64> {
    if road.count() == 0 {
        return None;
    }
    let background = road.map(|&b| !b);
    let d2 = crate::eval::squared_distance_transform(&background);
    let (sum, n) = road
        .as_slice()
        .iter()
        .zip(d2.as_slice())
        .filter(|(&r, _)| r)
        .fold((0.0, 0usize), |(s, n), (_, &d)| (s + d.min(1e12).sqrt(), n + 1));
    Some((4.0 * sum / n as f64 - 2.0).max(1.0))
}

/// Sigma for a road mask under `cfg`, estimating the width when needed.
pub fn resolve_sigma(cfg: &PipelineConfig, road: &BinaryMask) -> f64 {
    cfg.resolve_sigma(|| estimate_road_width(road).unwrap_or(1.0))
}

/// Road pixels at least `depth` pixels from the background.
pub fn road_core(road: &BinaryMask, depth: f64) -> BinaryMask {
    let d2 = crate::eval::squared_distance_transform(&road.map(|&b| !b));
    let min2 = depth * depth;
    BinaryMask::from_fn(road.width(), road.height(), |r, c| *road.get(r, c) && *d2.get(r, c) >= min2)
}

/// Tensor voting, classification, NMS and junction linking on a road mask.
///
/// Points are classified on the road core only. Near the road border the
/// votes come from one side and look ball-like, which would otherwise mark
/// the whole border as junction. Ridges are kept inside the road mask;
/// outside it the saliency is dominated by wide-angle votes whose normals
/// run along the road.
pub fn extract_centerlines(road: &BinaryMask, cfg: &PipelineConfig, sigma: f64) -> Result<Extraction> {
    let params = cfg.vote(sigma).stage(Stage::Tensorvote)?;
    let field = sparse_then_dense_vote(road, &params).stage(Stage::Tensorvote)?;
    let sal = saliency(&field);
    let depth = (cfg.core_depth * estimate_road_width(road).unwrap_or(1.0)).max(1.0);
    let core = road_core(road, depth);
    let (curve, junction) = classify_points(&sal, Some(&core), &cfg.classify).stage(Stage::Tensorvote)?;
    let mut thin = nms(&sal.stick, &sal.normal, &cfg.nms(sigma)).stage(Stage::Centerline)?;
    for (t, &r) in thin.as_mut_slice().iter_mut().zip(road.as_slice()) {
        *t &= r;
    }
    let connection = connect_junctions(&thin, &junction, &cfg.connect(sigma)).stage(Stage::Centerline)?;
    Ok(Extraction {
        sigma,
        saliency: sal,
        curve,
        junction,
        thin,
        connection,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one directory and remembers their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: BTreeMap<String, ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ArtifactWriter {
            dir,
            entries: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        io::write_atomic(&self.dir.join(name), bytes)?;
        self.entries.insert(
            name.to_string(),
            ArtifactEntry {
                name: name.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn entries(&self) -> Vec<ArtifactEntry> {
        self.entries.values().cloned().collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageSummary {
    pub scales: Vec<ScaleSummary>,
    pub graphcut_energy: Option<EnergyBreakdown>,
    pub road_pixels: Option<usize>,
    pub components_kept: Option<usize>,
    pub components_removed: Option<usize>,
    pub curve_pixels: Option<usize>,
    pub junction_pixels: Option<usize>,
    pub junction_clusters: Option<usize>,
    pub junction_links: Option<usize>,
    pub centerline_pixels: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSummary {
    pub k: usize,
    pub objects: usize,
    pub training_road: usize,
    pub training_non_road: usize,
}

/// Machine-readable record of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub command: String,
    pub id: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputRecord>,
    pub sigma: Option<f64>,
    pub summary: StageSummary,
    pub artifacts: Vec<ArtifactEntry>,
    pub reports: Vec<EvalReport>,
    pub aggregate: Option<Aggregate>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, id: &str, cfg: &PipelineConfig) -> Self {
        Manifest {
            format: MANIFEST_FORMAT,
            command: command.to_string(),
            id: id.to_string(),
            seed: cfg.seed,
            config: cfg.entries(),
            inputs: BTreeMap::new(),
            sigma: None,
            summary: StageSummary::default(),
            artifacts: Vec::new(),
            reports: Vec::new(),
            aggregate: None,
            warnings: Vec::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), InputRecord::from_file(path)?);
        Ok(())
    }

    /// Records artifact hashes and writes `manifest.json` beside them.
    pub fn finish(mut self, writer: &ArtifactWriter) -> Result<Self> {
        self.artifacts.extend(writer.entries());
        self.artifacts.sort_by(|a, b| a.name.cmp(&b.name));
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        io::write_atomic(&writer.dir().join("manifest.json"), text.as_bytes())?;
        Ok(self)
    }
}

pub fn write_segmentation(w: &mut ArtifactWriter, image: &RasterImage, seg: &Segmentation) -> Result<()> {
    for (i, (lm, f)) in seg.label_maps.iter().zip(&seg.features).enumerate() {
        w.write(&format!("superpixels_s{i}.rxl"), &io::labels_to_raw(lm))?;
        w.write(
            &format!("superpixels_s{i}.png"),
            &io::image_to_png(&io::boundary_overlay(image, lm, [255, 0, 0]))?,
        )?;
        w.write(&format!("features_s{i}.csv"), features_csv(i, &f.ssc).as_bytes())?;
    }
    w.write("likelihood.rxf", &io::field_to_raw(&seg.likelihood))?;
    w.write("likelihood.png", &io::field_to_png16(&seg.likelihood, 1.0)?)?;
    w.write("graphcut_mask.png", &io::mask_to_png(&seg.graphcut)?)?;
    w.write("road_mask.png", &io::mask_to_png(&seg.road)?)?;
    w.write("shape_components.csv", diagnostics_csv(&seg.components).as_bytes())?;
    Ok(())
}

fn normalized_png(field: &ScalarField) -> Result<Vec<u8>> {
    let max = field.max_value();
    io::field_to_png16(field, if max > 0.0 { 1.0 / max } else { 1.0 })
}

pub fn write_extraction(w: &mut ArtifactWriter, ex: &Extraction) -> Result<()> {
    w.write("stick_saliency.rxf", &io::field_to_raw(&ex.saliency.stick))?;
    w.write("stick_saliency.png", &normalized_png(&ex.saliency.stick)?)?;
    w.write("ball_saliency.png", &normalized_png(&ex.saliency.ball)?)?;
    w.write("curve_points.png", &io::mask_to_png(&ex.curve)?)?;
    w.write("junction_points.png", &io::mask_to_png(&ex.junction)?)?;
    w.write("centerline_nms.png", &io::mask_to_png(&ex.thin)?)?;
    w.write("centerline.png", &io::mask_to_png(ex.centerline())?)?;
    w.write("junctions.json", junctions_json(&ex.connection)?.as_bytes())?;
    Ok(())
}

fn summarize_segmentation(summary: &mut StageSummary, cfg: &PipelineConfig, seg: &Segmentation) {
    summary.scales = seg
        .label_maps
        .iter()
        .zip(&seg.selections)
        .zip(&cfg.ks)
        .map(|((lm, sel), &k)| ScaleSummary {
            k,
            objects: lm.count(),
            training_road: sel.road.len(),
            training_non_road: sel.non_road.len(),
        })
        .collect();
    summary.graphcut_energy = Some(seg.energy);
    summary.road_pixels = Some(seg.road.count());
    let kept = seg.components.iter().filter(|c| c.kept).count();
    summary.components_kept = Some(kept);
    summary.components_removed = Some(seg.components.len() - kept);
}

fn summarize_extraction(summary: &mut StageSummary, ex: &Extraction) {
    summary.curve_pixels = Some(ex.curve.count());
    summary.junction_pixels = Some(ex.junction.count());
    summary.junction_clusters = Some(ex.connection.clusters.len());
    summary.junction_links = Some(ex.connection.links.len());
    summary.centerline_pixels = Some(ex.centerline().count());
}

/// In-memory inputs of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub id: String,
    pub image: RasterImage,
    /// Mask used to label training objects. Defaults to `road_ref`.
    pub train: Option<BinaryMask>,
    pub road_ref: Option<BinaryMask>,
    pub centerline_ref: Option<BinaryMask>,
}

impl RunInputs {
    fn train_mask(&self) -> Result<&BinaryMask> {
        self.train
            .as_ref()
            .or(self.road_ref.as_ref())
            .ok_or_else(|| Error::Config("a training mask or road reference is required".into()))
            .stage(Stage::Mjcr)
    }

    fn check_dims(&self) -> Result<()> {
        for m in [&self.train, &self.road_ref, &self.centerline_ref].into_iter().flatten() {
            self.image.check_same_dims(m).stage(Stage::Io)?;
        }
        Ok(())
    }
}

/// Paths of the on-disk inputs of one run.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub image: PathBuf,
    pub train: Option<PathBuf>,
    pub road_ref: Option<PathBuf>,
    pub centerline_ref: Option<PathBuf>,
}

impl InputPaths {
    pub fn load(&self, id: &str) -> Result<RunInputs> {
        let mask = |p: &Option<PathBuf>| p.as_ref().map(io::load_mask).transpose();
        Ok(RunInputs {
            id: id.to_string(),
            image: io::load_image(&self.image).stage(Stage::Io)?,
            train: mask(&self.train).stage(Stage::Io)?,
            road_ref: mask(&self.road_ref).stage(Stage::Io)?,
            centerline_ref: mask(&self.centerline_ref).stage(Stage::Io)?,
        })
    }

    pub fn record(&self, manifest: &mut Manifest) -> Result<()> {
        manifest.add_input("image", &self.image).stage(Stage::Io)?;
        let optional = [("train", &self.train), ("road_ref", &self.road_ref), ("centerline_ref", &self.centerline_ref)];
        for (role, p) in optional {
            if let Some(p) = p {
                manifest.add_input(role, p).stage(Stage::Io)?;
            }
        }
        Ok(())
    }
}

/// Result of a full run, with the manifest already written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub segmentation: Segmentation,
    pub extraction: Extraction,
    pub report: Option<EvalReport>,
    pub manifest: Manifest,
}

fn segmentation_half(inputs: &RunInputs, cfg: &PipelineConfig, w: &mut ArtifactWriter, manifest: &mut Manifest) -> Result<Segmentation> {
    let seg = segment(&inputs.image, inputs.train_mask()?, cfg)?;
    write_segmentation(w, &inputs.image, &seg).stage(Stage::Io)?;
    summarize_segmentation(&mut manifest.summary, cfg, &seg);
    if let Some(r) = &inputs.road_ref {
        let area = evaluate_area(&format!("{}:road", inputs.id), &seg.road, r).stage(Stage::Eval)?;
        w.write_json("road_eval.json", &area).stage(Stage::Io)?;
    }
    Ok(seg)
}

fn extraction_half(
    id: &str,
    road: &BinaryMask,
    centerline_ref: Option<&BinaryMask>,
    cfg: &PipelineConfig,
    w: &mut ArtifactWriter,
    manifest: &mut Manifest,
) -> Result<(Extraction, Option<EvalReport>)> {
    if cfg.sigma.is_none() && cfg.road_width.is_none() {
        manifest
            .warnings
            .push("neither tv.sigma nor tv.road_width set; sigma derived from the segmented road width".into());
    }
    let sigma = resolve_sigma(cfg, road);
    manifest.sigma = Some(sigma);
    let ex = extract_centerlines(road, cfg, sigma)?;
    write_extraction(w, &ex).stage(Stage::Io)?;
    summarize_extraction(&mut manifest.summary, &ex);

    let report = match centerline_ref {
        Some(r) => {
            let rep = evaluate(id, ex.centerline(), r, cfg.resolve_rho()).stage(Stage::Eval)?;
            w.write_json("eval.json", &rep).stage(Stage::Io)?;
            manifest.reports.push(rep.clone());
            Some(rep)
        }
        None => {
            manifest.warnings.push("no centerline reference; evaluation skipped".into());
            None
        }
    };
    Ok((ex, report))
}

fn open_run(cfg: &PipelineConfig, out: &Path) -> Result<ArtifactWriter> {
    cfg.validate().stage(Stage::Config)?;
    let mut w = ArtifactWriter::new(out).stage(Stage::Io)?;
    w.write("config.txt", cfg.to_text().as_bytes()).stage(Stage::Io)?;
    Ok(w)
}

/// Runs every stage on in-memory inputs and writes artifacts to `out`.
/// `manifest` carries the caller's command name and input records.
pub fn run_pipeline(inputs: &RunInputs, cfg: &PipelineConfig, out: &Path, mut manifest: Manifest) -> Result<RunOutput> {
    inputs.check_dims()?;
    let mut w = open_run(cfg, out)?;
    let seg = segmentation_half(inputs, cfg, &mut w, &mut manifest)?;
    let (ex, report) = extraction_half(&inputs.id, &seg.road, inputs.centerline_ref.as_ref(), cfg, &mut w, &mut manifest)?;
    let manifest = manifest.finish(&w).stage(Stage::Io)?;
    Ok(RunOutput {
        segmentation: seg,
        extraction: ex,
        report,
        manifest,
    })
}

/// Segmentation stages only. `road_mask.png` in `out` is the input of
/// [`run_extraction`].
pub fn run_segmentation(inputs: &RunInputs, cfg: &PipelineConfig, out: &Path, mut manifest: Manifest) -> Result<(Segmentation, Manifest)> {
    inputs.check_dims()?;
    let mut w = open_run(cfg, out)?;
    let seg = segmentation_half(inputs, cfg, &mut w, &mut manifest)?;
    Ok((seg, manifest.finish(&w).stage(Stage::Io)?))
}

/// Voting, thinning, linking and optional evaluation on a saved road mask.
pub fn run_extraction(
    id: &str,
    road: &BinaryMask,
    centerline_ref: Option<&BinaryMask>,
    cfg: &PipelineConfig,
    out: &Path,
    mut manifest: Manifest,
) -> Result<(Extraction, Option<EvalReport>, Manifest)> {
    if let Some(r) = centerline_ref {
        road.check_same_dims(r).stage(Stage::Io)?;
    }
    let mut w = open_run(cfg, out)?;
    let (ex, report) = extraction_half(id, road, centerline_ref, cfg, &mut w, &mut manifest)?;
    Ok((ex, report, manifest.finish(&w).stage(Stage::Io)?))
}

/// One row of a sigma sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub report: EvalReport,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("sigma,com,cor,q\n");
    for r in rows {
        let m = &r.report.metrics;
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.sigma, m.com, m.cor, m.q));
    }
    s
}

/// Evaluates each sigma on one shared segmentation.
pub fn sweep_sigma(inputs: &RunInputs, cfg: &PipelineConfig, sigmas: &[f64], out: &Path, mut manifest: Manifest) -> Result<(Vec<SweepRow>, Manifest)> {
    if sigmas.len() < 2 {
        return Err(Error::Config(format!("a sweep needs at least 2 sigma values, got {}", sigmas.len())))
            .stage(Stage::Config);
    }
    inputs.check_dims()?;
    let reference = inputs
        .centerline_ref
        .as_ref()
        .ok_or_else(|| Error::Config("a sweep needs a centerline reference".into()))
        .stage(Stage::Eval)?;
    let mut w = open_run(cfg, out)?;
    let seg = segmentation_half(inputs, cfg, &mut w, &mut manifest)?;

    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        if !(sigma >= 1.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sweep sigma must be >= 1, got {sigma}"))).stage(Stage::Config);
        }
        let ex = extract_centerlines(&seg.road, cfg, sigma)?;
        w.write(&format!("centerline_sigma_{sigma}.png"), &io::mask_to_png(ex.centerline())?)
            .stage(Stage::Io)?;
        let report = evaluate(&format!("{}@{sigma}", inputs.id), ex.centerline(), reference, cfg.resolve_rho()).stage(Stage::Eval)?;
        manifest.reports.push(report.clone());
        rows.push(SweepRow { sigma, report });
    }
    w.write("sweep.csv", sweep_csv(&rows).as_bytes()).stage(Stage::Io)?;
    let manifest = manifest.finish(&w).stage(Stage::Io)?;
    Ok((rows, manifest))
}

/// Dataset entries found by [`scan_dataset`].
#[derive(Debug, Clone, Default)]
pub struct DatasetScan {
    pub items: Vec<(String, InputPaths)>,
    pub warnings: Vec<String>,
}

const ROAD_SUFFIX: &str = "_road";
const CENTERLINE_SUFFIX: &str = "_centerline";

/// Finds `<id>.png` + `<id>_road.png` + `<id>_centerline.png` triples,
/// sorted by id. Incomplete triples become warnings.
pub fn scan_dataset(dir: &Path) -> Result<DatasetScan> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    let present: std::collections::BTreeSet<&str> = stems.iter().map(String::as_str).collect();
    let mut scan = DatasetScan::default();
    for stem in &stems {
        if let Some(id) = stem.strip_suffix(ROAD_SUFFIX).or_else(|| stem.strip_suffix(CENTERLINE_SUFFIX)) {
            if !present.contains(id) {
                scan.warnings.push(format!("{stem}.png: no matching image {id}.png; skipped"));
            }
            continue;
        }
        let road = format!("{stem}{ROAD_SUFFIX}");
        let center = format!("{stem}{CENTERLINE_SUFFIX}");
        let missing: Vec<String> = [&road, &center]
            .into_iter()
            .filter(|s| !present.contains(s.as_str()))
            .map(|s| format!("{s}.png"))
            .collect();
        if !missing.is_empty() {
            scan.warnings.push(format!("{stem}: missing {}; skipped", missing.join(", ")));
            continue;
        }
        scan.items.push((
            stem.clone(),
            InputPaths {
                image: dir.join(format!("{stem}.png")),
                train: None,
                road_ref: Some(dir.join(format!("{road}.png"))),
                centerline_ref: Some(dir.join(format!("{center}.png"))),
            },
        ));
    }
    Ok(scan)
}

pub fn reports_jsonl(reports: &[EvalReport]) -> Result<String> {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// Runs every triple of `dir` into `out/<id>/`, up to `cfg.workers` at once,
/// then writes `reports.jsonl`, `aggregate.csv` and a dataset manifest.
/// Images that fail are recorded as warnings.
pub fn run_dataset(dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    cfg.validate().stage(Stage::Config)?;
    let scan = scan_dataset(dir).stage(Stage::Io)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))
        .stage(Stage::Config)?;
    let results: Vec<Result<RunOutput>> = pool.install(|| {
        scan.items
            .par_iter()
            .map(|(id, paths)| {
                let inputs = paths.load(id)?;
                let mut m = Manifest::new("pipeline", id, cfg);
                paths.record(&mut m)?;
                run_pipeline(&inputs, cfg, &out.join(id), m)
            })
            .collect()
    });

    let mut manifest = Manifest::new("dataset", &dir.display().to_string(), cfg);
    manifest.warnings = scan.warnings;
    let mut w = ArtifactWriter::new(out).stage(Stage::Io)?;
    for ((id, _), res) in scan.items.iter().zip(results) {
        match res {
            Ok(run) => {
                let name = format!("{id}/manifest.json");
                let path = out.join(&name);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e)).stage(Stage::Io)?;
                manifest.artifacts.push(ArtifactEntry {
                    name,
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len(),
                });
                manifest.reports.extend(run.report);
            }
            Err(e) => manifest.warnings.push(format!("{id}: {e}; skipped")),
        }
    }
    w.write("reports.jsonl", reports_jsonl(&manifest.reports)?.as_bytes()).stage(Stage::Io)?;
    w.write("aggregate.csv", reports_csv(&manifest.reports).as_bytes()).stage(Stage::Io)?;
    manifest.aggregate = Some(aggregate(&manifest.reports));
    manifest.finish(&w).stage(Stage::Io)
}

//! `roadex`: batch driver for segmentation, centerline extraction,
//! evaluation, sigma sweeps and synthetic scenes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use roadex::error::{Error, Result, Stage};
use roadex::eval::{evaluate, evaluate_area, report_json_line};
use roadex::io;
use roadex::pipeline::{
    run_dataset, run_extraction, run_pipeline, run_segmentation, sweep_sigma, ArtifactWriter, InputPaths, Manifest,
};
use roadex::synth::{presets, render, SceneSpec};
use roadex::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "roadex", version, about = "Road centerline extraction from aerial imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Superpixels, classification, graph cut and shape filtering.
    Segment {
        /// RGB image.
        image: PathBuf,
        #[command(flatten)]
        refs: Refs,
        #[command(flatten)]
        common: Common,
    },
    /// Tensor voting, thinning and junction linking on a road mask.
    Centerline {
        /// Binary road mask, e.g. `road_mask.png` from `segment`.
        road_mask: PathBuf,
        /// Centerline reference; enables evaluation.
        #[arg(long)]
        centerline: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare a predicted mask against a reference.
    Eval {
        prediction: PathBuf,
        reference: PathBuf,
        /// Pixel-exact area comparison instead of buffer matching.
        #[arg(long)]
        area: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Full run on one image, or on every triple in a directory.
    Pipeline {
        /// RGB image, or a directory of `<id>.png`, `<id>_road.png`,
        /// `<id>_centerline.png` triples.
        input: PathBuf,
        #[command(flatten)]
        refs: Refs,
        /// Centerline reference; enables evaluation.
        #[arg(long)]
        centerline: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Segment once, then extract and score centerlines at several sigmas.
    Sweep {
        image: PathBuf,
        #[command(flatten)]
        refs: Refs,
        #[arg(long)]
        centerline: PathBuf,
        /// Comma-separated sigma values, at least two.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a synthetic scene as an image/road/centerline triple.
    Synth {
        #[arg(long, value_enum, default_value_t = Preset::Curve, conflicts_with = "spec")]
        preset: Preset,
        /// Scene description JSON instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 800)]
        size: usize,
        #[arg(long, default_value_t = 12.0)]
        width: f64,
        /// Share of the road area under occluders (curve preset).
        #[arg(long, default_value_t = 0.2)]
        occlusion: f64,
        #[arg(long, default_value_t = 8.0)]
        noise: f64,
        /// File stem of the written triple.
        #[arg(long, default_value = "scene")]
        id: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Preset {
    Straight,
    Curve,
}

#[derive(Args, Debug)]
struct Refs {
    /// Road reference mask; used for training when `--train` is absent.
    #[arg(long)]
    road: Option<PathBuf>,
    /// Mask that labels training objects.
    #[arg(long)]
    train: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Voting scale in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Expected road width in pixels.
    #[arg(long)]
    road_width: Option<f64>,
    /// Superpixel counts, e.g. `8000,10000,12000`.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    /// Buffer width for centerline matching.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    /// File values first, then `--set`, then the dedicated flags.
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = Some(s);
        }
        if let Some(w) = self.road_width {
            cfg.road_width = Some(w);
        }
        if let Some(ks) = &self.scales {
            cfg.ks = ks.clone();
        }
        if let Some(r) = self.rho {
            cfg.rho = Some(r);
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn paths(image: &Path, refs: &Refs, centerline: Option<&Path>) -> InputPaths {
    InputPaths {
        image: image.to_path_buf(),
        train: refs.train.clone(),
        road_ref: refs.road.clone(),
        centerline_ref: centerline.map(Path::to_path_buf),
    }
}

fn manifest_for(command: &str, id: &str, cfg: &PipelineConfig, inputs: &InputPaths) -> Result<Manifest> {
    let mut m = Manifest::new(command, id, cfg);
    inputs.record(&mut m)?;
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment { image, refs, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            let id = stem(&image);
            let p = paths(&image, &refs, None);
            let inputs = p.load(&id)?;
            let (seg, _) = run_segmentation(&inputs, &cfg, &common.out, manifest_for("segment", &id, &cfg, &p)?)?;
            println!("{id}: {} road pixels -> {}", seg.road.count(), common.out.join("road_mask.png").display());
        }
        Command::Centerline { road_mask, centerline, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            let id = stem(&road_mask);
            let road = io::load_mask(&road_mask).map_err(|e| e.at(Stage::Io))?;
            let reference = centerline.as_ref().map(io::load_mask).transpose().map_err(|e| e.at(Stage::Io))?;
            let mut m = Manifest::new("centerline", &id, &cfg);
            m.add_input("road_mask", &road_mask).map_err(|e| e.at(Stage::Io))?;
            if let Some(c) = &centerline {
                m.add_input("centerline_ref", c).map_err(|e| e.at(Stage::Io))?;
            }
            let (ex, report, _) = run_extraction(&id, &road, reference.as_ref(), &cfg, &common.out, m)?;
            match report {
                Some(r) => println!("{}", report_json_line(&r)?),
                None => println!("{id}: {} centerline pixels at sigma {}", ex.centerline().count(), ex.sigma),
            }
        }
        Command::Eval { prediction, reference, area, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            let id = stem(&prediction);
            let pred = io::load_mask(&prediction).map_err(|e| e.at(Stage::Io))?;
            let refm = io::load_mask(&reference).map_err(|e| e.at(Stage::Io))?;
            let report = if area {
                evaluate_area(&id, &pred, &refm)
            } else {
                evaluate(&id, &pred, &refm, cfg.resolve_rho())
            }
            .map_err(|e| e.at(Stage::Eval))?;
            let mut w = ArtifactWriter::new(&common.out).map_err(|e| e.at(Stage::Io))?;
            w.write_json("eval.json", &report).map_err(|e| e.at(Stage::Io))?;
            let mut m = Manifest::new("eval", &id, &cfg);
            m.add_input("prediction", &prediction).map_err(|e| e.at(Stage::Io))?;
            m.add_input("reference", &reference).map_err(|e| e.at(Stage::Io))?;
            m.reports.push(report.clone());
            m.finish(&w).map_err(|e| e.at(Stage::Io))?;
            println!("{}", report_json_line(&report)?);
        }
        Command::Pipeline { input, refs, centerline, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            if input.is_dir() {
                let m = run_dataset(&input, &cfg, &common.out)?;
                for w in &m.warnings {
                    eprintln!("warning: {w}");
                }
                if let Some(a) = &m.aggregate {
                    println!(
                        "{} images: pooled COM {:.4} COR {:.4} Q {:.4}",
                        a.images, a.pooled.com, a.pooled.cor, a.pooled.q
                    );
                }
            } else {
                let id = stem(&input);
                let p = paths(&input, &refs, centerline.as_deref());
                let inputs = p.load(&id)?;
                let run = run_pipeline(&inputs, &cfg, &common.out, manifest_for("pipeline", &id, &cfg, &p)?)?;
                for w in &run.manifest.warnings {
                    eprintln!("warning: {w}");
                }
                match run.report {
                    Some(r) => println!("{}", report_json_line(&r)?),
                    None => println!("{id}: {} centerline pixels", run.extraction.centerline().count()),
                }
            }
        }
        Command::Sweep { image, refs, centerline, sigmas, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            let id = stem(&image);
            let p = paths(&image, &refs, Some(&centerline));
            let inputs = p.load(&id)?;
            let (rows, _) = sweep_sigma(&inputs, &cfg, &sigmas, &common.out, manifest_for("sweep", &id, &cfg, &p)?)?;
            print!("{}", roadex::pipeline::sweep_csv(&rows));
        }
        Command::Synth { preset, spec, size, width, occlusion, noise, id, common } => {
            let cfg = common.config().map_err(|e| e.at(Stage::Config))?;
            let spec = match &spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e).at(Stage::Io))?;
                    SceneSpec::from_json(&text).map_err(|e| e.at(Stage::Synth))?
                }
                None => match preset {
                    Preset::Straight => presets::straight_road(size, width, noise, cfg.seed),
                    Preset::Curve => presets::occluded_curve(size, width, occlusion, noise, cfg.seed),
                },
            };
            let scene = render(&spec).map_err(|e| e.at(Stage::Synth))?;
            let mut w = ArtifactWriter::new(&common.out).map_err(|e| e.at(Stage::Io))?;
            let files = [
                (format!("{id}.png"), io::image_to_png(&scene.image)?),
                (format!("{id}_road.png"), io::mask_to_png(&scene.road)?),
                (format!("{id}_centerline.png"), io::mask_to_png(&scene.centerline)?),
            ];
            for (name, bytes) in &files {
                w.write(name, bytes).map_err(|e| e.at(Stage::Io))?;
            }
            w.write(&format!("{id}.scene.json"), spec.to_json()?.as_bytes())
                .map_err(|e| e.at(Stage::Io))?;
            Manifest::new("synth", &id, &cfg).finish(&w).map_err(|e| e.at(Stage::Io))?;
            println!("{}", common.out.join(format!("{id}.png")).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e.stage() {
                Some(_) => e,
                None => e.at(Stage::Io),
            };
            eprintln!("roadex: error: {e}");
            ExitCode::FAILURE
        }
    }
}

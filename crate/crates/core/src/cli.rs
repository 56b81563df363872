//! Command-line front end. Every subcommand reads and writes plain files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::acontrario::{osa_cvl_with, OsaOptions, DEFAULT_TAU, STRICT_TAU};
use crate::error::{Error, Result};
use crate::eval::{metrics, write_metrics_csv, EvalRecord, MetricsOptions, NegativeRule, NEGATIVE_ERROR_M};
use crate::formats::{read_jsonl, write_jsonl, GeoFile, InputRecord, ResultRecord};
use crate::nullmodel::{calibrate, NullModelParams};
use crate::projection::{scene_centroid, DepthPanorama, SlicePlan};
use crate::simulator::{run_trials, simulate_null_thetas, ScenarioConfig, TrialRecord};

#[derive(Debug, Parser)]
#[command(name = "slice-loc", version, about = "Camera pose from per-slice observations with a-contrario validation")]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Localization,
    Reference,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the camera pose for every record of a slice-pose JSONL file.
    Localize {
        #[arg(long)]
        poses: PathBuf,
        /// Null-model key=value file; built-in defaults when omitted.
        #[arg(long)]
        null_model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TAU, allow_hyphen_values = true)]
        tau: f64,
        /// Use the stricter threshold of -1.
        #[arg(long, conflicts_with = "tau")]
        strict: bool,
        /// Measure errors against the heading-derived imaging ray.
        #[arg(long)]
        global_heading: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run seeded synthetic trials and write one result per trial.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        null_model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TAU, allow_hyphen_values = true)]
        tau: f64,
        #[arg(long, conflicts_with = "tau")]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the background error model to simulated naive poses.
    CalibrateNull {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 260_000)]
        samples: usize,
        #[arg(long, default_value_t = 50.0)]
        t1: f64,
        #[arg(long, default_value_t = 132.0)]
        t2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize result records into a metrics CSV.
    Evaluate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Localization)]
        mode: EvalMode,
        #[arg(long, default_value_t = DEFAULT_TAU, allow_hyphen_values = true)]
        tau: f64,
        /// Error statistics over every estimate, not only valid ones.
        #[arg(long)]
        include_invalid: bool,
        /// Localization error (m) above which a result counts as failed.
        #[arg(long, default_value_t = NEGATIVE_ERROR_M)]
        max_error_m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project each slice's visible depth onto the reference map.
    Project {
        #[arg(long)]
        pano: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        geo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a slice plan file.
    SlicePlan {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 90.0)]
        hfov: f64,
        #[arg(long, default_value_t = 90.0)]
        vfov: f64,
        /// Zenith angle of the slice centers, degrees.
        #[arg(long, default_value_t = 135.0)]
        zenith: f64,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn open(p: &Path) -> Result<BufReader<File>> {
    File::open(p)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    File::create(p)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn null_model(p: &Option<PathBuf>) -> Result<NullModelParams> {
    match p {
        Some(p) => NullModelParams::from_key_values(&read_text(p)?),
        None => Ok(NullModelParams::default()),
    }
}

fn scenario(p: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match p {
        Some(p) => ScenarioConfig::from_key_values(&read_text(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

pub fn localize_record(rec: &InputRecord, opts: &OsaOptions, p: &NullModelParams) -> Result<ResultRecord> {
    let poses = rec.slice_poses()?;
    let result = osa_cvl_with(&poses, opts, p)?;
    let mut out = ResultRecord::from_result(rec.id.clone(), &result);
    out.camera_gt = rec.camera_gt;
    out.meters_per_pixel = Some(rec.meters_per_pixel);
    out.reference_correct = rec.reference_correct;
    Ok(out)
}

pub fn trial_record(t: &TrialRecord, meters_per_pixel: f64) -> ResultRecord {
    let mut out = ResultRecord::from_result(format!("trial-{}", t.trial), &t.result);
    out.camera_gt = Some(t.scene.ground_truth.into());
    out.meters_per_pixel = Some(meters_per_pixel);
    out.reference_correct = Some(t.reference_correct());
    out.trial = Some(t.trial);
    out.location_error_m = t.location_error_m;
    out.heading_error_deg = t.heading_error_deg;
    out.inlier_precision = t.inlier_precision;
    out.inlier_recall = t.inlier_recall;
    out
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Localize {
            poses,
            null_model: nm,
            tau,
            strict,
            global_heading,
            out,
        } => {
            let params = null_model(&nm)?;
            let inputs: Vec<InputRecord> = read_jsonl(open(&poses)?)?;
            let opts = OsaOptions {
                tau: if strict { STRICT_TAU } else { tau },
                global_heading,
                bounds: None,
            };
            let results: Vec<ResultRecord> = pool(threads)?.install(|| {
                inputs
                    .par_iter()
                    .map(|r| localize_record(r, &opts, &params))
                    .collect::<Result<_>>()
            })?;
            write_jsonl(create(&out)?, &results)
        }
        Command::Simulate {
            config,
            trials,
            seed,
            null_model: nm,
            tau,
            strict,
            out,
        } => {
            let mut cfg = scenario(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let params = null_model(&nm)?;
            let tau = if strict { STRICT_TAU } else { tau };
            let records = run_trials(&cfg, trials, tau, &params, threads)?;
            let rows: Vec<ResultRecord> = records
                .iter()
                .map(|t| trial_record(t, cfg.meters_per_pixel))
                .collect();
            write_jsonl(create(&out)?, &rows)
        }
        Command::CalibrateNull {
            config,
            samples,
            t1,
            t2,
            out,
        } => {
            let mut cfg = scenario(&config)?;
            cfg.outlier_fraction = 1.0;
            let thetas = simulate_null_thetas(&cfg, samples)?;
            let params = calibrate(&thetas, t1, t2)?;
            std::fs::write(&out, params.to_key_values())
                .map_err(|e| Error::Io(format!("{}: {e}", out.display())))
        }
        Command::Evaluate {
            records,
            mode,
            tau,
            include_invalid,
            max_error_m,
            out,
        } => {
            let rows: Vec<ResultRecord> = read_jsonl(open(&records)?)?;
            let evals = rows.iter().map(EvalRecord::from_result).collect::<Result<Vec<_>>>()?;
            let rule = match mode {
                EvalMode::Localization => NegativeRule::LocalizationError(max_error_m),
                EvalMode::Reference => NegativeRule::ReferenceIncorrect,
            };
            let opts = MetricsOptions {
                include_invalid,
                tau,
                rule: Some(rule),
                ..Default::default()
            };
            let report = metrics(&evals, &opts)?;
            write_metrics_csv(create(&out)?, &[("all".to_string(), report)])
        }
        Command::Project { pano, plan, geo, out } => {
            let pano = DepthPanorama::read_pgm(open(&pano)?)?;
            let plan = SlicePlan::from_key_values(&read_text(&plan)?)?;
            let geo = GeoFile::from_key_values(&read_text(&geo)?)?;
            let centroids = pool(threads)?.install(|| {
                (0..plan.n)
                    .into_par_iter()
                    .map(|i| scene_centroid(&plan, i, &pano, geo.camera_world(), &geo.transform))
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["slice_index", "hfov_center_deg", "x", "y"])?;
            for (i, c) in centroids.iter().enumerate() {
                let (x, y) = c.map(|p| (p.x.to_string(), p.y.to_string())).unwrap_or_default();
                w.write_record([i.to_string(), plan.center(i).to_degrees().to_string(), x, y])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::SlicePlan {
            n,
            hfov,
            vfov,
            zenith,
            size,
            out,
        } => {
            let plan = SlicePlan {
                n,
                hfov_deg: hfov,
                vfov_deg: vfov,
                vfov_center: zenith.to_radians(),
                slice_size: size,
            };
            plan.validate()?;
            std::fs::write(&out, plan.to_key_values())
                .map_err(|e| Error::Io(format!("{}: {e}", out.display())))
        }
    }
}

/// Single-line JSON description of a failure.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

//! Synthetic slice-pose scenes: consistent inliers mixed with outliers drawn
//! from the null search region, plus the null-error simulation used to
//! calibrate the background model.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, trial, tag)`, so
//! a trial's scene does not depend on which thread produced it.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::acontrario::{osa_cvl_with, OsaOptions, RigidityResult};
use crate::error::{Error, Result};
use crate::geometry::{
    geometric_error, point_in_sector, ray_intersection, slice_center, AnnularSector, CameraPose,
    CompassBearing, ErrorMode, ImagePoint, SlicePose,
};
use crate::nullmodel::{parse_key_values, NullModelParams};

const TAG_SCENE: u64 = 1;
const TAG_NULL: u64 = 2;

/// Deterministic generator for one `(seed, trial, tag)` triple.
pub fn substream(seed: u64, trial: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 8) | (tag & 0xff));
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub seed: u64,
    pub outlier_fraction: f64,
    /// Degrees.
    pub bearing_noise_sigma: f64,
    /// Pixels.
    pub location_noise_sigma: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Degrees of heading-prior uncertainty on either side.
    pub heading_prior_half_width: f64,
    /// Null/outlier sector radii (pixels) and half angle (degrees).
    pub sector_inner: f64,
    pub sector_outer: f64,
    pub sector_half_angle: f64,
    pub meters_per_pixel: f64,
    /// Reference image side length, pixels.
    pub image_size: f64,
    /// Ground-truth camera jitter around the image center, pixels.
    pub center_jitter: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 12,
            seed: 0,
            outlier_fraction: 1.0 / 3.0,
            bearing_noise_sigma: 1.0,
            location_noise_sigma: 3.0,
            range_min: 30.0,
            range_max: 250.0,
            heading_prior_half_width: 45.0,
            sector_inner: 2.0,
            sector_outer: 300.0,
            sector_half_angle: 90.0,
            meters_per_pixel: 0.11,
            image_size: 640.0,
            center_jitter: 160.0,
        }
    }
}

impl ScenarioConfig {
    /// Pure-null scenes: every slice is an outlier.
    pub fn null() -> Self {
        ScenarioConfig {
            outlier_fraction: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n < 3 {
            return bad("need at least 3 slices");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 1]");
        }
        if !(self.range_min >= 0.0 && self.range_min < self.range_max) {
            return bad("need 0 <= range_min < range_max");
        }
        if !(self.bearing_noise_sigma >= 0.0 && self.location_noise_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.heading_prior_half_width >= 0.0 && self.heading_prior_half_width <= 180.0) {
            return bad("heading prior half width must lie in [0, 180]");
        }
        if !(self.meters_per_pixel > 0.0) {
            return bad("meters per pixel must be positive");
        }
        AnnularSector::new(
            ImagePoint::default(),
            self.sector_inner,
            self.sector_outer,
            CompassBearing::NORTH,
            self.sector_half_angle,
        )?;
        Ok(())
    }

    pub fn inlier_count(&self) -> usize {
        ((1.0 - self.outlier_fraction) * self.n as f64).round() as usize
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut c = ScenarioConfig::default();
        for (key, value) in &kv {
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("config `{key}`: {e}")))
            };
            match key.as_str() {
                "n" => c.n = value.parse().map_err(|e| Error::Parse(format!("config `n`: {e}")))?,
                "seed" => {
                    c.seed = value.parse().map_err(|e| Error::Parse(format!("config `seed`: {e}")))?
                }
                "outlier_fraction" => c.outlier_fraction = num()?,
                "bearing_noise_sigma" => c.bearing_noise_sigma = num()?,
                "location_noise_sigma" => c.location_noise_sigma = num()?,
                "range_min" => c.range_min = num()?,
                "range_max" => c.range_max = num()?,
                "heading_prior_half_width" => c.heading_prior_half_width = num()?,
                "sector_inner" => c.sector_inner = num()?,
                "sector_outer" => c.sector_outer = num()?,
                "sector_half_angle" => c.sector_half_angle = num()?,
                "meters_per_pixel" => c.meters_per_pixel = num()?,
                "image_size" => c.image_size = num()?,
                "center_jitter" => c.center_jitter = num()?,
                other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "seed={}", self.seed);
        for (k, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("bearing_noise_sigma", self.bearing_noise_sigma),
            ("location_noise_sigma", self.location_noise_sigma),
            ("range_min", self.range_min),
            ("range_max", self.range_max),
            ("heading_prior_half_width", self.heading_prior_half_width),
            ("sector_inner", self.sector_inner),
            ("sector_outer", self.sector_outer),
            ("sector_half_angle", self.sector_half_angle),
            ("meters_per_pixel", self.meters_per_pixel),
            ("image_size", self.image_size),
            ("center_jitter", self.center_jitter),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: CameraPose,
    pub poses: Vec<SlicePose>,
    pub inlier_mask: Vec<bool>,
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

fn sample_in_sector(rng: &mut ChaCha8Rng, sector: &AnnularSector) -> ImagePoint {
    let (r1, r2) = (sector.inner_radius, sector.outer_radius);
    loop {
        let r = rng.random_range(r1 * r1..=r2 * r2).sqrt();
        let off = rng.random_range(-sector.half_angle..=sector.half_angle);
        let p = sector.origin + sector.axis.rotated(off).to_vector() * r;
        // rounding can push a draw a hair outside the sector; redraw it
        if point_in_sector(p, sector) {
            return p;
        }
    }
}

fn build_scene(cfg: &ScenarioConfig, outlier_fraction: f64, rng: &mut ChaCha8Rng) -> SyntheticScene {
    let half = cfg.image_size / 2.0;
    let jx = rng.random_range(-cfg.center_jitter..=cfg.center_jitter);
    let jy = rng.random_range(-cfg.center_jitter..=cfg.center_jitter);
    let camera = ImagePoint::new(half + jx, half + jy);
    let heading = CompassBearing::from_degrees(rng.random_range(0.0..360.0));

    let n = cfg.n;
    let inliers = ((1.0 - outlier_fraction) * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut inlier_mask = vec![true; n];
    for &i in &order[..n - inliers] {
        inlier_mask[i] = false;
    }

    let poses = (0..n)
        .map(|i| {
            let look = heading.rotated(slice_center(i, n).to_degrees());
            let (location, bearing) = if inlier_mask[i] {
                let r = rng.random_range(cfg.range_min..=cfg.range_max);
                let noise = ImagePoint::new(
                    gaussian(rng, cfg.location_noise_sigma),
                    gaussian(rng, cfg.location_noise_sigma),
                );
                let b = look.opposite().rotated(gaussian(rng, cfg.bearing_noise_sigma));
                (camera + look.to_vector() * r + noise, b)
            } else {
                let sector = AnnularSector {
                    origin: camera,
                    inner_radius: cfg.sector_inner,
                    outer_radius: cfg.sector_outer,
                    axis: look,
                    half_angle: cfg.sector_half_angle,
                };
                let p = sample_in_sector(rng, &sector);
                let w = cfg.heading_prior_half_width;
                let off = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
                (p, look.opposite().rotated(off))
            };
            SlicePose::new(i, n, location, bearing)
        })
        .collect();

    SyntheticScene {
        ground_truth: CameraPose {
            location: camera,
            heading,
        },
        poses,
        inlier_mask,
    }
}

/// Scene for trial 0 of `cfg`.
pub fn generate_scene(cfg: &ScenarioConfig) -> Result<SyntheticScene> {
    generate_trial_scene(cfg, 0)
}

pub fn generate_trial_scene(cfg: &ScenarioConfig, trial: u64) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, trial, TAG_SCENE);
    Ok(build_scene(cfg, cfg.outlier_fraction, &mut rng))
}

/// Geometric errors of "naive" poses: in each pure-null scene the first
/// intersecting pair fixes a camera point and every other pose contributes
/// its error at that point.
pub fn simulate_null_thetas(cfg: &ScenarioConfig, n_samples: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(n_samples + cfg.n);
    let mut scene_index = 0u64;
    while out.len() < n_samples {
        let mut rng = substream(cfg.seed, scene_index, TAG_NULL);
        scene_index += 1;
        let scene = build_scene(cfg, 1.0, &mut rng);
        let poses = &scene.poses;
        let found = (0..poses.len())
            .flat_map(|i| (i + 1..poses.len()).map(move |j| (i, j)))
            .find_map(|(i, j)| ray_intersection(&poses[i], &poses[j]).map(|p| (i, j, p)));
        let Some((i, j, point)) = found else {
            continue;
        };
        for (k, pose) in poses.iter().enumerate() {
            if k == i || k == j {
                continue;
            }
            if let Ok(theta) = geometric_error(point, pose, ErrorMode::PerSliceBearing) {
                out.push(theta);
            }
        }
    }
    out.truncate(n_samples);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub scene: SyntheticScene,
    pub result: RigidityResult,
    /// Meters, from the refined pose whether or not it passed the threshold.
    pub location_error_m: Option<f64>,
    /// Degrees.
    pub heading_error_deg: Option<f64>,
    pub inlier_precision: Option<f64>,
    pub inlier_recall: Option<f64>,
}

impl TrialRecord {
    /// Whether the scene actually carries information about the camera.
    pub fn reference_correct(&self) -> bool {
        self.scene.inlier_mask.iter().any(|&m| m)
    }
}

fn precision_recall(selected: &[usize], mask: &[bool]) -> (Option<f64>, Option<f64>) {
    let hits = selected.iter().filter(|&&i| mask.get(i).copied().unwrap_or(false)).count();
    let truth = mask.iter().filter(|&&m| m).count();
    let precision = (!selected.is_empty()).then(|| hits as f64 / selected.len() as f64);
    let recall = (truth > 0).then(|| hits as f64 / truth as f64);
    (precision, recall)
}

pub fn run_trial(
    cfg: &ScenarioConfig,
    trial: u64,
    opts: &OsaOptions,
    params: &NullModelParams,
) -> Result<TrialRecord> {
    let scene = generate_trial_scene(cfg, trial)?;
    let result = osa_cvl_with(&scene.poses, opts, params)?;
    let gt = scene.ground_truth;
    let (location_error_m, heading_error_deg) = match result.raw_camera {
        Some(c) => (
            Some(c.location.distance(gt.location) * cfg.meters_per_pixel),
            Some(c.heading.angular_distance(gt.heading)),
        ),
        None => (None, None),
    };
    let (inlier_precision, inlier_recall) = precision_recall(&result.inlier_indices, &scene.inlier_mask);
    Ok(TrialRecord {
        trial,
        scene,
        result,
        location_error_m,
        heading_error_deg,
        inlier_precision,
        inlier_recall,
    })
}

/// Runs `trials` independent trials on `threads` workers (0 = rayon default).
/// Output is ordered by trial index.
pub fn run_trials(
    cfg: &ScenarioConfig,
    trials: usize,
    tau: f64,
    params: &NullModelParams,
    threads: usize,
) -> Result<Vec<TrialRecord>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    cfg.validate()?;
    let opts = OsaOptions {
        tau,
        bounds: Some((cfg.image_size, cfg.image_size)),
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, &opts, params))
            .collect()
    })
}

//! A-contrario validation of a camera estimate from redundant slice poses.
//!
//! For a candidate camera point, every slice pose gets a geometric error. A
//! k-subset whose largest error is `alpha` is scored by the bound
//!
//! ```text
//! eps(alpha, n, k) = (n - 2) * C(n, k) * C(k, 2) * Q(alpha)^(k - 2)
//! ```
//!
//! where `Q` is the null-model CDF. Scores are handled as `log10` values so
//! that `Q(alpha) = 0` maps cleanly to `-inf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    camera_heading, geometric_error, linear_location, ray_intersection, refine_location,
    CameraPose, ErrorMode, ImagePoint, SlicePose,
};
use crate::nullmodel::{q_cdf, NullModelParams};

/// Default meaningfulness threshold on `log10(eps)`.
pub const DEFAULT_TAU: f64 = 0.0;
/// Stricter preset.
pub const STRICT_TAU: f64 = -1.0;
/// Geometric errors below this many degrees are round-off and count as zero.
pub const ZERO_ERROR_DEG: f64 = 1e-9;

/// The validity decision: a score is meaningful when strictly below `tau`.
pub fn is_meaningful(lg_eps: f64, tau: f64) -> bool {
    lg_eps < tau
}

/// Outcome of [`osa_cvl`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityResult {
    /// `slice_index` values of the selected inliers, ascending.
    pub inlier_indices: Vec<usize>,
    /// Largest geometric error inside the inlier set at the winning candidate.
    pub alpha: f64,
    /// `log10` of the best bound; `+inf` when no candidate was found.
    pub lg_eps: f64,
    /// Refined pose, present only when the estimate is meaningful.
    pub camera: Option<CameraPose>,
    /// Refined pose regardless of the threshold, for unfiltered reporting.
    pub raw_camera: Option<CameraPose>,
    pub valid: bool,
    /// Pose pairs whose rays intersected and produced a camera candidate.
    pub pairs_tested: usize,
    /// The refined location fell outside the configured image bounds.
    pub out_of_bounds: bool,
}

impl RigidityResult {
    pub fn rejected(pairs_tested: usize) -> Self {
        RigidityResult {
            inlier_indices: Vec::new(),
            alpha: f64::INFINITY,
            lg_eps: f64::INFINITY,
            camera: None,
            raw_camera: None,
            valid: false,
            pairs_tested,
            out_of_bounds: false,
        }
    }

    /// `true` when no pair of rays produced a usable camera candidate.
    pub fn no_valid_pairs(&self) -> bool {
        self.raw_camera.is_none() && self.lg_eps == f64::INFINITY
    }

    /// Converts the "no candidate at all" outcome into [`Error::NoValidPairs`].
    pub fn require_candidate(self) -> Result<Self> {
        if self.no_valid_pairs() {
            Err(Error::NoValidPairs)
        } else {
            Ok(self)
        }
    }
}

/// Largest geometric error among `subset` (positions into `poses`).
pub fn rigidity_alpha(
    poses: &[SlicePose],
    subset: &[usize],
    camera: ImagePoint,
    mode: ErrorMode,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptyInput);
    }
    subset.iter().try_fold(0.0_f64, |acc, &i| {
        Ok(acc.max(geometric_error(camera, &poses[i], mode)?))
    })
}

fn binomial_exact(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // exact at every step: c * (n - i) is divisible by i + 1
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

fn log10_binomial(n: usize, k: usize) -> f64 {
    if n <= 64 {
        (binomial_exact(n as u64, k as u64) as f64).log10()
    } else {
        let k = k.min(n - k);
        (0..k)
            .map(|i| ((n - i) as f64).log10() - ((i + 1) as f64).log10())
            .sum()
    }
}

/// `log10((n - 2) * C(n, k) * C(k, 2))`, the number of tests behind a k-subset.
pub fn log_num_tests(n: usize, k: usize) -> Result<f64> {
    check_arity(n, k)?;
    if n <= 64 {
        let count = (n as u128 - 2) * binomial_exact(n as u64, k as u64) * binomial_exact(k as u64, 2);
        Ok((count as f64).log10())
    } else {
        Ok(((n - 2) as f64).log10() + log10_binomial(n, k) + log10_binomial(k, 2))
    }
}

fn check_arity(n: usize, k: usize) -> Result<()> {
    if n < 3 || k < 3 || k > n {
        Err(Error::InvalidArity { n, k })
    } else {
        Ok(())
    }
}

/// `log10(eps)` for a k-subset of n poses whose null probability is `q`.
pub fn log_epsilon_from_probability(q: f64, n: usize, k: usize) -> Result<f64> {
    let tests = log_num_tests(n, k)?;
    if q <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(tests + (k - 2) as f64 * q.log10())
}

pub fn log_epsilon(alpha: f64, n: usize, k: usize, p: &NullModelParams) -> Result<f64> {
    log_epsilon_from_probability(q_cdf(alpha, p), n, k)
}

/// Best subset for one camera point.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetChoice {
    /// Positions into the pose list, ascending.
    pub indices: Vec<usize>,
    pub alpha: f64,
    pub lg_eps: f64,
}

/// Ranks poses by geometric error at `camera` and scores every prefix of
/// length 3..=n; the best prefix is optimal among all subsets of its size.
/// Ties go to the larger subset.
pub fn optimal_subset(
    poses: &[SlicePose],
    camera: ImagePoint,
    p: &NullModelParams,
    mode: ErrorMode,
) -> Result<SubsetChoice> {
    let n = poses.len();
    if n < 3 {
        return Err(Error::InvalidArity { n, k: 3 });
    }
    let errors = poses
        .iter()
        .map(|pose| {
            geometric_error(camera, pose, mode).map(|e| if e < ZERO_ERROR_DEG { 0.0 } else { e })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));

    let mut best_k = 0;
    let mut best_lg = f64::INFINITY;
    for k in 3..=n {
        let lg = log_epsilon(errors[order[k - 1]], n, k, p)?;
        if lg <= best_lg {
            best_lg = lg;
            best_k = k;
        }
    }
    let mut indices = order[..best_k].to_vec();
    indices.sort_unstable();
    Ok(SubsetChoice {
        indices,
        alpha: errors[order[best_k - 1]],
        lg_eps: best_lg,
    })
}

/// Knobs for [`osa_cvl_with`].
#[derive(Clone, Copy, Debug)]
pub struct OsaOptions {
    pub tau: f64,
    /// Measure errors against the heading-derived ray instead of each slice's
    /// own bearing.
    pub global_heading: bool,
    /// Reference image `(width, height)` in pixels, used only for the
    /// out-of-bounds flag.
    pub bounds: Option<(f64, f64)>,
}

impl Default for OsaOptions {
    fn default() -> Self {
        OsaOptions {
            tau: DEFAULT_TAU,
            global_heading: false,
            bounds: None,
        }
    }
}

pub fn osa_cvl(poses: &[SlicePose], tau: f64, p: &NullModelParams) -> Result<RigidityResult> {
    osa_cvl_with(
        poses,
        &OsaOptions {
            tau,
            ..Default::default()
        },
        p,
    )
}

/// Exhaustive pair-sampling estimator.
///
/// Every pose pair whose rays meet (lexicographic order) proposes a camera
/// point; the optimal subset at each point is scored and the strictly best
/// score wins. A winning score below `tau` yields a refined location over the
/// inliers and a heading averaged over all poses.
pub fn osa_cvl_with(
    poses: &[SlicePose],
    opts: &OsaOptions,
    p: &NullModelParams,
) -> Result<RigidityResult> {
    let n = poses.len();
    if n < 3 {
        return Err(Error::InvalidArity { n, k: 3 });
    }
    let mode = if opts.global_heading {
        ErrorMode::GlobalHeading(camera_heading(poses)?)
    } else {
        ErrorMode::PerSliceBearing
    };

    let mut pairs_tested = 0;
    let mut best: Option<(SubsetChoice, ImagePoint)> = None;
    for i in 0..n {
        for j in i + 1..n {
            let Some(point) = ray_intersection(&poses[i], &poses[j]) else {
                continue;
            };
            pairs_tested += 1;
            // a third pose sitting exactly on the candidate has no defined error
            let Ok(choice) = optimal_subset(poses, point, p, mode) else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _)| choice.lg_eps < b.lg_eps) {
                best = Some((choice, point));
            }
        }
    }

    let Some((choice, candidate)) = best else {
        return Ok(RigidityResult::rejected(pairs_tested));
    };

    let heading = match mode {
        ErrorMode::GlobalHeading(h) => h,
        ErrorMode::PerSliceBearing => camera_heading(poses)?,
    };
    let inliers: Vec<SlicePose> = choice.indices.iter().map(|&i| poses[i]).collect();
    let location = match linear_location(&inliers) {
        Ok(init) => refine_location(&inliers, Some(init))?,
        Err(_) => candidate,
    };
    let raw = CameraPose { location, heading };
    let valid = is_meaningful(choice.lg_eps, opts.tau);
    let out_of_bounds = opts.bounds.is_some_and(|(w, h)| {
        !(location.x >= 0.0 && location.x <= w && location.y >= 0.0 && location.y <= h)
    });
    let mut inlier_indices: Vec<usize> = choice.indices.iter().map(|&i| poses[i].slice_index).collect();
    inlier_indices.sort_unstable();

    Ok(RigidityResult {
        inlier_indices,
        alpha: choice.alpha,
        lg_eps: choice.lg_eps,
        camera: valid.then_some(raw),
        raw_camera: Some(raw),
        valid,
        pairs_tested,
        out_of_bounds,
    })
}

/// Checks the two facts the bound rests on for a chosen subset at `camera`:
/// the log-domain score equals the direct product form, and every non-sampling
/// member's null probability is bounded by `Q(alpha)`, so their product is at
/// most `Q(alpha)^(k-2)`. The two members with the smallest errors are taken as
/// the sampling pair.
pub fn nfa_upper_bound_check(
    poses: &[SlicePose],
    camera: ImagePoint,
    subset: &[usize],
    alpha: f64,
    p: &NullModelParams,
) -> bool {
    let n = poses.len();
    let k = subset.len();
    let Ok(lg) = log_epsilon(alpha, n, k, p) else {
        return false;
    };
    let q_alpha = q_cdf(alpha, p);

    let direct = (n - 2) as f64
        * binomial_f64(n, k)
        * binomial_f64(k, 2)
        * q_alpha.powi((k - 2) as i32);
    let identity_holds = if direct == 0.0 {
        lg == f64::NEG_INFINITY
    } else {
        (10f64.powf(lg) - direct).abs() <= 1e-9 * direct
    };

    let Ok(mut errors) = subset
        .iter()
        .map(|&i| geometric_error(camera, &poses[i], ErrorMode::PerSliceBearing))
        .collect::<Result<Vec<f64>>>()
    else {
        return false;
    };
    let rigid = errors.iter().all(|&e| e <= alpha);
    errors.sort_by(f64::total_cmp);
    let product: f64 = errors[2..].iter().map(|&e| q_cdf(e, p)).product();
    let bounded = product <= q_alpha.powi((k - 2) as i32) * (1.0 + 1e-12);

    identity_holds && rigid && bounded
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

//! Batch metrics over localization results.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::formats::ResultRecord;
use crate::geometry::CameraPose;

/// Localization error beyond which a result counts as a failure.
pub const NEGATIVE_ERROR_M: f64 = 10.0;
pub const DEFAULT_THRESHOLDS: [f64; 5] = [1.0, 3.0, 5.0, 8.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    /// Present only for valid results.
    pub predicted: Option<CameraPose>,
    /// Estimate regardless of validity, for unfiltered reporting.
    pub raw: Option<CameraPose>,
    pub valid: bool,
    pub lg_eps: f64,
    pub ground_truth: Option<CameraPose>,
    pub reference_correct: Option<bool>,
    pub meters_per_pixel: f64,
}

impl EvalRecord {
    pub fn from_result(r: &ResultRecord) -> Result<Self> {
        if r.camera.is_some() != r.valid {
            return Err(Error::Parse(format!(
                "record `{}`: camera must be present exactly when valid",
                r.id
            )));
        }
        let meters_per_pixel = match (r.meters_per_pixel, r.camera_gt) {
            (Some(m), _) if m > 0.0 => m,
            (Some(m), _) => {
                return Err(Error::Parse(format!("record `{}`: bad meters_per_pixel {m}", r.id)))
            }
            (None, Some(_)) => {
                return Err(Error::Parse(format!(
                    "record `{}`: camera_gt given without meters_per_pixel",
                    r.id
                )))
            }
            // no ground truth, so the scale is never used
            (None, None) => 1.0,
        };
        Ok(EvalRecord {
            id: r.id.clone(),
            predicted: r.camera.map(Into::into),
            raw: r.camera_raw.or(r.camera).map(Into::into),
            valid: r.valid,
            lg_eps: r.lg_eps,
            ground_truth: r.camera_gt.map(Into::into),
            reference_correct: r.reference_correct,
            meters_per_pixel,
        })
    }
}

pub fn localization_error(pred: &CameraPose, gt: &CameraPose, mpp: f64) -> f64 {
    pred.location.distance(gt.location) * mpp
}

pub fn orientation_error(pred: &CameraPose, gt: &CameraPose) -> f64 {
    pred.heading.angular_distance(gt.heading)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NegativeRule {
    /// Actually negative when the unfiltered estimate is missing or off by
    /// more than this many meters.
    LocalizationError(f64),
    /// Actually negative when `reference_correct` is false.
    ReferenceIncorrect,
}

impl NegativeRule {
    pub fn localization() -> Self {
        NegativeRule::LocalizationError(NEGATIVE_ERROR_M)
    }

    fn is_negative(&self, r: &EvalRecord) -> Result<bool> {
        match *self {
            NegativeRule::LocalizationError(max_m) => {
                let gt = r.ground_truth.as_ref().ok_or_else(|| {
                    Error::InvalidConfig(format!("record `{}` has no ground truth", r.id))
                })?;
                Ok(match &r.raw {
                    Some(p) => !(localization_error(p, gt, r.meters_per_pixel) <= max_m),
                    None => true,
                })
            }
            NegativeRule::ReferenceIncorrect => r.reference_correct.map(|c| !c).ok_or_else(|| {
                Error::InvalidConfig(format!("record `{}` has no reference_correct flag", r.id))
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfusionReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub potn: Option<f64>,
    pub rotn: Option<f64>,
    pub f1: Option<f64>,
    pub acc: f64,
}

impl ConfusionReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        let total = tp + fp + tn + fn_;
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let potn = ratio(tn, tn + fn_);
        let rotn = ratio(tn, tn + fp);
        let f1 = match (potn, rotn) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        Ok(ConfusionReport {
            tp,
            fp,
            tn,
            fn_,
            potn,
            rotn,
            f1,
            acc: (tp + tn) as f64 / total as f64,
        })
    }
}

/// A record is predicted negative iff `lg_eps >= tau`.
pub fn confusion_and_rates(records: &[EvalRecord], tau: f64, rule: NegativeRule) -> Result<ConfusionReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for r in records {
        let predicted_negative = !(r.lg_eps < tau);
        match (predicted_negative, rule.is_negative(r)?) {
            (false, false) => tp += 1,
            (false, true) => fp += 1,
            (true, true) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    ConfusionReport::from_counts(tp, fp, tn, fn_)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsOptions {
    pub meter_thresholds: Vec<f64>,
    pub degree_thresholds: Vec<f64>,
    /// Compute error statistics over every record with an estimate, not only
    /// the valid ones.
    pub include_invalid: bool,
    pub tau: f64,
    pub rule: Option<NegativeRule>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            meter_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            degree_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            include_invalid: false,
            tau: crate::acontrario::DEFAULT_TAU,
            rule: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
}

impl ErrorStats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(ErrorStats {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: v[(v.len() - 1) / 2],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub records: usize,
    pub valid: usize,
    /// Records that contributed to the error statistics.
    pub evaluated: usize,
    /// Percent of records declared valid.
    pub pos: f64,
    pub location: Option<ErrorStats>,
    pub orientation: Option<ErrorStats>,
    /// `(threshold, percent of evaluated records strictly below it)`.
    pub location_below: Vec<(f64, Option<f64>)>,
    pub orientation_below: Vec<(f64, Option<f64>)>,
    pub confusion: Option<ConfusionReport>,
}

impl MetricsReport {
    /// Same quantity as [`MetricsReport::pos`] under its other name.
    pub fn por(&self) -> f64 {
        self.pos
    }
}

fn percent_below(values: &[f64], thresholds: &[f64]) -> Vec<(f64, Option<f64>)> {
    thresholds
        .iter()
        .map(|&t| {
            let pct = (!values.is_empty())
                .then(|| 100.0 * values.iter().filter(|&&v| v < t).count() as f64 / values.len() as f64);
            (t, pct)
        })
        .collect()
}

pub fn metrics(records: &[EvalRecord], opts: &MetricsOptions) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let valid = records.iter().filter(|r| r.valid).count();
    let (mut loc, mut ori) = (Vec::new(), Vec::new());
    for r in records {
        let pose = if opts.include_invalid { r.raw.as_ref() } else { r.predicted.as_ref() };
        if let (Some(p), Some(gt)) = (pose, r.ground_truth.as_ref()) {
            loc.push(localization_error(p, gt, r.meters_per_pixel));
            ori.push(orientation_error(p, gt));
        }
    }
    let confusion = match opts.rule {
        Some(rule) => Some(confusion_and_rates(records, opts.tau, rule)?),
        None => None,
    };
    Ok(MetricsReport {
        records: records.len(),
        valid,
        evaluated: loc.len(),
        pos: 100.0 * valid as f64 / records.len() as f64,
        location: ErrorStats::of(&loc),
        orientation: ErrorStats::of(&ori),
        location_below: percent_below(&loc, &opts.meter_thresholds),
        orientation_below: percent_below(&ori, &opts.degree_thresholds),
        confusion,
    })
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names and values for one CSV row; undefined values are empty.
pub fn csv_row(split: &str, m: &MetricsReport) -> Vec<(String, String)> {
    let mut row = vec![
        ("split".to_string(), split.to_string()),
        ("records".into(), m.records.to_string()),
        ("valid".into(), m.valid.to_string()),
        ("evaluated".into(), m.evaluated.to_string()),
        ("pos".into(), m.pos.to_string()),
        ("por".into(), m.por().to_string()),
        ("mean_loc_m".into(), field(m.location.map(|s| s.mean))),
        ("median_loc_m".into(), field(m.location.map(|s| s.median))),
        ("mean_ori_deg".into(), field(m.orientation.map(|s| s.mean))),
        ("median_ori_deg".into(), field(m.orientation.map(|s| s.median))),
    ];
    for &(t, p) in &m.location_below {
        row.push((format!("loc_lt_{t}m"), field(p)));
    }
    for &(t, p) in &m.orientation_below {
        row.push((format!("ori_lt_{t}deg"), field(p)));
    }
    let c = m.confusion;
    let count = |f: fn(&ConfusionReport) -> usize| c.as_ref().map(|c| f(c).to_string()).unwrap_or_default();
    row.push(("tp".into(), count(|c| c.tp)));
    row.push(("fp".into(), count(|c| c.fp)));
    row.push(("tn".into(), count(|c| c.tn)));
    row.push(("fn".into(), count(|c| c.fn_)));
    row.push(("potn".into(), field(c.and_then(|c| c.potn))));
    row.push(("rotn".into(), field(c.and_then(|c| c.rotn))));
    row.push(("f1".into(), field(c.and_then(|c| c.f1))));
    row.push(("acc".into(), field(c.map(|c| c.acc))));
    row
}

/// Header row plus one row per split.
pub fn write_metrics_csv<W: Write>(w: W, splits: &[(String, MetricsReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (i, (name, m)) in splits.iter().enumerate() {
        let row = csv_row(name, m);
        if i == 0 {
            out.write_record(row.iter().map(|(k, _)| k))?;
        }
        out.write_record(row.iter().map(|(_, v)| v))?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of a metrics CSV as `(column, value)` pairs in file order.
pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<Vec<(String, String)>>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect())
        })
        .collect()
}

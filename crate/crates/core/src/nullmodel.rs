//! Background model for the geometric error of a slice pose that carries no
//! scene information.
//!
//! The density is piecewise: constant `C` on `[0, t1)`, linear `A*theta + B` on
//! `[t1, t2)`, and zero beyond `t2`. Angles are in degrees.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullModelParams {
    pub t1: f64,
    pub t2: f64,
    /// Slope of the linear branch, per degree.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Integral of the density over `[0, inf)`.
    pub k: f64,
}

impl Default for NullModelParams {
    /// t1 = 50, t2 = 132, A = -6.7e-5 with B chosen so the density reaches
    /// zero at t2.
    fn default() -> Self {
        let a = -6.7e-5;
        let t2 = 132.0;
        Self::from_linear(50.0, t2, a, -a * t2).expect("default null model is valid")
    }
}

impl NullModelParams {
    /// Builds parameters from the linear branch; `C` and `K` follow from
    /// continuity and normalization.
    pub fn from_linear(t1: f64, t2: f64, a: f64, b: f64) -> Result<Self> {
        let c = a * t1 + b;
        let k = c * t1 + 0.5 * a * (t2 * t2 - t1 * t1) + b * (t2 - t1);
        let p = NullModelParams { t1, t2, a, b, c, k };
        p.validate()?;
        Ok(p)
    }

    /// The linear branch exactly as printed alongside t1/t2 (B = 8.8e-4). The
    /// density goes negative well before t2, so this does not pass
    /// [`validate`](Self::validate); it is kept for comparison only.
    pub fn printed() -> Self {
        let (t1, t2, a, b) = (50.0, 132.0, -6.7e-5, 8.8e-4);
        let c = a * t1 + b;
        let k = c * t1 + 0.5 * a * (t2 * t2 - t1 * t1) + b * (t2 - t1);
        NullModelParams { t1, t2, a, b, c, k }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t1 > 0.0 && self.t1 < self.t2 && self.t2 <= 180.0) {
            return bad(format!("need 0 < t1 < t2 <= 180 (t1={}, t2={})", self.t1, self.t2));
        }
        let tol = 1e-12 * self.c.abs().max(self.b.abs()).max(1e-300);
        if (self.c - (self.a * self.t1 + self.b)).abs() > tol.max(1e-15) {
            return bad(format!("C={} breaks continuity at t1", self.c));
        }
        let at_t1 = self.a * self.t1 + self.b;
        let at_t2 = self.a * self.t2 + self.b;
        if at_t1 < -1e-15 || at_t2 < -1e-15 {
            return bad("density is negative on [t1, t2)".into());
        }
        if !(self.k > 0.0) {
            return bad(format!("normalization K={} must be positive", self.k));
        }
        Ok(())
    }

    pub fn density(&self, theta: f64) -> f64 {
        q_density(theta, self)
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        q_cdf(theta, self)
    }

    /// Parameters rescaled so the density integrates to one.
    pub fn normalized(&self) -> NullModelParams {
        NullModelParams {
            a: self.a / self.k,
            b: self.b / self.k,
            c: self.c / self.k,
            k: 1.0,
            ..*self
        }
    }

    /// Inverse of [`q_cdf`] for `u` in `[0, 1]`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.k;
        let flat_mass = self.c * self.t1;
        if target <= flat_mass {
            return if self.c > 0.0 { target / self.c } else { 0.0 };
        }
        // (a/2)(x^2 - t1^2) + b(x - t1) = target - flat_mass
        let rest = target - flat_mass;
        let x = if self.a.abs() < 1e-300 {
            self.t1 + rest / self.b
        } else {
            let qa = 0.5 * self.a;
            let qb = self.b;
            let qc = -(qa * self.t1 * self.t1 + qb * self.t1) - rest;
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
            // stable form of the root lying in [t1, t2]
            let r1 = (2.0 * qc) / (-qb - disc);
            let r2 = (-qb - disc) / (2.0 * qa);
            if r1 >= self.t1 - 1e-9 && r1 <= self.t2 + 1e-9 {
                r1
            } else {
                r2
            }
        };
        x.clamp(self.t1, self.t2)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for (key, v) in [
            ("t1", self.t1),
            ("t2", self.t2),
            ("A", self.a),
            ("B", self.b),
            ("C", self.c),
            ("K", self.k),
        ] {
            let _ = writeln!(s, "{key}={v:e}");
        }
        s
    }

    /// Reads `t1`, `t2`, `A`, `B` (and optional `C`, `K`, which must be
    /// consistent) from flat `key=value` text.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| Error::Parse(format!("null model is missing `{key}`")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("null model `{key}`: {e}")))
        };
        let (t1, t2, a, b) = (get("t1")?, get("t2")?, get("A")?, get("B")?);
        let p = Self::from_linear(t1, t2, a, b)?;
        for (key, derived) in [("C", p.c), ("K", p.k)] {
            if kv.contains_key(key) {
                let stored = get(key)?;
                if (stored - derived).abs() > 1e-9 * derived.abs().max(1e-12) {
                    return Err(Error::Parse(format!(
                        "null model `{key}`={stored} disagrees with derived {derived}"
                    )));
                }
            }
        }
        Ok(p)
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn q_density(theta: f64, p: &NullModelParams) -> f64 {
    if theta < p.t1 {
        p.c
    } else if theta < p.t2 {
        p.a * theta + p.b
    } else {
        0.0
    }
}

/// Closed-form normalized integral of the density from 0 to `theta`.
pub fn q_cdf(theta: f64, p: &NullModelParams) -> f64 {
    let theta = theta.max(0.0);
    let mass = if theta < p.t1 {
        p.c * theta
    } else if theta < p.t2 {
        p.c * p.t1 + 0.5 * p.a * (theta * theta - p.t1 * p.t1) + p.b * (theta - p.t1)
    } else {
        return 1.0;
    };
    (mass / p.k).clamp(0.0, 1.0)
}

/// Fits the piecewise density to observed error angles using 1-degree bins.
///
/// `(A, B)` is a least-squares line over the bins inside `[t1, t2)`, with `B`
/// raised just enough to keep that line non-negative; `C` then comes from
/// continuity at `t1`. The result is a density over all samples, so `K` is
/// close to one.
pub fn calibrate(theta_samples: &[f64], t1: f64, t2: f64) -> Result<NullModelParams> {
    if theta_samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_CALIBRATION_SAMPLES,
            got: theta_samples.len(),
        });
    }
    if !(t1 > 0.0 && t1 < t2 && t2 <= 180.0) {
        return Err(Error::InvalidConfig(format!("need 0 < t1 < t2 <= 180 (t1={t1}, t2={t2})")));
    }
    let mut counts = vec![0usize; 181];
    for &t in theta_samples {
        if t.is_finite() && t >= 0.0 {
            counts[(t.floor() as usize).min(180)] += 1;
        }
    }
    let total = theta_samples.len() as f64;

    // bins fully inside [t1, t2)
    let first = t1.ceil() as usize;
    let last = t2.floor() as usize;
    let linear: Vec<(f64, f64, usize)> = (first..last)
        .map(|i| (i as f64 + 0.5, counts[i] as f64 / total, counts[i]))
        .collect();
    let nonempty = linear.iter().filter(|(_, _, c)| *c > 0).count();
    if nonempty < 3 {
        return Err(Error::DegenerateFit(format!(
            "only {nonempty} non-empty bins in [{t1}, {t2})"
        )));
    }

    let m = linear.len() as f64;
    let mx = linear.iter().map(|(x, _, _)| x).sum::<f64>() / m;
    let my = linear.iter().map(|(_, y, _)| y).sum::<f64>() / m;
    let sxx: f64 = linear.iter().map(|(x, _, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = linear.iter().map(|(x, y, _)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("linear region spans a single bin".into()));
    }
    let a = sxy / sxx;
    let mut b = my - a * mx;
    let floor = (a * t1 + b).min(a * t2 + b);
    if floor < 0.0 {
        b -= floor;
    }
    NullModelParams::from_linear(t1, t2, a, b).map_err(|e| Error::DegenerateFit(e.to_string()))
}

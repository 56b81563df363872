//! JSONL record schemas for slice-pose inputs and localization results, and
//! the flat key=value geo-reference file.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acontrario::RigidityResult;
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, CompassBearing, ImagePoint, SlicePose};
use crate::nullmodel::parse_key_values;
use crate::projection::GeoTransform;

/// `lg_eps` as a JSON number, or the tokens `"-inf"` / `"inf"`.
pub mod lg_eps_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            Err(serde::ser::Error::custom("lg_eps is NaN"))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Token(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Token(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad lg_eps token `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

impl From<CameraPose> for CameraJson {
    fn from(c: CameraPose) -> Self {
        CameraJson {
            x: c.location.x,
            y: c.location.y,
            heading_deg: c.heading.degrees(),
        }
    }
}

impl From<CameraJson> for CameraPose {
    fn from(c: CameraJson) -> Self {
        CameraPose {
            location: ImagePoint::new(c.x, c.y),
            heading: CompassBearing::from_degrees(c.heading_deg),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub slice_index: usize,
    pub x: f64,
    pub y: f64,
    pub bearing_deg: f64,
    pub hfov_center_deg: f64,
}

impl From<&SlicePose> for PoseJson {
    fn from(p: &SlicePose) -> Self {
        PoseJson {
            slice_index: p.slice_index,
            x: p.location.x,
            y: p.location.y,
            bearing_deg: p.scene_bearing.degrees(),
            hfov_center_deg: p.hfov_center.to_degrees(),
        }
    }
}

/// One localization instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub n: usize,
    pub meters_per_pixel: f64,
    pub poses: Vec<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_gt: Option<CameraJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_correct: Option<bool>,
}

impl InputRecord {
    pub fn slice_poses(&self) -> Result<Vec<SlicePose>> {
        let bad = |m: String| Err(Error::Parse(format!("record `{}`: {m}", self.id)));
        if self.poses.len() > self.n {
            return bad(format!("{} poses but n = {}", self.poses.len(), self.n));
        }
        if !(self.meters_per_pixel > 0.0) {
            return bad("meters_per_pixel must be positive".into());
        }
        let mut out = Vec::with_capacity(self.poses.len());
        for p in &self.poses {
            if p.slice_index >= self.n {
                return bad(format!("slice_index {} not below n = {}", p.slice_index, self.n));
            }
            if ![p.x, p.y, p.bearing_deg, p.hfov_center_deg].iter().all(|v| v.is_finite()) {
                return bad(format!("non-finite value in slice {}", p.slice_index));
            }
            out.push(SlicePose {
                slice_index: p.slice_index,
                location: ImagePoint::new(p.x, p.y),
                scene_bearing: CompassBearing::from_degrees(p.bearing_deg),
                hfov_center: p.hfov_center_deg.to_radians(),
            });
        }
        Ok(out)
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One localization outcome. Fields past `pairs_tested` are optional
/// pass-through and simulator extras.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub valid: bool,
    #[serde(with = "lg_eps_serde")]
    pub lg_eps: f64,
    pub camera: Option<CameraJson>,
    pub inliers: Vec<usize>,
    pub pairs_tested: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub out_of_bounds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_raw: Option<CameraJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_gt: Option<CameraJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meters_per_pixel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_error_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_error_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlier_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlier_recall: Option<f64>,
}

impl ResultRecord {
    pub fn from_result(id: impl Into<String>, r: &RigidityResult) -> Self {
        ResultRecord {
            id: id.into(),
            valid: r.valid,
            lg_eps: r.lg_eps,
            camera: r.camera.map(Into::into),
            inliers: r.inlier_indices.clone(),
            pairs_tested: r.pairs_tested,
            out_of_bounds: r.out_of_bounds,
            camera_raw: r.raw_camera.map(Into::into),
            camera_gt: None,
            meters_per_pixel: None,
            reference_correct: None,
            trial: None,
            location_error_m: None,
            heading_error_deg: None,
            inlier_precision: None,
            inlier_recall: None,
        }
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Geo-reference plus camera placement for centroid projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoFile {
    pub transform: GeoTransform,
    /// Camera height above ground, meters.
    pub camera_height: f64,
}

impl GeoFile {
    /// Camera position in the local frame: over the transform origin.
    pub fn camera_world(&self) -> [f64; 3] {
        [self.transform.origin_x, self.transform.origin_y, self.camera_height]
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str, default: Option<f64>| -> Result<f64> {
            match kv.get(k) {
                Some(v) => v.parse().map_err(|e| Error::Parse(format!("geo `{k}`: {e}"))),
                None => default.ok_or_else(|| Error::Parse(format!("geo file lacks `{k}`"))),
            }
        };
        for k in kv.keys() {
            if !["width", "height", "meters_per_pixel", "camera_height", "origin_x", "origin_y"]
                .contains(&k.as_str())
            {
                return Err(Error::Parse(format!("unknown geo key `{k}`")));
            }
        }
        let mut transform = GeoTransform::new(get("width", None)?, get("height", None)?, get("meters_per_pixel", None)?)?;
        transform.origin_x = get("origin_x", Some(0.0))?;
        transform.origin_y = get("origin_y", Some(0.0))?;
        Ok(GeoFile {
            transform,
            camera_height: get("camera_height", None)?,
        })
    }

    pub fn to_key_values(&self) -> String {
        let t = &self.transform;
        format!(
            "width={}\nheight={}\nmeters_per_pixel={}\ncamera_height={}\norigin_x={}\norigin_y={}\n",
            t.width, t.height, t.meters_per_pixel, self.camera_height, t.origin_x, t.origin_y
        )
    }
}

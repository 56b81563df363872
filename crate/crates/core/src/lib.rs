//! Camera pose estimation from per-slice pose observations.
//!
//! A panorama is cut into `n` slices, each of which independently yields a
//! scene position and a scene-to-camera bearing on an aerial reference map.
//! [`acontrario::osa_cvl`] intersects the bearing rays pair by pair, ranks the
//! remaining slices by geometric error, and keeps the subset whose number of
//! false alarms under a calibrated background model ([`nullmodel`]) is
//! smallest. The estimate is accepted only when that number is meaningful.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acontrario;
pub mod cli;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod nullmodel;
pub mod projection;
pub mod simulator;

pub use acontrario::{osa_cvl, osa_cvl_with, optimal_subset, OsaOptions, RigidityResult};
pub use error::{Error, Result};
pub use geometry::{CameraPose, CompassBearing, ImagePoint, SlicePose};
pub use nullmodel::NullModelParams;

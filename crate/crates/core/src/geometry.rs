//! Planar geometry on the reference map.
//!
//! Image coordinates are x-east / y-south (rows grow downward), so north is
//! the unit vector `(0, -1)` and a compass bearing `b` maps to `(sin b, -cos b)`.
//! Bearings are degrees, clockwise from true north, always kept in `[0, 360)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rays whose unit directions have a cross product below this are parallel.
pub const PARALLEL_EPS: f64 = 1e-9;
/// Points closer than this (pixels) are considered coincident.
pub const COINCIDENT_EPS: f64 = 1e-9;

const REFINE_MAX_ITERS: usize = 50;
const REFINE_MIN_DECREASE_DEG: f64 = 1e-8;

/// Compass bearing in degrees, clockwise from north, normalized to `[0, 360)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct CompassBearing(f64);

impl CompassBearing {
    pub const NORTH: CompassBearing = CompassBearing(0.0);

    pub fn from_degrees(deg: f64) -> Self {
        let mut d = deg.rem_euclid(360.0);
        // rem_euclid rounds tiny negative inputs up to exactly 360
        if d >= 360.0 {
            d = 0.0;
        }
        CompassBearing(d)
    }

    pub fn from_radians(rad: f64) -> Self {
        Self::from_degrees(rad.to_degrees())
    }

    /// Bearing of an image-space direction. `None` for the zero vector.
    pub fn from_vector(dx: f64, dy: f64) -> Option<Self> {
        if dx == 0.0 && dy == 0.0 {
            return None;
        }
        Some(Self::from_degrees(dx.atan2(-dy).to_degrees()))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Rotate clockwise by `deg` degrees.
    pub fn rotated(self, deg: f64) -> Self {
        Self::from_degrees(self.0 + deg)
    }

    pub fn opposite(self) -> Self {
        self.rotated(180.0)
    }

    /// Smallest absolute angle between two bearings, in `[0, 180]`.
    pub fn angular_distance(self, other: CompassBearing) -> f64 {
        let d = (self.0 - other.0).rem_euclid(360.0);
        if d > 180.0 {
            360.0 - d
        } else {
            d
        }
    }

    pub fn to_vector(self) -> ImagePoint {
        bearing_to_vector(self)
    }
}

impl From<f64> for CompassBearing {
    fn from(deg: f64) -> Self {
        CompassBearing::from_degrees(deg)
    }
}

impl From<CompassBearing> for f64 {
    fn from(b: CompassBearing) -> f64 {
        b.0
    }
}

/// A point (or displacement) in reference-map pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        ImagePoint { x, y }
    }

    pub fn dot(self, o: ImagePoint) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: ImagePoint) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: ImagePoint) -> f64 {
        (self - o).norm()
    }
}

impl Add for ImagePoint {
    type Output = ImagePoint;
    fn add(self, o: ImagePoint) -> ImagePoint {
        ImagePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for ImagePoint {
    type Output = ImagePoint;
    fn sub(self, o: ImagePoint) -> ImagePoint {
        ImagePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for ImagePoint {
    type Output = ImagePoint;
    fn mul(self, s: f64) -> ImagePoint {
        ImagePoint::new(self.x * s, self.y * s)
    }
}

/// One per-slice observation: where the slice's scene sits on the map and the
/// compass bearing from that scene toward the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicePose {
    pub slice_index: usize,
    pub location: ImagePoint,
    /// Direction from the scene position to the camera.
    pub scene_bearing: CompassBearing,
    /// Slicing angle of the slice's HFoV center, radians.
    pub hfov_center: f64,
}

impl SlicePose {
    /// Builds the pose of slice `slice_index` out of `n` evenly spaced slices.
    pub fn new(
        slice_index: usize,
        n: usize,
        location: ImagePoint,
        scene_bearing: CompassBearing,
    ) -> Self {
        SlicePose {
            slice_index,
            location,
            scene_bearing,
            hfov_center: slice_center(slice_index, n),
        }
    }

    /// Unit direction from the scene toward the camera.
    pub fn ray_direction(&self) -> ImagePoint {
        bearing_to_vector(self.scene_bearing)
    }

    /// Camera heading implied by this slice alone.
    pub fn implied_heading(&self) -> CompassBearing {
        self.scene_bearing
            .rotated(180.0 - self.hfov_center.to_degrees())
    }
}

/// HFoV center of slice `i` of `n`, radians.
pub fn slice_center(i: usize, n: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}

/// Planar camera pose: location in pixels plus compass heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub location: ImagePoint,
    pub heading: CompassBearing,
}

/// Ring segment centered on `origin`, opening around `axis` by `half_angle`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnularSector {
    pub origin: ImagePoint,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub axis: CompassBearing,
    /// Degrees, in `(0, 180]`.
    pub half_angle: f64,
}

impl AnnularSector {
    pub fn new(
        origin: ImagePoint,
        inner_radius: f64,
        outer_radius: f64,
        axis: CompassBearing,
        half_angle: f64,
    ) -> Result<Self> {
        if !(inner_radius >= 0.0 && inner_radius < outer_radius) {
            return Err(Error::InvalidConfig(format!(
                "sector radii must satisfy 0 <= d1 < d2 (got {inner_radius}, {outer_radius})"
            )));
        }
        if !(half_angle > 0.0 && half_angle <= 180.0) {
            return Err(Error::InvalidConfig(format!(
                "sector half angle {half_angle} outside (0, 180]"
            )));
        }
        Ok(AnnularSector {
            origin,
            inner_radius,
            outer_radius,
            axis,
            half_angle,
        })
    }

    pub fn contains(&self, p: ImagePoint) -> bool {
        point_in_sector(p, self)
    }
}

/// Which expected ray the geometric error is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorMode {
    /// Expected camera-to-scene direction is the reverse of the slice's own bearing.
    PerSliceBearing,
    /// Expected direction is the camera heading rotated by the slice's HFoV center.
    GlobalHeading(CompassBearing),
}

pub fn bearing_to_vector(b: CompassBearing) -> ImagePoint {
    let (s, c) = b.radians().sin_cos();
    ImagePoint::new(s, -c)
}

fn expected_direction(pose: &SlicePose, mode: ErrorMode) -> ImagePoint {
    match mode {
        ErrorMode::PerSliceBearing => bearing_to_vector(pose.scene_bearing.opposite()),
        ErrorMode::GlobalHeading(h) => bearing_to_vector(h.rotated(pose.hfov_center.to_degrees())),
    }
}

/// Angle in degrees between the camera-to-scene vector and the slice's expected
/// central ray.
pub fn geometric_error(camera: ImagePoint, pose: &SlicePose, mode: ErrorMode) -> Result<f64> {
    let u = pose.location - camera;
    if u.norm() <= COINCIDENT_EPS {
        return Err(Error::DegenerateGeometry(
            "camera location coincides with the scene location",
        ));
    }
    let e = expected_direction(pose, mode);
    Ok(e.cross(u).abs().atan2(e.dot(u)).to_degrees())
}

/// Point where the scene-to-camera rays of two poses meet, if both reach it
/// travelling forward.
pub fn ray_intersection(a: &SlicePose, b: &SlicePose) -> Option<ImagePoint> {
    let va = a.ray_direction();
    let vb = b.ray_direction();
    let denom = va.cross(vb);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let d = b.location - a.location;
    let s = d.cross(vb) / denom;
    let t = d.cross(va) / denom;
    if s > 0.0 && t > 0.0 {
        Some(a.location + va * s)
    } else {
        None
    }
}

/// Signed angle (radians) from the expected camera-to-scene ray to the
/// observed one, plus its gradient with respect to the camera location.
fn signed_residual(camera: ImagePoint, pose: &SlicePose) -> Option<(f64, ImagePoint)> {
    let u = pose.location - camera;
    let r2 = u.dot(u);
    if r2.sqrt() <= COINCIDENT_EPS {
        return None;
    }
    let e = pose.ray_direction() * -1.0;
    let s = e.cross(u).atan2(e.dot(u));
    Some((s, ImagePoint::new(u.y / r2, -u.x / r2)))
}

/// Sum of per-slice geometric errors (degrees) at `camera`, in
/// [`ErrorMode::PerSliceBearing`]. Poses sitting on the camera contribute 0.
pub fn angular_objective(poses: &[SlicePose], camera: ImagePoint) -> f64 {
    poses
        .iter()
        .filter_map(|p| signed_residual(camera, p))
        .map(|(s, _)| s.abs())
        .sum::<f64>()
        .to_degrees()
}

/// Least-squares point minimizing squared perpendicular distances to every
/// scene-to-camera line.
pub fn linear_location(poses: &[SlicePose]) -> Result<ImagePoint> {
    let dirs: Vec<ImagePoint> = poses.iter().map(|p| p.ray_direction()).collect();
    let spread = dirs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| dirs[i + 1..].iter().map(move |b| a.cross(*b).abs()))
        .fold(0.0_f64, f64::max);
    if spread < PARALLEL_EPS {
        return Err(Error::DegenerateGeometry("all rays are parallel"));
    }
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (pose, v) in poses.iter().zip(&dirs) {
        let n = ImagePoint::new(-v.y, v.x);
        let c = n.dot(pose.location);
        a11 += n.x * n.x;
        a12 += n.x * n.y;
        a22 += n.y * n.y;
        b1 += n.x * c;
        b2 += n.y * c;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < PARALLEL_EPS * PARALLEL_EPS {
        return Err(Error::DegenerateGeometry("all rays are parallel"));
    }
    Ok(ImagePoint::new(
        (a22 * b1 - a12 * b2) / det,
        (a11 * b2 - a12 * b1) / det,
    ))
}

/// Camera location minimizing the summed geometric error of `poses`.
///
/// Starts from `init` or from [`linear_location`], then runs iteratively
/// reweighted Gauss-Newton on the absolute angular residuals with a
/// backtracking line search. Returns the best iterate seen.
pub fn refine_location(poses: &[SlicePose], init: Option<ImagePoint>) -> Result<ImagePoint> {
    if poses.len() < 2 {
        return Err(Error::DegenerateGeometry("need at least two poses"));
    }
    let start = match init {
        Some(p) => p,
        None => linear_location(poses)?,
    };

    let mut best = start;
    let mut best_obj = angular_objective(poses, best);
    for _ in 0..REFINE_MAX_ITERS {
        let Some(step) = irls_step(poses, best) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let cand = best + step * scale;
            let obj = angular_objective(poses, cand);
            if obj < best_obj {
                improved = Some((cand, obj));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, obj)) = improved else {
            break;
        };
        let decrease = best_obj - obj;
        best = cand;
        best_obj = obj;
        if decrease < REFINE_MIN_DECREASE_DEG {
            break;
        }
    }
    Ok(best)
}

fn irls_step(poses: &[SlicePose], at: ImagePoint) -> Option<ImagePoint> {
    let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (s, j) in poses.iter().filter_map(|p| signed_residual(at, p)) {
        let w = 1.0 / s.abs().max(1e-12);
        a11 += w * j.x * j.x;
        a12 += w * j.x * j.y;
        a22 += w * j.y * j.y;
        g1 += w * s * j.x;
        g2 += w * s * j.y;
    }
    let damping = 1e-12 * (a11 + a22);
    a11 += damping;
    a22 += damping;
    let det = a11 * a22 - a12 * a12;
    if !(det.is_finite() && det > 0.0) {
        return None;
    }
    let step = ImagePoint::new(-(a22 * g1 - a12 * g2) / det, -(a11 * g2 - a12 * g1) / det);
    (step.x.is_finite() && step.y.is_finite()).then_some(step)
}

/// Circular mean of angles given in degrees.
pub fn circular_mean(angles_deg: impl IntoIterator<Item = f64>) -> Result<CompassBearing> {
    let (s, c) = angles_deg
        .into_iter()
        .map(|a| a.to_radians().sin_cos())
        .fold((0.0, 0.0), |(s, c), (si, ci)| (s + si, c + ci));
    let r = s.hypot(c);
    if r < 1e-12 {
        return Err(Error::UndefinedMean(r));
    }
    Ok(CompassBearing::from_radians(s.atan2(c)))
}

/// Camera heading as the circular mean of every slice's implied heading.
pub fn camera_heading(poses: &[SlicePose]) -> Result<CompassBearing> {
    if poses.is_empty() {
        return Err(Error::EmptyInput);
    }
    circular_mean(poses.iter().map(|p| p.implied_heading().degrees()))
}

/// Horizontal ground distance (pixels) reached by a ray depressed `depression_deg`
/// below the horizon from a camera `height` meters above flat ground.
pub fn ground_distance_px(height: f64, depression_deg: f64, meters_per_pixel: f64) -> f64 {
    if depression_deg >= 90.0 {
        return 0.0;
    }
    height / depression_deg.to_radians().tan() / meters_per_pixel
}

/// Inputs describing where a slice's scene can land given the camera prior.
#[derive(Clone, Copy, Debug)]
pub struct SearchRegionParams {
    pub prior_center: ImagePoint,
    /// Radians.
    pub hfov_center: f64,
    pub heading_prior: CompassBearing,
    /// Degrees of heading uncertainty on either side of the prior.
    pub prior_half_width: f64,
    /// Meters above ground.
    pub camera_height: f64,
    pub hfov: f64,
    pub vfov: f64,
    /// Zenith angle of the VFoV center, degrees (135 looks 45 degrees down).
    pub vfov_center_zenith: f64,
    pub meters_per_pixel: f64,
    /// Pixels.
    pub max_radius: f64,
}

impl Default for SearchRegionParams {
    fn default() -> Self {
        SearchRegionParams {
            prior_center: ImagePoint::default(),
            hfov_center: 0.0,
            heading_prior: CompassBearing::NORTH,
            prior_half_width: 45.0,
            camera_height: 2.0,
            hfov: 90.0,
            vfov: 90.0,
            vfov_center_zenith: 135.0,
            meters_per_pixel: 0.11,
            max_radius: 300.0,
        }
    }
}

/// Annular sector where the scene of one slice may appear under the prior.
pub fn search_region(p: &SearchRegionParams) -> Result<AnnularSector> {
    if !(p.camera_height > 0.0) {
        return Err(Error::InvalidConfig("camera height must be positive".into()));
    }
    if !(p.vfov > 0.0 && p.vfov <= 180.0) {
        return Err(Error::InvalidConfig(format!("vfov {} outside (0, 180]", p.vfov)));
    }
    if !(p.meters_per_pixel > 0.0) {
        return Err(Error::InvalidConfig("meters per pixel must be positive".into()));
    }
    let steepest = (p.vfov_center_zenith + p.vfov / 2.0 - 90.0).min(90.0);
    let shallowest = (p.vfov_center_zenith - p.vfov / 2.0 - 90.0).max(0.5);
    if steepest <= 0.0 || steepest <= shallowest {
        return Err(Error::InvalidConfig(
            "view never reaches the ground inside the clamped depression range".into(),
        ));
    }
    let d1 = ground_distance_px(p.camera_height, steepest, p.meters_per_pixel);
    let d2 = ground_distance_px(p.camera_height, shallowest, p.meters_per_pixel).min(p.max_radius);
    if d1 >= d2 {
        return Err(Error::InvalidConfig(format!(
            "inner radius {d1} is not below outer radius {d2}"
        )));
    }
    AnnularSector::new(
        p.prior_center,
        d1,
        d2,
        p.heading_prior.rotated(p.hfov_center.to_degrees()),
        (p.hfov / 2.0 + p.prior_half_width).min(180.0),
    )
}

pub fn point_in_sector(p: ImagePoint, s: &AnnularSector) -> bool {
    let d = p - s.origin;
    let r = d.norm();
    if r < s.inner_radius || r > s.outer_radius {
        return false;
    }
    match CompassBearing::from_vector(d.x, d.y) {
        Some(b) => b.angular_distance(s.axis) <= s.half_angle,
        // the origin itself lies in the sector only when the ring is a full disc
        None => s.inner_radius == 0.0,
    }
}

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slice_loc::geometry::{ErrorMode, geometric_error};
use slice_loc::{CompassBearing, ImagePoint, SlicePose};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_poses(rng: &mut ChaCha8Rng, n: usize) -> Vec<SlicePose> {
    (0..n)
        .map(|i| {
            let loc = ImagePoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..640.0));
            SlicePose::new(i, n, loc, CompassBearing::from_degrees(rng.random_range(0.0..360.0)))
        })
        .collect()
}

/// Poses at `center + r_i * dir_i` looking back at `center`.
pub fn star(center: ImagePoint, dirs_deg: &[f64], ranges: &[f64]) -> Vec<SlicePose> {
    let n = dirs_deg.len();
    dirs_deg
        .iter()
        .zip(ranges)
        .enumerate()
        .map(|(i, (&d, &r))| {
            let (s, c) = d.to_radians().sin_cos();
            let loc = ImagePoint::new(center.x + r * s, center.y - r * c);
            SlicePose::new(i, n, loc, CompassBearing::from_degrees(d + 180.0))
        })
        .collect()
}

/// Unit vector of a compass bearing, x east and y south.
pub fn unit(bearing_deg: f64) -> (f64, f64) {
    let (s, c) = bearing_deg.to_radians().sin_cos();
    (s, -c)
}

/// Forward intersection of two scene-to-camera rays by Cramer's rule.
pub fn cramer_intersection(a: &SlicePose, b: &SlicePose) -> Option<(f64, f64)> {
    let (ax, ay) = unit(a.scene_bearing.degrees());
    let (bx, by) = unit(b.scene_bearing.degrees());
    // s*va - t*vb = pb - pa
    let det = ax * (-by) - (-bx) * ay;
    if det.abs() < 1e-9 {
        return None;
    }
    let (rx, ry) = (b.location.x - a.location.x, b.location.y - a.location.y);
    let s = (rx * (-by) - (-bx) * ry) / det;
    let t = (ax * ry - ay * rx) / det;
    (s > 0.0 && t > 0.0).then_some((a.location.x + s * ax, a.location.y + s * ay))
}

/// Geometric error via the arc cosine of the normalized dot product.
pub fn acos_error(camera: (f64, f64), pose: &SlicePose) -> f64 {
    let (ux, uy) = (pose.location.x - camera.0, pose.location.y - camera.1);
    let (ex, ey) = unit(pose.scene_bearing.degrees() + 180.0);
    let cos = (ux * ex + uy * ey) / (ux * ux + uy * uy).sqrt();
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn errors_at(poses: &[SlicePose], camera: ImagePoint) -> Vec<f64> {
    poses
        .iter()
        .map(|p| geometric_error(camera, p, ErrorMode::PerSliceBearing).unwrap())
        .collect()
}

/// All subsets of `0..n` with at least `min` members, as position lists.
pub fn subsets(n: usize, min: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize >= min)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

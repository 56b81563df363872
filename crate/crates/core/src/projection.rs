//! Panorama-side geometry used to label slices.
//!
//! Panorama pixels map linearly to azimuth `phi` (clockwise from north) and
//! zenith angle `omega`. A pixel with depth `d` lands at
//! `camera + d * (sin(omega) sin(phi), sin(omega) cos(phi), cos(omega))` in a
//! local east-north-up frame, which is then mapped onto the reference image
//! anchored at the camera's ground position.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{slice_center, ImagePoint};
use crate::nullmodel::parse_key_values;

pub const DEFAULT_INVALID_DEPTH: f64 = 255.0;
/// Meters per PGM sample.
pub const PGM_DEPTH_SCALE: f64 = 0.01;
const PGM_SCALE_COMMENT: &str = "# scale=0.01";

/// Equirectangular depth map, row-major, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthPanorama {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub invalid_threshold: f64,
}

impl DepthPanorama {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || depth.len() != width * height {
            return Err(Error::InvalidConfig(format!(
                "depth grid of {} values does not match {width}x{height}",
                depth.len()
            )));
        }
        if let Some(d) = depth.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::InvalidDepth(*d));
        }
        Ok(DepthPanorama {
            width,
            height,
            depth,
            invalid_threshold: DEFAULT_INVALID_DEPTH,
        })
    }

    /// Fills the grid by evaluating `f(phi, omega)` at every pixel center.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut depth = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (phi, omega) = panoramic_angles(x as f64 + 0.5, y as f64 + 0.5, width, height)?;
                depth.push(f(phi, omega));
            }
        }
        Self::new(width, height, depth)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn is_valid(&self, d: f64) -> bool {
        d < self.invalid_threshold
    }

    /// Writes a binary 16-bit PGM with centimeter samples. Invalid pixels are
    /// stored as 65535.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{PGM_SCALE_COMMENT}\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.depth.len() * 2);
        for &d in &self.depth {
            let sample = if self.is_valid(d) {
                (d / PGM_DEPTH_SCALE).round().min(65535.0) as u16
            } else {
                u16::MAX
            };
            buf.extend_from_slice(&sample.to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0;
        let mut saw_scale = false;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            match bytes.get(pos) {
                None => return Err(Error::Parse("truncated PGM header".into())),
                Some(b'#') => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|&b| b == b'\n')
                        .map_or(bytes.len(), |e| pos + e);
                    let line = String::from_utf8_lossy(&bytes[pos..end]);
                    if line.trim_end() == PGM_SCALE_COMMENT {
                        saw_scale = true;
                    }
                    pos = end;
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|b| b.is_ascii_whitespace() || *b == b'#')
                        .map_or(bytes.len(), |e| pos + e);
                    tokens.push(String::from_utf8_lossy(&bytes[pos..end]).into_owned());
                    pos = end;
                }
            }
        }
        if tokens[0] != "P5" {
            return Err(Error::Parse(format!("expected PGM magic P5, found {}", tokens[0])));
        }
        if !saw_scale {
            return Err(Error::Parse(format!("PGM header lacks `{PGM_SCALE_COMMENT}`")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("PGM header field `{s}`: {e}")))
        };
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval != 65535 {
            return Err(Error::Parse(format!("PGM maxval must be 65535, found {maxval}")));
        }
        // exactly one whitespace byte separates the header from the samples
        pos += 1;
        let need = width * height * 2;
        let data = bytes
            .get(pos..pos + need)
            .ok_or_else(|| Error::Parse("truncated PGM sample data".into()))?;
        let depth = data
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * PGM_DEPTH_SCALE)
            .collect();
        Self::new(width, height, depth)
    }
}

/// Reference-image georeference in a local metric frame. The camera's ground
/// position `(origin_x, origin_y)` (meters east, north) sits at the image center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoTransform {
    pub width: f64,
    pub height: f64,
    pub meters_per_pixel: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GeoTransform {
    pub fn new(width: f64, height: f64, meters_per_pixel: f64) -> Result<Self> {
        if !(meters_per_pixel > 0.0) {
            return Err(Error::InvalidConfig("meters per pixel must be positive".into()));
        }
        Ok(GeoTransform {
            width,
            height,
            meters_per_pixel,
            origin_x: 0.0,
            origin_y: 0.0,
        })
    }

    pub fn to_pixel(&self, east: f64, north: f64) -> ImagePoint {
        world_to_reference(east, north, self)
    }

    pub fn to_world(&self, p: ImagePoint) -> (f64, f64) {
        (
            self.origin_x + (p.x - self.width / 2.0) * self.meters_per_pixel,
            self.origin_y - (p.y - self.height / 2.0) * self.meters_per_pixel,
        )
    }
}

/// Slice layout over the panorama. Slice `i` looks at azimuth `2*pi*i/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicePlan {
    pub n: usize,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    /// Zenith angle of the slice's optical axis, radians.
    pub vfov_center: f64,
    pub slice_size: usize,
}

impl Default for SlicePlan {
    fn default() -> Self {
        SlicePlan {
            n: 12,
            hfov_deg: 90.0,
            vfov_deg: 90.0,
            vfov_center: 0.75 * PI,
            slice_size: 512,
        }
    }
}

impl SlicePlan {
    pub fn with_slices(n: usize) -> Result<Self> {
        let plan = SlicePlan {
            n,
            ..Default::default()
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("slice plan needs at least one slice".into()));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg <= 360.0 && self.vfov_deg > 0.0 && self.vfov_deg <= 180.0) {
            return Err(Error::InvalidConfig("slice fields of view out of range".into()));
        }
        if self.slice_size == 0 {
            return Err(Error::InvalidConfig("slice size must be positive".into()));
        }
        Ok(())
    }

    /// HFoV center of slice `i`, radians.
    pub fn center(&self, i: usize) -> f64 {
        slice_center(i, self.n)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::OutOfRange(format!("slice index {i} >= {}", self.n)));
        }
        Ok(())
    }

    /// Whether panorama direction `(phi, omega)` lies inside slice `i`'s window.
    pub fn window_contains(&self, i: usize, phi: f64, omega: f64) -> bool {
        let half_h = self.hfov_deg.to_radians() / 2.0;
        let half_v = self.vfov_deg.to_radians() / 2.0;
        let d = (phi - self.center(i)).rem_euclid(TAU);
        let d = d.min(TAU - d);
        d <= half_h && (omega - self.vfov_center).abs() <= half_v
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "hfov_deg={}", self.hfov_deg);
        let _ = writeln!(s, "vfov_deg={}", self.vfov_deg);
        let _ = writeln!(s, "vfov_center_deg={}", self.vfov_center.to_degrees());
        let _ = writeln!(s, "slice_size={}", self.slice_size);
        let centers: Vec<String> = self.centers().iter().map(|c| format!("{}", c.to_degrees())).collect();
        let _ = writeln!(s, "centers_deg={}", centers.join(","));
        s
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut plan = SlicePlan::default();
        let f = |k: &str| -> Result<Option<f64>> {
            kv.get(k)
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("plan `{k}`: {e}"))))
                .transpose()
        };
        if let Some(v) = f("n")? {
            plan.n = v as usize;
        }
        if let Some(v) = f("hfov_deg")? {
            plan.hfov_deg = v;
        }
        if let Some(v) = f("vfov_deg")? {
            plan.vfov_deg = v;
        }
        if let Some(v) = f("vfov_center_deg")? {
            plan.vfov_center = v.to_radians();
        }
        if let Some(v) = f("slice_size")? {
            plan.slice_size = v as usize;
        }
        plan.validate()?;
        Ok(plan)
    }
}

/// Azimuth and zenith angle (radians) of panorama pixel coordinates. The
/// bottom edge `y = height` is accepted as the nadir.
pub fn panoramic_angles(x: f64, y: f64, width: usize, height: usize) -> Result<(f64, f64)> {
    let (w, h) = (width as f64, height as f64);
    if !(x >= 0.0 && x < w && y >= 0.0 && y <= h) {
        return Err(Error::OutOfRange(format!(
            "pixel ({x}, {y}) outside {width}x{height}"
        )));
    }
    Ok((TAU * x / w, PI * y / h))
}

/// Unit direction `(east, north, up)` for azimuth `phi` and zenith `omega`.
pub fn direction(phi: f64, omega: f64) -> [f64; 3] {
    let (sp, cp) = phi.sin_cos();
    let (so, co) = omega.sin_cos();
    [so * sp, so * cp, co]
}

/// Back-projects a panorama pixel with known depth into the local world frame.
pub fn pixel_to_world(
    x: f64,
    y: f64,
    depth: f64,
    camera_world: [f64; 3],
    width: usize,
    height: usize,
) -> Result<[f64; 3]> {
    if !(depth >= 0.0 && depth.is_finite()) {
        return Err(Error::InvalidDepth(depth));
    }
    let (phi, omega) = panoramic_angles(x, y, width, height)?;
    let d = direction(phi, omega);
    Ok([
        camera_world[0] + depth * d[0],
        camera_world[1] + depth * d[1],
        camera_world[2] + depth * d[2],
    ])
}

pub fn world_to_reference(east: f64, north: f64, g: &GeoTransform) -> ImagePoint {
    ImagePoint::new(
        g.width / 2.0 + (east - g.origin_x) / g.meters_per_pixel,
        g.height / 2.0 - (north - g.origin_y) / g.meters_per_pixel,
    )
}

/// Mean reference-image position of every valid-depth panorama pixel inside
/// slice `slice_index`'s window. `None` when the window holds no valid depth.
pub fn scene_centroid(
    plan: &SlicePlan,
    slice_index: usize,
    pano: &DepthPanorama,
    camera_world: [f64; 3],
    g: &GeoTransform,
) -> Result<Option<ImagePoint>> {
    plan.check_index(slice_index)?;
    let (w, h) = (pano.width, pano.height);
    let half_v = plan.vfov_deg.to_radians() / 2.0;
    let row_lo = (((plan.vfov_center - half_v) / PI * h as f64).floor().max(0.0)) as usize;
    let row_hi = (((plan.vfov_center + half_v) / PI * h as f64).ceil() as usize).min(h);

    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for y in row_lo..row_hi {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (phi, omega) = panoramic_angles(px, py, w, h)?;
            if !plan.window_contains(slice_index, phi, omega) {
                continue;
            }
            let d = pano.at(x, y);
            if !pano.is_valid(d) {
                continue;
            }
            let world = pixel_to_world(px, py, d, camera_world, w, h)?;
            let p = world_to_reference(world[0], world[1], g);
            sx += p.x;
            sy += p.y;
            count += 1;
        }
    }
    Ok((count > 0).then(|| ImagePoint::new(sx / count as f64, sy / count as f64)))
}

/// Panorama direction `(phi, omega)` seen by slice pixel `(u, v)`, where the
/// principal point is at `(size/2, size/2)` and `v` grows downward.
pub fn pinhole_ray_angles(plan: &SlicePlan, slice_index: usize, u: f64, v: f64) -> (f64, f64) {
    let half = plan.slice_size as f64 / 2.0;
    let fx = half / (plan.hfov_deg.to_radians() / 2.0).tan();
    let fy = half / (plan.vfov_deg.to_radians() / 2.0).tan();
    let phi_c = plan.center(slice_index);
    let forward = direction(phi_c, plan.vfov_center);
    let right = [phi_c.cos(), -phi_c.sin(), 0.0];
    // up = right x forward
    let up = [
        right[1] * forward[2] - right[2] * forward[1],
        right[2] * forward[0] - right[0] * forward[2],
        right[0] * forward[1] - right[1] * forward[0],
    ];
    let (a, b) = ((u - half) / fx, (v - half) / fy);
    let ray: [f64; 3] = std::array::from_fn(|k| forward[k] + a * right[k] - b * up[k]);
    let norm = (ray[0] * ray[0] + ray[1] * ray[1] + ray[2] * ray[2]).sqrt();
    let phi = ray[0].atan2(ray[1]).rem_euclid(TAU);
    let omega = (ray[2] / norm).clamp(-1.0, 1.0).acos();
    (phi, omega)
}

/// Source panorama coordinates for every pixel of slice `slice_index`,
/// row-major over a `slice_size x slice_size` grid.
pub fn equirect_to_pinhole_map(
    plan: &SlicePlan,
    slice_index: usize,
    width: usize,
    height: usize,
) -> Result<Vec<(f64, f64)>> {
    plan.check_index(slice_index)?;
    if !(plan.hfov_deg < 180.0 && plan.vfov_deg < 180.0) {
        return Err(Error::InvalidConfig("a pinhole slice needs fields of view below 180 degrees".into()));
    }
    let s = plan.slice_size;
    let mut out = Vec::with_capacity(s * s);
    for v in 0..s {
        for u in 0..s {
            let (phi, omega) = pinhole_ray_angles(plan, slice_index, u as f64, v as f64);
            out.push((phi / TAU * width as f64, omega / PI * height as f64));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn angle_examples() {
        let (w, h) = (2048, 1024);
        let (p, o) = panoramic_angles(1024.0, 512.0, w, h).unwrap();
        assert_abs_diff_eq!(p, PI);
        assert_abs_diff_eq!(o, PI / 2.0);
        assert_eq!(panoramic_angles(0.0, 0.0, w, h).unwrap(), (0.0, 0.0));
        let (p, o) = panoramic_angles(1536.0, 768.0, w, h).unwrap();
        assert_abs_diff_eq!(p, 1.5 * PI);
        assert_abs_diff_eq!(o, 0.75 * PI);
        assert!(matches!(panoramic_angles(2048.0, 0.0, w, h), Err(Error::OutOfRange(_))));
        assert!(matches!(panoramic_angles(0.0, h as f64 + 1e-9, w, h), Err(Error::OutOfRange(_))));
        assert_eq!(panoramic_angles(0.0, h as f64, w, h).unwrap().1, PI);
    }

    #[test]
    fn back_projection_examples() {
        let (w, h) = (360, 180);
        let north = pixel_to_world(0.0, 90.0, 5.0, [0.0; 3], w, h).unwrap();
        assert_abs_diff_eq!(north[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(north[1], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(north[2], 0.0, epsilon = 1e-12);
        let east = pixel_to_world(90.0, 90.0, 5.0, [0.0; 3], w, h).unwrap();
        assert_abs_diff_eq!(east[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(east[1], 0.0, epsilon = 1e-12);
        let down = pixel_to_world(0.0, 135.0, 10.0, [100.0, 200.0, 2.0], w, h).unwrap();
        assert_abs_diff_eq!(down[0], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(down[1], 207.0711, epsilon = 1e-4);
        assert_abs_diff_eq!(down[2], -5.0711, epsilon = 1e-4);
        assert!(matches!(
            pixel_to_world(0.0, 0.0, -1.0, [0.0; 3], w, h),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn reference_mapping_examples() {
        let g = GeoTransform::new(640.0, 640.0, 0.11).unwrap();
        assert_eq!(world_to_reference(0.0, 0.0, &g), ImagePoint::new(320.0, 320.0));
        let p = world_to_reference(11.0, 11.0, &g);
        assert_abs_diff_eq!(p.x, 420.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 220.0, epsilon = 1e-9);
        let p = world_to_reference(-11.0, -11.0, &g);
        assert_abs_diff_eq!(p.x, 220.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 420.0, epsilon = 1e-9);
        let (e, n) = g.to_world(p);
        assert_abs_diff_eq!(e, -11.0, epsilon = 1e-9);
        assert_abs_diff_eq!(n, -11.0, epsilon = 1e-9);
    }

    #[test]
    fn centroid_of_four_points() {
        // one slice seeing the whole sphere; the four lower-row pixels of a 4x2
        // panorama (phi = 45, 135, 225, 315 deg, omega = 135 deg) get a depth
        // that puts them one meter east/west and north/south of the camera
        let plan = SlicePlan {
            n: 1,
            hfov_deg: 360.0,
            vfov_deg: 180.0,
            vfov_center: PI / 2.0,
            slice_size: 8,
        };
        let g = GeoTransform::new(4.0, 4.0, 1.0).unwrap();
        let mut pano = DepthPanorama::from_fn(4, 2, |_, _| 1000.0).unwrap();
        let d = 2f64.sqrt() / (0.75 * PI).sin();
        for x in 0..4 {
            pano.depth[4 + x] = d;
        }
        let pts: Vec<ImagePoint> = (0..4)
            .map(|x| {
                let w = pixel_to_world(x as f64 + 0.5, 1.5, d, [0.0; 3], 4, 2).unwrap();
                world_to_reference(w[0], w[1], &g)
            })
            .collect();
        for (p, e) in pts.iter().zip([(3.0, 1.0), (3.0, 3.0), (1.0, 3.0), (1.0, 1.0)]) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-9);
        }
        let c = scene_centroid(&plan, 0, &pano, [0.0, 0.0, 0.0], &g).unwrap().unwrap();
        assert_abs_diff_eq!(c.x, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.y, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn sky_only_slice_has_no_centroid() {
        let plan = SlicePlan::default();
        let g = GeoTransform::new(640.0, 640.0, 0.11).unwrap();
        let pano = DepthPanorama::from_fn(72, 36, |_, _| 300.0).unwrap();
        assert_eq!(scene_centroid(&plan, 3, &pano, [0.0, 0.0, 2.0], &g).unwrap(), None);
        assert!(scene_centroid(&plan, 12, &pano, [0.0, 0.0, 2.0], &g).is_err());
    }

    #[test]
    fn pgm_round_trip_and_header_checks() {
        let pano = DepthPanorama::from_fn(6, 3, |phi, omega| phi + omega).unwrap();
        let mut pano = pano;
        pano.depth[4] = 400.0;
        let mut buf = Vec::new();
        pano.write_pgm(&mut buf).unwrap();
        let back = DepthPanorama::read_pgm(buf.as_slice()).unwrap();
        for (a, b) in pano.depth.iter().zip(&back.depth) {
            if pano.is_valid(*a) {
                assert_abs_diff_eq!(a, b, epsilon = 0.005 + 1e-12);
            } else {
                assert!(!back.is_valid(*b));
            }
        }
        let no_scale = b"P5\n2 1\n65535\n\x00\x01\x00\x02";
        assert!(matches!(DepthPanorama::read_pgm(&no_scale[..]), Err(Error::Parse(_))));
        let bad_max = b"P5\n# scale=0.01\n2 1\n255\n\x01\x02";
        assert!(matches!(DepthPanorama::read_pgm(&bad_max[..]), Err(Error::Parse(_))));
    }

    #[test]
    fn plan_centers_and_key_values() {
        let plan = SlicePlan::default();
        let c = plan.centers();
        assert_eq!(c.len(), 12);
        for w in c.windows(2) {
            assert!(w[1] > w[0]);
            assert_abs_diff_eq!(w[1] - w[0], TAU / 12.0, epsilon = 1e-12);
        }
        let back = SlicePlan::from_key_values(&plan.to_key_values()).unwrap();
        assert_eq!(back.n, plan.n);
        assert_abs_diff_eq!(back.vfov_center, plan.vfov_center, epsilon = 1e-12);
    }

    #[test]
    fn principal_ray_hits_slice_center() {
        let plan = SlicePlan::default();
        for i in 0..plan.n {
            let (phi, omega) = pinhole_ray_angles(&plan, i, 256.0, 256.0);
            let d = (phi - plan.center(i)).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-12);
            assert_abs_diff_eq!(omega, plan.vfov_center, epsilon = 1e-12);
        }
    }

    #[test]
    fn left_edge_is_half_hfov_for_level_slices() {
        let plan = SlicePlan {
            vfov_center: PI / 2.0,
            ..Default::default()
        };
        let (phi, omega) = pinhole_ray_angles(&plan, 2, 0.0, 256.0);
        assert_abs_diff_eq!(phi, plan.center(2) - PI / 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(omega, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn map_dimensions() {
        let plan = SlicePlan {
            slice_size: 16,
            ..Default::default()
        };
        let m = equirect_to_pinhole_map(&plan, 0, 1024, 512).unwrap();
        assert_eq!(m.len(), 256);
        let (x, y) = m[8 * 16 + 8];
        assert!(x.abs() < 1e-9 || (x - 1024.0).abs() < 1e-9);
        assert_abs_diff_eq!(y, 384.0, epsilon = 1e-9);
        assert!(equirect_to_pinhole_map(&plan, 12, 1024, 512).is_err());
    }
}

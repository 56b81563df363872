mod common;

use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::{rng, star};
use slice_loc::acontrario::log_epsilon;
use slice_loc::eval::{confusion_and_rates, metrics, EvalRecord, MetricsOptions, NegativeRule};
use slice_loc::formats::{read_jsonl, write_jsonl, CameraJson, InputRecord, PoseJson, ResultRecord};
use slice_loc::geometry::{
    angular_objective, bearing_to_vector, camera_heading, geometric_error, point_in_sector,
    ray_intersection, refine_location, AnnularSector, ErrorMode,
};
use slice_loc::nullmodel::{q_cdf, q_density};
use slice_loc::projection::{scene_centroid, DepthPanorama, GeoTransform, SlicePlan};
use slice_loc::simulator::{generate_trial_scene, ScenarioConfig};
use slice_loc::{osa_cvl, CameraPose, CompassBearing, ImagePoint, NullModelParams, SlicePose};

fn point() -> impl Strategy<Value = ImagePoint> {
    (-1000.0..1000.0f64, -1000.0..1000.0f64).prop_map(|(x, y)| ImagePoint::new(x, y))
}

fn pose(i: usize, n: usize) -> impl Strategy<Value = SlicePose> {
    (point(), 0.0..360.0f64).prop_map(move |(p, b)| SlicePose::new(i, n, p, CompassBearing::from_degrees(b)))
}

fn noisy_scene(seed: u64) -> Vec<SlicePose> {
    let cfg = ScenarioConfig {
        seed,
        ..Default::default()
    };
    generate_trial_scene(&cfg, 0).unwrap().poses
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(std::env::var("PROPTEST_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(256)))]

    #[test]
    fn bearing_vector_round_trip(b in 0.0..360.0f64) {
        let v = bearing_to_vector(CompassBearing::from_degrees(b));
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        let back = CompassBearing::from_vector(v.x, v.y).unwrap();
        prop_assert!(back.angular_distance(CompassBearing::from_degrees(b)) < 1e-9);
    }

    #[test]
    fn geometric_error_is_similarity_invariant(
        cam in point(), p in pose(0, 1), shift in point(), scale in 0.01..100.0f64,
    ) {
        prop_assume!(cam.distance(p.location) > 1e-3);
        let e = geometric_error(cam, &p, ErrorMode::PerSliceBearing).unwrap();
        prop_assert!((0.0..=180.0).contains(&e));
        let map = |q: ImagePoint| (q + shift) * scale;
        let moved = SlicePose { location: map(p.location), ..p };
        let e2 = geometric_error(map(cam), &moved, ErrorMode::PerSliceBearing).unwrap();
        prop_assert!((e - e2).abs() < 1e-7, "{} vs {}", e, e2);
    }

    #[test]
    fn intersection_has_zero_error_on_both_rays(a in pose(0, 2), b in pose(1, 2)) {
        if let Some(x) = ray_intersection(&a, &b) {
            for p in [&a, &b] {
                if x.distance(p.location) > 1e-3 {
                    let e = geometric_error(x, p, ErrorMode::PerSliceBearing).unwrap();
                    prop_assert!(e < 1e-6, "error {}", e);
                }
            }
        }
    }

    #[test]
    fn refine_recovers_zero_residual_center(
        c in point(),
        dirs in proptest::collection::vec(0.0..360.0f64, 3..10),
        seed_ranges in proptest::collection::vec(5.0..400.0f64, 10),
    ) {
        let mut sorted = dirs.clone();
        sorted.sort_by(f64::total_cmp);
        let spread = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max).max(360.0 - sorted[sorted.len() - 1] + sorted[0]);
        // some pair of rays must cross cleanly
        let pair_sep = sorted.iter().flat_map(|a| sorted.iter().map(move |b| {
            let d = (a - b).rem_euclid(180.0);
            d.min(180.0 - d)
        })).fold(0.0, f64::max);
        prop_assume!(pair_sep > 10.0 && spread > 0.0);
        let poses = star(c, &dirs, &seed_ranges[..dirs.len()]);
        let got = refine_location(&poses, None).unwrap();
        prop_assert!(angular_objective(&poses, got) < 1e-6);
        prop_assert!(got.distance(c) < 1e-6 * (1.0 + c.norm()));
    }

    #[test]
    fn heading_ignores_order_and_full_turns(seed in 0u64..1000, turns in proptest::collection::vec(-3i32..3, 12)) {
        let poses = noisy_scene(seed);
        let h = camera_heading(&poses).unwrap();
        let mut shuffled = poses.clone();
        shuffled.shuffle(&mut rng(seed));
        prop_assert!(camera_heading(&shuffled).unwrap().angular_distance(h) < 1e-9);
        let turned: Vec<SlicePose> = poses.iter().zip(&turns).map(|(p, &t)| SlicePose {
            scene_bearing: CompassBearing::from_degrees(p.scene_bearing.degrees() + 360.0 * t as f64),
            ..*p
        }).collect();
        prop_assert!(camera_heading(&turned).unwrap().angular_distance(h) < 1e-9);
    }

    #[test]
    fn sector_membership_matches_polar_check(
        origin in point(), inner in 0.0..100.0f64, width in 1.0..300.0f64,
        axis in 0.0..360.0f64, half in 0.0..180.0f64, q in point(),
    ) {
        let s = AnnularSector::new(origin, inner, inner + width, CompassBearing::from_degrees(axis), half).unwrap();
        let d = q - origin;
        let r = d.norm();
        // polar form: radius and the signed offset of the bearing from the axis
        let brg = d.x.atan2(-d.y).to_degrees();
        let off = ((brg - axis + 540.0).rem_euclid(360.0) - 180.0).abs();
        let inside = r >= inner && r <= inner + width && (r == 0.0 || off <= half);
        prop_assert_eq!(point_in_sector(q, &s), inside);
    }

    #[test]
    fn null_cdf_is_monotone_and_matches_quadrature(a in -9e-5..-3e-5f64, t2 in 100.0..170.0f64, x in 0.0..180.0f64) {
        let p = NullModelParams::from_linear(50.0, t2, a, -a * t2).unwrap();
        let y = x + 0.5;
        prop_assert!(q_cdf(y, &p) >= q_cdf(x, &p));
        let steps = 20_000;
        let h = x / steps as f64;
        let trap: f64 = (0..steps).map(|i| {
            let (u, v) = (i as f64 * h, (i + 1) as f64 * h);
            0.5 * h * (q_density(u, &p) + q_density(v, &p))
        }).sum::<f64>() / p.k;
        prop_assert!((trap - q_cdf(x, &p)).abs() < 1e-6, "{} vs {}", trap, q_cdf(x, &p));
    }

    #[test]
    fn log_epsilon_grows_with_alpha(n in 3usize..30, kf in 0.0..1.0f64, a in 0.0..180.0f64, b in 0.0..180.0f64) {
        let k = 3 + ((n - 3) as f64 * kf) as usize;
        let p = NullModelParams::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(log_epsilon(lo, n, k, &p).unwrap() <= log_epsilon(hi, n, k, &p).unwrap());
    }

    #[test]
    fn estimator_is_permutation_invariant(seed in 0u64..5000) {
        let poses = noisy_scene(seed);
        let p = NullModelParams::default();
        let a = osa_cvl(&poses, 0.0, &p).unwrap();
        let mut shuffled = poses.clone();
        shuffled.shuffle(&mut rng(seed ^ 0x5eed));
        let b = osa_cvl(&shuffled, 0.0, &p).unwrap();
        prop_assert_eq!(&a.inlier_indices, &b.inlier_indices);
        // pair order changes intersection round-off; see the scale property
        prop_assert!((a.lg_eps - b.lg_eps).abs() < 1e-6 || a.lg_eps == b.lg_eps);
    }

    #[test]
    fn estimator_is_scale_invariant(seed in 0u64..5000, s in 0.1..10.0f64, c in point()) {
        let poses = noisy_scene(seed);
        let p = NullModelParams::default();
        let a = osa_cvl(&poses, 0.0, &p).unwrap();
        let scaled: Vec<SlicePose> = poses.iter().map(|q| SlicePose {
            location: c + (q.location - c) * s,
            ..*q
        }).collect();
        let b = osa_cvl(&scaled, 0.0, &p).unwrap();
        prop_assert_eq!(&a.inlier_indices, &b.inlier_indices);
        // a near-perfect triple has alpha ~1e-6 deg, where intersection
        // round-off moves alpha by ~1e-8 relative and lg eps by ~1e-9
        prop_assert!((a.alpha - b.alpha).abs() <= 1e-6 * a.alpha.max(1e-300) || a.alpha == b.alpha);
        prop_assert!((a.lg_eps - b.lg_eps).abs() < 1e-6 || a.lg_eps == b.lg_eps);
        let (ra, rb) = (a.raw_camera.unwrap().location, b.raw_camera.unwrap().location);
        let want = c + (ra - c) * s;
        prop_assert!(rb.distance(want) < 1e-6 * (1.0 + s * 640.0), "{:?} vs {:?}", rb, want);
    }

    #[test]
    fn simulated_poses_respect_their_model(seed in 0u64..u64::MAX, trial in 0u64..1000) {
        let cfg = ScenarioConfig { seed, bearing_noise_sigma: 0.0, location_noise_sigma: 0.0, ..Default::default() };
        let scene = generate_trial_scene(&cfg, trial).unwrap();
        let gt = scene.ground_truth;
        for (pose, &inlier) in scene.poses.iter().zip(&scene.inlier_mask) {
            if inlier {
                let e = geometric_error(gt.location, pose, ErrorMode::PerSliceBearing).unwrap();
                prop_assert!(e < 1e-9, "inlier error {}", e);
            } else {
                let look = gt.heading.rotated(pose.hfov_center.to_degrees());
                let sector = AnnularSector::new(gt.location, cfg.sector_inner, cfg.sector_outer, look, cfg.sector_half_angle).unwrap();
                prop_assert!(point_in_sector(pose.location, &sector));
            }
        }
    }

    #[test]
    fn centroid_scales_with_depth_and_resolution(s in 0.2..5.0f64, i in 0usize..12) {
        let (w, h) = (360, 180);
        let depth = |omega: f64| if omega > PI / 2.0 { -2.0 / omega.cos() } else { 1000.0 };
        let plan = SlicePlan::default();
        let g = GeoTransform::new(640.0, 640.0, 0.11).unwrap();
        let a = DepthPanorama::from_fn(w, h, |_, o| depth(o)).unwrap();
        let mut b = DepthPanorama::from_fn(w, h, |_, o| s * depth(o)).unwrap();
        b.invalid_threshold *= s;
        let gs = GeoTransform { meters_per_pixel: 0.11 * s, ..g };
        let ca = scene_centroid(&plan, i, &a, [0.0, 0.0, 2.0], &g).unwrap().unwrap();
        let cb = scene_centroid(&plan, i, &b, [0.0, 0.0, 2.0 * s], &gs).unwrap().unwrap();
        prop_assert!(ca.distance(cb) < 1e-6, "{:?} vs {:?}", ca, cb);
    }

    #[test]
    fn default_windows_cover_each_azimuth_three_times(phi in 0.0..TAU) {
        let plan = SlicePlan::default();
        // stay off the window edges, where coverage legitimately changes
        let edge = (0..plan.n).map(|i| {
            let d = (phi - plan.center(i) + 3.0 * PI).rem_euclid(TAU) - PI;
            (d.abs() - PI / 4.0).abs()
        }).fold(f64::INFINITY, f64::min);
        prop_assume!(edge > 1e-9);
        let count = (0..plan.n).filter(|&i| plan.window_contains(i, phi, plan.vfov_center)).count();
        prop_assert_eq!(count, 3);
    }

    #[test]
    fn metrics_ignore_record_order(
        rows in proptest::collection::vec((0.0..30.0f64, 0.0..180.0f64, -5.0..2.0f64, any::<bool>()), 1..40),
        seed in any::<u64>(),
    ) {
        let recs: Vec<EvalRecord> = rows.iter().map(|&(e, o, lg, ok)| eval_record(e, o, lg, ok)).collect();
        let opts = MetricsOptions { rule: Some(NegativeRule::ReferenceIncorrect), ..Default::default() };
        let a = metrics(&recs, &opts).unwrap();
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng(seed));
        let b = metrics(&shuffled, &opts).unwrap();
        prop_assert_eq!(&a.location_below, &b.location_below);
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert_eq!(a.location.map(|s| s.median), b.location.map(|s| s.median));
        let mean = |m: &slice_loc::eval::MetricsReport| m.location.map_or(0.0, |s| s.mean);
        prop_assert!((mean(&a) - mean(&b)).abs() < 1e-9);
        let c = confusion_and_rates(&recs, 0.0, NegativeRule::localization()).unwrap();
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, recs.len());
        for pct in a.location_below.iter().chain(&a.orientation_below).filter_map(|x| x.1) {
            prop_assert!((0.0..=100.0).contains(&pct));
        }
        prop_assert!((0.0..=100.0).contains(&a.pos));
    }

    #[test]
    fn jsonl_round_trip(
        rows in proptest::collection::vec((any::<bool>(), -50.0..5.0f64, any::<bool>(), point(), 0.0..360.0f64, 0usize..100), 0..10),
    ) {
        let results: Vec<ResultRecord> = rows.iter().enumerate().map(|(i, &(valid, lg, inf, p, h, pairs))| {
            let cam = CameraJson { x: p.x, y: p.y, heading_deg: h };
            ResultRecord {
                id: format!("r{i}"),
                valid,
                lg_eps: if inf { f64::NEG_INFINITY } else { lg },
                camera: valid.then_some(cam),
                inliers: (0..pairs % 7).collect(),
                pairs_tested: pairs,
                out_of_bounds: pairs % 3 == 0,
                camera_raw: Some(cam),
                camera_gt: (!valid).then_some(cam),
                meters_per_pixel: Some(0.11),
                reference_correct: Some(inf),
                trial: None,
                location_error_m: valid.then_some(lg.abs()),
                heading_error_deg: None,
                inlier_precision: None,
                inlier_recall: Some(0.5),
            }
        }).collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &results).unwrap();
        let back: Vec<ResultRecord> = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back, results);

        let inputs: Vec<InputRecord> = rows.iter().enumerate().map(|(i, &(_, lg, gt, p, h, _))| InputRecord {
            id: format!("in{i}"),
            n: 12,
            meters_per_pixel: 0.11,
            poses: vec![PoseJson { slice_index: i % 12, x: p.x, y: p.y, bearing_deg: h, hfov_center_deg: 30.0 * (i % 12) as f64 }],
            camera_gt: gt.then_some(CameraJson { x: lg, y: p.y, heading_deg: h }),
            reference_correct: None,
        }).collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &inputs).unwrap();
        let back: Vec<InputRecord> = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back, inputs);
    }
}

fn eval_record(err: f64, ori: f64, lg: f64, ok: bool) -> EvalRecord {
    let gt = CameraPose { location: ImagePoint::new(0.0, 0.0), heading: CompassBearing::NORTH };
    let pred = CameraPose { location: ImagePoint::new(err, 0.0), heading: CompassBearing::from_degrees(ori) };
    let valid = lg < 0.0;
    EvalRecord {
        id: String::new(),
        predicted: valid.then_some(pred),
        raw: Some(pred),
        valid,
        lg_eps: lg,
        ground_truth: Some(gt),
        reference_correct: Some(ok),
        meters_per_pixel: 1.0,
    }
}

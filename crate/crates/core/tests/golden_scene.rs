//! Seed-42 scene pinned to a recorded file. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test --test golden_scene` after an intended change.

use serde_json::json;
use slice_loc::formats::{CameraJson, PoseJson};
use slice_loc::simulator::{generate_scene, ScenarioConfig};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/scene_seed42.json");

fn render() -> String {
    let cfg = ScenarioConfig {
        seed: 42,
        ..Default::default()
    };
    let scene = generate_scene(&cfg).unwrap();
    let poses: Vec<PoseJson> = scene.poses.iter().map(PoseJson::from).collect();
    let doc = json!({
        "config": cfg.to_key_values(),
        "ground_truth": CameraJson::from(scene.ground_truth),
        "inlier_mask": scene.inlier_mask,
        "poses": poses,
    });
    serde_json::to_string_pretty(&doc).unwrap() + "\n"
}

#[test]
fn seed_42_scene_is_bit_identical() {
    let got = render();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN, &got).unwrap();
    }
    let want = std::fs::read_to_string(GOLDEN).expect("golden file missing; run with UPDATE_GOLDEN=1");
    assert_eq!(got, want);
}

#[test]
fn repeated_generation_is_identical() {
    assert_eq!(render(), render());
}

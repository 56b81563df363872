//! Locate a camera from twelve slice observations, four of which are wrong.

use slice_loc::geometry::{search_region, SearchRegionParams};
use slice_loc::simulator::{generate_scene, ScenarioConfig};
use slice_loc::{osa_cvl, NullModelParams};

fn main() -> slice_loc::Result<()> {
    let cfg = ScenarioConfig {
        seed: 2024,
        ..Default::default()
    };
    let scene = generate_scene(&cfg)?;
    let truth = scene.ground_truth;

    let result = osa_cvl(&scene.poses, 0.0, &NullModelParams::default())?;
    println!("true camera   ({:.2}, {:.2}) heading {:.2}", truth.location.x, truth.location.y, truth.heading.degrees());
    match result.camera {
        Some(c) => println!(
            "estimate      ({:.2}, {:.2}) heading {:.2}, off by {:.2} m",
            c.location.x,
            c.location.y,
            c.heading.degrees(),
            c.location.distance(truth.location) * cfg.meters_per_pixel
        ),
        None => println!("estimate rejected"),
    }
    println!("lg eps        {:.2}", result.lg_eps);
    println!("inliers       {:?}", result.inlier_indices);
    let true_inliers: Vec<usize> = (0..cfg.n).filter(|&i| scene.inlier_mask[i]).collect();
    println!("true inliers  {true_inliers:?}");

    // where slice 0's scene could plausibly lie if the camera sat at the truth
    let sector = search_region(&SearchRegionParams {
        prior_center: truth.location,
        heading_prior: truth.heading,
        ..Default::default()
    })?;
    println!(
        "slice 0 search sector: radii {:.1}..{:.1} px, half angle {:.0} deg",
        sector.inner_radius, sector.outer_radius, sector.half_angle
    );
    Ok(())
}

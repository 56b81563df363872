//! Project a flat-ground depth panorama onto the reference map, slice by slice.

use std::f64::consts::FRAC_PI_2;

use slice_loc::projection::{scene_centroid, DepthPanorama, GeoTransform, SlicePlan};

fn main() -> slice_loc::Result<()> {
    let height = 2.0;
    let pano = DepthPanorama::from_fn(1440, 720, |_, omega| {
        if omega > FRAC_PI_2 {
            -height / omega.cos()
        } else {
            1000.0 // sky
        }
    })?;
    let plan = SlicePlan::default();
    let geo = GeoTransform::new(640.0, 640.0, 0.11)?;

    println!("{:>5} {:>8} {:>9} {:>9}", "slice", "center", "x", "y");
    for i in 0..plan.n {
        match scene_centroid(&plan, i, &pano, [0.0, 0.0, height], &geo)? {
            Some(p) => println!("{i:>5} {:>8.1} {:>9.2} {:>9.2}", plan.center(i).to_degrees(), p.x, p.y),
            None => println!("{i:>5} {:>8.1} {:>9} {:>9}", plan.center(i).to_degrees(), "-", "-"),
        }
    }
    Ok(())
}

//! Source coordinates for cutting pinhole slices out of an equirectangular panorama.

use slice_loc::projection::{equirect_to_pinhole_map, SlicePlan};

fn main() -> slice_loc::Result<()> {
    let plan = SlicePlan::default();
    let (w, h) = (2048, 1024);
    let s = plan.slice_size;
    for i in [0, 3, 6] {
        let map = equirect_to_pinhole_map(&plan, i, w, h)?;
        println!("slice {i} (center {:.0} deg)", plan.center(i).to_degrees());
        for (u, v) in [(0, 0), (s / 2, s / 2), (s - 1, s - 1)] {
            let (x, y) = map[v * s + u];
            println!("  dest ({u:>3}, {v:>3}) <- pano ({x:8.2}, {y:7.2})");
        }
    }
    Ok(())
}

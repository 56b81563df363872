//! Fit the background error model to naive poses from pure-noise scenes.

use slice_loc::nullmodel::{calibrate, q_cdf, NullModelParams};
use slice_loc::simulator::{simulate_null_thetas, ScenarioConfig};

fn main() -> slice_loc::Result<()> {
    let thetas = simulate_null_thetas(&ScenarioConfig::null(), 260_000)?;
    let fitted = calibrate(&thetas, 50.0, 132.0)?;
    let reference = NullModelParams::default();

    println!("fitted parameters:\n{}", fitted.to_key_values());
    println!("{:>6} {:>10} {:>10}", "theta", "Q fitted", "Q default");
    for t in [10.0, 30.0, 50.0, 80.0, 110.0, 132.0, 170.0] {
        println!("{t:>6} {:>10.4} {:>10.4}", q_cdf(t, &fitted), q_cdf(t, &reference));
    }
    Ok(())
}

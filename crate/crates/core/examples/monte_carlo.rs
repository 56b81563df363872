//! Seeded trials with and without scene information, summarized as metrics.

use slice_loc::cli::trial_record;
use slice_loc::eval::{metrics, EvalRecord, MetricsOptions, NegativeRule};
use slice_loc::simulator::{run_trials, ScenarioConfig};
use slice_loc::NullModelParams;

fn summarize(name: &str, cfg: &ScenarioConfig, rule: NegativeRule) -> slice_loc::Result<()> {
    let trials = run_trials(cfg, 2000, 0.0, &NullModelParams::default(), 0)?;
    let records = trials
        .iter()
        .map(|t| EvalRecord::from_result(&trial_record(t, cfg.meters_per_pixel)))
        .collect::<slice_loc::Result<Vec<_>>>()?;
    let m = metrics(
        &records,
        &MetricsOptions {
            rule: Some(rule),
            ..Default::default()
        },
    )?;
    println!("{name}");
    println!("  selected {:.1}% of {} trials", m.pos, m.records);
    if let (Some(loc), Some(ori)) = (m.location, m.orientation) {
        println!("  location error mean {:.3} m, median {:.3} m", loc.mean, loc.median);
        println!("  heading error mean {:.3} deg, median {:.3} deg", ori.mean, ori.median);
        for (t, p) in &m.location_below {
            println!("  below {t} m: {:.1}%", p.unwrap_or(0.0));
        }
    }
    if let Some(c) = m.confusion {
        println!("  TP {} FP {} TN {} FN {}, RoTN {:?}, Acc {:.3}", c.tp, c.fp, c.tn, c.fn_, c.rotn, c.acc);
    }
    Ok(())
}

fn main() -> slice_loc::Result<()> {
    summarize("one third outliers", &ScenarioConfig::default(), NegativeRule::localization())?;
    summarize(
        "pure noise",
        &ScenarioConfig {
            seed: 1,
            ..ScenarioConfig::null()
        },
        NegativeRule::ReferenceIncorrect,
    )?;
    Ok(())
}

//! Compare logit choice against guidance following on the firework
//! scenario, scoring each against a reference arrival series.
//!
//! cargo run --release --example firework_baselines [replications]

use crowdroute::engine::{replicate_map, run, Policy, RunOptions};
use crowdroute::eval::{arrivals, mae_rmse, MeanSd};
use crowdroute::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps: usize = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let mut dcm = scenarios::firework();
    dcm.replications = reps;
    let reference = arrivals(&run(&dcm, scenarios::FIREWORK_TRUTH_SEED)?.log, 300.0)?;
    println!("reference: {} arrivals in {} bins", reference.total(), reference.len());

    let follow = scenarios::with_policy(dcm.clone(), Policy::Follow);
    for sc in [&dcm, &follow] {
        let metrics = replicate_map(sc, 4, &RunOptions::default(), |_, out| {
            mae_rmse(&reference, &arrivals(&out.log, 300.0).expect("non-empty log")).expect("same bin width")
        })?;
        let mae = MeanSd::of(&metrics.iter().map(|m| m.mae).collect::<Vec<_>>());
        let rmse = MeanSd::of(&metrics.iter().map(|m| m.rmse).collect::<Vec<_>>());
        println!(
            "{:>6}: MAE {:.1} ± {:.1}, RMSE {:.1} ± {:.1}",
            sc.policy.name().to_string(),
            mae.mean,
            mae.sd,
            rmse.mean,
            rmse.sd
        );
    }
    Ok(())
}

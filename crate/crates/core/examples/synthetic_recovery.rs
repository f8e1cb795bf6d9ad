//! Draw choices from a known model and estimate it back.
//!
//! cargo run --release --example synthetic_recovery

use crowdroute::dcm::{estimate, EstimateOptions};
use crowdroute::scenarios;
use crowdroute::synth::{synthetic_observations, FeatureDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, truth) in [("evacuation", scenarios::evacuation_model()), ("firework", scenarios::firework_model())] {
        let spec = truth.spec();
        let obs = synthetic_observations(&truth, &FeatureDesign::for_spec(spec), 20_000, 3)?;
        let est = estimate(spec, &obs, &EstimateOptions::default())?;
        println!("{name}: {} iterations", est.report.iterations);
        let fitted = est.params.to_free(spec);
        for ((label, t), f) in spec.free_labels().iter().zip(truth.params().to_free(spec)).zip(fitted) {
            println!("  {label:>8} true {t:>7.3}  fitted {f:>7.3}");
        }
    }
    Ok(())
}

//! Fit a logit route-choice model to the bundled evacuation observations.
//!
//! cargo run --release --example estimate_model

use std::path::Path;

use crowdroute::dcm::io::{load_observations, parse_spec};
use crowdroute::dcm::{estimate, predict_accuracy, EstimateOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/evacuation");
    let spec = parse_spec(&std::fs::read_to_string(data.join("spec.toml"))?)?;
    let (spec, obs) = load_observations(&data.join("observations.csv"), Some(&spec))?;

    let est = estimate(&spec, &obs, &EstimateOptions::default())?;
    let model = est.model(&spec);
    println!("{} observations, converged: {}", obs.len(), est.report.converged);
    for (label, value) in spec.free_labels().iter().zip(est.params.to_free(&spec)) {
        println!("  {label:>8} {value:>8.3}");
    }
    println!("log-likelihood {:.2}, rho² {:.3}", est.log_likelihood, est.rho_squared());
    println!("in-sample accuracy {:.1}%", 100.0 * predict_accuracy(&model, &obs)?);
    Ok(())
}

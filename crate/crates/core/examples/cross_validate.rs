//! Five-fold cross-validation with individuals kept within one fold.
//!
//! cargo run --release --example cross_validate

use std::path::Path;

use crowdroute::dcm::io::load_observations;
use crowdroute::dcm::{k_fold_cv, EstimateOptions, Grouping};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/evacuation/observations.csv");
    let (spec, obs) = load_observations(&path, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let report = k_fold_cv(&spec, &obs, 5, Grouping::ByIndividual, &mut rng, &EstimateOptions::default())?;
    for (i, fold) in report.folds.iter().enumerate() {
        println!(
            "fold {i}: {} train / {} test, test accuracy {:.1}%",
            fold.n_train,
            fold.n_test,
            100.0 * fold.test_accuracy
        );
    }
    println!("mean {:.1}%, pooled {:.1}%", 100.0 * report.mean_accuracy, 100.0 * report.pooled_accuracy);
    Ok(())
}

//! Synthetic data: choice observations drawn from a known model, and
//! reference arrival series from a designated truth run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcm::{ChoiceModel, ChoiceObservation, DcmError, FeatureMatrix, UtilitySpec};
use crate::engine::{run, EngineError, Policy, Scenario};
use crate::eval::{arrivals, ArrivalSeries, EvalError};
use crate::features::{EVAC_FACTORS, FIREWORK_FACTORS};

/// How one factor is drawn for each alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorDistribution {
    Uniform { low: f64, high: f64 },
    /// 1 for a single random alternative, or for none with probability `none`.
    OneHot { none: f64 },
    /// Integer count in `0..=max`.
    Count { max: u32 },
    Bernoulli { p: f64 },
}

impl FactorDistribution {
    fn fill<R: Rng + ?Sized>(&self, x: &mut FeatureMatrix, factor: usize, rng: &mut R) {
        let n_alt = x.n_alternatives();
        match *self {
            FactorDistribution::Uniform { low, high } => {
                for a in 0..n_alt {
                    x.set(a, factor, rng.random_range(low..high));
                }
            }
            FactorDistribution::OneHot { none } => {
                if !rng.random_bool(none) {
                    x.set(rng.random_range(0..n_alt), factor, 1.0);
                }
            }
            FactorDistribution::Count { max } => {
                for a in 0..n_alt {
                    x.set(a, factor, rng.random_range(0..=max) as f64);
                }
            }
            FactorDistribution::Bernoulli { p } => {
                for a in 0..n_alt {
                    x.set(a, factor, f64::from(u8::from(rng.random_bool(p))));
                }
            }
        }
    }
}

/// Feature distributions, one per factor in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDesign {
    pub factors: Vec<FactorDistribution>,
    /// Consecutive observations sharing one individual id.
    pub observations_per_individual: usize,
}

impl FeatureDesign {
    /// DIST in metres to the route start, CH as the previous choice,
    /// NF and NB as neighbour counts.
    pub fn evacuation() -> Self {
        Self {
            factors: vec![
                FactorDistribution::Uniform { low: 0.5, high: 6.0 },
                FactorDistribution::OneHot { none: 1.0 / 3.0 },
                FactorDistribution::Count { max: 8 },
                FactorDistribution::Count { max: 8 },
            ],
            observations_per_individual: 5,
        }
    }

    /// DIST in kilometres, GUIDE as the recommended route, ATT as open attractions.
    pub fn firework() -> Self {
        Self {
            factors: vec![
                FactorDistribution::Uniform { low: 0.2, high: 0.8 },
                FactorDistribution::OneHot { none: 1.0 / 3.0 },
                FactorDistribution::Bernoulli { p: 0.5 },
            ],
            observations_per_individual: 1,
        }
    }

    /// The preset matching the spec's factor names, else unit-uniform factors.
    pub fn for_spec(spec: &UtilitySpec) -> Self {
        let names: Vec<&str> = spec.factor_names().iter().map(String::as_str).collect();
        if names == EVAC_FACTORS {
            Self::evacuation()
        } else if names == FIREWORK_FACTORS {
            Self::firework()
        } else {
            Self {
                factors: vec![FactorDistribution::Uniform { low: 0.0, high: 1.0 }; names.len()],
                observations_per_individual: 1,
            }
        }
    }
}

/// `n` observations with features from `design` and choices sampled from `model`.
pub fn synthetic_observations(
    model: &ChoiceModel,
    design: &FeatureDesign,
    n: usize,
    seed: u64,
) -> Result<Vec<ChoiceObservation>, DcmError> {
    let spec = model.spec();
    if design.factors.len() != spec.n_factors() {
        return Err(DcmError::Dimension(format!(
            "design has {} factors, model has {}",
            design.factors.len(),
            spec.n_factors()
        )));
    }
    let per = design.observations_per_individual.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = FeatureMatrix::zeros(spec.n_alternatives(), spec.n_factors());
        for (k, dist) in design.factors.iter().enumerate() {
            dist.fill(&mut x, k, &mut rng);
        }
        let chosen = model.sample_choice(&x, &mut rng)?;
        out.push(ChoiceObservation::new(format!("p{}", i / per), (i % per) as f64, x, chosen)?);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("the truth run needs a scenario with a logit policy")]
    NoModel,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Arrival series of one logit-policy run with `truth_seed`, standing in
/// for observed station counts.
pub fn reference_arrivals(scenario: &Scenario, truth_seed: u64, bin_width_s: f64) -> Result<ArrivalSeries, SynthError> {
    if !matches!(scenario.policy, Policy::Dcm(_)) {
        return Err(SynthError::NoModel);
    }
    let out = run(scenario, truth_seed)?;
    Ok(arrivals(&out.log, bin_width_s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcm::ParameterVector;

    #[test]
    fn observations_match_spec_and_are_seeded() {
        let model = ChoiceModel::new(
            UtilitySpec::evacuation(),
            ParameterVector {
                betas: vec![-1.33, 1.13, 0.202, -0.105],
                ascs: vec![0.0, 2.33],
            },
        )
        .unwrap();
        let design = FeatureDesign::for_spec(model.spec());
        let a = synthetic_observations(&model, &design, 50, 3).unwrap();
        let b = synthetic_observations(&model, &design, 50, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[4].individual_id, "p0");
        assert_eq!(a[5].individual_id, "p1");
        for obs in &a {
            let ch: f64 = (0..2).map(|j| obs.features.get(j, 1)).sum();
            assert!(ch <= 1.0);
        }
    }

    #[test]
    fn design_must_cover_every_factor() {
        let model = ChoiceModel::null(UtilitySpec::firework());
        let err = synthetic_observations(&model, &FeatureDesign::evacuation(), 5, 0);
        assert!(err.is_err());
    }
}

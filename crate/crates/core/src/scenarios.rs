//! The two shipped scenarios and their route-choice models, embedded so they
//! run without any files on disk.

use crate::dcm::io::model_from_toml;
use crate::dcm::ChoiceModel;
use crate::engine::{EngineError, Policy, Scenario};

pub const EVACUATION_SCENARIO: &str = include_str!("../data/evacuation/scenario.toml");
pub const EVACUATION_NETWORK: &str = include_str!("../data/evacuation/network.toml");
pub const EVACUATION_MODEL: &str = include_str!("../data/evacuation/model.toml");
pub const FIREWORK_SCENARIO: &str = include_str!("../data/firework/scenario.toml");
pub const FIREWORK_NETWORK: &str = include_str!("../data/firework/network.toml");
pub const FIREWORK_MODEL: &str = include_str!("../data/firework/model.toml");

/// Seed of the firework run that stands in for observed arrivals.
pub const FIREWORK_TRUTH_SEED: u64 = 900_001;

fn embedded(files: &'static [(&'static str, &'static str)]) -> impl FnMut(&str) -> Result<String, EngineError> {
    move |name| {
        files
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| EngineError::Io(format!("no embedded file {name:?}")))
    }
}

/// 52-agent evacuation through one hallway split, logit policy.
pub fn evacuation() -> Scenario {
    Scenario::from_toml_with(
        EVACUATION_SCENARIO,
        embedded(&[("network.toml", EVACUATION_NETWORK), ("model.toml", EVACUATION_MODEL)]),
    )
    .expect("shipped evacuation scenario is valid")
}

/// 34,839-agent firework dispersal to the station, logit policy.
pub fn firework() -> Scenario {
    Scenario::from_toml_with(
        FIREWORK_SCENARIO,
        embedded(&[("network.toml", FIREWORK_NETWORK), ("model.toml", FIREWORK_MODEL)]),
    )
    .expect("shipped firework scenario is valid")
}

/// Evacuation route-choice model with the published drill estimates.
pub fn evacuation_model() -> ChoiceModel {
    model_from_toml(EVACUATION_MODEL).expect("shipped model is valid").0
}

/// Firework junction-choice model with the published event estimates.
pub fn firework_model() -> ChoiceModel {
    model_from_toml(FIREWORK_MODEL).expect("shipped model is valid").0
}

/// `scenario` with its policy swapped.
pub fn with_policy(scenario: Scenario, policy: Policy) -> Scenario {
    scenario.with_policy(policy).expect("policy fits the shipped scenario")
}

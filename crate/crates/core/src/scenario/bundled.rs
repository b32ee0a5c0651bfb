//! Scenario files shipped with the crate.

use super::schema::Scenario;
use super::ScenarioError;

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../../scenarios/", $name, ".scn")))),*]
    };
}

/// `(name, file text)` for every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = bundle!(
    "battery",
    "circle",
    "disturbance15N",
    "freefall_guard",
    "ground_effect",
    "hover",
    "jitter5ms",
    "mass_step",
    "payload_oc",
    "slow_loops",
    "takeoff_hover_land",
);

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Source text of a bundled scenario, by name with or without `.scn`.
pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".scn").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml(source(name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?)
}

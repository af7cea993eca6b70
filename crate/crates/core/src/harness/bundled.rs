use super::config::{parse_config, ConfigIssue, ScenarioConfig};

pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(BundledScenario {
            name: $name,
            text: include_str!(concat!("../../../../scenarios/", $name, ".json")),
        }),*]
    };
}

pub const BUNDLED: &[BundledScenario] = bundle!(
    "epistemic_default",
    "growth_default",
    "evt_exponential",
    "flywheel_default",
    "mdp_research",
    "feedback_harmonic",
    "feedback_unstable",
    "game_lexicographic",
    "game_pd_finite",
    "policy_default",
);

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|b| b.name)
}

/// Parses the bundled scenario called `name`.
pub fn bundled(name: &str) -> Option<Result<ScenarioConfig, Vec<ConfigIssue>>> {
    BUNDLED.iter().find(|b| b.name == name).map(|b| parse_config(b.text))
}

//! Annotated scenarios shipped with the crate.

use super::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy)]
pub struct BuiltinScenario {
    pub name: &'static str,
    /// Annotated TOML source.
    pub source: &'static str,
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(BuiltinScenario { name: $name, source: include_str!(concat!("../../scenarios/", $name, ".toml")) }),*]
    };
}

pub const BUILTIN: &[BuiltinScenario] = builtin![
    "fairness",
    "fairness-grind",
    "hopping",
    "hopping-grind",
    "cross-period",
    "delay",
    "delay-late",
    "pplns-variance",
    "pps-imbalance",
    "cheater-batches",
    "adversarial",
];

pub fn find(name: &str) -> Option<&'static BuiltinScenario> {
    BUILTIN.iter().find(|s| s.name == name)
}

impl BuiltinScenario {
    pub fn config(&self) -> ScenarioConfig {
        ScenarioConfig::from_toml_str(self.source).unwrap_or_else(|e| panic!("built-in scenario '{}': {e}", self.name))
    }

    /// The headline comment of the source.
    pub fn headline(&self) -> &'static str {
        self.source.lines().next().and_then(|l| l.strip_prefix("# ")).unwrap_or("")
    }
}

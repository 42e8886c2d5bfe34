//! Scenario-driven simulation of the pool against its baselines.

pub mod builtin;
pub mod checks;
pub mod report;
pub mod scenario;
mod sim;
pub mod stats;

pub use checks::{evaluate, CheckResult};
pub use scenario::{CheckKind, ScenarioConfig, ScenarioError};
pub use sim::substream;
pub use stats::RunStats;

/// Runs a scenario after validating it.
pub fn run(cfg: &ScenarioConfig) -> Result<RunStats, ScenarioError> {
    cfg.validate()?;
    Ok(sim::simulate(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payment::Scheme;
    use crate::units::Amount;
    use stats::DepositOutcome;

    const TWO_MINERS: &str = r#"
name = "two-miners"
periods = 6
period_len = 20
prepare_len = 5
block_reward = 1
block_schedule = "fixed"
checks = ["budget"]

[mining]
shares_per_period = 40

[[miners]]
name = "small"
fraction = 0.25

[[miners]]
name = "large"
fraction = 0.75

[baselines]
schemes = ["pplns", "proportional", "pps"]
pplns_window = 20
"#;

    fn two_miners() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(TWO_MINERS).unwrap()
    }

    #[test]
    fn honest_run_pays_exact_shares_and_balances() {
        let stats = run(&two_miners()).unwrap();
        assert_eq!(stats.budget.violations, 0);
        assert_eq!(stats.pool_blocks.len(), 120);
        for block in &stats.pool_blocks {
            if block.period < 2 {
                assert_eq!(block.outcome, DepositOutcome::Unclaimable);
                continue;
            }
            assert_eq!(block.outcome, DepositOutcome::Claimed, "block {}", block.height);
            assert_eq!(block.credits, vec![Amount::from_ratio(1, 4), Amount::from_ratio(3, 4)]);
        }
        assert_eq!(stats.budget.warmup_residual, Amount::from_integer(40));
        assert_eq!(stats.budget.distributed, Amount::from_integer(80));
        assert_eq!(stats.budget.accounted(), stats.budget.pool_coinbase);
        assert_eq!(stats.exits.len(), 2);
        for scheme in [Scheme::Pplns, Scheme::Proportional, Scheme::Pps] {
            assert!(stats.rewards.contains_key(&scheme));
        }
    }

    #[test]
    fn runs_are_reproducible_per_seed() {
        let cfg = two_miners();
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }
}

//! Scenario configuration: TOML schema, defaults and validation.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payment::Scheme;
use crate::protocol::PeriodConfig;
use crate::units::{Amount, Fraction, Target};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningMode {
    /// Share counts exactly proportional to hashrate.
    #[default]
    Exact,
    /// Share counts drawn as Poisson(expected shares).
    Poisson,
    /// Real nonce grinding with a fixed hash budget per period.
    Grind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockSchedule {
    /// Each block's producer is drawn by hashrate.
    #[default]
    Lottery,
    /// Every miner produces exactly `fraction * period_len` blocks per
    /// period, in shuffled order.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    #[serde(default)]
    pub mode: MiningMode,
    #[serde(default = "default_difficulty")]
    pub share_difficulty: Target,
    /// Exact and Poisson modes: expected shares per period at 100% hashrate.
    #[serde(default = "default_shares_per_period")]
    pub shares_per_period: u64,
    /// Grind mode: hashes per period at 100% hashrate.
    #[serde(default = "default_hashes_per_period")]
    pub hashes_per_period: u64,
    #[serde(default = "default_challenges")]
    pub challenges_per_batch: u32,
    /// Upper bound on shares per batch; unset means one batch per period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<u64>,
}

fn default_shares_per_period() -> u64 {
    1000
}

fn default_hashes_per_period() -> u64 {
    20_000
}

fn default_challenges() -> u32 {
    1
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            mode: MiningMode::default(),
            share_difficulty: Target::ONE,
            shares_per_period: default_shares_per_period(),
            hashes_per_period: default_hashes_per_period(),
            challenges_per_batch: default_challenges(),
            batch_size: None,
        }
    }
}

fn default_difficulty() -> Target {
    Target::ONE
}

// Field-less variants are written as empty struct variants so that
// `deny_unknown_fields` also catches stray keys next to their `kind`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    /// Always in the pool, submits on time.
    Honest {},
    /// Never joins; keeps its own blocks.
    Solo {},
    /// In the pool for `cycle_len - 2` periods, then solo for two.
    PoolHopper { cycle_len: u64 },
    /// Work in period `i` is `allocation[i mod N]` of the network's
    /// per-period work.
    CrossPeriod { allocation: Vec<Fraction> },
    /// Publishes each period's batches `delay` main-chain blocks late.
    DelayedSubmitter { delay: u64 },
    /// Pads every batch with `invalid_fraction` shares that miss the target.
    Cheater { invalid_fraction: Fraction },
    /// Commits its blocks to a distribution paying only itself.
    SelfServing {},
    /// Links `factor` times the block reward it actually produced.
    OverClaim {
        #[serde(default = "default_overclaim")]
        factor: Fraction,
    },
}

fn default_overclaim() -> Fraction {
    Fraction::from_integer(2)
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Honest {}
    }
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Honest {} => "honest",
            Strategy::Solo {} => "solo",
            Strategy::PoolHopper { .. } => "pool-hopper",
            Strategy::CrossPeriod { .. } => "cross-period",
            Strategy::DelayedSubmitter { .. } => "delayed-submitter",
            Strategy::Cheater { .. } => "cheater",
            Strategy::SelfServing {} => "self-serving",
            Strategy::OverClaim { .. } => "over-claim",
        }
    }

    /// Whether the miner mines for the pool during `period`.
    pub fn in_pool(&self, period: u64) -> bool {
        match self {
            Strategy::Solo {} => false,
            Strategy::PoolHopper { cycle_len } => period % cycle_len < cycle_len - 2,
            _ => true,
        }
    }

    pub fn delay(&self) -> u64 {
        match self {
            Strategy::DelayedSubmitter { delay } => *delay,
            _ => 0,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerConfig {
    pub name: String,
    /// Share of total network hashrate.
    pub fraction: Fraction,
    #[serde(default)]
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Baseline schemes replayed over the pool's share stream.
    #[serde(default)]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_window")]
    pub pplns_window: usize,
    /// Per unit of work; defaults to the fair rate `B * L / work_per_period`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pps_rate: Option<Amount>,
    #[serde(default)]
    pub pps_bankroll: Amount,
}

fn default_window() -> usize {
    100
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { schemes: Vec::new(), pplns_window: default_window(), pps_rate: None, pps_bankroll: Amount::zero() }
    }
}

/// Property checks a scenario can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Fairness,
    Budget,
    Variance,
    Hopping,
    CrossPeriod,
    Delay,
    PplnsVariance,
    PpsImbalance,
    Cheating,
    Settlement,
    SelfServing,
    Determinism,
}

impl CheckKind {
    pub fn label(self) -> &'static str {
        match self {
            CheckKind::Fairness => "fairness",
            CheckKind::Budget => "budget",
            CheckKind::Variance => "variance",
            CheckKind::Hopping => "hopping",
            CheckKind::CrossPeriod => "cross-period",
            CheckKind::Delay => "delay",
            CheckKind::PplnsVariance => "pplns-variance",
            CheckKind::PpsImbalance => "pps-imbalance",
            CheckKind::Cheating => "cheating",
            CheckKind::Settlement => "settlement",
            CheckKind::SelfServing => "self-serving",
            CheckKind::Determinism => "determinism",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Run length in periods.
    pub periods: u64,
    /// Main-chain blocks per period.
    pub period_len: u64,
    /// Blocks at the end of each period that form the Prepare phase.
    pub prepare_len: u64,
    /// Mean main-chain block interval.
    #[serde(default = "default_block_interval")]
    pub block_interval: f64,
    /// Storage-chain block interval; defaults to a quarter block interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_interval: Option<f64>,
    pub block_reward: Amount,
    #[serde(default)]
    pub block_schedule: BlockSchedule,
    /// Property checks evaluated by `run --check`.
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub mining: MiningConfig,
    pub miners: Vec<MinerConfig>,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

/// Longest cross-period allocation the grid search enumerates.
const MAX_GRID_PERIODS: usize = 6;

fn default_seed() -> u64 {
    1
}

fn default_block_interval() -> f64 {
    600.0
}

fn rational(f: &Fraction) -> &BigRational {
    &f.0
}

fn is_integer_multiple(fraction: &BigRational, n: u64) -> bool {
    (fraction * BigRational::from_integer(BigInt::from(n))).is_integer()
}

impl ScenarioConfig {
    /// Parses and validates a TOML scenario.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective configuration, defaults filled in, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is serializable")
    }

    pub fn period_config(&self) -> PeriodConfig {
        PeriodConfig::new(self.period_len, self.prepare_len, self.block_interval).expect("validated geometry")
    }

    pub fn storage_interval(&self) -> f64 {
        self.storage_interval.unwrap_or(self.block_interval / 4.0)
    }

    pub fn total_blocks(&self) -> u64 {
        self.periods * self.period_len
    }

    /// Network-wide work per period in hashes.
    pub fn work_per_period(&self) -> BigRational {
        let d = self.mining.share_difficulty.to_rational();
        match self.mining.mode {
            MiningMode::Exact | MiningMode::Poisson => BigRational::from_integer(self.mining.shares_per_period.into()) / d,
            MiningMode::Grind => BigRational::from_integer(self.mining.hashes_per_period.into()),
        }
    }

    /// Fraction of network work miner `idx` spends on the pool in `period`.
    pub fn work_fraction(&self, idx: usize, period: u64) -> BigRational {
        let m = &self.miners[idx];
        match &m.strategy {
            Strategy::CrossPeriod { allocation } => allocation[(period % allocation.len() as u64) as usize].0.clone(),
            _ => m.fraction.0.clone(),
        }
    }

    /// Every constraint violation, not just the first.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name must not be empty".to_string());
        }
        if self.periods == 0 {
            errs.push("periods must be at least 1".to_string());
        }
        if self.prepare_len == 0 {
            errs.push("prepare_len must be at least 1".to_string());
        }
        if self.prepare_len >= self.period_len {
            errs.push(format!("prepare_len ({}) must be less than period_len ({})", self.prepare_len, self.period_len));
        } else if self.period_len < 2 * self.prepare_len {
            errs.push(format!("period_len ({}) must be at least 2 * prepare_len ({})", self.period_len, self.prepare_len));
        }
        if !(self.block_interval > 0.0 && self.block_interval.is_finite()) {
            errs.push("block_interval must be positive".to_string());
        }
        if let Some(s) = self.storage_interval {
            if !(s > 0.0 && s.is_finite()) {
                errs.push("storage_interval must be positive".to_string());
            }
        }
        if !self.block_reward.is_positive() {
            errs.push("block_reward must be positive".to_string());
        }
        if self.mining.challenges_per_batch == 0 {
            errs.push("mining.challenges_per_batch must be at least 1".to_string());
        }
        if self.mining.batch_size == Some(0) {
            errs.push("mining.batch_size must be at least 1".to_string());
        }
        match self.mining.mode {
            MiningMode::Exact | MiningMode::Poisson if self.mining.shares_per_period == 0 => {
                errs.push("mining.shares_per_period must be at least 1".to_string())
            }
            MiningMode::Grind if self.mining.hashes_per_period == 0 => errs.push("mining.hashes_per_period must be at least 1".to_string()),
            _ => {}
        }
        if self.baselines.pplns_window == 0 {
            errs.push("baselines.pplns_window must be at least 1".to_string());
        }
        if self.baselines.schemes.contains(&Scheme::FProportional) {
            errs.push("baselines.schemes lists baselines only; fproportional always runs".to_string());
        }
        if self.baselines.pps_rate.as_ref().is_some_and(|r| !r.is_positive()) {
            errs.push("baselines.pps_rate must be positive".to_string());
        }
        self.validate_miners(&mut errs);
        self.validate_checks(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    fn validate_miners(&self, errs: &mut Vec<String>) {
        if self.miners.is_empty() {
            errs.push("at least one miner is required".to_string());
            return;
        }
        let mut names = BTreeSet::new();
        let mut total = BigRational::zero();
        for m in &self.miners {
            if !names.insert(m.name.as_str()) {
                errs.push(format!("miner name '{}' is used twice", m.name));
            }
            if m.name.contains([',', '"', '\n']) || m.name.is_empty() {
                errs.push(format!("miner name '{}' must be non-empty without commas, quotes or newlines", m.name));
            }
            if !m.fraction.is_positive() {
                errs.push(format!("miner '{}': fraction must be positive", m.name));
            }
            total += rational(&m.fraction);
            self.validate_strategy(m, errs);
            if self.block_schedule == BlockSchedule::Fixed && !is_integer_multiple(&m.fraction.0, self.period_len) {
                errs.push(format!(
                    "miner '{}': fixed block schedule needs fraction * period_len to be an integer (got {})",
                    m.name,
                    Fraction(&m.fraction.0 * BigRational::from_integer(self.period_len.into()))
                ));
            }
        }
        if total != BigRational::one() {
            errs.push(format!("miner fractions must sum to 1 (got {})", Fraction(total)));
        }
        for (idx, m) in self.miners.iter().enumerate() {
            let fractions: Vec<BigRational> = match &m.strategy {
                Strategy::CrossPeriod { allocation } => allocation.iter().map(|a| a.0.clone()).collect(),
                _ => vec![self.work_fraction(idx, 0)],
            };
            let (unit, label) = match self.mining.mode {
                MiningMode::Exact => (self.mining.shares_per_period, "mining.shares_per_period"),
                MiningMode::Grind => (self.mining.hashes_per_period, "mining.hashes_per_period"),
                MiningMode::Poisson => continue,
            };
            if fractions.iter().any(|f| !is_integer_multiple(f, unit)) {
                errs.push(format!("miner '{}': work fractions times {label} ({unit}) must be integers", m.name));
            }
        }
    }

    fn validate_strategy(&self, m: &MinerConfig, errs: &mut Vec<String>) {
        match &m.strategy {
            Strategy::PoolHopper { cycle_len } if *cycle_len < 4 => {
                errs.push(format!("miner '{}': pool-hopper cycle_len must be at least 4", m.name))
            }
            Strategy::CrossPeriod { allocation } => {
                if allocation.is_empty() {
                    errs.push(format!("miner '{}': cross-period allocation must not be empty", m.name));
                    return;
                }
                if allocation.iter().any(Fraction::is_negative) {
                    errs.push(format!("miner '{}': cross-period allocation entries must be non-negative", m.name));
                }
                let sum: BigRational = allocation.iter().map(|a| a.0.clone()).sum();
                let budget = &m.fraction.0 * BigRational::from_integer(BigInt::from(allocation.len()));
                if sum != budget {
                    errs.push(format!(
                        "miner '{}': cross-period allocation must sum to N * fraction = {} (got {})",
                        m.name,
                        Fraction(budget),
                        Fraction(sum)
                    ));
                }
            }
            Strategy::Cheater { invalid_fraction } => {
                if invalid_fraction.is_negative() || invalid_fraction.0 >= BigRational::one() {
                    errs.push(format!("miner '{}': cheater invalid_fraction must lie in [0, 1)", m.name));
                }
                if self.mining.mode == MiningMode::Grind {
                    errs.push(format!("miner '{}': cheater needs exact or poisson mining mode", m.name));
                }
                if self.mining.share_difficulty == Target::ONE {
                    errs.push(format!("miner '{}': cheater needs mining.share_difficulty below 1 so that invalid shares exist", m.name));
                }
            }
            Strategy::OverClaim { factor } if factor.0 <= BigRational::one() => {
                errs.push(format!("miner '{}': over-claim factor must exceed 1", m.name))
            }
            _ => {}
        }
    }

    fn validate_checks(&self, errs: &mut Vec<String>) {
        let count = |label: &str| self.miners.iter().filter(|m| m.strategy.label() == label).count();
        let has = |label: &str| count(label) > 0;
        let steady = self.miners.iter().any(|m| !matches!(m.strategy, Strategy::Solo {} | Strategy::PoolHopper { .. }));
        for check in &self.checks {
            let problem = match check {
                CheckKind::Fairness | CheckKind::Variance
                    if self
                        .miners
                        .iter()
                        .any(|m| !matches!(m.strategy, Strategy::Honest {} | Strategy::Solo {} | Strategy::DelayedSubmitter { .. })) =>
                {
                    Some("needs every miner to be honest, solo or a delayed submitter")
                }
                CheckKind::Fairness | CheckKind::Variance if !self.miners.iter().any(|m| m.strategy.in_pool(0)) => {
                    Some("needs at least one pool miner")
                }
                CheckKind::Hopping if count("pool-hopper") != 1 => Some("needs exactly one pool-hopper miner"),
                CheckKind::Hopping if self.mining.mode == MiningMode::Exact && self.block_schedule != BlockSchedule::Fixed => {
                    Some("in exact mode needs the fixed block schedule so per-period rewards are constant")
                }
                CheckKind::CrossPeriod if !has("cross-period") => Some("needs a cross-period miner"),
                CheckKind::CrossPeriod if has("solo") || has("pool-hopper") => Some("needs every miner in the pool"),
                CheckKind::CrossPeriod if self.mining.mode != MiningMode::Exact => Some("needs exact mining mode"),
                CheckKind::CrossPeriod
                    if self
                        .miners
                        .iter()
                        .any(|m| matches!(&m.strategy, Strategy::CrossPeriod { allocation } if allocation.len() > MAX_GRID_PERIODS)) =>
                {
                    Some("supports allocations over at most 6 periods")
                }
                CheckKind::Delay if !has("delayed-submitter") => Some("needs a delayed-submitter miner"),
                CheckKind::PplnsVariance if !self.baselines.schemes.contains(&Scheme::Pplns) => Some("needs the pplns baseline"),
                CheckKind::PplnsVariance if !steady => Some("needs a miner that stays in the pool"),
                CheckKind::Settlement if !has("over-claim") => Some("needs an over-claim miner"),
                CheckKind::PpsImbalance if !self.baselines.schemes.contains(&Scheme::Pps) => Some("needs the pps baseline"),
                CheckKind::Cheating if !has("cheater") => Some("needs a cheater miner"),
                CheckKind::SelfServing if !has("self-serving") => Some("needs a self-serving miner"),
                _ => None,
            };
            if let Some(p) = problem {
                errs.push(format!("check '{}' {p}", check.label()));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
periods = 4
period_len = 20
prepare_len = 5
block_reward = 1

[[miners]]
name = "a"
fraction = 0.25

[[miners]]
name = "b"
fraction = 0.75
"#;

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.mining.mode, MiningMode::Exact);
        assert_eq!(cfg.mining.share_difficulty, Target::ONE);
        assert_eq!(cfg.miners[0].fraction, Fraction::from_ratio(1, 4));
        assert_eq!(cfg.miners[1].strategy, Strategy::Honest {});
        let echoed = cfg.to_toml();
        assert_eq!(ScenarioConfig::from_toml_str(&echoed).unwrap(), cfg);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let text = MINIMAL.replace("0.75", "0.95");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("sum to 1 (got 6/5)"), "{err}");
    }

    #[test]
    fn prepare_must_fit_in_period() {
        let text = MINIMAL.replace("prepare_len = 5", "prepare_len = 20");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("prepare_len (20) must be less than period_len (20)"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("block_reward = 1", "block_reward = 1\nblok_interval = 3");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("fraction = 0.25", "fraction = 0.25\nstrategy = { kind = \"honest\", delay = 2 }");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn all_violations_are_listed() {
        let text = MINIMAL.replace("periods = 4", "periods = 0").replace("0.75", "0.5").replace("block_reward = 1", "block_reward = 0");
        match ScenarioConfig::from_toml_str(&text) {
            Err(ScenarioError::Invalid(list)) => assert_eq!(list.len(), 3, "{list:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strategies_parse() {
        let text = MINIMAL
            .replace("fraction = 0.25", "fraction = 0.25\nstrategy = { kind = \"pool-hopper\", cycle_len = 10 }")
            .replace("fraction = 0.75", "fraction = 0.75\nstrategy = { kind = \"cross-period\", allocation = [1, 0.5] }");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.miners[0].strategy, Strategy::PoolHopper { cycle_len: 10 });
        assert!(cfg.miners[0].strategy.in_pool(7));
        assert!(!cfg.miners[0].strategy.in_pool(8));
        assert!(!cfg.miners[0].strategy.in_pool(9));
        assert!(cfg.miners[0].strategy.in_pool(10));
        assert_eq!(cfg.work_fraction(1, 3), BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn cross_period_budget_is_enforced() {
        let text = MINIMAL.replace("fraction = 0.75", "fraction = 0.75\nstrategy = { kind = \"cross-period\", allocation = [1, 1] }");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("N * fraction = 3/2"), "{err}");
    }

    #[test]
    fn exact_mode_needs_integer_share_counts() {
        let text = MINIMAL.replace("block_reward = 1", "block_reward = 1\n[mining]\nshares_per_period = 10");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("must be integers"), "{err}");
    }

    #[test]
    fn checks_require_matching_miners() {
        let text = MINIMAL.replace("block_reward = 1", "block_reward = 1\nchecks = [\"hopping\"]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("needs exactly one pool-hopper"), "{err}");
    }
}

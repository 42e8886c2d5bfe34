//! Randomized small scenarios: whatever the strategies, every unit of pool
//! coinbase ends up either distributed or in a named residual.

use fiberpool::engine::{run, ScenarioConfig};
use fiberpool::payment::Scheme;
use fiberpool::units::Amount;
use proptest::prelude::*;

fn strategy_toml() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        Just("strategy = { kind = \"solo\" }".to_string()),
        Just("strategy = { kind = \"self-serving\" }".to_string()),
        Just("strategy = { kind = \"over-claim\" }".to_string()),
        (4u64..7).prop_map(|c| format!("strategy = {{ kind = \"pool-hopper\", cycle_len = {c} }}")),
        (0u64..30).prop_map(|d| format!("strategy = {{ kind = \"delayed-submitter\", delay = {d} }}")),
    ]
}

/// Splits 20 twentieths among one to four miners.
fn miners() -> impl Strategy<Value = Vec<(u64, String)>> {
    prop::collection::vec((1u64..10, strategy_toml()), 1..5).prop_map(|ms| {
        let weight: u64 = ms.iter().map(|(w, _)| w).sum();
        let mut left = 20u64;
        let mut out = Vec::new();
        for (i, (w, s)) in ms.iter().enumerate() {
            let share = if i + 1 == ms.len() { left } else { (w * 20 / weight).clamp(1, left - (ms.len() - i - 1) as u64) };
            left -= share;
            out.push((share, s.clone()));
        }
        out.retain(|(share, _)| *share > 0);
        out
    })
}

fn scenario(seed: u64, periods: u64, period_len: u64, poisson: bool, miners: &[(u64, String)]) -> String {
    let mut toml = format!(
        "name = \"prop\"\nseed = {seed}\nperiods = {periods}\nperiod_len = {period_len}\nprepare_len = {}\nblock_reward = 3\nchecks = [\"budget\"]\n\n[mining]\nmode = \"{}\"\nshares_per_period = 200\n",
        period_len / 4,
        if poisson { "poisson" } else { "exact" }
    );
    for (i, (share, strategy)) in miners.iter().enumerate() {
        toml.push_str(&format!("\n[[miners]]\nname = \"m{i}\"\nfraction = \"{share}/20\"\n{strategy}\n"));
    }
    toml
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pool_coinbase_is_fully_accounted(
        seed in 0u64..1 << 62,
        periods in 3u64..9,
        period_len in 4u64..16,
        poisson in any::<bool>(),
        miners in miners(),
    ) {
        let cfg = ScenarioConfig::from_toml_str(&scenario(seed, periods, period_len, poisson, &miners)).expect("generated scenario is valid");
        let stats = run(&cfg).expect("runs");
        let b = &stats.budget;
        prop_assert_eq!(b.violations, 0);
        prop_assert_eq!(b.accounted(), b.pool_coinbase.clone());
        // Reward totals include income from blocks mined outside the pool.
        let paid: Amount = (0..stats.miners.len()).map(|m| stats.total_reward(Scheme::FProportional, m)).sum();
        let solo: Amount = stats.solo_income.iter().flatten().sum();
        prop_assert_eq!(paid - solo, b.distributed.clone());
    }
}

//! Text renderings of a run: the per-period reward CSV and a summary.

use std::fmt::Write as _;

use super::checks::CheckResult;
use super::stats::{DepositOutcome, RunStats};
use crate::units::Amount;

/// Column order of [`rewards_csv`].
pub const CSV_HEADER: &str = "run_id,scheme,miner,period,reward,cumulative,reward_decimal,cumulative_decimal";

const DECIMALS: usize = 9;

pub fn run_id(stats: &RunStats) -> String {
    format!("{}-s{}", stats.scenario, stats.seed)
}

/// One row per (scheme, miner, period); rewards exact as `n/d` plus a
/// truncated decimal rendering.
pub fn rewards_csv(stats: &RunStats) -> String {
    let id = run_id(stats);
    let mut out = String::with_capacity(64 * stats.miners.len() * stats.periods as usize * stats.rewards.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (scheme, matrix) in &stats.rewards {
        for (miner, row) in stats.miners.iter().zip(matrix) {
            let mut cumulative = Amount::zero();
            for (period, reward) in row.iter().enumerate() {
                cumulative += reward;
                let _ = writeln!(
                    out,
                    "{id},{scheme},{},{period},{},{},{},{}",
                    miner.name,
                    reward.exact(),
                    cumulative.exact(),
                    reward.decimal(DECIMALS),
                    cumulative.decimal(DECIMALS)
                );
            }
        }
    }
    out
}

pub fn summary(stats: &RunStats, checks: &[CheckResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run {} ({} periods x {} blocks, block reward {})", run_id(stats), stats.periods, stats.period_len, stats.block_reward);
    let _ = writeln!(out, "\nminers");
    for m in &stats.miners {
        let _ = writeln!(out, "  {:<16} fraction {:<8} {}", m.name, m.fraction.to_string(), m.strategy);
    }

    let _ = writeln!(out, "\ntotal reward by scheme");
    for (scheme, matrix) in &stats.rewards {
        let _ = write!(out, "  {:<14}", scheme.tag());
        for (m, row) in stats.miners.iter().zip(matrix) {
            let total: Amount = row.iter().sum();
            let _ = write!(out, " {}={}", m.name, total.decimal(6));
        }
        out.push('\n');
    }

    let b = &stats.budget;
    let count = |o: DepositOutcome| stats.pool_blocks.iter().filter(|p| p.outcome == o).count();
    let _ = writeln!(out, "\nbudget");
    let _ = writeln!(out, "  pool coinbase            {}", b.pool_coinbase);
    let _ = writeln!(out, "  distributed              {}", b.distributed);
    let _ = writeln!(out, "  warm-up residual         {}", b.warmup_residual);
    let _ = writeln!(out, "  empty-period residual    {}", b.empty_distribution_residual);
    let _ = writeln!(out, "  invalidated residual     {}", b.invalidated_residual);
    let _ = writeln!(out, "  unmatched residual       {}", b.unmatched_residual);
    let _ = writeln!(out, "  withdrawn                {}", b.withdrawn);
    let _ = writeln!(out, "  conservation checks      {} ({} violations)", b.checks, b.violations);
    let _ = writeln!(
        out,
        "  pool blocks              {} claimed, {} unclaimable, {} invalidated, {} unmatched",
        count(DepositOutcome::Claimed),
        count(DepositOutcome::Unclaimable),
        count(DepositOutcome::Invalidated),
        count(DepositOutcome::Unmatched)
    );
    let l = &stats.links;
    let _ = writeln!(
        out,
        "  links                    honest {}/{} validated, over-claims {} validated / {} invalidated",
        l.honest_validated,
        l.honest_validated + l.honest_invalidated,
        l.overclaim_validated,
        l.overclaim_invalidated
    );
    let accepted = stats.batches.iter().filter(|r| r.accepted_work.is_some()).count();
    let _ = writeln!(out, "  batches                  {accepted}/{} accepted", stats.batches.len());
    if let Some(imbalance) = &stats.pps_imbalance {
        let _ = writeln!(out, "  pps bankroll change      {}", imbalance.decimal(6));
    }

    if !checks.is_empty() {
        let _ = writeln!(out, "\nchecks");
        for c in checks {
            let _ = writeln!(out, "  {c}");
        }
        let failed = checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(out, "  {} passed, {failed} failed", checks.len() - failed);
    }
    out
}

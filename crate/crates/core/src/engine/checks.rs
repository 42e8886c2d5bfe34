//! Measured-versus-analytic checks over a finished run.
//!
//! Exact-mode checks compare rationals with zero tolerance. Sampled modes
//! compare against a binomial or Poisson standard error and pass within
//! three of them.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use super::report::rewards_csv;
use super::scenario::{BlockSchedule, CheckKind, MiningMode, ScenarioConfig, Strategy};
use super::sim::simulate;
use super::stats::{DepositOutcome, RunStats};
use crate::payment::{mean_and_variance, Scheme};
use crate::units::{format_rational, Amount, Fraction};
use crate::verification::expected_reward_under_cheating;

/// Standard errors a sampled statistic may stray from its oracle.
pub const SIGMA_BOUND: f64 = 3.0;
/// Relative tolerance of the PPLNS variance check.
pub const PPLNS_RELATIVE_TOLERANCE: f64 = 0.05;
/// Grid resolution of the cross-period allocation search.
pub const GRID_STEPS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: String,
    pub expected: String,
    pub tolerance: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:<14} measured {} vs expected {} ({})", self.name, self.measured, self.expected, self.tolerance)?;
        if !self.detail.is_empty() {
            write!(f, "; {}", self.detail)?;
        }
        Ok(())
    }
}

fn result(
    kind: CheckKind,
    measured: impl ToString,
    expected: impl ToString,
    tolerance: impl ToString,
    passed: bool,
    detail: impl ToString,
) -> CheckResult {
    CheckResult {
        name: kind.label(),
        measured: measured.to_string(),
        expected: expected.to_string(),
        tolerance: tolerance.to_string(),
        passed,
        detail: detail.to_string(),
    }
}

fn ratio(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn f64_of(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Within `SIGMA_BOUND` standard errors; a zero error demands equality.
fn within_sigma(measured: f64, expected: f64, sigma: f64) -> bool {
    if sigma == 0.0 {
        measured == expected
    } else {
        (measured - expected).abs() <= SIGMA_BOUND * sigma
    }
}

fn sigma_tolerance(sigma: f64) -> String {
    format!("±{SIGMA_BOUND}σ, σ = {sigma:.6}")
}

fn first_with(cfg: &ScenarioConfig, label: &str) -> Option<usize> {
    cfg.miners.iter().position(|m| m.strategy.label() == label)
}

/// Miners that mine for the pool in every period.
fn steady_pool(cfg: &ScenarioConfig) -> Vec<usize> {
    cfg.miners.iter().enumerate().filter(|(_, m)| !matches!(m.strategy, Strategy::Solo {} | Strategy::PoolHopper { .. })).map(|(i, _)| i).collect()
}

fn pool_fraction(cfg: &ScenarioConfig, members: &[usize]) -> BigRational {
    members.iter().map(|&i| cfg.miners[i].fraction.0.clone()).sum()
}

fn steady_blocks(stats: &RunStats) -> impl Iterator<Item = &super::stats::PoolBlock> {
    stats.pool_blocks.iter().filter(|b| b.period >= 2)
}

/// Evaluates every check the scenario requests.
pub fn evaluate(cfg: &ScenarioConfig, stats: &RunStats) -> Vec<CheckResult> {
    cfg.checks.iter().map(|&kind| evaluate_one(kind, cfg, stats)).collect()
}

pub fn evaluate_one(kind: CheckKind, cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    match kind {
        CheckKind::Fairness => fairness(cfg, stats),
        CheckKind::Budget => budget(stats),
        CheckKind::Variance => variance(cfg, stats),
        CheckKind::Hopping => hopping(cfg, stats),
        CheckKind::CrossPeriod => cross_period(cfg, stats),
        CheckKind::Delay => delay(cfg, stats),
        CheckKind::PplnsVariance => pplns_variance(cfg, stats),
        CheckKind::PpsImbalance => pps_imbalance(cfg, stats),
        CheckKind::Cheating => cheating(cfg, stats),
        CheckKind::Settlement => settlement(stats),
        CheckKind::SelfServing => self_serving(cfg, stats),
        CheckKind::Determinism => determinism(cfg, stats),
    }
}

fn fairness(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::Fairness;
    let pool = steady_pool(cfg);
    let total = pool_fraction(cfg, &pool);
    let first = pool[0];
    let expected = &cfg.miners[first].fraction.0 / &total;
    let blocks: Vec<_> = steady_blocks(stats).collect();
    let unpaid = blocks.iter().filter(|b| b.outcome != DepositOutcome::Claimed).count();
    if blocks.is_empty() || unpaid > 0 {
        return result(
            kind,
            "-",
            format_rational(&expected),
            "-",
            false,
            format!("{} steady-state pool blocks, {unpaid} not paid out", blocks.len()),
        );
    }
    let reward = &stats.block_reward.0;

    if cfg.mining.mode == MiningMode::Exact {
        let mismatched = blocks.iter().filter(|b| pool.iter().any(|&m| b.credits[m].0 != reward * &cfg.miners[m].fraction.0 / &total)).count();
        let measured = &blocks[0].credits[first].0 / reward;
        return result(
            kind,
            format_rational(&measured),
            format_rational(&expected),
            "exact",
            mismatched == 0,
            format!("{}: share of each of {} pool blocks from period 2; {mismatched} blocks off", cfg.miners[first].name, blocks.len()),
        );
    }

    // Each block of period k pays the period k-2 split, a binomial share
    // fraction over that period's accepted shares.
    let p = f64_of(&expected);
    let credited: BigRational = blocks.iter().map(|b| &b.credits[first].0).sum();
    let measured = f64_of(&(credited / (reward * ratio(blocks.len() as u64))));
    let mut var_sum = 0.0;
    for period in 2..stats.periods {
        let n = blocks.iter().filter(|b| b.period == period).count() as f64;
        let shares: u64 = pool.iter().map(|&m| stats.accepted_shares[(period - 2) as usize][m]).sum();
        if n > 0.0 && shares > 0 {
            var_sum += n * n * p * (1.0 - p) / shares as f64;
        }
    }
    let sigma = var_sum.sqrt() / blocks.len() as f64;
    result(
        kind,
        format!("{measured:.6}"),
        format!("{p:.6}"),
        sigma_tolerance(sigma),
        within_sigma(measured, p, sigma),
        format!("{}: share of {} pool blocks from period 2", cfg.miners[first].name, blocks.len()),
    )
}

fn budget(stats: &RunStats) -> CheckResult {
    let b = &stats.budget;
    // Warm-up blocks whose links were rejected or unmatched are frozen
    // under those headings instead; with honest producers only, this is
    // all pool coinbase of periods 0 and 1.
    let warmup: Amount = stats.pool_blocks.iter().filter(|p| p.period < 2 && p.outcome == DepositOutcome::Unclaimable).map(|p| &p.linked).sum();
    let warmup_coinbase: Amount = b.pool_coinbase_by_period.iter().take(2).sum();
    let balanced = b.accounted() == b.pool_coinbase;
    let passed = b.violations == 0 && balanced && b.warmup_residual == warmup;
    result(
        CheckKind::Budget,
        format!("distributed + residuals = {}", b.accounted()),
        format!("pool coinbase = {}", b.pool_coinbase),
        "exact, every block",
        passed,
        format!(
            "{} violations in {} checks; warm-up residual {} vs deposited warm-up rewards {warmup} (periods 0-1 pool coinbase {warmup_coinbase})",
            b.violations, b.checks, b.warmup_residual
        ),
    )
}

fn exact_variance(xs: &[BigRational]) -> BigRational {
    if xs.is_empty() {
        return BigRational::zero();
    }
    let n = ratio(xs.len() as u64);
    let mean: BigRational = xs.iter().sum::<BigRational>() / &n;
    xs.iter().map(|x| (x - &mean) * (x - &mean)).sum::<BigRational>() / n
}

fn variance(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let pool = steady_pool(cfg);
    let exact = cfg.mining.mode == MiningMode::Exact;
    let mut worst = BigRational::zero();
    for &m in &pool {
        // Exact mode: across all steady blocks. Sampled modes: within each
        // period, where the split is fixed by the committed distribution.
        let mut groups: BTreeMap<u64, Vec<BigRational>> = BTreeMap::new();
        for b in steady_blocks(stats) {
            groups.entry(if exact { 0 } else { b.period }).or_default().push(b.credits[m].0.clone());
        }
        for g in groups.values() {
            worst = worst.max(exact_variance(g));
        }
    }
    let scope = if exact { "across all blocks from period 2" } else { "within each period from 2" };
    result(
        CheckKind::Variance,
        format_rational(&worst),
        "0",
        "exact",
        worst.is_zero(),
        format!("largest per-block reward variance of any pool miner {scope}"),
    )
}

fn hopping(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::Hopping;
    let hopper = first_with(cfg, "pool-hopper").expect("validated");
    let Strategy::PoolHopper { cycle_len } = cfg.miners[hopper].strategy else { unreachable!() };
    let mut solo_cfg = cfg.clone();
    solo_cfg.miners[hopper].strategy = Strategy::Solo {};
    solo_cfg.checks.clear();
    let solo = simulate(&solo_cfg);

    let alpha = &cfg.miners[hopper].fraction.0;
    let beta = pool_fraction(cfg, &steady_pool(cfg));
    let per_period = &stats.block_reward.0 * ratio(cfg.period_len);
    let expected = ratio(2) * per_period * alpha * alpha / (alpha + &beta);

    let cycles = stats.periods / cycle_len;
    let row = |s: &RunStats| s.rewards[&Scheme::FProportional][hopper].clone();
    let (hop, alone) = (row(stats), row(&solo));
    let losses: Vec<BigRational> = (0..cycles)
        .map(|c| {
            let span = (c * cycle_len) as usize..((c + 1) * cycle_len) as usize;
            span.map(|k| &alone[k].0 - &hop[k].0).sum()
        })
        .collect();
    if losses.is_empty() {
        return result(kind, "-", format_rational(&expected), "-", false, "run shorter than one cycle");
    }

    if cfg.mining.mode == MiningMode::Exact {
        let off = losses.iter().filter(|l| **l != expected).count();
        return result(
            kind,
            format_rational(&losses[0]),
            format_rational(&expected),
            "exact",
            off == 0,
            format!("loss per {cycle_len}-period cycle versus always solo; {off} of {} cycles off", losses.len()),
        );
    }
    let xs: Vec<f64> = losses.iter().map(f64_of).collect();
    let (mean, var) = mean_and_variance(&xs);
    let expected_f = f64_of(&expected);
    let sigma = (var / xs.len() as f64).sqrt();
    let passed = xs.len() >= 2 && within_sigma(mean, expected_f, sigma);
    result(
        kind,
        format!("{mean:.6}"),
        format!("{expected_f:.6}"),
        sigma_tolerance(sigma),
        passed,
        format!("mean loss per {cycle_len}-period cycle over {} cycles", xs.len()),
    )
}

/// Objective `sum x_i / ((1 - alpha) + x_i)` in units of `P` and `R`.
fn cross_period_objective(alloc: &[BigRational], alpha: &BigRational) -> BigRational {
    let others = BigRational::one() - alpha;
    alloc.iter().map(|x| x / (&others + x)).sum()
}

/// Every allocation of `n * alpha` over `n` periods in `GRID_STEPS` equal
/// parts; returns the best objective found and the grid size.
pub fn cross_period_grid_max(n: usize, alpha: &BigRational) -> (BigRational, Vec<BigRational>, u64) {
    let budget = alpha * ratio(n as u64);
    let step = &budget / ratio(GRID_STEPS);
    let mut best = (BigRational::from_integer((-1).into()), Vec::new());
    let mut points = 0u64;
    let mut parts = vec![0u64; n];
    fn recurse(
        idx: usize,
        left: u64,
        parts: &mut Vec<u64>,
        step: &BigRational,
        alpha: &BigRational,
        best: &mut (BigRational, Vec<BigRational>),
        points: &mut u64,
    ) {
        if idx + 1 == parts.len() {
            parts[idx] = left;
            let alloc: Vec<BigRational> = parts.iter().map(|&k| step * ratio(k)).collect();
            let value = cross_period_objective(&alloc, alpha);
            *points += 1;
            if value > best.0 {
                *best = (value, alloc);
            }
            return;
        }
        for k in 0..=left {
            parts[idx] = k;
            recurse(idx + 1, left - k, parts, step, alpha, best, points);
        }
    }
    recurse(0, GRID_STEPS, &mut parts, &step, alpha, &mut best, &mut points);
    (best.0, best.1, points)
}

fn cross_period(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::CrossPeriod;
    let idx = first_with(cfg, "cross-period").expect("validated");
    let Strategy::CrossPeriod { allocation } = &cfg.miners[idx].strategy else { unreachable!() };
    let alpha = &cfg.miners[idx].fraction.0;
    let n = allocation.len();
    let uniform = cross_period_objective(&vec![alpha.clone(); n], alpha);
    let (best, best_alloc, points) = cross_period_grid_max(n, alpha);

    // The run itself: income sourced from period s is R * a / ((1 - alpha) + a).
    let per_period = &stats.block_reward.0 * ratio(cfg.period_len);
    let others = BigRational::one() - alpha;
    let mut off = 0;
    let sources = stats.periods.saturating_sub(2);
    for s in 0..sources {
        let a = &allocation[(s % n as u64) as usize].0;
        if stats.pool_income_from(idx, s).0 != &per_period * a / (&others + a) {
            off += 1;
        }
    }
    let chosen = cross_period_objective(&allocation.iter().map(|a| a.0.clone()).collect::<Vec<_>>(), alpha);
    let best_text: Vec<String> = best_alloc.iter().map(format_rational).collect();
    result(
        kind,
        format!("grid max {}", format_rational(&best)),
        format!("uniform {}", format_rational(&uniform)),
        "exact, no grid point above uniform",
        best <= uniform && off == 0 && chosen <= uniform,
        format!(
            "{points} grid points, argmax [{}]; configured allocation scores {}; engine income matches the objective in {}/{sources} source periods",
            best_text.join(", "),
            format_rational(&chosen),
            sources - off
        ),
    )
}

fn delay(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::Delay;
    let idx = first_with(cfg, "delayed-submitter").expect("validated");
    let delay = cfg.miners[idx].strategy.delay();
    let own: Vec<_> = stats.batches.iter().filter(|b| b.miner == idx).collect();
    let late: Vec<_> = own.iter().filter(|b| b.accepted_work.is_none()).collect();

    if late.is_empty() {
        let mut prompt = cfg.clone();
        prompt.miners[idx].strategy = Strategy::Honest {};
        prompt.checks.clear();
        let baseline = simulate(&prompt);
        let same = baseline.rewards == stats.rewards;
        return result(
            kind,
            if same { "identical rewards" } else { "rewards differ" },
            "identical rewards",
            "exact",
            same,
            format!("delay {delay} versus 0 under a common seed; {} batches all accepted", own.len()),
        );
    }
    let step_one = late.iter().all(|b| b.rejected_step == Some(1));
    let unpaid = late.iter().all(|b| stats.pool_income_from(idx, b.period).is_zero());
    result(
        kind,
        format!("{} late batches, rejected at step 1: {step_one}, unpaid: {unpaid}", late.len()),
        "rejected at step 1 with zero reward",
        "exact",
        step_one && unpaid,
        format!("delay {delay} pushes batches past the Prepare boundary; {} of {} batches late", late.len(), own.len()),
    )
}

fn pplns_variance(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let pool = steady_pool(cfg);
    let first = pool[0];
    let p = f64_of(&(&cfg.miners[first].fraction.0 / pool_fraction(cfg, &pool)));
    let b = stats.block_reward.to_f64();
    let window = cfg.baselines.pplns_window as f64;
    let expected = p * (1.0 - p) * b * b / window;
    // Skip period 0 so that every window is full.
    let xs: Vec<f64> = stats
        .pool_blocks
        .iter()
        .filter(|blk| blk.period >= 1)
        .filter_map(|blk| blk.baseline.get(&Scheme::Pplns).map(|row| row[first].to_f64()))
        .collect();
    let (_, measured) = mean_and_variance(&xs);
    let rel = (measured - expected).abs() / expected;
    result(
        CheckKind::PplnsVariance,
        format!("{measured:.6}"),
        format!("{expected:.6}"),
        format!("±{:.0}% relative", PPLNS_RELATIVE_TOLERANCE * 100.0),
        rel <= PPLNS_RELATIVE_TOLERANCE,
        format!("{}: PPLNS payout variance over {} blocks, p = {p:.4}, N = {window}; off by {:.2}%", cfg.miners[first].name, xs.len(), rel * 100.0),
    )
}

fn pps_imbalance(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::PpsImbalance;
    let measured = stats.pps_imbalance.as_ref().map(Amount::to_f64).unwrap_or(f64::NAN);
    let b = stats.block_reward.to_f64();
    let rate = cfg.baselines.pps_rate.clone().unwrap_or_else(|| cfg.block_reward.scale(&(ratio(cfg.period_len) / cfg.work_per_period()))).to_f64();
    let d = cfg.mining.share_difficulty.to_f64();
    let len = cfg.period_len as f64;
    let work_per_period = f64_of(&cfg.work_per_period());

    // Bankroll change = B * (pool blocks) - rate * (pool work): blocks are
    // binomial under the lottery, shares Poisson or binomial when sampled.
    let (mut mean, mut var) = (0.0, 0.0);
    for period in 0..cfg.periods {
        let members: Vec<usize> = (0..cfg.miners.len()).filter(|&i| cfg.miners[i].strategy.in_pool(period)).collect();
        let q = f64_of(&pool_fraction(cfg, &members));
        let work: f64 = members.iter().map(|&i| f64_of(&cfg.work_fraction(i, period)) * work_per_period).sum();
        mean += b * len * q - rate * work;
        if cfg.block_schedule == BlockSchedule::Lottery {
            var += b * b * len * q * (1.0 - q);
        }
        var += rate
            * rate
            * match cfg.mining.mode {
                MiningMode::Exact => 0.0,
                MiningMode::Poisson => work / d,
                MiningMode::Grind => work * (1.0 - d) / d,
            };
    }
    let sigma = var.sqrt();
    result(
        kind,
        format!("{measured:.6}"),
        format!("{mean:.6}"),
        sigma_tolerance(sigma),
        within_sigma(measured, mean, sigma),
        format!("PPS bankroll change over {} periods at rate {rate:.6} per unit work", cfg.periods),
    )
}

fn cheating(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let kind = CheckKind::Cheating;
    let idx = first_with(cfg, "cheater").expect("validated");
    let Strategy::Cheater { invalid_fraction } = &cfg.miners[idx].strategy else { unreachable!() };
    let d = cfg.mining.share_difficulty.to_f64();
    let challenges = cfg.mining.challenges_per_batch as i32;
    let batches: Vec<_> = stats.batches.iter().filter(|b| b.miner == idx).collect();
    if batches.is_empty() {
        return result(kind, "-", "-", "-", false, "cheater published no verified batches");
    }
    let (mut measured, mut expected, mut var) = (0.0, 0.0, 0.0);
    for b in &batches {
        let size = b.share_count as f64 / d;
        let pass = (1.0 - b.invalid_shares as f64 / b.share_count as f64).powi(challenges);
        measured += b.accepted_work.as_ref().map(|w| w.to_f64()).unwrap_or(0.0);
        expected += size * pass;
        var += size * size * pass * (1.0 - pass);
    }
    let n = batches.len() as f64;
    let (measured, expected, sigma) = (measured / n, expected / n, var.sqrt() / n);
    let oracle = expected_reward_under_cheating(&stats.block_reward, &invalid_fraction.0);
    result(
        kind,
        format!("{measured:.4}"),
        format!("{expected:.4}"),
        sigma_tolerance(sigma),
        within_sigma(measured, expected, sigma),
        format!(
            "mean accepted work per batch over {} batches at f = {}; expected block reward {} of {}",
            batches.len(),
            Fraction(invalid_fraction.0.clone()),
            oracle,
            stats.block_reward
        ),
    )
}

fn settlement(stats: &RunStats) -> CheckResult {
    let l = &stats.links;
    let passed = l.first_overclaim_invalidated == Some(true) && l.honest_invalidated == 0;
    let first = match l.first_overclaim_invalidated {
        Some(true) => "first over-claim invalidated",
        Some(false) => "first over-claim validated",
        None => "no over-claim settled",
    };
    result(
        CheckKind::Settlement,
        format!("{first}, {} honest links invalidated", l.honest_invalidated),
        "first over-claim invalidated, 0 honest links invalidated",
        "exact",
        passed,
        format!("honest {} validated; over-claims {} validated, {} invalidated", l.honest_validated, l.overclaim_validated, l.overclaim_invalidated),
    )
}

fn self_serving(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let idx = first_with(cfg, "self-serving").expect("validated");
    let total = stats.total_reward(Scheme::FProportional, idx);
    let produced = stats.pool_blocks.iter().filter(|b| b.producer == idx).count();
    result(
        CheckKind::SelfServing,
        total.to_string(),
        "0",
        "exact",
        total.is_zero(),
        format!("{} produced {produced} blocks; unmatched residual {}", cfg.miners[idx].name, stats.budget.unmatched_residual),
    )
}

fn determinism(cfg: &ScenarioConfig, stats: &RunStats) -> CheckResult {
    let first = rewards_csv(stats);
    let second = rewards_csv(&simulate(cfg));
    let same = first == second;
    result(
        CheckKind::Determinism,
        if same { "identical CSV" } else { "CSV differs" },
        "identical CSV",
        "byte-exact",
        same,
        format!("rerun with seed {}; {} bytes", cfg.seed, first.len()),
    )
}

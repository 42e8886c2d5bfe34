//! Everything a run records, in exact arithmetic where it touches currency.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::payment::Scheme;
use crate::units::{Amount, Fraction, Work};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MinerSummary {
    pub name: String,
    pub pubkey: String,
    pub fraction: Fraction,
    pub strategy: String,
}

/// What happened to a pool block's linking transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepositOutcome {
    /// Deposited and claimed by the distribution's miners.
    Claimed,
    /// Deposited against an empty distribution; nobody can claim it.
    Unclaimable,
    /// Rejected by deferred settlement.
    Invalidated,
    /// Validated, but its commitment matches no agreed distribution.
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolBlock {
    pub height: u64,
    pub period: u64,
    pub producer: usize,
    pub linked: Amount,
    pub outcome: DepositOutcome,
    /// Child-chain credit of each miner (indexed like `RunStats::miners`).
    pub credits: Vec<Amount>,
    /// Per-miner payout of this block under each co-run baseline that pays
    /// per block.
    pub baseline: BTreeMap<Scheme, Vec<Amount>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchRecord {
    /// Period the shares were mined for.
    pub period: u64,
    pub miner: usize,
    pub share_count: u64,
    /// Shares deliberately mined to miss the target.
    pub invalid_shares: u64,
    /// Work granted, or `None` when the batch was rejected.
    pub accepted_work: Option<Work>,
    pub rejected_step: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BudgetStats {
    /// Coinbase paid into the contract by pool blocks.
    pub pool_coinbase: Amount,
    /// Credited to miners on the child chain.
    pub distributed: Amount,
    /// Deposits from warm-up periods 0 and 1 (empty distribution).
    pub warmup_residual: Amount,
    /// Later deposits against an empty distribution.
    pub empty_distribution_residual: Amount,
    /// Coinbase behind links invalidated by deferred settlement.
    pub invalidated_residual: Amount,
    /// Validated links whose commitment matches no agreed distribution.
    pub unmatched_residual: Amount,
    pub withdrawn: Amount,
    /// Pool coinbase per block period.
    pub pool_coinbase_by_period: Vec<Amount>,
    /// Conservation checks performed (one per main-chain block plus the
    /// final flush) and how many failed.
    pub checks: u64,
    pub violations: u64,
}

impl BudgetStats {
    /// Distributed plus every frozen residual.
    pub fn accounted(&self) -> Amount {
        [&self.distributed, &self.warmup_residual, &self.empty_distribution_residual, &self.invalidated_residual, &self.unmatched_residual]
            .into_iter()
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub honest_validated: u64,
    pub honest_invalidated: u64,
    pub overclaim_validated: u64,
    pub overclaim_invalidated: u64,
    /// Settlement status of the first over-claiming link, if any.
    pub first_overclaim_invalidated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExitRecord {
    pub miner: usize,
    pub amount: Amount,
    pub priority_period: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub scenario: String,
    pub seed: u64,
    pub periods: u64,
    pub period_len: u64,
    pub block_reward: Amount,
    pub miners: Vec<MinerSummary>,
    /// Scheme → miner → block period → income. For `fproportional` this is
    /// child-chain credit plus solo block rewards; baselines replace the
    /// pool payout and keep the same solo income.
    pub rewards: BTreeMap<Scheme, Vec<Vec<Amount>>>,
    /// Pool credit by the period whose work earned it (block period − 2).
    pub pool_income_by_source: Vec<BTreeMap<u64, Amount>>,
    pub solo_income: Vec<Vec<Amount>>,
    pub pool_blocks: Vec<PoolBlock>,
    pub batches: Vec<BatchRecord>,
    /// Shares accepted per verified period and miner.
    pub accepted_shares: Vec<Vec<u64>>,
    pub budget: BudgetStats,
    pub links: LinkStats,
    pub exits: Vec<ExitRecord>,
    /// PPS bankroll minus its starting value at the end of the run.
    pub pps_imbalance: Option<Amount>,
    /// Pool work paid by PPS over the run.
    pub pps_work: Option<Work>,
}

impl RunStats {
    pub fn miner_index(&self, name: &str) -> Option<usize> {
        self.miners.iter().position(|m| m.name == name)
    }

    pub fn total_reward(&self, scheme: Scheme, miner: usize) -> Amount {
        self.rewards.get(&scheme).map(|r| r[miner].iter().sum()).unwrap_or_default()
    }

    pub fn pool_income_from(&self, miner: usize, source_period: u64) -> Amount {
        self.pool_income_by_source[miner].get(&source_period).cloned().unwrap_or_default()
    }
}

//! Simulated main chain and the pool's smart-contract ledger.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Exp};
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Digest, PublicKey};
use crate::protocol::{BlockTemplate, PeriodConfig};
use crate::units::Amount;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("linking requires positive reward")]
    ZeroReward,
    #[error("insufficient contract balance: requested {requested}, available {available}")]
    InsufficientBalance { requested: Box<Amount>, available: Box<Amount> },
    #[error("withdrawal amount must not be negative")]
    NegativeWithdrawal,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LotteryError {
    #[error("hashrate fractions sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("hashrate table is empty or has a negative entry")]
    Invalid,
}

pub fn period_of(height: u64, cfg: &PeriodConfig) -> u64 {
    height / cfg.period_len
}

/// True for the last `prepare_len` heights of every period.
pub fn in_prepare(height: u64, cfg: &PeriodConfig) -> bool {
    height % cfg.period_len >= cfg.period_len - cfg.prepare_len
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewardConfig {
    pub block_reward: Amount,
}

impl RewardConfig {
    pub fn new(block_reward: Amount) -> Result<Self, ContractError> {
        if !block_reward.is_positive() {
            return Err(ContractError::ZeroReward);
        }
        Ok(RewardConfig { block_reward })
    }
}

/// Linking transaction as carried inside a main-chain block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkingTx {
    pub amount: Amount,
    pub dist_commit: Digest,
    /// Period in which the block was mined.
    pub period: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainBlock {
    pub height: u64,
    pub timestamp: f64,
    pub producer: PublicKey,
    pub reward: Amount,
    /// Contract address for pool blocks, the producer's own key otherwise.
    pub coinbase_target: Digest,
    pub linking_tx: Option<LinkingTx>,
}

impl MainBlock {
    pub fn pays_contract(&self, contract: &Digest) -> bool {
        self.coinbase_target == *contract
    }
}

/// Producer lottery: one categorical draw per block, weighted by hashrate.
#[derive(Debug, Clone)]
pub struct Hashrates {
    keys: Vec<PublicKey>,
    index: WeightedIndex<f64>,
}

impl Hashrates {
    pub fn new(table: &[(PublicKey, f64)]) -> Result<Self, LotteryError> {
        if table.is_empty() || table.iter().any(|(_, f)| !f.is_finite() || *f < 0.0) {
            return Err(LotteryError::Invalid);
        }
        let sum: f64 = table.iter().map(|(_, f)| f).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(LotteryError::NotNormalized(sum));
        }
        let index = WeightedIndex::new(table.iter().map(|(_, f)| *f)).map_err(|_| LotteryError::Invalid)?;
        Ok(Hashrates { keys: table.iter().map(|(k, _)| *k).collect(), index })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PublicKey {
        self.keys[self.index.sample(rng)]
    }
}

#[derive(Debug, Clone)]
pub struct MainChain {
    cfg: PeriodConfig,
    contract: Digest,
    blocks: Vec<MainBlock>,
    inter_block: Exp<f64>,
}

impl MainChain {
    pub fn new(cfg: PeriodConfig, contract: Digest) -> Self {
        let inter_block = Exp::new(1.0 / cfg.block_interval).expect("block interval validated positive");
        MainChain { cfg, contract, blocks: Vec::new(), inter_block }
    }

    pub fn config(&self) -> &PeriodConfig {
        &self.cfg
    }

    pub fn contract_address(&self) -> Digest {
        self.contract
    }

    pub fn blocks(&self) -> &[MainBlock] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&MainBlock> {
        self.blocks.get(height as usize)
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_timestamp(&self) -> f64 {
        self.blocks.last().map_or(0.0, |b| b.timestamp)
    }

    /// Draws an exponential inter-block time with mean `block_interval`.
    pub fn sample_interval<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inter_block.sample(rng)
    }

    /// Lottery block: the producer is drawn by hashrate and the timestamp
    /// advances by an exponential interval. Producers with a template in
    /// `templates` mine for the pool.
    pub fn produce_block<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        hashrates: &Hashrates,
        templates: &BTreeMap<PublicKey, BlockTemplate>,
        reward: &Amount,
    ) -> &MainBlock {
        let producer = hashrates.sample(rng);
        let dt = self.sample_interval(rng);
        self.append(producer, dt, templates.get(&producer), reward)
    }

    /// Appends a block by `producer` `dt` time units after the tip.
    pub fn append(&mut self, producer: PublicKey, dt: f64, template: Option<&BlockTemplate>, reward: &Amount) -> &MainBlock {
        let height = self.height();
        let (coinbase_target, linking_tx) = match template {
            Some(t) => (
                t.coinbase_target,
                Some(LinkingTx { amount: t.linking.amount.clone(), dist_commit: t.linking.dist_commit, period: period_of(height, &self.cfg) }),
            ),
            None => (producer.0, None),
        };
        self.blocks.push(MainBlock { height, timestamp: self.tip_timestamp() + dt, producer, reward: reward.clone(), coinbase_target, linking_tx });
        self.blocks.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkStatus {
    Pending,
    Validated,
    Invalidated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractLink {
    pub amount: Amount,
    pub dist_commit: Digest,
    /// Period the linked block was mined in.
    pub period: u64,
    pub height: u64,
    pub status: LinkStatus,
}

/// Contract ledger with deferred settlement: each link is checked by the
/// next user of the contract, in submission order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractState {
    balance: Amount,
    total_withdrawn: Amount,
    total_credited: Amount,
    validated_total: Amount,
    links: Vec<ContractLink>,
    next_pending: usize,
}

impl ContractState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self) -> &Amount {
        &self.balance
    }

    pub fn total_withdrawn(&self) -> &Amount {
        &self.total_withdrawn
    }

    pub fn total_credited(&self) -> &Amount {
        &self.total_credited
    }

    pub fn validated_total(&self) -> &Amount {
        &self.validated_total
    }

    pub fn links(&self) -> &[ContractLink] {
        &self.links
    }

    pub fn pending_count(&self) -> usize {
        self.links.len() - self.next_pending
    }

    /// Coinbase paid to the contract address.
    pub fn credit_coinbase(&mut self, amount: &Amount) {
        self.balance += amount;
        self.total_credited += amount;
    }

    /// Records a link without any coinbase credit; a misbehaving producer
    /// can claim more than it paid in.
    pub fn append_link(&mut self, amount: Amount, dist_commit: Digest, period: u64, height: u64) -> Result<usize, ContractError> {
        if !amount.is_positive() {
            return Err(ContractError::ZeroReward);
        }
        self.links.push(ContractLink { amount, dist_commit, period, height, status: LinkStatus::Pending });
        Ok(self.links.len() - 1)
    }

    /// Honest path: credits the coinbase and links the same amount.
    pub fn submit_linking_tx(&mut self, amount: Amount, dist_commit: Digest, period: u64, height: u64) -> Result<usize, ContractError> {
        if !amount.is_positive() {
            return Err(ContractError::ZeroReward);
        }
        self.credit_coinbase(&amount);
        self.append_link(amount, dist_commit, period, height)
    }

    /// Validates or invalidates every pending link, oldest first. A link is
    /// valid when balance plus everything withdrawn covers all previously
    /// validated links plus this one. Returns the indices settled.
    pub fn settle_pending(&mut self) -> Vec<(usize, LinkStatus)> {
        let mut settled = Vec::new();
        let backing = &self.balance + &self.total_withdrawn;
        while self.next_pending < self.links.len() {
            let idx = self.next_pending;
            let link = &mut self.links[idx];
            let needed = &self.validated_total + &link.amount;
            link.status = if needed <= backing {
                self.validated_total = needed;
                LinkStatus::Validated
            } else {
                LinkStatus::Invalidated
            };
            settled.push((idx, link.status));
            self.next_pending += 1;
        }
        settled
    }

    /// Pays `amount` out of the contract. Pending links are settled first.
    pub fn withdraw(&mut self, amount: &Amount) -> Result<Vec<(usize, LinkStatus)>, ContractError> {
        if amount.is_negative() {
            return Err(ContractError::NegativeWithdrawal);
        }
        let settled = self.settle_pending();
        if *amount > self.balance {
            return Err(ContractError::InsufficientBalance { requested: Box::new(amount.clone()), available: Box::new(self.balance.clone()) });
        }
        self.balance -= amount;
        self.total_withdrawn += amount;
        Ok(settled)
    }

    /// Coinbase credited to the contract but not backing any validated link.
    pub fn frozen_residual(&self) -> Amount {
        &self.total_credited - &self.validated_total
    }
}

//! Baseline payout schemes — PPLNS, Proportional and PPS — as folds over a
//! stream of share and block events.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use num_rational::BigRational;
use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::PublicKey;
use crate::units::{Amount, Work};

pub type Payout = BTreeMap<PublicKey, Amount>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaymentError {
    #[error("PPLNS window must be at least 1")]
    EmptyWindow,
    #[error("PPS rate must be positive")]
    NonPositiveRate,
    #[error("round has no shares")]
    EmptyRound,
    #[error("share weight must be positive")]
    NonPositiveWeight,
}

/// Payment scheme tag used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(rename = "fproportional")]
    FProportional,
    Pplns,
    Proportional,
    Pps,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::FProportional => "fproportional",
            Scheme::Pplns => "pplns",
            Scheme::Proportional => "proportional",
            Scheme::Pps => "pps",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareEvent {
    pub time: f64,
    pub miner: PublicKey,
    pub weight: Work,
}

impl ShareEvent {
    pub fn new(time: f64, miner: PublicKey, weight: Work) -> Result<Self, PaymentError> {
        if !weight.is_positive() {
            return Err(PaymentError::NonPositiveWeight);
        }
        Ok(ShareEvent { time, miner, weight })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolEvent {
    Share(ShareEvent),
    /// A pool block; the block's own hash also counts as a share of the finder.
    Block {
        time: f64,
        finder: PublicKey,
        reward: Amount,
    },
}

impl PoolEvent {
    pub fn time(&self) -> f64 {
        match self {
            PoolEvent::Share(s) => s.time,
            PoolEvent::Block { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplnsConfig {
    window: usize,
}

impl PplnsConfig {
    pub fn new(window: usize) -> Result<Self, PaymentError> {
        if window == 0 {
            return Err(PaymentError::EmptyWindow);
        }
        Ok(PplnsConfig { window })
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Splits `reward` evenly over the last `window` entries of `history`
/// (oldest first, ending with the block's own share). When fewer shares
/// exist, the ones available split the whole reward.
pub fn pplns_payout(history: &[PublicKey], cfg: &PplnsConfig, reward: &Amount) -> Payout {
    let start = history.len().saturating_sub(cfg.window);
    split_by_count(history[start..].iter(), reward)
}

fn split_by_count<'a>(shares: impl Iterator<Item = &'a PublicKey>, reward: &Amount) -> Payout {
    let mut counts: BTreeMap<PublicKey, i64> = BTreeMap::new();
    let mut total = 0i64;
    for pk in shares {
        *counts.entry(*pk).or_default() += 1;
        total += 1;
    }
    counts.into_iter().map(|(pk, n)| (pk, reward.scale(&BigRational::new(n.into(), total.into())))).collect()
}

/// PPLNS over a live stream: keeps only the last `window` share owners.
#[derive(Debug, Clone)]
pub struct Pplns {
    cfg: PplnsConfig,
    recent: VecDeque<PublicKey>,
}

impl Pplns {
    pub fn new(cfg: PplnsConfig) -> Self {
        Pplns { cfg, recent: VecDeque::with_capacity(cfg.window + 1) }
    }

    pub fn observe(&mut self, share: &ShareEvent) {
        self.push(share.miner);
    }

    /// Records one share of `miner` without building a [`ShareEvent`].
    pub fn push(&mut self, miner: PublicKey) {
        if self.recent.len() == self.cfg.window {
            self.recent.pop_front();
        }
        self.recent.push_back(miner);
    }

    pub fn on_block(&mut self, finder: PublicKey, reward: &Amount) -> Payout {
        self.push(finder);
        split_by_count(self.recent.iter(), reward)
    }

    /// Shares of `miner` currently inside the window.
    pub fn count_of(&self, miner: &PublicKey) -> usize {
        self.recent.iter().filter(|pk| *pk == miner).count()
    }
}

/// Pays `reward` by each miner's share count in the round.
pub fn proportional_payout(round: &BTreeMap<PublicKey, u64>, reward: &Amount) -> Result<Payout, PaymentError> {
    let total: u64 = round.values().sum();
    if total == 0 {
        return Err(PaymentError::EmptyRound);
    }
    Ok(round.iter().filter(|(_, n)| **n > 0).map(|(pk, n)| (*pk, reward.scale(&BigRational::new((*n).into(), total.into())))).collect())
}

#[derive(Debug, Clone, Default)]
pub struct Proportional {
    round: BTreeMap<PublicKey, u64>,
}

impl Proportional {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, share: &ShareEvent) {
        self.push(share.miner);
    }

    pub fn push(&mut self, miner: PublicKey) {
        *self.round.entry(miner).or_default() += 1;
    }

    /// Closes the round (the block counts as the finder's share) and resets.
    pub fn on_block(&mut self, finder: PublicKey, reward: &Amount) -> Payout {
        *self.round.entry(finder).or_default() += 1;
        let payout = proportional_payout(&self.round, reward).expect("round holds the block share");
        self.round.clear();
        payout
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpsConfig {
    rate: Amount,
    operator_bankroll: Amount,
}

impl PpsConfig {
    /// `rate` is paid per unit of share weight.
    pub fn new(rate: Amount, operator_bankroll: Amount) -> Result<Self, PaymentError> {
        if !rate.is_positive() {
            return Err(PaymentError::NonPositiveRate);
        }
        Ok(PpsConfig { rate, operator_bankroll })
    }

    pub fn rate(&self) -> &Amount {
        &self.rate
    }

    pub fn operator_bankroll(&self) -> &Amount {
        &self.operator_bankroll
    }
}

/// Rate at which PPS pays out exactly the expected block revenue:
/// reward times the probability that one unit of work finds a block.
pub fn fair_pps_rate(reward: &Amount, block_probability_per_work: &BigRational) -> Amount {
    reward.scale(block_probability_per_work)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpsState {
    pub bankroll: Amount,
}

/// Pays one share immediately from the operator's bankroll, which may go
/// negative.
pub fn pps_payout(share: &ShareEvent, cfg: &PpsConfig, state: &PpsState) -> (Amount, Amount) {
    let payment = cfg.rate.scale(&share.weight.0);
    let bankroll = &state.bankroll - &payment;
    (payment, bankroll)
}

#[derive(Debug, Clone)]
pub struct Pps {
    cfg: PpsConfig,
    state: PpsState,
}

impl Pps {
    pub fn new(cfg: PpsConfig) -> Self {
        let state = PpsState { bankroll: cfg.operator_bankroll.clone() };
        Pps { cfg, state }
    }

    pub fn bankroll(&self) -> &Amount {
        &self.state.bankroll
    }

    /// Net position relative to the starting bankroll.
    pub fn imbalance(&self) -> Amount {
        &self.state.bankroll - &self.cfg.operator_bankroll
    }

    pub fn on_share(&mut self, share: &ShareEvent) -> Amount {
        let (payment, bankroll) = pps_payout(share, &self.cfg, &self.state);
        self.state.bankroll = bankroll;
        payment
    }

    /// Pays for `work` worth of shares at once; order within a batch of
    /// shares does not matter to PPS.
    pub fn on_work(&mut self, work: &Work) -> Amount {
        let payment = self.cfg.rate.scale(&work.0);
        self.state.bankroll -= &payment;
        payment
    }

    pub fn on_block(&mut self, reward: &Amount) {
        self.state.bankroll += reward;
    }
}

/// Synthetic pool stream: each share belongs to a miner drawn by hashrate
/// and is also a block with probability `block_probability`.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub miners: Vec<(PublicKey, f64)>,
    pub share_weight: Work,
    pub block_probability: f64,
    /// Mean time between shares.
    pub share_interval: f64,
}

pub struct PoolStream<'a, R: Rng> {
    cfg: &'a StreamConfig,
    picker: WeightedIndex<f64>,
    gaps: Exp<f64>,
    rng: R,
    time: f64,
    reward: Amount,
}

impl<'a, R: Rng> PoolStream<'a, R> {
    pub fn new(cfg: &'a StreamConfig, reward: Amount, rng: R) -> Self {
        let picker = WeightedIndex::new(cfg.miners.iter().map(|(_, w)| *w)).expect("positive hashrates");
        let gaps = Exp::new(1.0 / cfg.share_interval).expect("positive share interval");
        PoolStream { cfg, picker, gaps, rng, time: 0.0, reward }
    }
}

impl<R: Rng> Iterator for PoolStream<'_, R> {
    type Item = PoolEvent;

    fn next(&mut self) -> Option<PoolEvent> {
        self.time += self.gaps.sample(&mut self.rng);
        let miner = self.cfg.miners[self.picker.sample(&mut self.rng)].0;
        Some(if self.rng.random_bool(self.cfg.block_probability) {
            PoolEvent::Block { time: self.time, finder: miner, reward: self.reward.clone() }
        } else {
            PoolEvent::Share(ShareEvent { time: self.time, miner, weight: self.cfg.share_weight.clone() })
        })
    }
}

/// PPLNS payouts to `miner` for each of the first `blocks` blocks of `stream`.
pub fn pplns_block_rewards(stream: impl Iterator<Item = PoolEvent>, cfg: PplnsConfig, miner: &PublicKey, blocks: usize) -> Vec<Amount> {
    let mut pplns = Pplns::new(cfg);
    let mut rewards = Vec::with_capacity(blocks);
    for event in stream {
        match event {
            PoolEvent::Share(s) => pplns.observe(&s),
            PoolEvent::Block { finder, reward, .. } => {
                let mut payout = pplns.on_block(finder, &reward);
                rewards.push(payout.remove(miner).unwrap_or_default());
                if rewards.len() == blocks {
                    break;
                }
            }
        }
    }
    rewards
}

/// Sample mean and unbiased sample variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

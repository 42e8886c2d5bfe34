//! The block-by-block event loop tying the three chains together.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::scenario::{BlockSchedule, MiningMode, ScenarioConfig, Strategy};
use super::stats::{BatchRecord, BudgetStats, DepositOutcome, ExitRecord, LinkStats, MinerSummary, PoolBlock, RunStats};
use crate::adversarial::self_serving_template;
use crate::child_chain::{claim_message, ChildChain, ChildError};
use crate::crypto::{self, Digest, KeyPair, PublicKey};
use crate::main_chain::{ContractState, Hashrates, LinkStatus, MainChain};
use crate::payment::{Pplns, PplnsConfig, Pps, PpsConfig, Proportional, Scheme};
use crate::protocol::{commit_distribution, BlockTemplate, LinkingPayload, PeriodConfig, PowDistribution, PreparedBatch, Share, ShareMiner};
use crate::storage::{StorageChain, StorageEntry};
use crate::units::{Amount, Target, Work};
use crate::verification::{aggregate_distribution, verify_period, Outcome, VerificationContext};

/// Independent generator for one labelled consumer of randomness, so that
/// changing one agent's behaviour leaves every other stream untouched.
pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    let digest = crypto::hash_parts(&[b"fiberpool/rng", &seed.to_be_bytes(), label.as_bytes()]);
    ChaCha8Rng::from_seed(*digest.as_bytes())
}

fn to_u64(value: &BigRational) -> u64 {
    value.floor().to_integer().to_u64().expect("non-negative count")
}

struct Agent {
    kp: KeyPair,
    pubkey: PublicKey,
    strategy: Strategy,
    rng: ChaCha8Rng,
    next_counter: u64,
}

struct Pending {
    time: f64,
    entry: StorageEntry,
}

struct Baselines {
    pplns: Option<Pplns>,
    proportional: Option<Proportional>,
    pps: Option<Pps>,
    difficulty: Target,
    pps_work: Work,
    rng: ChaCha8Rng,
}

struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    geom: PeriodConfig,
    reward: Amount,
    difficulty: Target,
    contract_address: Digest,
    agents: Vec<Agent>,
    index: BTreeMap<PublicKey, usize>,
    main: MainChain,
    storage: StorageChain,
    contract: ContractState,
    child: ChildChain,
    pending: Vec<Pending>,
    awaiting_challenge: Vec<(Digest, u64)>,
    prepared: BTreeMap<Digest, (usize, PreparedBatch)>,
    invalid_counts: BTreeMap<Digest, u64>,
    publications: BTreeMap<u64, Vec<(usize, Vec<PreparedBatch>)>>,
    /// Commitment every honest template of period `k` carries.
    commits: Vec<Digest>,
    /// Distribution paid by pool blocks of period `k` (verified work of `k - 2`).
    dists: Vec<PowDistribution>,
    templates: BTreeMap<PublicKey, BlockTemplate>,
    schedule: Vec<PublicKey>,
    hashrates: Hashrates,
    intervals_rng: ChaCha8Rng,
    producer_rng: ChaCha8Rng,
    schedule_rng: ChaCha8Rng,
    link_honest: Vec<bool>,
    unmatched: Amount,
    baselines: Option<Baselines>,
    period_shares: Vec<(usize, u64)>,
    period_blocks: Vec<(f64, usize, usize)>,
    stats: RunStats,
}

/// Runs a validated scenario to completion.
pub(crate) fn simulate(cfg: &ScenarioConfig) -> RunStats {
    let mut sim = Simulation::new(cfg);
    for period in 0..cfg.periods {
        sim.begin_period(period);
        for height in period * cfg.period_len..(period + 1) * cfg.period_len {
            sim.step(height, period);
        }
        sim.end_period(period);
    }
    sim.finish()
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let geom = cfg.period_config();
        let contract_address = crypto::hash_parts(&[b"fiberpool/contract", cfg.name.as_bytes()]);
        let agents: Vec<Agent> = cfg
            .miners
            .iter()
            .map(|m| {
                let kp = KeyPair::from_seed(format!("fiberpool/miner/{}", m.name).as_bytes());
                Agent {
                    pubkey: kp.public(),
                    kp,
                    strategy: m.strategy.clone(),
                    rng: substream(cfg.seed, &format!("agent/{}", m.name)),
                    next_counter: 0,
                }
            })
            .collect();
        let index = agents.iter().enumerate().map(|(i, a)| (a.pubkey, i)).collect();
        let table: Vec<(PublicKey, f64)> = agents.iter().zip(&cfg.miners).map(|(a, m)| (a.pubkey, m.fraction.to_f64())).collect();
        let hashrates = Hashrates::new(&table).expect("validated fractions");
        let periods = cfg.periods as usize;
        let n = agents.len();

        let mut rewards = BTreeMap::new();
        rewards.insert(Scheme::FProportional, vec![vec![Amount::zero(); periods]; n]);
        for scheme in &cfg.baselines.schemes {
            rewards.insert(*scheme, vec![vec![Amount::zero(); periods]; n]);
        }
        let difficulty = cfg.mining.share_difficulty;
        let baselines = (!cfg.baselines.schemes.is_empty()).then(|| {
            let has = |s: Scheme| cfg.baselines.schemes.contains(&s);
            let rate = cfg
                .baselines
                .pps_rate
                .clone()
                .unwrap_or_else(|| cfg.block_reward.scale(&(BigRational::from_integer(cfg.period_len.into()) / cfg.work_per_period())));
            Baselines {
                pplns: has(Scheme::Pplns).then(|| Pplns::new(PplnsConfig::new(cfg.baselines.pplns_window).expect("validated window"))),
                proportional: has(Scheme::Proportional).then(Proportional::new),
                pps: has(Scheme::Pps).then(|| Pps::new(PpsConfig::new(rate, cfg.baselines.pps_bankroll.clone()).expect("validated rate"))),
                difficulty,
                pps_work: Work::zero(),
                rng: substream(cfg.seed, "baseline"),
            }
        });

        let stats = RunStats {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            periods: cfg.periods,
            period_len: cfg.period_len,
            block_reward: cfg.block_reward.clone(),
            miners: agents
                .iter()
                .zip(&cfg.miners)
                .map(|(a, m)| MinerSummary {
                    name: m.name.clone(),
                    pubkey: a.pubkey.0.to_hex(),
                    fraction: m.fraction.clone(),
                    strategy: m.strategy.label().to_string(),
                })
                .collect(),
            rewards,
            pool_income_by_source: vec![BTreeMap::new(); n],
            solo_income: vec![vec![Amount::zero(); periods]; n],
            pool_blocks: Vec::new(),
            batches: Vec::new(),
            accepted_shares: vec![vec![0; n]; periods],
            budget: BudgetStats { pool_coinbase_by_period: vec![Amount::zero(); periods], ..BudgetStats::default() },
            links: LinkStats::default(),
            exits: Vec::new(),
            pps_imbalance: None,
            pps_work: None,
        };

        Simulation {
            cfg,
            main: MainChain::new(geom, contract_address),
            geom,
            reward: cfg.block_reward.clone(),
            difficulty,
            contract_address,
            agents,
            index,
            storage: StorageChain::new(),
            contract: ContractState::new(),
            child: ChildChain::new(),
            pending: Vec::new(),
            awaiting_challenge: Vec::new(),
            prepared: BTreeMap::new(),
            invalid_counts: BTreeMap::new(),
            publications: BTreeMap::new(),
            commits: Vec::with_capacity(periods),
            dists: Vec::with_capacity(periods),
            templates: BTreeMap::new(),
            schedule: Vec::new(),
            hashrates,
            intervals_rng: substream(cfg.seed, "main/intervals"),
            producer_rng: substream(cfg.seed, "main/producers"),
            schedule_rng: substream(cfg.seed, "main/schedule"),
            link_honest: Vec::new(),
            unmatched: Amount::zero(),
            baselines,
            period_shares: Vec::new(),
            period_blocks: Vec::new(),
            stats,
        }
    }

    fn begin_period(&mut self, period: u64) {
        let dist = if period >= 2 { self.verify(period - 2) } else { PowDistribution::new(0) };
        let commit = commit_distribution(&dist);
        self.commits.push(commit);
        self.dists.push(dist);

        self.templates.clear();
        for agent in &self.agents {
            if !agent.strategy.in_pool(period) {
                continue;
            }
            let honest = BlockTemplate {
                period,
                coinbase_target: self.contract_address,
                linking: LinkingPayload { amount: self.reward.clone(), dist_commit: commit },
                difficulty: self.difficulty,
                pubkey: agent.pubkey,
            };
            let template = match &agent.strategy {
                Strategy::SelfServing {} => self_serving_template(&agent.kp, period, &honest),
                Strategy::OverClaim { factor } => {
                    BlockTemplate { linking: LinkingPayload { amount: self.reward.scale(&factor.0), dist_commit: commit }, ..honest }
                }
                _ => honest,
            };
            self.templates.insert(agent.pubkey, template);
        }

        if self.cfg.block_schedule == BlockSchedule::Fixed {
            self.schedule.clear();
            for (agent, m) in self.agents.iter().zip(&self.cfg.miners) {
                let blocks = to_u64(&(&m.fraction.0 * BigRational::from_integer(self.cfg.period_len.into())));
                self.schedule.extend(std::iter::repeat_n(agent.pubkey, blocks as usize));
            }
            self.schedule.shuffle(&mut self.schedule_rng);
        }

        self.mine(period);
    }

    /// Verifies the data of `period` against the Prepare boundary of
    /// `period + 2` and returns the resulting distribution.
    fn verify(&mut self, period: u64) -> PowDistribution {
        let prepare_start = self.geom.prepare_start_height(period + 2).expect("period + 2 > 0");
        let ts = self.main.block(prepare_start).expect("prepare start already mined").timestamp;
        let ctx = VerificationContext {
            period,
            boundary: self.storage.prepare_boundary(ts),
            expected_dist_commit: self.commits[period as usize],
            contract_address: self.contract_address,
            challenges_per_batch: self.cfg.mining.challenges_per_batch,
        };
        let verdicts = verify_period(&self.storage, &ctx);
        for v in &verdicts {
            let Some(&miner) = self.index.get(&v.pubkey) else { continue };
            let (accepted_work, rejected_step) = match &v.outcome {
                Outcome::Accepted { work } => (Some(work.clone()), None),
                Outcome::Rejected { step, .. } => (None, Some(*step)),
            };
            self.stats.batches.push(BatchRecord {
                period,
                miner,
                share_count: v.counters.end - v.counters.start,
                invalid_shares: self.invalid_counts.remove(&v.batch_id).unwrap_or(0),
                accepted_work,
                rejected_step,
            });
        }
        let dist = aggregate_distribution(&verdicts, period);
        let d = self.difficulty.to_rational();
        for (pk, work) in dist.entries() {
            self.stats.accepted_shares[period as usize][self.index[pk]] = to_u64(&(&work.0 * &d));
        }
        dist
    }

    fn mine(&mut self, period: u64) {
        self.period_shares.clear();
        let total_blocks = self.cfg.total_blocks();
        for idx in 0..self.agents.len() {
            if !self.agents[idx].strategy.in_pool(period) {
                continue;
            }
            let template = self.templates[&self.agents[idx].pubkey].clone();
            let nonce_seed =
                crypto::hash_parts(&[b"fiberpool/nonce", &self.cfg.seed.to_be_bytes(), self.cfg.miners[idx].name.as_bytes(), &period.to_be_bytes()])
                    .leading_u64();
            let fraction = self.cfg.work_fraction(idx, period);
            let agent = &mut self.agents[idx];
            let mut miner = ShareMiner::new(&template, nonce_seed).with_first_counter(agent.next_counter);
            let expected_shares = &fraction * BigRational::from_integer(self.cfg.mining.shares_per_period.into());
            let valid = match self.cfg.mining.mode {
                MiningMode::Exact => to_u64(&expected_shares),
                MiningMode::Poisson => {
                    let lambda = expected_shares.to_f64().unwrap_or(0.0);
                    if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive rate").sample(&mut agent.rng) as u64
                    } else {
                        0
                    }
                }
                MiningMode::Grind => 0,
            };

            let chunks: Vec<(Vec<Share>, u64)> = match (&agent.strategy, self.cfg.mining.mode) {
                (_, MiningMode::Grind) => {
                    let hashes = to_u64(&(&fraction * BigRational::from_integer(self.cfg.mining.hashes_per_period.into())));
                    let shares = miner.grind(hashes).shares;
                    split(shares, self.cfg.mining.batch_size).into_iter().map(|c| (c, 0)).collect()
                }
                (Strategy::Cheater { invalid_fraction }, _) => {
                    cheat(&mut miner, &mut agent.rng, valid, &invalid_fraction.0, self.cfg.mining.batch_size)
                }
                _ => split(miner.grind_until(valid).shares, self.cfg.mining.batch_size).into_iter().map(|c| (c, 0)).collect(),
            };
            agent.next_counter = miner.next_counter();

            let valid_count = chunks.iter().map(|(c, bad)| c.len() as u64 - bad).sum();
            self.period_shares.push((idx, valid_count));
            let mut batches = Vec::with_capacity(chunks.len());
            for (shares, bad) in chunks.into_iter().filter(|(c, _)| !c.is_empty()) {
                let prepared = PreparedBatch::new(&agent.kp, period, self.difficulty, shares).expect("non-empty batch");
                if bad > 0 {
                    self.invalid_counts.insert(prepared.batch.id(), bad);
                }
                batches.push(prepared);
            }
            let publish_at = (period + 1) * self.cfg.period_len + agent.strategy.delay();
            if !batches.is_empty() && publish_at < total_blocks {
                self.publications.entry(publish_at).or_default().push((idx, batches));
            }
        }
    }

    fn step(&mut self, height: u64, period: u64) {
        let producer = match self.cfg.block_schedule {
            BlockSchedule::Fixed => self.schedule[(height % self.cfg.period_len) as usize],
            BlockSchedule::Lottery => self.hashrates.sample(&mut self.producer_rng),
        };
        let dt = self.main.sample_interval(&mut self.intervals_rng);
        let time = self.main.tip_timestamp() + dt;
        self.advance_storage(time);

        let template = self.templates.get(&producer).cloned();
        self.main.append(producer, dt, template.as_ref(), &self.reward);
        let idx = self.index[&producer];
        match template {
            Some(t) => self.pool_block(height, period, idx, &t, time),
            None => self.stats.solo_income[idx][period as usize] += &self.reward,
        }

        if let Some(due) = self.publications.remove(&height) {
            for (owner, batches) in due {
                for prepared in batches {
                    self.pending.push(Pending { time, entry: StorageEntry::Batch(prepared.batch.clone()) });
                    self.prepared.insert(prepared.batch.id(), (owner, prepared));
                }
            }
        }
        self.check_budget();
    }

    /// Appends every storage block due before `until`, answering challenges
    /// as soon as the block after a batch reveals its beacon.
    fn advance_storage(&mut self, until: f64) {
        let interval = self.cfg.storage_interval();
        loop {
            let tau = (self.storage.height() + 1) as f64 * interval;
            if tau >= until {
                break;
            }
            let (ready, later): (Vec<Pending>, Vec<Pending>) = std::mem::take(&mut self.pending).into_iter().partition(|p| p.time < tau);
            self.pending = later;
            let block = self.storage.append(ready.into_iter().map(|p| p.entry).collect(), tau).expect("storage times increase");
            let height = block.height;
            let stored: Vec<Digest> = block
                .payload
                .iter()
                .filter_map(|e| match e {
                    StorageEntry::Batch(b) => Some(b.id()),
                    StorageEntry::Proof(_) => None,
                })
                .collect();

            let (ready, waiting): (Vec<_>, Vec<_>) = std::mem::take(&mut self.awaiting_challenge).into_iter().partition(|(_, h)| *h < height);
            self.awaiting_challenge = waiting;
            for (batch_id, _) in ready {
                let Some((owner, prepared)) = self.prepared.remove(&batch_id) else { continue };
                let kp = &self.agents[owner].kp;
                for ordinal in 0..self.cfg.mining.challenges_per_batch {
                    let index = self.storage.challenge_for(&batch_id, ordinal).expect("beacon available");
                    let proof = prepared.answer(kp, ordinal, index).expect("challenge within batch");
                    self.pending.push(Pending { time: tau, entry: StorageEntry::Proof(proof) });
                }
            }
            self.awaiting_challenge.extend(stored.into_iter().map(|id| (id, height)));
        }
    }

    fn pool_block(&mut self, height: u64, period: u64, producer: usize, template: &BlockTemplate, time: f64) {
        let n = self.agents.len();
        self.contract.credit_coinbase(&self.reward);
        self.stats.budget.pool_coinbase += &self.reward;
        self.stats.budget.pool_coinbase_by_period[period as usize] += &self.reward;
        let linked = template.linking.amount.clone();
        let link = self.contract.append_link(linked.clone(), template.linking.dist_commit, period, height).expect("positive link");
        self.link_honest.push(linked == self.reward);

        for (i, status) in self.contract.settle_pending() {
            let links = &mut self.stats.links;
            match (self.link_honest[i], status) {
                (true, LinkStatus::Validated) => links.honest_validated += 1,
                (true, _) => links.honest_invalidated += 1,
                (false, status) => {
                    let invalid = status == LinkStatus::Invalidated;
                    links.first_overclaim_invalidated.get_or_insert(invalid);
                    if invalid {
                        links.overclaim_invalidated += 1
                    } else {
                        links.overclaim_validated += 1
                    }
                }
            }
        }

        let dist = &self.dists[period as usize];
        let mut credits = vec![Amount::zero(); n];
        let outcome = match self.child.register_deposit(&mut self.contract, link, dist) {
            Ok(_) if dist.is_empty() => DepositOutcome::Unclaimable,
            Ok(id) => {
                for pk in dist.entries().keys() {
                    let miner = self.index[pk];
                    let kp = &self.agents[miner].kp;
                    let (work, opening) = dist.opening(pk).expect("entry exists");
                    let sig = crypto::sign(kp, &claim_message(self.child.deposit(id).expect("just registered"), pk, &work));
                    let credit = self.child.claim(id, *pk, &work, &opening, &sig).expect("honest claim");
                    *self.stats.pool_income_by_source[miner].entry(period - 2).or_default() += &credit;
                    self.stats.rewards.get_mut(&Scheme::FProportional).expect("always present")[miner][period as usize] += &credit;
                    credits[miner] = credit;
                }
                DepositOutcome::Claimed
            }
            Err(ChildError::LinkNotValidated(_)) => DepositOutcome::Invalidated,
            Err(ChildError::DistributionMismatch) => {
                self.unmatched += &linked;
                DepositOutcome::Unmatched
            }
            Err(e) => panic!("deposit registration failed: {e}"),
        };
        self.period_blocks.push((time, producer, self.stats.pool_blocks.len()));
        self.stats.pool_blocks.push(PoolBlock { height, period, producer, linked, outcome, credits, baseline: BTreeMap::new() });
    }

    fn check_budget(&mut self) {
        let frozen = self.contract.frozen_residual();
        let held = self.child.unclaimed() + &self.unmatched;
        let credited = self.contract.total_credited();
        let ok = *credited == &(self.child.claimed_total() + &held) + &frozen
            && *self.contract.balance() == &(self.child.supply() + &held) + &frozen
            && *credited == self.stats.budget.pool_coinbase
            && !self.child.unclaimed().is_negative();
        self.stats.budget.checks += 1;
        if !ok {
            self.stats.budget.violations += 1;
        }
    }

    /// Replays the period's pool shares and blocks through the baselines.
    fn end_period(&mut self, period: u64) {
        let blocks = std::mem::take(&mut self.period_blocks);
        let Some(base) = self.baselines.as_mut() else { return };
        let len = self.cfg.period_len;
        let start = if period == 0 { 0.0 } else { self.main.block(period * len - 1).expect("mined").timestamp };
        let end = self.main.block((period + 1) * len - 1).expect("mined").timestamp;
        let p = period as usize;

        let mut events: Vec<(f64, usize, Option<usize>)> = Vec::new();
        for &(miner, count) in &self.period_shares {
            for _ in 0..count {
                events.push((start + base.rng.random::<f64>() * (end - start), miner, None));
            }
            if let Some(pps) = base.pps.as_mut() {
                let work = base.difficulty.work_of(count);
                let paid = pps.on_work(&work);
                base.pps_work += &work;
                self.stats.rewards.get_mut(&Scheme::Pps).expect("pps enabled")[miner][p] += &paid;
            }
        }
        events.extend(blocks.iter().map(|&(t, producer, block)| (t, producer, Some(block))));
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        for (_, miner, block) in events {
            let pk = self.agents[miner].pubkey;
            match block {
                None => {
                    if let Some(pplns) = base.pplns.as_mut() {
                        pplns.push(pk);
                    }
                    if let Some(prop) = base.proportional.as_mut() {
                        prop.push(pk);
                    }
                }
                Some(block) => {
                    let record = |scheme: Scheme, payout: BTreeMap<PublicKey, Amount>, stats: &mut RunStats| {
                        let mut per_miner = vec![Amount::zero(); self.agents.len()];
                        for (pk, amount) in payout {
                            let m = self.index[&pk];
                            stats.rewards.get_mut(&scheme).expect("scheme enabled")[m][p] += &amount;
                            per_miner[m] = amount;
                        }
                        stats.pool_blocks[block].baseline.insert(scheme, per_miner);
                    };
                    if let Some(pplns) = base.pplns.as_mut() {
                        record(Scheme::Pplns, pplns.on_block(pk, &self.reward), &mut self.stats);
                    }
                    if let Some(prop) = base.proportional.as_mut() {
                        record(Scheme::Proportional, prop.on_block(pk, &self.reward), &mut self.stats);
                    }
                    if let Some(pps) = base.pps.as_mut() {
                        pps.on_block(&self.reward);
                    }
                }
            }
        }
    }

    fn finish(mut self) -> RunStats {
        self.contract.settle_pending();
        for (idx, agent) in self.agents.iter().enumerate() {
            if self.child.balance(&agent.pubkey).is_positive() {
                let ticket = self.child.withdraw_aggregate(agent.pubkey, &mut self.contract).expect("balance is backed");
                self.stats.exits.push(ExitRecord { miner: idx, amount: ticket.amount, priority_period: ticket.priority_period });
            }
        }
        self.check_budget();

        let budget = &mut self.stats.budget;
        for deposit in self.child.deposits().iter().filter(|d| d.entry_count == 0) {
            if deposit.block_period < 2 {
                budget.warmup_residual += deposit.remaining();
            } else {
                budget.empty_distribution_residual += deposit.remaining();
            }
        }
        budget.distributed = self.child.claimed_total().clone();
        budget.invalidated_residual = self.contract.frozen_residual();
        budget.unmatched_residual = self.unmatched.clone();
        budget.withdrawn = self.contract.total_withdrawn().clone();
        if budget.accounted() != budget.pool_coinbase {
            budget.violations += 1;
        }

        for matrix in self.stats.rewards.values_mut() {
            for (row, solo) in matrix.iter_mut().zip(&self.stats.solo_income) {
                for (cell, s) in row.iter_mut().zip(solo) {
                    *cell += s;
                }
            }
        }
        if let Some(base) = &self.baselines {
            if let Some(pps) = &base.pps {
                self.stats.pps_imbalance = Some(pps.imbalance());
                self.stats.pps_work = Some(base.pps_work.clone());
            }
        }
        self.stats
    }
}

fn split(shares: Vec<Share>, batch_size: Option<u64>) -> Vec<Vec<Share>> {
    match batch_size {
        None => vec![shares],
        Some(size) => shares.chunks(size as usize).map(<[Share]>::to_vec).collect(),
    }
}

/// Mines `valid` real shares padded with forged ones. Every full batch of
/// `batch_size` holds exactly `floor(f * batch_size)` forgeries at random
/// positions; without a batch size a single batch gets `floor(valid * f / (1 - f))`.
fn cheat(
    miner: &mut ShareMiner,
    rng: &mut ChaCha8Rng,
    mut valid: u64,
    invalid_fraction: &BigRational,
    batch_size: Option<u64>,
) -> Vec<(Vec<Share>, u64)> {
    let padding_for = |good: u64| to_u64(&(BigRational::from_integer(good.into()) * invalid_fraction / (BigRational::one() - invalid_fraction)));
    let (full_good, full_bad) = match batch_size {
        Some(size) => {
            let bad = to_u64(&(invalid_fraction * BigRational::from_integer(size.into())));
            (size - bad, bad)
        }
        None => (valid, padding_for(valid)),
    };
    let mut batches = Vec::new();
    while valid > 0 {
        let (good, bad) = if valid >= full_good { (full_good, full_bad) } else { (valid, padding_for(valid)) };
        if good == 0 {
            break;
        }
        let n = (good + bad) as usize;
        let forged: std::collections::BTreeSet<usize> = rand::seq::index::sample(rng, n, bad as usize).into_iter().collect();
        let shares = (0..n).map(|i| if forged.contains(&i) { miner.forge_invalid() } else { miner.grind_until(1).shares.remove(0) }).collect();
        batches.push((shares, bad));
        valid -= good;
    }
    batches
}

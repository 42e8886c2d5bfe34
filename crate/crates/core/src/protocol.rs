//! Shares, templates, batches and per-period PoW distributions.
//!
//! # Canonical serialization
//!
//! Every digest in the protocol is taken over a byte string built with
//! [`Encoder`]: a domain tag, then fields in declaration order with
//! fixed-width big-endian integers, raw 32-byte digests, share targets as two
//! `u64`s (numerator, denominator), and variable-length byte fields prefixed
//! by a `u32` length. Share headers are laid out as
//!
//! ```text
//! "fiberpool/share/v1" | pubkey | period u64 | target u64 u64 |
//! dist_commit | coinbase_target | counter u64 | nonce (u32 len + bytes)
//! ```
//!
//! and `pow_value` is the SHA-256 of that header.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::crypto::{self, Digest, KeyPair, MerkleError, MerkleProof, MerkleTree, PublicKey, Signature};
use crate::units::{Amount, Target, Work};

pub const SHARE_TAG: &[u8] = b"fiberpool/share/v1";
pub const BATCH_TAG: &[u8] = b"fiberpool/batch/v1";
pub const PROOF_TAG: &[u8] = b"fiberpool/proof/v1";
pub const DIST_ENTRY_TAG: &[u8] = b"fiberpool/dist-entry/v1";
pub const EMPTY_DIST_TAG: &[u8] = b"fiberpool/empty-distribution/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("period_len ({period_len}) must be at least twice prepare_len ({prepare_len}), and prepare_len at least 1")]
    Geometry { period_len: u64, prepare_len: u64 },
    #[error("block interval must be positive")]
    BlockInterval,
    #[error("work for {0:?} must be positive")]
    NonPositiveWork(PublicKey),
    #[error("a batch needs at least one share")]
    EmptyBatch,
    #[error(transparent)]
    Merkle(#[from] MerkleError),
}

/// Byte-string builder for the canonical encoding.
#[derive(Default)]
pub struct Encoder(Vec<u8>);

impl Encoder {
    pub fn new(tag: &[u8]) -> Self {
        let mut enc = Encoder(Vec::with_capacity(256));
        enc.bytes(tag);
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.0.extend_from_slice(d.as_bytes());
        self
    }

    pub fn target(&mut self, t: Target) -> &mut Self {
        self.u64(t.numer()).u64(t.denom())
    }

    pub fn work(&mut self, w: &Work) -> &mut Self {
        w.encode(&mut self.0);
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
        self
    }

    pub fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

/// Period geometry measured in main-chain blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodConfig {
    pub period_len: u64,
    pub prepare_len: u64,
    /// Mean main-chain block time, in abstract time units.
    pub block_interval: f64,
}

impl PeriodConfig {
    pub fn new(period_len: u64, prepare_len: u64, block_interval: f64) -> Result<Self, ProtocolError> {
        if prepare_len == 0 || period_len < 2 * prepare_len {
            return Err(ProtocolError::Geometry { period_len, prepare_len });
        }
        if !(block_interval > 0.0 && block_interval.is_finite()) {
            return Err(ProtocolError::BlockInterval);
        }
        Ok(PeriodConfig { period_len, prepare_len, block_interval })
    }

    /// First main-chain height of the Prepare phase that precedes `period`.
    /// The Prepare phase for period `k` is the tail of period `k - 1`.
    pub fn prepare_start_height(&self, period: u64) -> Option<u64> {
        (period * self.period_len).checked_sub(self.prepare_len)
    }
}

/// Uniform value in [0, 1) taken from the first eight bytes of `d`.
///
/// Only the top 53 bits are used so the quotient is exact in `f64` and never
/// rounds up to 1. Share validity itself is decided on the full 64 bits by
/// [`Target::admits`].
pub fn normalized(d: &Digest) -> f64 {
    (d.leading_u64() >> 11) as f64 / 9_007_199_254_740_992.0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub pubkey: PublicKey,
    pub period: u64,
    pub counter: u64,
    pub difficulty: Target,
    pub dist_commit: Digest,
    pub coinbase_target: Digest,
    pub nonce: Vec<u8>,
    pub pow_value: Digest,
}

fn header_prefix(pubkey: &PublicKey, period: u64, difficulty: Target, dist_commit: &Digest, coinbase: &Digest) -> Vec<u8> {
    let mut enc = Encoder::new(SHARE_TAG);
    enc.digest(&pubkey.0).u64(period).target(difficulty).digest(dist_commit).digest(coinbase);
    enc.finish()
}

fn header_suffix(counter: u64, nonce: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + nonce.len());
    out.extend_from_slice(&counter.to_be_bytes());
    out.extend_from_slice(&(nonce.len() as u32).to_be_bytes());
    out.extend_from_slice(nonce);
    out
}

impl Share {
    /// Builds a share and computes its `pow_value` from the header.
    pub fn seal(template: &BlockTemplate, counter: u64, nonce: Vec<u8>) -> Share {
        let mut share = Share {
            pubkey: template.pubkey,
            period: template.period,
            counter,
            difficulty: template.difficulty,
            dist_commit: template.linking.dist_commit,
            coinbase_target: template.coinbase_target,
            nonce,
            pow_value: Digest::from_raw([0; 32]),
        };
        share.pow_value = share.header_digest();
        share
    }

    pub fn header_bytes(&self) -> Vec<u8> {
        let mut bytes = header_prefix(&self.pubkey, self.period, self.difficulty, &self.dist_commit, &self.coinbase_target);
        bytes.extend_from_slice(&header_suffix(self.counter, &self.nonce));
        bytes
    }

    /// Hash of the header, recomputed from the fields.
    pub fn header_digest(&self) -> Digest {
        crypto::hash(&self.header_bytes())
    }
}

/// The share is valid proof-of-work when its normalized hash does
/// not exceed its target.
pub fn check_pow(s: &Share) -> bool {
    s.difficulty.admits(s.pow_value.leading_u64())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkingPayload {
    /// Reward placeholder; the template always links the full block reward.
    pub amount: Amount,
    pub dist_commit: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTemplate {
    pub period: u64,
    pub coinbase_target: Digest,
    pub linking: LinkingPayload,
    pub difficulty: Target,
    pub pubkey: PublicKey,
}

/// Verified work per public key for one period.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PowDistribution {
    pub period: u64,
    entries: BTreeMap<PublicKey, Work>,
}

impl PowDistribution {
    pub fn new(period: u64) -> Self {
        PowDistribution { period, entries: BTreeMap::new() }
    }

    /// Adds `work` to `pubkey`'s entry.
    pub fn credit(&mut self, pubkey: PublicKey, work: Work) -> Result<(), ProtocolError> {
        if !work.is_positive() {
            return Err(ProtocolError::NonPositiveWork(pubkey));
        }
        *self.entries.entry(pubkey).or_default() += work;
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<PublicKey, Work> {
        &self.entries
    }

    pub fn work_of(&self, pubkey: &PublicKey) -> Option<&Work> {
        self.entries.get(pubkey)
    }

    pub fn total_work(&self) -> Work {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    fn tree(&self) -> Option<MerkleTree> {
        let leaves = self.entries.iter().map(|(pk, w)| distribution_leaf(pk, w)).collect::<Vec<_>>();
        crypto::merkle_build(leaves).ok()
    }

    /// Merkle opening of `pubkey`'s entry against [`commit_distribution`].
    pub fn opening(&self, pubkey: &PublicKey) -> Option<(Work, MerkleProof)> {
        let index = self.entries.keys().position(|k| k == pubkey)?;
        let proof = crypto::merkle_prove(&self.tree()?, index).ok()?;
        Some((self.entries[pubkey].clone(), proof))
    }
}

/// Leaf digest for one `(pubkey, work)` distribution entry.
pub fn distribution_leaf(pubkey: &PublicKey, work: &Work) -> Digest {
    let mut enc = Encoder::new(DIST_ENTRY_TAG);
    enc.digest(&pubkey.0).work(work);
    crypto::hash(&enc.finish())
}

/// Commitment used for periods with no accepted work (including the two
/// bootstrap periods that have no predecessor).
pub fn empty_distribution_commitment() -> Digest {
    crypto::hash(EMPTY_DIST_TAG)
}

/// Merkle root over pubkey-ordered `(pubkey, work)` leaves.
pub fn commit_distribution(d: &PowDistribution) -> Digest {
    d.tree().map(|t| t.root()).unwrap_or_else(empty_distribution_commitment)
}

/// A miner's commitment to a contiguous, counter-ordered run of shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pubkey: PublicKey,
    pub period: u64,
    /// Counter of the first share; leaf `k` holds counter `first_counter + k`.
    pub first_counter: u64,
    pub merkle_root: Digest,
    pub difficulty: Target,
    pub share_count: u64,
    pub signature: Signature,
}

impl Batch {
    pub fn signing_bytes(pubkey: &PublicKey, period: u64, first_counter: u64, merkle_root: &Digest, difficulty: Target, share_count: u64) -> Vec<u8> {
        let mut enc = Encoder::new(BATCH_TAG);
        enc.digest(&pubkey.0).u64(period).u64(first_counter).digest(merkle_root).target(difficulty).u64(share_count);
        enc.finish()
    }

    /// Commits to `shares` (which must be counter-ordered and contiguous) and
    /// signs the batch. Returns the tree so the miner can answer challenges.
    pub fn commit(kp: &KeyPair, period: u64, difficulty: Target, shares: &[Share]) -> Result<(Batch, MerkleTree), ProtocolError> {
        let first = shares.first().ok_or(ProtocolError::EmptyBatch)?;
        let tree = crypto::merkle_build(shares.iter().map(|s| s.pow_value).collect())?;
        let batch = Batch::sign_parts(kp, period, first.counter, tree.root(), difficulty, shares.len() as u64);
        Ok((batch, tree))
    }

    pub fn sign_parts(kp: &KeyPair, period: u64, first_counter: u64, merkle_root: Digest, difficulty: Target, share_count: u64) -> Batch {
        let pubkey = kp.public();
        let msg = Batch::signing_bytes(&pubkey, period, first_counter, &merkle_root, difficulty, share_count);
        Batch { pubkey, period, first_counter, merkle_root, difficulty, share_count, signature: crypto::sign(kp, &msg) }
    }

    pub fn message(&self) -> Vec<u8> {
        Batch::signing_bytes(&self.pubkey, self.period, self.first_counter, &self.merkle_root, self.difficulty, self.share_count)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.message();
        bytes.extend_from_slice(&self.signature.to_bytes());
        bytes
    }

    pub fn id(&self) -> Digest {
        crypto::hash(&self.to_bytes())
    }

    /// Counter range `[first, first + N)` covered by the batch.
    pub fn counter_range(&self) -> std::ops::Range<u64> {
        self.first_counter..self.first_counter + self.share_count
    }
}

/// A committed batch plus what its miner keeps to answer challenges.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub batch: Batch,
    pub shares: Vec<Share>,
    pub tree: MerkleTree,
}

impl PreparedBatch {
    pub fn new(kp: &KeyPair, period: u64, difficulty: Target, shares: Vec<Share>) -> Result<Self, ProtocolError> {
        let (batch, tree) = Batch::commit(kp, period, difficulty, &shares)?;
        Ok(PreparedBatch { batch, shares, tree })
    }

    /// Opens leaf `index` as the answer to challenge `ordinal`.
    pub fn answer(&self, kp: &KeyPair, ordinal: u32, index: u64) -> Result<ShareProof, ProtocolError> {
        let idx = index as usize;
        let proof = crypto::merkle_prove(&self.tree, idx)?;
        Ok(ShareProof::create(kp, self.batch.id(), ordinal, self.shares[idx].clone(), proof))
    }
}

/// N / D for a batch: the expected number of hashes behind its shares.
pub fn batch_work(b: &Batch) -> Work {
    b.difficulty.work_of(b.share_count)
}

/// Opening of one challenged share of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareProof {
    pub batch_id: Digest,
    /// Which of the batch's challenges this answers (0 for the first).
    pub challenge: u32,
    pub share: Share,
    pub merkle_proof: MerkleProof,
    pub signature: Signature,
}

impl ShareProof {
    pub fn signing_bytes(batch_id: &Digest, challenge: u32, share: &Share, proof: &MerkleProof) -> Vec<u8> {
        let mut enc = Encoder::new(PROOF_TAG);
        enc.digest(batch_id).u32(challenge).bytes(&share.header_bytes()).digest(&share.pow_value).bytes(&proof.to_bytes());
        enc.finish()
    }

    pub fn create(kp: &KeyPair, batch_id: Digest, challenge: u32, share: Share, merkle_proof: MerkleProof) -> ShareProof {
        let msg = ShareProof::signing_bytes(&batch_id, challenge, &share, &merkle_proof);
        let signature = crypto::sign(kp, &msg);
        ShareProof { batch_id, challenge, share, merkle_proof, signature }
    }

    pub fn message(&self) -> Vec<u8> {
        ShareProof::signing_bytes(&self.batch_id, self.challenge, &self.share, &self.merkle_proof)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.message();
        bytes.extend_from_slice(&self.signature.to_bytes());
        bytes
    }
}

#[derive(Debug, Clone, Default)]
pub struct MinedShares {
    pub shares: Vec<Share>,
    /// Counters of shares that also meet the main-chain target.
    pub block_candidates: Vec<u64>,
    pub hashes: u64,
}

/// Nonce grinder bound to one template. Nonces are `seed ‖ attempt` so the
/// output is a pure function of (key, template, seed).
pub struct ShareMiner {
    template: BlockTemplate,
    prefix: Sha256,
    nonce_seed: u64,
    attempts: u64,
    next_counter: u64,
    block_target: Option<Target>,
}

impl ShareMiner {
    pub fn new(template: &BlockTemplate, nonce_seed: u64) -> Self {
        let mut prefix = Sha256::new();
        prefix.update(header_prefix(
            &template.pubkey,
            template.period,
            template.difficulty,
            &template.linking.dist_commit,
            &template.coinbase_target,
        ));
        ShareMiner { template: template.clone(), prefix, nonce_seed, attempts: 0, next_counter: 0, block_target: None }
    }

    pub fn with_first_counter(mut self, counter: u64) -> Self {
        self.next_counter = counter;
        self
    }

    pub fn with_block_target(mut self, target: Target) -> Self {
        self.block_target = Some(target);
        self
    }

    pub fn next_counter(&self) -> u64 {
        self.next_counter
    }

    fn attempt(&mut self) -> (Vec<u8>, Digest) {
        let mut nonce = Vec::with_capacity(16);
        nonce.extend_from_slice(&self.nonce_seed.to_be_bytes());
        nonce.extend_from_slice(&self.attempts.to_be_bytes());
        self.attempts += 1;
        let mut hasher = self.prefix.clone();
        hasher.update(header_suffix(self.next_counter, &nonce));
        (nonce, Digest::from_raw(hasher.finalize().into()))
    }

    fn take(&mut self, nonce: Vec<u8>, pow: Digest, out: &mut MinedShares) {
        if self.block_target.is_some_and(|t| t.admits(pow.leading_u64())) {
            out.block_candidates.push(self.next_counter);
        }
        let share = Share::seal(&self.template, self.next_counter, nonce);
        debug_assert_eq!(share.pow_value, pow);
        out.shares.push(share);
        self.next_counter += 1;
    }

    /// Spends exactly `hashes` attempts and keeps every valid share.
    pub fn grind(&mut self, hashes: u64) -> MinedShares {
        let mut out = MinedShares::default();
        for _ in 0..hashes {
            let (nonce, pow) = self.attempt();
            if self.template.difficulty.admits(pow.leading_u64()) {
                self.take(nonce, pow, &mut out);
            }
        }
        out.hashes = hashes;
        out
    }

    /// Grinds until `count` valid shares exist.
    pub fn grind_until(&mut self, count: u64) -> MinedShares {
        let mut out = MinedShares::default();
        let start = self.attempts;
        while (out.shares.len() as u64) < count {
            let (nonce, pow) = self.attempt();
            if self.template.difficulty.admits(pow.leading_u64()) {
                self.take(nonce, pow, &mut out);
            }
        }
        out.hashes = self.attempts - start;
        out
    }

    /// A header that does NOT meet the target, occupying the next counter.
    /// Used by cheating miners to pad batches.
    pub fn forge_invalid(&mut self) -> Share {
        loop {
            let (nonce, pow) = self.attempt();
            if !self.template.difficulty.admits(pow.leading_u64()) {
                let share = Share::seal(&self.template, self.next_counter, nonce);
                self.next_counter += 1;
                return share;
            }
        }
    }
}

/// Grinds `hash_budget` nonces against `template`.
pub fn mine_shares(template: &BlockTemplate, hash_budget: u64, nonce_seed: u64) -> MinedShares {
    ShareMiner::new(template, nonce_seed).grind(hash_budget)
}


#[cfg(test)]
mod tests {
    use super::fixtures::template;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn geometry_invariants() {
        assert!(PeriodConfig::new(100, 10, 1.0).is_ok());
        assert!(PeriodConfig::new(20, 10, 1.0).is_ok());
        assert!(PeriodConfig::new(19, 10, 1.0).is_err());
        assert!(PeriodConfig::new(100, 0, 1.0).is_err());
        assert!(PeriodConfig::new(100, 100, 1.0).is_err());
        assert!(PeriodConfig::new(100, 10, 0.0).is_err());
        let cfg = PeriodConfig::new(100, 10, 1.0).unwrap();
        assert_eq!(cfg.prepare_start_height(3), Some(290));
        assert_eq!(cfg.prepare_start_height(0), None);
    }

    #[test]
    fn normalized_bounds() {
        assert_eq!(normalized(&Digest::from_raw([0; 32])), 0.0);
        assert!(normalized(&Digest::from_raw([0xff; 32])) < 1.0);
    }

    #[test]
    fn normalized_mean_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| {
                let mut b = [0u8; 32];
                rng.fill(&mut b);
                normalized(&crypto::hash(&b))
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn full_target_accepts_everything() {
        let kp = KeyPair::from_seed(b"m");
        let mined = mine_shares(&template(&kp, 0, Target::ONE), 500, 1);
        assert_eq!(mined.shares.len(), 500);
    }

    #[test]
    fn acceptance_rate_matches_target() {
        let kp = KeyPair::from_seed(b"m");
        let n = 100_000u64;
        let p = 0.01;
        let mined = mine_shares(&template(&kp, 0, Target::new(1, 100).unwrap()), n, 9);
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let got = mined.shares.len() as f64;
        assert!((got - n as f64 * p).abs() <= 3.0 * sigma, "{got} shares");
    }

    #[test]
    fn mined_shares_are_valid_and_gapless() {
        let kp = KeyPair::from_seed(b"m");
        assert!(mine_shares(&template(&kp, 0, Target::new(1, 10).unwrap()), 0, 1).shares.is_empty());
        let mined = mine_shares(&template(&kp, 2, Target::new(1, 10).unwrap()), 2_000, 3);
        for (i, s) in mined.shares.iter().enumerate() {
            assert_eq!(s.counter, i as u64);
            assert!(check_pow(s));
            assert_eq!(s.pow_value, s.header_digest());
        }
    }

    #[test]
    fn block_candidates_are_flagged() {
        let kp = KeyPair::from_seed(b"m");
        let t = template(&kp, 0, Target::new(1, 4).unwrap());
        let block_target = Target::new(1, 64).unwrap();
        let mined = ShareMiner::new(&t, 1).with_block_target(block_target).grind(20_000);
        assert!(!mined.block_candidates.is_empty());
        for c in &mined.block_candidates {
            assert!(block_target.admits(mined.shares[*c as usize].pow_value.leading_u64()));
        }
    }

    #[test]
    fn forged_shares_fail_pow() {
        let kp = KeyPair::from_seed(b"m");
        let mut miner = ShareMiner::new(&template(&kp, 0, Target::new(1, 2).unwrap()), 4);
        for _ in 0..50 {
            assert!(!check_pow(&miner.forge_invalid()));
        }
    }

    #[test]
    fn batch_work_values() {
        let kp = KeyPair::from_seed(b"m");
        let root = crypto::hash(b"root");
        let b = Batch::sign_parts(&kp, 0, 0, root, Target::new(1, 100).unwrap(), 100);
        assert_eq!(batch_work(&b), Work::from_integer(10_000));
        let one = Batch::sign_parts(&kp, 0, 0, root, Target::ONE, 1);
        assert_eq!(batch_work(&one), Work::from_integer(1));
        let half_a = Batch::sign_parts(&kp, 0, 0, root, Target::new(1, 100).unwrap(), 50);
        let half_b = Batch::sign_parts(&kp, 0, 50, root, Target::new(1, 100).unwrap(), 50);
        assert_eq!(batch_work(&half_a) + batch_work(&half_b), batch_work(&b));
    }

    #[test]
    fn batch_signature_verifies() {
        let kp = KeyPair::from_seed(b"m");
        let shares = mine_shares(&template(&kp, 1, Target::new(1, 2).unwrap()), 64, 1).shares;
        let (batch, tree) = Batch::commit(&kp, 1, Target::new(1, 2).unwrap(), &shares).unwrap();
        assert!(crypto::verify_signature(&kp.public(), &batch.message(), &batch.signature));
        assert_eq!(batch.share_count, tree.leaf_count() as u64);
        assert!(Batch::commit(&kp, 1, Target::ONE, &[]).is_err());
    }

    fn dist_of(entries: &[(u8, i64)]) -> PowDistribution {
        let mut d = PowDistribution::new(0);
        for (k, w) in entries {
            d.credit(KeyPair::from_seed(&[*k]).public(), Work::from_integer(*w)).unwrap();
        }
        d
    }

    #[test]
    fn commitment_is_order_independent() {
        let a = dist_of(&[(1, 10), (2, 20), (3, 30)]);
        let b = dist_of(&[(3, 30), (1, 10), (2, 20)]);
        assert_eq!(commit_distribution(&a), commit_distribution(&b));
        assert_eq!(a.total_work(), Work::from_integer(60));
    }

    #[test]
    fn commitment_tracks_every_entry() {
        // Exhaustive over up to four entries: bumping any single work changes the root.
        for n in 1..=4u8 {
            let base: Vec<(u8, i64)> = (0..n).map(|k| (k, 100 + k as i64)).collect();
            let root = commit_distribution(&dist_of(&base));
            for i in 0..n as usize {
                let mut bumped = base.clone();
                bumped[i].1 += 1;
                assert_ne!(commit_distribution(&dist_of(&bumped)), root);
            }
        }
    }

    #[test]
    fn empty_commitment_is_sentinel() {
        assert_eq!(commit_distribution(&PowDistribution::new(7)), empty_distribution_commitment());
        assert!(PowDistribution::new(0).credit(KeyPair::from_seed(b"x").public(), Work::zero()).is_err());
    }

    #[test]
    fn commitments_do_not_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let n = rng.random_range(1..5u8);
            let entries: Vec<(u8, i64)> = (0..n).map(|_| (rng.random_range(0..8u8), rng.random_range(1..1_000_000))).collect();
            let d = dist_of(&entries);
            seen.insert((commit_distribution(&d), format!("{:?}", d.entries())));
        }
        let roots: std::collections::HashSet<_> = seen.iter().map(|(r, _)| *r).collect();
        assert_eq!(roots.len(), seen.len());
    }

    #[test]
    fn openings_verify_against_commitment() {
        let d = dist_of(&[(1, 10), (2, 20), (3, 30)]);
        let root = commit_distribution(&d);
        for (pk, w) in d.entries() {
            let (work, proof) = d.opening(pk).unwrap();
            assert_eq!(&work, w);
            assert!(crypto::merkle_verify(&root, &distribution_leaf(pk, w), &proof, d.len()));
        }
    }

    proptest! {
        #[test]
        fn every_mined_share_passes(seed in any::<u64>(), denom in 1u64..16) {
            let kp = KeyPair::from_seed(&seed.to_be_bytes());
            let t = template(&kp, 0, Target::new(1, denom).unwrap());
            for s in mine_shares(&t, 200, seed).shares {
                prop_assert!(check_pow(&s));
            }
        }
    }
}

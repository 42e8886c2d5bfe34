//! Local share verification over a period's storage-chain data.
//!
//! Each batch goes through seven ordered checks; the first failure decides
//! the verdict. Accepted batches are worth `N / D` and are folded into the
//! period's [`PowDistribution`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::crypto::{self, Digest, PublicKey};
use crate::protocol::{batch_work, check_pow, PowDistribution};
use crate::storage::{PrepareBoundary, StorageChain};
use crate::units::{Amount, Work};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationContext {
    /// Period whose shares are being verified.
    pub period: u64,
    /// Storage boundary of the Prepare phase before period `period + 2`.
    pub boundary: PrepareBoundary,
    /// Commitment of period `period - 2`'s distribution.
    pub expected_dist_commit: Digest,
    pub contract_address: Digest,
    /// Challenges every batch must answer.
    pub challenges_per_batch: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Outcome {
    Accepted { work: Work },
    Rejected { step: u8, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchVerdict {
    pub batch_id: Digest,
    pub pubkey: PublicKey,
    pub period: u64,
    pub counters: std::ops::Range<u64>,
    pub outcome: Outcome,
}

impl BatchVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self.outcome, Outcome::Accepted { .. })
    }

    pub fn rejected_step(&self) -> Option<u8> {
        match self.outcome {
            Outcome::Rejected { step, .. } => Some(step),
            Outcome::Accepted { .. } => None,
        }
    }
}

fn reject(step: u8, reason: impl Into<String>) -> Outcome {
    Outcome::Rejected { step, reason: reason.into() }
}

/// Runs the seven checks for the batch `batch_id`.
///
/// 1. batch and every required proof are stored before the boundary, each
///    proof strictly after its batch;
/// 2. the Merkle opening binds the challenged index, which matches both the
///    share counter and the beacon-derived challenge;
/// 3. the share pays the contract address;
/// 4. the share commits to period `i - 2`'s distribution (and to period `i`);
/// 5. batch and share targets agree;
/// 6. the share meets its target;
/// 7. batch and proof signatures verify under the share's public key.
pub fn verify_batch(chain: &StorageChain, batch_id: &Digest, ctx: &VerificationContext) -> BatchVerdict {
    let outcome = match chain.batch(batch_id) {
        Some(located) => check_batch(chain, located.height, batch_id, ctx),
        None => reject(1, "batch not on the storage chain"),
    };
    let (pubkey, period, counters) = match chain.batch(batch_id) {
        Some(l) => (l.item.pubkey, l.item.period, l.item.counter_range()),
        None => (PublicKey(Digest::from_raw([0; 32])), ctx.period, 0..0),
    };
    BatchVerdict { batch_id: *batch_id, pubkey, period, counters, outcome }
}

fn check_batch(chain: &StorageChain, batch_height: u64, batch_id: &Digest, ctx: &VerificationContext) -> Outcome {
    let batch = chain.batch(batch_id).expect("caller located the batch").item;

    // Step 1: deadlines.
    if !ctx.boundary.admits(batch_height) {
        return reject(1, "batch stored at or after the Prepare boundary");
    }
    let all_proofs = chain.proofs_for(batch_id);
    let mut proofs = Vec::with_capacity(ctx.challenges_per_batch as usize);
    for ordinal in 0..ctx.challenges_per_batch {
        let answer = all_proofs.iter().find(|p| p.item.challenge == ordinal && p.height > batch_height && ctx.boundary.admits(p.height));
        match answer {
            Some(p) => proofs.push(p.item),
            None => return reject(1, format!("challenge {ordinal} not answered before the Prepare boundary")),
        }
    }

    for (ordinal, proof) in proofs.iter().enumerate() {
        let share = &proof.share;

        // Step 2: position binding.
        let Ok(expected) = chain.challenge_index(batch, batch_height, ordinal as u32) else {
            return reject(2, "challenge beacon unavailable");
        };
        let leaf = share.header_digest();
        if proof.merkle_proof.leaf_index as u64 != expected
            || share.counter != batch.first_counter + expected
            || leaf != share.pow_value
            || !crypto::merkle_verify(&batch.merkle_root, &leaf, &proof.merkle_proof, batch.share_count as usize)
        {
            return reject(2, "opening does not match the challenged position");
        }

        // Step 3: coinbase pays the contract.
        if share.coinbase_target != ctx.contract_address {
            return reject(3, "share coinbase does not pay the pool contract");
        }

        // Step 4: linked to period i-2's distribution.
        if share.dist_commit != ctx.expected_dist_commit || share.period != ctx.period || batch.period != ctx.period {
            return reject(4, "share is not linked to the period i-2 distribution");
        }

        // Step 5: targets agree.
        if batch.difficulty != share.difficulty {
            return reject(5, "batch target differs from share target");
        }

        // Step 6: proof of work.
        if !check_pow(share) {
            return reject(6, "share does not meet its target");
        }

        // Step 7: signatures.
        if batch.pubkey != share.pubkey
            || !crypto::verify_signature(&share.pubkey, &batch.message(), &batch.signature)
            || !crypto::verify_signature(&share.pubkey, &proof.message(), &proof.signature)
        {
            return reject(7, "signature does not verify under the share's key");
        }
    }
    Outcome::Accepted { work: batch_work(batch) }
}

/// Verifies every batch stored for `ctx.period`.
pub fn verify_period(chain: &StorageChain, ctx: &VerificationContext) -> Vec<BatchVerdict> {
    chain.batches_for_period(ctx.period).map(|id| verify_batch(chain, &id, ctx)).collect()
}

/// Folds accepted verdicts into a distribution. A key whose accepted batches
/// overlap in counter range loses all of its work for the period.
pub fn aggregate_distribution(verdicts: &[BatchVerdict], period: u64) -> PowDistribution {
    let mut per_key: BTreeMap<PublicKey, Vec<(std::ops::Range<u64>, &Work)>> = BTreeMap::new();
    for v in verdicts.iter().filter(|v| v.period == period) {
        if let Outcome::Accepted { work } = &v.outcome {
            per_key.entry(v.pubkey).or_default().push((v.counters.clone(), work));
        }
    }
    let mut dist = PowDistribution::new(period);
    for (pubkey, mut ranges) in per_key {
        ranges.sort_by_key(|(r, _)| (r.start, r.end));
        let overlapping = ranges.windows(2).any(|w| w[1].0.start < w[0].0.end);
        if overlapping {
            continue;
        }
        for (_, work) in ranges {
            dist.credit(pubkey, work.clone()).expect("accepted work is positive");
        }
    }
    dist
}

/// Expected payout `B (1 - f)` of a batch with invalid-share fraction `f`
/// under a single uniform challenge.
pub fn expected_reward_under_cheating(block_reward: &Amount, invalid_fraction: &num_rational::BigRational) -> Amount {
    use num_traits::One;
    block_reward.scale(&(num_rational::BigRational::one() - invalid_fraction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::protocol::{empty_distribution_commitment, Batch, BlockTemplate, LinkingPayload, ShareMiner, ShareProof};
    use crate::storage::StorageEntry;
    use crate::units::Target;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn contract() -> Digest {
        crypto::hash(b"contract")
    }

    fn ctx(boundary: PrepareBoundary) -> VerificationContext {
        VerificationContext {
            period: 4,
            boundary,
            expected_dist_commit: empty_distribution_commitment(),
            contract_address: contract(),
            challenges_per_batch: 1,
        }
    }

    fn submit(chain: &mut StorageChain, kp: &KeyPair, n: u64, seed: u64, t0: f64) -> Digest {
        let template = BlockTemplate {
            period: 4,
            coinbase_target: contract(),
            linking: LinkingPayload { amount: Amount::from_integer(1), dist_commit: empty_distribution_commitment() },
            difficulty: Target::new(1, 4).unwrap(),
            pubkey: kp.public(),
        };
        let shares = ShareMiner::new(&template, seed).grind_until(n).shares;
        let (batch, tree) = Batch::commit(kp, 4, template.difficulty, &shares).unwrap();
        let id = batch.id();
        chain.append(vec![StorageEntry::Batch(batch)], t0).unwrap();
        chain.append(vec![], t0 + 1.0).unwrap();
        let idx = chain.challenge_for(&id, 0).unwrap() as usize;
        let proof = ShareProof::create(kp, id, 0, shares[idx].clone(), crypto::merkle_prove(&tree, idx).unwrap());
        chain.append(vec![StorageEntry::Proof(proof)], t0 + 2.0).unwrap();
        id
    }

    #[test]
    fn honest_batch_is_accepted() {
        let kp = KeyPair::from_seed(b"m1");
        let mut chain = StorageChain::new();
        let id = submit(&mut chain, &kp, 40, 1, 1.0);
        let v = verify_batch(&chain, &id, &ctx(PrepareBoundary::Open));
        assert_eq!(v.outcome, Outcome::Accepted { work: Work::from_integer(160) });
    }

    #[test]
    fn proof_after_boundary_is_step_one() {
        let kp = KeyPair::from_seed(b"m1");
        let mut chain = StorageChain::new();
        let id = submit(&mut chain, &kp, 8, 1, 1.0);
        // Proof lives at height 2.
        assert_eq!(verify_batch(&chain, &id, &ctx(PrepareBoundary::At(2))).rejected_step(), Some(1));
        assert_eq!(verify_batch(&chain, &id, &ctx(PrepareBoundary::At(0))).rejected_step(), Some(1));
        assert!(verify_batch(&chain, &id, &ctx(PrepareBoundary::At(3))).is_accepted());
    }

    #[test]
    fn extra_challenges_must_be_answered() {
        let kp = KeyPair::from_seed(b"m1");
        let mut chain = StorageChain::new();
        let id = submit(&mut chain, &kp, 8, 1, 1.0);
        let mut c = ctx(PrepareBoundary::Open);
        c.challenges_per_batch = 2;
        assert_eq!(verify_batch(&chain, &id, &c).rejected_step(), Some(1));
    }

    #[test]
    fn aggregation_sums_and_is_order_independent() {
        let k1 = KeyPair::from_seed(b"m1");
        let k2 = KeyPair::from_seed(b"m2");
        let mut chain = StorageChain::new();
        submit(&mut chain, &k1, 25, 1, 1.0);
        submit(&mut chain, &k2, 75, 2, 10.0);
        let mut verdicts = verify_period(&chain, &ctx(PrepareBoundary::Open));
        let dist = aggregate_distribution(&verdicts, 4);
        assert_eq!(dist.work_of(&k1.public()), Some(&Work::from_integer(100)));
        assert_eq!(dist.work_of(&k2.public()), Some(&Work::from_integer(300)));
        assert_eq!(dist.total_work(), Work::from_integer(400));
        let root = crate::protocol::commit_distribution(&dist);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            verdicts.shuffle(&mut rng);
            assert_eq!(crate::protocol::commit_distribution(&aggregate_distribution(&verdicts, 4)), root);
        }
    }

    #[test]
    fn rejected_batches_contribute_nothing() {
        let k1 = KeyPair::from_seed(b"m1");
        let mut chain = StorageChain::new();
        let id = submit(&mut chain, &k1, 10, 1, 1.0);
        let verdicts = verify_period(&chain, &ctx(PrepareBoundary::At(1)));
        assert_eq!(verdicts.len(), 1);
        assert_eq!(verdicts[0].batch_id, id);
        assert!(aggregate_distribution(&verdicts, 4).is_empty());
    }

    #[test]
    fn overlapping_counters_void_the_miner() {
        let k1 = KeyPair::from_seed(b"m1");
        let k2 = KeyPair::from_seed(b"m2");
        let mut chain = StorageChain::new();
        // Same seed and counters twice: the second batch reuses the shares.
        submit(&mut chain, &k1, 10, 1, 1.0);
        let template_seed_other = 99;
        submit(&mut chain, &k1, 12, template_seed_other, 10.0);
        submit(&mut chain, &k2, 10, 2, 20.0);
        let verdicts = verify_period(&chain, &ctx(PrepareBoundary::Open));
        assert!(verdicts.iter().all(BatchVerdict::is_accepted));
        let dist = aggregate_distribution(&verdicts, 4);
        assert!(dist.work_of(&k1.public()).is_none());
        assert!(dist.work_of(&k2.public()).is_some());
    }

    #[test]
    fn cheating_oracle_values() {
        let r = |n: i64, d: i64| num_rational::BigRational::new(n.into(), d.into());
        assert_eq!(expected_reward_under_cheating(&Amount::from_integer(10), &r(1, 5)), Amount::from_integer(8));
        assert_eq!(expected_reward_under_cheating(&Amount::from_integer(10), &r(0, 1)), Amount::from_integer(10));
        assert_eq!(expected_reward_under_cheating(&Amount::from_integer(10), &r(1, 1)), Amount::zero());
    }
}

//! Hand-crafted misbehaving submissions, one per verification step, plus the
//! self-serving template a producer might try to slip into its block.

use crate::crypto::{self, Digest, KeyPair};
use crate::protocol::{
    commit_distribution, empty_distribution_commitment, BlockTemplate, LinkingPayload, PowDistribution, PreparedBatch, ShareMiner,
};
use crate::storage::{PrepareBoundary, StorageChain, StorageEntry};
use crate::units::{Amount, Target, Work};
use crate::verification::VerificationContext;

/// Period every fixture claims to belong to.
pub const FIXTURE_PERIOD: u64 = 6;
const SHARES: u64 = 16;

/// A storage chain holding one batch and its proof, and the context under
/// which it should be verified.
#[derive(Debug, Clone)]
pub struct AdversarialCase {
    pub name: &'static str,
    /// Step expected to reject the batch; `None` for the honest control.
    pub expected_step: Option<u8>,
    pub chain: StorageChain,
    pub batch_id: Digest,
    pub ctx: VerificationContext,
}

pub fn contract_address() -> Digest {
    crypto::hash(b"fiberpool/fixture-contract")
}

/// Commitment the honest pool agreed on for period `FIXTURE_PERIOD - 2`.
pub fn agreed_commitment() -> Digest {
    let mut dist = PowDistribution::new(FIXTURE_PERIOD - 2);
    dist.credit(KeyPair::from_seed(b"fixture/earlier-miner").public(), Work::from_integer(64)).expect("positive work");
    commit_distribution(&dist)
}

fn honest_template(kp: &KeyPair) -> BlockTemplate {
    BlockTemplate {
        period: FIXTURE_PERIOD,
        coinbase_target: contract_address(),
        linking: LinkingPayload { amount: Amount::from_integer(1), dist_commit: agreed_commitment() },
        difficulty: Target::new(1, 4).expect("valid target"),
        pubkey: kp.public(),
    }
}

/// Knobs each fixture turns away from the honest path.
struct Tweaks {
    template: BlockTemplate,
    batch_difficulty: Option<Target>,
    forge_all: bool,
    batch_signer: Option<KeyPair>,
    wrong_index: bool,
    boundary: PrepareBoundary,
}

fn build(name: &'static str, expected_step: Option<u8>, kp: &KeyPair, t: Tweaks) -> AdversarialCase {
    let mut miner = ShareMiner::new(&t.template, 7);
    let shares = if t.forge_all { (0..SHARES).map(|_| miner.forge_invalid()).collect() } else { miner.grind_until(SHARES).shares };
    let signer = t.batch_signer.as_ref().unwrap_or(kp);
    let difficulty = t.batch_difficulty.unwrap_or(t.template.difficulty);
    let prepared = PreparedBatch::new(signer, FIXTURE_PERIOD, difficulty, shares).expect("non-empty batch");
    let batch_id = prepared.batch.id();

    let mut chain = StorageChain::new();
    chain.append(vec![StorageEntry::Batch(prepared.batch.clone())], 1.0).expect("fresh chain");
    chain.append(vec![], 2.0).expect("increasing time");
    let challenged = chain.challenge_for(&batch_id, 0).expect("beacon available");
    let index = if t.wrong_index { (challenged + 1) % SHARES } else { challenged };
    let proof = prepared.answer(kp, 0, index).expect("index in range");
    chain.append(vec![StorageEntry::Proof(proof)], 3.0).expect("increasing time");
    chain.append(vec![], 4.0).expect("increasing time");

    let ctx = VerificationContext {
        period: FIXTURE_PERIOD,
        boundary: t.boundary,
        expected_dist_commit: agreed_commitment(),
        contract_address: contract_address(),
        challenges_per_batch: 1,
    };
    AdversarialCase { name, expected_step, chain, batch_id, ctx }
}

fn honest_tweaks(kp: &KeyPair) -> Tweaks {
    Tweaks {
        template: honest_template(kp),
        batch_difficulty: None,
        forge_all: false,
        batch_signer: None,
        wrong_index: false,
        boundary: PrepareBoundary::Open,
    }
}

/// A well-formed submission that passes every step.
pub fn honest_case() -> AdversarialCase {
    let kp = KeyPair::from_seed(b"fixture/honest");
    build("honest", None, &kp, honest_tweaks(&kp))
}

/// Seven submissions, the `k`-th of which is first rejected at step `k`.
pub fn step_cases() -> Vec<AdversarialCase> {
    let kp = KeyPair::from_seed(b"fixture/adversary");
    let mut cases = Vec::with_capacity(7);

    // Proof lands at height 2, on the wrong side of a boundary at 2.
    cases.push(build("late-proof", Some(1), &kp, Tweaks { boundary: PrepareBoundary::At(2), ..honest_tweaks(&kp) }));

    // Opens a valid share, just not the challenged one.
    cases.push(build("unchallenged-leaf", Some(2), &kp, Tweaks { wrong_index: true, ..honest_tweaks(&kp) }));

    let mut t = honest_tweaks(&kp);
    t.template.coinbase_target = kp.public().0;
    cases.push(build("coinbase-to-self", Some(3), &kp, t));

    let mut t = honest_tweaks(&kp);
    t.template.linking.dist_commit = empty_distribution_commitment();
    cases.push(build("foreign-distribution", Some(4), &kp, t));

    // Shares mined at 1/4 but the batch claims 1/8, doubling its work.
    cases.push(build(
        "inflated-target",
        Some(5),
        &kp,
        Tweaks { batch_difficulty: Some(Target::new(1, 8).expect("valid target")), ..honest_tweaks(&kp) },
    ));

    cases.push(build("forged-shares", Some(6), &kp, Tweaks { forge_all: true, ..honest_tweaks(&kp) }));

    // A thief re-signs the adversary's batch under its own key.
    cases.push(build("stolen-batch", Some(7), &kp, Tweaks { batch_signer: Some(KeyPair::from_seed(b"fixture/thief")), ..honest_tweaks(&kp) }));
    cases
}

/// Template whose linking transaction credits the whole block reward to
/// its producer instead of the agreed period `i - 2` distribution.
pub fn self_serving_template(kp: &KeyPair, period: u64, agreed: &BlockTemplate) -> BlockTemplate {
    let mut selfish = PowDistribution::new(period.saturating_sub(2));
    selfish.credit(kp.public(), Work::from_integer(1)).expect("positive work");
    BlockTemplate {
        period,
        coinbase_target: agreed.coinbase_target,
        linking: LinkingPayload { amount: agreed.linking.amount.clone(), dist_commit: commit_distribution(&selfish) },
        difficulty: agreed.difficulty,
        pubkey: kp.public(),
    }
}

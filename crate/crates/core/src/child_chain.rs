//! Layer-2 ledger for pool rewards.
//!
//! Every validated linking transaction becomes a deposit against the
//! distribution it commits to. Miners claim their pro-rata slice with a
//! Merkle opening of their `(pubkey, work)` entry, move funds between
//! accounts, and exit in a single aggregated withdrawal from the contract.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{self, Digest, MerkleProof, PublicKey, Signature};
use crate::main_chain::{ContractError, ContractState, LinkStatus};
use crate::protocol::{commit_distribution, distribution_leaf, Encoder, PowDistribution};
use crate::units::{Amount, Work};

const CLAIM_TAG: &[u8] = b"fiberpool/claim/v1";

/// Exits of rewards that never moved inside the child chain are dated this
/// many periods before their source period.
pub const EXIT_PRIORITY_OFFSET: i64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChildError {
    #[error("distribution does not match link")]
    DistributionMismatch,
    #[error("link {0} is not validated")]
    LinkNotValidated(usize),
    #[error("link {0} has no such index")]
    UnknownLink(usize),
    #[error("link {0} already has a deposit")]
    AlreadyRegistered(usize),
    #[error("deposit {0} does not exist")]
    UnknownDeposit(usize),
    #[error("{0:?} already claimed deposit {1}")]
    DoubleClaim(PublicKey, usize),
    #[error("opening does not prove the entry under the deposit commitment")]
    BadOpening,
    #[error("claim signature does not verify")]
    BadSignature,
    #[error("insufficient child-chain balance")]
    Overdraw,
    #[error("nothing to withdraw")]
    ZeroBalance,
    #[error(transparent)]
    Contract(#[from] ContractError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deposit {
    pub id: usize,
    pub link_index: usize,
    pub amount: Amount,
    pub dist_commit: Digest,
    /// Mining period whose work this deposit pays (two before `block_period`).
    pub source_period: i64,
    /// Period in which the paying block was mined.
    pub block_period: u64,
    pub total_work: Work,
    pub entry_count: usize,
    claimed: BTreeMap<PublicKey, Amount>,
    remaining: Amount,
}

impl Deposit {
    pub fn remaining(&self) -> &Amount {
        &self.remaining
    }

    pub fn claims(&self) -> &BTreeMap<PublicKey, Amount> {
        &self.claimed
    }

    pub fn has_claimed(&self, pubkey: &PublicKey) -> bool {
        self.claimed.contains_key(pubkey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChildAccount {
    pub balance: Amount,
    /// Oldest source period among funds received since the last exit.
    pub oldest_source_period: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExitTicket {
    pub seq: u64,
    pub pubkey: PublicKey,
    pub amount: Amount,
    pub priority_period: i64,
}

/// Message a miner signs to claim its entry of a deposit.
pub fn claim_message(deposit: &Deposit, pubkey: &PublicKey, work: &Work) -> Vec<u8> {
    let mut enc = Encoder::new(CLAIM_TAG);
    enc.u64(deposit.link_index as u64).digest(&deposit.dist_commit).digest(&pubkey.0).work(work);
    enc.finish()
}

#[derive(Debug, Clone, Default)]
pub struct ChildChain {
    deposits: Vec<Deposit>,
    by_link: BTreeSet<usize>,
    accounts: BTreeMap<PublicKey, ChildAccount>,
    exits: Vec<ExitTicket>,
    claimed_total: Amount,
    unclaimed_total: Amount,
    supply_total: Amount,
}

impl ChildChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deposits(&self) -> &[Deposit] {
        &self.deposits
    }

    pub fn deposit(&self, id: usize) -> Option<&Deposit> {
        self.deposits.get(id)
    }

    pub fn account(&self, pubkey: &PublicKey) -> Option<&ChildAccount> {
        self.accounts.get(pubkey)
    }

    pub fn balance(&self, pubkey: &PublicKey) -> Amount {
        self.accounts.get(pubkey).map(|a| a.balance.clone()).unwrap_or_default()
    }

    /// Total currency held in child accounts.
    pub fn supply(&self) -> &Amount {
        &self.supply_total
    }

    /// Deposited value nobody has claimed yet.
    pub fn unclaimed(&self) -> &Amount {
        &self.unclaimed_total
    }

    pub fn claimed_total(&self) -> &Amount {
        &self.claimed_total
    }

    pub fn exits(&self) -> &[ExitTicket] {
        &self.exits
    }

    /// Exit tickets in processing order: earliest priority period first,
    /// then submission order.
    pub fn exit_queue(&self) -> Vec<&ExitTicket> {
        let mut queue: Vec<&ExitTicket> = self.exits.iter().collect();
        queue.sort_by_key(|t| (t.priority_period, t.seq));
        queue
    }

    pub fn is_registered(&self, link_index: usize) -> bool {
        self.by_link.contains(&link_index)
    }

    /// Turns validated link `link_index` into a deposit against `dist`.
    /// Pending links are settled first.
    pub fn register_deposit(&mut self, contract: &mut ContractState, link_index: usize, dist: &PowDistribution) -> Result<usize, ChildError> {
        contract.settle_pending();
        let link = contract.links().get(link_index).ok_or(ChildError::UnknownLink(link_index))?;
        if link.status != LinkStatus::Validated {
            return Err(ChildError::LinkNotValidated(link_index));
        }
        if self.by_link.contains(&link_index) {
            return Err(ChildError::AlreadyRegistered(link_index));
        }
        if commit_distribution(dist) != link.dist_commit {
            return Err(ChildError::DistributionMismatch);
        }
        let id = self.deposits.len();
        self.deposits.push(Deposit {
            id,
            link_index,
            amount: link.amount.clone(),
            dist_commit: link.dist_commit,
            source_period: link.period as i64 - 2,
            block_period: link.period,
            total_work: dist.total_work(),
            entry_count: dist.len(),
            claimed: BTreeMap::new(),
            remaining: link.amount.clone(),
        });
        self.by_link.insert(link_index);
        self.unclaimed_total += &link.amount;
        Ok(id)
    }

    /// Credits `pubkey` with `amount * work / total_work` of the deposit.
    pub fn claim(&mut self, deposit_id: usize, pubkey: PublicKey, work: &Work, opening: &MerkleProof, sig: &Signature) -> Result<Amount, ChildError> {
        let deposit = self.deposits.get_mut(deposit_id).ok_or(ChildError::UnknownDeposit(deposit_id))?;
        if deposit.claimed.contains_key(&pubkey) {
            return Err(ChildError::DoubleClaim(pubkey, deposit_id));
        }
        if !work.is_positive() || !crypto::merkle_verify(&deposit.dist_commit, &distribution_leaf(&pubkey, work), opening, deposit.entry_count) {
            return Err(ChildError::BadOpening);
        }
        if !crypto::verify_signature(&pubkey, &claim_message(deposit, &pubkey, work), sig) {
            return Err(ChildError::BadSignature);
        }
        let credit = deposit.amount.pro_rata(work, &deposit.total_work);
        deposit.remaining -= &credit;
        deposit.claimed.insert(pubkey, credit.clone());
        let source = deposit.source_period;
        self.claimed_total += &credit;
        self.unclaimed_total -= &credit;
        self.supply_total += &credit;
        let account = self.accounts.entry(pubkey).or_default();
        account.balance += &credit;
        account.oldest_source_period = Some(account.oldest_source_period.map_or(source, |p| p.min(source)));
        Ok(credit)
    }

    pub fn transfer(&mut self, from: PublicKey, to: PublicKey, amount: &Amount) -> Result<(), ChildError> {
        if amount.is_zero() {
            return Ok(());
        }
        if amount.is_negative() {
            return Err(ChildError::Overdraw);
        }
        let sender = self.accounts.get_mut(&from).ok_or(ChildError::Overdraw)?;
        if sender.balance < *amount {
            return Err(ChildError::Overdraw);
        }
        sender.balance -= amount;
        let age = sender.oldest_source_period;
        let receiver = self.accounts.entry(to).or_default();
        receiver.balance += amount;
        receiver.oldest_source_period = match (receiver.oldest_source_period, age) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Ok(())
    }

    /// Withdraws the account's whole balance from the contract in one
    /// transaction and queues the matching exit ticket.
    pub fn withdraw_aggregate(&mut self, pubkey: PublicKey, contract: &mut ContractState) -> Result<ExitTicket, ChildError> {
        let account = self.accounts.get_mut(&pubkey).ok_or(ChildError::ZeroBalance)?;
        if !account.balance.is_positive() {
            return Err(ChildError::ZeroBalance);
        }
        contract.withdraw(&account.balance)?;
        self.supply_total -= &account.balance;
        let ticket = ExitTicket {
            seq: self.exits.len() as u64,
            pubkey,
            amount: std::mem::take(&mut account.balance),
            priority_period: account.oldest_source_period.take().unwrap_or(0) - EXIT_PRIORITY_OFFSET,
        };
        self.exits.push(ticket.clone());
        Ok(ticket)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    struct Fixture {
        contract: ContractState,
        child: ChildChain,
        keys: Vec<KeyPair>,
        dist: PowDistribution,
    }

    fn fixture(works: &[i64], block_period: u64) -> Fixture {
        let keys: Vec<KeyPair> = (0..works.len() as u8).map(|i| KeyPair::from_seed(&[b'k', i])).collect();
        let mut dist = PowDistribution::new(block_period.saturating_sub(2));
        for (k, w) in keys.iter().zip(works) {
            dist.credit(k.public(), Work::from_integer(*w)).unwrap();
        }
        let mut contract = ContractState::new();
        contract.submit_linking_tx(Amount::from_integer(1), commit_distribution(&dist), block_period, 0).unwrap();
        Fixture { contract, child: ChildChain::new(), keys, dist }
    }

    fn claim_all(f: &mut Fixture, deposit: usize) -> Vec<Amount> {
        f.keys
            .iter()
            .map(|k| {
                let (work, opening) = f.dist.opening(&k.public()).unwrap();
                let sig = crypto::sign(k, &claim_message(f.child.deposit(deposit).unwrap(), &k.public(), &work));
                f.child.claim(deposit, k.public(), &work, &opening, &sig).unwrap()
            })
            .collect()
    }

    #[test]
    fn honest_deposit_and_claims() {
        let mut f = fixture(&[10_000, 30_000], 10);
        let dist = f.dist.clone();
        let id = f.child.register_deposit(&mut f.contract, 0, &dist).unwrap();
        assert_eq!(f.child.deposit(id).unwrap().source_period, 8);
        let credits = claim_all(&mut f, id);
        assert_eq!(credits[0], Amount::from_ratio(1, 4));
        assert_eq!(credits[1], Amount::from_ratio(3, 4));
        assert_eq!(credits.iter().sum::<Amount>(), Amount::from_integer(1));
        assert!(f.child.unclaimed().is_zero());
        assert!(matches!(f.child.register_deposit(&mut f.contract, 0, &dist), Err(ChildError::AlreadyRegistered(0))));
    }

    #[test]
    fn uneven_split_conserves_exactly() {
        let mut f = fixture(&[7, 11, 13], 4);
        let dist = f.dist.clone();
        let id = f.child.register_deposit(&mut f.contract, 0, &dist).unwrap();
        let credits = claim_all(&mut f, id);
        assert_eq!(credits.iter().sum::<Amount>(), Amount::from_integer(1));
        assert_eq!(f.child.supply(), &Amount::from_integer(1));
    }

    #[test]
    fn mismatched_distribution_is_rejected() {
        let mut f = fixture(&[1, 2], 3);
        let mut other = f.dist.clone();
        other.credit(f.keys[0].public(), Work::from_integer(1)).unwrap();
        let err = f.child.register_deposit(&mut f.contract, 0, &other).unwrap_err();
        assert_eq!(err.to_string(), "distribution does not match link");
    }

    #[test]
    fn invalidated_link_cannot_be_deposited() {
        let mut f = fixture(&[1], 3);
        let dist = f.dist.clone();
        f.contract.append_link(Amount::from_integer(5), commit_distribution(&dist), 3, 1).unwrap();
        assert!(matches!(f.child.register_deposit(&mut f.contract, 1, &dist), Err(ChildError::LinkNotValidated(1))));
        assert!(f.child.register_deposit(&mut f.contract, 0, &dist).is_ok());
    }

    #[test]
    fn claim_error_paths() {
        let mut f = fixture(&[1, 3], 5);
        let dist = f.dist.clone();
        let id = f.child.register_deposit(&mut f.contract, 0, &dist).unwrap();
        let k = f.keys[0].clone();
        let (work, opening) = dist.opening(&k.public()).unwrap();
        let msg = claim_message(f.child.deposit(id).unwrap(), &k.public(), &work);

        let inflated = Work::from_integer(3);
        let sig_inflated = crypto::sign(&k, &claim_message(f.child.deposit(id).unwrap(), &k.public(), &inflated));
        assert_eq!(f.child.claim(id, k.public(), &inflated, &opening, &sig_inflated), Err(ChildError::BadOpening));

        let wrong_sig = crypto::sign(&f.keys[1], &msg);
        assert_eq!(f.child.claim(id, k.public(), &work, &opening, &wrong_sig), Err(ChildError::BadSignature));

        let sig = crypto::sign(&k, &msg);
        assert_eq!(f.child.claim(id, k.public(), &work, &opening, &sig), Ok(Amount::from_ratio(1, 4)));
        assert!(matches!(f.child.claim(id, k.public(), &work, &opening, &sig), Err(ChildError::DoubleClaim(..))));
    }

    #[test]
    fn transfers_conserve_supply() {
        let mut f = fixture(&[1, 1], 2);
        let dist = f.dist.clone();
        let id = f.child.register_deposit(&mut f.contract, 0, &dist).unwrap();
        claim_all(&mut f, id);
        let (a, b) = (f.keys[0].public(), f.keys[1].public());
        let supply = f.child.supply().clone();
        f.child.transfer(a, b, &Amount::from_ratio(1, 4)).unwrap();
        assert_eq!(f.child.balance(&a), Amount::from_ratio(1, 4));
        assert_eq!(f.child.balance(&b), Amount::from_ratio(3, 4));
        assert_eq!(f.child.supply(), &supply);
        assert_eq!(f.child.transfer(a, b, &Amount::from_integer(1)), Err(ChildError::Overdraw));
        f.child.transfer(a, b, &Amount::zero()).unwrap();
        assert_eq!(f.child.supply(), &supply);
    }

    #[test]
    fn aggregated_withdrawal_uses_one_contract_call() {
        let k = KeyPair::from_seed(b"solo-claimer");
        let mut dist = PowDistribution::new(0);
        dist.credit(k.public(), Work::from_integer(1)).unwrap();
        let commit = commit_distribution(&dist);
        let mut contract = ContractState::new();
        let mut child = ChildChain::new();
        for (i, period) in [12u64, 13, 14].into_iter().enumerate() {
            contract.submit_linking_tx(Amount::from_integer(1), commit, period, i as u64).unwrap();
            let id = child.register_deposit(&mut contract, i, &dist).unwrap();
            let (work, opening) = dist.opening(&k.public()).unwrap();
            let sig = crypto::sign(&k, &claim_message(child.deposit(id).unwrap(), &k.public(), &work));
            child.claim(id, k.public(), &work, &opening, &sig).unwrap();
        }
        let ticket = child.withdraw_aggregate(k.public(), &mut contract).unwrap();
        assert_eq!(ticket.amount, Amount::from_integer(3));
        // Oldest source period is 12 - 2 = 10.
        assert_eq!(ticket.priority_period, 7);
        assert_eq!(contract.total_withdrawn(), &Amount::from_integer(3));
        assert_eq!(child.exits().len(), 1);
        assert_eq!(child.withdraw_aggregate(k.public(), &mut contract), Err(ChildError::ZeroBalance));
    }

    #[test]
    fn exit_queue_orders_by_priority_then_submission() {
        let mut child = ChildChain::new();
        let mut contract = ContractState::new();
        let keys: Vec<KeyPair> = (0..3u8).map(|i| KeyPair::from_seed(&[i])).collect();
        let periods = [9u64, 5, 5];
        for (i, (k, p)) in keys.iter().zip(periods).enumerate() {
            let mut dist = PowDistribution::new(0);
            dist.credit(k.public(), Work::from_integer(1)).unwrap();
            contract.submit_linking_tx(Amount::from_integer(1), commit_distribution(&dist), p, i as u64).unwrap();
            let id = child.register_deposit(&mut contract, i, &dist).unwrap();
            let (work, opening) = dist.opening(&k.public()).unwrap();
            let sig = crypto::sign(k, &claim_message(child.deposit(id).unwrap(), &k.public(), &work));
            child.claim(id, k.public(), &work, &opening, &sig).unwrap();
        }
        for k in &keys {
            child.withdraw_aggregate(k.public(), &mut contract).unwrap();
        }
        let order: Vec<(i64, u64)> = child.exit_queue().iter().map(|t| (t.priority_period, t.seq)).collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (4, 0)]);
    }
}

//! Executable model of a decentralized mining pool that pays each pool block
//! in proportion to verified work from two periods earlier.
//!
//! The model wires three simulated chains together: a main chain with a
//! pool contract that settles linking transactions lazily, a storage chain
//! carrying share batches and challenge proofs, and a child-chain ledger
//! where block rewards are claimed per miner. Baseline payout schemes
//! (Proportional, PPS, PPLNS) run over the same event streams for
//! comparison.

pub mod adversarial;
pub mod child_chain;
pub mod crypto;
pub mod engine;
pub mod main_chain;
pub mod payment;
pub mod protocol;
pub mod storage;
pub mod units;
pub mod verification;

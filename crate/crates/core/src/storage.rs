//! Timestamped append-only storage chain for batches and share proofs.

use std::collections::HashMap;

use thiserror::Error;

use crate::crypto::{self, Digest};
use crate::protocol::{normalized, Batch, Encoder, ShareProof};

const BLOCK_TAG: &[u8] = b"fiberpool/storage-block/v1";
const CHALLENGE_TAG: &[u8] = b"fiberpool/challenge/v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StorageError {
    #[error("timestamp {got} does not exceed the tip timestamp {tip}")]
    StaleTimestamp { got: f64, tip: f64 },
    #[error("challenge not yet available")]
    ChallengeUnavailable,
    #[error("batch {0:?} is not on the storage chain")]
    UnknownBatch(Digest),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StorageEntry {
    Batch(Batch),
    Proof(ShareProof),
}

impl StorageEntry {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            StorageEntry::Batch(b) => enc.u8(0).bytes(&b.to_bytes()),
            StorageEntry::Proof(p) => enc.u8(1).bytes(&p.to_bytes()),
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageBlock {
    pub height: u64,
    pub timestamp: f64,
    pub payload: Vec<StorageEntry>,
    /// Hash of the serialized block (including the previous beacon).
    pub beacon: Digest,
}

/// First storage height inside a Prepare phase, or `Open` when no storage
/// block has passed the main-chain Prepare start yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepareBoundary {
    At(u64),
    Open,
}

impl PrepareBoundary {
    /// Whether an entry stored at `height` counts for the period being
    /// prepared.
    pub fn admits(&self, height: u64) -> bool {
        match self {
            PrepareBoundary::At(b) => height < *b,
            PrepareBoundary::Open => true,
        }
    }
}

/// Where an entry lives on the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Located<'a, T> {
    pub height: u64,
    pub item: &'a T,
}

#[derive(Debug, Clone, Default)]
pub struct StorageChain {
    blocks: Vec<StorageBlock>,
    batches: HashMap<Digest, (u64, usize)>,
    proofs: HashMap<Digest, Vec<(u64, usize)>>,
    // (period, storage position) of every batch, in chain order.
    batch_order: Vec<(u64, Digest)>,
}

impl StorageChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blocks(&self) -> &[StorageBlock] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_timestamp(&self) -> Option<f64> {
        self.blocks.last().map(|b| b.timestamp)
    }

    pub fn append(&mut self, entries: Vec<StorageEntry>, timestamp: f64) -> Result<&StorageBlock, StorageError> {
        if let Some(tip) = self.tip_timestamp() {
            if timestamp <= tip {
                return Err(StorageError::StaleTimestamp { got: timestamp, tip });
            }
        }
        let height = self.height();
        let prev = self.blocks.last().map(|b| b.beacon).unwrap_or_else(|| Digest::from_raw([0; 32]));
        let mut enc = Encoder::new(BLOCK_TAG);
        enc.u64(height).f64(timestamp).digest(&prev).u32(entries.len() as u32);
        for (pos, entry) in entries.iter().enumerate() {
            entry.encode(&mut enc);
            match entry {
                StorageEntry::Batch(b) => {
                    let id = b.id();
                    self.batches.entry(id).or_insert((height, pos));
                    self.batch_order.push((b.period, id));
                }
                StorageEntry::Proof(p) => self.proofs.entry(p.batch_id).or_default().push((height, pos)),
            }
        }
        let beacon = crypto::hash(&enc.finish());
        self.blocks.push(StorageBlock { height, timestamp, payload: entries, beacon });
        Ok(self.blocks.last().unwrap())
    }

    pub fn batch(&self, id: &Digest) -> Option<Located<'_, Batch>> {
        let (height, pos) = *self.batches.get(id)?;
        match &self.blocks[height as usize].payload[pos] {
            StorageEntry::Batch(b) => Some(Located { height, item: b }),
            StorageEntry::Proof(_) => None,
        }
    }

    /// Ids of every batch claiming `period`, in chain order.
    pub fn batches_for_period(&self, period: u64) -> impl Iterator<Item = Digest> + '_ {
        let mut seen = std::collections::HashSet::new();
        self.batch_order.iter().filter(move |(p, id)| *p == period && seen.insert(*id)).map(|(_, id)| *id)
    }

    /// All proofs referencing `batch_id`, in chain order.
    pub fn proofs_for(&self, batch_id: &Digest) -> Vec<Located<'_, ShareProof>> {
        self.proofs
            .get(batch_id)
            .into_iter()
            .flatten()
            .filter_map(|(height, pos)| match &self.blocks[*height as usize].payload[*pos] {
                StorageEntry::Proof(p) => Some(Located { height: *height, item: p }),
                StorageEntry::Batch(_) => None,
            })
            .collect()
    }

    /// Least height whose timestamp strictly exceeds `main_prepare_start`.
    pub fn prepare_boundary(&self, main_prepare_start: f64) -> PrepareBoundary {
        let idx = self.blocks.partition_point(|b| b.timestamp <= main_prepare_start);
        if idx < self.blocks.len() {
            PrepareBoundary::At(idx as u64)
        } else {
            PrepareBoundary::Open
        }
    }

    /// Challenge `ordinal` for a batch stored at `batch_height`, drawn from
    /// the beacon of the following block.
    pub fn challenge_index(&self, batch: &Batch, batch_height: u64, ordinal: u32) -> Result<u64, StorageError> {
        let next = self.blocks.get(batch_height as usize + 1).ok_or(StorageError::ChallengeUnavailable)?;
        Ok(challenge_from_beacon(&next.beacon, &batch.merkle_root, batch.share_count, ordinal))
    }

    /// [`Self::challenge_index`] for a batch looked up by id.
    pub fn challenge_for(&self, batch_id: &Digest, ordinal: u32) -> Result<u64, StorageError> {
        let located = self.batch(batch_id).ok_or(StorageError::UnknownBatch(*batch_id))?;
        self.challenge_index(located.item, located.height, ordinal)
    }
}

/// `floor(normalized(hash(beacon ‖ root)) * share_count)`; later ordinals
/// also mix in the ordinal.
pub fn challenge_from_beacon(beacon: &Digest, merkle_root: &Digest, share_count: u64, ordinal: u32) -> u64 {
    let seed = if ordinal == 0 {
        crypto::hash_parts(&[beacon.as_bytes(), merkle_root.as_bytes()])
    } else {
        crypto::hash_parts(&[CHALLENGE_TAG, beacon.as_bytes(), merkle_root.as_bytes(), &ordinal.to_be_bytes()])
    };
    let index = (normalized(&seed) * share_count as f64) as u64;
    index.min(share_count.saturating_sub(1))
}

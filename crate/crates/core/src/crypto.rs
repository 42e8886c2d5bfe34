//! Deterministic stand-in cryptography.
//!
//! SHA-256 is the single hash family used for shares, blocks, beacons and
//! commitments. Signatures are a hash-tag scheme: good enough to exercise the
//! protocol's binding rules, not meant to resist forgery by an adversary that
//! has seen a signature.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Prefix byte for Merkle leaf hashes.
pub const LEAF_TAG: u8 = 0x00;
/// Prefix byte for Merkle interior-node hashes.
pub const NODE_TAG: u8 = 0x01;

const PUBLIC_TAG: &[u8] = b"fiberpool/public-key";
const SIGNING_TAG: &[u8] = b"fiberpool/signing-key";
const SIGNATURE_TAG: &[u8] = b"fiberpool/signature";

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight bytes as a big-endian integer.
    pub fn leading_u64(&self) -> u64 {
        let mut head = [0u8; 8];
        head.copy_from_slice(&self.0[..8]);
        u64::from_be_bytes(head)
    }

    /// Builds a digest from raw bytes. Only meant for fixtures that need a
    /// specific bit pattern (e.g. the all-zero digest).
    pub fn from_raw(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub Digest);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn short(&self) -> String {
        self.0.to_hex()[..8].to_string()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.short())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    secret: Digest,
    public: PublicKey,
}

impl KeyPair {
    pub fn from_seed(seed: &[u8]) -> Self {
        let secret = hash(seed);
        let public = PublicKey(hash_parts(&[PUBLIC_TAG, signing_key(&secret).as_bytes()]));
        KeyPair { secret, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

fn signing_key(secret: &Digest) -> Digest {
    hash_parts(&[SIGNING_TAG, secret.as_bytes()])
}

/// Hash-tag signature: carries the secret-derived signing key so that the
/// verifier can check it against the public key, and a tag binding that key
/// to the message.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Signature {
    key: Digest,
    tag: Digest,
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(self.key.as_bytes());
        out[32..].copy_from_slice(self.tag.as_bytes());
        out
    }

    /// Same key, tag over a different message. Used to build forged fixtures.
    pub fn with_tag_of(&self, message: &[u8]) -> Signature {
        Signature { key: self.key, tag: tag_for(&self.key, message) }
    }
}

fn tag_for(key: &Digest, message: &[u8]) -> Digest {
    hash_parts(&[SIGNATURE_TAG, key.as_bytes(), &(message.len() as u64).to_be_bytes(), message])
}

pub fn sign(kp: &KeyPair, message: &[u8]) -> Signature {
    let key = signing_key(&kp.secret);
    Signature { key, tag: tag_for(&key, message) }
}

pub fn verify_signature(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    hash_parts(&[PUBLIC_TAG, sig.key.as_bytes()]) == public.0 && tag_for(&sig.key, message) == sig.tag
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("empty batch")]
    Empty,
    #[error("leaf index {index} out of range for {leaf_count} leaves")]
    IndexOutOfRange { index: usize, leaf_count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: usize,
    pub siblings: Vec<(Digest, Side)>,
}

impl MerkleProof {
    /// Canonical byte encoding: index (u64), sibling count (u32), then one
    /// side byte and 32 digest bytes per sibling.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.siblings.len() * 33);
        out.extend_from_slice(&(self.leaf_index as u64).to_be_bytes());
        out.extend_from_slice(&(self.siblings.len() as u32).to_be_bytes());
        for (digest, side) in &self.siblings {
            out.push(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
            out.extend_from_slice(digest.as_bytes());
        }
        out
    }
}

pub fn leaf_hash(leaf: &Digest) -> Digest {
    hash_parts(&[&[LEAF_TAG], leaf.as_bytes()])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

/// Number of siblings in a proof for a tree with `leaf_count` leaves.
pub fn tree_height(leaf_count: usize) -> usize {
    if leaf_count <= 1 {
        0
    } else {
        (usize::BITS - (leaf_count - 1).leading_zeros()) as usize
    }
}

/// Binary Merkle tree over counter-ordered leaves. Odd levels duplicate
/// their last node.
#[derive(Clone, Debug)]
pub struct MerkleTree {
    leaves: Vec<Digest>,
    // levels[0] holds the leaf hashes, the last level holds the root.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn root(&self) -> Digest {
        self.levels.last().expect("tree has at least one level")[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.leaves
    }
}

pub fn merkle_build(leaves: Vec<Digest>) -> Result<MerkleTree, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::Empty);
    }
    let mut levels = vec![leaves.iter().map(leaf_hash).collect::<Vec<_>>()];
    while levels.last().unwrap().len() > 1 {
        let prev = levels.last().unwrap();
        let next = prev
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => node_hash(l, r),
                [only] => node_hash(only, only),
                _ => unreachable!(),
            })
            .collect();
        levels.push(next);
    }
    Ok(MerkleTree { leaves, levels })
}

pub fn merkle_prove(tree: &MerkleTree, index: usize) -> Result<MerkleProof, MerkleError> {
    if index >= tree.leaf_count() {
        return Err(MerkleError::IndexOutOfRange { index, leaf_count: tree.leaf_count() });
    }
    let mut siblings = Vec::with_capacity(tree.levels.len() - 1);
    let mut pos = index;
    for level in &tree.levels[..tree.levels.len() - 1] {
        let entry = if pos.is_multiple_of(2) { (*level.get(pos + 1).unwrap_or(&level[pos]), Side::Right) } else { (level[pos - 1], Side::Left) };
        siblings.push(entry);
        pos /= 2;
    }
    Ok(MerkleProof { leaf_index: index, siblings })
}

/// Checks that `proof` opens `leaf` at `proof.leaf_index` under `root`.
///
/// The side of every sibling is recomputed from the claimed index, and a
/// padded (duplicated) sibling is only accepted where the padding rule puts
/// one, so a valid path cannot be replayed at a different position.
pub fn merkle_verify(root: &Digest, leaf: &Digest, proof: &MerkleProof, leaf_count: usize) -> bool {
    if proof.leaf_index >= leaf_count || proof.siblings.len() != tree_height(leaf_count) {
        return false;
    }
    let mut acc = leaf_hash(leaf);
    let mut pos = proof.leaf_index;
    let mut width = leaf_count;
    for (sibling, side) in &proof.siblings {
        let expected = if pos.is_multiple_of(2) { Side::Right } else { Side::Left };
        if *side != expected {
            return false;
        }
        let padded = pos.is_multiple_of(2) && pos + 1 == width;
        if padded && *sibling != acc {
            return false;
        }
        acc = match side {
            Side::Right => node_hash(&acc, sibling),
            Side::Left => node_hash(sibling, &acc),
        };
        pos /= 2;
        width = width.div_ceil(2);
    }
    acc == *root
}

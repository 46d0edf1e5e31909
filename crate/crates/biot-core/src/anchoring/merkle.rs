//! Binary Merkle trees over message payloads.
//!
//! Leaves and interior nodes are domain-separated: a leaf digest is
//! `SHA-256(0x00 || payload)` and an interior node is
//! `SHA-256(0x01 || left || right)`, so a payload that happens to look like
//! a pair of digests cannot be replayed as an interior node. A level with an
//! odd node count promotes its last digest unchanged rather than duplicating
//! it, which keeps proofs for the promoted node one step shorter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{sha256, Digest32};

const LEAF_PREFIX: &[u8] = &[0x00];
const NODE_PREFIX: &[u8] = &[0x01];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("cannot build a tree over zero leaves")]
    EmptyWindow,
}

pub fn leaf_digest(payload: &[u8]) -> Digest32 {
    sha256(&[LEAF_PREFIX, payload])
}

pub fn node_digest(left: &Digest32, right: &Digest32) -> Digest32 {
    sha256(&[NODE_PREFIX, left.as_bytes(), right.as_bytes()])
}

/// Which side of the running digest the sibling occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProofStep {
    pub digest: Digest32,
    pub side: Side,
}

/// Self-contained inclusion proof: fold `leaf` through `siblings` and
/// compare the result against the root anchored for `window_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InclusionProof {
    pub window_id: u64,
    pub leaf_index: u64,
    pub leaf: Digest32,
    pub siblings: Vec<ProofStep>,
}

/// Tree built over pre-computed leaf digests. Callers hashing payloads use
/// [`leaf_digest`]; digests that are already commitments (window roots being
/// aggregated) are used as leaves directly.
#[derive(Debug, Clone)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest32>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Digest32>) -> Result<Self, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyWindow);
        }
        let mut levels = vec![leaves];
        while levels.last().unwrap().len() > 1 {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity(prev.len().div_ceil(2));
            for pair in prev.chunks(2) {
                next.push(match pair {
                    [left, right] => node_digest(left, right),
                    [odd] => *odd,
                    _ => unreachable!(),
                });
            }
            levels.push(next);
        }
        Ok(MerkleTree { levels })
    }

    pub fn root(&self) -> Digest32 {
        self.levels.last().unwrap()[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    /// Sibling path for one leaf, bottom-up. `None` when out of range.
    pub fn prove(&self, leaf_index: usize) -> Option<Vec<ProofStep>> {
        if leaf_index >= self.leaf_count() {
            return None;
        }
        let mut steps = Vec::new();
        let mut index = leaf_index;
        for level in &self.levels[..self.levels.len() - 1] {
            let sibling = index ^ 1;
            if sibling < level.len() {
                steps.push(ProofStep {
                    digest: level[sibling],
                    side: if sibling < index {
                        Side::Left
                    } else {
                        Side::Right
                    },
                });
            }
            // An odd node promoted unchanged keeps its pair index upstairs.
            index /= 2;
        }
        Some(steps)
    }
}

/// Folds a leaf digest through a sibling path and compares against the root.
pub fn verify_digest_inclusion(leaf: &Digest32, siblings: &[ProofStep], root: &Digest32) -> bool {
    let mut running = *leaf;
    for step in siblings {
        running = match step.side {
            Side::Left => node_digest(&step.digest, &running),
            Side::Right => node_digest(&running, &step.digest),
        };
    }
    running == *root
}

/// Verifies that `payload` is committed to by `root` via `proof`.
pub fn verify_inclusion(payload: &[u8], proof: &InclusionProof, root: &Digest32) -> bool {
    let leaf = leaf_digest(payload);
    leaf == proof.leaf && verify_digest_inclusion(&leaf, &proof.siblings, root)
}

/// Commits to a batch of window roots. The roots are the leaves of the
/// aggregate tree (no leaf prefix), so a single root aggregates to itself
/// and membership of a root is checkable with [`verify_digest_inclusion`].
pub fn aggregate_roots(roots: &[Digest32]) -> Result<Digest32, MerkleError> {
    Ok(MerkleTree::build(roots.to_vec())?.root())
}

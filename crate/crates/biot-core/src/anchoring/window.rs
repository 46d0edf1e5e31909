//! Batching windows for tree-based anchoring.
//!
//! A window opens at its first appended message and closes when its duration
//! elapses (checked before the next append) or when it reaches a configured
//! leaf cap. Closing a window fixes its Merkle root; window ids start at 1
//! and increase in closing order, matching the order their roots reach the
//! chain.

use serde::{Deserialize, Serialize};

use crate::anchoring::merkle::{leaf_digest, MerkleTree, ProofStep};
use crate::anchoring::store::LeafRef;
use crate::types::{DeviceId, Digest32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct WindowPolicy {
    /// Virtual seconds a window stays open.
    pub duration: u64,
    /// Optional leaf cap that closes a window early.
    pub max_leaves: Option<usize>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            duration: 86_400,
            max_leaves: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeafEntry {
    pub device_id: DeviceId,
    pub sequence: u64,
    pub digest: Digest32,
}

/// A closed window: its leaves in append order and the root that commits to
/// them. Payloads live in the off-chain store; the window keeps digests only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClosedWindow {
    pub window_id: u64,
    pub root: Digest32,
    pub opened_at: u64,
    pub closed_at: u64,
    pub leaves: Vec<LeafEntry>,
}

impl ClosedWindow {
    pub fn leaf_refs(&self) -> Vec<LeafRef> {
        self.leaves
            .iter()
            .map(|l| LeafRef {
                device_id: l.device_id,
                sequence: l.sequence,
            })
            .collect()
    }

    fn tree(&self) -> MerkleTree {
        MerkleTree::build(self.leaves.iter().map(|l| l.digest).collect())
            .expect("closed window has at least one leaf")
    }

    /// Sibling path for the `leaf_index`-th message of this window.
    pub fn prove(&self, leaf_index: usize) -> Option<Vec<ProofStep>> {
        self.tree().prove(leaf_index)
    }
}

struct OpenWindow {
    window_id: u64,
    opened_at: u64,
    leaves: Vec<LeafEntry>,
}

pub struct WindowManager {
    policy: WindowPolicy,
    next_window_id: u64,
    current: Option<OpenWindow>,
}

impl WindowManager {
    pub fn new(policy: WindowPolicy) -> Self {
        WindowManager {
            policy,
            next_window_id: 1,
            current: None,
        }
    }

    pub fn policy(&self) -> WindowPolicy {
        self.policy
    }

    pub fn current_window_id(&self) -> Option<u64> {
        self.current.as_ref().map(|w| w.window_id)
    }

    pub fn current_len(&self) -> usize {
        self.current.as_ref().map_or(0, |w| w.leaves.len())
    }

    /// Appends one message digest. Returns the windows this append closed
    /// (an expired predecessor, the appended-to window when it hits the leaf
    /// cap, or both never: an expired window closes before the append opens
    /// a fresh one) and the id of the window the message landed in.
    pub fn append(
        &mut self,
        device_id: DeviceId,
        sequence: u64,
        payload: &[u8],
        now: u64,
    ) -> (Vec<ClosedWindow>, u64) {
        let mut closed = Vec::new();
        if let Some(open) = &self.current {
            if now >= open.opened_at + self.policy.duration {
                closed.push(self.close_current(now).unwrap());
            }
        }
        if self.current.is_none() {
            let window_id = self.next_window_id;
            self.next_window_id += 1;
            self.current = Some(OpenWindow {
                window_id,
                opened_at: now,
                leaves: Vec::new(),
            });
        }
        let open = self.current.as_mut().unwrap();
        open.leaves.push(LeafEntry {
            device_id,
            sequence,
            digest: leaf_digest(payload),
        });
        let landed_in = open.window_id;
        if self
            .policy
            .max_leaves
            .is_some_and(|cap| open.leaves.len() >= cap)
        {
            closed.push(self.close_current(now).unwrap());
        }
        (closed, landed_in)
    }

    /// Closes the open window, if any. Used at end of run so no message is
    /// left without an anchored root.
    pub fn close_if_open(&mut self, now: u64) -> Option<ClosedWindow> {
        self.close_current(now)
    }

    fn close_current(&mut self, now: u64) -> Option<ClosedWindow> {
        let open = self.current.take()?;
        let tree = MerkleTree::build(open.leaves.iter().map(|l| l.digest).collect())
            .expect("open window is never empty");
        Some(ClosedWindow {
            window_id: open.window_id,
            root: tree.root(),
            opened_at: open.opened_at,
            closed_at: now,
            leaves: open.leaves,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchoring::merkle::{node_digest, verify_digest_inclusion};

    fn device() -> DeviceId {
        DeviceId::derive("container-0")
    }

    #[test]
    fn window_closes_after_duration() {
        let mut wm = WindowManager::new(WindowPolicy {
            duration: 100,
            max_leaves: None,
        });
        let (closed, id) = wm.append(device(), 1, b"a", 10);
        assert!(closed.is_empty());
        assert_eq!(id, 1);
        let (closed, id) = wm.append(device(), 2, b"b", 50);
        assert!(closed.is_empty());
        assert_eq!(id, 1);
        // 10 + 100 elapsed: the old window closes before this append.
        let (closed, id) = wm.append(device(), 3, b"c", 110);
        assert_eq!(closed.len(), 1);
        assert_eq!(closed[0].window_id, 1);
        assert_eq!(closed[0].leaves.len(), 2);
        assert_eq!(closed[0].opened_at, 10);
        assert_eq!(closed[0].closed_at, 110);
        assert_eq!(id, 2);
    }

    #[test]
    fn leaf_cap_closes_immediately() {
        let mut wm = WindowManager::new(WindowPolicy {
            duration: 1_000,
            max_leaves: Some(2),
        });
        let (closed, _) = wm.append(device(), 1, b"a", 1);
        assert!(closed.is_empty());
        let (closed, id) = wm.append(device(), 2, b"b", 2);
        assert_eq!(closed.len(), 1);
        assert_eq!(id, 1);
        assert_eq!(closed[0].leaves.len(), 2);
        assert_eq!(wm.current_len(), 0);
        let (_, id) = wm.append(device(), 3, b"c", 3);
        assert_eq!(id, 2);
    }

    #[test]
    fn root_matches_direct_tree_construction() {
        let mut wm = WindowManager::new(WindowPolicy::default());
        wm.append(device(), 1, b"a", 60);
        wm.append(device(), 2, b"b", 120);
        let closed = wm.close_if_open(86_400).unwrap();
        assert_eq!(
            closed.root,
            node_digest(&leaf_digest(b"a"), &leaf_digest(b"b"))
        );
    }

    #[test]
    fn closed_window_proofs_verify() {
        let mut wm = WindowManager::new(WindowPolicy::default());
        let payloads: Vec<Vec<u8>> = (0..9u8).map(|i| vec![i; 8]).collect();
        for (i, p) in payloads.iter().enumerate() {
            wm.append(device(), i as u64 + 1, p, 60 * (i as u64 + 1));
        }
        let closed = wm.close_if_open(86_400).unwrap();
        for (i, p) in payloads.iter().enumerate() {
            let path = closed.prove(i).unwrap();
            assert!(verify_digest_inclusion(
                &leaf_digest(p),
                &path,
                &closed.root
            ));
        }
        assert!(closed.prove(payloads.len()).is_none());
    }

    #[test]
    fn ids_increase_in_closing_order() {
        let mut wm = WindowManager::new(WindowPolicy {
            duration: 10,
            max_leaves: None,
        });
        let mut ids = Vec::new();
        for k in 0..4u64 {
            let (closed, _) = wm.append(device(), k + 1, b"x", k * 10);
            ids.extend(closed.iter().map(|w| w.window_id));
        }
        if let Some(last) = wm.close_if_open(100) {
            ids.push(last.window_id);
        }
        assert_eq!(ids, vec![1, 2, 3, 4]);
    }

    #[test]
    fn close_without_appends_is_none() {
        let mut wm = WindowManager::new(WindowPolicy::default());
        assert!(wm.close_if_open(100).is_none());
    }
}

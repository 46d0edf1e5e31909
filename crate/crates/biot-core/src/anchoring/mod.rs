//! Data-anchoring schemes: how device messages reach the chain.
//!
//! Three schemes trade storage cost against verification directness:
//!
//! - `fullOnChain` puts every payload in a transaction;
//! - `dataHashing` stores the payload off-chain and anchors its SHA-256;
//! - `merkleTree` batches payload digests into windows and anchors one root
//!   per window, with per-message inclusion proofs.
//!
//! The [`Anchorer`] runs gateway-side: given one device message it writes
//! whatever the scheme keeps off-chain, then submits whatever the scheme
//! puts on-chain, in that order, so a store outage never produces a dangling
//! on-chain reference.

pub mod merkle;
pub mod store;
pub mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use merkle::{
    aggregate_roots, leaf_digest, node_digest, verify_digest_inclusion, verify_inclusion,
    InclusionProof, MerkleError, MerkleTree, ProofStep, Side,
};
pub use store::{LeafRef, OffchainStore, StoreError, StoreRecord};
pub use window::{ClosedWindow, LeafEntry, WindowManager, WindowPolicy};

use crate::contract::ContractCall;
use crate::ledger::{Ledger, LedgerError, ReceiptHandle};
use crate::types::{sha256, Address, DeviceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StorageScheme {
    FullOnChain,
    DataHashing,
    MerkleTree,
}

impl StorageScheme {
    pub const ALL: [StorageScheme; 3] = [
        StorageScheme::FullOnChain,
        StorageScheme::DataHashing,
        StorageScheme::MerkleTree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StorageScheme::FullOnChain => "fullOnChain",
            StorageScheme::DataHashing => "dataHashing",
            StorageScheme::MerkleTree => "merkleTree",
        }
    }
}

impl std::fmt::Display for StorageScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StorageScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fullOnChain" => Ok(StorageScheme::FullOnChain),
            "dataHashing" => Ok(StorageScheme::DataHashing),
            "merkleTree" => Ok(StorageScheme::MerkleTree),
            other => Err(format!(
                "unknown storage scheme {other:?}; expected fullOnChain, dataHashing, or merkleTree"
            )),
        }
    }
}

/// What a submitted anchor transaction carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnchorTxKind {
    /// Full payload on-chain.
    Data,
    /// SHA-256 of an off-chain payload.
    Digest,
    /// Merkle root of a closed window.
    WindowRoot,
}

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// One chain submission made while anchoring, with its receipt handle.
pub struct AnchorTx {
    pub kind: AnchorTxKind,
    pub device_id: DeviceId,
    pub submitted_at: u64,
    pub handle: ReceiptHandle,
}

pub struct Anchorer {
    scheme: StorageScheme,
    sender: Address,
    store: OffchainStore,
    windows: WindowManager,
    closed: Vec<ClosedWindow>,
    leaves_appended: u64,
}

impl Anchorer {
    pub fn new(
        scheme: StorageScheme,
        sender: Address,
        store: OffchainStore,
        policy: WindowPolicy,
    ) -> Self {
        Anchorer {
            scheme,
            sender,
            store,
            windows: WindowManager::new(policy),
            closed: Vec::new(),
            leaves_appended: 0,
        }
    }

    pub fn scheme(&self) -> StorageScheme {
        self.scheme
    }

    pub fn store(&self) -> &OffchainStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut OffchainStore {
        &mut self.store
    }

    pub fn closed_windows(&self) -> &[ClosedWindow] {
        &self.closed
    }

    /// Messages batched into windows so far (merkleTree scheme only).
    pub fn leaves_appended(&self) -> u64 {
        self.leaves_appended
    }

    /// Anchors one device message per the active scheme. Returns every chain
    /// transaction this submission produced, in submission order.
    pub fn anchor(
        &mut self,
        ledger: &Ledger,
        device_id: DeviceId,
        sequence: u64,
        payload: &[u8],
        now: u64,
    ) -> Result<Vec<AnchorTx>, AnchorError> {
        match self.scheme {
            StorageScheme::FullOnChain => {
                let handle = self.submit_response(ledger, device_id, payload.to_vec(), now)?;
                Ok(vec![AnchorTx {
                    kind: AnchorTxKind::Data,
                    device_id,
                    submitted_at: now,
                    handle,
                }])
            }
            StorageScheme::DataHashing => {
                let digest = sha256(&[payload]);
                self.store
                    .append_data(device_id, sequence, payload.to_vec(), digest)?;
                let handle =
                    self.submit_response(ledger, device_id, digest.as_bytes().to_vec(), now)?;
                Ok(vec![AnchorTx {
                    kind: AnchorTxKind::Digest,
                    device_id,
                    submitted_at: now,
                    handle,
                }])
            }
            StorageScheme::MerkleTree => {
                // Store records keep the tree's leaf digest so a stored
                // payload can be checked against a window without rehashing
                // conventions diverging.
                let digest = leaf_digest(payload);
                self.store
                    .append_data(device_id, sequence, payload.to_vec(), digest)?;
                let (closed, _) = self.windows.append(device_id, sequence, payload, now);
                self.leaves_appended += 1;
                let mut txs = Vec::new();
                for window in closed {
                    txs.push(self.anchor_window(ledger, window, now)?);
                }
                Ok(txs)
            }
        }
    }

    /// Closes and anchors the open window, if any. Call at end of run.
    pub fn flush(&mut self, ledger: &Ledger, now: u64) -> Result<Option<AnchorTx>, AnchorError> {
        match self.windows.close_if_open(now) {
            Some(window) => Ok(Some(self.anchor_window(ledger, window, now)?)),
            None => Ok(None),
        }
    }

    fn anchor_window(
        &mut self,
        ledger: &Ledger,
        window: ClosedWindow,
        now: u64,
    ) -> Result<AnchorTx, AnchorError> {
        self.store
            .append_window(window.window_id, window.root, window.leaf_refs())?;
        // The root rides a device-data transaction; attribute it to the
        // device whose message closed the window.
        let device_id = window.leaves.last().expect("nonempty window").device_id;
        let handle =
            self.submit_response(ledger, device_id, window.root.as_bytes().to_vec(), now)?;
        self.closed.push(window);
        Ok(AnchorTx {
            kind: AnchorTxKind::WindowRoot,
            device_id,
            submitted_at: now,
            handle,
        })
    }

    fn submit_response(
        &self,
        ledger: &Ledger,
        device: DeviceId,
        message: Vec<u8>,
        now: u64,
    ) -> Result<ReceiptHandle, LedgerError> {
        ledger.submit(
            self.sender,
            &ContractCall::SendResponseFromDevice { device, message },
            now,
        )
    }

    /// Builds the inclusion proof for one leaf of a closed window.
    pub fn prove(&self, window_id: u64, leaf_index: usize) -> Option<InclusionProof> {
        let window = self.closed.iter().find(|w| w.window_id == window_id)?;
        let siblings = window.prove(leaf_index)?;
        Some(InclusionProof {
            window_id,
            leaf_index: leaf_index as u64,
            leaf: window.leaves[leaf_index].digest,
            siblings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::GasSchedule;
    use crate::ledger::{LatencyModel, TxStatus};

    fn setup(
        scheme: StorageScheme,
        policy: WindowPolicy,
    ) -> (Ledger, Anchorer, DeviceId, tempfile::TempDir) {
        let ledger = Ledger::new(GasSchedule::default(), LatencyModel::default(), scheme);
        let admin = Address::derive("admin");
        let gw = Address::derive("gateway-0");
        let device = DeviceId::derive("container-0");
        ledger.create_account(admin);
        ledger.create_account(gw);
        ledger.submit(admin, &ContractCall::Deploy, 0).unwrap();
        ledger
            .submit(admin, &ContractCall::RegisterGateway { gateway: gw }, 0)
            .unwrap();
        ledger
            .submit(
                admin,
                &ContractCall::RegisterDevice {
                    device,
                    gateway: gw,
                },
                0,
            )
            .unwrap();
        ledger.produce_block(15).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = OffchainStore::open(&dir.path().join("offchain.jsonl")).unwrap();
        let anchorer = Anchorer::new(scheme, gw, store, policy);
        (ledger, anchorer, device, dir)
    }

    #[test]
    fn full_on_chain_carries_the_payload() {
        let (ledger, mut anchorer, device, _dir) =
            setup(StorageScheme::FullOnChain, WindowPolicy::default());
        let payload = [7u8; 8];
        let txs = anchorer.anchor(&ledger, device, 1, &payload, 20).unwrap();
        assert_eq!(txs.len(), 1);
        assert_eq!(txs[0].kind, AnchorTxKind::Data);
        ledger.produce_block(30).unwrap();
        let receipt = txs[0].handle.get().unwrap();
        assert_eq!(receipt.status, TxStatus::Included);
        // Sub-16-byte payloads price at the smallest anchor.
        assert_eq!(receipt.gas_used, 52_132);
        assert!(anchorer.store().is_empty());
        let stored = ledger
            .with_state(|s| s.inbox(device).last().unwrap().payload.clone())
            .unwrap();
        assert_eq!(stored, payload);
    }

    #[test]
    fn data_hashing_stores_payload_and_anchors_its_hash() {
        let (ledger, mut anchorer, device, _dir) =
            setup(StorageScheme::DataHashing, WindowPolicy::default());
        let payload = b"temperature reading".to_vec();
        let txs = anchorer.anchor(&ledger, device, 1, &payload, 20).unwrap();
        assert_eq!(txs[0].kind, AnchorTxKind::Digest);
        ledger.produce_block(30).unwrap();
        assert_eq!(txs[0].handle.get().unwrap().gas_used, 72_433);

        let expected = sha256(&[payload.as_slice()]);
        match anchorer.store().get_data(device, 1).unwrap().unwrap() {
            StoreRecord::Data {
                digest,
                payload: stored,
                ..
            } => {
                assert_eq!(*digest, expected);
                assert_eq!(*stored, payload);
            }
            _ => panic!("expected data record"),
        }
        let on_chain = ledger
            .with_state(|s| s.inbox(device).last().unwrap().payload.clone())
            .unwrap();
        assert_eq!(on_chain, expected.as_bytes());
    }

    #[test]
    fn merkle_batches_and_anchors_roots_not_messages() {
        let (ledger, mut anchorer, device, _dir) = setup(
            StorageScheme::MerkleTree,
            WindowPolicy {
                duration: 86_400,
                max_leaves: Some(4),
            },
        );
        let mut txs = Vec::new();
        for seq in 1..=10u64 {
            let payload = [seq as u8; 8];
            txs.extend(
                anchorer
                    .anchor(&ledger, device, seq, &payload, 20 + seq)
                    .unwrap(),
            );
        }
        // 10 messages, cap 4: windows of 4 and 4 closed, 2 leaves open.
        assert_eq!(txs.len(), 2);
        assert!(txs.iter().all(|t| t.kind == AnchorTxKind::WindowRoot));
        let flush_tx = anchorer.flush(&ledger, 60).unwrap().unwrap();
        assert_eq!(flush_tx.kind, AnchorTxKind::WindowRoot);
        assert!(anchorer.flush(&ledger, 61).unwrap().is_none());
        assert_eq!(anchorer.leaves_appended(), 10);
        assert_eq!(anchorer.closed_windows().len(), 3);

        // Every proof verifies against its window root.
        for (w, window) in anchorer.closed_windows().iter().enumerate() {
            for (i, leaf) in window.leaves.iter().enumerate() {
                let proof = anchorer.prove(window.window_id, i).unwrap();
                assert_eq!(proof.leaf, leaf.digest);
                assert!(
                    verify_digest_inclusion(&proof.leaf, &proof.siblings, &window.root),
                    "window {w} leaf {i}"
                );
            }
        }

        // On-chain inbox holds exactly the three roots. The flush root went
        // in at 60, so it lands in the block at 75.
        for now in [30, 45, 60, 75] {
            ledger.produce_block(now).unwrap();
        }
        let inbox = ledger.with_state(|s| s.inbox(device).to_vec()).unwrap();
        assert_eq!(inbox.len(), 3);
        let roots: Vec<&[u8]> = inbox.iter().map(|m| m.payload.as_slice()).collect();
        for window in anchorer.closed_windows() {
            assert!(roots.contains(&window.root.as_bytes().as_slice()));
        }
    }

    #[test]
    fn store_outage_fails_before_any_chain_submission() {
        let (ledger, mut anchorer, device, _dir) =
            setup(StorageScheme::DataHashing, WindowPolicy::default());
        anchorer.store_mut().set_available(false);
        let err = anchorer.anchor(&ledger, device, 1, b"reading", 20);
        assert!(matches!(
            err,
            Err(AnchorError::Store(StoreError::Unavailable))
        ));
        // Nothing pending beyond the setup transactions already mined.
        assert_eq!(ledger.pending_count(), 0);
        anchorer.store_mut().set_available(true);
        anchorer.anchor(&ledger, device, 1, b"reading", 25).unwrap();
        assert_eq!(ledger.pending_count(), 1);
    }

    #[test]
    fn scheme_tokens_round_trip() {
        for scheme in StorageScheme::ALL {
            let token = serde_json::to_string(&scheme).unwrap();
            assert_eq!(token, format!("\"{scheme}\""));
            let back: StorageScheme = serde_json::from_str(&token).unwrap();
            assert_eq!(back, scheme);
            assert_eq!(scheme.as_str().parse::<StorageScheme>().unwrap(), scheme);
        }
        assert!("onChain".parse::<StorageScheme>().is_err());
    }
}

//! Simulated gas-metered ledger with fixed-interval block production.
//!
//! The ledger is a deterministic stand-in for a public test network: a single
//! logical writer produces one block every `block_interval` virtual seconds,
//! draining the pending queue in submission order. A transaction is included
//! in the first block whose timestamp is strictly greater than its submission
//! time, so the chain wait for a boundary-aligned submission is exactly one
//! block interval. Gas is metered from the [`GasSchedule`] rather than by
//! opcode emulation; reverted transactions still consume gas and appear in
//! their block, but leave contract state untouched.
//!
//! All methods take `&self` behind an internal mutex: submissions and
//! read-only calls may arrive from concurrent actors, while block production
//! remains the only state-advancing operation.

pub mod persist;

use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchoring::StorageScheme;
use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::contract::{ContractCall, ContractError, ContractState};
use crate::economics::{message_gas, GasSchedule, INTRINSIC_GAS};
use crate::types::{base64_bytes, sha256, Address, DeviceId, Digest32};

/// Block cadence and confirmation depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyModel {
    /// Virtual seconds between consecutive blocks.
    pub block_interval: u64,
    /// Blocks (inclusive of the including one) before a receipt resolves.
    pub confirmations: u32,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            block_interval: 15,
            confirmations: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TxStatus {
    Pending,
    Included,
    Reverted,
}

/// A submitted contract invocation as recorded on-chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub sender: Address,
    pub function: String,
    #[serde(with = "base64_bytes")]
    pub args: Vec<u8>,
    pub submitted_at: u64,
    pub gas_used: u64,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub index: u64,
    pub timestamp: u64,
    pub parent_digest: Digest32,
    pub transactions: Vec<Transaction>,
    pub digest: Digest32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "messageSentToDevice")]
    MessageSentToDevice,
    #[serde(rename = "responseSentFromDevice")]
    ResponseSentFromDevice,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::MessageSentToDevice => "messageSentToDevice",
            EventKind::ResponseSentFromDevice => "responseSentFromDevice",
        }
    }
}

/// Event as produced by contract execution, before block placement is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDraft {
    pub kind: EventKind,
    pub device_id: DeviceId,
    pub payload: Vec<u8>,
    pub sequence: u64,
}

/// Contract event stamped with the block that carried its transaction.
/// Subscribers observe it at `block_timestamp`, not at submission time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Event {
    pub kind: EventKind,
    pub device_id: DeviceId,
    #[serde(with = "base64_bytes")]
    pub payload: Vec<u8>,
    pub sequence: u64,
    pub block_index: u64,
    pub block_timestamp: u64,
}

/// Subscription filter: an event kind, optionally narrowed to one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFilter {
    pub kind: EventKind,
    pub device: Option<DeviceId>,
}

impl EventFilter {
    pub fn new(kind: EventKind) -> Self {
        EventFilter { kind, device: None }
    }

    pub fn for_device(kind: EventKind, device: DeviceId) -> Self {
        EventFilter {
            kind,
            device: Some(device),
        }
    }

    fn matches(&self, event: &Event) -> bool {
        self.kind == event.kind && self.device.map_or(true, |d| d == event.device_id)
    }
}

/// Receiving end of an event subscription. Matching events accumulate in
/// block order from the moment of subscription.
pub struct EventSubscription {
    queue: Arc<Mutex<VecDeque<Event>>>,
}

impl EventSubscription {
    pub fn drain(&self) -> Vec<Event> {
        self.queue.lock().unwrap().drain(..).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.lock().unwrap().is_empty()
    }
}

/// Final outcome of a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxReceipt {
    pub status: TxStatus,
    pub gas_used: u64,
    pub block_index: u64,
    /// Timestamp of the including block.
    pub block_timestamp: u64,
    /// Timestamp at which the configured confirmation depth was reached.
    pub resolved_at: u64,
    pub error: Option<String>,
}

/// Handle returned by [`Ledger::submit`]; resolves once the transaction has
/// been included (plus any additional confirmations).
#[derive(Clone)]
pub struct ReceiptHandle {
    cell: Arc<OnceLock<TxReceipt>>,
}

impl ReceiptHandle {
    pub fn get(&self) -> Option<&TxReceipt> {
        self.cell.get()
    }

    pub fn expect_resolved(&self) -> &TxReceipt {
        self.get().expect("transaction not yet resolved")
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("sender account {0} was never created")]
    UnknownSender(Address),
    #[error("block time {now} does not advance past head timestamp {head}")]
    ClockRegression { now: u64, head: u64 },
    #[error("block time {now} is off-cadence; expected {expected}")]
    MisalignedTimestamp { now: u64, expected: u64 },
    #[error("{0} mutates state and cannot be submitted read-only")]
    NotReadOnly(&'static str),
    #[error("{0} is read-only; use call instead of a transaction")]
    ReadOnlySubmission(&'static str),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

struct PendingTx {
    sender: Address,
    function: String,
    args: Vec<u8>,
    submitted_at: u64,
    receipt: Arc<OnceLock<TxReceipt>>,
}

struct AwaitingConfirmation {
    included_at_index: u64,
    receipt: Arc<OnceLock<TxReceipt>>,
    draft: TxReceipt,
}

struct SubscriptionEntry {
    filter: EventFilter,
    queue: Arc<Mutex<VecDeque<Event>>>,
}

struct LedgerInner {
    schedule: GasSchedule,
    latency: LatencyModel,
    /// Storage scheme active for this chain; decides whether device-data
    /// transactions are metered on the payload curve or at the digest rate.
    metering_scheme: StorageScheme,
    accounts: BTreeSet<Address>,
    blocks: Vec<Block>,
    pending: VecDeque<PendingTx>,
    contract: Option<ContractState>,
    events: Vec<Event>,
    subscriptions: Vec<SubscriptionEntry>,
    awaiting: Vec<AwaitingConfirmation>,
}

pub struct Ledger {
    inner: Mutex<LedgerInner>,
}

impl Ledger {
    pub fn new(
        schedule: GasSchedule,
        latency: LatencyModel,
        metering_scheme: StorageScheme,
    ) -> Self {
        let genesis = make_block(0, 0, Digest32::zero(), Vec::new());
        Ledger {
            inner: Mutex::new(LedgerInner {
                schedule,
                latency,
                metering_scheme,
                accounts: BTreeSet::new(),
                blocks: vec![genesis],
                pending: VecDeque::new(),
                contract: None,
                events: Vec::new(),
                subscriptions: Vec::new(),
                awaiting: Vec::new(),
            }),
        }
    }

    pub fn create_account(&self, address: Address) {
        self.inner.lock().unwrap().accounts.insert(address);
    }

    pub fn has_account(&self, address: Address) -> bool {
        self.inner.lock().unwrap().accounts.contains(&address)
    }

    pub fn latency_model(&self) -> LatencyModel {
        self.inner.lock().unwrap().latency
    }

    /// Queues a typed call for inclusion. Read-only functions are rejected;
    /// they are served for free via [`Ledger::call`].
    pub fn submit(
        &self,
        sender: Address,
        call: &ContractCall,
        now: u64,
    ) -> Result<ReceiptHandle, LedgerError> {
        if call.is_read_only() {
            return Err(LedgerError::ReadOnlySubmission(call.function()));
        }
        self.submit_raw(sender, call.function().to_string(), call.encode_args(), now)
    }

    /// Queues a raw invocation without decoding it first. Undecodable calls
    /// revert at execution with the intrinsic gas charge.
    pub fn submit_raw(
        &self,
        sender: Address,
        function: String,
        args: Vec<u8>,
        now: u64,
    ) -> Result<ReceiptHandle, LedgerError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.accounts.contains(&sender) {
            return Err(LedgerError::UnknownSender(sender));
        }
        let cell = Arc::new(OnceLock::new());
        inner.pending.push_back(PendingTx {
            sender,
            function,
            args,
            submitted_at: now,
            receipt: cell.clone(),
        });
        Ok(ReceiptHandle { cell })
    }

    /// Produces the block at virtual time `now`, executing every pending
    /// transaction submitted strictly before `now` in submission order.
    pub fn produce_block(&self, now: u64) -> Result<Block, LedgerError> {
        let mut inner = self.inner.lock().unwrap();
        let head = inner.blocks.last().unwrap();
        let (head_index, head_ts) = (head.index, head.timestamp);
        if now <= head_ts {
            return Err(LedgerError::ClockRegression { now, head: head_ts });
        }
        let expected = head_ts + inner.latency.block_interval;
        if now != expected {
            return Err(LedgerError::MisalignedTimestamp { now, expected });
        }

        let index = head_index + 1;
        let mut transactions = Vec::new();
        let mut block_events = Vec::new();
        while inner
            .pending
            .front()
            .is_some_and(|tx| tx.submitted_at < now)
        {
            let ptx = inner.pending.pop_front().unwrap();
            let decoded = ContractCall::decode(&ptx.function, &ptx.args);
            let gas_used = meter_gas(&inner.schedule, inner.metering_scheme, &decoded);
            let (status, drafts, error) = apply(&mut inner.contract, ptx.sender, decoded);
            for draft in drafts {
                block_events.push(Event {
                    kind: draft.kind,
                    device_id: draft.device_id,
                    payload: draft.payload,
                    sequence: draft.sequence,
                    block_index: index,
                    block_timestamp: now,
                });
            }
            transactions.push(Transaction {
                sender: ptx.sender,
                function: ptx.function,
                args: ptx.args,
                submitted_at: ptx.submitted_at,
                gas_used,
                status,
            });
            inner.awaiting.push(AwaitingConfirmation {
                included_at_index: index,
                receipt: ptx.receipt,
                draft: TxReceipt {
                    status,
                    gas_used,
                    block_index: index,
                    block_timestamp: now,
                    resolved_at: now,
                    error,
                },
            });
        }

        let parent_digest = inner.blocks.last().unwrap().digest;
        let block = make_block(index, now, parent_digest, transactions);
        inner.blocks.push(block.clone());

        // Deliver events in block order to matching subscriptions.
        for event in &block_events {
            for sub in &inner.subscriptions {
                if sub.filter.matches(event) {
                    sub.queue.lock().unwrap().push_back(event.clone());
                }
            }
        }
        inner.events.extend(block_events);

        // Resolve receipts that have reached the confirmation depth.
        let confirmations = inner.latency.confirmations.max(1) as u64;
        inner.awaiting.retain(|entry| {
            if index >= entry.included_at_index + confirmations - 1 {
                let mut receipt = entry.draft.clone();
                receipt.resolved_at = now;
                let _ = entry.receipt.set(receipt);
                false
            } else {
                true
            }
        });

        Ok(block)
    }

    /// Serves a read-only function against current state: no gas, no block,
    /// no virtual-time advance.
    pub fn call(&self, function: &str, args: &[u8]) -> Result<Vec<u8>, LedgerError> {
        let call = ContractCall::decode(function, args)?;
        self.call_typed(&call)
    }

    pub fn call_typed(&self, call: &ContractCall) -> Result<Vec<u8>, LedgerError> {
        if !call.is_read_only() {
            return Err(LedgerError::NotReadOnly(call.function()));
        }
        let inner = self.inner.lock().unwrap();
        let state = inner.contract.as_ref().ok_or(ContractError::NotDeployed)?;
        Ok(state.query(call)?)
    }

    pub fn subscribe(&self, filter: EventFilter) -> EventSubscription {
        let queue = Arc::new(Mutex::new(VecDeque::new()));
        self.inner
            .lock()
            .unwrap()
            .subscriptions
            .push(SubscriptionEntry {
                filter,
                queue: queue.clone(),
            });
        EventSubscription { queue }
    }

    pub fn pending_count(&self) -> usize {
        self.inner.lock().unwrap().pending.len()
    }

    pub fn unresolved_count(&self) -> usize {
        let inner = self.inner.lock().unwrap();
        inner.pending.len() + inner.awaiting.len()
    }

    pub fn head(&self) -> (u64, u64, Digest32) {
        let inner = self.inner.lock().unwrap();
        let head = inner.blocks.last().unwrap();
        (head.index, head.timestamp, head.digest)
    }

    pub fn blocks_snapshot(&self) -> Vec<Block> {
        self.inner.lock().unwrap().blocks.clone()
    }

    pub fn events_snapshot(&self) -> Vec<Event> {
        self.inner.lock().unwrap().events.clone()
    }

    /// Digest of the contract state, or `None` before deployment.
    pub fn state_digest(&self) -> Option<Digest32> {
        self.inner
            .lock()
            .unwrap()
            .contract
            .as_ref()
            .map(|c| c.digest())
    }

    /// Runs `f` against the deployed contract state.
    pub fn with_state<T>(&self, f: impl FnOnce(&ContractState) -> T) -> Result<T, LedgerError> {
        let inner = self.inner.lock().unwrap();
        let state = inner.contract.as_ref().ok_or(ContractError::NotDeployed)?;
        Ok(f(state))
    }
}

/// Executes a decoded (or undecodable) call against optional contract state.
fn apply(
    contract: &mut Option<ContractState>,
    sender: Address,
    decoded: Result<ContractCall, ContractError>,
) -> (TxStatus, Vec<EventDraft>, Option<String>) {
    let call = match decoded {
        Ok(call) => call,
        Err(e) => return (TxStatus::Reverted, Vec::new(), Some(e.to_string())),
    };
    match call {
        ContractCall::Deploy => {
            if contract.is_some() {
                let err = ContractError::AlreadyDeployed;
                (TxStatus::Reverted, Vec::new(), Some(err.to_string()))
            } else {
                *contract = Some(ContractState::deploy(sender));
                (TxStatus::Included, Vec::new(), None)
            }
        }
        call if call.is_read_only() => {
            let err = ContractError::ReadOnly(call.function());
            (TxStatus::Reverted, Vec::new(), Some(err.to_string()))
        }
        call => match contract.as_mut() {
            None => {
                let err = ContractError::NotDeployed;
                (TxStatus::Reverted, Vec::new(), Some(err.to_string()))
            }
            Some(state) => match state.execute(sender, &call) {
                Ok(events) => (TxStatus::Included, events, None),
                Err(e) => (TxStatus::Reverted, Vec::new(), Some(e.to_string())),
            },
        },
    }
}

/// Gas for one transaction. Device-data messages are metered on the payload
/// curve when stored in full, and at the fixed digest rate when the chain is
/// running a digest-based scheme (those transactions carry 32-byte digests).
fn meter_gas(
    schedule: &GasSchedule,
    metering_scheme: StorageScheme,
    decoded: &Result<ContractCall, ContractError>,
) -> u64 {
    match decoded {
        Err(_) => INTRINSIC_GAS,
        Ok(ContractCall::Deploy) => schedule.deploy_gas,
        Ok(ContractCall::RegisterGateway { .. }) => schedule.register_gateway_gas,
        Ok(ContractCall::RegisterDevice { .. }) => schedule.register_device_gas,
        Ok(ContractCall::SendMessageToDevice { message, .. }) => {
            message_gas(schedule, message.len() as u32)
        }
        Ok(ContractCall::SendResponseFromDevice { message, .. }) => match metering_scheme {
            StorageScheme::FullOnChain => message_gas(schedule, message.len() as u32),
            StorageScheme::DataHashing | StorageScheme::MerkleTree => schedule.digest_anchor_gas,
        },
        Ok(ContractCall::GetMessagesFromDevice { .. }) => INTRINSIC_GAS,
    }
}

/// Canonical transaction bytes, the unit covered by the block digest.
pub fn encode_tx(tx: &Transaction) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_address(&tx.sender)
        .put_str(&tx.function)
        .put_bytes(&tx.args)
        .put_u64(tx.submitted_at)
        .put_u64(tx.gas_used)
        .put_u8(match tx.status {
            TxStatus::Pending => 0,
            TxStatus::Included => 1,
            TxStatus::Reverted => 2,
        });
    w.finish()
}

pub fn decode_tx(bytes: &[u8]) -> Result<Transaction, CodecError> {
    let mut r = ByteReader::new(bytes);
    let tx = Transaction {
        sender: r.address()?,
        function: r.str()?,
        args: r.bytes()?,
        submitted_at: r.u64()?,
        gas_used: r.u64()?,
        status: match r.u8()? {
            0 => TxStatus::Pending,
            1 => TxStatus::Included,
            2 => TxStatus::Reverted,
            other => return Err(CodecError::BadTag(other)),
        },
    };
    r.finish()?;
    Ok(tx)
}

/// Length-prefixed canonical serialization of a block's transactions.
pub fn encode_tx_section(transactions: &[Transaction]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_u32(transactions.len() as u32);
    for tx in transactions {
        w.put_bytes(&encode_tx(tx));
    }
    w.finish()
}

/// Block digest: SHA-256 over the parent digest, index, timestamp, and the
/// canonical transaction section, under a domain prefix.
pub fn block_digest(parent: &Digest32, index: u64, timestamp: u64, tx_section: &[u8]) -> Digest32 {
    sha256(&[
        b"biot-block:",
        parent.as_bytes(),
        &index.to_be_bytes(),
        &timestamp.to_be_bytes(),
        tx_section,
    ])
}

fn make_block(
    index: u64,
    timestamp: u64,
    parent_digest: Digest32,
    transactions: Vec<Transaction>,
) -> Block {
    let tx_section = encode_tx_section(&transactions);
    let digest = block_digest(&parent_digest, index, timestamp, &tx_section);
    Block {
        index,
        timestamp,
        parent_digest,
        transactions,
        digest,
    }
}

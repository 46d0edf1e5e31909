//! Smart-contract state machine hosted by the simulated ledger.
//!
//! The contract keeps a registry of gateways and devices plus two ordered
//! message boxes per device: an inbox of device-originated data and an outbox
//! of client commands. Access control follows the registry: only the admin
//! (the deployer) may register, only the gateway that owns a device may write
//! its inbox, and anyone may send commands to a registered device or read its
//! inbox. Every mutating operation validates all of its preconditions before
//! touching state, so a failed call leaves the state digest unchanged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, CodecError};
use crate::ledger::{EventDraft, EventKind};
use crate::types::{base64_bytes, sha256, Address, DeviceId, Digest32};

pub const FN_DEPLOY: &str = "deploy";
pub const FN_REGISTER_GATEWAY: &str = "registerGateway";
pub const FN_REGISTER_DEVICE: &str = "registerDevice";
pub const FN_SEND_MESSAGE_TO_DEVICE: &str = "sendMessageToDevice";
pub const FN_SEND_RESPONSE_FROM_DEVICE: &str = "sendResponseFromDevice";
pub const FN_GET_MESSAGES_FROM_DEVICE: &str = "getMessagesFromDevice";

/// Default upper bound on message payload size, in bytes.
pub const DEFAULT_MAX_PAYLOAD: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("caller {caller} is not authorized to call {function}")]
    Unauthorized {
        caller: Address,
        function: &'static str,
    },
    #[error("gateway {0} is not registered")]
    UnknownGateway(Address),
    #[error("device {0} is not registered")]
    UnknownDevice(DeviceId),
    #[error("payload of {size} bytes exceeds the {max}-byte maximum")]
    PayloadTooLarge { size: usize, max: usize },
    #[error("contract is not deployed")]
    NotDeployed,
    #[error("contract is already deployed")]
    AlreadyDeployed,
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("malformed arguments: {0}")]
    MalformedArgs(#[from] CodecError),
    #[error("{0} is read-only and cannot be executed in a transaction")]
    ReadOnly(&'static str),
    #[error("{0} mutates state and cannot be invoked as a read-only call")]
    NotReadOnly(&'static str),
}

/// Role a caller holds with respect to the contract registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallerRole {
    Administrator,
    Gateway,
    Client,
}

/// A decoded contract invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractCall {
    Deploy,
    RegisterGateway {
        gateway: Address,
    },
    RegisterDevice {
        device: DeviceId,
        gateway: Address,
    },
    SendMessageToDevice {
        device: DeviceId,
        message: Vec<u8>,
    },
    SendResponseFromDevice {
        device: DeviceId,
        message: Vec<u8>,
    },
    GetMessagesFromDevice {
        device: DeviceId,
        after_sequence: u64,
    },
}

impl ContractCall {
    pub fn function(&self) -> &'static str {
        match self {
            ContractCall::Deploy => FN_DEPLOY,
            ContractCall::RegisterGateway { .. } => FN_REGISTER_GATEWAY,
            ContractCall::RegisterDevice { .. } => FN_REGISTER_DEVICE,
            ContractCall::SendMessageToDevice { .. } => FN_SEND_MESSAGE_TO_DEVICE,
            ContractCall::SendResponseFromDevice { .. } => FN_SEND_RESPONSE_FROM_DEVICE,
            ContractCall::GetMessagesFromDevice { .. } => FN_GET_MESSAGES_FROM_DEVICE,
        }
    }

    pub fn is_read_only(&self) -> bool {
        matches!(self, ContractCall::GetMessagesFromDevice { .. })
    }

    /// Canonical argument encoding: fixed-width ids raw, payloads length-prefixed.
    pub fn encode_args(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        match self {
            ContractCall::Deploy => {}
            ContractCall::RegisterGateway { gateway } => {
                w.put_address(gateway);
            }
            ContractCall::RegisterDevice { device, gateway } => {
                w.put_device_id(device).put_address(gateway);
            }
            ContractCall::SendMessageToDevice { device, message }
            | ContractCall::SendResponseFromDevice { device, message } => {
                w.put_device_id(device).put_bytes(message);
            }
            ContractCall::GetMessagesFromDevice {
                device,
                after_sequence,
            } => {
                w.put_device_id(device).put_u64(*after_sequence);
            }
        }
        w.finish()
    }

    pub fn decode(function: &str, args: &[u8]) -> Result<Self, ContractError> {
        let mut r = ByteReader::new(args);
        let call = match function {
            FN_DEPLOY => ContractCall::Deploy,
            FN_REGISTER_GATEWAY => ContractCall::RegisterGateway {
                gateway: r.address()?,
            },
            FN_REGISTER_DEVICE => ContractCall::RegisterDevice {
                device: r.device_id()?,
                gateway: r.address()?,
            },
            FN_SEND_MESSAGE_TO_DEVICE => ContractCall::SendMessageToDevice {
                device: r.device_id()?,
                message: r.bytes()?,
            },
            FN_SEND_RESPONSE_FROM_DEVICE => ContractCall::SendResponseFromDevice {
                device: r.device_id()?,
                message: r.bytes()?,
            },
            FN_GET_MESSAGES_FROM_DEVICE => ContractCall::GetMessagesFromDevice {
                device: r.device_id()?,
                after_sequence: r.u64()?,
            },
            other => return Err(ContractError::UnknownFunction(other.to_string())),
        };
        r.finish()?;
        Ok(call)
    }
}

/// One inbox or outbox entry. Sequence numbers per box count up from 1 with no gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SequencedMessage {
    pub sequence: u64,
    #[serde(with = "base64_bytes")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractState {
    admin: Address,
    gateways: BTreeSet<Address>,
    device_owner: BTreeMap<DeviceId, Address>,
    inbox: BTreeMap<DeviceId, Vec<SequencedMessage>>,
    outbox: BTreeMap<DeviceId, Vec<SequencedMessage>>,
    max_payload: usize,
}

impl ContractState {
    pub fn deploy(admin: Address) -> Self {
        ContractState {
            admin,
            gateways: BTreeSet::new(),
            device_owner: BTreeMap::new(),
            inbox: BTreeMap::new(),
            outbox: BTreeMap::new(),
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }

    pub fn admin(&self) -> Address {
        self.admin
    }

    pub fn max_payload(&self) -> usize {
        self.max_payload
    }

    pub fn set_max_payload(&mut self, max: usize) {
        self.max_payload = max;
    }

    pub fn role_of(&self, caller: Address) -> CallerRole {
        if caller == self.admin {
            CallerRole::Administrator
        } else if self.gateways.contains(&caller) {
            CallerRole::Gateway
        } else {
            CallerRole::Client
        }
    }

    pub fn is_gateway(&self, addr: Address) -> bool {
        self.gateways.contains(&addr)
    }

    pub fn owner_of(&self, device: DeviceId) -> Option<Address> {
        self.device_owner.get(&device).copied()
    }

    pub fn inbox(&self, device: DeviceId) -> &[SequencedMessage] {
        self.inbox.get(&device).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn outbox(&self, device: DeviceId) -> &[SequencedMessage] {
        self.outbox.get(&device).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Executes a mutating call. All preconditions are checked before any
    /// mutation, so an `Err` return implies untouched state.
    pub fn execute(
        &mut self,
        caller: Address,
        call: &ContractCall,
    ) -> Result<Vec<EventDraft>, ContractError> {
        match call {
            ContractCall::Deploy => Err(ContractError::AlreadyDeployed),
            ContractCall::RegisterGateway { gateway } => {
                self.require_admin(caller, FN_REGISTER_GATEWAY)?;
                self.gateways.insert(*gateway);
                Ok(Vec::new())
            }
            ContractCall::RegisterDevice { device, gateway } => {
                self.require_admin(caller, FN_REGISTER_DEVICE)?;
                if !self.gateways.contains(gateway) {
                    return Err(ContractError::UnknownGateway(*gateway));
                }
                // Re-registering rebinds ownership; existing boxes keep their sequences.
                self.device_owner.insert(*device, *gateway);
                Ok(Vec::new())
            }
            ContractCall::SendMessageToDevice { device, message } => {
                if !self.device_owner.contains_key(device) {
                    return Err(ContractError::UnknownDevice(*device));
                }
                self.check_payload(message)?;
                let entry = push_sequenced(self.outbox.entry(*device).or_default(), message);
                Ok(vec![EventDraft {
                    kind: EventKind::MessageSentToDevice,
                    device_id: *device,
                    payload: entry.payload.clone(),
                    sequence: entry.sequence,
                }])
            }
            ContractCall::SendResponseFromDevice { device, message } => {
                let owner = self
                    .device_owner
                    .get(device)
                    .copied()
                    .ok_or(ContractError::UnknownDevice(*device))?;
                if caller != owner {
                    return Err(ContractError::Unauthorized {
                        caller,
                        function: FN_SEND_RESPONSE_FROM_DEVICE,
                    });
                }
                self.check_payload(message)?;
                let entry = push_sequenced(self.inbox.entry(*device).or_default(), message);
                Ok(vec![EventDraft {
                    kind: EventKind::ResponseSentFromDevice,
                    device_id: *device,
                    payload: entry.payload.clone(),
                    sequence: entry.sequence,
                }])
            }
            ContractCall::GetMessagesFromDevice { .. } => {
                Err(ContractError::ReadOnly(FN_GET_MESSAGES_FROM_DEVICE))
            }
        }
    }

    /// Serves a read-only call against the current state. Never mutates.
    pub fn query(&self, call: &ContractCall) -> Result<Vec<u8>, ContractError> {
        match call {
            ContractCall::GetMessagesFromDevice {
                device,
                after_sequence,
            } => {
                let messages = self.messages_after(*device, *after_sequence)?;
                Ok(encode_messages(messages))
            }
            other => Err(ContractError::NotReadOnly(other.function())),
        }
    }

    /// Inbox entries with sequence strictly greater than `after_sequence`.
    pub fn messages_after(
        &self,
        device: DeviceId,
        after_sequence: u64,
    ) -> Result<&[SequencedMessage], ContractError> {
        let inbox = self
            .device_owner
            .contains_key(&device)
            .then(|| self.inbox(device))
            .ok_or(ContractError::UnknownDevice(device))?;
        // Sequences are 1..=len with no gaps, so the cursor is an index.
        let start = (after_sequence as usize).min(inbox.len());
        Ok(&inbox[start..])
    }

    /// Digest over the canonical serialization of the full state.
    pub fn digest(&self) -> Digest32 {
        let mut w = ByteWriter::new();
        w.put_address(&self.admin);
        w.put_u32(self.gateways.len() as u32);
        for gw in &self.gateways {
            w.put_address(gw);
        }
        w.put_u32(self.device_owner.len() as u32);
        for (device, owner) in &self.device_owner {
            w.put_device_id(device).put_address(owner);
        }
        for boxes in [&self.inbox, &self.outbox] {
            w.put_u32(boxes.len() as u32);
            for (device, entries) in boxes {
                w.put_device_id(device).put_u32(entries.len() as u32);
                for entry in entries {
                    w.put_u64(entry.sequence).put_bytes(&entry.payload);
                }
            }
        }
        w.put_u64(self.max_payload as u64);
        sha256(&[b"biot-contract-state:", w.as_slice()])
    }

    fn require_admin(&self, caller: Address, function: &'static str) -> Result<(), ContractError> {
        if caller != self.admin {
            return Err(ContractError::Unauthorized { caller, function });
        }
        Ok(())
    }

    fn check_payload(&self, payload: &[u8]) -> Result<(), ContractError> {
        if payload.len() > self.max_payload {
            return Err(ContractError::PayloadTooLarge {
                size: payload.len(),
                max: self.max_payload,
            });
        }
        Ok(())
    }
}

fn push_sequenced<'a>(
    entries: &'a mut Vec<SequencedMessage>,
    payload: &[u8],
) -> &'a SequencedMessage {
    let sequence = entries.len() as u64 + 1;
    entries.push(SequencedMessage {
        sequence,
        payload: payload.to_vec(),
    });
    entries.last().unwrap()
}

/// Wire encoding of a message list: u32 count, then (u64 sequence, bytes payload) each.
pub fn encode_messages(messages: &[SequencedMessage]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.put_u32(messages.len() as u32);
    for m in messages {
        w.put_u64(m.sequence).put_bytes(&m.payload);
    }
    w.finish()
}

pub fn decode_messages(bytes: &[u8]) -> Result<Vec<SequencedMessage>, CodecError> {
    let mut r = ByteReader::new(bytes);
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sequence = r.u64()?;
        let payload = r.bytes()?;
        out.push(SequencedMessage { sequence, payload });
    }
    r.finish()?;
    Ok(out)
}

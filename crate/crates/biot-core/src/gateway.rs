//! Gateway between constrained devices and the chain.
//!
//! Devices speak 24-byte frames over authenticated local channels; the
//! gateway holds the only chain account on their behalf. Channels use
//! certificate pinning: a device may attach only if its fingerprint was
//! provisioned beforehand and matches. Two command paths exist:
//!
//! - CBG (client, blockchain, gateway): clients write commands into the
//!   contract; the gateway reacts to the resulting chain events, forwards
//!   the command frame to the device, and anchors the response.
//! - CGB (client, gateway, blockchain): clients hit the gateway directly
//!   and get the device response without waiting for a block; the response
//!   is then anchored on the same path, unless anchoring is switched off.
//!
//! Device-originated telemetry takes the same anchoring path in both
//! configurations. Only the 8-byte data section of a frame is anchored; the
//! device id travels as its own contract argument.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchoring::{
    AnchorError, AnchorTx, Anchorer, OffchainStore, StorageScheme, WindowPolicy,
};
use crate::devices::{frame_device_id, DeviceError, SimDevice, DATA_SECTION_LEN, FRAME_LEN};
use crate::ledger::{Event, EventKind, Ledger};
use crate::types::{sha256, Address, DeviceId, Digest32};

/// Seconds the gateway waits on a device before declaring a timeout.
pub const DEVICE_TIMEOUT_SECS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Configuration {
    #[serde(rename = "cbg")]
    Cbg,
    #[serde(rename = "cgb")]
    Cgb,
}

impl Configuration {
    pub fn as_str(&self) -> &'static str {
        match self {
            Configuration::Cbg => "cbg",
            Configuration::Cgb => "cgb",
        }
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Configuration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cbg" => Ok(Configuration::Cbg),
            "cgb" => Ok(Configuration::Cgb),
            other => Err(format!(
                "unknown configuration {other:?}; expected cbg or cgb"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GatewayConfig {
    pub address: Address,
    pub configuration: Configuration,
    pub scheme: StorageScheme,
    pub window_policy: WindowPolicy,
    /// In CGB the chain is not on the command path; this keeps (or drops)
    /// the response-anchoring leg.
    pub anchor_responses: bool,
}

/// Pinned fingerprint a gateway presents to devices.
pub fn gateway_fingerprint(address: &Address) -> Digest32 {
    sha256(&[b"biot-cert:gateway:", &address.0])
}

/// Pinned fingerprint a device presents to the gateway.
pub fn device_fingerprint(device_id: &DeviceId) -> Digest32 {
    sha256(&[b"biot-cert:device:", &device_id.0])
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("device {device} presented a fingerprint that does not match the provisioned pin")]
    PinningMismatch { device: DeviceId },
    #[error("device {0} has no provisioned fingerprint")]
    UnknownDeviceFingerprint(DeviceId),
    #[error("no authenticated channel to device {0}")]
    ChannelClosed(DeviceId),
    #[error("device {device} did not answer by t={deadline}")]
    DeviceTimeout { device: DeviceId, deadline: u64 },
    #[error("gateway cannot act on {0:?} events")]
    UnexpectedEventKind(EventKind),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Closed,
    Authenticated,
}

struct DeviceChannel {
    device: Box<dyn SimDevice>,
    state: ChannelState,
    online: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GatewayLogEntry {
    pub at: u64,
    pub kind: String,
    pub device_id: Option<DeviceId>,
    pub detail: String,
}

/// Result of driving one command through a device.
pub struct CommandOutcome {
    pub response_frame: Vec<u8>,
    pub anchor_txs: Vec<AnchorTx>,
}

/// Result of polling a producer device that emitted a frame.
pub struct PollOutcome {
    pub frame: Vec<u8>,
    pub anchor_txs: Vec<AnchorTx>,
}

pub struct Gateway {
    config: GatewayConfig,
    anchorer: Anchorer,
    pins: BTreeMap<DeviceId, Digest32>,
    channels: BTreeMap<DeviceId, DeviceChannel>,
    next_sequence: BTreeMap<DeviceId, u64>,
    log: Vec<GatewayLogEntry>,
}

impl Gateway {
    pub fn new(config: GatewayConfig, store: OffchainStore) -> Self {
        let anchorer = Anchorer::new(config.scheme, config.address, store, config.window_policy);
        Gateway {
            config,
            anchorer,
            pins: BTreeMap::new(),
            channels: BTreeMap::new(),
            next_sequence: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn anchorer(&self) -> &Anchorer {
        &self.anchorer
    }

    pub fn anchorer_mut(&mut self) -> &mut Anchorer {
        &mut self.anchorer
    }

    pub fn log(&self) -> &[GatewayLogEntry] {
        &self.log
    }

    /// Records the fingerprint a device must present when attaching.
    pub fn provision_device(&mut self, device_id: DeviceId, fingerprint: Digest32) {
        self.pins.insert(device_id, fingerprint);
    }

    /// Opens an authenticated channel to a device, enforcing the pinned
    /// fingerprint.
    pub fn attach_device(
        &mut self,
        device: Box<dyn SimDevice>,
        now: u64,
    ) -> Result<(), GatewayError> {
        let id = device.device_id();
        let presented = device_fingerprint(&id);
        let pinned = self
            .pins
            .get(&id)
            .ok_or(GatewayError::UnknownDeviceFingerprint(id))?;
        if *pinned != presented {
            return Err(GatewayError::PinningMismatch { device: id });
        }
        self.channels.insert(
            id,
            DeviceChannel {
                device,
                state: ChannelState::Authenticated,
                online: true,
            },
        );
        self.push_log(
            now,
            "channelOpen",
            Some(id),
            format!("fingerprint {presented}"),
        );
        Ok(())
    }

    pub fn set_device_online(&mut self, device_id: DeviceId, online: bool, now: u64) {
        if let Some(channel) = self.channels.get_mut(&device_id) {
            channel.online = online;
            let kind = if online {
                "deviceOnline"
            } else {
                "deviceOffline"
            };
            self.push_log(now, kind, Some(device_id), String::new());
        }
    }

    pub fn channel_state(&self, device_id: DeviceId) -> ChannelState {
        self.channels
            .get(&device_id)
            .map_or(ChannelState::Closed, |c| c.state)
    }

    /// Sends one frame down a device channel and returns the device's
    /// response frame.
    pub fn forward_to_device(
        &mut self,
        device_id: DeviceId,
        frame: &[u8],
        now: u64,
    ) -> Result<Vec<u8>, GatewayError> {
        let channel = self
            .channels
            .get_mut(&device_id)
            .filter(|c| c.state == ChannelState::Authenticated)
            .ok_or(GatewayError::ChannelClosed(device_id))?;
        if !channel.online {
            let deadline = now + DEVICE_TIMEOUT_SECS;
            self.push_log(
                now,
                "deviceTimeout",
                Some(device_id),
                format!("deadline {deadline}"),
            );
            return Err(GatewayError::DeviceTimeout {
                device: device_id,
                deadline,
            });
        }
        let response = channel.device.handle_frame(frame, now)?;
        self.push_log(
            now,
            "forward",
            Some(device_id),
            format!("{} bytes out, {} bytes back", frame.len(), response.len()),
        );
        Ok(response)
    }

    /// CBG path: reacts to a command event observed on-chain.
    pub fn handle_chain_event(
        &mut self,
        ledger: &Ledger,
        event: &Event,
        now: u64,
    ) -> Result<CommandOutcome, GatewayError> {
        if event.kind != EventKind::MessageSentToDevice {
            return Err(GatewayError::UnexpectedEventKind(event.kind));
        }
        self.push_log(
            now,
            "chainEvent",
            Some(event.device_id),
            format!("{} block {}", event.kind.as_str(), event.block_index),
        );
        let response_frame = self.forward_to_device(event.device_id, &event.payload, now)?;
        let anchor_txs = self.anchor_response(ledger, event.device_id, &response_frame, now)?;
        Ok(CommandOutcome {
            response_frame,
            anchor_txs,
        })
    }

    /// CGB path: serves a client command directly, then anchors the
    /// response unless anchoring is disabled.
    pub fn handle_client_command(
        &mut self,
        ledger: &Ledger,
        device_id: DeviceId,
        frame: &[u8],
        now: u64,
    ) -> Result<CommandOutcome, GatewayError> {
        self.push_log(
            now,
            "clientCommand",
            Some(device_id),
            format!("{} bytes", frame.len()),
        );
        let response_frame = self.forward_to_device(device_id, frame, now)?;
        let anchor_txs = if self.config.anchor_responses {
            self.anchor_response(ledger, device_id, &response_frame, now)?
        } else {
            Vec::new()
        };
        Ok(CommandOutcome {
            response_frame,
            anchor_txs,
        })
    }

    /// Ticks a producer device and anchors any frame it emits. `None` when
    /// the device is offline or stayed silent.
    pub fn poll_device(
        &mut self,
        ledger: &Ledger,
        device_id: DeviceId,
        now: u64,
    ) -> Result<Option<PollOutcome>, GatewayError> {
        let channel = self
            .channels
            .get_mut(&device_id)
            .filter(|c| c.state == ChannelState::Authenticated)
            .ok_or(GatewayError::ChannelClosed(device_id))?;
        if !channel.online {
            self.push_log(now, "pollSkipped", Some(device_id), "device offline".into());
            return Ok(None);
        }
        match channel.device.tick(now) {
            Some(frame) => {
                let anchor_txs = self.ingest_device_frame(ledger, &frame, now)?;
                Ok(Some(PollOutcome { frame, anchor_txs }))
            }
            None => Ok(None),
        }
    }

    /// Anchors a device-originated frame (telemetry or response).
    pub fn ingest_device_frame(
        &mut self,
        ledger: &Ledger,
        frame: &[u8],
        now: u64,
    ) -> Result<Vec<AnchorTx>, GatewayError> {
        let device_id = frame_device_id(frame)?;
        if self.channel_state(device_id) != ChannelState::Authenticated {
            return Err(GatewayError::ChannelClosed(device_id));
        }
        self.anchor_response(ledger, device_id, frame, now)
    }

    fn anchor_response(
        &mut self,
        ledger: &Ledger,
        device_id: DeviceId,
        frame: &[u8],
        now: u64,
    ) -> Result<Vec<AnchorTx>, GatewayError> {
        if frame.len() != FRAME_LEN {
            return Err(GatewayError::Device(DeviceError::BadFrameLength(
                frame.len(),
            )));
        }
        let data: [u8; DATA_SECTION_LEN] = frame[16..].try_into().unwrap();
        let sequence = self.next_sequence.entry(device_id).or_insert(1);
        let seq = *sequence;
        *sequence += 1;
        let txs = self.anchorer.anchor(ledger, device_id, seq, &data, now)?;
        for tx in &txs {
            self.push_log(
                now,
                "anchor",
                Some(device_id),
                format!("{:?} seq {seq}", tx.kind),
            );
        }
        Ok(txs)
    }

    /// Closes and anchors any open batching window.
    pub fn flush_windows(
        &mut self,
        ledger: &Ledger,
        now: u64,
    ) -> Result<Option<AnchorTx>, GatewayError> {
        let tx = self.anchorer.flush(ledger, now)?;
        if let Some(tx) = &tx {
            self.push_log(now, "anchor", Some(tx.device_id), "WindowRoot flush".into());
        }
        Ok(tx)
    }

    fn push_log(&mut self, at: u64, kind: &str, device_id: Option<DeviceId>, detail: String) {
        self.log.push(GatewayLogEntry {
            at,
            kind: kind.to_string(),
            device_id,
            detail,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractCall;
    use crate::devices::{ContainerSensor, LightCommand, LightOpcode, LightResponse, SmartLight};
    use crate::economics::GasSchedule;
    use crate::ledger::{EventFilter, LatencyModel, TxStatus};

    struct Rig {
        ledger: Ledger,
        gateway: Gateway,
        client: Address,
        _dir: tempfile::TempDir,
    }

    fn rig(configuration: Configuration, scheme: StorageScheme, anchor_responses: bool) -> Rig {
        let ledger = Ledger::new(GasSchedule::default(), LatencyModel::default(), scheme);
        let admin = Address::derive("admin");
        let gw_addr = Address::derive("gateway-0");
        let client = Address::derive("client");
        for a in [admin, gw_addr, client] {
            ledger.create_account(a);
        }
        ledger.submit(admin, &ContractCall::Deploy, 0).unwrap();
        ledger
            .submit(
                admin,
                &ContractCall::RegisterGateway { gateway: gw_addr },
                0,
            )
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = OffchainStore::open(&dir.path().join("offchain.jsonl")).unwrap();
        let gateway = Gateway::new(
            GatewayConfig {
                address: gw_addr,
                configuration,
                scheme,
                window_policy: WindowPolicy::default(),
                anchor_responses,
            },
            store,
        );
        Rig {
            ledger,
            gateway,
            client,
            _dir: dir,
        }
    }

    fn register_device(rig: &Rig, device: DeviceId) {
        let admin = Address::derive("admin");
        let gw = Address::derive("gateway-0");
        rig.ledger
            .submit(
                admin,
                &ContractCall::RegisterDevice {
                    device,
                    gateway: gw,
                },
                0,
            )
            .unwrap();
    }

    #[test]
    fn attachment_requires_a_matching_pin() {
        let mut r = rig(Configuration::Cbg, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        let light = SmartLight::new(id);
        assert!(matches!(
            r.gateway.attach_device(Box::new(SmartLight::new(id)), 0),
            Err(GatewayError::UnknownDeviceFingerprint(_))
        ));
        r.gateway.provision_device(id, Digest32::zero());
        assert!(matches!(
            r.gateway.attach_device(Box::new(SmartLight::new(id)), 0),
            Err(GatewayError::PinningMismatch { .. })
        ));
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway.attach_device(Box::new(light), 0).unwrap();
        assert_eq!(r.gateway.channel_state(id), ChannelState::Authenticated);
    }

    #[test]
    fn cbg_command_round_trip_spans_two_blocks() {
        let mut r = rig(Configuration::Cbg, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        register_device(&r, id);
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(SmartLight::new(id)), 0)
            .unwrap();
        let sub = r
            .ledger
            .subscribe(EventFilter::for_device(EventKind::MessageSentToDevice, id));
        r.ledger.produce_block(15).unwrap();

        // Client writes the command on-chain at t=60.
        let command = LightCommand {
            device_id: id,
            opcode: LightOpcode::On,
        };
        r.ledger
            .submit(
                r.client,
                &ContractCall::SendMessageToDevice {
                    device: id,
                    message: command.encode().to_vec(),
                },
                60,
            )
            .unwrap();
        r.ledger.produce_block(30).unwrap();
        r.ledger.produce_block(45).unwrap();
        r.ledger.produce_block(60).unwrap();
        assert!(sub.is_empty(), "event precedes inclusion");
        r.ledger.produce_block(75).unwrap();
        let events = sub.drain();
        assert_eq!(events.len(), 1);

        // Gateway reacts at the event's block time.
        let outcome = r
            .gateway
            .handle_chain_event(&r.ledger, &events[0], events[0].block_timestamp)
            .unwrap();
        let response = LightResponse::decode(&outcome.response_frame).unwrap();
        assert!(response.on);
        assert_eq!(outcome.anchor_txs.len(), 1);
        r.ledger.produce_block(90).unwrap();
        let receipt = outcome.anchor_txs[0].handle.get().unwrap();
        assert_eq!(receipt.status, TxStatus::Included);
        // Command at 60, response anchored in the block at 90: two intervals.
        assert_eq!(receipt.block_timestamp - 60, 30);
    }

    #[test]
    fn cgb_answers_without_waiting_for_a_block() {
        let mut r = rig(Configuration::Cgb, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        register_device(&r, id);
        r.ledger.produce_block(15).unwrap();
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(SmartLight::new(id)), 0)
            .unwrap();

        let frame = LightCommand {
            device_id: id,
            opcode: LightOpcode::Toggle,
        }
        .encode();
        let outcome = r
            .gateway
            .handle_client_command(&r.ledger, id, &frame, 61)
            .unwrap();
        // The response is in hand immediately; the anchor leg is still
        // pending, decoupled from the client's wait.
        assert!(LightResponse::decode(&outcome.response_frame).unwrap().on);
        assert_eq!(outcome.anchor_txs.len(), 1);
        assert!(outcome.anchor_txs[0].handle.get().is_none());
        assert_eq!(r.ledger.pending_count(), 1);
    }

    #[test]
    fn cgb_anchoring_can_be_disabled() {
        let mut r = rig(Configuration::Cgb, StorageScheme::FullOnChain, false);
        let id = DeviceId::derive("light-0");
        register_device(&r, id);
        r.ledger.produce_block(15).unwrap();
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(SmartLight::new(id)), 0)
            .unwrap();
        let frame = LightCommand {
            device_id: id,
            opcode: LightOpcode::On,
        }
        .encode();
        let outcome = r
            .gateway
            .handle_client_command(&r.ledger, id, &frame, 61)
            .unwrap();
        assert!(outcome.anchor_txs.is_empty());
        assert_eq!(r.ledger.pending_count(), 0);
    }

    #[test]
    fn offline_device_times_out_with_a_deadline() {
        let mut r = rig(Configuration::Cgb, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        register_device(&r, id);
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(SmartLight::new(id)), 0)
            .unwrap();
        r.gateway.set_device_online(id, false, 100);
        let frame = LightCommand {
            device_id: id,
            opcode: LightOpcode::On,
        }
        .encode();
        match r.gateway.handle_client_command(&r.ledger, id, &frame, 120) {
            Err(GatewayError::DeviceTimeout { device, deadline }) => {
                assert_eq!(device, id);
                assert_eq!(deadline, 120 + DEVICE_TIMEOUT_SECS);
            }
            other => panic!("expected timeout, got {:?}", other.err()),
        }
    }

    #[test]
    fn unattached_device_channel_is_closed() {
        let mut r = rig(Configuration::Cbg, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        assert!(matches!(
            r.gateway.forward_to_device(id, &[0u8; 24], 10),
            Err(GatewayError::ChannelClosed(_))
        ));
        assert!(matches!(
            r.gateway.poll_device(&r.ledger, id, 10),
            Err(GatewayError::ChannelClosed(_))
        ));
    }

    #[test]
    fn container_polling_anchors_sequenced_telemetry() {
        let mut r = rig(Configuration::Cbg, StorageScheme::DataHashing, true);
        let id = DeviceId::derive("container-0");
        register_device(&r, id);
        r.ledger.produce_block(15).unwrap();
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(ContainerSensor::new(id, 7)), 0)
            .unwrap();
        for minute in 1..=3u64 {
            let out = r
                .gateway
                .poll_device(&r.ledger, id, minute * 60)
                .unwrap()
                .unwrap();
            assert_eq!(out.frame.len(), 24);
            assert_eq!(out.anchor_txs.len(), 1);
        }
        {
            let store = r.gateway.anchorer().store();
            for seq in 1..=3u64 {
                assert!(store.get_data(id, seq).unwrap().is_some());
            }
            assert!(store.get_data(id, 4).unwrap().is_none());
        }

        // Offline poll produces nothing; the reading is simply lost.
        r.gateway.set_device_online(id, false, 240);
        assert!(r.gateway.poll_device(&r.ledger, id, 240).unwrap().is_none());
        r.gateway.set_device_online(id, true, 300);
        let out = r.gateway.poll_device(&r.ledger, id, 300).unwrap().unwrap();
        assert_eq!(out.anchor_txs.len(), 1);
        let store = r.gateway.anchorer().store();
        assert!(store.get_data(id, 4).unwrap().is_some());
        assert!(store.get_data(id, 5).unwrap().is_none());
    }

    #[test]
    fn log_records_the_full_exchange() {
        let mut r = rig(Configuration::Cgb, StorageScheme::FullOnChain, true);
        let id = DeviceId::derive("light-0");
        register_device(&r, id);
        r.ledger.produce_block(15).unwrap();
        r.gateway.provision_device(id, device_fingerprint(&id));
        r.gateway
            .attach_device(Box::new(SmartLight::new(id)), 5)
            .unwrap();
        let frame = LightCommand {
            device_id: id,
            opcode: LightOpcode::On,
        }
        .encode();
        r.gateway
            .handle_client_command(&r.ledger, id, &frame, 61)
            .unwrap();
        let kinds: Vec<&str> = r.gateway.log().iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(
            kinds,
            vec!["channelOpen", "clientCommand", "forward", "anchor"]
        );
        assert!(r.gateway.log().iter().all(|e| e.device_id == Some(id)));
    }
}

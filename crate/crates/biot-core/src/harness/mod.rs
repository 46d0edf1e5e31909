//! Scenario runner: one device, one gateway, one chain, one virtual day.
//!
//! The runner owns a virtual clock that advances block by block; nothing
//! sleeps. Device actions scheduled between block boundaries execute with
//! their own timestamps before the boundary block is produced, so a
//! submission at t lands in the first block strictly after t, exactly as on
//! the live ledger. A run ends when the configured duration has elapsed,
//! the final batching window is anchored, and every receipt has resolved.

pub mod artifacts;
pub mod report;

use std::collections::VecDeque;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchoring::{
    AnchorTxKind, ClosedWindow, InclusionProof, OffchainStore, StorageScheme, StoreRecord,
    WindowPolicy,
};
use crate::contract::ContractCall;
use crate::devices::{ContainerSensor, LightCommand, LightOpcode, SmartLight};
use crate::economics::{build_cost_report, CostReport, EconomicsError, GasSchedule, PriceContext};
use crate::gateway::{
    device_fingerprint, Configuration, Gateway, GatewayConfig, GatewayError, GatewayLogEntry,
};
use crate::ledger::{
    Block, Event, EventFilter, EventKind, LatencyModel, Ledger, LedgerError, ReceiptHandle,
    TxStatus,
};
use crate::types::{Address, DeviceId, Digest32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScenarioKind {
    RefrigeratedContainer,
    SmartLight,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::RefrigeratedContainer => "refrigeratedContainer",
            ScenarioKind::SmartLight => "smartLight",
        }
    }

    /// Default message volume for one virtual day.
    pub fn default_messages_per_day(&self) -> u32 {
        match self {
            ScenarioKind::RefrigeratedContainer => 1440,
            ScenarioKind::SmartLight => 20,
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "refrigeratedContainer" => Ok(ScenarioKind::RefrigeratedContainer),
            "smartLight" => Ok(ScenarioKind::SmartLight),
            other => Err(format!(
                "unknown scenario {other:?}; expected refrigeratedContainer or smartLight"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub configuration: Configuration,
    pub scheme: StorageScheme,
    /// Virtual seconds to simulate.
    pub duration_virtual: u64,
    pub block_interval: u64,
    pub confirmations: u32,
    pub seed: u64,
    /// Overrides the scenario's default daily message volume.
    pub messages_per_day: Option<u32>,
    pub window_policy: WindowPolicy,
    /// CGB only: whether device responses are anchored at all.
    pub anchor_responses: bool,
    pub price_context: PriceContext,
    /// Overrides the built-in gas figures.
    pub gas_schedule: Option<GasSchedule>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::RefrigeratedContainer,
            configuration: Configuration::Cbg,
            scheme: StorageScheme::FullOnChain,
            duration_virtual: 86_400,
            block_interval: 15,
            confirmations: 1,
            seed: 7,
            messages_per_day: None,
            window_policy: WindowPolicy::default(),
            anchor_responses: true,
            price_context: PriceContext::default(),
            gas_schedule: None,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Config {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn messages(&self) -> u32 {
        self.messages_per_day
            .unwrap_or_else(|| self.scenario.default_messages_per_day())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LatencyKind {
    /// Deployment and registration transactions.
    Setup,
    /// One device message reaching chain finality (payload or digest).
    DataAnchor,
    /// A batching-window root reaching chain finality.
    WindowAnchor,
    /// Client command issued to response available, as the client sees it.
    CommandRoundTrip,
}

impl LatencyKind {
    pub const ALL: [LatencyKind; 4] = [
        LatencyKind::Setup,
        LatencyKind::DataAnchor,
        LatencyKind::WindowAnchor,
        LatencyKind::CommandRoundTrip,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LatencyKind::Setup => "setup",
            LatencyKind::DataAnchor => "dataAnchor",
            LatencyKind::WindowAnchor => "windowAnchor",
            LatencyKind::CommandRoundTrip => "commandRoundTrip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyRecord {
    pub index: u64,
    pub kind: LatencyKind,
    pub submitted_at: u64,
    pub resolved_at: u64,
}

impl LatencyRecord {
    pub fn wait(&self) -> u64 {
        self.resolved_at - self.submitted_at
    }
}

/// One frame crossing the gateway, for trace output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameTrace {
    pub at: u64,
    pub device_id: DeviceId,
    pub direction: FrameDirection,
    #[serde(with = "crate::types::base64_bytes")]
    pub frame: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FrameDirection {
    DeviceToGateway,
    GatewayToDevice,
}

pub struct RunResult {
    pub config: ScenarioConfig,
    pub device_id: DeviceId,
    pub admin: Address,
    pub gateway_address: Address,
    pub client: Address,
    pub blocks: Vec<Block>,
    pub events: Vec<Event>,
    pub latencies: Vec<LatencyRecord>,
    pub cost_report: CostReport,
    pub gateway_log: Vec<GatewayLogEntry>,
    pub closed_windows: Vec<ClosedWindow>,
    pub store_records: Vec<StoreRecord>,
    pub frames: Vec<FrameTrace>,
    pub chain_digest: Digest32,
    pub state_digest: Digest32,
}

impl RunResult {
    /// Inclusion proof for one leaf of one closed window.
    pub fn prove(&self, window_id: u64, leaf_index: usize) -> Option<InclusionProof> {
        let window = self
            .closed_windows
            .iter()
            .find(|w| w.window_id == window_id)?;
        Some(InclusionProof {
            window_id,
            leaf_index: leaf_index as u64,
            leaf: window.leaves.get(leaf_index)?.digest,
            siblings: window.prove(leaf_index)?,
        })
    }

    pub fn latency_of(&self, kind: LatencyKind) -> Vec<&LatencyRecord> {
        self.latencies.iter().filter(|l| l.kind == kind).collect()
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario config {path} is invalid")]
    Config {
        path: String,
        source: serde_json::Error,
    },
    #[error("scenario config is unusable: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Economics(#[from] EconomicsError),
    #[error("artifact serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("setup transaction {function} reverted: {reason}")]
    SetupFailed { function: String, reason: String },
    #[error("run stalled with {unresolved} unresolved receipts past the drain cap")]
    Stalled { unresolved: usize },
}

enum Action {
    Poll,
    Command(LightOpcode),
}

struct PendingReceipt {
    kind: LatencyKind,
    submitted_at: u64,
    handle: ReceiptHandle,
}

enum RoundTripEnd {
    Receipt(ReceiptHandle),
    At(u64),
}

struct PendingRoundTrip {
    submitted_at: u64,
    end: RoundTripEnd,
}

/// Runs one scenario to completion. `offchain_path` is where the off-chain
/// store file lives (created if absent); everything else stays in memory
/// until exported.
pub fn run_scenario(
    config: &ScenarioConfig,
    offchain_path: &Path,
) -> Result<RunResult, HarnessError> {
    if config.block_interval == 0 {
        return Err(HarnessError::BadConfig(
            "blockInterval must be positive".into(),
        ));
    }
    if config.duration_virtual < config.block_interval {
        return Err(HarnessError::BadConfig(
            "durationVirtual is shorter than one block interval".into(),
        ));
    }
    let schedule = config.gas_schedule.clone().unwrap_or_default();
    let latency = LatencyModel {
        block_interval: config.block_interval,
        confirmations: config.confirmations,
    };
    let ledger = Ledger::new(schedule, latency, config.scheme);

    let admin = Address::derive("admin");
    let gateway_address = Address::derive("gateway-0");
    let client = Address::derive("client");
    for account in [admin, gateway_address, client] {
        ledger.create_account(account);
    }

    let device_id = match config.scenario {
        ScenarioKind::RefrigeratedContainer => DeviceId::derive("container-0"),
        ScenarioKind::SmartLight => DeviceId::derive("light-0"),
    };

    let store = OffchainStore::open(offchain_path)
        .map_err(|e| HarnessError::BadConfig(format!("off-chain store unusable: {e}")))?;
    let mut gateway = Gateway::new(
        GatewayConfig {
            address: gateway_address,
            configuration: config.configuration,
            scheme: config.scheme,
            window_policy: config.window_policy,
            anchor_responses: config.anchor_responses,
        },
        store,
    );
    gateway.provision_device(device_id, device_fingerprint(&device_id));
    match config.scenario {
        ScenarioKind::RefrigeratedContainer => {
            gateway.attach_device(Box::new(ContainerSensor::new(device_id, config.seed)), 0)?
        }
        ScenarioKind::SmartLight => {
            gateway.attach_device(Box::new(SmartLight::new(device_id)), 0)?
        }
    }

    let command_events = ledger.subscribe(EventFilter::for_device(
        EventKind::MessageSentToDevice,
        device_id,
    ));

    // Setup transactions, submitted at t=0 so they land in the first block.
    let setup = [
        ("deploy", ledger.submit(admin, &ContractCall::Deploy, 0)?),
        (
            "registerGateway",
            ledger.submit(
                admin,
                &ContractCall::RegisterGateway {
                    gateway: gateway_address,
                },
                0,
            )?,
        ),
        (
            "registerDevice",
            ledger.submit(
                admin,
                &ContractCall::RegisterDevice {
                    device: device_id,
                    gateway: gateway_address,
                },
                0,
            )?,
        ),
    ];

    let actions = schedule_actions(config)?;

    let mut pending_receipts: Vec<PendingReceipt> = setup
        .iter()
        .map(|(_, handle)| PendingReceipt {
            kind: LatencyKind::Setup,
            submitted_at: 0,
            handle: handle.clone(),
        })
        .collect();
    let mut pending_round_trips: Vec<PendingRoundTrip> = Vec::new();
    let mut command_times: VecDeque<u64> = VecDeque::new();
    let mut frames: Vec<FrameTrace> = Vec::new();

    let track = |pending: &mut Vec<PendingReceipt>, txs: &[crate::anchoring::AnchorTx]| {
        for tx in txs {
            pending.push(PendingReceipt {
                kind: match tx.kind {
                    AnchorTxKind::Data | AnchorTxKind::Digest => LatencyKind::DataAnchor,
                    AnchorTxKind::WindowRoot => LatencyKind::WindowAnchor,
                },
                submitted_at: tx.submitted_at,
                handle: tx.handle.clone(),
            });
        }
    };

    let duration = config.duration_virtual;
    let interval = config.block_interval;
    let drain_cap = duration + 120 * interval;
    let mut now = 0u64;
    let mut action_idx = 0usize;
    let mut flushed = false;

    while now < duration || ledger.unresolved_count() > 0 || !flushed {
        now += interval;
        if now > drain_cap {
            return Err(HarnessError::Stalled {
                unresolved: ledger.unresolved_count(),
            });
        }

        while action_idx < actions.len() && actions[action_idx].0 <= now {
            let (at, action) = &actions[action_idx];
            let at = *at;
            action_idx += 1;
            match action {
                Action::Poll => {
                    if let Some(outcome) = gateway.poll_device(&ledger, device_id, at)? {
                        frames.push(FrameTrace {
                            at,
                            device_id,
                            direction: FrameDirection::DeviceToGateway,
                            frame: outcome.frame.clone(),
                        });
                        track(&mut pending_receipts, &outcome.anchor_txs);
                    }
                }
                Action::Command(opcode) => {
                    let frame = LightCommand {
                        device_id,
                        opcode: *opcode,
                    }
                    .encode();
                    match config.configuration {
                        Configuration::Cbg => {
                            ledger.submit(
                                client,
                                &ContractCall::SendMessageToDevice {
                                    device: device_id,
                                    message: frame.to_vec(),
                                },
                                at,
                            )?;
                            command_times.push_back(at);
                        }
                        Configuration::Cgb => {
                            frames.push(FrameTrace {
                                at,
                                device_id,
                                direction: FrameDirection::GatewayToDevice,
                                frame: frame.to_vec(),
                            });
                            let outcome =
                                gateway.handle_client_command(&ledger, device_id, &frame, at)?;
                            frames.push(FrameTrace {
                                at,
                                device_id,
                                direction: FrameDirection::DeviceToGateway,
                                frame: outcome.response_frame.clone(),
                            });
                            // The client holds the response immediately; the
                            // anchor leg settles on its own clock.
                            pending_round_trips.push(PendingRoundTrip {
                                submitted_at: at,
                                end: RoundTripEnd::At(at),
                            });
                            track(&mut pending_receipts, &outcome.anchor_txs);
                        }
                    }
                }
            }
        }

        ledger.produce_block(now)?;

        for event in command_events.drain() {
            let at = event.block_timestamp;
            frames.push(FrameTrace {
                at,
                device_id,
                direction: FrameDirection::GatewayToDevice,
                frame: event.payload.clone(),
            });
            let outcome = gateway.handle_chain_event(&ledger, &event, at)?;
            frames.push(FrameTrace {
                at,
                device_id,
                direction: FrameDirection::DeviceToGateway,
                frame: outcome.response_frame.clone(),
            });
            let submitted_at = command_times
                .pop_front()
                .expect("every command event pairs with a submitted command");
            // The client's wait ends when the anchored response resolves;
            // under batching the response is in hand once the gateway has
            // it, the root settling later on the window's clock.
            let immediate = outcome
                .anchor_txs
                .iter()
                .find(|tx| tx.kind != AnchorTxKind::WindowRoot);
            let end = match immediate {
                Some(tx) => RoundTripEnd::Receipt(tx.handle.clone()),
                None => RoundTripEnd::At(at),
            };
            pending_round_trips.push(PendingRoundTrip { submitted_at, end });
            let window_txs: Vec<_> = outcome
                .anchor_txs
                .into_iter()
                .filter(|tx| tx.kind == AnchorTxKind::WindowRoot)
                .collect();
            track(&mut pending_receipts, &window_txs);
        }

        if now >= duration && !flushed && action_idx == actions.len() {
            if let Some(tx) = gateway.flush_windows(&ledger, now)? {
                track(&mut pending_receipts, std::slice::from_ref(&tx));
            }
            flushed = true;
        }
    }

    for (function, handle) in &setup {
        let receipt = handle.expect_resolved();
        if receipt.status != TxStatus::Included {
            return Err(HarnessError::SetupFailed {
                function: (*function).to_string(),
                reason: receipt.error.clone().unwrap_or_default(),
            });
        }
    }

    let mut latencies: Vec<LatencyRecord> = Vec::new();
    for pending in &pending_receipts {
        let receipt = pending.handle.expect_resolved();
        latencies.push(LatencyRecord {
            index: 0,
            kind: pending.kind,
            submitted_at: pending.submitted_at,
            resolved_at: receipt.resolved_at,
        });
    }
    for trip in &pending_round_trips {
        let resolved_at = match &trip.end {
            RoundTripEnd::Receipt(handle) => handle.expect_resolved().resolved_at,
            RoundTripEnd::At(at) => *at,
        };
        latencies.push(LatencyRecord {
            index: 0,
            kind: LatencyKind::CommandRoundTrip,
            submitted_at: trip.submitted_at,
            resolved_at,
        });
    }
    latencies.sort_by_key(|l| (l.submitted_at, l.kind as u8, l.resolved_at));
    for (i, record) in latencies.iter_mut().enumerate() {
        record.index = i as u64;
    }

    let blocks = ledger.blocks_snapshot();
    let cost_report = build_cost_report(
        &blocks,
        config.scheme,
        gateway.anchorer().leaves_appended(),
        ledger.pending_count(),
        &config.price_context,
    )?;

    let (_, _, chain_digest) = ledger.head();
    Ok(RunResult {
        config: config.clone(),
        device_id,
        admin,
        gateway_address,
        client,
        events: ledger.events_snapshot(),
        latencies,
        cost_report,
        gateway_log: gateway.log().to_vec(),
        closed_windows: gateway.anchorer().closed_windows().to_vec(),
        store_records: gateway.anchorer().store().records().to_vec(),
        frames,
        chain_digest,
        state_digest: ledger.state_digest().unwrap_or(Digest32::zero()),
        blocks,
    })
}

/// Builds the device-action timeline for one day.
///
/// The container reports on an even grid: reading k of n lands at
/// `duration * k / n` seconds (one per minute at the default volume). The
/// light receives its commands at seeded, distinct, minute-aligned times so
/// reruns with one seed are identical and different seeds move the traffic.
fn schedule_actions(config: &ScenarioConfig) -> Result<Vec<(u64, Action)>, HarnessError> {
    let n = config.messages();
    if n == 0 {
        return Err(HarnessError::BadConfig(
            "messagesPerDay must be positive".into(),
        ));
    }
    let duration = config.duration_virtual;
    match config.scenario {
        ScenarioKind::RefrigeratedContainer => Ok((1..=n as u64)
            .map(|k| (duration * k / n as u64, Action::Poll))
            .collect()),
        ScenarioKind::SmartLight => {
            let last_minute = duration / 60;
            let candidates = last_minute.saturating_sub(1);
            if (n as u64) > candidates {
                return Err(HarnessError::BadConfig(format!(
                    "{n} commands do not fit into {candidates} candidate minutes"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut minutes = rand::seq::index::sample(&mut rng, candidates as usize, n as usize)
                .into_iter()
                .map(|i| i as u64 + 1)
                .collect::<Vec<u64>>();
            minutes.sort_unstable();
            const CYCLE: [LightOpcode; 4] = [
                LightOpcode::On,
                LightOpcode::Toggle,
                LightOpcode::Status,
                LightOpcode::Off,
            ];
            Ok(minutes
                .into_iter()
                .enumerate()
                .map(|(k, minute)| (minute * 60, Action::Command(CYCLE[k % CYCLE.len()])))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::Usd;

    fn run(config: &ScenarioConfig) -> RunResult {
        let dir = tempfile::tempdir().unwrap();
        run_scenario(config, &dir.path().join("offchain.jsonl")).unwrap()
    }

    fn container_config(scheme: StorageScheme) -> ScenarioConfig {
        ScenarioConfig {
            scenario: ScenarioKind::RefrigeratedContainer,
            scheme,
            ..ScenarioConfig::default()
        }
    }

    fn light_config(configuration: Configuration) -> ScenarioConfig {
        ScenarioConfig {
            scenario: ScenarioKind::SmartLight,
            configuration,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn container_day_reaches_the_published_daily_cost() {
        let result = run(&container_config(StorageScheme::FullOnChain));
        assert_eq!(result.cost_report.messages_per_day, 1440);
        assert_eq!(result.cost_report.gas_per_day, 1440 * 52_132);
        // 75,070,080 gas at 1 gwei and $168/ETH.
        assert_eq!(
            result.cost_report.usd_per_day,
            Usd::from_nano(12_611_773_440)
        );
        assert_eq!(result.cost_report.reverted_gas, 0);
    }

    #[test]
    fn container_data_anchors_wait_exactly_one_block() {
        let result = run(&container_config(StorageScheme::FullOnChain));
        let anchors = result.latency_of(LatencyKind::DataAnchor);
        assert_eq!(anchors.len(), 1440);
        assert!(anchors.iter().all(|l| l.wait() == 15));
        // Minute-aligned submissions: first at 60, last at 86400.
        assert_eq!(anchors.first().unwrap().submitted_at, 60);
        assert_eq!(anchors.last().unwrap().submitted_at, 86_400);
    }

    #[test]
    fn digest_schemes_write_payloads_off_chain() {
        let result = run(&container_config(StorageScheme::DataHashing));
        assert_eq!(result.cost_report.gas_per_day, 1440 * 72_433);
        let data_records = result
            .store_records
            .iter()
            .filter(|r| matches!(r, StoreRecord::Data { .. }))
            .count();
        assert_eq!(data_records, 1440);
        assert!(result.closed_windows.is_empty());
    }

    #[test]
    fn merkle_day_anchors_one_root() {
        let result = run(&container_config(StorageScheme::MerkleTree));
        assert_eq!(result.cost_report.messages_per_day, 1440);
        assert_eq!(result.cost_report.window_anchors_per_day, 1);
        assert_eq!(result.cost_report.gas_per_day, 72_433);
        assert_eq!(result.closed_windows.len(), 1);
        assert_eq!(result.closed_windows[0].leaves.len(), 1440);
        // Every message has a verifiable proof against the anchored root.
        let window = &result.closed_windows[0];
        let proof = result.prove(window.window_id, 719).unwrap();
        assert!(crate::anchoring::verify_digest_inclusion(
            &proof.leaf,
            &proof.siblings,
            &window.root
        ));
    }

    #[test]
    fn cbg_light_round_trip_is_two_blocks() {
        let result = run(&light_config(Configuration::Cbg));
        let trips = result.latency_of(LatencyKind::CommandRoundTrip);
        assert_eq!(trips.len(), 20);
        assert!(
            trips.iter().all(|l| l.wait() == 30),
            "all commands are minute-aligned"
        );
        assert_eq!(result.cost_report.messages_per_day, 20);
        assert_eq!(result.cost_report.gas_per_day, 20 * 52_132);
        // Command legs are carried and priced separately.
        assert_eq!(result.cost_report.command_gas_per_day, 20 * 54_751);
    }

    #[test]
    fn cgb_light_answers_instantly() {
        let result = run(&light_config(Configuration::Cgb));
        let trips = result.latency_of(LatencyKind::CommandRoundTrip);
        assert_eq!(trips.len(), 20);
        assert!(trips.iter().all(|l| l.wait() == 0));
        // Responses are still anchored, one block behind.
        let anchors = result.latency_of(LatencyKind::DataAnchor);
        assert_eq!(anchors.len(), 20);
        assert!(anchors.iter().all(|l| l.wait() == 15));
        assert_eq!(result.cost_report.command_gas_per_day, 0);
    }

    #[test]
    fn same_seed_reproduces_the_chain_different_seed_does_not() {
        let config = light_config(Configuration::Cbg);
        let a = run(&config);
        let b = run(&config);
        assert_eq!(a.chain_digest, b.chain_digest);
        assert_eq!(a.state_digest, b.state_digest);
        assert_eq!(a.latencies, b.latencies);
        let mut other = config.clone();
        other.seed = 8;
        let c = run(&other);
        assert_ne!(a.chain_digest, c.chain_digest);
    }

    #[test]
    fn wall_clock_stays_far_below_virtual_time() {
        let started = std::time::Instant::now();
        let result = run(&container_config(StorageScheme::MerkleTree));
        let elapsed = started.elapsed();
        assert!(result.blocks.last().unwrap().timestamp >= 86_400);
        assert!(
            elapsed < std::time::Duration::from_secs(10),
            "one virtual day took {elapsed:?}"
        );
    }

    #[test]
    fn short_runs_and_overrides_work() {
        let config = ScenarioConfig {
            scenario: ScenarioKind::RefrigeratedContainer,
            scheme: StorageScheme::MerkleTree,
            duration_virtual: 3_600,
            messages_per_day: Some(60),
            ..ScenarioConfig::default()
        };
        let result = run(&config);
        assert_eq!(result.cost_report.messages_per_day, 60);
        assert_eq!(result.closed_windows.len(), 1);
        assert_eq!(result.closed_windows[0].leaves.len(), 60);
    }

    #[test]
    fn config_file_round_trips_and_rejects_unknown_fields() {
        let config = ScenarioConfig::default();
        let json = serde_json::to_string_pretty(&config).unwrap();
        assert!(json.contains("\"durationVirtual\""));
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);

        let partial: ScenarioConfig =
            serde_json::from_str(r#"{"scenario":"smartLight","seed":42}"#).unwrap();
        assert_eq!(partial.scenario, ScenarioKind::SmartLight);
        assert_eq!(partial.seed, 42);
        assert_eq!(partial.block_interval, 15);

        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"scenaro":"smartLight"}"#).is_err());
    }

    #[test]
    fn impossible_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("offchain.jsonl");
        let mut config = ScenarioConfig {
            scenario: ScenarioKind::SmartLight,
            messages_per_day: Some(10_000),
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            run_scenario(&config, &store),
            Err(HarnessError::BadConfig(_))
        ));
        config.messages_per_day = Some(0);
        assert!(matches!(
            run_scenario(&config, &store),
            Err(HarnessError::BadConfig(_))
        ));
        config.messages_per_day = None;
        config.block_interval = 0;
        assert!(matches!(
            run_scenario(&config, &store),
            Err(HarnessError::BadConfig(_))
        ));
    }
}

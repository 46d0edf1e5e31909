//! Deterministic desk-scale simulation of an IoT fleet anchored to a
//! gas-metered blockchain.
//!
//! The crate models the full pipeline: simulated devices emit fixed 24-byte
//! frames, a gateway authenticates them and anchors their data through one of
//! three storage schemes (full payload on chain, per-message digests, or
//! batched Merkle roots), and a single-node ledger with 15-second blocks
//! meters gas and delivers contract events. An economics layer converts
//! metered gas into dollar costs, and a scenario harness drives whole
//! virtual days through the stack on a virtual clock, producing replayable
//! artifacts.
//!
//! Everything is deterministic: same configuration and seed, same chain
//! bytes, same reports.
//!
//! Entry points:
//! - [`harness::run_scenario`] runs a configured scenario end to end.
//! - [`ledger::Ledger`] is the simulated chain, usable on its own.
//! - [`anchoring::Anchorer`] implements the three storage schemes.
//! - [`economics::build_cost_report`] prices a finished run.

pub mod anchoring;
pub mod codec;
pub mod contract;
pub mod devices;
pub mod economics;
pub mod gateway;
pub mod harness;
pub mod ledger;
pub mod types;

pub use anchoring::{
    Anchorer, ClosedWindow, InclusionProof, MerkleTree, OffchainStore, StorageScheme, StoreRecord,
};
pub use contract::{ContractCall, ContractState};
pub use economics::{CostReport, GasSchedule, PriceContext, Usd};
pub use gateway::{Configuration, Gateway, GatewayConfig};
pub use harness::{run_scenario, RunResult, ScenarioConfig, ScenarioKind};
pub use ledger::{Block, Event, LatencyModel, Ledger, Transaction, TxReceipt, TxStatus};
pub use types::{Address, DeviceId, Digest32};

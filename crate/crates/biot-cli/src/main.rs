//! `biot`: operator front end for the simulated device-to-chain pipeline.
//!
//! A ledger directory managed by `deploy` and `register` holds two files:
//! `ledger.bin` (the block records) and `meta.json` (admin address, metering
//! scheme, gas schedule, registrations). `run-scenario` drives a full
//! configured run into an artifact directory, `report` re-emits a stored
//! run's report, and `verify-proof` checks an exported inclusion proof
//! against a root recovered from a persisted ledger.
//!
//! Exit codes: 0 success; 1 runtime failure (reverted transaction, broken
//! chain file, I/O); 2 malformed input (bad flags, unparseable config or
//! proof). `verify-proof` additionally uses 3 for a root that is not on the
//! ledger and 4 for a proof that does not verify.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use biot_core::anchoring::{verify_digest_inclusion, InclusionProof, StorageScheme};
use biot_core::contract::{ContractCall, FN_SEND_RESPONSE_FROM_DEVICE};
use biot_core::economics::{EconomicsError, GasSchedule};
use biot_core::harness::artifacts::write_run_artifacts;
use biot_core::harness::report::{render_report, ReportFormat};
use biot_core::harness::{run_scenario, HarnessError, ScenarioConfig};
use biot_core::ledger::persist::{load_chain, replay, save_chain};
use biot_core::ledger::{Ledger, TxReceipt, TxStatus};
use biot_core::types::{Address, DeviceId, Digest32};

const META_FILE: &str = "meta.json";
const LEDGER_FILE: &str = "ledger.bin";

#[derive(Parser)]
#[command(name = "biot", version, about = "Simulated IoT-to-blockchain pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a ledger directory and mine the contract deployment.
    Deploy(DeployArgs),
    /// Register a gateway or a device on an existing ledger directory.
    #[command(subcommand)]
    Register(RegisterCmd),
    /// Run a configured scenario and write its artifacts.
    RunScenario(RunScenarioArgs),
    /// Re-emit the report of a completed run directory.
    Report(ReportArgs),
    /// Verify an exported inclusion proof against a persisted ledger.
    VerifyProof(VerifyProofArgs),
}

#[derive(Args)]
struct DeployArgs {
    /// Ledger directory to create.
    #[arg(long)]
    dir: PathBuf,
    /// Admin account: 40 hex digits (optional 0x) or a label to derive from.
    #[arg(long, default_value = "admin")]
    admin: String,
    /// Metering scheme the chain applies to device data.
    #[arg(long, default_value = "fullOnChain")]
    scheme: StorageScheme,
    /// JSON file overriding the built-in gas schedule.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RegisterCmd {
    /// Register a gateway address (admin only).
    Gateway(RegisterGatewayArgs),
    /// Bind a device to a registered gateway (admin only).
    Device(RegisterDeviceArgs),
}

#[derive(Args)]
struct RegisterGatewayArgs {
    /// Ledger directory created by `deploy`.
    #[arg(long)]
    dir: PathBuf,
    /// Gateway account: hex or label.
    #[arg(long)]
    address: String,
}

#[derive(Args)]
struct RegisterDeviceArgs {
    /// Ledger directory created by `deploy`.
    #[arg(long)]
    dir: PathBuf,
    /// Device identifier: 32 hex digits or a label to derive from.
    #[arg(long)]
    id: String,
    /// Owning gateway: hex or label.
    #[arg(long)]
    gateway: String,
}

#[derive(Args)]
struct RunScenarioArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory the run artifacts are written into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory written by `run-scenario`.
    #[arg(long)]
    run: PathBuf,
    /// table, json, or csv.
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct VerifyProofArgs {
    /// Persisted ledger file the window root was anchored on.
    #[arg(long)]
    ledger: PathBuf,
    /// Proof JSON exported by a run.
    #[arg(long)]
    proof: PathBuf,
    /// File holding the exact payload bytes the proof commits to.
    #[arg(long)]
    payload: PathBuf,
}

/// Registrations and chain parameters for a managed ledger directory.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct LedgerMeta {
    format_version: u16,
    admin: Address,
    scheme: StorageScheme,
    gas_schedule: GasSchedule,
    gateways: Vec<Address>,
    devices: Vec<DeviceBinding>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct DeviceBinding {
    device_id: DeviceId,
    gateway: Address,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Deploy(args) => cmd_deploy(args),
        Command::Register(cmd) => match cmd {
            RegisterCmd::Gateway(args) => cmd_register_gateway(args),
            RegisterCmd::Device(args) => cmd_register_device(args),
        },
        Command::RunScenario(args) => cmd_run_scenario(args),
        Command::Report(args) => cmd_report(args),
        Command::VerifyProof(args) => return cmd_verify_proof(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_code(&err))
        }
    }
}

/// Rejected user input (a config or schedule file that does not parse or
/// validate) exits 2; every other failure is a runtime error and exits 1.
fn error_code(err: &anyhow::Error) -> u8 {
    if let Some(HarnessError::Config { .. } | HarnessError::BadConfig(_)) =
        err.downcast_ref::<HarnessError>()
    {
        return 2;
    }
    if let Some(EconomicsError::Parse(_) | EconomicsError::BadSchedule(_)) =
        err.downcast_ref::<EconomicsError>()
    {
        return 2;
    }
    1
}

/// Accepts either a hex-encoded value or an arbitrary label to derive one
/// from, so scripts can say `--address gw-1` instead of pasting digests.
fn parse_address(text: &str) -> Address {
    text.parse().unwrap_or_else(|_| Address::derive(text))
}

fn parse_device_id(text: &str) -> DeviceId {
    text.parse().unwrap_or_else(|_| DeviceId::derive(text))
}

fn expect_included(receipt: &TxReceipt, what: &str) -> anyhow::Result<()> {
    match receipt.status {
        TxStatus::Included => Ok(()),
        _ => bail!(
            "{what} reverted: {}",
            receipt.error.as_deref().unwrap_or("no reason recorded")
        ),
    }
}

fn load_meta(dir: &Path) -> anyhow::Result<LedgerMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn store_meta(dir: &Path, meta: &LedgerMeta) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

/// Reopens a managed ledger directory by replaying its chain.
fn reopen(dir: &Path, meta: &LedgerMeta) -> anyhow::Result<Ledger> {
    let blocks = load_chain(&dir.join(LEDGER_FILE))
        .with_context(|| format!("loading {}", dir.join(LEDGER_FILE).display()))?;
    let ledger = replay(&blocks, meta.gas_schedule.clone(), meta.scheme)
        .context("replaying the recorded chain")?;
    Ok(ledger)
}

fn persist(dir: &Path, ledger: &Ledger) -> anyhow::Result<()> {
    save_chain(&dir.join(LEDGER_FILE), &ledger.blocks_snapshot())?;
    Ok(())
}

fn cmd_deploy(args: DeployArgs) -> anyhow::Result<()> {
    let ledger_path = args.dir.join(LEDGER_FILE);
    if ledger_path.exists() {
        bail!(
            "{} already exists; refusing to overwrite",
            ledger_path.display()
        );
    }
    let schedule = match &args.schedule {
        Some(path) => {
            GasSchedule::load(path).with_context(|| format!("gas schedule {}", path.display()))?
        }
        None => GasSchedule::default(),
    };
    let admin = parse_address(&args.admin);

    fs::create_dir_all(&args.dir)?;
    let ledger = Ledger::new(schedule.clone(), Default::default(), args.scheme);
    ledger.create_account(admin);
    let handle = ledger.submit(admin, &ContractCall::Deploy, 0)?;
    let interval = ledger.latency_model().block_interval;
    ledger.produce_block(interval)?;
    let receipt = handle.expect_resolved();
    expect_included(receipt, "deployment")?;

    persist(&args.dir, &ledger)?;
    store_meta(
        &args.dir,
        &LedgerMeta {
            format_version: 1,
            admin,
            scheme: args.scheme,
            gas_schedule: schedule,
            gateways: Vec::new(),
            devices: Vec::new(),
        },
    )?;
    let (index, timestamp, digest) = ledger.head();
    println!("deployed contract as admin {admin}");
    println!("gas used {}", receipt.gas_used);
    println!("head block {index} at {timestamp}s, digest {digest}");
    println!("ledger directory {}", args.dir.display());
    Ok(())
}

/// Submits one call from the admin and mines it into the next block.
fn admin_call(
    ledger: &Ledger,
    meta: &LedgerMeta,
    call: &ContractCall,
) -> anyhow::Result<TxReceipt> {
    let (_, head_ts, _) = ledger.head();
    let handle = ledger.submit(meta.admin, call, head_ts)?;
    ledger.produce_block(head_ts + ledger.latency_model().block_interval)?;
    Ok(handle.expect_resolved().clone())
}

fn cmd_register_gateway(args: RegisterGatewayArgs) -> anyhow::Result<()> {
    let mut meta = load_meta(&args.dir)?;
    let ledger = reopen(&args.dir, &meta)?;
    let gateway = parse_address(&args.address);
    let receipt = admin_call(&ledger, &meta, &ContractCall::RegisterGateway { gateway })?;
    expect_included(&receipt, "registerGateway")?;
    persist(&args.dir, &ledger)?;
    if !meta.gateways.contains(&gateway) {
        meta.gateways.push(gateway);
        store_meta(&args.dir, &meta)?;
    }
    println!("registered gateway {gateway}");
    println!("gas used {}", receipt.gas_used);
    Ok(())
}

fn cmd_register_device(args: RegisterDeviceArgs) -> anyhow::Result<()> {
    let mut meta = load_meta(&args.dir)?;
    let ledger = reopen(&args.dir, &meta)?;
    let device = parse_device_id(&args.id);
    let gateway = parse_address(&args.gateway);
    let receipt = admin_call(
        &ledger,
        &meta,
        &ContractCall::RegisterDevice { device, gateway },
    )?;
    expect_included(&receipt, "registerDevice")?;
    persist(&args.dir, &ledger)?;
    if !meta.devices.iter().any(|d| d.device_id == device) {
        meta.devices.push(DeviceBinding {
            device_id: device,
            gateway,
        });
        store_meta(&args.dir, &meta)?;
    }
    println!("registered device {device} under gateway {gateway}");
    println!("gas used {}", receipt.gas_used);
    Ok(())
}

fn cmd_run_scenario(args: RunScenarioArgs) -> anyhow::Result<()> {
    let config = ScenarioConfig::load(&args.config)?;
    fs::create_dir_all(&args.out)?;
    let result = run_scenario(&config, &args.out.join("offchain.jsonl"))?;
    let written = write_run_artifacts(&args.out, &result)?;
    print!("{}", render_report(&result, ReportFormat::Table));
    println!();
    println!(
        "{} artifacts written to {}",
        written.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let file = match args.format {
        ReportFormat::Table => "report.txt",
        ReportFormat::Json => "report.json",
        ReportFormat::Csv => "latencies.csv",
    };
    let path = args.run.join(file);
    let text = fs::read_to_string(&path).with_context(|| {
        format!(
            "reading {}; is {} a run directory written by run-scenario?",
            path.display(),
            args.run.display()
        )
    })?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VerifyStatus {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    root: Option<Digest32>,
}

fn verify_status(status: &'static str, reason: Option<String>, code: u8) -> ExitCode {
    let line = VerifyStatus {
        status,
        reason,
        window_id: None,
        leaf_index: None,
        root: None,
    };
    println!(
        "{}",
        serde_json::to_string(&line).expect("status serializes")
    );
    ExitCode::from(code)
}

/// Window roots are the 32-byte `sendResponseFromDevice` payloads, in block
/// order; window ids count them from 1. Non-root device responses are never
/// 32 bytes in stored runs (device data sections are 8 bytes), except under
/// dataHashing where every response is a digest; verifying a proof against a
/// dataHashing ledger therefore fails closed at the root comparison.
fn find_window_root(blocks: &[biot_core::ledger::Block], window_id: u64) -> Option<Digest32> {
    let mut seen = 0u64;
    for block in blocks {
        for tx in &block.transactions {
            if tx.status != TxStatus::Included || tx.function != FN_SEND_RESPONSE_FROM_DEVICE {
                continue;
            }
            let Ok(ContractCall::SendResponseFromDevice { message, .. }) =
                ContractCall::decode(&tx.function, &tx.args)
            else {
                continue;
            };
            if message.len() != 32 {
                continue;
            }
            seen += 1;
            if seen == window_id {
                let mut digest = [0u8; 32];
                digest.copy_from_slice(&message);
                return Some(Digest32::from(digest));
            }
        }
    }
    None
}

fn cmd_verify_proof(args: VerifyProofArgs) -> ExitCode {
    // A proof file is one proof object or a window's exported array of them;
    // arrays are narrowed to the proof whose leaf matches the payload.
    let value: serde_json::Value = match fs::read_to_string(&args.proof) {
        Ok(text) => match serde_json::from_str(&text) {
            Ok(value) => value,
            Err(e) => return verify_status("malformedProof", Some(e.to_string()), 2),
        },
        Err(e) => {
            return verify_status(
                "error",
                Some(format!("reading {}: {e}", args.proof.display())),
                1,
            )
        }
    };
    let candidates: Vec<InclusionProof> = if value.is_array() {
        match serde_json::from_value(value) {
            Ok(proofs) => proofs,
            Err(e) => return verify_status("malformedProof", Some(e.to_string()), 2),
        }
    } else {
        match serde_json::from_value(value) {
            Ok(proof) => vec![proof],
            Err(e) => return verify_status("malformedProof", Some(e.to_string()), 2),
        }
    };
    if candidates.is_empty() {
        return verify_status(
            "malformedProof",
            Some("proof file holds no proofs".into()),
            2,
        );
    }
    let payload = match fs::read(&args.payload) {
        Ok(bytes) => bytes,
        Err(e) => {
            return verify_status(
                "error",
                Some(format!("reading {}: {e}", args.payload.display())),
                1,
            )
        }
    };

    let leaf = biot_core::anchoring::leaf_digest(&payload);
    let Some(proof) = candidates.iter().find(|p| p.leaf == leaf) else {
        let reason = if candidates.len() == 1 {
            "payload does not match the proof's leaf digest"
        } else {
            "payload matches no proof leaf in the file"
        };
        return verify_status("verifyFailed", Some(reason.into()), 4);
    };

    let blocks = match load_chain(&args.ledger) {
        Ok(blocks) => blocks,
        Err(e) => {
            return verify_status(
                "error",
                Some(format!("loading {}: {e}", args.ledger.display())),
                1,
            )
        }
    };
    let Some(root) = find_window_root(&blocks, proof.window_id) else {
        return verify_status(
            "rootNotFound",
            Some(format!("window {} has no anchored root", proof.window_id)),
            3,
        );
    };
    if !verify_digest_inclusion(&leaf, &proof.siblings, &root) {
        return verify_status(
            "verifyFailed",
            Some("proof path does not reach the anchored root".into()),
            4,
        );
    }

    let line = VerifyStatus {
        status: "ok",
        reason: None,
        window_id: Some(proof.window_id),
        leaf_index: Some(proof.leaf_index),
        root: Some(root),
    };
    println!(
        "{}",
        serde_json::to_string(&line).expect("status serializes")
    );
    ExitCode::SUCCESS
}

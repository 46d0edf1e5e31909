//! Exports one finished run as a directory of inspectable files.
//!
//! ```text
//! <dir>/
//!   ledger.bin        append-only block records (binary, replayable)
//!   ledger.json       the same chain as JSON
//!   offchain.jsonl    off-chain store, one record per line
//!   events.jsonl      contract events, one per line
//!   gateway_log.jsonl gateway activity, one entry per line
//!   windows.json      closed batching windows with roots and leaf digests
//!   proofs/           per-window inclusion proofs (capped)
//!   traces.csv        every frame through the gateway
//!   telemetry.csv     decoded sensor readings (container runs)
//!   latencies.csv     one row per latency record
//!   report.txt        human-readable summary
//!   report.json       machine-readable summary
//!   config.json       the exact configuration that produced the run
//! ```
//!
//! Every file is a pure function of the run result, so re-exporting the
//! same run writes byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::anchoring::InclusionProof;
use crate::devices::TelemetryFrame;
use crate::harness::report::{render_report, summarize, ReportFormat};
use crate::harness::{FrameDirection, HarnessError, RunResult, ScenarioKind};
use crate::ledger::persist;

/// Proof export stops once this many leaves have been covered; a full day
/// of minute telemetry fits, unbounded volumes do not balloon the export.
pub const PROOF_EXPORT_LEAF_CAP: usize = 2_000;

pub fn write_run_artifacts(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let ledger_bin = dir.join("ledger.bin");
    persist::save_chain(&ledger_bin, &result.blocks)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    written.push(ledger_bin);

    #[derive(Serialize)]
    #[serde(rename_all = "camelCase")]
    struct LedgerJson<'a> {
        format_version: u16,
        blocks: &'a [crate::ledger::Block],
    }
    written.push(write_json(
        dir.join("ledger.json"),
        &LedgerJson {
            format_version: persist::LEDGER_FORMAT_VERSION,
            blocks: &result.blocks,
        },
    )?);

    written.push(write_jsonl(
        dir.join("offchain.jsonl"),
        &result.store_records,
    )?);
    written.push(write_jsonl(dir.join("events.jsonl"), &result.events)?);
    written.push(write_jsonl(
        dir.join("gateway_log.jsonl"),
        &result.gateway_log,
    )?);
    written.push(write_json(
        dir.join("windows.json"),
        &result.closed_windows,
    )?);

    let proofs_dir = dir.join("proofs");
    fs::create_dir_all(&proofs_dir)?;
    let mut exported_leaves = 0usize;
    for window in &result.closed_windows {
        if exported_leaves + window.leaves.len() > PROOF_EXPORT_LEAF_CAP {
            break;
        }
        exported_leaves += window.leaves.len();
        let proofs: Vec<InclusionProof> = (0..window.leaves.len())
            .map(|i| {
                result
                    .prove(window.window_id, i)
                    .expect("leaf index within window")
            })
            .collect();
        written.push(write_json(
            proofs_dir.join(format!("window-{}.json", window.window_id)),
            &proofs,
        )?);
    }

    let mut traces = String::from("at,deviceId,direction,frameHex\n");
    for trace in &result.frames {
        let direction = match trace.direction {
            FrameDirection::DeviceToGateway => "deviceToGateway",
            FrameDirection::GatewayToDevice => "gatewayToDevice",
        };
        traces.push_str(&format!(
            "{},{},{},{}\n",
            trace.at,
            trace.device_id,
            direction,
            hex::encode(&trace.frame)
        ));
    }
    written.push(write_text(dir.join("traces.csv"), &traces)?);

    if result.config.scenario == ScenarioKind::RefrigeratedContainer {
        let mut telemetry = String::from("at,timestamp,temperatureCenti,sequence\n");
        for trace in &result.frames {
            if trace.direction != FrameDirection::DeviceToGateway {
                continue;
            }
            if let Ok(frame) = TelemetryFrame::decode(&trace.frame) {
                telemetry.push_str(&format!(
                    "{},{},{},{}\n",
                    trace.at, frame.timestamp, frame.temperature_centi, frame.sequence
                ));
            }
        }
        written.push(write_text(dir.join("telemetry.csv"), &telemetry)?);
    }

    written.push(write_text(
        dir.join("latencies.csv"),
        &render_report(result, ReportFormat::Csv),
    )?);
    written.push(write_text(
        dir.join("report.txt"),
        &render_report(result, ReportFormat::Table),
    )?);
    written.push(write_json(dir.join("report.json"), &summarize(result))?);
    written.push(write_json(dir.join("config.json"), &result.config)?);

    Ok(written)
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<PathBuf, HarnessError> {
    let mut out = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(path)
}

fn write_jsonl<T: Serialize>(path: PathBuf, records: &[T]) -> Result<PathBuf, HarnessError> {
    let mut out = BufWriter::new(File::create(&path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(path)
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, text)?;
    Ok(path)
}

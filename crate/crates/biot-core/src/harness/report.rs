//! Run summaries in human, JSON, and CSV form.
//!
//! The table targets a terminal reader; JSON is the machine-readable
//! summary; CSV is one row per latency record for spreadsheet analysis.
//! All three are pure functions of the run result, so a rerun with the same
//! seed renders byte-identical reports.

use serde::{Deserialize, Serialize};

use crate::anchoring::StorageScheme;
use crate::economics::CostReport;
use crate::gateway::Configuration;
use crate::harness::{LatencyKind, RunResult, ScenarioKind};
use crate::ledger::TxStatus;
use crate::types::Digest32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyStats {
    pub kind: LatencyKind,
    pub count: u64,
    pub min_seconds: u64,
    pub max_seconds: u64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub configuration: Configuration,
    pub scheme: StorageScheme,
    pub seed: u64,
    pub duration_virtual: u64,
    pub block_interval: u64,
    pub blocks: u64,
    pub transactions_included: u64,
    pub transactions_reverted: u64,
    pub events: u64,
    pub chain_digest: Digest32,
    pub state_digest: Digest32,
    pub cost: CostReport,
    pub latencies: Vec<LatencyStats>,
}

pub fn summarize(result: &RunResult) -> RunSummary {
    let mut included = 0u64;
    let mut reverted = 0u64;
    for block in &result.blocks {
        for tx in &block.transactions {
            match tx.status {
                TxStatus::Included => included += 1,
                TxStatus::Reverted => reverted += 1,
                TxStatus::Pending => {}
            }
        }
    }
    let latencies = LatencyKind::ALL
        .iter()
        .filter_map(|&kind| {
            let waits: Vec<u64> = result
                .latencies
                .iter()
                .filter(|l| l.kind == kind)
                .map(|l| l.wait())
                .collect();
            if waits.is_empty() {
                return None;
            }
            let count = waits.len() as u64;
            Some(LatencyStats {
                kind,
                count,
                min_seconds: *waits.iter().min().unwrap(),
                max_seconds: *waits.iter().max().unwrap(),
                mean_seconds: waits.iter().sum::<u64>() as f64 / count as f64,
            })
        })
        .collect();
    RunSummary {
        scenario: result.config.scenario,
        configuration: result.config.configuration,
        scheme: result.config.scheme,
        seed: result.config.seed,
        duration_virtual: result.config.duration_virtual,
        block_interval: result.config.block_interval,
        blocks: result.blocks.len() as u64,
        transactions_included: included,
        transactions_reverted: reverted,
        events: result.events.len() as u64,
        chain_digest: result.chain_digest,
        state_digest: result.state_digest,
        cost: result.cost_report.clone(),
        latencies,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format {other:?}; expected table, json, or csv"
            )),
        }
    }
}

pub fn render_report(result: &RunResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(&summarize(result)),
        ReportFormat::Json => {
            let mut json =
                serde_json::to_string_pretty(&summarize(result)).expect("summary serializes");
            json.push('\n');
            json
        }
        ReportFormat::Csv => render_csv(result),
    }
}

fn render_table(summary: &RunSummary) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let mut kv = |key: &str, value: String| {
        let _ = writeln!(out, "{key:<22}{value}");
    };
    kv("scenario", summary.scenario.to_string());
    kv("configuration", summary.configuration.to_string());
    kv("scheme", summary.scheme.to_string());
    kv("seed", summary.seed.to_string());
    kv(
        "virtual time",
        format!(
            "{} s in {} blocks ({} s interval)",
            summary.duration_virtual, summary.blocks, summary.block_interval
        ),
    );
    kv(
        "transactions",
        format!(
            "{} included, {} reverted",
            summary.transactions_included, summary.transactions_reverted
        ),
    );
    kv("events", summary.events.to_string());
    kv("chain digest", summary.chain_digest.to_string());
    kv("state digest", summary.state_digest.to_string());
    out.push('\n');

    let cost = &summary.cost;
    out.push_str(&format!("cost ({} rounding)\n", cost.rounding.as_str()));
    let mut cost_kv = |key: &str, value: String| {
        let _ = writeln!(out, "  {key:<24}{value}");
    };
    cost_kv("messages per day", cost.messages_per_day.to_string());
    if cost.window_anchors_per_day > 0 {
        cost_kv(
            "window anchors per day",
            cost.window_anchors_per_day.to_string(),
        );
    }
    cost_kv("data gas per day", cost.gas_per_day.to_string());
    cost_kv("data usd per day", format!("${}", cost.usd_per_day));
    cost_kv("per message usd", format!("${}", cost.per_message_usd));
    if cost.command_gas_per_day > 0 {
        cost_kv("command gas per day", cost.command_gas_per_day.to_string());
        cost_kv(
            "command usd per day",
            format!("${}", cost.command_usd_per_day),
        );
    }
    cost_kv("setup gas", cost.setup_gas.to_string());
    cost_kv("setup usd", format!("${}", cost.setup_usd));
    if cost.reverted_gas > 0 {
        cost_kv("reverted gas", cost.reverted_gas.to_string());
    }
    cost_kv("total gas", cost.total_gas.to_string());
    for note in &cost.notes {
        let _ = writeln!(out, "  note: {note}");
    }
    out.push('\n');

    out.push_str("latency seconds by kind\n");
    let _ = writeln!(
        out,
        "  {:<18}{:>7}{:>6}{:>6}{:>8}",
        "kind", "count", "min", "max", "mean"
    );
    for stats in &summary.latencies {
        let _ = writeln!(
            out,
            "  {:<18}{:>7}{:>6}{:>6}{:>8.2}",
            stats.kind.as_str(),
            stats.count,
            stats.min_seconds,
            stats.max_seconds,
            stats.mean_seconds
        );
    }
    out
}

fn render_csv(result: &RunResult) -> String {
    let mut out = String::from("index,kind,submittedAt,resolvedAt,waitSeconds\n");
    for record in &result.latencies {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            record.index,
            record.kind.as_str(),
            record.submitted_at,
            record.resolved_at,
            record.wait()
        ));
    }
    out
}

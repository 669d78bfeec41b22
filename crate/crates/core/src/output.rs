//! Result persistence: one CSV of regret curves per policy plus a single
//! summary JSON per run.
//!
//! Output is fully deterministic for a given command line; nothing
//! time-dependent is written, so identical invocations produce byte-identical
//! files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::harness::{BatchSummary, BoxplotStats, ExperimentConfig, RegretTrace};

/// One policy's (or aggregator's) results inside the summary file.
#[derive(Debug, Serialize)]
pub struct PolicyReport {
    pub policy: String,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
    pub mean_optimal_arm_pulls: f64,
    pub boxplot: BoxplotStats,
    pub final_regrets: Vec<f64>,
    pub realized_final_regrets: Vec<f64>,
    pub optimal_arm_pulls: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committed_algorithm: Option<Vec<Option<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committed_counts: Option<Vec<(String, u32)>>,
    pub total_draws: Vec<u64>,
    pub total_retries: Vec<u64>,
    pub total_comparisons: Vec<u64>,
    /// Per-slot counters from the first experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws_per_slot: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparisons_per_slot: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_candidate_per_slot: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief_per_slot: Option<Vec<Vec<f64>>>,
}

impl PolicyReport {
    pub fn new(label: &str, summary: &BatchSummary, traces: &[RegretTrace]) -> Self {
        let first = traces.first();
        PolicyReport {
            policy: label.to_string(),
            mean_final_regret: summary.mean_final_regret,
            std_final_regret: summary.std_final_regret,
            mean_optimal_arm_pulls: summary.mean_optimal_arm_pulls,
            boxplot: summary.boxplot.clone(),
            final_regrets: summary.final_regrets.clone(),
            realized_final_regrets: traces.iter().map(|t| t.realized_regret).collect(),
            optimal_arm_pulls: traces.iter().map(|t| t.optimal_arm_pulls).collect(),
            committed_algorithm: traces
                .iter()
                .any(|t| t.committed.is_some())
                .then(|| traces.iter().map(|t| t.committed.clone()).collect()),
            committed_counts: summary.committed_counts.clone(),
            total_draws: traces.iter().map(|t| t.draws).collect(),
            total_retries: traces.iter().map(|t| t.retries).collect(),
            total_comparisons: traces.iter().map(|t| t.comparisons).collect(),
            draws_per_slot: first.and_then(|t| t.draws_per_slot.clone()),
            comparisons_per_slot: first.and_then(|t| t.comparisons_per_slot.clone()),
            active_candidate_per_slot: first.and_then(|t| t.active_candidate_per_slot.clone()),
            belief_per_slot: first.and_then(|t| t.belief_per_slot.clone()),
        }
    }
}

/// The summary JSON written once per invocation.
#[derive(Debug, Serialize)]
pub struct SummaryFile {
    pub base_seed: u32,
    pub config: ExperimentConfig,
    pub results: Vec<PolicyReport>,
}

/// `slot,mean_regret,std_regret` rows for one policy's averaged curve.
pub fn write_regret_csv(path: &Path, summary: &BatchSummary) -> std::io::Result<()> {
    let mut out = String::with_capacity(summary.mean_regret_per_slot.len() * 24);
    out.push_str("slot,mean_regret,std_regret\n");
    for (slot, (mean, std)) in summary
        .mean_regret_per_slot
        .iter()
        .zip(&summary.std_regret_per_slot)
        .enumerate()
    {
        out.push_str(&format!("{},{},{}\n", slot + 1, mean, std));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_summary_json(path: &Path, summary: &SummaryFile) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_atomic(path, json.as_bytes())
}

/// File-name-safe version of a policy/precision label.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
    }
    fs::rename(&tmp, path)
}

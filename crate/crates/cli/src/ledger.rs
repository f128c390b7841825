//! On-disk run ledgers: `trace.csv`, `result.json` and `bound.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use momsync_core::engine::{Algorithm, Engine, RunConfig, RunResult, FORMAT_VERSION};
use momsync_core::momentum::{MomentumOption, WorkerState};
use momsync_core::theory::{BoundInputs, BoundReport, GateReport};

use crate::error::CliError;

pub const TRACE_FILE: &str = "trace.csv";
pub const RESULT_FILE: &str = "result.json";
pub const BOUND_FILE: &str = "bound.json";

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(value).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format_version: u32,
    pub config_hash: String,
    pub problem_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub option: MomentumOption,
    pub num_workers: usize,
    pub gamma: f64,
    pub beta: f64,
    pub interval: u64,
    pub horizon: u64,
    pub status: RunStatus,
    pub divergence_iteration: Option<u64>,
    pub divergence_reason: Option<String>,
    pub avg_grad_norm_sq: Option<f64>,
    pub comm_rounds: Option<u64>,
    pub random_iterate_index: Option<u64>,
    pub random_iterate: Option<Vec<f64>>,
    pub max_node_average_residual: Option<f64>,
    pub max_auxiliary_residual: Option<f64>,
    pub gate: GateReport,
    /// Absent when the gate fails (runs forced past it).
    pub bound: Option<BoundReport>,
    pub final_states: Option<Vec<WorkerState>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundDocument {
    pub format_version: u32,
    pub config_hash: String,
    pub problem_hash: String,
    pub inputs: BoundInputs,
    pub gate: GateReport,
    pub bound: Option<BoundReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Execute `cfg` and write its ledgers into `dir`. A divergence is recorded in
/// `result.json` before being returned as an error.
pub fn run_and_record(
    engine: &Engine,
    cfg: &RunConfig,
    problem_hash: &str,
    dir: &Path,
) -> Result<ResultDocument, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let config_hash = json_hash(cfg)?;
    let gate = cfg.gate_report();
    let bound = cfg.bound_report().ok();
    let bound_doc = BoundDocument {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.clone(),
        problem_hash: problem_hash.to_string(),
        inputs: cfg.bound_inputs()?,
        gate: gate.clone(),
        bound: bound.clone(),
    };
    write_json(&dir.join(BOUND_FILE), &bound_doc)?;

    let mut doc = ResultDocument {
        format_version: FORMAT_VERSION,
        config_hash,
        problem_hash: problem_hash.to_string(),
        seed: cfg.seed,
        algorithm: cfg.algorithm,
        option: cfg.option,
        num_workers: cfg.problem.num_workers(),
        gamma: cfg.hp.gamma,
        beta: cfg.hp.beta,
        interval: cfg.hp.interval,
        horizon: cfg.hp.horizon,
        status: RunStatus::Completed,
        divergence_iteration: None,
        divergence_reason: None,
        avg_grad_norm_sq: None,
        comm_rounds: None,
        random_iterate_index: None,
        random_iterate: None,
        max_node_average_residual: None,
        max_auxiliary_residual: None,
        gate,
        bound,
        final_states: None,
    };
    match engine.run(cfg) {
        Ok(result) => {
            write_trace(&dir.join(TRACE_FILE), &result, &doc)?;
            fill_result(&mut doc, result);
            write_json(&dir.join(RESULT_FILE), &doc)?;
            Ok(doc)
        }
        Err(momsync_core::Error::Diverged { iteration, reason }) => {
            doc.status = RunStatus::Diverged;
            doc.divergence_iteration = Some(iteration);
            doc.divergence_reason = Some(reason.clone());
            // A stale trace from an earlier run must not pass for this one.
            let _ = fs::remove_file(dir.join(TRACE_FILE));
            write_json(&dir.join(RESULT_FILE), &doc)?;
            Err(CliError::Divergence { iteration, reason })
        }
        Err(e) => Err(e.into()),
    }
}

fn fill_result(doc: &mut ResultDocument, r: RunResult) {
    doc.avg_grad_norm_sq = Some(r.avg_grad_norm_sq);
    doc.comm_rounds = Some(r.comm_rounds);
    doc.random_iterate_index = Some(r.random_iterate_index);
    doc.random_iterate = Some(r.random_iterate);
    doc.max_node_average_residual = r.max_node_average_residual;
    doc.max_auxiliary_residual = r.max_auxiliary_residual;
    doc.final_states = Some(r.final_states);
}

pub fn trace_comment(doc: &ResultDocument) -> String {
    format!(
        "momsync trace format={} config={} problem={} seed={}",
        FORMAT_VERSION, doc.config_hash, doc.problem_hash, doc.seed
    )
}

fn write_trace(path: &Path, result: &RunResult, doc: &ResultDocument) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    result
        .trace
        .write_csv(BufWriter::new(file), Some(&trace_comment(doc)))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

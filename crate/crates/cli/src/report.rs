//! Plot-ready CSV series assembled from a directory of run ledgers.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use momsync_core::engine::{Trace, FORMAT_VERSION};

use crate::error::CliError;
use crate::ledger::{ResultDocument, RunStatus, RESULT_FILE, TRACE_FILE};

pub const ITERATION_SERIES: &str = "grad_norm_vs_iteration.csv";
pub const COMM_SERIES: &str = "grad_norm_vs_comm_rounds.csv";
pub const BOUND_SERIES: &str = "bound_overlay.csv";

struct Ledger {
    series: String,
    doc: ResultDocument,
    trace: Trace,
}

fn load_ledger(root: &Path, result_path: &Path) -> Result<Option<Ledger>, String> {
    let text =
        fs::read_to_string(result_path).map_err(|e| format!("{}: {e}", result_path.display()))?;
    let doc: ResultDocument = serde_json::from_str(&text)
        .map_err(|e| format!("{}: corrupt ledger: {e}", result_path.display()))?;
    if doc.status == RunStatus::Diverged {
        return Ok(None);
    }
    let dir = result_path.parent().unwrap_or(root);
    let trace_path = dir.join(TRACE_FILE);
    let file = File::open(&trace_path)
        .map_err(|e| format!("{}: missing trace: {e}", trace_path.display()))?;
    let (trace, _) = Trace::read_csv(file)
        .map_err(|e| format!("{}: corrupt trace: {e}", trace_path.display()))?;
    let series = match dir.strip_prefix(root) {
        Ok(rel) if rel.as_os_str().is_empty() => ".".to_string(),
        Ok(rel) => rel.display().to_string(),
        Err(_) => dir.display().to_string(),
    };
    Ok(Some(Ledger { series, doc, trace }))
}

/// Write the three series files into `out` (default: `<dir>/report`).
pub fn cmd_report(dir: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == RESULT_FILE)
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Io(format!(
            "no run ledgers ({RESULT_FILE}) found under {} (0 ledgers)",
            dir.display()
        )));
    }
    let mut ledgers = Vec::new();
    let mut problems = Vec::new();
    for p in &paths {
        match load_ledger(dir, p) {
            Ok(Some(l)) => ledgers.push(l),
            Ok(None) => eprintln!("skipping diverged run {}", p.display()),
            Err(msg) => problems.push(msg),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Io(format!(
            "unreadable ledgers:\n  {}",
            problems.join("\n  ")
        )));
    }
    if ledgers.is_empty() {
        return Err(CliError::Validation(
            "every ledger is a diverged run; nothing to plot".into(),
        ));
    }
    let problem_hash = ledgers[0].doc.problem_hash.clone();
    let mismatched: Vec<String> = ledgers
        .iter()
        .filter(|l| l.doc.problem_hash != problem_hash)
        .map(|l| format!("{} (problem {})", l.series, l.doc.problem_hash))
        .collect();
    if !mismatched.is_empty() {
        return Err(CliError::Validation(format!(
            "refusing to merge series with different problems: {} has problem {problem_hash}, but {}",
            ledgers[0].series,
            mismatched.join(", ")
        )));
    }

    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("report"));
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let comment = format!("# momsync report format={FORMAT_VERSION} problem={problem_hash}\n");

    let mut by_iter = csv::Writer::from_writer(Vec::new());
    by_iter.write_record([
        "series",
        "config_hash",
        "n",
        "interval",
        "t",
        "grad_norm_sq",
    ])?;
    let mut by_comm = csv::Writer::from_writer(Vec::new());
    by_comm.write_record([
        "series",
        "config_hash",
        "n",
        "interval",
        "comm_rounds",
        "grad_norm_sq",
    ])?;
    let mut bound = csv::Writer::from_writer(Vec::new());
    bound.write_record(["series", "config_hash", "n", "interval", "t", "bound_value"])?;
    for l in &ledgers {
        let d = &l.doc;
        for row in &l.trace.rows {
            by_iter.serialize((
                &l.series,
                &d.config_hash,
                d.num_workers,
                d.interval,
                row.t,
                row.grad_norm_sq,
            ))?;
            by_comm.serialize((
                &l.series,
                &d.config_hash,
                d.num_workers,
                d.interval,
                row.comm_rounds,
                row.grad_norm_sq,
            ))?;
            if let Some(b) = &d.bound {
                bound.serialize((
                    &l.series,
                    &d.config_hash,
                    d.num_workers,
                    d.interval,
                    row.t,
                    b.bound_value,
                ))?;
            }
        }
    }
    for (name, writer) in [
        (ITERATION_SERIES, by_iter),
        (COMM_SERIES, by_comm),
        (BOUND_SERIES, bound),
    ] {
        let body = writer
            .into_inner()
            .map_err(|e| CliError::Io(e.to_string()))?;
        let path = out_dir.join(name);
        let mut text = comment.clone();
        text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    println!(
        "{} series from {} ledgers written to {}",
        3,
        ledgers.len(),
        out_dir.display()
    );
    Ok(out_dir)
}

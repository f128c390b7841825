//! `validate`, `run` and `sweep`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use momsync_core::engine::{
    Engine, IntervalChoice, RunConfig, SpeedupFit, SweepOutcome, FORMAT_VERSION,
    KAPPA_ZERO_TOLERANCE,
};
use momsync_core::momentum::{HyperParams, MomentumOption};
use momsync_core::theory::{self, GateReport};

use crate::config::Experiment;
use crate::error::CliError;
use crate::ledger::{json_hash, run_and_record, ResultDocument};

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub force: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

impl Options {
    fn engine(&self) -> Result<Engine, CliError> {
        Ok(Engine::new(self.threads)?)
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn print_gate(out: &mut dyn Write, gate: &GateReport) -> Result<(), CliError> {
    writeln!(out, "gate: {}", gate.statement).map_err(io_err)?;
    for c in &gate.checks {
        writeln!(
            out,
            "  {} {}: value {} threshold {}",
            if c.ok { "PASS" } else { "FAIL" },
            c.condition,
            c.value,
            c.threshold
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Print every gate and horizon threshold; fails when any of them is violated.
pub fn cmd_validate(path: &Path, opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = Experiment::load(path)?;
    let mut failures = Vec::new();
    if exp.file.gamma.is_some() {
        let cfg = exp.run_config(opts.seed)?;
        if let Some(w) = &cfg.topology {
            writeln!(out, "topology: N = {}, rho = {}", w.n(), w.rho()).map_err(io_err)?;
        }
        let gate = cfg.gate_report();
        print_gate(out, &gate)?;
        failures.extend(gate.violations());
        if let Ok(bound) = cfg.bound_report() {
            writeln!(
                out,
                "bound: {} (terms {:?}), comm rounds {}",
                bound.bound_value, bound.term_breakdown, bound.comm_rounds_formula
            )
            .map_err(io_err)?;
        }
    }
    if exp.file.sweep.is_some() {
        let spec = exp.sweep_spec(opts.seed)?;
        for &n in &spec.worker_counts {
            let problem = spec.recipe.build(n)?;
            let l = problem.certified_l();
            let kappa_zero = problem.certified_kappa() <= KAPPA_ZERO_TOLERANCE;
            let t = spec.horizon as f64;
            let every_step_need = theory::every_step_min_horizon(n, l, spec.beta);
            let reduced_need = theory::reduced_comm_min_horizon(n, l, spec.beta);
            writeln!(
                out,
                "sweep N = {n}: gamma = {}",
                theory::rate_gamma(n, spec.horizon)
            )
            .map_err(io_err)?;
            for choice in &spec.intervals {
                let line = match choice {
                    IntervalChoice::Fixed(1) => {
                        threshold_line(t, every_step_need, "36 L^2 N/(1-beta)^2")
                    }
                    IntervalChoice::Fixed(_) => {
                        threshold_line(t, reduced_need, "(1+beta)^2 L^2 N/(1-beta)^4")
                    }
                    IntervalChoice::Max(_) => {
                        match theory::max_interval(n, spec.horizon, l, spec.beta, kappa_zero) {
                            Ok(i) => Ok(format!("max interval {i}")),
                            Err(e) => Err(e.to_string()),
                        }
                    }
                };
                match line {
                    Ok(text) => {
                        writeln!(out, "  PASS interval {choice}: {text}").map_err(io_err)?
                    }
                    Err(text) => {
                        writeln!(out, "  FAIL interval {choice}: {text}").map_err(io_err)?;
                        failures.push(format!("N = {n}, interval {choice}: {text}"));
                    }
                }
            }
        }
    }
    if failures.is_empty() {
        writeln!(out, "all gates pass").map_err(io_err)?;
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "gate violations: {}",
            failures.join("; ")
        )))
    }
}

fn threshold_line(t: f64, need: f64, formula: &str) -> Result<String, String> {
    if t >= need {
        Ok(format!("T = {t} >= {formula} = {need}"))
    } else {
        Err(format!("T = {t} below {formula} = {need}"))
    }
}

fn check_gate(cfg: &RunConfig, opts: &Options) -> Result<(), CliError> {
    let gate = cfg.gate_report();
    if gate.ok() {
        return Ok(());
    }
    let violations = gate.violations().join("; ");
    if opts.force {
        eprintln!("warning: running past violated gate (--force): {violations}");
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "gate violated: {violations} (use --force to run anyway)"
        )))
    }
}

/// Run one experiment into the output directory; with `with_baseline` the
/// cleared-momentum baseline is written to `baseline/` as well.
pub fn cmd_run(path: &Path, opts: &Options) -> Result<PathBuf, CliError> {
    let exp = Experiment::load(path)?;
    let cfg = exp.run_config(opts.seed)?;
    check_gate(&cfg, opts)?;
    let dir = exp.output_dir(opts.out.as_deref());
    let problem_hash = json_hash(&exp.file.problem)?;
    let engine = opts.engine()?;
    let doc = run_and_record(&engine, &cfg, &problem_hash, &dir)?;
    println!(
        "{}: avg_grad_norm_sq {} after {} comm rounds",
        dir.display(),
        doc.avg_grad_norm_sq.unwrap_or(f64::NAN),
        doc.comm_rounds.unwrap_or(0)
    );
    if exp.file.with_baseline && cfg.option != MomentumOption::ClearedMomentumBaseline {
        let mut baseline = cfg.clone();
        baseline.option = MomentumOption::ClearedMomentumBaseline;
        baseline.validate()?;
        let bdir = dir.join("baseline");
        let bdoc = run_and_record(&engine, &baseline, &problem_hash, &bdir)?;
        println!(
            "{}: avg_grad_norm_sq {}",
            bdir.display(),
            bdoc.avg_grad_norm_sq.unwrap_or(f64::NAN)
        );
    }
    Ok(dir)
}

#[derive(Serialize)]
struct FitDocument<'a> {
    format_version: u32,
    config_hash: &'a str,
    problem_hash: &'a str,
    horizon: u64,
    beta: f64,
    fits: Vec<FitEntry<'a>>,
}

#[derive(Serialize)]
struct FitEntry<'a> {
    #[serde(flatten)]
    fit: &'a SpeedupFit,
    /// Why the exponent is missing, when it is.
    exponent_note: Option<&'static str>,
}

/// Run the worker-count sweep and write `speedup.csv`, `speedup_fit.json` and
/// one seed-0 run directory per (N, interval).
pub fn cmd_sweep(path: &Path, opts: &Options) -> Result<(PathBuf, SweepOutcome), CliError> {
    let exp = Experiment::load(path)?;
    let spec = exp.sweep_spec(opts.seed)?;
    let engine = opts.engine()?;
    let outcome = engine.sweep_speedup(&spec)?;
    let dir = exp.output_dir(opts.out.as_deref());
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let config_hash = json_hash(&spec)?;
    let problem_hash = json_hash(&spec.recipe)?;

    let csv_path = dir.join("speedup.csv");
    let mut text = format!(
        "# momsync speedup format={FORMAT_VERSION} config={config_hash} problem={problem_hash}\n"
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "interval",
        "seed",
        "gamma",
        "avg_grad_norm_sq",
        "comm_rounds",
    ])?;
    for r in &outcome.rows {
        w.serialize((
            r.n,
            r.interval,
            r.seed,
            r.gamma,
            r.avg_grad_norm_sq,
            r.comm_rounds,
        ))?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    fs::write(&csv_path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;

    let fit_doc = FitDocument {
        format_version: FORMAT_VERSION,
        config_hash: &config_hash,
        problem_hash: &problem_hash,
        horizon: spec.horizon,
        beta: spec.beta,
        fits: outcome
            .fits
            .iter()
            .map(|fit| FitEntry {
                fit,
                exponent_note: fit
                    .exponent
                    .is_none()
                    .then_some("undefined: fewer than two worker counts"),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&fit_doc)?;
    json.push('\n');
    let fit_path = dir.join("speedup_fit.json");
    fs::write(&fit_path, json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", fit_path.display())))?;

    let mut done: Vec<(usize, u64)> = Vec::new();
    for fit in &outcome.fits {
        for (&n, &interval) in fit.worker_counts.iter().zip(&fit.intervals) {
            if done.contains(&(n, interval)) {
                continue;
            }
            done.push((n, interval));
            let cfg = RunConfig {
                algorithm: momsync_core::engine::Algorithm::ParallelRestarted,
                option: spec.algorithm_option,
                hp: HyperParams::new(
                    theory::rate_gamma(n, spec.horizon),
                    spec.beta,
                    interval,
                    spec.horizon,
                )?,
                problem: spec.recipe.build(n)?,
                topology: None,
                seed: spec.base_seed,
                x_init: spec.x_init.clone(),
                eval_every: spec.eval_every,
                check_identities: false,
            };
            let run_dir = dir.join("runs").join(format!("n{n}_i{interval}"));
            let _: ResultDocument = run_and_record(&engine, &cfg, &problem_hash, &run_dir)?;
        }
    }
    for fit in &outcome.fits {
        match fit.exponent {
            Some(e) => println!(
                "interval {}: exponent {e:.4} ± {:.4} over N = {:?}",
                fit.interval_choice,
                fit.std_error.unwrap_or(f64::NAN),
                fit.worker_counts
            ),
            None => println!(
                "interval {}: exponent undefined (single worker count)",
                fit.interval_choice
            ),
        }
    }
    Ok((dir, outcome))
}

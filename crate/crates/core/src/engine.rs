//! Simulation of parallel restarted momentum SGD and decentralized momentum SGD.
//!
//! A horizon `T` performs the update iterations `t = 1..T−1`; metrics are
//! evaluated at every `t = 0..T−1`. Each worker draws noise from its own
//! counter-based stream and every reduction runs in worker order, so results do
//! not depend on the thread count.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::momentum::{
    local_step, restart_average, restart_average_cleared, HyperParams, MomentumOption, WorkerState,
};
use crate::numerics::{
    all_finite, dispersion, fixed_order_mean, fixed_order_mean_iter, max_abs, max_abs_diff, norm,
    norm_sq, RngStream,
};
use crate::problems::{GradientTarget, ProblemRecipe, ProblemSpec};
use crate::theory::{self, BoundInputs, BoundReport, RestartedVariant};
use crate::topology::MixingMatrix;

/// Stream id reserved for drawing the random output iterate.
pub const RANDOM_ITERATE_STREAM: u64 = u64::MAX;
/// Runs abort once any local solution grows beyond this norm.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Largest tolerated residual of the node-average and auxiliary-sequence identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;
/// Version of the trace CSV and result JSON layouts.
pub const FORMAT_VERSION: u32 = 1;
/// Certified heterogeneity at or below this is treated as zero.
pub const KAPPA_ZERO_TOLERANCE: f64 = 1e-12;

pub const TRACE_HEADER: [&str; 6] = [
    "t",
    "grad_norm_sq",
    "objective",
    "consensus_x",
    "consensus_u",
    "comm_rounds",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ParallelRestarted,
    Decentralized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub option: MomentumOption,
    pub hp: HyperParams,
    pub problem: ProblemSpec,
    /// Required for [`Algorithm::Decentralized`], ignored otherwise.
    pub topology: Option<MixingMatrix>,
    pub seed: u64,
    /// Common initial point of every worker.
    pub x_init: Vec<f64>,
    /// Trace rows are kept for every multiple of this (plus the last iteration).
    pub eval_every: u64,
    pub check_identities: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        check_dim(self.problem.dimension(), self.x_init.len())?;
        if !all_finite(&self.x_init) {
            return Err(Error::invalid("x_init", "must be finite"));
        }
        if self.eval_every < 1 {
            return Err(Error::invalid("eval_every", "must be at least 1"));
        }
        if self.algorithm == Algorithm::Decentralized {
            if self.option == MomentumOption::ClearedMomentumBaseline {
                return Err(Error::Config(
                    "cleared_momentum_baseline is only defined for parallel_restarted".into(),
                ));
            }
            let w = self
                .topology
                .as_ref()
                .ok_or_else(|| Error::Config("decentralized runs need a topology".into()))?;
            if w.n() != self.problem.num_workers() {
                return Err(Error::Config(format!(
                    "topology has {} nodes but the problem has {} workers",
                    w.n(),
                    self.problem.num_workers()
                )));
            }
        }
        Ok(())
    }

    pub fn bound_inputs(&self) -> Result<BoundInputs> {
        let f0 = self.problem.objective_value(&self.x_init)?;
        Ok(BoundInputs {
            l: self.problem.certified_l(),
            sigma: self.problem.noise_sigma(),
            kappa: self.problem.certified_kappa(),
            num_workers: self.problem.num_workers(),
            f0_minus_fstar: f0 - self.problem.f_star(),
        })
    }

    /// Theoretical bound for this configuration. The cleared baseline is
    /// evaluated against the Polyak statement.
    pub fn bound_report(&self) -> Result<BoundReport> {
        let inputs = self.bound_inputs()?;
        match (self.algorithm, self.option) {
            (Algorithm::Decentralized, _) => {
                let rho = self
                    .topology
                    .as_ref()
                    .ok_or_else(|| Error::Config("decentralized runs need a topology".into()))?
                    .rho();
                theory::bound_decentralized(&self.hp, &inputs, rho)
            }
            (_, MomentumOption::Nesterov) => {
                theory::bound_polyak(&self.hp, &inputs, RestartedVariant::Nesterov)
            }
            _ => theory::bound_polyak(&self.hp, &inputs, RestartedVariant::Polyak),
        }
    }

    pub fn gate_report(&self) -> theory::GateReport {
        let l = self.problem.certified_l();
        match (self.algorithm, self.option) {
            (Algorithm::Decentralized, _) => theory::gate_decentralized(
                &self.hp,
                l,
                self.topology.as_ref().map_or(1.0, MixingMatrix::rho),
            ),
            (_, MomentumOption::Nesterov) => theory::gate_nesterov(&self.hp, l),
            _ => theory::gate_polyak(&self.hp, l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub grad_norm_sq: f64,
    pub objective: f64,
    pub consensus_x: f64,
    pub consensus_u: f64,
    pub comm_rounds: u64,
    /// Largest identity residual seen up to `t`; not part of the CSV layout.
    #[serde(skip)]
    pub identity_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Write the CSV ledger, optionally preceded by a single `# ...` comment line.
    pub fn write_csv<W: Write>(&self, out: W, comment: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a ledger written by [`Trace::write_csv`]; returns the comment line if present.
    pub fn read_csv<R: Read>(input: R) -> Result<(Trace, Option<String>)> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let (comment, body) = match text.strip_prefix("# ") {
            Some(rest) => {
                let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
                (Some(line.trim_end().to_string()), body)
            }
            None => (None, text.as_str()),
        };
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != TRACE_HEADER {
            return Err(Error::Config(format!("unexpected trace header {header:?}")));
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok((Trace { rows }, comment))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    #[serde(skip)]
    pub trace: Trace,
    /// `(1/T) Σ_{t=0}^{T−1} ‖∇f(x̄⁽ᵗ⁾)‖²`.
    pub avg_grad_norm_sq: f64,
    pub random_iterate_index: u64,
    pub random_iterate: Vec<f64>,
    pub final_states: Vec<WorkerState>,
    pub comm_rounds: u64,
    /// Present when identity checking was enabled.
    pub max_node_average_residual: Option<f64>,
    /// Present when identity checking was enabled.and the option keeps the
    /// auxiliary-sequence identity (not the cleared baseline).
    pub max_auxiliary_residual: Option<f64>,
}

/// State handed to a run observer at `t = 0` and after every iteration.
pub struct Snapshot<'a> {
    pub t: u64,
    pub states: &'a [WorkerState],
    pub x_bar: &'a [f64],
    pub u_bar: &'a [f64],
    /// Averaged stochastic gradient of the iteration that produced this state.
    pub g_bar: Option<&'a [f64]>,
}

/// Executes runs, optionally spreading per-worker local steps over a thread pool.
pub struct Engine {
    pool: Option<rayon::ThreadPool>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::sequential()
    }
}

impl Engine {
    pub fn sequential() -> Self {
        Engine { pool: None }
    }

    /// `threads == 1` runs inline; `0` uses rayon's default width.
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 1 {
            return Ok(Engine::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        Ok(Engine { pool: Some(pool) })
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<RunResult> {
        self.run_observed(cfg, |_| {})
    }

    pub fn run_observed<F>(&self, cfg: &RunConfig, mut observe: F) -> Result<RunResult>
    where
        F: FnMut(&Snapshot<'_>),
    {
        cfg.validate()?;
        let mut sim = Simulation::new(cfg)?;
        observe(&sim.snapshot(false));
        for t in 1..cfg.hp.horizon {
            self.local_phase(cfg, &mut sim, t)?;
            sim.finish_iteration(t)?;
            observe(&sim.snapshot(true));
        }
        Ok(sim.into_result())
    }

    fn local_phase(&self, cfg: &RunConfig, sim: &mut Simulation, t: u64) -> Result<()> {
        let problem = &cfg.problem;
        let work = |(i, ((state, stream), g)): (
            usize,
            ((&mut WorkerState, &mut RngStream), &mut Vec<f64>),
        )| {
            let sample = problem.sample_gradient(i, &state.x, t - 1, stream)?;
            local_step(cfg.option, state, &sample.g, &cfg.hp)?;
            *g = sample.g;
            Ok::<(), Error>(())
        };
        match &self.pool {
            Some(pool) => pool.install(|| {
                sim.states
                    .par_iter_mut()
                    .zip(sim.streams.par_iter_mut())
                    .zip(sim.grads.par_iter_mut())
                    .enumerate()
                    .try_for_each(work)
            }),
            None => sim
                .states
                .iter_mut()
                .zip(sim.streams.iter_mut())
                .zip(sim.grads.iter_mut())
                .enumerate()
                .try_for_each(work),
        }
    }

    /// Run every worker count and interval choice for `seed_count` seeds.
    pub fn sweep_speedup(&self, spec: &SweepSpec) -> Result<SweepOutcome> {
        let jobs = spec.plan()?;
        let run_job = |job: &SweepJob| -> Result<SweepRow> {
            let result = Engine::sequential().run(&job.config)?;
            Ok(SweepRow {
                n: job.config.problem.num_workers(),
                interval: job.config.hp.interval,
                interval_choice: job.choice,
                seed: job.config.seed,
                gamma: job.config.hp.gamma,
                avg_grad_norm_sq: result.avg_grad_norm_sq,
                comm_rounds: result.comm_rounds,
            })
        };
        let rows = match &self.pool {
            Some(pool) => {
                pool.install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>())?
            }
            None => jobs.iter().map(run_job).collect::<Result<Vec<_>>>()?,
        };
        let fits = spec
            .intervals
            .iter()
            .map(|&choice| fit_exponent(&rows, choice))
            .collect();
        Ok(SweepOutcome { rows, fits })
    }
}

/// Run parallel restarted momentum SGD on a single thread.
pub fn run_parallel_restarted(cfg: &RunConfig) -> Result<RunResult> {
    if cfg.algorithm != Algorithm::ParallelRestarted {
        return Err(Error::Config(
            "expected a parallel_restarted configuration".into(),
        ));
    }
    Engine::sequential().run(cfg)
}

/// Run decentralized momentum SGD on a single thread.
pub fn run_decentralized(cfg: &RunConfig) -> Result<RunResult> {
    if cfg.algorithm != Algorithm::Decentralized {
        return Err(Error::Config(
            "expected a decentralized configuration".into(),
        ));
    }
    Engine::sequential().run(cfg)
}

struct Simulation<'a> {
    cfg: &'a RunConfig,
    t: u64,
    states: Vec<WorkerState>,
    streams: Vec<RngStream>,
    grads: Vec<Vec<f64>>,
    g_bar: Vec<f64>,
    x_bar: Vec<f64>,
    u_bar: Vec<f64>,
    aux: Option<AuxiliarySequenceChecker>,
    comm_rounds: u64,
    grad_norm_sum: f64,
    random_index: u64,
    random_iterate: Vec<f64>,
    node_residual: f64,
    trace: Trace,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let n = cfg.problem.num_workers();
        let m = cfg.problem.dimension();
        let random_index =
            RngStream::new(cfg.seed, RANDOM_ITERATE_STREAM).uniform_index(cfg.hp.horizon);
        let aux = (cfg.check_identities && cfg.option != MomentumOption::ClearedMomentumBaseline)
            .then(|| AuxiliarySequenceChecker::new(cfg.option, &cfg.hp, &cfg.x_init));
        let mut sim = Simulation {
            cfg,
            t: 0,
            states: vec![WorkerState::new(cfg.x_init.clone()); n],
            streams: (0..n).map(|i| RngStream::new(cfg.seed, i as u64)).collect(),
            grads: vec![vec![0.0; m]; n],
            g_bar: vec![0.0; m],
            x_bar: cfg.x_init.clone(),
            u_bar: vec![0.0; m],
            aux,
            comm_rounds: 0,
            grad_norm_sum: 0.0,
            random_index,
            random_iterate: Vec::new(),
            node_residual: 0.0,
            trace: Trace::default(),
        };
        sim.record()?;
        Ok(sim)
    }

    fn snapshot(&self, with_gradient: bool) -> Snapshot<'_> {
        Snapshot {
            t: self.t,
            states: &self.states,
            x_bar: &self.x_bar,
            u_bar: &self.u_bar,
            g_bar: with_gradient.then_some(self.g_bar.as_slice()),
        }
    }

    /// Communication, bookkeeping and checks after the local steps of iteration `t`.
    fn finish_iteration(&mut self, t: u64) -> Result<()> {
        let cfg = self.cfg;
        self.t = t;
        self.g_bar = fixed_order_mean(&self.grads)?;
        let x_prev = std::mem::take(&mut self.x_bar);
        let u_prev = std::mem::take(&mut self.u_bar);
        // The cleared baseline zeroes ū at a restart, so its recursion is
        // checked on the averages just before the reset.
        let mut pre_reset = None;
        match cfg.algorithm {
            Algorithm::ParallelRestarted => {
                if t.is_multiple_of(cfg.hp.interval) {
                    if cfg.option == MomentumOption::ClearedMomentumBaseline {
                        if cfg.check_identities {
                            pre_reset = Some(node_averages(&self.states)?);
                        }
                        restart_average_cleared(&mut self.states)?;
                    } else {
                        restart_average(&mut self.states)?;
                    }
                    self.comm_rounds += 1;
                }
            }
            Algorithm::Decentralized => {
                let w = cfg.topology.as_ref().expect("validated topology");
                gossip(&mut self.states, w);
                self.comm_rounds += 1;
            }
        }
        let (x_bar, u_bar) = node_averages(&self.states)?;
        self.x_bar = x_bar;
        self.u_bar = u_bar;
        self.check_divergence()?;

        if cfg.check_identities {
            let (xc, uc) = match &pre_reset {
                Some((x, u)) => (x.as_slice(), u.as_slice()),
                None => (self.x_bar.as_slice(), self.u_bar.as_slice()),
            };
            let r =
                node_average_residual(cfg.option, &cfg.hp, &x_prev, &u_prev, &self.g_bar, xc, uc);
            if r.is_nan() || r > IDENTITY_TOLERANCE {
                return Err(Error::IdentityResidual {
                    identity: "node-average recursion",
                    iteration: t,
                    residual: r,
                    tolerance: IDENTITY_TOLERANCE,
                });
            }
            self.node_residual = self.node_residual.max(r);
            if let Some(aux) = &mut self.aux {
                aux.advance(t, &self.x_bar, &x_prev, &self.g_bar)?;
            }
        }
        self.record()
    }

    fn check_divergence(&self) -> Result<()> {
        for (i, s) in self.states.iter().enumerate() {
            if !all_finite(&s.x) || !all_finite(&s.u) {
                return Err(Error::Diverged {
                    iteration: self.t,
                    reason: format!("worker {i} has a non-finite state"),
                });
            }
            let size = norm(&s.x);
            if size > DIVERGENCE_NORM {
                return Err(Error::Diverged {
                    iteration: self.t,
                    reason: format!("worker {i} has ‖x‖ = {size:e} > {DIVERGENCE_NORM:e}"),
                });
            }
        }
        Ok(())
    }

    fn record(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let t = self.t;
        let grad = cfg
            .problem
            .mean_gradient(GradientTarget::All, &self.x_bar)?;
        let grad_norm_sq = norm_sq(&grad);
        self.grad_norm_sum += grad_norm_sq;
        if t == self.random_index {
            self.random_iterate = self.x_bar.clone();
        }
        if t.is_multiple_of(cfg.eval_every) || t + 1 == cfg.hp.horizon {
            let aux_residual = self.aux.as_ref().map_or(0.0, |a| a.max_residual);
            self.trace.rows.push(TraceRow {
                t,
                grad_norm_sq,
                objective: cfg.problem.objective_value(&self.x_bar)?,
                consensus_x: dispersion(self.states.iter().map(|s| s.x.as_slice()), &self.x_bar),
                consensus_u: dispersion(self.states.iter().map(|s| s.u.as_slice()), &self.u_bar),
                comm_rounds: self.comm_rounds,
                identity_residual: self.node_residual.max(aux_residual),
            });
        }
        Ok(())
    }

    fn into_result(self) -> RunResult {
        let checked = self.cfg.check_identities;
        RunResult {
            avg_grad_norm_sq: self.grad_norm_sum / self.cfg.hp.horizon as f64,
            random_iterate_index: self.random_index,
            random_iterate: self.random_iterate,
            comm_rounds: self.comm_rounds,
            max_node_average_residual: checked.then_some(self.node_residual),
            max_auxiliary_residual: self.aux.map(|a| a.max_residual),
            final_states: self.states,
            trace: self.trace,
        }
    }
}

fn node_averages(states: &[WorkerState]) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        fixed_order_mean_iter(states.iter().map(|s| s.x.as_slice()))?,
        fixed_order_mean_iter(states.iter().map(|s| s.u.as_slice()))?,
    ))
}

/// `x_i ← Σ_j W_ji x̃_j`, `u_i ← Σ_j W_ji ũ_j`, summed in increasing `j`.
fn gossip(states: &mut [WorkerState], w: &MixingMatrix) {
    let n = states.len();
    let m = states.first().map_or(0, WorkerState::dimension);
    let mixed: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut x = vec![0.0; m];
            let mut u = vec![0.0; m];
            for (j, s) in states.iter().enumerate() {
                let wji = w.weight(j, i);
                if wji == 0.0 {
                    continue;
                }
                for k in 0..m {
                    x[k] += wji * s.x[k];
                    u[k] += wji * s.u[k];
                }
            }
            (x, u)
        })
        .collect();
    for (s, (x, u)) in states.iter_mut().zip(mixed) {
        s.x = x;
        s.u = u;
    }
}

fn scaled_residual(actual: &[f64], expected: &[f64]) -> f64 {
    max_abs_diff(actual, expected) / max_abs(expected).max(1.0)
}

/// Residual of `ū⁽ᵗ⁾ = βū⁽ᵗ⁻¹⁾ + ḡ` together with `x̄⁽ᵗ⁾ = x̄⁽ᵗ⁻¹⁾ − γū⁽ᵗ⁾`
/// (Polyak) or `x̄⁽ᵗ⁾ = x̄⁽ᵗ⁻¹⁾ − γ(βū⁽ᵗ⁾ + ḡ)` (Nesterov), relative to
/// `max(1, |expected|)`.
pub fn node_average_residual(
    option: MomentumOption,
    hp: &HyperParams,
    x_prev: &[f64],
    u_prev: &[f64],
    g_bar: &[f64],
    x_bar: &[f64],
    u_bar: &[f64],
) -> f64 {
    let u_expected: Vec<f64> = u_prev
        .iter()
        .zip(g_bar)
        .map(|(u, g)| hp.beta * u + g)
        .collect();
    let x_expected: Vec<f64> = match option {
        MomentumOption::Nesterov => x_prev
            .iter()
            .zip(&u_expected)
            .zip(g_bar)
            .map(|((x, u), g)| x - hp.gamma * (hp.beta * u + g))
            .collect(),
        _ => x_prev
            .iter()
            .zip(&u_expected)
            .map(|(x, u)| x - hp.gamma * u)
            .collect(),
    };
    scaled_residual(u_bar, &u_expected).max(scaled_residual(x_bar, &x_expected))
}

/// Tracks `z̄⁽ᵗ⁾ = x̄⁽ᵗ⁾/(1−β) − β/(1−β)·x̄⁽ᵗ⁻¹⁾` (Polyak), or the same plus
/// `γβ/(1−β)·ḡ⁽ᵗ⁻¹⁾` (Nesterov), with `z̄⁽⁰⁾ = x̄⁽⁰⁾`, and checks that every
/// increment equals `−γ/(1−β)·ḡ⁽ᵗ⁻¹⁾`. Only the previous value is retained.
#[derive(Clone, Debug)]
pub struct AuxiliarySequenceChecker {
    option: MomentumOption,
    gamma: f64,
    beta: f64,
    z_prev: Vec<f64>,
    pub max_residual: f64,
}

impl AuxiliarySequenceChecker {
    pub fn new(option: MomentumOption, hp: &HyperParams, x0: &[f64]) -> Self {
        AuxiliarySequenceChecker {
            option,
            gamma: hp.gamma,
            beta: hp.beta,
            z_prev: x0.to_vec(),
            max_residual: 0.0,
        }
    }

    /// Current auxiliary value.
    pub fn value(&self) -> &[f64] {
        &self.z_prev
    }

    /// Feed `x̄⁽ᵗ⁾`, `x̄⁽ᵗ⁻¹⁾` and `ḡ⁽ᵗ⁻¹⁾`; returns the increment residual.
    pub fn advance(&mut self, t: u64, x_bar: &[f64], x_prev: &[f64], g_bar: &[f64]) -> Result<f64> {
        let c = 1.0 / (1.0 - self.beta);
        let shift = if self.option == MomentumOption::Nesterov {
            self.gamma * self.beta * c
        } else {
            0.0
        };
        let z: Vec<f64> = x_bar
            .iter()
            .zip(x_prev)
            .zip(g_bar)
            .map(|((x, xp), g)| c * x - self.beta * c * xp + shift * g)
            .collect();
        let scale = max_abs(&z).max(1.0);
        let residual = z
            .iter()
            .zip(&self.z_prev)
            .zip(g_bar)
            .map(|((z, zp), g)| ((z - zp) + self.gamma * c * g).abs())
            .fold(0.0, f64::max)
            / scale;
        if residual.is_nan() || residual > IDENTITY_TOLERANCE {
            return Err(Error::IdentityResidual {
                identity: "auxiliary-sequence increment",
                iteration: t,
                residual,
                tolerance: IDENTITY_TOLERANCE,
            });
        }
        self.max_residual = self.max_residual.max(residual);
        self.z_prev = z;
        Ok(residual)
    }
}

/// Synchronization interval used by a sweep: a fixed value or the largest one
/// allowed by the reduced-communication rate for each worker count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalChoice {
    Fixed(u64),
    Max(MaxKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxKeyword {
    Max,
}

impl IntervalChoice {
    pub const MAX: IntervalChoice = IntervalChoice::Max(MaxKeyword::Max);
}

impl std::fmt::Display for IntervalChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntervalChoice::Fixed(i) => write!(f, "{i}"),
            IntervalChoice::Max(_) => write!(f, "max"),
        }
    }
}

/// Worker-count sweep at `γ = √N/√T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub algorithm_option: MomentumOption,
    pub recipe: ProblemRecipe,
    pub beta: f64,
    pub horizon: u64,
    pub worker_counts: Vec<usize>,
    pub intervals: Vec<IntervalChoice>,
    pub seed_count: usize,
    pub base_seed: u64,
    pub x_init: Vec<f64>,
    pub eval_every: u64,
}

struct SweepJob {
    config: RunConfig,
    choice: IntervalChoice,
}

impl SweepSpec {
    /// Resolve every job, reporting all threshold violations at once.
    fn plan(&self) -> Result<Vec<SweepJob>> {
        if self.worker_counts.is_empty() {
            return Err(Error::Empty("worker_counts"));
        }
        if self.intervals.is_empty() {
            return Err(Error::Empty("interval list"));
        }
        if self.seed_count == 0 {
            return Err(Error::invalid("seed_count", "must be at least 1"));
        }
        let mut violations = Vec::new();
        let mut jobs = Vec::new();
        for &n in &self.worker_counts {
            let problem = self.recipe.build(n)?;
            let l = problem.certified_l();
            let kappa_zero = problem.certified_kappa() <= KAPPA_ZERO_TOLERANCE;
            let t = self.horizon as f64;
            let mut intervals = Vec::new();
            for &choice in &self.intervals {
                let resolved = match choice {
                    IntervalChoice::Fixed(1) => {
                        let need = theory::every_step_min_horizon(n, l, self.beta);
                        (t >= need).then_some(1).ok_or(format!(
                            "N = {n}: T = {t} below 36 L^2 N/(1-beta)^2 = {need}"
                        ))
                    }
                    IntervalChoice::Fixed(i) => {
                        let need = theory::reduced_comm_min_horizon(n, l, self.beta);
                        (t >= need).then_some(i).ok_or(format!(
                            "N = {n}: T = {t} below (1+beta)^2 L^2 N/(1-beta)^4 = {need}"
                        ))
                    }
                    IntervalChoice::Max(_) => {
                        theory::max_interval(n, self.horizon, l, self.beta, kappa_zero)
                            .map_err(|e| format!("N = {n}: {e}"))
                    }
                };
                match resolved {
                    Ok(i) => intervals.push((choice, i)),
                    Err(msg) => violations.push(msg),
                }
            }
            let gamma = theory::rate_gamma(n, self.horizon);
            for (choice, interval) in intervals {
                let hp = HyperParams::new(gamma, self.beta, interval, self.horizon)?;
                for k in 0..self.seed_count as u64 {
                    jobs.push(SweepJob {
                        config: RunConfig {
                            algorithm: Algorithm::ParallelRestarted,
                            option: self.algorithm_option,
                            hp,
                            problem: problem.clone(),
                            topology: None,
                            seed: self.base_seed + k,
                            x_init: self.x_init.clone(),
                            eval_every: self.eval_every,
                            check_identities: false,
                        },
                        choice,
                    });
                }
            }
        }
        if !violations.is_empty() {
            return Err(Error::Threshold(violations.join("; ")));
        }
        for job in &jobs {
            job.config.validate()?;
        }
        Ok(jobs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub interval: u64,
    pub interval_choice: IntervalChoice,
    pub seed: u64,
    pub gamma: f64,
    pub avg_grad_norm_sq: f64,
    pub comm_rounds: u64,
}

/// Scaling of the seed-averaged metric with `N` for one interval choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupFit {
    pub interval_choice: IntervalChoice,
    pub worker_counts: Vec<usize>,
    pub intervals: Vec<u64>,
    pub comm_rounds: Vec<u64>,
    pub mean_avg_grad_norm_sq: Vec<f64>,
    /// Least-squares slope of `ln(mean avg_grad_norm_sq)` against `ln N`;
    /// `None` with fewer than two worker counts.
    pub exponent: Option<f64>,
    /// Standard error of the per-seed slopes; `None` with fewer than two seeds.
    pub std_error: Option<f64>,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub fits: Vec<SpeedupFit>,
}

/// Least-squares slope of `y` on `x`; `None` when `x` has no spread.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn fit_exponent(rows: &[SweepRow], choice: IntervalChoice) -> SpeedupFit {
    let rows: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.interval_choice == choice)
        .collect();
    let mut worker_counts: Vec<usize> = Vec::new();
    let mut seeds: Vec<u64> = Vec::new();
    for r in &rows {
        if !worker_counts.contains(&r.n) {
            worker_counts.push(r.n);
        }
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    let mut intervals = Vec::new();
    let mut comm_rounds = Vec::new();
    let mut means = Vec::new();
    for &n in &worker_counts {
        let at_n: Vec<&&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
        intervals.push(at_n[0].interval);
        comm_rounds.push(at_n[0].comm_rounds);
        means.push(at_n.iter().map(|r| r.avg_grad_norm_sq).sum::<f64>() / at_n.len() as f64);
    }
    let log_n: Vec<f64> = worker_counts.iter().map(|&n| (n as f64).ln()).collect();
    let log_mean: Vec<f64> = means.iter().map(|v| v.ln()).collect();
    let exponent = lsq_slope(&log_n, &log_mean);
    let per_seed: Vec<f64> = seeds
        .iter()
        .filter_map(|&s| {
            let ys: Vec<f64> = worker_counts
                .iter()
                .filter_map(|&n| {
                    rows.iter()
                        .find(|r| r.n == n && r.seed == s)
                        .map(|r| r.avg_grad_norm_sq.ln())
                })
                .collect();
            lsq_slope(&log_n, &ys)
        })
        .collect();
    let std_error = (exponent.is_some() && per_seed.len() >= 2).then(|| {
        let k = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / k;
        let var = per_seed
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (k - 1.0);
        (var / k).sqrt()
    });
    SpeedupFit {
        interval_choice: choice,
        worker_counts,
        intervals,
        comm_rounds,
        mean_avg_grad_norm_sq: means,
        exponent,
        std_error,
        seeds: seeds.len(),
    }
}

//! Experiment file schema and its resolution into engine configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use momsync_core::engine::{Algorithm, IntervalChoice, RunConfig, SweepSpec};
use momsync_core::momentum::{HyperParams, MomentumOption};
use momsync_core::numerics::Mat;
use momsync_core::problems::ProblemRecipe;
use momsync_core::topology::{complete_graph, ring_graph, MixingMatrix};

use crate::error::CliError;

/// Output directory used when neither the flag, the environment nor the file names one.
pub const DEFAULT_OUTPUT_DIR: &str = "momsync-out";
pub const OUTPUT_ENV: &str = "MOMENTUM_SYNC_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub algorithm: Algorithm,
    pub option: MomentumOption,
    /// Step size of single runs; sweeps use `√N/√T` instead.
    #[serde(default)]
    pub gamma: Option<f64>,
    pub beta: f64,
    #[serde(default = "one")]
    pub interval: u64,
    pub horizon: u64,
    pub num_workers: usize,
    pub problem: ProblemRecipe,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x_init: InitialPoint,
    #[serde(default = "one")]
    pub eval_every: u64,
    #[serde(default)]
    pub check_identities: bool,
    /// Also run the cleared-momentum baseline on the same seed.
    #[serde(default)]
    pub with_baseline: bool,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Complete,
    Ring {
        self_weight: f64,
    },
    Matrix {
        n: usize,
        rows: Vec<Vec<f64>>,
    },
    /// Mixing-matrix JSON document, relative to the experiment file.
    File {
        path: PathBuf,
    },
}

/// Common starting point: one value for every coordinate, or the full vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPoint {
    Fill(f64),
    Values(Vec<f64>),
}

impl Default for InitialPoint {
    fn default() -> Self {
        InitialPoint::Fill(1.0)
    }
}

impl InitialPoint {
    pub fn resolve(&self, dimension: usize) -> Result<Vec<f64>, CliError> {
        match self {
            InitialPoint::Fill(v) => Ok(vec![*v; dimension]),
            InitialPoint::Values(v) if v.len() == dimension => Ok(v.clone()),
            InitialPoint::Values(v) => Err(CliError::Validation(format!(
                "x_init has {} entries but the problem dimension is {dimension}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub worker_counts: Vec<usize>,
    pub interval_list: Vec<IntervalChoice>,
    #[serde(default = "default_seed_count")]
    pub seed_count: usize,
}

fn default_seed_count() -> usize {
    20
}

/// A parsed experiment file together with its location.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub file: ExperimentFile,
    pub base_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let file: ExperimentFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: schema error: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Experiment { file, base_dir })
    }

    pub fn topology(&self) -> Result<Option<MixingMatrix>, CliError> {
        let n = self.file.num_workers;
        let w = match &self.file.topology {
            None => return Ok(None),
            Some(TopologySpec::Complete) => complete_graph(n)?,
            Some(TopologySpec::Ring { self_weight }) => ring_graph(n, *self_weight)?,
            Some(TopologySpec::Matrix { n: size, rows }) => {
                if rows.len() != *size {
                    return Err(CliError::Validation(format!(
                        "topology declares n = {size} but has {} rows",
                        rows.len()
                    )));
                }
                MixingMatrix::from_matrix(Mat::from_rows(rows.clone())?)?
            }
            Some(TopologySpec::File { path }) => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Io(format!("cannot read {}: {e}", full.display())))?;
                MixingMatrix::from_json(&text)?
            }
        };
        Ok(Some(w))
    }

    /// Engine configuration for a single run; `seed` overrides the file's seed.
    pub fn run_config(&self, seed: Option<u64>) -> Result<RunConfig, CliError> {
        let f = &self.file;
        let gamma = f
            .gamma
            .ok_or_else(|| CliError::Validation("`gamma` is required for a single run".into()))?;
        let hp = HyperParams::new(gamma, f.beta, f.interval, f.horizon)?;
        let problem = f.problem.build(f.num_workers)?;
        let x_init = f.x_init.resolve(problem.dimension())?;
        let cfg = RunConfig {
            algorithm: f.algorithm,
            option: f.option,
            hp,
            problem,
            topology: self.topology()?,
            seed: seed.unwrap_or(f.seed),
            x_init,
            eval_every: f.eval_every,
            check_identities: f.check_identities,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sweep_spec(&self, seed: Option<u64>) -> Result<SweepSpec, CliError> {
        let f = &self.file;
        let sweep = f.sweep.as_ref().ok_or_else(|| {
            CliError::Validation("the experiment file has no `sweep` section".into())
        })?;
        if f.algorithm != Algorithm::ParallelRestarted {
            return Err(CliError::Validation(
                "sweeps are defined for parallel_restarted only".into(),
            ));
        }
        // Only to validate β and T; the sweep picks γ and I per worker count.
        HyperParams::new(1.0, f.beta, 1, f.horizon)?;
        Ok(SweepSpec {
            algorithm_option: f.option,
            recipe: f.problem.clone(),
            beta: f.beta,
            horizon: f.horizon,
            worker_counts: sweep.worker_counts.clone(),
            intervals: sweep.interval_list.clone(),
            seed_count: sweep.seed_count,
            base_seed: seed.unwrap_or(f.seed),
            x_init: f.x_init.resolve(f.problem.dimension())?,
            eval_every: f.eval_every,
        })
    }

    /// `--out`, then `MOMENTUM_SYNC_OUT`, then the file's `output_dir`, then the default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        resolve_output_dir(flag, self.file.output_dir.as_deref())
    }
}

pub fn resolve_output_dir(flag: Option<&Path>, from_file: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    from_file
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

//! Experiment configuration: a JSON document with `schedule`, `model`,
//! `solver` and `run` blocks plus optional per-command blocks.

use std::path::PathBuf;

use bridgesolve_core::harness::StudySetup;
use bridgesolve_core::models::{GaussianPrior, GmmPrior};
use bridgesolve_core::schedule::{GridScheme, ScheduleParams};
use bridgesolve_core::solvers::{EpsilonMode, SolverKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleParams,
    pub model: ModelBlock,
    pub solver: SolverBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub integrals: IntegralsBlock,
    #[serde(default)]
    pub convergence: ConvergenceBlock,
    #[serde(default)]
    pub benchmark: BenchmarkBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian(GaussianPrior),
    Gmm(GmmPrior),
}

impl PriorSpec {
    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Gaussian(p) => p.mean.len(),
            PriorSpec::Gmm(p) => p.means.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EndpointSpec {
    /// A fixed `x_T`.
    Fixed(Vec<f64>),
    /// One `x_T` drawn per run from a diagonal Gaussian.
    Gaussian(GaussianPrior),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub prior: PriorSpec,
    pub endpoint: EndpointSpec,
}

fn default_order() -> usize {
    2
}
fn default_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub kind: SolverKind,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_ratio")]
    pub midpoint_ratio: f64,
    /// Exactly one of `nfe_budget` and `n_steps` must be given.
    #[serde(default)]
    pub nfe_budget: Option<usize>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub epsilon_mode: EpsilonMode,
    #[serde(default)]
    pub grid_scheme: GridScheme,
}

fn default_batch() -> usize {
    1000
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// Write measured wall times; off makes every output byte-reproducible.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: default_batch(),
            output_dir: default_out(),
            record_wall_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegralsBlock {
    pub n_triples: usize,
    pub seed: u64,
    pub lam_end_range: [f64; 2],
    /// Spreads `lam_s - lam_T` and `lam_t - lam_s` are log-uniform in this range.
    pub spread_range: [f64; 2],
    pub rel_tol: f64,
    pub quadrature_rel_tol: f64,
}

impl Default for IntegralsBlock {
    fn default() -> Self {
        Self {
            n_triples: 1000,
            seed: 0,
            lam_end_range: [-3.0, 3.0],
            spread_range: [1e-4, 5.0],
            rel_tol: 1e-8,
            quadrature_rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub solver: SolverKind,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Accepted slope interval.
    pub band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceBlock {
    pub step_counts: Vec<usize>,
    pub setup: StudySetup,
    pub studies: Vec<StudySpec>,
}

impl Default for ConvergenceBlock {
    fn default() -> Self {
        let study = |solver, order, band| StudySpec { solver, order, band };
        Self {
            step_counts: vec![8, 16, 32, 64, 128],
            setup: StudySetup::default(),
            studies: vec![
                study(SolverKind::DbmSolver, 2, [1.7, 2.4]),
                study(SolverKind::DbmSolver, 1, [0.8, 1.3]),
                study(SolverKind::HybridHeun, 2, [1.7, 2.4]),
                study(SolverKind::Odes3, 2, [1.7, 2.4]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCell {
    pub solver: SolverKind,
    #[serde(default = "default_order")]
    pub order: usize,
    pub nfe: usize,
}

/// Requires `SW(candidate) <= SW(baseline)`, with cells named by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub candidate: usize,
    pub baseline: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkBlock {
    pub cells: Vec<BenchmarkCell>,
    pub comparisons: Vec<Comparison>,
    pub reference_steps: usize,
    pub n_projections: usize,
}

impl Default for BenchmarkBlock {
    fn default() -> Self {
        let cell = |solver, nfe| BenchmarkCell { solver, order: 2, nfe };
        Self {
            cells: vec![
                cell(SolverKind::DbmSolver, 6),
                cell(SolverKind::HybridHeun, 19),
                cell(SolverKind::DbmSolver, 20),
                cell(SolverKind::Odes3, 28),
            ],
            comparisons: vec![
                Comparison {
                    candidate: 0,
                    baseline: 1,
                },
                Comparison {
                    candidate: 2,
                    baseline: 3,
                },
            ],
            reference_steps: 100_000,
            n_projections: 128,
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{ScheduleParams, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    DbmSolver,
    EulerMaruyama,
    HybridHeun,
    Odes3,
    Dbim1,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::DbmSolver,
        SolverKind::EulerMaruyama,
        SolverKind::HybridHeun,
        SolverKind::Odes3,
        SolverKind::Dbim1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::DbmSolver => "dbm_solver",
            SolverKind::EulerMaruyama => "euler_maruyama",
            SolverKind::HybridHeun => "hybrid_heun",
            SolverKind::Odes3 => "odes3",
            SolverKind::Dbim1 => "dbim1",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the initial stochastic step from `T` lands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EpsilonMode {
    /// On the next grid time `t_{N-1}`.
    #[default]
    GridStep,
    /// On `T - epsilon`; the remaining grid is unchanged.
    FixedEpsilon { epsilon: f64 },
}

fn default_order() -> usize {
    2
}

fn default_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Exponential-integrator order, used by [`SolverKind::DbmSolver`] only.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_ratio")]
    pub midpoint_ratio: f64,
    pub grid: TimeGrid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub epsilon_mode: EpsilonMode,
}

impl SolverConfig {
    pub fn new(kind: SolverKind, grid: TimeGrid) -> Self {
        Self {
            kind,
            order: default_order(),
            midpoint_ratio: default_ratio(),
            grid,
            seed: 0,
            epsilon_mode: EpsilonMode::GridStep,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_midpoint_ratio(mut self, r: f64) -> Self {
        self.midpoint_ratio = r;
        self
    }

    pub fn with_epsilon_mode(mut self, mode: EpsilonMode) -> Self {
        self.epsilon_mode = mode;
        self
    }

    pub fn validate(&self, schedule: &ScheduleParams) -> Result<()> {
        self.grid.validate(schedule)?;
        if self.kind == SolverKind::DbmSolver {
            if self.order == 0 {
                return Err(Error::Config("order must be 1 or 2".into()));
            }
            if self.order > 2 {
                return Err(Error::UnsupportedOrder {
                    what: "dbm_solver",
                    order: self.order,
                });
            }
        }
        if !(self.midpoint_ratio > 0.0 && self.midpoint_ratio < 1.0) {
            return Err(Error::Config(format!(
                "midpoint ratio must lie in (0, 1), got {}",
                self.midpoint_ratio
            )));
        }
        self.effective_times()?;
        Ok(())
    }

    /// Grid times after applying the epsilon mode, `t_N = T` first.
    pub fn effective_times(&self) -> Result<Vec<f64>> {
        let mut times = self.grid.times().to_vec();
        if let EpsilonMode::FixedEpsilon { epsilon } = self.epsilon_mode {
            let target = times[0] - epsilon;
            if !(epsilon > 0.0 && target > times[2]) {
                return Err(Error::Config(format!(
                    "epsilon {epsilon} must be positive and leave T - epsilon above t_{{N-2}} = {}",
                    times[2]
                )));
            }
            times[1] = target;
        }
        Ok(times)
    }
}

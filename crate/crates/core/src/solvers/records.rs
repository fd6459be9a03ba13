use serde::{Deserialize, Serialize};

use super::config::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    InitSde,
    OdeK1,
    OdeK2,
    FinalEuler,
    Baseline,
}

impl StepKind {
    /// Evaluations a step of this kind costs; baselines vary.
    pub fn nfe(self) -> Option<usize> {
        match self {
            StepKind::InitSde | StepKind::OdeK1 | StepKind::FinalEuler => Some(1),
            StepKind::OdeK2 => Some(2),
            StepKind::Baseline => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub from_t: f64,
    pub to_t: f64,
    pub nfe_used: usize,
    pub step_kind: StepKind,
    pub x_after: Vec<f64>,
}

/// One sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: SolverConfig,
    pub trajectory: u64,
    pub x_end: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub x_final: Vec<f64>,
    pub total_nfe: usize,
    /// `None` when timing is not recorded.
    pub wall_time_ms: Option<f64>,
}

impl RunRecord {
    pub fn nfe_sum(&self) -> usize {
        self.steps.iter().map(|s| s.nfe_used).sum()
    }
}

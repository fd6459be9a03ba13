//! Mapping between step counts and evaluation budgets.

use super::config::SolverKind;
use crate::error::{Error, Result};

/// Evaluations used by `kind` on an `n_steps`-step grid.
pub fn nfe_for_steps(kind: SolverKind, order: usize, n_steps: usize) -> usize {
    let n = n_steps;
    match kind {
        SolverKind::DbmSolver => 2 + order * n.saturating_sub(2),
        SolverKind::EulerMaruyama | SolverKind::Dbim1 => n,
        SolverKind::HybridHeun => {
            let inner = n.saturating_sub(1);
            inner.div_ceil(2) + 2 * (inner / 2) + 1
        }
        SolverKind::Odes3 => 2 * n.saturating_sub(1),
    }
}

const MIN_STEPS: usize = 3;
const MAX_STEPS: usize = 1 << 20;

/// Step count that spends exactly `budget` evaluations.
///
/// Unreachable budgets are rejected with the nearest reachable ones.
pub fn steps_for_budget(kind: SolverKind, order: usize, budget: usize) -> Result<usize> {
    let mut below = None;
    let mut n = MIN_STEPS;
    while n <= MAX_STEPS {
        let cost = nfe_for_steps(kind, order, n);
        if cost == budget {
            return Ok(n);
        }
        if cost > budget {
            let mut nearest: Vec<usize> = below.into_iter().collect();
            nearest.push(cost);
            return Err(Error::Budget {
                solver: kind.name().to_string(),
                budget,
                nearest,
            });
        }
        below = Some(cost);
        n += 1;
    }
    Err(Error::Config(format!("budget {budget} is too large")))
}

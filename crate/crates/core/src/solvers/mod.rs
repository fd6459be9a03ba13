//! DBMSolver and baseline bridge samplers.

mod budget;
mod config;
mod records;
mod samplers;
mod steps;

pub use budget::{nfe_for_steps, steps_for_budget};
pub use config::{EpsilonMode, SolverConfig, SolverKind};
pub use records::{RunRecord, StepKind, StepRecord};
pub use samplers::{dbim1_sample, dbmsolver_sample, em_sde_sample, hybrid_heun_sample, odes3_sample, sample};
pub use steps::{
    drift_eval_time, em_step, euler_ode_step, exp_integral, final_euler_step, heun_step, ode_coeffs, ode_step_k1,
    ode_step_k2, posterior_reparam_step, sde_step_from_x0, sde_step_order1, OdeCoeffs,
};

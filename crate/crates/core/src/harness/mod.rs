//! Verification oracles and measurements.

mod convergence;
mod metrics;
mod quadrature;
mod reference;

pub use convergence::{
    convergence_study, fit_log_slope, phase_times, post_sde_state, run_phase, strong_order_study, ConvergenceReport,
    StudySetup,
};
pub use metrics::{
    energy_distance, pairwise_sum, projection_directions, sliced_wasserstein, sliced_wasserstein_with,
    wasserstein2_sq_1d, MetricKind, MetricReport, SampleSet,
};
pub use quadrature::{adaptive_simpson, quadrature_oracle, quadrature_oracle_relative};
pub use reference::{brownian_path, coarsen_path, fine_reference_ode, fine_reference_sde, reference_em_samples};

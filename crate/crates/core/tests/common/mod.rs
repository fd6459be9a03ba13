#![allow(dead_code)]

use bridgesolve_core::models::{
    ConstantDenoiser, GaussianPosteriorDenoiser, GaussianPrior, GmmPosteriorDenoiser, GmmPrior,
};
use bridgesolve_core::{BridgeProblem, CountedDenoiser, ScheduleParams};

pub const X_END: [f64; 2] = [0.3, -0.4];

pub fn vp() -> ScheduleParams {
    ScheduleParams::vp(0.1, 20.0, 1.0)
}

pub fn ve() -> ScheduleParams {
    ScheduleParams::ve(1.0, 1.0)
}

pub fn problem(s: ScheduleParams) -> BridgeProblem {
    BridgeProblem::new(s, X_END.to_vec()).unwrap()
}

pub fn gaussian_prior() -> GaussianPrior {
    GaussianPrior::new(vec![0.5, -0.3], vec![0.4, 0.9]).unwrap()
}

pub fn gaussian() -> CountedDenoiser<GaussianPosteriorDenoiser> {
    CountedDenoiser::new(GaussianPosteriorDenoiser::new(gaussian_prior()))
}

pub fn gmm() -> CountedDenoiser<GmmPosteriorDenoiser> {
    let prior = GmmPrior::new(
        vec![0.4, 0.6],
        vec![vec![-1.5, 0.0], vec![1.2, 0.8]],
        vec![vec![0.2, 0.3], vec![0.25, 0.15]],
    )
    .unwrap();
    CountedDenoiser::new(GmmPosteriorDenoiser::new(prior))
}

pub fn constant() -> CountedDenoiser<ConstantDenoiser> {
    CountedDenoiser::new(ConstantDenoiser::new(vec![0.7, -1.1]))
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

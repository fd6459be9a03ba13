//! Configuration-driven experiments over the bridgesolve samplers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bridgesolve_core::harness::{
    convergence_study, post_sde_state, quadrature_oracle_relative, reference_em_samples, sliced_wasserstein, SampleSet,
};
use bridgesolve_core::models::{GaussianPosteriorDenoiser, GmmPosteriorDenoiser};
use bridgesolve_core::noise::{NoiseStream, Purpose};
use bridgesolve_core::solvers::{
    exp_integral, nfe_for_steps, sample, steps_for_budget, RunRecord, SolverConfig, SolverKind,
};
use bridgesolve_core::{make_grid, BridgeProblem, CountedDenoiser, Denoiser, Error as CoreError};
use serde::Serialize;

pub use config::ExperimentConfig;
use config::{EndpointSpec, PriorSpec};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed = 0,
    CheckFailed = 1,
    ConfigError = 2,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or unreadable configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical failure while running.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn status(&self) -> Status {
        match self {
            CliError::Config(_) => Status::ConfigError,
            CliError::Numerical(_) | CliError::Io(_) => Status::CheckFailed,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Errors raised while setting up a run are configuration errors.
fn setup(e: CoreError) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical(e: CoreError) -> CliError {
    match e {
        CoreError::Config(_) | CoreError::Budget { .. } | CoreError::UnsupportedOrder { .. } => {
            CliError::Config(e.to_string())
        }
        _ => CliError::Numerical(e.to_string()),
    }
}

/// Reads a config file and applies command-line overrides; every default is
/// materialized in the returned value.
pub fn load_config(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    resolve(cfg, out, seed)
}

pub fn resolve(
    mut cfg: ExperimentConfig,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, CliError> {
    if let Some(out) = out {
        cfg.run.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    cfg.schedule = cfg.schedule.resolved();
    cfg.schedule.validate().map_err(setup)?;
    match &cfg.model.prior {
        PriorSpec::Gaussian(p) => p.validate().map_err(setup)?,
        PriorSpec::Gmm(p) => p.validate().map_err(setup)?,
    }
    let d = cfg.model.prior.dim();
    let endpoint_dim = match &cfg.model.endpoint {
        EndpointSpec::Fixed(v) => v.len(),
        EndpointSpec::Gaussian(g) => {
            g.validate().map_err(setup)?;
            g.mean.len()
        }
    };
    if endpoint_dim != d {
        return Err(CliError::Config(format!(
            "endpoint dimension {endpoint_dim} differs from prior dimension {d}"
        )));
    }
    let s = &mut cfg.solver;
    match (s.nfe_budget, s.n_steps) {
        (Some(b), None) => s.n_steps = Some(steps_for_budget(s.kind, s.order, b).map_err(setup)?),
        (None, Some(n)) => s.nfe_budget = Some(nfe_for_steps(s.kind, s.order, n)),
        (Some(b), Some(n)) if nfe_for_steps(s.kind, s.order, n) == b => {}
        (Some(b), Some(n)) => {
            return Err(CliError::Config(format!("nfe_budget {b} disagrees with n_steps {n}")));
        }
        (None, None) => return Err(CliError::Config("solver needs nfe_budget or n_steps".into())),
    }
    if cfg.run.batch_size == 0 {
        return Err(CliError::Config("batch_size must be positive".into()));
    }
    Ok(cfg)
}

fn problem(cfg: &ExperimentConfig) -> Result<BridgeProblem, CliError> {
    let x_end = match &cfg.model.endpoint {
        EndpointSpec::Fixed(v) => v.clone(),
        EndpointSpec::Gaussian(g) => {
            let mut x = vec![0.0; g.mean.len()];
            g.sample(&mut NoiseStream::new(cfg.run.seed, Purpose::Endpoint, 0), &mut x);
            x
        }
    };
    BridgeProblem::new(cfg.schedule, x_end).map_err(setup)
}

fn denoiser(cfg: &ExperimentConfig) -> CountedDenoiser<Box<dyn Denoiser>> {
    let inner: Box<dyn Denoiser> = match &cfg.model.prior {
        PriorSpec::Gaussian(p) => Box::new(GaussianPosteriorDenoiser::new(p.clone())),
        PriorSpec::Gmm(p) => Box::new(GmmPosteriorDenoiser::new(p.clone())),
    };
    CountedDenoiser::new(inner)
}

fn solver_config(
    cfg: &ExperimentConfig,
    kind: SolverKind,
    order: usize,
    n_steps: usize,
) -> Result<SolverConfig, CliError> {
    let grid = make_grid(&cfg.schedule, n_steps, cfg.solver.grid_scheme).map_err(setup)?;
    let sc = SolverConfig::new(kind, grid)
        .with_order(order)
        .with_midpoint_ratio(cfg.solver.midpoint_ratio)
        .with_seed(cfg.run.seed)
        .with_epsilon_mode(cfg.solver.epsilon_mode);
    sc.validate(&cfg.schedule).map_err(setup)?;
    Ok(sc)
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let out = cfg.run.output_dir.clone();
    fs::create_dir_all(&out)?;
    write_json(&out.join("config_resolved.json"), cfg)?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Shortest decimal that round-trips to the same double.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_rows(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut text = String::with_capacity(rows.len() * 32);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn log_uniform(stream: &mut NoiseStream, lo: f64, hi: f64) -> f64 {
    (lo.ln() + stream.uniform() * (hi.ln() - lo.ln())).exp()
}

/// Closed-form exponential integrals against adaptive quadrature.
pub fn cmd_integrals(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let b = &cfg.integrals;
    if !(b.spread_range[0] > 0.0 && b.spread_range[0] <= b.spread_range[1] && b.lam_end_range[0] <= b.lam_end_range[1])
    {
        return Err(CliError::Config("integrals: invalid ranges".into()));
    }
    let out = prepare_output(cfg)?;
    let mut stream = NoiseStream::new(b.seed, Purpose::Sweep, 0);
    let mut triples = Vec::with_capacity(b.n_triples + 1);
    for _ in 0..b.n_triples {
        let lam_end = b.lam_end_range[0] + stream.uniform() * (b.lam_end_range[1] - b.lam_end_range[0]);
        let lam_s = lam_end + log_uniform(&mut stream, b.spread_range[0], b.spread_range[1]);
        let lam_t = lam_s + log_uniform(&mut stream, b.spread_range[0], b.spread_range[1]);
        triples.push((lam_end, lam_s, lam_t));
    }
    // A degenerate interval.
    triples.push((0.0, 0.5, 0.5));
    let mut rows = Vec::with_capacity(2 * triples.len());
    let mut failed = 0usize;
    let mut worst: f64 = 0.0;
    for &(lam_end, lam_s, lam_t) in &triples {
        for n in 0..=1 {
            let closed = exp_integral(n, lam_s, lam_t, lam_end).map_err(numerical)?;
            let quad = quadrature_oracle_relative(n, lam_s, lam_t, lam_end, b.quadrature_rel_tol).map_err(numerical)?;
            let rel = if closed == quad {
                0.0
            } else {
                (closed - quad).abs() / quad.abs()
            };
            worst = worst.max(rel);
            if !(rel <= b.rel_tol) {
                failed += 1;
            }
            rows.push(format!(
                "{},{},{},{n},{},{},{}",
                num(lam_end),
                num(lam_s),
                num(lam_t),
                num(closed),
                num(quad),
                num(rel)
            ));
        }
    }
    write_rows(
        &out.join("integrals.csv"),
        "lam_T,lam_s,lam_t,n,closed_form,quadrature,rel_err",
        &rows,
    )?;
    eprintln!(
        "integrals: {} rows, worst rel_err {worst:e}, {failed} above {:e}",
        rows.len(),
        b.rel_tol
    );
    Ok(if failed == 0 {
        Status::Passed
    } else {
        Status::CheckFailed
    })
}

#[derive(Serialize)]
struct StudySummary {
    solver: String,
    order: usize,
    fitted_slope: f64,
    r_squared: f64,
    exact: bool,
    band: [f64; 2],
    passed: bool,
}

#[derive(Serialize)]
struct ConvergenceSummary {
    step_counts: Vec<usize>,
    start_time: f64,
    studies: Vec<StudySummary>,
}

/// Global-error slopes of each deterministic phase.
pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let c = &cfg.convergence;
    if c.step_counts.len() < 4 {
        return Err(CliError::Config("convergence needs at least 4 step counts".into()));
    }
    let p = problem(cfg)?;
    let den = denoiser(cfg);
    let out = prepare_output(cfg)?;
    let x_start = post_sde_state(&p, c.setup.start_time, &den, cfg.run.seed).map_err(numerical)?;
    let mut rows = Vec::new();
    let mut studies = Vec::new();
    for spec in &c.studies {
        let rep = convergence_study(&p, spec.solver, spec.order, &den, &c.step_counts, &x_start, &c.setup)
            .map_err(numerical)?;
        for (n, e) in rep.step_counts.iter().zip(&rep.errors) {
            rows.push(format!("{},{n},{}", rep.solver, num(*e)));
        }
        let passed = rep.exact || (rep.fitted_slope >= spec.band[0] && rep.fitted_slope <= spec.band[1]);
        eprintln!(
            "convergence: {} slope {:.4} (band [{}, {}]) {}",
            rep.solver,
            rep.fitted_slope,
            spec.band[0],
            spec.band[1],
            if passed { "ok" } else { "FAILED" }
        );
        studies.push(StudySummary {
            solver: rep.solver,
            order: spec.order,
            fitted_slope: rep.fitted_slope,
            r_squared: rep.r_squared,
            exact: rep.exact,
            band: spec.band,
            passed,
        });
    }
    write_rows(&out.join("convergence.csv"), "solver,N,error", &rows)?;
    let all = studies.iter().all(|s| s.passed);
    write_json(
        &out.join("convergence_summary.json"),
        &ConvergenceSummary {
            step_counts: c.step_counts.clone(),
            start_time: c.setup.start_time,
            studies,
        },
    )?;
    Ok(if all { Status::Passed } else { Status::CheckFailed })
}

/// Runs `batch` trajectories of one configuration; trajectory `i` uses the
/// `(seed, Path, i)` stream.
pub fn sample_batch<D: Denoiser + ?Sized>(
    p: &BridgeProblem,
    sc: &SolverConfig,
    den: &CountedDenoiser<D>,
    batch: usize,
) -> bridgesolve_core::Result<Vec<RunRecord>> {
    (0..batch as u64)
        .map(|i| sample(p, sc, den, &mut NoiseStream::new(sc.seed, Purpose::Path, i), i))
        .collect()
}

fn final_states(records: &[RunRecord]) -> Result<SampleSet, CliError> {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.x_final.clone()).collect();
    SampleSet::from_rows(&rows).map_err(numerical)
}

fn sample_rows(set: &SampleSet) -> Vec<String> {
    set.rows()
        .map(|r| r.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","))
        .collect()
}

fn coord_header(prefix: &str, d: usize) -> String {
    let mut h = String::from(prefix);
    for j in 0..d {
        if !h.is_empty() {
            h.push(',');
        }
        let _ = write!(h, "x{j}");
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub solver: SolverKind,
    pub order: usize,
    pub nfe: usize,
    pub n_steps: usize,
    pub sw: f64,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Candidate better by at least the noise floor.
    Win,
    /// The difference is within the noise floor.
    Tie,
    /// Candidate worse by more than the noise floor.
    Loss,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub candidate: String,
    pub baseline: String,
    pub sw_candidate: f64,
    pub sw_baseline: f64,
    /// `sw_baseline - sw_candidate`.
    pub margin: f64,
    /// `margin / noise_floor`.
    pub margin_in_floors: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub n_samples: usize,
    pub reference_steps: usize,
    pub n_projections: usize,
    pub noise_floor: f64,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<ComparisonResult>,
}

pub fn verdict(margin: f64, floor: f64) -> Verdict {
    if margin >= floor {
        Verdict::Win
    } else if margin >= -floor {
        Verdict::Tie
    } else {
        Verdict::Loss
    }
}

fn label(c: &CellResult) -> String {
    match c.solver {
        SolverKind::DbmSolver => format!("{}_k{}@{}", c.solver, c.order, c.nfe),
        _ => format!("{}@{}", c.solver, c.nfe),
    }
}

/// Sample quality against a fine Euler-Maruyama reference at each
/// (solver, NFE) cell.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<(BenchmarkSummary, SampleSet), CliError> {
    let b = &cfg.benchmark;
    if b.cells.is_empty() || b.n_projections == 0 || b.reference_steps < 3 {
        return Err(CliError::Config(
            "benchmark needs cells, projections and >= 3 reference steps".into(),
        ));
    }
    for c in &b.comparisons {
        if c.candidate >= b.cells.len() || c.baseline >= b.cells.len() {
            return Err(CliError::Config("comparison refers to a missing cell".into()));
        }
    }
    let mut configs = Vec::new();
    for cell in &b.cells {
        let n = steps_for_budget(cell.solver, cell.order, cell.nfe).map_err(setup)?;
        configs.push((cell, n, solver_config(cfg, cell.solver, cell.order, n)?));
    }
    let p = problem(cfg)?;
    let den = denoiser(cfg);
    let batch = cfg.run.batch_size;
    let seed = cfg.run.seed;
    let reference = reference_em_samples(&p, &den, b.reference_steps, batch, seed, 0).map_err(numerical)?;
    let resample = reference_em_samples(&p, &den, b.reference_steps, batch, seed, batch as u64).map_err(numerical)?;
    let noise_floor = sliced_wasserstein(&reference, &resample, b.n_projections, seed)
        .map_err(numerical)?
        .value;

    let mut cells = Vec::new();
    for (cell, n, sc) in configs {
        let start = Instant::now();
        let before = den.count();
        let recs = sample_batch(&p, &sc, &den, batch).map_err(numerical)?;
        let wall = start.elapsed().as_secs_f64() * 1e3;
        let used = (den.count() - before) as usize;
        if used != cell.nfe * batch {
            return Err(CliError::Numerical(format!(
                "{}: counted {used} evaluations, expected {}",
                cell.solver,
                cell.nfe * batch
            )));
        }
        let set = final_states(&recs)?;
        let sw = sliced_wasserstein(&set, &reference, b.n_projections, seed)
            .map_err(numerical)?
            .value;
        cells.push(CellResult {
            solver: cell.solver,
            order: cell.order,
            nfe: cell.nfe,
            n_steps: n,
            sw,
            wall_ms: cfg.run.record_wall_time.then_some(wall),
        });
    }
    let comparisons = b
        .comparisons
        .iter()
        .map(|c| {
            let (a, z) = (&cells[c.candidate], &cells[c.baseline]);
            let margin = z.sw - a.sw;
            ComparisonResult {
                candidate: label(a),
                baseline: label(z),
                sw_candidate: a.sw,
                sw_baseline: z.sw,
                margin,
                margin_in_floors: margin / noise_floor,
                verdict: verdict(margin, noise_floor),
            }
        })
        .collect();
    Ok((
        BenchmarkSummary {
            n_samples: batch,
            reference_steps: b.reference_steps,
            n_projections: b.n_projections,
            noise_floor,
            cells,
            comparisons,
        },
        reference,
    ))
}

pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = prepare_output(cfg)?;
    let (summary, reference) = run_benchmark(cfg)?;
    let rows: Vec<String> = summary
        .cells
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{},{},{}",
                c.solver,
                c.order,
                c.nfe,
                c.n_steps,
                num(c.sw),
                c.wall_ms.map(num).unwrap_or_default()
            )
        })
        .collect();
    write_rows(&out.join("benchmark.csv"), "solver,order,nfe,n_steps,sw,wall_ms", &rows)?;
    write_rows(
        &out.join("reference.csv"),
        &coord_header("", reference.dim()),
        &sample_rows(&reference),
    )?;
    write_json(&out.join("benchmark_summary.json"), &summary)?;
    eprintln!("benchmark: noise floor {:.5}", summary.noise_floor);
    for c in &summary.cells {
        eprintln!("  {} sw {:.5}", label(c), c.sw);
    }
    let mut status = Status::Passed;
    for c in &summary.comparisons {
        eprintln!(
            "  {} vs {}: margin {:.5} ({:.2} floors) {:?}",
            c.candidate, c.baseline, c.margin, c.margin_in_floors, c.verdict
        );
        if c.verdict == Verdict::Loss {
            status = Status::CheckFailed;
        }
    }
    Ok(status)
}

/// One batch of the configured solver.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let n = cfg
        .solver
        .n_steps
        .ok_or_else(|| CliError::Config("n_steps unresolved".into()))?;
    let sc = solver_config(cfg, cfg.solver.kind, cfg.solver.order, n)?;
    let p = problem(cfg)?;
    let den = denoiser(cfg);
    let out = prepare_output(cfg)?;
    let mut recs = sample_batch(&p, &sc, &den, cfg.run.batch_size).map_err(numerical)?;
    let mut rows = Vec::with_capacity(recs.len());
    for r in &mut recs {
        if !cfg.run.record_wall_time {
            r.wall_time_ms = None;
        }
        let coords: Vec<String> = r.x_final.iter().map(|v| num(*v)).collect();
        rows.push(format!("{},{},{}", r.trajectory, r.total_nfe, coords.join(",")));
        write_json(&out.join(format!("run_{}.json", r.trajectory)), r)?;
    }
    write_rows(
        &out.join("samples.csv"),
        &coord_header("trajectory,total_nfe", p.dim()),
        &rows,
    )?;
    eprintln!("sample: {} trajectories, {} NFE each", recs.len(), recs[0].total_nfe);
    Ok(Status::Passed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Integrals,
    Convergence,
    Benchmark,
    Sample,
}

/// Loads the config, runs `command` and maps the outcome to an exit code.
pub fn run(command: Command, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> i32 {
    let result = load_config(config, out, seed).and_then(|cfg| match command {
        Command::Integrals => cmd_integrals(&cfg),
        Command::Convergence => cmd_convergence(&cfg),
        Command::Benchmark => cmd_benchmark(&cfg),
        Command::Sample => cmd_sample(&cfg),
    });
    match result {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status().code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "schedule": { "kind": "vp" },
                "model": {
                    "prior": { "kind": "gaussian", "mean": [0.0], "var": [1.0] },
                    "endpoint": { "fixed": [0.5] }
                },
                "solver": { "kind": "dbm_solver", "nfe_budget": 20 }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(verdict(0.02, 0.01), Verdict::Win);
        assert_eq!(verdict(0.01, 0.01), Verdict::Win);
        assert_eq!(verdict(0.005, 0.01), Verdict::Tie);
        assert_eq!(verdict(-0.01, 0.01), Verdict::Tie);
        assert_eq!(verdict(-0.02, 0.01), Verdict::Loss);
    }

    #[test]
    fn resolve_materializes_defaults() {
        let r = resolve(cfg(), None, Some(9)).unwrap();
        assert_eq!(r.solver.n_steps, Some(11));
        assert_eq!(r.schedule.t_min, Some(1e-4));
        assert_eq!(r.run.seed, 9);
        let text = serde_json::to_string(&r).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn inconsistent_step_settings_are_config_errors() {
        let mut c = cfg();
        c.solver.n_steps = Some(5);
        assert_eq!(resolve(c, None, None).unwrap_err().status(), Status::ConfigError);
        let mut c = cfg();
        c.solver.nfe_budget = Some(7);
        assert_eq!(resolve(c, None, None).unwrap_err().status(), Status::ConfigError);
        let mut c = cfg();
        c.solver.nfe_budget = None;
        assert!(resolve(c, None, None).is_err());
    }
}

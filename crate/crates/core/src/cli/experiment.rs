//! Sweeps over sampling rate, penalty weight, trial and method.
//!
//! One ground truth is drawn per experiment. Every cell then draws its own
//! mask and observations from a seed derived from the experiment seed and
//! the cell's indices, so results do not depend on execution order or on
//! the number of worker threads.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::nuclear_norm_complete;
use crate::error::{Error, Result};
use crate::problem::{frobenius_error, FactorPair};
use crate::solver::{admm_solve, Penalty};
use crate::synth::{generate_ground_truth, generate_observations, sample_mask};

use super::config::{ExperimentConfig, Method};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub gamma: f64,
    pub lambda: f64,
    pub trial: usize,
    pub method: Method,
    /// Per-element squared error; `+inf` when the trial failed.
    pub mse: f64,
    pub outer_iters: usize,
    pub runtime_ms: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub gamma: f64,
    pub method: Method,
    pub best_lambda: f64,
    pub mean_mse: f64,
    pub stderr_mse: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub truth: FactorPair,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed ^ hash(gamma index, lambda index, trial, method)`.
pub fn cell_seed(seed: u64, gamma_idx: usize, lambda_idx: usize, trial: usize, method: Method) -> u64 {
    let mut h = 0u64;
    for w in [gamma_idx as u64, lambda_idx as u64, trial as u64, method.index()] {
        h = splitmix(h ^ w);
    }
    seed ^ h
}

fn truth_seed(seed: u64) -> u64 {
    seed ^ splitmix(u64::MAX)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    gamma_idx: usize,
    lambda_idx: usize,
    trial: usize,
    method: Method,
}

/// Runs every cell of the sweep on `jobs` worker threads (`None` uses the
/// rayon default). Failed trials are recorded with `converged = false` and
/// infinite error; the sweep continues.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(truth_seed(config.seed));
    let truth = generate_ground_truth(&config.truth, &mut rng)?;
    let x_true = truth.product();

    let mut cells = Vec::new();
    for gamma_idx in 0..config.gamma_grid.len() {
        for &method in &config.methods {
            for lambda_idx in 0..config.lambdas(method).len() {
                for trial in 0..config.trials {
                    cells.push(Cell {
                        gamma_idx,
                        lambda_idx,
                        trial,
                        method,
                    });
                }
            }
        }
    }

    let run = || -> Vec<ResultRow> {
        cells
            .par_iter()
            .map(|cell| run_cell(config, &truth, &x_true, *cell))
            .collect()
    };
    let rows = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
            .install(run),
        None => run(),
    };
    let summary = summarize(&rows, config);
    Ok(ExperimentOutcome {
        rows,
        summary,
        truth,
    })
}

fn run_cell(config: &ExperimentConfig, truth: &FactorPair, x_true: &DMatrix<f64>, cell: Cell) -> ResultRow {
    let gamma = config.gamma_grid[cell.gamma_idx];
    let lambda = config.lambdas(cell.method)[cell.lambda_idx];
    let seed = cell_seed(config.seed, cell.gamma_idx, cell.lambda_idx, cell.trial, cell.method);
    let start = Instant::now();
    let outcome = solve_cell(config, truth, x_true, gamma, lambda, cell.method, seed);
    let runtime_ms = if config.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let (mse, outer_iters, converged) = outcome.unwrap_or((f64::INFINITY, 0, false));
    ResultRow {
        gamma,
        lambda,
        trial: cell.trial,
        method: cell.method,
        mse,
        outer_iters,
        runtime_ms,
        converged,
    }
}

fn solve_cell(
    config: &ExperimentConfig,
    truth: &FactorPair,
    x_true: &DMatrix<f64>,
    gamma: f64,
    lambda: f64,
    method: Method,
    seed: u64,
) -> Result<(f64, usize, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = sample_mask(config.truth.n1, config.truth.n2, gamma, &mut rng)?;
    let generated = generate_observations(truth, mask, config.likelihood, &config.boxes, &mut rng)?;
    let problem = &generated.problem;
    match method {
        Method::L0Admm | Method::L1Admm => {
            let mut solver = config.solver.clone();
            solver.lambda = lambda;
            solver.penalty = if method == Method::L0Admm {
                Penalty::L0
            } else {
                Penalty::L1
            };
            let sol = admm_solve(problem, &solver, None, &mut rng)?;
            let mse = frobenius_error(&sol.estimate(), x_true)?;
            Ok((mse, sol.outer_iters(), sol.converged))
        }
        Method::NuclearNorm => {
            let out = nuclear_norm_complete(problem, lambda, config.nuclear_step, config.nuclear_max_iters)?;
            let mse = frobenius_error(&out.x, x_true)?;
            Ok((mse, out.objectives.len(), out.converged))
        }
    }
}

/// Per `(gamma, method)`: the lambda with the lowest mean error over trials,
/// that mean and its standard error.
pub fn summarize(rows: &[ResultRow], config: &ExperimentConfig) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &gamma in &config.gamma_grid {
        for &method in &config.methods {
            let mut best: Option<SummaryRow> = None;
            for &lambda in config.lambdas(method) {
                let mses: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.gamma == gamma && r.method == method && r.lambda == lambda)
                    .map(|r| r.mse)
                    .collect();
                if mses.is_empty() {
                    continue;
                }
                let (mean, stderr) = mean_stderr(&mses);
                let better = match &best {
                    None => true,
                    Some(b) => mean < b.mean_mse,
                };
                if better {
                    best = Some(SummaryRow {
                        gamma,
                        method,
                        best_lambda: lambda,
                        mean_mse: mean,
                        stderr_mse: stderr,
                    });
                }
            }
            out.extend(best);
        }
    }
    out
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `log10(mse)` against `log10(gamma)`.
pub fn estimate_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::param("points", "need at least two points"));
    }
    if let Some(&(g, e)) = points.iter().find(|(g, e)| !(*g > 0.0 && *e > 0.0 && e.is_finite())) {
        return Err(Error::param(
            "points",
            format!("values must be positive and finite, got ({g}, {e})"),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(g, e)| (g.log10(), e.log10())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "all sampling rates are equal"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// `(gamma, mean_mse)` of one method's summary, in grid order.
pub fn slope_points(summary: &[SummaryRow], method: Method) -> Vec<(f64, f64)> {
    summary
        .iter()
        .filter(|s| s.method == method)
        .map(|s| (s.gamma, s.mean_mse))
        .collect()
}

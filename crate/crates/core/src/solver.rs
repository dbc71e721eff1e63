//! ADMM for sparsity-penalized maximum likelihood completion under the
//! factor model `X = D A`.
//!
//! Each outer iteration runs
//!
//! ```text
//! S1  X   <- Proj_X[ prox_{s l}(D A - Lambda / rho; rho, Y) ]      entry-wise
//! S2  A   <- A_IHT(D, Z)          with Z = X + Lambda / rho
//! S3  D   <- D_Newton(A, Z)
//! S4  Lambda <- Lambda + rho (X - D A)
//! ```
//!
//! followed by the residuals `delta1 = ||X - D A||_F`,
//! `delta2 = rho ||D_old A_old - D A||_F` and the multiplicative `rho`
//! adaptation. The dual is not rescaled when `rho` changes.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::baselines;
use crate::error::{Error, Result};
use crate::problem::{project_box_mut, BoxBounds, CompletionProblem, FactorPair};

const ACTIVE_SET_EPS: f64 = 1e-3;
const ARMIJO_SIGMA: f64 = 1e-4;
const ARMIJO_MAX_HALVINGS: usize = 60;

/// Sparsity penalty applied to `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penalty {
    /// `lambda ||A||_0`, solved by iterative hard thresholding.
    #[default]
    L0,
    /// `lambda ||A||_1`, solved by accelerated proximal gradient.
    L1,
}

/// How `rho` evolves between outer iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSchedule {
    /// Multiply by `eta` when `delta1 >= ratio * delta2`, divide by `eta`
    /// when `delta2 >= ratio * delta1`, otherwise keep.
    Balanced { ratio: f64 },
    /// Multiply by `eta` after every iteration.
    Geometric,
}

impl Default for RhoSchedule {
    fn default() -> Self {
        RhoSchedule::Balanced { ratio: 10.0 }
    }
}

impl RhoSchedule {
    /// Next value of `rho` given the residuals of the iteration just run.
    pub fn next(&self, rho: f64, eta: f64, delta1: f64, delta2: f64) -> f64 {
        match *self {
            RhoSchedule::Balanced { ratio } => {
                if delta1 >= ratio * delta2 {
                    rho * eta
                } else if delta2 >= ratio * delta1 {
                    rho / eta
                } else {
                    rho
                }
            }
            RhoSchedule::Geometric => rho * eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    /// Relative-change tolerance of the A-step.
    pub eps1: f64,
    /// Relative-change tolerance of the D-step.
    pub eps2: f64,
    /// Primal residual stop; `None` scales with the problem size.
    pub delta1_stop: Option<f64>,
    /// Dual residual stop; `None` scales with the problem size.
    pub delta2_stop: Option<f64>,
    pub eta: f64,
    pub rho0: f64,
    pub lambda: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub newton_damping_delta: f64,
    pub penalty: Penalty,
    pub rho_schedule: RhoSchedule,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-7,
            eps2: 1e-7,
            delta1_stop: None,
            delta2_stop: None,
            eta: 1.05,
            rho0: 1e-3,
            lambda: 0.0,
            max_outer_iters: 2000,
            max_inner_iters: 500,
            newton_damping_delta: 1e-6,
            penalty: Penalty::L0,
            rho_schedule: RhoSchedule::default(),
        }
    }
}

impl AdmmConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        positive("eps1", self.eps1)?;
        positive("eps2", self.eps2)?;
        positive("rho0", self.rho0)?;
        positive("newton_damping_delta", self.newton_damping_delta)?;
        if let Some(v) = self.delta1_stop {
            positive("delta1_stop", v)?;
        }
        if let Some(v) = self.delta2_stop {
            positive("delta2_stop", v)?;
        }
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::param("eta", format!("must exceed 1, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be nonnegative, got {}", self.lambda),
            ));
        }
        if let RhoSchedule::Balanced { ratio } = self.rho_schedule {
            if !(ratio >= 1.0 && ratio.is_finite()) {
                return Err(Error::param(
                    "rho_balance",
                    format!("must be at least 1, got {ratio}"),
                ));
            }
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::param("max_iters", "iteration caps must be positive"));
        }
        Ok(())
    }

    /// Residual stops actually used for an `n1 x n2` problem. The defaults
    /// are `10 sqrt(n1 n2 / 1e5)`, i.e. 10 at 100 x 1000.
    pub fn stop_thresholds(&self, n1: usize, n2: usize) -> (f64, f64) {
        let scaled = 10.0 * ((n1 * n2) as f64 / 1e5).sqrt();
        (
            self.delta1_stop.unwrap_or(scaled),
            self.delta2_stop.unwrap_or(scaled),
        )
    }
}

/// Result of an inner iterative solve.
#[derive(Debug, Clone)]
pub struct SubsolveOutcome {
    pub value: DMatrix<f64>,
    pub iterations: usize,
    /// `false` when the iteration cap was reached first.
    pub converged: bool,
}

/// Snapshot of the ADMM iterates after an outer iteration.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: DMatrix<f64>,
    pub factors: FactorPair,
    pub dual: DMatrix<f64>,
    pub rho: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub delta1: f64,
    pub delta2: f64,
    /// Penalty parameter used during this iteration.
    pub rho: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmSolution {
    pub factors: FactorPair,
    /// Final X-iterate of S1 (box-feasible, not necessarily equal to `D A`).
    pub x: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    /// `true` when the residual test fired before `max_outer_iters`.
    pub converged: bool,
}

impl AdmmSolution {
    pub fn outer_iters(&self) -> usize {
        self.trace.len()
    }

    /// The estimate `D A`.
    pub fn estimate(&self) -> DMatrix<f64> {
        self.factors.product()
    }
}

/// Largest singular value of `d`, by power iteration on `d^T d` started from
/// the normalized all-ones vector.
pub fn spectral_norm(d: &DMatrix<f64>, tol: f64) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let gram = d.tr_mul(d);
    gram_spectral_radius(&gram, tol).sqrt()
}

fn gram_spectral_radius(gram: &DMatrix<f64>, tol: f64) -> f64 {
    let r = gram.nrows();
    let mut v = DVector::from_element(r, 1.0 / (r as f64).sqrt());
    let mut estimate = 0.0f64;
    for _ in 0..10_000 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            if estimate == 0.0 && gram.iter().any(|x| *x != 0.0) {
                // all-ones start lies in the null space; restart on the
                // heaviest coordinate direction
                let j = gram.diagonal().imax();
                v = DVector::zeros(r);
                v[j] = 1.0;
                estimate = -1.0;
                continue;
            }
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= tol * next.abs() {
            // Rayleigh quotient at the refreshed vector
            return (gram * &v).dot(&v).max(next);
        }
        estimate = next;
    }
    estimate
}

/// S1: entry-wise X-update. `da` is the current product `D A` and `dual` the
/// multiplier matrix.
pub fn update_x(
    problem: &CompletionProblem,
    da: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let (n1, n2) = problem.shape();
    if da.shape() != (n1, n2) {
        return Err(Error::ShapeMismatch {
            expected: (n1, n2),
            found: da.shape(),
        });
    }
    if dual.shape() != (n1, n2) {
        return Err(Error::ShapeMismatch {
            expected: (n1, n2),
            found: dual.shape(),
        });
    }
    let lik = problem.likelihood();
    let x_box = problem.x_box;
    let obs = problem.dense_observations();
    let mut x = DMatrix::zeros(n1, n2);
    for (k, ((out, &p), &l)) in x
        .as_mut_slice()
        .iter_mut()
        .zip(da.as_slice())
        .zip(dual.as_slice())
        .enumerate()
    {
        let target = p - l / rho;
        let y = obs[k];
        let v = if y.is_nan() {
            target
        } else {
            lik.prox(target, rho, y)?
        };
        *out = x_box.clamp(v);
    }
    Ok(x)
}

/// Objective of the A-step: `lambda ||A||_0 + rho/2 ||Z - D A||_F^2`, or
/// `+inf` if `A` leaves the box.
pub fn a_step_objective(
    d: &DMatrix<f64>,
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda: f64,
    rho: f64,
    a_box: &BoxBounds,
) -> f64 {
    if a.iter().any(|v| !a_box.contains(*v)) {
        return f64::INFINITY;
    }
    let nnz = a.iter().filter(|v| **v != 0.0).count() as f64;
    lambda * nnz + 0.5 * rho * (z - d * a).norm_squared()
}

/// S2 with the l0 penalty: constrained iterative hard thresholding.
///
/// Starting from `A = 0`, iterates `Y = A - D^T (D A - Z) / ||D||_2^2` and
/// maps every entry through the exact scalar proximal step of
/// `I_A + lambda ||.||_0` with weight `rho ||D||_2^2 / 2`: an entry is zeroed
/// when `|y| <= sqrt(2 lambda / (rho ||D||_2^2))`, otherwise it is clamped to
/// the box. (The box branch of the quadratic argmin is the clamp of `y`.)
/// When the clamp is active the zero and clamped candidates are compared
/// directly, which keeps the iteration monotone.
pub fn a_iht(
    d: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda: f64,
    rho: f64,
    a_box: &BoxBounds,
    eps: f64,
    max_iters: usize,
) -> Result<SubsolveOutcome> {
    check_factor_shapes(d, z)?;
    let gram = d.tr_mul(d);
    let lip = gram_spectral_radius(&gram, 1e-12);
    if !(lip > 0.0) {
        return Err(Error::ZeroDictionary);
    }
    let dtz = d.tr_mul(z);
    let r = d.ncols();
    let n2 = z.ncols();
    let zero_in_box = a_box.contains(0.0);
    // 2 lambda / (rho L): the squared hard threshold
    let keep_cost = 2.0 * lambda / (rho * lip);

    let mut a = DMatrix::<f64>::zeros(r, n2);
    let mut next = DMatrix::<f64>::zeros(r, n2);
    let mut grad = DMatrix::<f64>::zeros(r, n2);
    for it in 1..=max_iters {
        // grad = D^T D A - D^T Z
        grad.gemm(1.0, &gram, &a, 0.0);
        grad -= &dtz;
        for ((out, &cur), &g) in next
            .as_mut_slice()
            .iter_mut()
            .zip(a.as_slice())
            .zip(grad.as_slice())
        {
            let y = cur - g / lip;
            let c = a_box.clamp(y);
            *out = if zero_in_box && y * y <= keep_cost + (c - y) * (c - y) {
                0.0
            } else {
                c
            };
        }
        let base = a.norm();
        let change = (&next - &a).norm();
        std::mem::swap(&mut a, &mut next);
        let done = if base == 0.0 {
            change == 0.0
        } else {
            change / base <= eps
        };
        if done {
            return Ok(SubsolveOutcome {
                value: a,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(SubsolveOutcome {
        value: a,
        iterations: max_iters,
        converged: false,
    })
}

/// Objective of the D-step: `rho/2 ||Z - D A||_F^2`, or `+inf` if `D` leaves
/// the box.
pub fn d_step_objective(
    d: &DMatrix<f64>,
    a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    rho: f64,
    d_box: &BoxBounds,
) -> f64 {
    if d.iter().any(|v| !d_box.contains(*v)) {
        return f64::INFINITY;
    }
    0.5 * rho * (z - d * a).norm_squared()
}

/// S3: projected Newton for `min_{D in box} rho/2 ||Z - D A||_F^2`.
///
/// Starting from `D = 0`, each row moves by the damped Newton step
/// `g (rho A A^T + delta I)^{-1}` restricted to coordinates that are not
/// held at a bound by the gradient, and the result is projected onto the
/// box. With no bound active this is exactly
/// `D - rho (D A - Z) A^T (rho A A^T + delta I)^{-1}`. Coordinates near a
/// bound with an outward gradient take a gradient step instead, and an
/// Armijo backtrack on the projection arc makes every row step a descent
/// step (Bertsekas' projected Newton method).
#[allow(clippy::too_many_arguments)]
pub fn d_newton(
    a: &DMatrix<f64>,
    z: &DMatrix<f64>,
    rho: f64,
    d_box: &BoxBounds,
    eps: f64,
    delta: f64,
    max_iters: usize,
) -> Result<SubsolveOutcome> {
    if a.ncols() != z.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (z.nrows(), a.ncols()),
            found: z.shape(),
        });
    }
    if !(delta > 0.0) {
        return Err(Error::param("newton_damping_delta", "must be positive"));
    }
    let r = a.nrows();
    let n1 = z.nrows();
    // row objective: 1/2 d H d^T - c . d with H = rho A A^T, c = rho (Z A^T)_i
    let h = a * a.transpose() * rho;
    let c = z * a.transpose() * rho;
    let mut damped = h.clone();
    for k in 0..r {
        damped[(k, k)] += delta;
    }
    let full = Cholesky::new(damped.clone()).ok_or(Error::SingularSystem)?;

    let row_objective = |d: &DVector<f64>, ci: &DVector<f64>| 0.5 * (&h * d).dot(d) - ci.dot(d);

    let d_box_width = d_box.hi() - d_box.lo();
    let mut dm = DMatrix::<f64>::zeros(n1, r);
    let mut next = dm.clone();
    for it in 1..=max_iters {
        for i in 0..n1 {
            let di: DVector<f64> = dm.row(i).transpose();
            let ci: DVector<f64> = c.row(i).transpose();
            let g = &h * &di - &ci;
            // Bertsekas' epsilon-active set: coordinates within `eps_k` of a
            // bound with the gradient pointing outward take a plain gradient
            // step, the rest take the damped Newton step
            let pg = (0..r)
                .map(|j| di[j] - d_box.clamp(di[j] - g[j]))
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if pg == 0.0 {
                next.set_row(i, &di.transpose());
                continue;
            }
            let eps_k = pg.min(ACTIVE_SET_EPS * d_box_width.max(f64::MIN_POSITIVE));
            let active: Vec<bool> = (0..r)
                .map(|j| {
                    (di[j] <= d_box.lo() + eps_k && g[j] > 0.0)
                        || (di[j] >= d_box.hi() - eps_k && g[j] < 0.0)
                })
                .collect();
            let free: Vec<usize> = (0..r).filter(|&j| !active[j]).collect();
            let mut step = DVector::<f64>::zeros(r);
            for j in 0..r {
                if active[j] {
                    step[j] = g[j];
                }
            }
            if free.len() == r {
                step = full.solve(&g);
            } else if !free.is_empty() {
                let sub = DMatrix::from_fn(free.len(), free.len(), |p, q| damped[(free[p], free[q])]);
                let rhs = DVector::from_fn(free.len(), |p, _| g[free[p]]);
                let sol = Cholesky::new(sub)
                    .ok_or(Error::SingularSystem)?
                    .solve(&rhs);
                for (p, &j) in free.iter().enumerate() {
                    step[j] = sol[p];
                }
            }
            // Armijo rule along the projection arc
            let f0 = row_objective(&di, &ci);
            let newton_slope: f64 = free.iter().map(|&j| g[j] * step[j]).sum();
            let mut t = 1.0;
            let mut accepted = di.clone();
            for _ in 0..ARMIJO_MAX_HALVINGS {
                let trial = (&di - &step * t).map(|v| d_box.clamp(v));
                let active_decrease: f64 = (0..r)
                    .filter(|&j| active[j])
                    .map(|j| g[j] * (di[j] - trial[j]))
                    .sum();
                let predicted = t * newton_slope + active_decrease;
                if f0 - row_objective(&trial, &ci) >= ARMIJO_SIGMA * predicted {
                    accepted = trial;
                    break;
                }
                t *= 0.5;
            }
            next.set_row(i, &accepted.transpose());
        }
        let base = dm.norm();
        let change = (&next - &dm).norm();
        std::mem::swap(&mut dm, &mut next);
        let done = if base == 0.0 {
            change == 0.0
        } else {
            change / base <= eps
        };
        if done {
            return Ok(SubsolveOutcome {
                value: dm,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(SubsolveOutcome {
        value: dm,
        iterations: max_iters,
        converged: false,
    })
}

fn check_factor_shapes(d: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
    if d.nrows() != z.nrows() {
        return Err(Error::ShapeMismatch {
            expected: (d.nrows(), z.ncols()),
            found: z.shape(),
        });
    }
    Ok(())
}

/// Value of the penalized negative log-likelihood at `(X, A)`.
pub fn objective_value(problem: &CompletionProblem, x: &DMatrix<f64>, a: &DMatrix<f64>, config: &AdmmConfig) -> f64 {
    let lik = problem.likelihood();
    let data: f64 = problem
        .mask()
        .entries()
        .iter()
        .zip(problem.observations())
        .map(|(&(i, j), &y)| lik.loss(y, x[(i, j)]))
        .sum();
    let reg = match config.penalty {
        Penalty::L0 => a.iter().filter(|v| **v != 0.0).count() as f64,
        Penalty::L1 => a.iter().map(|v| v.abs()).sum(),
    };
    data + config.lambda * reg
}

/// Runs ADMM to a stationary point of the constrained penalized likelihood.
///
/// Without `init`, `D` is drawn uniformly over the D-box from `rng` and
/// `A = 0`; the dual always starts at zero.
pub fn admm_solve<R: Rng + ?Sized>(
    problem: &CompletionProblem,
    config: &AdmmConfig,
    init: Option<FactorPair>,
    rng: &mut R,
) -> Result<AdmmSolution> {
    config.validate()?;
    if problem.mask().is_empty() {
        return Err(Error::InvalidProblem("no observed entries".into()));
    }
    let (n1, n2) = problem.shape();
    let r = problem.rank();
    let (d, a) = match init {
        Some(f) => {
            if f.d.shape() != (n1, r) || f.a.shape() != (r, n2) {
                return Err(Error::ShapeMismatch {
                    expected: (n1, r),
                    found: f.d.shape(),
                });
            }
            (f.d, f.a)
        }
        None => {
            let (lo, hi) = (problem.d_box.lo(), problem.d_box.hi());
            let d = DMatrix::from_fn(n1, r, |_, _| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            });
            (d, DMatrix::zeros(r, n2))
        }
    };
    let mut state = AdmmState {
        x: DMatrix::zeros(n1, n2),
        factors: FactorPair { d, a },
        dual: DMatrix::zeros(n1, n2),
        rho: config.rho0,
        delta1: f64::INFINITY,
        delta2: f64::INFINITY,
        iter: 0,
    };
    let (stop1, stop2) = config.stop_thresholds(n1, n2);
    let mut trace = Vec::new();
    let mut product = state.factors.product();
    let mut converged = false;

    for k in 0..config.max_outer_iters {
        let rho = state.rho;
        let wrap = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let x = update_x(problem, &product, &state.dual, rho).map_err(wrap)?;
        let z = &x + &state.dual / rho;

        let a_new = match config.penalty {
            Penalty::L0 => a_iht(
                &state.factors.d,
                &z,
                config.lambda,
                rho,
                &problem.a_box,
                config.eps1,
                config.max_inner_iters,
            ),
            Penalty::L1 => baselines::a_l1_subsolve(
                &state.factors.d,
                &z,
                config.lambda,
                rho,
                &problem.a_box,
                config.eps1,
                config.max_inner_iters,
            ),
        }
        .map_err(wrap)?
        .value;

        // The D-step objective does not depend on the columns of D whose
        // row of A is zero. Those columns keep their current values rather
        // than the zero start of the Newton iteration, so that an atom
        // dropped at a large threshold can re-enter once rho has grown.
        let live: Vec<bool> = a_new.row_iter().map(|row| row.iter().any(|v| *v != 0.0)).collect();
        let d_new = if live.iter().any(|l| *l) {
            let mut d = d_newton(
                &a_new,
                &z,
                rho,
                &problem.d_box,
                config.eps2,
                config.newton_damping_delta,
                config.max_inner_iters,
            )
            .map_err(wrap)?
            .value;
            for (j, alive) in live.iter().enumerate() {
                if !alive {
                    d.set_column(j, &state.factors.d.column(j));
                }
            }
            project_box_mut(&mut d, &problem.d_box);
            d
        } else {
            state.factors.d.clone()
        };

        let new_product = &d_new * &a_new;
        let primal = &x - &new_product;
        state.dual += &primal * rho;
        let delta1 = primal.norm();
        let delta2 = rho * (&product - &new_product).norm();
        let objective = objective_value(problem, &x, &a_new, config);
        trace.push(TraceRecord {
            iter: k,
            delta1,
            delta2,
            rho,
            objective,
        });

        state.rho = config.rho_schedule.next(rho, config.eta, delta1, delta2);
        state.x = x;
        state.factors = FactorPair { d: d_new, a: a_new };
        state.delta1 = delta1;
        state.delta2 = delta2;
        state.iter = k + 1;
        product = new_product;

        if delta1 <= stop1 && delta2 <= stop2 {
            converged = true;
            break;
        }
    }

    Ok(AdmmSolution {
        factors: state.factors,
        x: state.x,
        trace,
        converged,
    })
}

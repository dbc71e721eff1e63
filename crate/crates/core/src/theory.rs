//! Calculators for the theoretical quantities attached to the estimator:
//! the discretization exponent `beta`, the penalty weight `lambda`, the
//! weak-lp approximation bound and the per-element error bounds for each
//! likelihood, evaluated with explicit constants.
//!
//! All logarithms are natural.

use crate::error::{Error, Result};
use crate::likelihoods::{Likelihood, LINK_GRID_POINTS};

/// Sparsity model of the true coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sparsity {
    /// Exactly sparse with `a_l0` nonzero entries in total.
    Exact { a_l0: usize },
    /// Every column lies in a weak-lp ball of radius `a_max`.
    WeakLp { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    /// Nominal number of observations.
    pub m: usize,
    pub sparsity: Sparsity,
    pub a_max: f64,
    pub x_max: f64,
    /// Smallest true entry; required for Poisson.
    pub x_min: Option<f64>,
    pub likelihood: Likelihood,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.r == 0 || self.m == 0 {
            return Err(Error::param("dimensions", "n1, n2, r and m must be positive"));
        }
        if self.m > self.n1 * self.n2 {
            return Err(Error::param(
                "m",
                format!("{} exceeds n1 * n2 = {}", self.m, self.n1 * self.n2),
            ));
        }
        if !(self.x_max >= 1.0 && self.x_max.is_finite()) {
            return Err(Error::param("x_max", format!("must be at least 1, got {}", self.x_max)));
        }
        let n_max = self.n1.max(self.n2) as f64;
        if !(self.a_max > 0.0 && self.a_max <= n_max) {
            return Err(Error::param(
                "a_max",
                format!("must lie in (0, max(n1, n2)] = (0, {n_max}], got {}", self.a_max),
            ));
        }
        match self.sparsity {
            Sparsity::Exact { a_l0 } => {
                if a_l0 > self.r * self.n2 {
                    return Err(Error::param(
                        "a_l0",
                        format!("{a_l0} exceeds r * n2 = {}", self.r * self.n2),
                    ));
                }
            }
            Sparsity::WeakLp { p } => {
                let p_cap = match self.likelihood {
                    Likelihood::Laplace { .. } => 0.5,
                    _ => 1.0,
                };
                if !(p > 0.0 && p <= p_cap) {
                    return Err(Error::param(
                        "p",
                        format!("must lie in (0, {p_cap}] for the {} model, got {p}", self.likelihood.name()),
                    ));
                }
            }
        }
        if let Likelihood::Poisson = self.likelihood {
            let x_min = self.x_min.ok_or_else(|| {
                Error::MissingParameter("x_min is required for the Poisson bound".into())
            })?;
            if !(x_min > 0.0 && x_min <= self.x_max) {
                return Err(Error::param(
                    "x_min",
                    format!("must lie in (0, x_max], got {x_min}"),
                ));
            }
        }
        if let Likelihood::OneBit(link) = self.likelihood {
            let p = link.cdf(self.x_max);
            if !(p < 1.0 && link.cdf(-self.x_max) > 0.0) {
                return Err(Error::param(
                    "x_max",
                    "link saturates on [-x_max, x_max]; c' would vanish",
                ));
            }
        }
        Ok(())
    }

    fn n_max(&self) -> f64 {
        self.n1.max(self.n2) as f64
    }

    fn c_d(&self) -> Result<f64> {
        self.likelihood.theory_constant_cd(self.x_max, self.x_min)
    }
}

/// `beta = max(1, 1 + log(8 r Amax / Xmax) / log(n1 v n2))`.
pub fn compute_beta(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let ratio = 8.0 * inputs.r as f64 * inputs.a_max / inputs.x_max;
    Ok(beta_from(ratio, inputs.n_max()))
}

fn beta_from(ratio: f64, n_max: f64) -> f64 {
    if n_max <= 1.0 {
        return 1.0;
    }
    (1.0 + ratio.ln() / n_max.ln()).max(1.0)
}

/// `lambda = 2 (1 + 2 C_D / 3) (beta + 2) log(n_max)`.
pub fn lambda_from_cd(c_d: f64, beta: f64, n_max: f64) -> f64 {
    2.0 * (1.0 + 2.0 * c_d / 3.0) * (beta + 2.0) * n_max.ln()
}

/// Penalty weight for the inputs' likelihood, with `C_D` taken from the
/// likelihood.
pub fn compute_lambda(inputs: &BoundInputs, beta: f64) -> Result<f64> {
    inputs.validate()?;
    Ok(lambda_from_cd(inputs.c_d()?, beta, inputs.n_max()))
}

/// Bound on the lq error of the best k-term approximation of a vector in the
/// weak-lp ball of radius `radius`: `R C k^(1/q - 1/p)` with
/// `C = (p / (q - p))^(1/q)`, replaced by 1 once `q >= 2p`.
pub fn weak_lp_approx_error(radius: f64, p: f64, k: usize, q: f64) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be positive, got {radius}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
    }
    if !(q > p && q.is_finite()) {
        return Err(Error::param("q", format!("must exceed p = {p}, got {q}")));
    }
    if k == 0 {
        return Err(Error::param("k", "must be positive"));
    }
    let c = if q >= 2.0 * p {
        1.0
    } else {
        (p / (q - p)).powf(1.0 / q)
    };
    Ok(radius * c * (k as f64).powf(1.0 / q - 1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    /// Right-hand side of the per-element mean-square error bound.
    pub value: f64,
    pub beta: f64,
    pub lambda: f64,
    pub c_d: f64,
    /// Balancing sparsity level (weak-lp inputs only).
    pub k: Option<f64>,
}

/// Per-element mean-square error bound for the inputs' likelihood and
/// sparsity model.
///
/// Poisson and one-bit bounds evaluate the general oracle inequality at the
/// quantized truth (exact sparsity) or at the quantized best k-term
/// approximation (weak-lp), whose squared error per element is at most
/// `Xmax^2 / m`, respectively `4 Amax^2 k^(-2 alpha) + 4 Xmax^2 / m`.
pub fn corollary_bound(inputs: &BoundInputs) -> Result<BoundValue> {
    inputs.validate()?;
    let beta = compute_beta(inputs)?;
    let c_d = inputs.c_d()?;
    let n_max = inputs.n_max();
    let lambda = lambda_from_cd(c_d, beta, n_max);

    let m = inputs.m as f64;
    let n1r = (inputs.n1 * inputs.r) as f64;
    let n2 = inputs.n2 as f64;
    let log_m = m.ln();
    let log_n = n_max.ln();
    let bl = (beta + 2.0) * log_n;
    let xm = inputs.x_max;
    let xm2 = xm * xm;
    let am = inputs.a_max;

    // weak-lp: k balances the approximation and complexity terms, and both
    // collapse to (n2/m)^(2a/(2a+1)) (or (n2/m)^(a'/(a'+1)) for Laplace)
    let (value, k) = match (inputs.likelihood, inputs.sparsity) {
        (Likelihood::Gaussian { sigma }, Sparsity::Exact { a_l0 }) => {
            let s2 = sigma * sigma;
            let v = 70.0 * xm2 * log_m / m
                + 8.0 * (3.0 * s2 + 8.0 * xm2) * bl * (n1r + a_l0 as f64) / m;
            (v, None)
        }
        (Likelihood::Gaussian { sigma }, Sparsity::WeakLp { p }) => {
            let s2 = sigma * sigma;
            let alpha = 1.0 / p - 0.5;
            let rate = (n2 / m).powf(2.0 * alpha / (2.0 * alpha + 1.0));
            let c = 8.0 * (3.0 * s2 + 8.0 * xm2) * bl;
            let v = 88.0 * xm2 * log_m / m + c * n1r / m + (24.0 * am * am + c) * rate;
            (v, Some((m / n2).powf(1.0 / (1.0 + 2.0 * alpha))))
        }
        (Likelihood::Laplace { tau }, sparsity) => {
            let lead = (tau * xm + 1.0).powi(2) / (tau * tau);
            let first = 76.0 * lead * tau * xm * log_m / m;
            let c = (2.0 + 16.0 * tau * xm / 3.0) * bl;
            match sparsity {
                Sparsity::Exact { a_l0 } => {
                    (first + 12.0 * lead * c * (n1r + a_l0 as f64) / m, None)
                }
                Sparsity::WeakLp { p } => {
                    let alpha = 1.0 / p - 1.0;
                    let rate = (n2 / m).powf(alpha / (alpha + 1.0));
                    let v = first + 12.0 * lead * c * n1r / m + 12.0 * lead * (tau * am + c) * rate;
                    (v, Some((m / n2).powf(1.0 / (1.0 + alpha))))
                }
            }
        }
        (Likelihood::Poisson, sparsity) => {
            let x_min = inputs.x_min.expect("validated");
            let lead = 12.0 * xm / x_min;
            let first = 128.0 * xm2 * xm * log_m / (x_min * m);
            let weight = lambda + 16.0 * xm2 * bl / 3.0;
            let (approx, complexity, k) = oracle_terms(sparsity, am, xm2, m, n1r, n2);
            (first + lead * (approx + weight * complexity), k)
        }
        (Likelihood::OneBit(link), sparsity) => {
            let (c, c_prime) = link.curvature_constants(xm, LINK_GRID_POINTS);
            let ratio = c / c_prime;
            let first = ratio * 128.0 * xm2 * log_m / m;
            let weight = lambda / c + 8.0 * xm2 * bl / 3.0;
            let (approx, complexity, k) = oracle_terms(sparsity, am, xm2, m, n1r, n2);
            (first + 24.0 * ratio * (approx + weight * complexity), k)
        }
    };
    Ok(BoundValue {
        value,
        beta,
        lambda,
        c_d,
        k,
    })
}

/// Approximation error and `(n1 r + nnz) / m` of the oracle candidate.
fn oracle_terms(
    sparsity: Sparsity,
    a_max: f64,
    x_max2: f64,
    m: f64,
    n1r: f64,
    n2: f64,
) -> (f64, f64, Option<f64>) {
    match sparsity {
        Sparsity::Exact { a_l0 } => (x_max2 / m, (n1r + a_l0 as f64) / m, None),
        Sparsity::WeakLp { p } => {
            let alpha = 1.0 / p - 0.5;
            let k = (m / n2).powf(1.0 / (1.0 + 2.0 * alpha));
            let approx = 4.0 * a_max * a_max * k.powf(-2.0 * alpha) + 4.0 * x_max2 / m;
            (approx, (n1r + k * n2) / m, Some(k))
        }
    }
}

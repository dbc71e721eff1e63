//! Comparison solvers: the l1-relaxed A-step used inside ADMM and
//! nuclear-norm regularized completion.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::likelihoods::soft_threshold;
use crate::problem::{BoxBounds, CompletionProblem};
use crate::solver::{spectral_norm, SubsolveOutcome};

const NUCLEAR_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    /// ADMM with the l1 A-step.
    L1Admm { lambda: f64 },
    NuclearNorm {
        lambda: f64,
        step: f64,
        max_iters: usize,
    },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::L1Admm { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::param("lambda", "must be nonnegative"));
                }
            }
            BaselineKind::NuclearNorm {
                lambda,
                step,
                max_iters,
            } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::param("lambda", "must be nonnegative"));
                }
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::param("step", "must be positive"));
                }
                if max_iters == 0 {
                    return Err(Error::param("max_iters", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Objective of the l1 A-step: `lambda ||A||_1 + rho/2 ||Z - D A||_F^2`, or
/// `+inf` outside the box.
pub fn a_l1_objective(
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
    lambda * a.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * rho * (z - d * a).norm_squared()
}

/// Solves `min_A I_A(A) + lambda ||A||_1 + rho/2 ||Z - D A||_F^2` with the
/// monotone variant of FISTA, starting from `A = 0`. The proximal map is
/// soft thresholding at `lambda / (rho L)` followed by a clamp to the box,
/// where `L = ||D||_2^2`.
pub fn a_l1_subsolve(
    d: &DMatrix<f64>,
    z: &DMatrix<f64>,
    lambda: f64,
    rho: f64,
    a_box: &BoxBounds,
    eps: f64,
    max_iters: usize,
) -> Result<SubsolveOutcome> {
    if d.nrows() != z.nrows() {
        return Err(Error::ShapeMismatch {
            expected: (d.nrows(), z.ncols()),
            found: z.shape(),
        });
    }
    let lip = spectral_norm(d, 1e-12).powi(2);
    if !(lip > 0.0) {
        return Err(Error::ZeroDictionary);
    }
    let gram = d.tr_mul(d);
    let dtz = d.tr_mul(z);
    let zz = z.norm_squared();
    let shrink = lambda / (rho * lip);
    // objective through the Gram matrix: O(r^2 n2) instead of O(n1 r n2)
    let objective = |a: &DMatrix<f64>| {
        let quad = (&gram * a).dot(a) - 2.0 * dtz.dot(a) + zz;
        lambda * a.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * rho * quad.max(0.0)
    };

    let (r, n2) = (d.ncols(), z.ncols());
    let mut a = DMatrix::<f64>::zeros(r, n2);
    let mut f_a = objective(&a);
    let mut y = a.clone();
    let mut t = 1.0f64;
    for it in 1..=max_iters {
        let grad = &gram * &y - &dtz;
        let u = (&y - grad / lip).map(|v| a_box.clamp(soft_threshold(v, shrink)));
        let f_u = objective(&u);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let accept = f_u <= f_a;
        let a_next = if accept { u.clone() } else { a.clone() };
        y = &a_next + (&u - &a_next) * (t / t_next) + (&a_next - &a) * ((t - 1.0) / t_next);

        let base = a.norm();
        let change = (&u - &a).norm();
        a = a_next;
        if accept {
            f_a = f_u;
        }
        t = t_next;
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

/// Thin SVD `(U, s, V^T)`. Far-from-square inputs are reduced by a QR
/// factorization first, so the dense SVD only sees the small triangular
/// factor.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (n1, n2) = m.shape();
    let split = |svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>| -> Result<_> {
        let s = svd.singular_values.iter().copied().collect();
        Ok((svd.u.ok_or(Error::SvdFailed)?, s, svd.v_t.ok_or(Error::SvdFailed)?))
    };
    if n2 >= 2 * n1 {
        // M^T = Q R and R = U_r S V_r^T give M = V_r S (Q U_r)^T
        let qr = m.transpose().qr();
        let (q, r) = qr.unpack();
        let (u_r, s, v_r_t) = split(SVD::try_new(r, true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?)?;
        Ok((v_r_t.transpose(), s, (q * u_r).transpose()))
    } else if n1 >= 2 * n2 {
        let qr = m.clone().qr();
        let (q, r) = qr.unpack();
        let (u_r, s, v_r_t) = split(SVD::try_new(r, true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?)?;
        Ok((q * u_r, s, v_r_t))
    } else {
        split(SVD::try_new(m.clone(), true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?)
    }
}

/// Singular-value soft thresholding: `U diag(max(s - threshold, 0)) V^T`.
pub fn singular_value_threshold(m: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    Ok(shrink_singular_values(m, threshold)?.0)
}

/// Thresholded matrix and the nuclear norm of the result.
fn shrink_singular_values(m: &DMatrix<f64>, threshold: f64) -> Result<(DMatrix<f64>, f64)> {
    let (u, sv, v_t) = thin_svd(m)?;
    let kept: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > threshold).collect();
    if kept.is_empty() {
        return Ok((DMatrix::zeros(m.nrows(), m.ncols()), 0.0));
    }
    let left = DMatrix::from_fn(m.nrows(), kept.len(), |i, p| u[(i, kept[p])] * (sv[kept[p]] - threshold));
    let right = v_t.select_rows(&kept);
    let nuc = kept.iter().map(|&k| sv[k] - threshold).sum();
    Ok((left * right, nuc))
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    Ok(svd.singular_values.sum())
}

#[derive(Debug, Clone)]
pub struct NuclearNormOutcome {
    pub x: DMatrix<f64>,
    /// Objective after each iteration.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

/// `min_X ||Y_S - X_S||_F^2 + lambda ||X||_*` by proximal gradient from
/// `X = 0`, stopping once the relative change drops below 1e-7.
pub fn nuclear_norm_complete(
    problem: &CompletionProblem,
    lambda: f64,
    step: f64,
    max_iters: usize,
) -> Result<NuclearNormOutcome> {
    BaselineKind::NuclearNorm {
        lambda,
        step,
        max_iters,
    }
    .validate()?;
    if problem.mask().is_empty() {
        return Err(Error::InvalidProblem("no observed entries".into()));
    }
    let (n1, n2) = problem.shape();
    let obs = problem.dense_observations();
    let mut x = DMatrix::<f64>::zeros(n1, n2);
    let mut objectives = Vec::new();
    for _ in 0..max_iters {
        let mut target = x.clone();
        for (t, &y) in target.as_mut_slice().iter_mut().zip(obs) {
            if !y.is_nan() {
                // gradient of the fit is 2 (X - Y) on observed entries
                *t -= step * 2.0 * (*t - y);
            }
        }
        let (next, nuc) = shrink_singular_values(&target, lambda * step)?;
        let fit: f64 = next
            .as_slice()
            .iter()
            .zip(obs)
            .filter(|(_, y)| !y.is_nan())
            .map(|(v, y)| (v - y) * (v - y))
            .sum();
        objectives.push(fit + lambda * nuc);
        let base = x.norm();
        let change = (&next - &x).norm();
        x = next;
        if (base == 0.0 && change == 0.0) || (base > 0.0 && change / base <= NUCLEAR_REL_TOL) {
            return Ok(NuclearNormOutcome {
                x,
                objectives,
                converged: true,
            });
        }
    }
    Ok(NuclearNormOutcome {
        x,
        objectives,
        converged: false,
    })
}

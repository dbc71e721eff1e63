//! Shared domain types: sample masks, entry-wise boxes, factor pairs and
//! completion problem instances.
//!
//! Indices are 0-based everywhere. All matrices are dense `DMatrix<f64>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihoods::Likelihood;

/// Closed interval `[lo, hi]` applied entry-wise to a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    lo: f64,
    hi: f64,
}

impl BoxBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-radius, radius]`.
    pub fn symmetric(radius: f64) -> Result<Self> {
        Self::new(-radius, radius)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Largest magnitude admitted by the box.
    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Set of observed locations, kept both as a sorted coordinate list and as a
/// dense membership table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMask {
    n1: usize,
    n2: usize,
    entries: Vec<(usize, usize)>,
    // column-major, matching nalgebra storage
    member: Vec<bool>,
}

impl SampleMask {
    /// Builds a mask from index pairs. Order is irrelevant; duplicates and
    /// out-of-range pairs are rejected.
    pub fn new(n1: usize, n2: usize, mut entries: Vec<(usize, usize)>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidMask(format!(
                "dimensions must be positive, got {n1}x{n2}"
            )));
        }
        let mut member = vec![false; n1 * n2];
        for &(i, j) in &entries {
            if i >= n1 || j >= n2 {
                return Err(Error::InvalidMask(format!(
                    "entry ({i}, {j}) outside {n1}x{n2}"
                )));
            }
            let slot = &mut member[i + j * n1];
            if *slot {
                return Err(Error::InvalidMask(format!("duplicate entry ({i}, {j})")));
            }
            *slot = true;
        }
        entries.sort_unstable();
        Ok(Self {
            n1,
            n2,
            entries,
            member,
        })
    }

    /// Every cell of an `n1 x n2` matrix.
    pub fn full(n1: usize, n2: usize) -> Result<Self> {
        let entries = (0..n1)
            .flat_map(|i| (0..n2).map(move |j| (i, j)))
            .collect();
        Self::new(n1, n2, entries)
    }

    pub(crate) fn from_membership(n1: usize, n2: usize, member: Vec<bool>) -> Self {
        debug_assert_eq!(member.len(), n1 * n2);
        let mut entries = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                if member[i + j * n1] {
                    entries.push((i, j));
                }
            }
        }
        Self {
            n1,
            n2,
            entries,
            member,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted (row, col) pairs.
    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n1 && j < self.n2 && self.member[i + j * self.n1]
    }

    /// Observed fraction `|S| / (n1 n2)`.
    pub fn rate(&self) -> f64 {
        self.entries.len() as f64 / (self.n1 * self.n2) as f64
    }
}

/// The factors `D` (n1 x r) and `A` (r x n2) of `X = D A`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub d: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(d: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        if d.ncols() != a.nrows() {
            return Err(Error::ShapeMismatch {
                expected: (d.ncols(), a.ncols()),
                found: a.shape(),
            });
        }
        if d.ncols() == 0 {
            return Err(Error::param("r", "inner dimension must be positive"));
        }
        if d.ncols() > a.ncols() {
            return Err(Error::param("r", "inner dimension must not exceed n2"));
        }
        Ok(Self { d, a })
    }

    pub fn rank(&self) -> usize {
        self.d.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.d * &self.a
    }

    /// Number of nonzero entries of `A`.
    pub fn a_nnz(&self) -> usize {
        self.a.iter().filter(|v| **v != 0.0).count()
    }
}

/// A full estimation instance: where we looked, what we saw, the noise
/// model and the feasible boxes for `X`, `D` and `A`.
#[derive(Debug, Clone)]
pub struct CompletionProblem {
    mask: SampleMask,
    observations: Vec<f64>,
    likelihood: Likelihood,
    pub x_box: BoxBounds,
    pub d_box: BoxBounds,
    pub a_box: BoxBounds,
    rank: usize,
    // dense view of observations, column-major, NaN where unobserved
    dense: Vec<f64>,
}

impl CompletionProblem {
    /// `observations[k]` belongs to `mask.entries()[k]`.
    pub fn new(
        mask: SampleMask,
        observations: Vec<f64>,
        likelihood: Likelihood,
        x_box: BoxBounds,
        d_box: BoxBounds,
        a_box: BoxBounds,
        rank: usize,
    ) -> Result<Self> {
        if observations.len() != mask.len() {
            return Err(Error::InvalidProblem(format!(
                "{} observations for {} mask entries",
                observations.len(),
                mask.len()
            )));
        }
        let (n1, n2) = mask.shape();
        if rank == 0 || rank > n2 {
            return Err(Error::InvalidProblem(format!(
                "rank {rank} must lie in [1, {n2}]"
            )));
        }
        for &y in &observations {
            if !y.is_finite() {
                return Err(Error::InvalidProblem("non-finite observation".into()));
            }
        }
        match likelihood {
            Likelihood::Poisson => {
                if let Some(y) = observations
                    .iter()
                    .find(|y| **y < 0.0 || y.fract() != 0.0)
                {
                    return Err(Error::InvalidProblem(format!(
                        "Poisson observation {y} is not a nonnegative integer"
                    )));
                }
                if x_box.lo() < 0.0 {
                    return Err(Error::InvalidProblem(
                        "Poisson model requires a nonnegative X box".into(),
                    ));
                }
            }
            Likelihood::OneBit(_) => {
                if let Some(y) = observations.iter().find(|y| **y != 0.0 && **y != 1.0) {
                    return Err(Error::InvalidProblem(format!(
                        "one-bit observation {y} is not 0 or 1"
                    )));
                }
            }
            _ => {}
        }
        let mut dense = vec![f64::NAN; n1 * n2];
        for (&(i, j), &y) in mask.entries().iter().zip(&observations) {
            dense[i + j * n1] = y;
        }
        Ok(Self {
            mask,
            observations,
            likelihood,
            x_box,
            d_box,
            a_box,
            rank,
            dense,
        })
    }

    pub fn mask(&self) -> &SampleMask {
        &self.mask
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn likelihood(&self) -> &Likelihood {
        &self.likelihood
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    /// Observation at `(i, j)`, if that cell was sampled.
    #[inline]
    pub fn observation(&self, i: usize, j: usize) -> Option<f64> {
        let (n1, _) = self.mask.shape();
        let y = self.dense[i + j * n1];
        (!y.is_nan()).then_some(y)
    }

    /// Observations laid out column-major with `NaN` at unobserved cells.
    pub(crate) fn dense_observations(&self) -> &[f64] {
        &self.dense
    }
}

/// Per-element squared error `||X - Xref||_F^2 / (n1 n2)`.
pub fn frobenius_error(x: &DMatrix<f64>, xref: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != xref.shape() {
        return Err(Error::ShapeMismatch {
            expected: xref.shape(),
            found: x.shape(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x
        .iter()
        .zip(xref.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Entry-wise clamp onto `bounds`.
pub fn project_box(m: &DMatrix<f64>, bounds: &BoxBounds) -> DMatrix<f64> {
    m.map(|v| bounds.clamp(v))
}

pub(crate) fn project_box_mut(m: &mut DMatrix<f64>, bounds: &BoxBounds) {
    m.apply(|v| *v = bounds.clamp(*v));
}

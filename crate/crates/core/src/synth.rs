//! Synthetic ground truth and sampling for the error-decay experiments.

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::likelihoods::Likelihood;
use crate::problem::{BoxBounds, CompletionProblem, FactorPair, SampleMask};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientModel {
    /// Every column of `A*` has exactly `k` nonzeros.
    ExactSparse { k: usize },
    /// Each column is a signed permutation of `A*max * i^(-1/p)`, i = 1..r.
    WeakLp { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSpec {
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    pub coefficients: CoefficientModel,
    pub d_box_true: BoxBounds,
    pub a_box_true: BoxBounds,
    /// Suppress signs of `A*` (Poisson mode).
    pub nonnegative: bool,
}

impl GroundTruthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.r == 0 {
            return Err(Error::param("dimensions", "n1, n2 and r must be positive"));
        }
        match self.coefficients {
            CoefficientModel::ExactSparse { k } => {
                if k == 0 || k > self.r {
                    return Err(Error::param(
                        "k",
                        format!("must lie in [1, r = {}], got {k}", self.r),
                    ));
                }
            }
            CoefficientModel::WeakLp { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
                }
            }
        }
        Ok(())
    }

    /// Number of nonzeros of every column of `A*` (all of them for weak-lp).
    pub fn column_nnz(&self) -> usize {
        match self.coefficients {
            CoefficientModel::ExactSparse { k } => k,
            CoefficientModel::WeakLp { .. } => self.r,
        }
    }
}

/// Draws `(D*, A*)`.
///
/// `D*` is a standard normal matrix scaled by `Dmax - Dmin` and clamped to the
/// true D-range. Exactly sparse `A*` is a standard normal matrix scaled by
/// `(Amax - Amin) / 3`, clamped, with `r - k` random entries per column set
/// to zero. In nonnegative mode the magnitude of the normal draw is used so
/// that the `k` retained entries stay nonzero after clamping.
pub fn generate_ground_truth<R: Rng + ?Sized>(
    spec: &GroundTruthSpec,
    rng: &mut R,
) -> Result<FactorPair> {
    spec.validate()?;
    let (n1, n2, r) = (spec.n1, spec.n2, spec.r);
    let dbox = spec.d_box_true;
    let d_scale = dbox.hi() - dbox.lo();
    let d = DMatrix::from_fn(n1, r, |_, _| {
        let g: f64 = rng.sample(StandardNormal);
        dbox.clamp(g * d_scale)
    });

    let abox = spec.a_box_true;
    let mut a = DMatrix::<f64>::zeros(r, n2);
    match spec.coefficients {
        CoefficientModel::ExactSparse { k } => {
            let scale = (abox.hi() - abox.lo()) / 3.0;
            for v in a.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                let g = if spec.nonnegative { g.abs() } else { g };
                *v = abox.clamp(g * scale);
            }
            for j in 0..n2 {
                for i in index::sample(rng, r, r - k) {
                    a[(i, j)] = 0.0;
                }
            }
        }
        CoefficientModel::WeakLp { p } => {
            let amax = abox.max_abs();
            let mut column: Vec<f64> = (1..=r).map(|i| amax * (i as f64).powf(-1.0 / p)).collect();
            for j in 0..n2 {
                column.shuffle(rng);
                for (i, &m) in column.iter().enumerate() {
                    let signed = if spec.nonnegative || rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    };
                    a[(i, j)] = signed;
                }
            }
        }
    }
    FactorPair::new(d, a)
}

/// Independent Bernoulli(`gamma`) sampling of the `n1 x n2` cells.
pub fn sample_mask<R: Rng + ?Sized>(
    n1: usize,
    n2: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<SampleMask> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidMask("zero dimension".into()));
    }
    // column-major membership
    let member = (0..n1 * n2).map(|_| rng.random_bool(gamma)).collect();
    Ok(SampleMask::from_membership(n1, n2, member))
}

/// Feasible sets handed to the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationBoxes {
    pub d_box: BoxBounds,
    pub a_box: BoxBounds,
}

/// A sampled instance together with the truth it came from.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub problem: CompletionProblem,
    pub x_true: DMatrix<f64>,
    /// Smallest and largest entry of `X*`.
    pub x_true_min: f64,
    pub x_true_max: f64,
}

/// X-box used for estimation: `[-2 |X*min|, 2 |X*|max]`, or `[0, 2 X*max]`
/// for nonnegative (Poisson) data.
pub fn estimation_x_box(x_true: &DMatrix<f64>, nonnegative: bool) -> Result<BoxBounds> {
    let lo = x_true.min();
    let hi = x_true.max();
    if nonnegative {
        BoxBounds::new(0.0, 2.0 * hi.max(0.0))
    } else {
        let radius = x_true.amax();
        BoxBounds::new(-2.0 * lo.abs(), 2.0 * radius)
    }
}

/// Draws one observation per mask entry at `X* = D* A*`.
pub fn generate_observations<R: Rng + ?Sized>(
    truth: &FactorPair,
    mask: SampleMask,
    likelihood: Likelihood,
    boxes: &EstimationBoxes,
    rng: &mut R,
) -> Result<GeneratedProblem> {
    let x_true = truth.product();
    if mask.shape() != x_true.shape() {
        return Err(Error::ShapeMismatch {
            expected: x_true.shape(),
            found: mask.shape(),
        });
    }
    let nonnegative = matches!(likelihood, Likelihood::Poisson);
    let mut observations = Vec::with_capacity(mask.len());
    for &(i, j) in mask.entries() {
        let x = x_true[(i, j)];
        let y = likelihood.sample(x, rng).map_err(|_| Error::ObservationDomain {
            row: i,
            col: j,
            value: x,
            model: likelihood.name(),
        })?;
        observations.push(y);
    }
    let x_box = estimation_x_box(&x_true, nonnegative)?;
    let problem = CompletionProblem::new(
        mask,
        observations,
        likelihood,
        x_box,
        boxes.d_box,
        boxes.a_box,
        truth.rank(),
    )?;
    Ok(GeneratedProblem {
        problem,
        x_true_min: x_true.min(),
        x_true_max: x_true.max(),
        x_true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gaussian,
    Laplace,
    Poisson,
    OneBit,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Laplace => "laplace",
            ModelKind::Poisson => "poisson",
            ModelKind::OneBit => "onebit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ModelKind::Gaussian),
            "laplace" => Ok(ModelKind::Laplace),
            "poisson" => Ok(ModelKind::Poisson),
            "onebit" | "one-bit" | "one_bit" => Ok(ModelKind::OneBit),
            other => Err(Error::param("likelihood", format!("unknown model `{other}`"))),
        }
    }
}

/// Ground truth and estimation boxes for one experimental setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSetup {
    pub truth: GroundTruthSpec,
    pub boxes: EstimationBoxes,
}

fn boxes(d: (f64, f64), a: (f64, f64)) -> EstimationBoxes {
    EstimationBoxes {
        d_box: BoxBounds::new(d.0, d.1).expect("static box"),
        a_box: BoxBounds::new(a.0, a.1).expect("static box"),
    }
}

fn setup(
    model: ModelKind,
    n1: usize,
    n2: usize,
    r: usize,
    coefficients: CoefficientModel,
) -> SyntheticSetup {
    let b = |lo, hi| BoxBounds::new(lo, hi).expect("static box");
    let (d_true, a_true, est) = match model {
        ModelKind::Poisson => (b(0.1, 1.0), b(0.0, 40.0), boxes((-2.0, 2.0), (-80.0, 80.0))),
        _ => (b(-1.0, 1.0), b(-20.0, 20.0), boxes((-2.0, 2.0), (-40.0, 40.0))),
    };
    SyntheticSetup {
        truth: GroundTruthSpec {
            n1,
            n2,
            r,
            coefficients,
            d_box_true: d_true,
            a_box_true: a_true,
            nonnegative: model == ModelKind::Poisson,
        },
        boxes: est,
    }
}

/// Full-size experimental parameters: 100 x 1000 with r = 20, k = 8 (one-bit:
/// 1000 x 1000, r = 5, k = 2). `weak_lp` switches to approximately sparse
/// columns with p = 1/3.
pub fn table2_setup(model: ModelKind, weak_lp: bool) -> SyntheticSetup {
    let (n1, n2, r, k) = match model {
        ModelKind::OneBit => (1000, 1000, 5, 2),
        _ => (100, 1000, 20, 8),
    };
    let coefficients = if weak_lp {
        CoefficientModel::WeakLp { p: 1.0 / 3.0 }
    } else {
        CoefficientModel::ExactSparse { k }
    };
    setup(model, n1, n2, r, coefficients)
}

/// Reduced-size setting: 50 x 200 with r = 10, k = 4 (one-bit: 200 x 200,
/// r = 4, k = 2), same ranges and boxes as the full-size one.
pub fn desk_setup(model: ModelKind) -> SyntheticSetup {
    let (n1, n2, r, k) = match model {
        ModelKind::OneBit => (200, 200, 4, 2),
        _ => (50, 200, 10, 4),
    };
    setup(model, n1, n2, r, CoefficientModel::ExactSparse { k })
}

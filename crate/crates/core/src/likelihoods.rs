//! Scalar observation models.
//!
//! Each model supplies the per-entry negative log-likelihood `loss(y, x)`,
//! its proximal map `argmin_x loss(y, x) + rho/2 (x - z)^2`, the KL
//! divergence and negative log Hellinger affinity between the observation
//! laws at two parameter values, the uniform KL bound `C_D` used to set the
//! sparsity penalty, and a sampler.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};

/// Clamp applied to `F(x)` and `1 - F(x)` inside the one-bit loss.
pub const ONE_BIT_LOG_FLOOR: f64 = 1e-12;
/// Lower clamp for Poisson proximal outputs; keeps iterates in `x > 0`.
pub const POISSON_FLOOR: f64 = 1e-12;
/// Successive-iterate tolerance for the one-bit proximal Newton solve.
pub const NEWTON_TOL: f64 = 1e-7;
pub const NEWTON_MAX_ITERS: usize = 100;
/// Grid size used to evaluate the sup/inf constants of the logistic link.
pub const LINK_GRID_POINTS: usize = 10_000;

/// Logistic link `F(x) = 1 / (1 + exp(-x / s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticLink {
    s: f64,
}

impl LogisticLink {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param("s", format!("link scale must be positive, got {s}")));
        }
        Ok(Self { s })
    }

    /// Link whose logistic noise has standard deviation `sigma`:
    /// `s = sqrt(3) sigma / pi`.
    pub fn from_noise_sigma(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        Self::new(3f64.sqrt() * sigma / std::f64::consts::PI)
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        let t = x / self.s;
        if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        }
    }

    /// `1 - F(x)`, computed without cancellation.
    #[inline]
    pub fn survival(&self, x: f64) -> f64 {
        self.cdf(-x)
    }

    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        self.cdf(x) * self.survival(x) / self.s
    }

    /// `c_{F,Xmax} = sup 1/(F(1-F)) * sup f^2` and
    /// `c'_{F,Xmax} = inf f^2 / (F(1-F))` over `|t| <= x_max`, evaluated on a
    /// uniform grid of `points` nodes including both endpoints.
    pub fn curvature_constants(&self, x_max: f64, points: usize) -> (f64, f64) {
        let points = points.max(2);
        let mut sup_inv_var = 0.0f64;
        let mut sup_f2 = 0.0f64;
        let mut inf_ratio = f64::INFINITY;
        for k in 0..points {
            let t = -x_max + 2.0 * x_max * k as f64 / (points - 1) as f64;
            let var = self.cdf(t) * self.survival(t);
            let f = var / self.s;
            sup_inv_var = sup_inv_var.max(1.0 / var);
            sup_f2 = sup_f2.max(f * f);
            inf_ratio = inf_ratio.min(f * f / var);
        }
        (sup_inv_var * sup_f2, inf_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    /// Additive `N(0, sigma^2)` noise.
    Gaussian { sigma: f64 },
    /// Additive Laplace noise with density `(tau/2) exp(-tau |w|)`.
    Laplace { tau: f64 },
    /// Poisson counts with rate `x`.
    Poisson,
    /// `Y = 1{x - W >= 0}` with logistic `W`.
    OneBit(LogisticLink),
}

impl Likelihood {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Likelihood::Gaussian { sigma })
    }

    pub fn laplace(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param("tau", format!("must be positive, got {tau}")));
        }
        Ok(Likelihood::Laplace { tau })
    }

    pub fn one_bit(s: f64) -> Result<Self> {
        Ok(Likelihood::OneBit(LogisticLink::new(s)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Likelihood::Gaussian { .. } => "gaussian",
            Likelihood::Laplace { .. } => "laplace",
            Likelihood::Poisson => "poisson",
            Likelihood::OneBit(_) => "onebit",
        }
    }

    /// Negative log-likelihood up to terms that do not depend on `x`.
    /// Poisson returns `+inf` for `x <= 0`.
    pub fn loss(&self, y: f64, x: f64) -> f64 {
        match *self {
            Likelihood::Gaussian { sigma } => (y - x) * (y - x) / (2.0 * sigma * sigma),
            Likelihood::Laplace { tau } => tau * (y - x).abs(),
            Likelihood::Poisson => {
                if x <= 0.0 {
                    f64::INFINITY
                } else if y == 0.0 {
                    x
                } else {
                    x - y * x.ln()
                }
            }
            Likelihood::OneBit(link) => {
                let p = link.cdf(x).clamp(ONE_BIT_LOG_FLOOR, 1.0 - ONE_BIT_LOG_FLOOR);
                let q = link.survival(x).clamp(ONE_BIT_LOG_FLOOR, 1.0 - ONE_BIT_LOG_FLOOR);
                -y * p.ln() - (1.0 - y) * q.ln()
            }
        }
    }

    /// `argmin_x loss(y, x) + rho/2 (x - z)^2`.
    pub fn prox(&self, z: f64, rho: f64, y: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::param("rho", format!("must be positive, got {rho}")));
        }
        match *self {
            Likelihood::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                Ok((y + s2 * rho * z) / (1.0 + s2 * rho))
            }
            // The minimizer always lies between y and z.
            Likelihood::Laplace { tau } => Ok(y + soft_threshold(z - y, tau / rho)),
            Likelihood::Poisson => {
                if y < 0.0 {
                    return Err(Error::Domain {
                        model: "poisson",
                        value: y,
                    });
                }
                // positive root of rho x^2 + (1 - rho z) x - y = 0
                let b = rho * z - 1.0;
                let disc = (b * b + 4.0 * rho * y).sqrt();
                let x = if b >= 0.0 {
                    (b + disc) / (2.0 * rho)
                } else {
                    2.0 * y / (disc - b)
                };
                Ok(x.max(POISSON_FLOOR))
            }
            Likelihood::OneBit(link) => one_bit_prox(&link, z, rho, y),
        }
    }

    /// `D(p_{x_true} || p_x)`.
    pub fn kl_divergence(&self, x_true: f64, x: f64) -> Result<f64> {
        self.check_domain(x_true)?;
        self.check_domain(x)?;
        Ok(match *self {
            Likelihood::Gaussian { sigma } => (x_true - x).powi(2) / (2.0 * sigma * sigma),
            Likelihood::Laplace { tau } => {
                let d = tau * (x_true - x).abs();
                // d - (1 - e^{-d}), written to avoid cancellation for small d
                d + (-d).exp_m1()
            }
            Likelihood::Poisson => x_true * (x_true / x).ln() - x_true + x,
            Likelihood::OneBit(link) => {
                let (p, q) = (link.cdf(x_true), link.cdf(x));
                let (pc, qc) = (link.survival(x_true), link.survival(x));
                p * (p / q).ln() + pc * (pc / qc).ln()
            }
        }
        .max(0.0))
    }

    /// `-2 log A(p_{x_true}, p_x)` where `A` is the Hellinger affinity.
    pub fn neg_log_hellinger(&self, x_true: f64, x: f64) -> Result<f64> {
        self.check_domain(x_true)?;
        self.check_domain(x)?;
        Ok(match *self {
            Likelihood::Gaussian { sigma } => (x_true - x).powi(2) / (4.0 * sigma * sigma),
            Likelihood::Laplace { tau } => {
                let d = tau * (x_true - x).abs();
                d - 2.0 * (0.5 * d).ln_1p()
            }
            Likelihood::Poisson => (x_true.sqrt() - x.sqrt()).powi(2),
            Likelihood::OneBit(link) => {
                let affinity = (link.cdf(x_true) * link.cdf(x)).sqrt()
                    + (link.survival(x_true) * link.survival(x)).sqrt();
                -2.0 * affinity.min(1.0).ln()
            }
        }
        .max(0.0))
    }

    /// Draws one observation whose law is parameterized by `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain {
                model: self.name(),
                value: x,
            });
        }
        match *self {
            Likelihood::Gaussian { sigma } => {
                let n = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
                Ok(x + n.sample(rng))
            }
            Likelihood::Laplace { tau } => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).ln() / tau;
                Ok(x + mag.copysign(u))
            }
            Likelihood::Poisson => {
                if x < 0.0 {
                    return Err(Error::Domain {
                        model: "poisson",
                        value: x,
                    });
                }
                if x == 0.0 {
                    return Ok(0.0);
                }
                let p = Poisson::new(x).map_err(|e| Error::param("rate", e.to_string()))?;
                Ok(p.sample(rng))
            }
            Likelihood::OneBit(link) => Ok(if rng.random::<f64>() < link.cdf(x) {
                1.0
            } else {
                0.0
            }),
        }
    }

    /// Uniform upper bound `C_D` on per-entry KL divergences over the
    /// candidate class with `|x| <= x_max` (Poisson: `x >= x_min > 0`).
    pub fn theory_constant_cd(&self, x_max: f64, x_min: Option<f64>) -> Result<f64> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::param("x_max", format!("must be positive, got {x_max}")));
        }
        match *self {
            Likelihood::Gaussian { sigma } => Ok(2.0 * x_max * x_max / (sigma * sigma)),
            Likelihood::Laplace { tau } => Ok(2.0 * tau * x_max),
            Likelihood::Poisson => {
                let x_min = x_min.ok_or_else(|| {
                    Error::MissingParameter("x_min is required for the Poisson model".into())
                })?;
                if !(x_min > 0.0) {
                    return Err(Error::param("x_min", format!("must be positive, got {x_min}")));
                }
                Ok(4.0 * x_max * x_max / x_min)
            }
            Likelihood::OneBit(link) => {
                let (c, _) = link.curvature_constants(x_max, LINK_GRID_POINTS);
                Ok(2.0 * c * x_max * x_max)
            }
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let ok = match *self {
            Likelihood::Gaussian { .. } | Likelihood::Laplace { .. } => x.is_finite(),
            Likelihood::Poisson => x > 0.0 && x.is_finite(),
            Likelihood::OneBit(link) => {
                let p = link.cdf(x);
                p > 0.0 && p < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                model: self.name(),
                value: x,
            })
        }
    }
}

/// `sgn(x) max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Newton iteration on `G(x) = -y log F(x) - (1-y) log(1-F(x)) + rho/2 (x-z)^2`
/// with `G' = (F(x) - y)/s + rho (x - z)` and `G'' = F(1-F)/s^2 + rho`.
///
/// `G'` is increasing, so the root is tracked inside a bracket and a step that
/// leaves the bracket is replaced by bisection. Since `|F - y| <= 1`, the
/// root lies within `1/(s rho)` of `z`, on the side selected by `y`.
fn one_bit_prox(link: &LogisticLink, z: f64, rho: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Domain {
            model: "onebit",
            value: y,
        });
    }
    let s = link.scale();
    let grad = |x: f64| (link.cdf(x) - y) / s + rho * (x - z);
    // The root is the fixed point of the decreasing map
    // g(x) = z + (y - F(x)) / (s rho), so two steps of g from z bracket it.
    let g = |x: f64| z + (y - link.cdf(x)) / (s * rho);
    let a = g(z);
    let b = g(a);
    let (lo, hi) = (a.min(b), a.max(b));
    if hi - lo <= NEWTON_TOL {
        return Ok(0.5 * (lo + hi));
    }
    // G' is convex left of 0 and concave right of it. Newton started on the
    // side of the root where it overshoots nothing converges monotonically.
    let mut x = if grad(0.0) > 0.0 { hi.min(0.0) } else { lo.max(0.0) };
    for _ in 0..NEWTON_MAX_ITERS {
        let f = link.cdf(x);
        let gr = (f - y) / s + rho * (x - z);
        let hess = f * link.survival(x) / (s * s) + rho;
        let next = (x - gr / hess).clamp(lo, hi);
        if (next - x).abs() <= NEWTON_TOL {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::ProxNotConverged {
        iterations: NEWTON_MAX_ITERS,
        last: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_table_values() {
        let g = Likelihood::gaussian(1.0).unwrap();
        assert_eq!(g.loss(0.7, 0.7), 0.0);
        assert_eq!(Likelihood::Poisson.loss(1.0, 1.0), 1.0);
        assert_eq!(Likelihood::laplace(2.0).unwrap().loss(0.0, 3.0), 6.0);
        assert_eq!(Likelihood::Poisson.loss(2.0, 0.0), f64::INFINITY);
        assert_eq!(Likelihood::Poisson.loss(2.0, -1.0), f64::INFINITY);
    }

    #[test]
    fn one_bit_loss_is_clamped_far_out() {
        let ob = Likelihood::one_bit(0.01).unwrap();
        let v = ob.loss(1.0, -100.0);
        assert!(v.is_finite());
        assert_relative_eq!(v, -(ONE_BIT_LOG_FLOOR.ln()), max_relative = 1e-12);
    }

    #[test]
    fn prox_trivial_cases() {
        let g = Likelihood::gaussian(0.3).unwrap();
        assert_relative_eq!(g.prox(1.7, 4.0, 1.7).unwrap(), 1.7, epsilon = 1e-15);
        assert_eq!(Likelihood::Poisson.prox(1.0, 1.0, 1.0).unwrap(), 1.0);
        let l = Likelihood::laplace(1.0).unwrap();
        for z in [-1.0, -0.3, 0.0, 0.6, 1.0] {
            assert_eq!(l.prox(z, 1.0, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn poisson_prox_zero_count_stays_positive() {
        let p = Likelihood::Poisson;
        assert_eq!(p.prox(-3.0, 2.0, 0.0).unwrap(), POISSON_FLOOR);
        assert_eq!(p.prox(0.5, 2.0, 0.0).unwrap(), POISSON_FLOOR);
        // rho z - 1 > 0 with y = 0 gives z - 1/rho
        assert_relative_eq!(p.prox(3.0, 2.0, 0.0).unwrap(), 2.5, epsilon = 1e-14);
        assert!(p.prox(-50.0, 0.01, 1.0).unwrap() > 0.0);
        assert!(p.prox(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn prox_rejects_nonpositive_rho() {
        assert!(Likelihood::Poisson.prox(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn one_bit_prox_is_stationary() {
        let link = LogisticLink::new(0.4).unwrap();
        let ob = Likelihood::OneBit(link);
        for &(z, rho, y) in &[(0.3, 1.0, 1.0), (-2.0, 0.001, 1.0), (5.0, 1000.0, 0.0), (0.0, 0.05, 0.0)] {
            let x = ob.prox(z, rho, y).unwrap();
            let grad = (link.cdf(x) - y) / link.scale() + rho * (x - z);
            assert!(grad.abs() < 1e-6 * (1.0 + rho), "z={z} rho={rho} y={y} grad={grad}");
        }
        assert!(ob.prox(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn kl_and_hellinger_closed_forms() {
        let g = Likelihood::gaussian(1.0).unwrap();
        assert_relative_eq!(g.kl_divergence(2.0, 0.0).unwrap(), 2.0);
        assert_relative_eq!(g.neg_log_hellinger(2.0, 0.0).unwrap(), 1.0);
        let l = Likelihood::laplace(1.0).unwrap();
        assert_relative_eq!(
            l.kl_divergence(1.0, 0.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
        for m in [
            g,
            l,
            Likelihood::Poisson,
            Likelihood::one_bit(0.7).unwrap(),
        ] {
            assert_eq!(m.kl_divergence(0.8, 0.8).unwrap(), 0.0);
            assert_eq!(m.neg_log_hellinger(0.8, 0.8).unwrap(), 0.0);
        }
    }

    #[test]
    fn laplace_kl_matches_quadrature() {
        // integrate p log(p/q) for p centered at 0, q centered at 1, tau = 1
        let tau = 1.0f64;
        let dens = |w: f64, mu: f64| 0.5 * tau * (-tau * (w - mu).abs()).exp();
        let (a, b, n) = (-40.0, 41.0, 400_000);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let w = a + (k as f64 + 0.5) * h;
            let p = dens(w, 0.0);
            acc += p * (p / dens(w, 1.0)).ln() * h;
        }
        let l = Likelihood::laplace(tau).unwrap();
        assert!((l.kl_divergence(0.0, 1.0).unwrap() - acc).abs() < 1e-6);
        assert!((acc - 0.367_879_441).abs() < 1e-6);
    }

    #[test]
    fn one_bit_hellinger_matches_two_term_sum() {
        let link = LogisticLink::new(1.0).unwrap();
        let p1 = 1.0 / (1.0 + (-0.0f64).exp());
        let q1 = 1.0 / (1.0 + (-0.5f64).exp());
        let affinity = (p1 * q1).sqrt() + ((1.0 - p1) * (1.0 - q1)).sqrt();
        let expect = -2.0 * affinity.ln();
        let got = Likelihood::OneBit(link).neg_log_hellinger(0.0, 0.5).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn divergence_domain_errors() {
        assert!(Likelihood::Poisson.kl_divergence(0.0, 1.0).is_err());
        assert!(Likelihood::Poisson.neg_log_hellinger(1.0, -1.0).is_err());
        let ob = Likelihood::one_bit(0.01).unwrap();
        assert!(ob.kl_divergence(100.0, 0.0).is_err());
    }

    #[test]
    fn samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Likelihood::gaussian(0.5).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| g.sample(1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * 0.5 / (n as f64).sqrt());

        for _ in 0..100 {
            assert_eq!(Likelihood::Poisson.sample(0.0, &mut rng).unwrap(), 0.0);
        }
        assert!(Likelihood::Poisson.sample(-0.1, &mut rng).is_err());

        for s in [0.05, 1.0, 7.0] {
            let ob = Likelihood::one_bit(s).unwrap();
            let ones: f64 = (0..n).map(|_| ob.sample(0.0, &mut rng).unwrap()).sum();
            assert!((ones / n as f64 - 0.5).abs() < 3.0 / (2.0 * (n as f64).sqrt()));
        }

        // Laplace(tau) has variance 2 / tau^2
        let tau = 2.0f64.sqrt();
        let l = Likelihood::laplace(tau).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| l.sample(0.0, &mut rng).unwrap()).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / n as f64;
        assert!(m.abs() < 0.02);
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn link_from_sigma() {
        let link = LogisticLink::from_noise_sigma(0.1).unwrap();
        assert_relative_eq!(link.scale(), 3f64.sqrt() * 0.1 / std::f64::consts::PI);
        assert_eq!(link.cdf(0.0), 0.5);
        assert_relative_eq!(link.cdf(-0.3), 1.0 - link.cdf(0.3), epsilon = 1e-15);
        assert!(LogisticLink::new(0.0).is_err());
        assert!(Likelihood::gaussian(0.0).is_err());
        assert!(Likelihood::laplace(-1.0).is_err());
    }

    #[test]
    fn cd_constants() {
        let g = Likelihood::gaussian(1.0).unwrap();
        assert_eq!(g.theory_constant_cd(1.0, None).unwrap(), 2.0);
        let l = Likelihood::laplace(2.0).unwrap();
        assert_eq!(l.theory_constant_cd(3.0, None).unwrap(), 12.0);
        assert!(Likelihood::Poisson.theory_constant_cd(2.0, None).is_err());
        assert_eq!(
            Likelihood::Poisson.theory_constant_cd(2.0, Some(0.5)).unwrap(),
            32.0
        );
    }

    #[test]
    fn one_bit_cd_matches_dense_grid() {
        // independent evaluation straight from the logistic density
        let s = 1.0f64;
        let x_max = 1.0f64;
        let n = 100_000;
        let mut sup_inv = 0.0f64;
        let mut sup_f2 = 0.0f64;
        for k in 0..=n {
            let t = -x_max + 2.0 * x_max * k as f64 / n as f64;
            let big_f = 1.0 / (1.0 + (-t / s).exp());
            let f = (-t / s).exp() / (s * (1.0 + (-t / s).exp()).powi(2));
            sup_inv = sup_inv.max(1.0 / (big_f * (1.0 - big_f)));
            sup_f2 = sup_f2.max(f * f);
        }
        let expect = 2.0 * sup_inv * sup_f2 * x_max * x_max;
        let got = Likelihood::one_bit(s)
            .unwrap()
            .theory_constant_cd(x_max, None)
            .unwrap();
        assert!(((got - expect) / expect).abs() < 1e-3);
    }
}

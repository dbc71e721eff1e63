//! Flat `key = value` experiment configuration with dotted section keys.
//!
//! ```text
//! # comment
//! preset = gaussian
//! gamma_grid = 0.4, 0.55, 0.7
//! solver.eta = 1.05
//! ```
//!
//! A `preset` line (or the `--preset` flag) fills every field first; the
//! remaining keys override it regardless of their order in the file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::likelihoods::{Likelihood, LogisticLink};
use crate::problem::BoxBounds;
use crate::solver::{AdmmConfig, RhoSchedule};
use crate::synth::{desk_setup, CoefficientModel, EstimationBoxes, GroundTruthSpec, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    L0Admm,
    L1Admm,
    NuclearNorm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::L0Admm => "l0",
            Method::L1Admm => "l1",
            Method::NuclearNorm => "nuclear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l0" => Ok(Method::L0Admm),
            "l1" => Ok(Method::L1Admm),
            "nuclear" => Ok(Method::NuclearNorm),
            other => Err(Error::param("methods", format!("unknown method `{other}`"))),
        }
    }

    /// Position used in per-cell seed derivation.
    pub(crate) fn index(self) -> u64 {
        match self {
            Method::L0Admm => 0,
            Method::L1Admm => 1,
            Method::NuclearNorm => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Gaussian,
    Laplace,
    Poisson,
    OneBit,
    Compare62,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Preset::Gaussian),
            "laplace" => Ok(Preset::Laplace),
            "poisson" => Ok(Preset::Poisson),
            "onebit" => Ok(Preset::OneBit),
            "compare62" => Ok(Preset::Compare62),
            other => Err(Error::param("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Gaussian => "gaussian",
            Preset::Laplace => "laplace",
            Preset::Poisson => "poisson",
            Preset::OneBit => "onebit",
            Preset::Compare62 => "compare62",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub likelihood: Likelihood,
    pub truth: GroundTruthSpec,
    pub boxes: EstimationBoxes,
    pub gamma_grid: Vec<f64>,
    /// Grid for the ADMM methods.
    pub lambda_grid: Vec<f64>,
    /// Grid for the nuclear-norm baseline, whose penalty lives on a
    /// different scale.
    pub nuclear_lambda_grid: Vec<f64>,
    pub nuclear_step: f64,
    pub nuclear_max_iters: usize,
    pub trials: usize,
    pub seed: u64,
    /// Solver settings; `lambda` and `penalty` are set per cell.
    pub solver: AdmmConfig,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    /// When false, `runtime_ms` is written as 0 so reruns are byte-identical.
    pub record_timing: bool,
}

const DESK_GAMMAS: [f64; 5] = [0.4, 0.55, 0.7, 0.85, 1.0];

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let solver = AdmmConfig {
            rho_schedule: RhoSchedule::Geometric,
            ..AdmmConfig::default()
        };
        let (model, likelihood) = match preset {
            Preset::Gaussian | Preset::Compare62 => {
                (ModelKind::Gaussian, Likelihood::Gaussian { sigma: 0.5 })
            }
            Preset::Laplace => (
                ModelKind::Laplace,
                Likelihood::Laplace {
                    tau: std::f64::consts::SQRT_2,
                },
            ),
            Preset::Poisson => (ModelKind::Poisson, Likelihood::Poisson),
            Preset::OneBit => (
                ModelKind::OneBit,
                Likelihood::OneBit(LogisticLink::from_noise_sigma(0.1).expect("positive sigma")),
            ),
        };
        let mut setup = desk_setup(model);
        let mut gamma_grid = DESK_GAMMAS.to_vec();
        let mut methods = vec![Method::L0Admm];
        if preset == Preset::Compare62 {
            setup.truth.n2 = 500;
            gamma_grid = vec![0.5];
            methods = vec![Method::L0Admm, Method::L1Admm, Method::NuclearNorm];
        }
        let lambda_grid = match preset {
            Preset::Gaussian | Preset::Compare62 => vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            Preset::Laplace => vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            Preset::Poisson => vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0],
            Preset::OneBit => vec![0.03, 0.1, 0.3, 1.0],
        };
        // the 200 x 200 one-bit sweep is the slowest; fewer cells keep it
        // within a few minutes on one core
        let trials = if preset == Preset::OneBit { 5 } else { 10 };
        Self {
            model,
            likelihood,
            truth: setup.truth,
            boxes: setup.boxes,
            gamma_grid,
            lambda_grid,
            nuclear_lambda_grid: vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            nuclear_step: 0.5,
            nuclear_max_iters: 2000,
            trials,
            seed: 1,
            solver,
            methods,
            output_dir: PathBuf::from(format!("out/{}", preset.name())),
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() {
            return Err(Error::param("gamma_grid", "must not be empty"));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::param("gamma_grid", format!("{g} is outside (0, 1]")));
        }
        let check_lambdas = |name, grid: &[f64]| {
            if grid.is_empty() {
                return Err(Error::param(name, "must not be empty"));
            }
            if let Some(l) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
                return Err(Error::param(name, format!("{l} is not a nonnegative number")));
            }
            Ok(())
        };
        check_lambdas("lambda_grid", &self.lambda_grid)?;
        if self.methods.contains(&Method::NuclearNorm) {
            check_lambdas("nuclear.lambda_grid", &self.nuclear_lambda_grid)?;
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::param("methods", "must not be empty"));
        }
        self.truth.validate()?;
        self.solver.validate()
    }

    /// Lambda grid swept for `method`.
    pub fn lambdas(&self, method: Method) -> &[f64] {
        match method {
            Method::NuclearNorm => &self.nuclear_lambda_grid,
            _ => &self.lambda_grid,
        }
    }

    /// Parses config text. `preset_override` takes precedence over a
    /// `preset` line in the text.
    pub fn parse(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut preset = None;
        let mut model = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if key == "preset" {
                preset = Some(Preset::parse(value).map_err(|e| Error::Config {
                    line: line_no,
                    message: e.to_string(),
                })?);
            } else if key == "likelihood" {
                model = Some(ModelKind::parse(value).map_err(|e| Error::Config {
                    line: line_no,
                    message: e.to_string(),
                })?);
            } else {
                pairs.push((line_no, key.to_string(), value.to_string()));
            }
        }
        let preset = preset_override.or(preset).unwrap_or(Preset::Gaussian);
        let mut cfg = Self::preset(preset);
        let mut lik = LikelihoodKeys::default();
        // a different likelihood brings its own ranges; explicit keys below
        // still override them
        if let Some(model) = model.filter(|m| *m != cfg.model) {
            let setup = desk_setup(model);
            cfg.model = model;
            cfg.truth = setup.truth;
            cfg.boxes = setup.boxes;
            lik.changed = true;
        }
        for (line, key, value) in &pairs {
            cfg.apply(key, value, &mut lik).map_err(|e| Error::Config {
                line: *line,
                message: e.to_string(),
            })?;
        }
        cfg.finish_likelihood(&lik)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, preset_override: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, preset_override)
    }

    fn apply(&mut self, key: &str, value: &str, lik: &mut LikelihoodKeys) -> Result<()> {
        let a = self.boxes.a_box;
        let d = self.boxes.d_box;
        let ta = self.truth.a_box_true;
        let td = self.truth.d_box_true;
        match key {
            "gamma_grid" => self.gamma_grid = parse_list(value)?,
            "lambda_grid" => self.lambda_grid = parse_list(value)?,
            "trials" => self.trials = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "methods" | "baselines" => {
                self.methods = value
                    .split(',')
                    .map(|s| Method::parse(s.trim()))
                    .collect::<Result<_>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "output.timing" => self.record_timing = parse(value)?,

            "likelihood.sigma" => lik.sigma = Some(parse(value)?),
            "likelihood.tau" => lik.tau = Some(parse(value)?),
            "likelihood.s" => lik.s = Some(parse(value)?),

            "truth.n1" => self.truth.n1 = parse(value)?,
            "truth.n2" => self.truth.n2 = parse(value)?,
            "truth.r" => self.truth.r = parse(value)?,
            "truth.k" => self.truth.coefficients = CoefficientModel::ExactSparse { k: parse(value)? },
            "truth.p" => self.truth.coefficients = CoefficientModel::WeakLp { p: parse(value)? },
            "truth.nonnegative" => self.truth.nonnegative = parse(value)?,
            "truth.d_min" => self.truth.d_box_true = BoxBounds::new(parse(value)?, td.hi())?,
            "truth.d_max" => self.truth.d_box_true = BoxBounds::new(td.lo(), parse(value)?)?,
            "truth.a_min" => self.truth.a_box_true = BoxBounds::new(parse(value)?, ta.hi())?,
            "truth.a_max" => self.truth.a_box_true = BoxBounds::new(ta.lo(), parse(value)?)?,
            "box.d_min" => self.boxes.d_box = BoxBounds::new(parse(value)?, d.hi())?,
            "box.d_max" => self.boxes.d_box = BoxBounds::new(d.lo(), parse(value)?)?,
            "box.a_min" => self.boxes.a_box = BoxBounds::new(parse(value)?, a.hi())?,
            "box.a_max" => self.boxes.a_box = BoxBounds::new(a.lo(), parse(value)?)?,

            "solver.eps1" => self.solver.eps1 = parse(value)?,
            "solver.eps2" => self.solver.eps2 = parse(value)?,
            "solver.eta" => self.solver.eta = parse(value)?,
            "solver.rho0" => self.solver.rho0 = parse(value)?,
            "solver.delta" => self.solver.newton_damping_delta = parse(value)?,
            "solver.delta1_stop" => self.solver.delta1_stop = Some(parse(value)?),
            "solver.delta2_stop" => self.solver.delta2_stop = Some(parse(value)?),
            "solver.max_outer_iters" => self.solver.max_outer_iters = parse(value)?,
            "solver.max_inner_iters" => self.solver.max_inner_iters = parse(value)?,
            "solver.rho_schedule" => {
                self.solver.rho_schedule = match value {
                    "geometric" => RhoSchedule::Geometric,
                    "balanced" => RhoSchedule::Balanced { ratio: 10.0 },
                    other => {
                        return Err(Error::param(
                            "solver.rho_schedule",
                            format!("expected `geometric` or `balanced`, got `{other}`"),
                        ))
                    }
                }
            }
            "solver.rho_ratio" => {
                self.solver.rho_schedule = RhoSchedule::Balanced {
                    ratio: parse(value)?,
                }
            }

            "nuclear.lambda_grid" => self.nuclear_lambda_grid = parse_list(value)?,
            "nuclear.step" => self.nuclear_step = parse(value)?,
            "nuclear.max_iters" => self.nuclear_max_iters = parse(value)?,
            other => {
                return Err(Error::Parse {
                    context: "config".into(),
                    message: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }

    fn finish_likelihood(&mut self, keys: &LikelihoodKeys) -> Result<()> {
        if !keys.changed && keys.sigma.is_none() && keys.tau.is_none() && keys.s.is_none() {
            return Ok(());
        }
        let prev = self.likelihood;
        self.likelihood = match self.model {
            ModelKind::Gaussian => {
                let sigma = keys.sigma.or(match prev {
                    Likelihood::Gaussian { sigma } => Some(sigma),
                    _ => None,
                });
                Likelihood::gaussian(sigma.ok_or_else(|| {
                    Error::MissingParameter("likelihood.sigma for the Gaussian model".into())
                })?)?
            }
            ModelKind::Laplace => {
                let tau = keys.tau.or(match prev {
                    Likelihood::Laplace { tau } => Some(tau),
                    _ => None,
                });
                Likelihood::laplace(tau.ok_or_else(|| {
                    Error::MissingParameter("likelihood.tau for the Laplace model".into())
                })?)?
            }
            ModelKind::Poisson => Likelihood::Poisson,
            ModelKind::OneBit => match (keys.s, keys.sigma, prev) {
                (Some(s), _, _) => Likelihood::one_bit(s)?,
                (None, Some(sigma), _) => Likelihood::OneBit(LogisticLink::from_noise_sigma(sigma)?),
                (None, None, Likelihood::OneBit(link)) => Likelihood::OneBit(link),
                _ => {
                    return Err(Error::MissingParameter(
                        "likelihood.s or likelihood.sigma for the one-bit model".into(),
                    ))
                }
            },
        };
        Ok(())
    }
}

#[derive(Debug, Default)]
struct LikelihoodKeys {
    changed: bool,
    sigma: Option<f64>,
    tau: Option<f64>,
    s: Option<f64>,
}

fn parse<T: std::str::FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Parse {
        context: format!("value `{value}`"),
        message: e.to_string(),
    })
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

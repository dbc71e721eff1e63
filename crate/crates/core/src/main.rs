use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfmc::cli::experiment::slope_points;
use sfmc::cli::io::{read_mask, read_matrix, write_mask, write_matrix};
use sfmc::cli::{emit_outputs, estimate_slope, run_experiment, ExperimentConfig, Preset};
use sfmc::synth::{generate_ground_truth, generate_observations, sample_mask};
use sfmc::theory::{corollary_bound, BoundInputs, Sparsity};
use sfmc::{admm_solve, BoxBounds, CompletionProblem, Error, Likelihood, LogisticLink, Result};

#[derive(Parser)]
#[command(name = "sfmc", version, about = "Sparse factor matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground truth and one sampled observation set, write them as text files.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Sampling rate; defaults to the first entry of the gamma grid.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Estimate a matrix from an observation file and a mask file.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// Rank of the factorization; defaults to the config's `truth.r`.
        #[arg(long)]
        rank: Option<usize>,
        /// Feasible range of X as `LO,HI`; defaults to twice the observed range.
        #[arg(long, value_parser = parse_pair)]
        x_box: Option<(f64, f64)>,
    },
    /// Run a full sweep and write results.csv, summary.csv and a plot.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print beta, lambda, C_D and the per-element error bound.
    Bounds(BoundArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Gaussian,
    Laplace,
    Poisson,
    Onebit,
    Compare62,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Gaussian => Preset::Gaussian,
            PresetArg::Laplace => Preset::Laplace,
            PresetArg::Poisson => Preset::Poisson,
            PresetArg::Onebit => Preset::OneBit,
            PresetArg::Compare62 => Preset::Compare62,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LikelihoodArg {
    Gaussian,
    Laplace,
    Poisson,
    Onebit,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, value_enum)]
    likelihood: LikelihoodArg,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    r: usize,
    /// Nominal number of observations.
    #[arg(long)]
    m: usize,
    /// Number of nonzeros of A* (exact sparsity).
    #[arg(long, conflicts_with = "p")]
    a_l0: Option<usize>,
    /// Weak-lp exponent (approximate sparsity).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    a_max: f64,
    #[arg(long)]
    x_max: f64,
    #[arg(long)]
    x_min: Option<f64>,
    /// Gaussian noise level, or one-bit logistic noise level.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// One-bit logistic link scale.
    #[arg(long)]
    s: Option<f64>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let preset = common.preset.map(Preset::from);
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path, preset)?,
        None => ExperimentConfig::preset(preset.unwrap_or(Preset::Gaussian)),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn generate(common: &Common, gamma: Option<f64>) -> Result<()> {
    let cfg = load_config(common)?;
    let gamma = gamma.unwrap_or(cfg.gamma_grid[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = generate_ground_truth(&cfg.truth, &mut rng)?;
    let mask = sample_mask(cfg.truth.n1, cfg.truth.n2, gamma, &mut rng)?;
    let generated = generate_observations(&truth, mask, cfg.likelihood, &cfg.boxes, &mut rng)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let (n1, n2) = (cfg.truth.n1, cfg.truth.n2);
    let mut y = DMatrix::from_element(n1, n2, f64::NAN);
    let problem = &generated.problem;
    for (&(i, j), &v) in problem.mask().entries().iter().zip(problem.observations()) {
        y[(i, j)] = v;
    }
    write_matrix(&dir.join("D.txt"), &truth.d)?;
    write_matrix(&dir.join("A.txt"), &truth.a)?;
    write_matrix(&dir.join("X.txt"), &generated.x_true)?;
    write_matrix(&dir.join("Y.txt"), &y)?;
    write_mask(&dir.join("mask.txt"), problem.mask())?;
    println!(
        "wrote D.txt A.txt X.txt Y.txt mask.txt to {} ({} observations, X* in [{}, {}])",
        dir.display(),
        problem.mask().len(),
        generated.x_true_min,
        generated.x_true_max
    );
    Ok(())
}

fn solve(
    common: &Common,
    observations: &Path,
    mask_path: &Path,
    lambda: f64,
    rank: Option<usize>,
    x_box: Option<(f64, f64)>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let y = read_matrix(observations)?;
    let mask = read_mask(mask_path)?;
    if mask.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            found: mask.shape(),
        });
    }
    let values: Vec<f64> = mask.entries().iter().map(|&(i, j)| y[(i, j)]).collect();
    let x_box = match x_box {
        Some((lo, hi)) => BoxBounds::new(lo, hi)?,
        None => match cfg.likelihood {
            Likelihood::OneBit(_) => {
                return Err(Error::MissingParameter(
                    "--x-box is required for one-bit data".into(),
                ))
            }
            Likelihood::Poisson => {
                let hi = values.iter().fold(0.0f64, |a, v| a.max(*v));
                BoxBounds::new(0.0, 2.0 * hi.max(1.0))?
            }
            _ => BoxBounds::symmetric(2.0 * values.iter().fold(0.0f64, |a, v| a.max(v.abs())))?,
        },
    };
    let problem = CompletionProblem::new(
        mask,
        values,
        cfg.likelihood,
        x_box,
        cfg.boxes.d_box,
        cfg.boxes.a_box,
        rank.unwrap_or(cfg.truth.r),
    )?;
    let mut solver = cfg.solver.clone();
    solver.lambda = lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sol = admm_solve(&problem, &solver, None, &mut rng)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_matrix(&dir.join("D_hat.txt"), &sol.factors.d)?;
    write_matrix(&dir.join("A_hat.txt"), &sol.factors.a)?;
    write_matrix(&dir.join("X_hat.txt"), &sol.estimate())?;
    println!(
        "outer iterations {}, converged {}, nnz(A) {}; wrote D_hat.txt A_hat.txt X_hat.txt to {}",
        sol.outer_iters(),
        sol.converged,
        sol.factors.a_nnz(),
        dir.display()
    );
    Ok(())
}

fn experiment(common: &Common, jobs: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let outcome = run_experiment(&cfg, jobs)?;
    let written = emit_outputs(&outcome.rows, &outcome.summary, &cfg.output_dir, cfg.model.name())?;
    println!("gamma,method,best_lambda,mean_mse,stderr_mse");
    for s in &outcome.summary {
        println!(
            "{},{},{},{:.6},{:.6}",
            s.gamma,
            s.method.name(),
            s.best_lambda,
            s.mean_mse,
            s.stderr_mse
        );
    }
    for &method in &cfg.methods {
        let points = slope_points(&outcome.summary, method);
        if points.len() < 2 {
            continue;
        }
        match estimate_slope(&points) {
            Ok(slope) => println!("slope[{}] = {slope:.4}", method.name()),
            Err(e) => println!("slope[{}] unavailable: {e}", method.name()),
        }
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn bounds(args: &BoundArgs) -> Result<()> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::MissingParameter(format!("--{name} for this likelihood")))
    };
    let likelihood = match args.likelihood {
        LikelihoodArg::Gaussian => Likelihood::gaussian(need(args.sigma, "sigma")?)?,
        LikelihoodArg::Laplace => Likelihood::laplace(need(args.tau, "tau")?)?,
        LikelihoodArg::Poisson => Likelihood::Poisson,
        LikelihoodArg::Onebit => match (args.s, args.sigma) {
            (Some(s), _) => Likelihood::one_bit(s)?,
            (None, Some(sigma)) => Likelihood::OneBit(LogisticLink::from_noise_sigma(sigma)?),
            _ => return Err(Error::MissingParameter("--s or --sigma for the one-bit model".into())),
        },
    };
    let sparsity = match (args.a_l0, args.p) {
        (Some(a_l0), None) => Sparsity::Exact { a_l0 },
        (None, Some(p)) => Sparsity::WeakLp { p },
        _ => return Err(Error::MissingParameter("exactly one of --a-l0 or --p".into())),
    };
    let inputs = BoundInputs {
        n1: args.n1,
        n2: args.n2,
        r: args.r,
        m: args.m,
        sparsity,
        a_max: args.a_max,
        x_max: args.x_max,
        x_min: args.x_min,
        likelihood,
    };
    let b = corollary_bound(&inputs)?;
    println!("beta = {}", b.beta);
    println!("C_D = {}", b.c_d);
    println!("lambda = {}", b.lambda);
    if let Some(k) = b.k {
        println!("k = {k}");
    }
    println!("bound = {}", b.value);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common, gamma } => generate(common, *gamma),
        Command::Solve {
            common,
            observations,
            mask,
            lambda,
            rank,
            x_box,
        } => solve(common, observations, mask, *lambda, *rank, *x_box),
        Command::Experiment { common, jobs } => experiment(common, *jobs),
        Command::Bounds(args) => bounds(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

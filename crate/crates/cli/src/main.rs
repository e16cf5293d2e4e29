use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use pusurvive::config::load_config;
use pusurvive::dp_mixture::{sample_prior, stick_weights};
use pusurvive::estimator::{fit_alternating, fit_simultaneous, FitOptions};
use pusurvive::experiments::{emit_report, run_monte_carlo, ReportFormat};
use pusurvive::io::{load_dataset, save_dataset};
use pusurvive::likelihood::{grad, neg_hessian, neg_loglik, LikelihoodContext, ObjectiveTarget};
use pusurvive::ml_losses::{fit_loss, KnownCensoringModel, LossFitOptions, LossKind};
use pusurvive::simulation::{generate, write_truth_csv};
use pusurvive::{Dataset, Error, ModelVariant, ParamVector, Result, SubjectRecord};

#[derive(Parser)]
#[command(name = "pusurvive", version, about = "Positive-unlabeled survival analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Cox,
    Logit,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset and its ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a dataset by alternating maximum likelihood, or by a PU loss.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// One of pusa_c_observed, pusa_c_unobserved, conventional_c_observed,
        /// conventional_c_unobserved.
        #[arg(long, required_unless_present = "loss")]
        variant: Option<ModelVariant>,
        /// Minimize over both parameter blocks at once (experimental).
        #[arg(long, requires = "variant")]
        simultaneous: bool,
        #[arg(long, value_enum, conflicts_with = "variant")]
        loss: Option<Loss>,
        /// Known censoring coefficients, comma separated (loss fits).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "loss")]
        theta_c: Vec<f64>,
        /// Number of discrete periods for the logit loss; defaults to the
        /// largest labeled time.
        #[arg(long)]
        periods: Option<usize>,
    },
    /// Run the Monte Carlo study and write the report files.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the worker count in the config file.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the replicate count in the config file.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Compare analytic gradients and information matrices with finite
    /// differences on random problems.
    CheckGradients {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        contexts: usize,
    },
    /// Draw from the truncated Dirichlet-process prior.
    DpPrior {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Fit {
            data,
            variant,
            simultaneous,
            loss,
            theta_c,
            periods,
        } => {
            let dataset = load_dataset(&data)?;
            match (variant, loss) {
                (Some(v), _) => fit_variant(&dataset, v, simultaneous),
                (None, Some(l)) => fit_with_loss(&dataset, l, theta_c, periods),
                (None, None) => Err(Error::InvalidArgument("either --variant or --loss is required".into())),
            }
        }
        Command::Experiment {
            config,
            out,
            workers,
            replicates,
        } => experiment(&config, &out, workers, replicates),
        Command::CheckGradients { seed, contexts } => check_gradients(seed, contexts),
        Command::DpPrior { config, seed } => dp_prior(config.as_deref(), seed),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut dgp = load_config(config)?.experiment.dgp;
    if let Some(s) = seed {
        dgp.seed = s;
    }
    let sim = generate(&dgp)?;
    fs::create_dir_all(out)?;
    save_dataset(&sim.dataset, &out.join("data.csv"))?;
    write_truth_csv(&sim.truth, fs::File::create(out.join("truth.csv"))?)?;
    if sim.no_labeled_events {
        eprintln!("warning: no subject was labeled s=1; theta_t is not identifiable from this dataset");
    }
    println!(
        "wrote {} records ({} labeled) from {} subjects to {}",
        sim.dataset.len(),
        sim.dataset.labeled_count(),
        sim.truth.len(),
        out.display()
    );
    Ok(())
}

fn fit_variant(dataset: &Dataset, variant: ModelVariant, simultaneous: bool) -> Result<()> {
    let data = dataset.in_mode(variant.censoring);
    if variant.censoring.c_observed() && !dataset.c_observed_for_labeled {
        return Err(Error::InvalidArgument(format!(
            "{variant} needs censoring times for labeled records"
        )));
    }
    let opts = FitOptions::default();
    let fit = if simultaneous {
        fit_simultaneous(&data, variant, &opts)?
    } else {
        fit_alternating(&data, variant, &opts)?
    };
    if !fit.converged {
        eprintln!("warning: fit stopped after {} outer iterations without converging", fit.outer_iterations);
    }
    print_json(&fit)
}

fn fit_with_loss(dataset: &Dataset, loss: Loss, theta_c: Vec<f64>, periods: Option<usize>) -> Result<()> {
    if theta_c.len() != dataset.dimension {
        return Err(Error::DimensionMismatch {
            expected: dataset.dimension,
            actual: theta_c.len(),
        });
    }
    let cm = KnownCensoringModel::exponential(ParamVector::new(theta_c)?);
    let kind = match loss {
        Loss::Cox => LossKind::Cox,
        Loss::Logit => {
            let longest = dataset
                .records
                .iter()
                .filter(|r| r.label)
                .filter_map(|r| r.survival_time)
                .fold(0.0, f64::max);
            LossKind::Logit {
                periods: periods.unwrap_or(longest as usize),
            }
        }
    };
    print_json(&fit_loss(dataset, kind, &cm, &LossFitOptions::default())?)
}

fn experiment(config: &Path, out: &Path, workers: Option<usize>, replicates: Option<usize>) -> Result<()> {
    let mut cfg = load_config(config)?.experiment;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let reports = run_monte_carlo(&cfg)?;
    let written = emit_report(&reports, &cfg.levels, out, &ReportFormat::ALL)?;
    for r in &reports {
        for v in &r.variants {
            if v.failed > 0 || v.nonconverged > 0 {
                eprintln!(
                    "n_raw={} {}: {} failed fits excluded, {} non-converged fits included",
                    r.n_raw,
                    v.variant,
                    v.failed,
                    v.nonconverged
                );
            }
        }
    }
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn random_dataset(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Dataset {
    let records = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = rng.random_range(0.05..3.0);
            if rng.random_bool(0.4) {
                SubjectRecord::labeled(c * rng.random_range(0.01..1.0), Some(c), x)
            } else {
                SubjectRecord::unlabeled(c, x)
            }
        })
        .collect();
    Dataset::new(records, p, true)
}

fn check_gradients(seed: u64, contexts: usize) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut worst_grad, mut worst_hess) = (0.0f64, 0.0f64);
    for _ in 0..contexts {
        let base = random_dataset(&mut rng, 50, 2);
        let tt: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tc: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        for variant in ModelVariant::ALL {
            let data = base.in_mode(variant.censoring);
            let ctx = LikelihoodContext::new(&data, variant, &tt, &tc)?;
            for target in [ObjectiveTarget::ThetaT, ObjectiveTarget::ThetaC] {
                let at = match target {
                    ObjectiveTarget::ThetaT => &tt,
                    ObjectiveTarget::ThetaC => &tc,
                };
                let g = grad(&ctx, target)?;
                let q = neg_hessian(&ctx, target)?;
                for k in 0..2 {
                    let f = |h: f64| -> Result<f64> {
                        let mut th = at.clone();
                        th[k] += h;
                        neg_loglik(&ctx.with_target(target, &th), target)
                    };
                    let fd = (f(1e-6)? - f(-1e-6)?) / 2e-6;
                    worst_grad = worst_grad.max(relative_error(g[k], fd));
                    let gk = |h: f64| -> Result<Vec<f64>> {
                        let mut th = at.clone();
                        th[k] += h;
                        grad(&ctx.with_target(target, &th), target)
                    };
                    let (up, dn) = (gk(1e-4)?, gk(-1e-4)?);
                    for j in 0..2 {
                        worst_hess = worst_hess.max(relative_error(q[j][k], (up[j] - dn[j]) / 2e-4));
                    }
                }
            }
        }
    }
    println!("contexts: {contexts} x 4 variants x 2 targets");
    println!("max gradient relative error: {worst_grad:.3e} (limit 1e-6)");
    println!("max information relative error: {worst_hess:.3e} (limit 1e-4)");
    if worst_grad <= 1e-6 && worst_hess <= 1e-4 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("derivative check exceeded tolerance".into()))
    }
}

fn dp_prior(config: Option<&Path>, seed: u64) -> Result<()> {
    let dp = match config {
        Some(path) => load_config(path)?.dp,
        None => Default::default(),
    };
    let (sticks, components) = sample_prior(&dp, seed)?;
    let weights = stick_weights(&sticks)?;
    print_json(&serde_json::json!({
        "alpha_dp": dp.alpha_dp,
        "truncation": dp.truncation,
        "tail_mass_bound": dp.tail_mass_bound(),
        "v": sticks.v,
        "weights": weights,
        "shapes": components.shapes,
        "thetas": components.thetas,
    }))
}

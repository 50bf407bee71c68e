use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tscox::baseline::{breslow_cumulative_hazard, exponentiality_diagnostic, DEFAULT_EXPONENTIALITY_THRESHOLD};
use tscox::bootstrap::{compare_models, BootstrapOptions};
use tscox::csv_io::{read_cohort_file, write_cohort_file};
use tscox::pipeline::{generation_seed, run_pipeline, synthetic_cohorts, Inputs, PipelineConfig};
use tscox::synth::{generate_cohort, Baseline, GeneratorParams, DEFAULT_GOMPERTZ_C, DEFAULT_GOMPERTZ_PSI};
use tscox::{fit_cox, Cohort, Execution, FitOptions, Model, Ties};

/// Cox models on time-on-study and age time scales.
#[derive(Parser)]
#[command(name = "tscox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to one cohort and print the fit as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "m1")]
        model: Model,
        #[arg(long, default_value = "breslow")]
        ties: Ties,
    },
    /// Paired-bootstrap comparison of the risk-factor coefficient under two models.
    Compare {
        #[arg(long)]
        input: PathBuf,
        /// Give twice, e.g. `--model m1 --model m3`.
        #[arg(long, num_args = 1, default_values = ["m1", "m3"])]
        model: Vec<Model>,
        #[arg(long, default_value = "breslow")]
        ties: Ties,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Breslow cumulative baseline hazard as TSV, plus the exponentiality check.
    Hazard {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "m3")]
        model: Model,
        #[arg(long, default_value = "breslow")]
        ties: Ties,
        #[arg(long, default_value_t = DEFAULT_EXPONENTIALITY_THRESHOLD)]
        expo_threshold: f64,
        /// Directory for `hazard_<cohort>.tsv`; TSV goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic cohort CSVs.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Fit, compare and summarize a batch of cohorts.
    Pipeline {
        /// Cohort CSV files or directories of them; synthetic cohorts are
        /// generated when omitted.
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Models to fit.
        #[arg(long, value_delimiter = ',', default_value = "m1,m2,m3")]
        models: Vec<Model>,
        /// Model whose baseline hazard is checked.
        #[arg(long, default_value = "m3")]
        model: Model,
        #[arg(long, default_value = "breslow")]
        ties: Ties,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_EXPONENTIALITY_THRESHOLD)]
        expo_threshold: f64,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        gen: GenArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Disable data-parallel execution.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Gompertz,
    Weibull,
}

#[derive(Args)]
struct GenArgs {
    /// Number of synthetic cohorts.
    #[arg(long, default_value_t = 1)]
    cohorts: usize,
    /// Subjects per cohort.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    /// Spread correlations evenly from `--rho-min` to `--rho-max` across cohorts.
    #[arg(long, requires = "rho_max")]
    rho_min: Option<f64>,
    #[arg(long, requires = "rho_min")]
    rho_max: Option<f64>,
    #[arg(long, default_value_t = 0.02)]
    beta_true: f64,
    #[arg(long, value_enum, default_value = "gompertz")]
    baseline: BaselineKind,
    #[arg(long, default_value_t = DEFAULT_GOMPERTZ_C)]
    gompertz_c: f64,
    #[arg(long, default_value_t = DEFAULT_GOMPERTZ_PSI)]
    gompertz_psi: f64,
    #[arg(long, default_value_t = 75.0)]
    weibull_scale: f64,
    #[arg(long, default_value_t = 3.0)]
    weibull_shape: f64,
    #[arg(long, default_value_t = 20.0)]
    follow_up_max: f64,
}

impl GenArgs {
    fn params(&self) -> GeneratorParams {
        let baseline = match self.baseline {
            BaselineKind::Gompertz => Baseline::Gompertz { c: self.gompertz_c, psi: self.gompertz_psi },
            BaselineKind::Weibull => Baseline::Weibull { scale_age: self.weibull_scale, shape: self.weibull_shape },
        };
        GeneratorParams {
            n: self.n,
            baseline,
            beta_true: self.beta_true,
            rho: self.rho,
            follow_up_max: self.follow_up_max,
            ..GeneratorParams::default()
        }
    }

    fn inputs(&self) -> Inputs {
        Inputs::Synthetic { cohorts: self.cohorts, params: self.params(), rho_range: self.rho_min.zip(self.rho_max) }
    }
}

/// Failure with its exit code: 1 for bad arguments, 2 for data that cannot be processed.
struct Failure(u8, String);

fn usage(msg: impl ToString) -> Failure {
    Failure(1, msg.to_string())
}

fn data(msg: impl ToString) -> Failure {
    Failure(2, msg.to_string())
}

fn load(path: &Path) -> Result<Cohort, Failure> {
    read_cohort_file(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(data)?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Fit { input, model, ties } => {
            let cohort = load(&input)?;
            let spec = model.spec((0..cohort.n_covariates()).collect());
            let fit = fit_cox(&cohort, &spec, &FitOptions::default().with_ties(ties)).map_err(data)?;
            print_json(&fit)?;
            Ok(if fit.converged { 0 } else { 2 })
        }
        Command::Compare { input, model, ties, replicates, seed, alpha, run } => {
            let [a, b] = model[..] else {
                return Err(usage("compare needs exactly two --model values"));
            };
            if a == b {
                return Err(usage("compare needs two different models"));
            }
            let cohort = load(&input)?;
            let covariates: Vec<usize> = (0..cohort.n_covariates()).collect();
            let options = BootstrapOptions {
                replicates,
                seed,
                alpha,
                fit: FitOptions::default().with_ties(ties),
                execution: run.execution(),
            };
            let result = tscox::exec::with_workers(run.workers, || {
                compare_models(&cohort, &a.spec(covariates.clone()), &b.spec(covariates.clone()), &options)
            })
            .map_err(data)?;
            print_json(&result)?;
            Ok(0)
        }
        Command::Hazard { input, model, ties, expo_threshold, out } => {
            let cohort = load(&input)?;
            let spec = model.spec((0..cohort.n_covariates()).collect());
            let fit = fit_cox(&cohort, &spec, &FitOptions::default().with_ties(ties))
                .and_then(|f| f.require_converged())
                .map_err(data)?;
            let curve = breslow_cumulative_hazard(&cohort, &fit, &spec).map_err(data)?;
            let report = exponentiality_diagnostic(&curve, expo_threshold).map_err(data)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(data)?;
                    let path = dir.join(format!("hazard_{}.tsv", cohort.name()));
                    let file = fs::File::create(&path).map_err(data)?;
                    curve.write_tsv(io::BufWriter::new(file), cohort.name(), &fit.beta).map_err(data)?;
                    print_json(&report)?;
                }
                None => {
                    curve.write_tsv(io::stdout().lock(), cohort.name(), &fit.beta).map_err(data)?;
                    eprintln!("{}", serde_json::to_string(&report).map_err(data)?);
                }
            }
            Ok(0)
        }
        Command::Simulate { out, seed, gen } => {
            let Inputs::Synthetic { cohorts, params, rho_range } = gen.inputs() else { unreachable!() };
            params.validate().map_err(usage)?;
            if cohorts == 0 {
                return Err(usage("--cohorts must be at least 1"));
            }
            fs::create_dir_all(&out).map_err(data)?;
            for (name, p) in synthetic_cohorts(cohorts, &params, rho_range) {
                let cohort = generate_cohort(&p, generation_seed(seed, &name), &name).map_err(data)?;
                let path = out.join(format!("{name}.csv"));
                write_cohort_file(&cohort, &path).map_err(data)?;
                println!("{}\t{}\t{}", path.display(), cohort.len(), cohort.n_events());
            }
            Ok(0)
        }
        Command::Pipeline { input, out, models, model, ties, replicates, seed, alpha, expo_threshold, run, gen } => {
            let config = PipelineConfig {
                inputs: if input.is_empty() { gen.inputs() } else { Inputs::Paths(input) },
                comparisons: [(Model::M1, Model::M2), (Model::M1, Model::M3), (Model::M2, Model::M3)]
                    .into_iter()
                    .filter(|(a, b)| models.contains(a) && models.contains(b))
                    .collect(),
                models,
                replicates,
                seed,
                ties,
                alpha,
                expo_threshold,
                hazard_model: model,
                workers: run.workers,
                execution: run.execution(),
            };
            let outcome = run_pipeline(&config, &out).map_err(|e| Failure(e.exit_code() as u8, e.to_string()))?;
            let mut err = io::stderr().lock();
            for r in outcome.reports.iter().filter(|r| !r.succeeded()) {
                let _ = writeln!(err, "{}: {}", r.cohort, r.errors.join("; "));
            }
            let _ = writeln!(
                err,
                "{} of {} cohorts succeeded; reports in {}",
                outcome.n_succeeded(),
                outcome.reports.len(),
                out.display()
            );
            Ok(outcome.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

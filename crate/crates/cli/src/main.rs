//! `treeffuse`: generate synthetic data, train conditional diffusion
//! models, sample from them, and score them.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treeffuser::synth::SynthKind;

use config::{EvalOpts, GbtOpts, NewsvendorOpts, SamplerOpts, SdeOpts, TrainOpts};

pub const THREADS_ENV: &str = "TREEFFUSE_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    Validation(String),
    /// IO, data or model-file failure; exit code 2.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<treeffuser::Error> for CliError {
    fn from(e: treeffuser::Error) -> Self {
        use treeffuser::Error::*;
        match e {
            InvalidParameter(_) | MissingColumn(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "treeffuse", version, about = "Probabilistic regression with diffusion-guided boosted trees")]
struct Cli {
    /// Worker threads; falls back to TREEFFUSE_THREADS, then all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with [train], [gbt], [sde], [sampler], [eval] and [newsvendor] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV
    Synth {
        /// branching_mixture, inflated_gamma, arc_multioutput or linear_gaussian
        #[arg(long)]
        kind: SynthKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature count for linear_gaussian
        #[arg(long, default_value_t = 5)]
        d_x: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write it as a JSON model file
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Response column names; all other columns are features
        #[arg(long, required = true, value_delimiter = ',')]
        response: Vec<String>,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        gbt: GbtOpts,
        #[command(flatten)]
        sde: SdeOpts,
    },
    /// Draw samples of y for every row of a feature CSV
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_samples: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sampler: SamplerOpts,
    },
    /// Score a model on a labelled CSV and write a key=value report
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        eval: EvalOpts,
        #[command(flatten)]
        sampler: SamplerOpts,
    },
    /// Replay a newsvendor policy on observed demand and write the profit ledger
    Newsvendor {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        newsvendor: NewsvendorOpts,
        #[command(flatten)]
        sampler: SamplerOpts,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let file = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { kind, n, seed, d_x, out } => commands::synth(kind, n, d_x, seed, &out),
        Command::Train {
            data,
            response,
            model_out,
            train,
            gbt,
            sde,
        } => {
            use config::Layer;
            let cfg = config::treeffuser_config(train.over(file.train), gbt.over(file.gbt), sde.over(file.sde))?;
            commands::train(&data, &response, &cfg, &model_out)
        }
        Command::Sample {
            model,
            data,
            n_samples,
            out,
            sampler,
        } => {
            use config::Layer;
            let sc = config::sampler_config(sampler.over(file.sampler))?;
            commands::sample(&model, &data, config::positive("n-samples", n_samples)?, &sc, &out)
        }
        Command::Eval {
            model,
            data,
            out,
            eval,
            sampler,
        } => {
            use config::Layer;
            let sc = config::sampler_config(sampler.over(file.sampler))?;
            let eval = eval.over(file.eval);
            let settings = commands::EvalSettings {
                crps_samples: config::positive("crps-samples", eval.crps_samples.unwrap_or(100))?,
                mean_samples: config::positive("mean-samples", eval.mean_samples.unwrap_or(50))?,
                sampler: sc,
            };
            commands::eval(&model, &data, &settings, &out)
        }
        Command::Newsvendor {
            model,
            data,
            out,
            newsvendor,
            sampler,
        } => {
            use config::Layer;
            let sc = config::sampler_config(sampler.over(file.sampler))?;
            let nv = newsvendor.over(file.newsvendor);
            let price = nv.price.ok_or_else(|| CliError::Validation("--price is required".into()))?;
            let cost = nv.cost.ok_or_else(|| CliError::Validation("--cost is required".into()))?;
            if !(cost > 0.0 && cost < price) {
                return Err(CliError::Validation(format!(
                    "need 0 < cost < price, got cost={cost} price={price}"
                )));
            }
            let n_samples = config::positive("n-samples", nv.n_samples.unwrap_or(100))?;
            commands::newsvendor(&model, &data, price, cost, n_samples, &sc, &out)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Validation(format!("{THREADS_ENV}={v} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        config::positive("threads", n)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

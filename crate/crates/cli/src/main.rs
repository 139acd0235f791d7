mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfcurves::config::RunConfig;
use sfcurves::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sfcurves",
    version,
    about = "Spatially correlated curves on irregular grids"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// Run configuration (JSON). Defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fit a single basis size instead of the configured sweep.
    #[arg(long, global = true)]
    pub bases: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic datasets and their ground truth.
    Simulate,
    /// Sample the posterior for a dataset.
    Fit {
        /// Dataset CSV (site_id,x,y_coord,t,value,missing).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict curves at new sites from a finished fit.
    Predict {
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Target CSV (site_id,x,y_coord[,t]).
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Dataset used for the fit; needed only for nearest-site target times.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Exceedance summaries, site flags and optional error metrics.
    Report {
        /// Prediction CSV written by `predict` or `fit`.
        #[arg(long)]
        predictions: PathBuf,
        /// Noise-free truth curves (site_id,t,value) on the same time points.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Aggregate hourly pollutant series into irregular curves.
    #[command(name = "preprocess-pm10")]
    PreprocessPm10 {
        /// Hourly CSV (site_id,x,y_coord,hour,value).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Generate this many synthetic sites instead of reading a file.
        #[arg(long, conflicts_with = "input")]
        synthetic: Option<usize>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigAction {
    /// Write every default to <out>/config.json.
    Init,
}

fn load_config(args: &GlobalArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.bases {
        if k == 0 {
            return Err(Error::config("--bases must be at least 1"));
        }
        cfg.basis.counts = vec![k];
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    match cli.command {
        Command::Config {
            action: ConfigAction::Init,
        } => commands::config_init(&g.out),
        Command::Simulate => commands::simulate(&load_config(g)?, &g.out),
        Command::Fit { data } => commands::fit(&load_config(g)?, data, &g.out),
        Command::Predict { fit, targets, data } => {
            commands::predict(&load_config(g)?, &fit, targets, data, &g.out)
        }
        Command::Report { predictions, truth } => {
            commands::report(&load_config(g)?, &predictions, truth, &g.out)
        }
        Command::PreprocessPm10 { input, synthetic } => {
            commands::preprocess(&load_config(g)?, input, synthetic, &g.out)
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body =
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 4),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), e.exit_code() as u8),
    }
}

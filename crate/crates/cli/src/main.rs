//! `netchoice`: build temporal author networks from event logs and fit
//! choice, logistic and linear models on them.

mod commands;
mod config;
mod error;
mod models;
mod output;
mod pipeline;
mod report;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "netchoice", version, about = "Temporal author-network construction and network-formation models")]
struct Cli {
    /// Flat `key = value` run configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Global seed, fanned out to every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sampled non-chosen alternatives per choice.
    #[arg(long, global = true)]
    negatives: Option<usize>,
    /// Fraction of the analysis window used for training.
    #[arg(long = "train-frac", global = true)]
    train_frac: Option<f64>,
    /// Add the shared-state feature to choice sets.
    #[arg(long = "include-state", global = true)]
    include_state: bool,
    #[arg(long = "out-dir", global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "NETCHOICE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Raw log inputs shared by the network-building commands.
#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Interaction log (csv or jsonl).
    #[arg(long, value_name = "FILE")]
    pub interactions: Option<PathBuf>,
    /// Update log (csv or jsonl).
    #[arg(long, value_name = "FILE")]
    pub updates: Option<PathBuf>,
    /// Site metadata: site_id,created_at,health_condition.
    #[arg(long, value_name = "FILE")]
    pub sites: Option<PathBuf>,
    /// Geo posts: author_id,timestamp,state.
    #[arg(long, value_name = "FILE")]
    pub geo: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// CSV table with a header row.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Model formula, e.g. `y ~ x1 * C(group)`.
    #[arg(long)]
    pub formula: String,
    /// Nested reduced formula to test against.
    #[arg(long)]
    pub reduced: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Events,
    Choices,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Interaction events to generate (events).
    #[arg(long, default_value_t = 100_000)]
    pub events: usize,
    /// Authors in the population (both kinds; events default scales with --events).
    #[arg(long)]
    pub authors: Option<usize>,
    /// Choice instances to generate (choices).
    #[arg(long, default_value_t = 5_000)]
    pub choices: usize,
    /// Alternatives per choice including the chosen one (choices).
    #[arg(long, default_value_t = 25)]
    pub pool: usize,
    /// Authors active before the first choice (choices).
    #[arg(long, default_value_t = 50)]
    pub initial: usize,
    /// True coefficients, comma separated (choices).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1.5,-0.75")]
    pub beta: Vec<f64>,
    /// Network features the coefficients apply to (choices).
    #[arg(long, value_delimiter = ',', default_value = "is_friend_of_friend,log_indegree")]
    pub features: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, deduplicate, resolve amp times and drop self-interactions.
    Ingest(DataArgs),
    /// Project author→site interactions to author→author interactions.
    Project(DataArgs),
    /// Build the temporal network; report structure and throughput.
    Network(DataArgs),
    /// Extract and classify initiations; timeline statistics.
    Initiations(DataArgs),
    /// Aggregate author roles, health conditions and states.
    Authors(DataArgs),
    /// Feature vectors for (chooser, candidate, time) queries.
    Features {
        #[command(flatten)]
        data: DataArgs,
        /// CSV with columns chooser,candidate,time.
        #[arg(long, value_name = "FILE")]
        queries: PathBuf,
    },
    /// Build choice sets with sampled negatives.
    Sample(DataArgs),
    /// Fit the conditional logit on a temporal train split.
    FitMnl {
        #[command(flatten)]
        data: DataArgs,
        /// Choice sets (jsonl); built from the logs when absent.
        #[arg(long, value_name = "FILE")]
        choices: Option<PathBuf>,
    },
    /// Logistic regression from a formula.
    FitLogit(ModelArgs),
    /// Linear regression from a formula.
    FitOls(ModelArgs),
    /// Black-box shift estimation of corrected class priors.
    Bbse {
        /// Source hold-out predictions: prediction,label.
        #[arg(long, value_name = "FILE")]
        holdout: PathBuf,
        /// Target predictions: prediction.
        #[arg(long, value_name = "FILE", conflicts_with = "marginal")]
        target: Option<PathBuf>,
        /// Target predicted-class marginal as JSON (array or label→share object).
        #[arg(long, value_name = "FILE")]
        marginal: Option<PathBuf>,
        /// Per-fold proportion estimates: estimate.
        #[arg(long, value_name = "FILE")]
        folds: Option<PathBuf>,
    },
    /// Cohen's kappa between two label columns.
    Kappa {
        #[arg(long, value_name = "FILE")]
        labels: PathBuf,
        /// The two rater columns.
        #[arg(long, value_delimiter = ',', default_value = "rater_a,rater_b")]
        columns: Vec<String>,
    },
    /// Generate synthetic event logs or choice sets.
    Synth(SynthArgs),
    /// Summary report of initiations and fitted models.
    Report {
        #[arg(long, value_name = "FILE")]
        initiations: Option<PathBuf>,
        /// Author table written by `authors`.
        #[arg(long, value_name = "FILE")]
        authors: Option<PathBuf>,
        /// Fit files written by the fit-* commands.
        #[arg(long = "fit", value_name = "FILE")]
        fits: Vec<PathBuf>,
    },
}

fn overlay(cfg: &mut RunConfig, key: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        cfg.inputs.insert(key.to_string(), p.clone());
    }
}

fn overlay_data(cfg: &mut RunConfig, d: &DataArgs) {
    overlay(cfg, "interactions", &d.interactions);
    overlay(cfg, "updates", &d.updates);
    overlay(cfg, "sites", &d.sites);
    overlay(cfg, "geo", &d.geo);
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.negatives {
        cfg.negatives = n;
    }
    if let Some(f) = cli.train_frac {
        cfg.train_frac = f;
    }
    if cli.include_state {
        cfg.flags.include_state = true;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Ingest(d)
        | Command::Project(d)
        | Command::Network(d)
        | Command::Initiations(d)
        | Command::Authors(d)
        | Command::Sample(d)
        | Command::Features { data: d, .. } => overlay_data(&mut cfg, d),
        Command::FitMnl { data, choices } => {
            overlay_data(&mut cfg, data);
            overlay(&mut cfg, "choices", choices);
        }
        Command::Report {
            initiations, authors, ..
        } => {
            overlay(&mut cfg, "initiations", initiations);
            overlay(&mut cfg, "authors", authors);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cannot start thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest(_) => commands::ingest(&cfg),
        Command::Project(_) => commands::project(&cfg),
        Command::Network(_) => commands::network(&cfg),
        Command::Initiations(_) => commands::initiations(&cfg),
        Command::Authors(_) => commands::authors(&cfg),
        Command::Features { queries, .. } => commands::features(&cfg, queries),
        Command::Sample(_) => commands::sample(&cfg),
        Command::FitMnl { .. } => models::fit_mnl(&cfg),
        Command::FitLogit(m) => models::fit_formula(&cfg, m, models::Linear::Logistic),
        Command::FitOls(m) => models::fit_formula(&cfg, m, models::Linear::Ols),
        Command::Bbse {
            holdout,
            target,
            marginal,
            folds,
        } => models::bbse(&cfg, holdout, target.as_deref(), marginal.as_deref(), folds.as_deref()),
        Command::Kappa { labels, columns } => models::kappa(&cfg, labels, columns),
        Command::Synth(args) => synth::run(&cfg, args),
        Command::Report { fits, .. } => report::run(&cfg, fits),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netchoice: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

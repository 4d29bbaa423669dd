//! Command-line front end: one subcommand per pipeline stage, all sharing an
//! output directory.
//!
//! Usage:
//!   disagree-gat --out run ingest --pairs pairs.csv --entities entities.txt
//!   disagree-gat --out run featurize
//!   disagree-gat --out run build-graph
//!   disagree-gat --out run train
//!   disagree-gat --out run evaluate

mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disagree_gat::corpus::PairFormat;
use disagree_gat::featurize::MentionPolicy;
use disagree_gat::train::BatchMode;

use config::{RunConfig, SortOrder};
use error::{CliError, CliResult};
use stages::SplitName;

pub const THREADS_ENV: &str = "DISAGREE_GAT_THREADS";

#[derive(Parser)]
#[command(name = "disagree-gat", version)]
#[command(about = "Agree/disagree/neutral classification of comment-reply pairs with an entity-conditioned GAT")]
struct Cli {
    /// TOML config with optional [paths], [flags], [data], [train], [model] and [report] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for splitting, initialisation, oversampling and dropout.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Format of written pair, prediction and attention files: csv or jsonl.
    #[arg(long, global = true)]
    format: Option<PairFormat>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load pairs and the entity list, keep entity-relevant pairs, write stats.
    Ingest {
        /// Comment-reply pairs (.csv, or .jsonl/.json for JSON lines).
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Entity list, one name per line.
        #[arg(long)]
        entities: Option<PathBuf>,
        /// Keep pairs that mention no listed entity.
        #[arg(long)]
        no_filter: bool,
    },
    /// Score entity sentiment and embed comments.
    Featurize {
        /// Precomputed 384-d embeddings (EMB1 binary or .jsonl); fallback embeddings otherwise.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Tab-separated `token<TAB>weight` lexicon; the built-in one otherwise.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Which mentions feed an entity's score: first or mean.
        #[arg(long)]
        mention_policy: Option<MentionPolicy>,
    },
    /// Build the interaction graph and the train/val/test split.
    BuildGraph {
        /// Merge nodes sharing (comment id, entity).
        #[arg(long)]
        dedup_nodes: bool,
        /// Keep all samples of a pair in the same split.
        #[arg(long)]
        group_split: bool,
    },
    /// Train with early stopping and write the best checkpoint.
    Train(TrainArgs),
    /// Score the checkpoint on one split.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Train the full model and the four feature ablations.
    Ablate(TrainArgs),
    /// Export per-edge attention and its histogram.
    Attention {
        /// Histogram bin count.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Per-entity label shares, sentiment means and attention means.
    EntityReport {
        /// Keep the N most frequent entities.
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long, value_enum)]
        sort: Option<SortOrder>,
        /// `entity,category` CSV (most-agree, most-disagree, most-neutral).
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Gradient and attention invariant checks.
    Selfcheck {
        /// Random graphs and softmax layouts to test.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Attention dropout rate in [0, 1).
    #[arg(long)]
    dropout: Option<f64>,
    /// `full` or a minibatch size.
    #[arg(long)]
    batch: Option<BatchMode>,
    /// Draw the oversampled train set once instead of every epoch.
    #[arg(long)]
    static_oversample: bool,
    /// Append both raw sentiment scalars to the classifier input.
    #[arg(long)]
    append_raw_sentiment: bool,
}

impl TrainArgs {
    fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.train;
        t.lr = self.lr.unwrap_or(t.lr);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.patience = self.patience.unwrap_or(t.patience);
        t.max_epochs = self.max_epochs.unwrap_or(t.max_epochs);
        t.dropout = self.dropout.unwrap_or(t.dropout);
        t.batch = self.batch.unwrap_or(t.batch);
        c.flags.static_oversample |= self.static_oversample;
        c.flags.append_raw_sentiment |= self.append_raw_sentiment;
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Featurize { .. } => "featurize",
            Command::BuildGraph { .. } => "build-graph",
            Command::Train(_) => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Attention { .. } => "attention",
            Command::EntityReport { .. } => "entity-report",
            Command::Selfcheck { .. } => "selfcheck",
        }
    }

    fn apply(&self, c: &mut RunConfig) {
        match self {
            Command::Ingest { pairs, entities, no_filter } => {
                c.paths.pairs = pairs.clone().or(c.paths.pairs.take());
                c.paths.entities = entities.clone().or(c.paths.entities.take());
                c.data.filter_entities &= !no_filter;
            }
            Command::Featurize { embeddings, lexicon, mention_policy } => {
                c.paths.embeddings = embeddings.clone().or(c.paths.embeddings.take());
                c.paths.lexicon = lexicon.clone().or(c.paths.lexicon.take());
                c.data.mention_policy = mention_policy.unwrap_or(c.data.mention_policy);
            }
            Command::BuildGraph { dedup_nodes, group_split } => {
                c.flags.dedup_nodes |= dedup_nodes;
                c.flags.group_split |= group_split;
            }
            Command::Train(args) | Command::Ablate(args) => args.apply(c),
            Command::Attention { bins } => c.report.bins = bins.unwrap_or(c.report.bins),
            Command::EntityReport { top_n, sort, categories } => {
                c.report.top_n = top_n.unwrap_or(c.report.top_n);
                c.report.sort = sort.unwrap_or(c.report.sort);
                c.paths.categories = categories.clone().or(c.paths.categories.take());
            }
            Command::Evaluate { .. } | Command::Selfcheck { .. } => {}
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::debug!("sequential build; {THREADS_ENV}={n} has no effect");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    if let Some(out) = cli.out {
        config.paths.out = out;
    }
    if let Some(format) = cli.format {
        config.data.format = format;
    }
    cli.command.apply(&mut config);
    config.finalize()?;

    let stage = cli.command.name();
    let dump = config.paths.out.join(format!("resolved-config-{stage}.toml"));
    std::fs::write(&dump, config.to_toml()?).map_err(|e| CliError::io(&dump, e))?;
    log::info!("{stage}: output in {}", config.paths.out.display());

    match cli.command {
        Command::Ingest { .. } => stages::ingest(&config),
        Command::Featurize { .. } => stages::featurize(&config),
        Command::BuildGraph { .. } => stages::build(&config),
        Command::Train(_) => stages::train(&config),
        Command::Evaluate { split } => stages::evaluate(&config, split),
        Command::Ablate(_) => stages::ablate(&config),
        Command::Attention { .. } => stages::attention(&config),
        Command::EntityReport { .. } => stages::entity(&config),
        Command::Selfcheck { trials } => stages::selfcheck(&config, trials),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

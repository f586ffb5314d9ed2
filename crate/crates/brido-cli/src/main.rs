use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use brido::loss::MarginScheme;
use brido::metrics::RougeVariant;
use brido::toy::ModelFile;
use brido::{SimConfig, ToyModel};

use brido_cli::commands::{self, Outcome, TrainArgs};
use brido_cli::config::RunConfig;
use brido_cli::formats::{ingest_pools, ingest_records, PoolRecord};
use brido_cli::{EXIT_INPUT_ERROR, EXIT_THRESHOLD_FAILURE};

/// Consensus scoring, rank-margin losses, diverse beam search, toy
/// training, and the minority-vote simulation, over JSON-lines data.
#[derive(Parser)]
#[command(name = "brido", version, about)]
struct Cli {
    /// TOML run configuration; individual flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// ROUGE variant: r1, r2, rl, harmonic-r1-r2, mean-r1-r2-rl.
    #[arg(long, global = true)]
    variant: Option<RougeVariant>,
    /// Reference weight; "inf" selects the reference-only limit.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Shorthand for --alpha inf.
    #[arg(long, global = true)]
    brio: bool,
    /// Margin scale λ.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Margin scheme: fixed or difference.
    #[arg(long, global = true)]
    margin: Option<MarginScheme>,
    /// Contrastive loss weight γ.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Length-penalty exponent β.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Diversity penalty η.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Total candidates N generated per source.
    #[arg(long, global = true)]
    num_candidates: Option<usize>,
    /// Beam groups N_g (must divide N).
    #[arg(long, global = true)]
    num_groups: Option<usize>,
    /// Maximum generated tokens per candidate.
    #[arg(long, global = true)]
    max_length: Option<usize>,
    /// PRNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if self.brio {
            cfg.alpha = f64::INFINITY;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.margin {
            cfg.margin = m;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(e) = self.eta {
            cfg.eta = e;
        }
        if let Some(n) = self.num_candidates {
            cfg.num_candidates = n;
        }
        if let Some(n) = self.num_groups {
            cfg.num_groups = n;
        }
        if let Some(n) = self.max_length {
            cfg.max_length = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Consensus-score each pool.
    Score {
        /// Pools file (JSON lines); falls back to the config's paths.pools.
        #[arg(long)]
        pools: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Consensus-score and rank each pool.
    Rank {
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contrastive loss over each pool's ranked f-values (requires
    /// token_logprobs; the cross-entropy term is 0 in this data-only path).
    Loss {
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference verification of the loss gradient on each pool.
    Gradcheck {
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Maximum accepted relative error; exceeding it fails the run.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Diverse beam search over each record's source.
    Beam {
        /// Model file produced by `train`; falls back to paths.model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Instead of a model file, seed a fresh model with these content
        /// tokens (comma-separated).
        #[arg(long, value_delimiter = ',', conflicts_with = "model")]
        vocab: Option<Vec<String>>,
        /// Source buckets for a --vocab model.
        #[arg(long, default_value_t = 4)]
        num_buckets: usize,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a toy model on a corpus of {source, reference} records.
    Train {
        /// Corpus file; falls back to paths.corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Where to write the trained model (JSON).
        #[arg(long)]
        model_out: PathBuf,
        /// Per-step loss trace; stdout when omitted.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 4)]
        epochs: usize,
        #[arg(long, default_value_t = 4)]
        num_buckets: usize,
    },
    /// Run the fact-corruption simulation and report the statistics.
    Simulate {
        #[arg(long, default_value_t = 4)]
        slots: usize,
        #[arg(long, default_value_t = 10)]
        vocab_per_slot: usize,
        #[arg(long, default_value_t = 0.2)]
        halluc_prob: f64,
        #[arg(long, default_value_t = 16)]
        pool_size: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a report file; optionally re-emit it in canonical form.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reemit: Option<PathBuf>,
    },
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn open_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn resolve(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone()).with_context(|| {
        format!("no {what} given: pass --{what} or set paths.{what} in the config")
    })
}

fn load_model(path: &Path) -> Result<ToyModel> {
    let mut text = String::new();
    open_reader(path)?.read_to_string(&mut text)?;
    let file: ModelFile<f64> =
        serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))?;
    Ok(ToyModel::from_file(file)?)
}

fn save_model(model: &ToyModel, path: &Path) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer(&mut w, &model.to_file())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);

    match cli.command {
        Command::Score { pools, out } => {
            let path = resolve(pools, &cfg.paths.pools, "pools")?;
            let records = ingest_pools(open_reader(&path)?)?;
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_score(&records, &cfg, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Rank { pools, out } => {
            let path = resolve(pools, &cfg.paths.pools, "pools")?;
            let records = ingest_pools(open_reader(&path)?)?;
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_rank(&records, &cfg, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Loss { pools, out } => {
            let path = resolve(pools, &cfg.paths.pools, "pools")?;
            let records = ingest_pools(open_reader(&path)?)?;
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_loss(&records, &cfg, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Gradcheck {
            pools,
            out,
            epsilon,
            tolerance,
        } => {
            let path = resolve(pools, &cfg.paths.pools, "pools")?;
            let records = ingest_pools(open_reader(&path)?)?;
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_gradcheck(&records, &cfg, epsilon, tolerance, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Beam {
            model,
            vocab,
            num_buckets,
            pools,
            out,
        } => {
            let model = match (model, vocab) {
                (Some(path), None) => load_model(&path)?,
                (None, Some(content)) => {
                    let mut v = vec!["<bos>".to_owned(), "<eos>".to_owned()];
                    v.extend(content);
                    ToyModel::init(v, num_buckets, cfg.seed)?
                }
                (None, None) => match &cfg.paths.model {
                    Some(path) => load_model(path)?,
                    None => bail!("beam needs --model, --vocab, or paths.model in the config"),
                },
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let path = resolve(pools, &cfg.paths.pools, "pools")?;
            let records = ingest_records::<PoolRecord>(open_reader(&path)?)?;
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_beam(&model, &records, &cfg, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Train {
            corpus,
            model_out,
            trace_out,
            learning_rate,
            epochs,
            num_buckets,
        } => {
            let path = resolve(corpus, &cfg.paths.corpus, "corpus")?;
            let records = ingest_records::<PoolRecord>(open_reader(&path)?)?;
            let args = TrainArgs {
                learning_rate,
                epochs,
                num_buckets,
            };
            let mut w = open_writer(trace_out.as_deref())?;
            let (model, outcome) = commands::cmd_train(&records, &cfg, &args, &mut w)?;
            w.flush()?;
            save_model(&model, &model_out)?;
            Ok(outcome)
        }
        Command::Simulate {
            slots,
            vocab_per_slot,
            halluc_prob,
            pool_size,
            trials,
            out,
        } => {
            let sim = SimConfig {
                num_slots: slots,
                vocab_per_slot,
                halluc_prob,
                pool_size,
                trials,
                alpha: cfg.alpha,
                variant: cfg.variant,
                seed: cfg.seed,
            };
            let mut w = open_writer(out.as_deref())?;
            let outcome = commands::cmd_simulate(&sim, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Report { input, reemit } => {
            let records = ingest_records::<serde_json::Value>(open_reader(&input)?)?;
            let mut summary = open_writer(None)?;
            let outcome = match reemit {
                Some(path) => {
                    let mut re = open_writer(Some(&path))?;
                    let o = commands::cmd_report(&records, Some(&mut re), &mut summary)?;
                    re.flush()?;
                    o
                }
                None => commands::cmd_report(&records, None, &mut summary)?,
            };
            summary.flush()?;
            Ok(outcome)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            if outcome.record_errors > 0 {
                ExitCode::from(EXIT_INPUT_ERROR)
            } else if outcome.threshold_failures > 0 {
                ExitCode::from(EXIT_THRESHOLD_FAILURE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

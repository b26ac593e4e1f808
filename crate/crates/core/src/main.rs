use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use droidflow::metrics::{Factor, SearchSpace};
use droidflow::nn::Model;
use droidflow::pipeline::{self, MineOptions, PipelineConfig, SplitIds, Tables};
use droidflow::synth::{write_corpus, SynthConfig};
use droidflow::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "droidflow", version, about = "Static call-trace and flow-graph malware classifier for Android apps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Rank vulnerability-corpus keywords and write the critical-API list.
    MineApis {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        api_docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = droidflow::miner::DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value_t = droidflow::miner::DEFAULT_MIN_MATCHES)]
        min_matches: usize,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Existing tool API lists to merge (repeatable).
        #[arg(long = "tool-list")]
        tool_lists: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Extract flow graphs, call traces and opcode matrices.
    Extract {
        /// An app directory, an app JSON file, or a directory of apps.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train on the training split of an extracted feature set.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Output directory for model.bin, loss.csv and split.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// One-factor-at-a-time grid search on stratified subsets.
    Tune {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Factors to sweep (repeatable); all by default.
        #[arg(long = "factor")]
        factors: Vec<Factor>,
        #[arg(long)]
        revalidate: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score extracted apps with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to the test ids of a split.json written by `train`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute metrics from a predictions CSV.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic labeled corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        apps: usize,
        #[arg(long, default_value_t = 0.5)]
        malicious_fraction: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::MineApis { common, .. }
            | Command::Extract { common, .. }
            | Command::Train { common, .. }
            | Command::Tune { common, .. }
            | Command::Predict { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Synth { common, .. } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn json(v: &impl serde::Serialize) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cmd: Command) -> Result<(), Error> {
    let mut cfg = load_config(cmd.common())?;
    match cmd {
        Command::MineApis {
            corpus,
            api_docs,
            out,
            top_k,
            min_matches,
            stopwords,
            tool_lists,
            ..
        } => {
            let opts = MineOptions {
                top_k,
                min_matches,
                stopwords,
                tool_lists,
            };
            let set = pipeline::mine_apis(&corpus, &api_docs, &opts)?;
            log::info!("{} critical APIs", set.len());
            write(&out, &set.to_text())
        }
        Command::Extract { input, out, workers, .. } => {
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let tables = Tables::load(&cfg.paths)?;
            let apps = pipeline::discover_apps(&input)?;
            let entries = pipeline::extract_batch(&apps, &out, &tables, &cfg)?;
            let failed = entries.iter().filter(|e| !e.ok).count();
            log::info!("extracted {} apps, {failed} failed", entries.len() - failed);
            Ok(())
        }
        Command::Train { features, out, epochs, .. } => {
            if let Some(e) = epochs {
                cfg.hyper.epochs = e;
            }
            let apps = pipeline::load_feature_set(&features)?;
            let run = pipeline::train_on_features(&apps, &cfg)?;
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            run.model.save(&out.join("model.bin"))?;
            write(&out.join("loss.csv"), &pipeline::losses_csv(&run.losses))?;
            write(&out.join("split.json"), &json(&run.split)?)
        }
        Command::Tune {
            features,
            out,
            factors,
            revalidate,
            ..
        } => {
            if !factors.is_empty() {
                cfg.tune.factors = factors;
            }
            cfg.tune.revalidate |= revalidate;
            let apps = pipeline::load_feature_set(&features)?;
            let run = pipeline::tune_on_features(&apps, &SearchSpace::table(), &cfg)?;
            write(&out.join("grid.csv"), &run.result.to_csv())?;
            write(&out.join("best.json"), &json(&run.result.best)?)
        }
        Command::Predict {
            model,
            features,
            out,
            split,
            ..
        } => {
            let model = Model::load(&model)?;
            let apps = pipeline::load_feature_set(&features)?;
            let chosen: Vec<_> = match split {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    let ids: SplitIds = serde_json::from_str(&text)?;
                    apps.iter().filter(|a| ids.test.contains(&a.app_id)).collect()
                }
                None => apps.iter().collect(),
            };
            let rows = pipeline::predict_apps(&model, &chosen, &cfg)?;
            write(&out, &pipeline::predictions_csv(&rows))
        }
        Command::Evaluate {
            predictions,
            out,
            threshold,
            ..
        } => {
            let text = fs::read_to_string(&predictions).map_err(|e| Error::Io {
                path: predictions.clone(),
                source: e,
            })?;
            let (scores, labels) = pipeline::parse_predictions(&text)?;
            let (_, report) =
                droidflow::metrics::compute_metrics(&scores, &labels, threshold.unwrap_or(cfg.threshold))?;
            write(&out, &report.to_json())
        }
        Command::Synth {
            out,
            apps,
            malicious_fraction,
            ..
        } => {
            let sc = SynthConfig {
                apps,
                malicious_fraction,
                seed: cfg.seed,
            };
            write_corpus(&out, &sc).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let level = match cli.command.common().verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::DivergedLoss { .. } => EXIT_DIVERGED,
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_INPUT,
            })
        }
    }
}

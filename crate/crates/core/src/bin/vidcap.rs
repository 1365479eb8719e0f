use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vidcap::harness::commands::*;
use vidcap::harness::{results_table, run_experiment, ExperimentConfig};
use vidcap::{Error, Result};

/// Worker-pool size for per-video and per-example parallelism.
const WORKERS_ENV: &str = "VIDCAP_WORKERS";

#[derive(Parser)]
#[command(name = "vidcap", version, about = "Video captioning: generators, evaluator reranking, metrics")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the vocabulary from the training captions.
    Vocab,
    /// Fit per-channel k-means codebooks on a descriptor file.
    Codebook {
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Write a feature file: BoF from descriptors, or category one-hots from a dataset.
    Encode {
        #[arg(long)]
        name: String,
        #[arg(long, requires = "codebooks", conflicts_with = "dataset")]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        codebooks: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train the caption generators of the roster.
    TrainLm {
        #[arg(long)]
        model: Option<String>,
    },
    /// Train the evaluator network.
    TrainEval,
    /// Beam-search every model on the eval split into candidate pools.
    Generate,
    /// Score the pools with the evaluator and pick one caption per video.
    Rerank,
    /// Compute metrics and write the results table.
    Score,
    /// Write the synthetic benchmark and a config pointing at it.
    Synth,
    /// The full pipeline.
    Run,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn features_path(out: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out.join("features"))?;
    Ok(out.join("features").join(format!("{name}.vfea")))
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::Vocab => {
            let (n, [train, val, test]) = cmd_vocab(&cfg, out)?;
            println!("videos: train {train}, val {val}, test {test}");
            println!("vocabulary: {n} tokens");
        }
        Cmd::Codebook { descriptors, k, iters } => {
            let k = k.unwrap_or(cfg.synth.codebook_k);
            let iters = iters.unwrap_or(cfg.synth.kmeans_iters);
            for p in cmd_codebook(descriptors, k, iters, cfg.seed, &out.join("codebooks"))? {
                println!("{}", p.display());
            }
        }
        Cmd::Encode { name, descriptors, codebooks, dataset } => {
            let file = features_path(out, name)?;
            let n = match (descriptors, codebooks, dataset) {
                (Some(d), Some(c), _) => cmd_encode_bof(d, c, name, &file)?,
                (None, _, Some(d)) => cmd_encode_categ(d, name, &file)?,
                _ => return Err(Error::Parameter("encode needs --descriptors/--codebooks or --dataset".into())),
            };
            println!("{n} videos -> {}", file.display());
        }
        Cmd::TrainLm { model } => {
            for m in cmd_train_lm(&cfg, out, model.as_deref())? {
                let last = m.epoch_losses.last().copied().unwrap_or(f64::NAN);
                println!("model {}: final loss {last:.4}, eval perplexity {:.4}", m.tag, m.perplexity);
            }
        }
        Cmd::TrainEval => {
            let (losses, acc) = cmd_train_eval(&cfg, out)?;
            let last = losses.last().copied().unwrap_or(f64::NAN);
            println!("evaluator: final loss {last:.4}, eval pairwise accuracy {acc:.4}");
        }
        Cmd::Generate => println!("{} pools", cmd_generate(&cfg, out)?),
        Cmd::Rerank => println!("{} pools reranked", cmd_rerank(&cfg, out)?),
        Cmd::Score => print!("{}", results_table(&cmd_score(&cfg, out)?.rows)),
        Cmd::Synth => println!("{}", cmd_synth(&cfg, out)?.display()),
        Cmd::Run => print!("{}", results_table(&run_experiment(&cfg, Some(out))?.rows)),
    }
    Ok(())
}

fn init_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parameter(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Parameter(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match init_workers().and_then(|_| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

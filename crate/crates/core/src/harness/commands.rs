//! One function per CLI subcommand. Every stage reads and writes the same
//! output directory (see [`Layout`]), so running the stages one by one
//! reproduces `run` exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::dataset::load_dataset;
use super::descriptors::{read_descriptors, write_descriptors};
use super::experiment::*;
use super::store::FeatureStore;
use super::synth::{synth_generate, train_codebooks};
use crate::decoder::LMParams;
use crate::ensemble::{choose, read_pools, write_pools};
use crate::error::{Error, Result, StageExt};
use crate::evaluator::EvaluatorParams;
use crate::features::{bof_encode, category_onehot, Channel, Codebook, NUM_CATEGORIES};

/// Writes the synthetic benchmark and a `config.toml` that points at it.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let s = synth_generate(&cfg.synth, &mut stage_rng(cfg.seed, "synth")).stage("synth")?;
    std::fs::create_dir_all(out.join("features"))?;
    std::fs::create_dir_all(out.join("codebooks"))?;
    s.dataset.save(&out.join("dataset.json"))?;
    let mut rel = Vec::new();
    for name in s.store.names() {
        let f = PathBuf::from("features").join(format!("{name}.vfea"));
        s.store.save_features(name, &out.join(&f))?;
        rel.push(f);
    }
    write_descriptors(&out.join("descriptors.jsonl"), &s.descriptors)?;
    for (ch, book) in &s.codebooks {
        book.save(&out.join("codebooks").join(format!("{ch}.vcbk")))?;
    }
    let mut c = cfg.clone();
    c.dataset = Some(PathBuf::from("dataset.json"));
    c.features = rel;
    let path = out.join("config.toml");
    std::fs::write(&path, c.to_toml()?)?;
    Ok(path)
}

/// Returns the vocabulary size and the train/val/test video counts.
pub fn cmd_vocab(cfg: &ExperimentConfig, out: &Path) -> Result<(usize, [usize; 3])> {
    let p = prepare(cfg).stage("vocab")?;
    p.vocab.save(&Layout::new(out)?.vocab())?;
    Ok((p.vocab.len(), p.dataset.counts()))
}

/// Fits one codebook per descriptor channel on every video in `descriptors`.
pub fn cmd_codebook(descriptors: &Path, k: usize, iters: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let sets = read_descriptors(descriptors).stage("codebook")?;
    let books = train_codebooks(sets.values(), k, iters, &mut stage_rng(seed, "codebook")).stage("codebook")?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (ch, book) in &books {
        let p = out.join(format!("{ch}.vcbk"));
        book.save(&p)?;
        written.push(p);
    }
    Ok(written)
}

/// BoF-encodes every video of a descriptor file into feature `name`.
pub fn cmd_encode_bof(descriptors: &Path, codebooks: &Path, name: &str, out_file: &Path) -> Result<usize> {
    let mut books = BTreeMap::new();
    for ch in Channel::ALL {
        books.insert(ch, Codebook::load(&codebooks.join(format!("{ch}.vcbk"))).stage("encode")?);
    }
    let sets = read_descriptors(descriptors).stage("encode")?;
    let mut store = FeatureStore::new();
    for (id, set) in &sets {
        store.insert(name, id, bof_encode(set, &books).stage("encode")?.as_slice())?;
    }
    store.save_features(name, out_file)?;
    Ok(sets.len())
}

/// Category one-hot vectors for every video of a dataset file.
pub fn cmd_encode_categ(dataset: &Path, name: &str, out_file: &Path) -> Result<usize> {
    let d = load_dataset(dataset).stage("encode")?;
    let mut store = FeatureStore::new();
    for v in &d.videos {
        store.insert(name, &v.id, category_onehot(v.category, NUM_CATEGORIES)?.as_slice())?;
    }
    store.save_features(name, out_file)?;
    Ok(d.videos.len())
}

pub struct TrainedModel {
    pub tag: String,
    pub epoch_losses: Vec<f64>,
    pub perplexity: f64,
}

/// Trains the roster (or the one model named `only`).
pub fn cmd_train_lm(cfg: &ExperimentConfig, out: &Path, only: Option<&str>) -> Result<Vec<TrainedModel>> {
    let layout = Layout::new(out)?;
    let p = prepare(cfg).stage("train-lm")?;
    if let Some(t) = only {
        if !cfg.models.iter().any(|m| m.tag == t) {
            return Err(Error::Config(format!("no model `{t}` in the roster")));
        }
    }
    let mut done = Vec::new();
    for spec in cfg.models.iter().filter(|m| only.is_none_or(|t| t == m.tag)) {
        let (params, epoch_losses) = train_generator(cfg, &p, spec).stage("train-lm")?;
        let perplexity = split_perplexity(&p, cfg.eval_split, spec, &params).stage("train-lm")?;
        params.save(&layout.model(&spec.tag))?;
        done.push(TrainedModel { tag: spec.tag.clone(), epoch_losses, perplexity });
    }
    Ok(done)
}

/// Trains the evaluator; returns its epoch losses and eval-split accuracy.
pub fn cmd_train_eval(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<f64>, f64)> {
    let layout = Layout::new(out)?;
    let p = prepare(cfg).stage("train-eval")?;
    let (params, losses) = train_evaluator_stage(cfg, &p).stage("train-eval")?;
    params.save(&layout.evaluator())?;
    let acc = evaluator_accuracy(cfg, &p, &params, cfg.eval_split).stage("train-eval")?;
    Ok((losses, acc))
}

fn load_models(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<LMParams>> {
    cfg.models.iter().map(|m| LMParams::load(&layout.model(&m.tag))).collect()
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let layout = Layout::new(out)?;
    let p = prepare(cfg).stage("generate")?;
    let models = bind_models(cfg, load_models(cfg, &layout).stage("generate")?);
    let pools = generate_stage(cfg, &p, &models).stage("generate")?;
    write_pools(&layout.pools(), &pools)?;
    Ok(pools.len())
}

pub fn cmd_rerank(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let layout = Layout::new(out)?;
    let p = prepare(cfg).stage("rerank")?;
    let evaluator = EvaluatorParams::load(&layout.evaluator()).stage("rerank")?;
    let mut pools = read_pools(&layout.pools()).stage("rerank")?;
    let chosen = rerank_stage(cfg, &p, &mut pools, &evaluator).stage("rerank")?;
    write_pools(&layout.reranked(), &pools)?;
    write_chosen(&layout.chosen(), &pools, &chosen)?;
    Ok(pools.len())
}

/// Scores the reranked pools and writes the reports and results table.
/// Perplexities are filled in for every model checkpoint present.
pub fn cmd_score(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentResult> {
    let layout = Layout::new(out)?;
    let p = prepare(cfg).stage("score")?;
    let pools = read_pools(&layout.reranked()).stage("score")?;
    let chosen = pools
        .iter()
        .map(|pool| choose(pool, &cfg.rerank).map(|i| pool.entries[i].clone()))
        .collect::<Result<Vec<_>>>()
        .stage("score")?;
    let mut ppl = Vec::new();
    for spec in &cfg.models {
        let path = layout.model(&spec.tag);
        ppl.push(if path.exists() {
            let m = LMParams::load(&path).stage("score")?;
            Some(split_perplexity(&p, cfg.eval_split, spec, &m).stage("score")?)
        } else {
            None
        });
    }
    let result = score_stage(cfg, &p, &pools, &chosen, &ppl).stage("score")?;
    write_results(&layout, &result)?;
    Ok(result)
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelSpec};
use super::dataset::{load_dataset, Dataset, Split, VideoRecord};
use super::store::FeatureStore;
use super::synth::synth_generate;
use crate::decoder::{perplexity, train_step, Batch, Example, LMConfig, LMParams};
use crate::ensemble::{generate_pools, rerank, Candidate, CandidatePool, ModelBinding};
use crate::error::{Error, Result, StageExt};
use crate::evaluator::{ranking_accuracy, train_evaluator, EvalVideo, EvaluatorConfig, EvaluatorParams};
use crate::metrics::{evaluate, MetricReport};
use crate::numerics::{OptState, Rng};
use crate::text::{build_vocab, encode_caption, TokenSeq, Vocabulary};

/// Generator for one named stage: the same `(seed, label)` always yields
/// the same stream, whichever stages ran before.
pub fn stage_rng(seed: u64, label: &str) -> Rng {
    // FNV-1a over the label, mixed into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    Rng::from_seed(key)
}

/// Dataset, features and vocabulary shared by every stage.
pub struct Prepared {
    pub dataset: Dataset,
    pub store: FeatureStore,
    pub vocab: Vocabulary,
}

impl Prepared {
    pub fn videos(&self, split: Split) -> Vec<&VideoRecord> {
        self.dataset.split(split)
    }

    fn check_feature(&self, name: &str, who: &str) -> Result<()> {
        if !self.store.has(name) {
            return Err(Error::Config(format!("{who} references unknown feature `{name}` (have: {})", self.store.names().join(", "))));
        }
        Ok(())
    }
}

/// Loads (or synthesises) the data and builds the vocabulary from the
/// training captions.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (dataset, store) = match &cfg.dataset {
        Some(path) => {
            let dataset = load_dataset(path)?;
            let mut store = FeatureStore::new();
            for f in &cfg.features {
                store.load_features(f)?;
            }
            (dataset, store)
        }
        None => {
            let s = synth_generate(&cfg.synth, &mut stage_rng(cfg.seed, "synth"))?;
            (s.dataset, s.store)
        }
    };
    let captions: Vec<&str> =
        dataset.split(cfg.train_split).iter().flat_map(|v| v.captions.iter().map(String::as_str)).collect();
    let vocab = build_vocab(&captions, cfg.min_count)?;
    let p = Prepared { dataset, store, vocab };
    for m in &cfg.models {
        p.check_feature(&m.init, &format!("model `{}`", m.tag))?;
        p.check_feature(&m.persist, &format!("model `{}`", m.tag))?;
    }
    p.check_feature(&cfg.evaluator.feature, "evaluator")?;
    Ok(p)
}

struct OwnedExamples {
    init: Vec<Vec<f64>>,
    persist: Vec<Vec<f64>>,
    targets: Vec<TokenSeq>,
    owner: Vec<usize>,
}

impl OwnedExamples {
    fn build(p: &Prepared, split: Split, spec: &ModelSpec) -> Result<Self> {
        let mut e = OwnedExamples { init: vec![], persist: vec![], targets: vec![], owner: vec![] };
        for v in p.videos(split) {
            e.init.push(p.store.get(&v.id, &spec.init)?.values.into_data());
            e.persist.push(p.store.get(&v.id, &spec.persist)?.values.into_data());
            let k = e.init.len() - 1;
            for c in &v.captions {
                e.targets.push(encode_caption(c, &p.vocab));
                e.owner.push(k);
            }
        }
        Ok(e)
    }

    fn example(&self, i: usize) -> Example<'_> {
        let o = self.owner[i];
        Example { init: &self.init[o], persist: &self.persist[o], target: &self.targets[i] }
    }

    fn all(&self) -> Vec<Example<'_>> {
        (0..self.targets.len()).map(|i| self.example(i)).collect()
    }
}

pub fn lm_config(cfg: &ExperimentConfig, p: &Prepared, spec: &ModelSpec) -> Result<LMConfig> {
    Ok(LMConfig {
        depth: spec.depth,
        hidden: cfg.lm.hidden,
        embed_dim: cfg.lm.embed_dim,
        vocab_size: p.vocab.len(),
        dropout_rate: cfg.lm.dropout_rate,
        init_dim: p.store.dim(&spec.init)?,
        persist_dim: p.store.dim(&spec.persist)?,
    })
}

/// Trains one roster model on every (video, caption) pair of the training
/// split. Returns the parameters and the mean loss of each epoch.
pub fn train_generator(cfg: &ExperimentConfig, p: &Prepared, spec: &ModelSpec) -> Result<(LMParams, Vec<f64>)> {
    let mut rng = stage_rng(cfg.seed, &format!("lm/{}", spec.tag));
    let data = OwnedExamples::build(p, cfg.train_split, spec)?;
    if data.targets.is_empty() {
        return Err(Error::EmptyInput(format!("no training captions for model `{}`", spec.tag)));
    }
    let mut params = LMParams::init(lm_config(cfg, p, spec)?, &mut rng)?;
    let mut opt = OptState::new(&params, cfg.lm.optimizer)?;
    let mut order: Vec<usize> = (0..data.targets.len()).collect();
    let mut losses = Vec::with_capacity(cfg.lm.epochs);
    for epoch in 0..cfg.lm.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.lm.batch_size).enumerate() {
            let batch = Batch {
                label: format!("model {} epoch {epoch} batch {b}", spec.tag),
                items: chunk.iter().map(|&i| data.example(i)).collect(),
            };
            total += train_step(&batch, &mut params, &mut opt, &mut rng)? * chunk.len() as f64;
        }
        losses.push(total / order.len() as f64);
    }
    Ok((params, losses))
}

/// Perplexity of `params` on every caption of `split`.
pub fn split_perplexity(p: &Prepared, split: Split, spec: &ModelSpec, params: &LMParams) -> Result<f64> {
    let data = OwnedExamples::build(p, split, spec)?;
    perplexity(&data.all(), params)
}

struct EvalData {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    captions: Vec<Vec<TokenSeq>>,
}

impl EvalData {
    fn build(p: &Prepared, split: Split, feature: &str) -> Result<Self> {
        let mut d = EvalData { ids: vec![], features: vec![], captions: vec![] };
        for v in p.videos(split) {
            d.ids.push(v.id.clone());
            d.features.push(p.store.get(&v.id, feature)?.values.into_data());
            d.captions.push(v.captions.iter().map(|c| encode_caption(c, &p.vocab)).collect());
        }
        Ok(d)
    }

    fn views(&self) -> Vec<EvalVideo<'_>> {
        (0..self.ids.len())
            .map(|i| EvalVideo { id: &self.ids[i], feature: &self.features[i], captions: &self.captions[i] })
            .collect()
    }
}

pub fn evaluator_config(cfg: &ExperimentConfig, p: &Prepared) -> Result<EvaluatorConfig> {
    let e = &cfg.evaluator;
    Ok(EvaluatorConfig {
        vocab_size: p.vocab.len(),
        embed_dim: e.embed_dim,
        filter_widths: e.filter_widths.clone(),
        filters_per_width: e.filters_per_width,
        joint_dim: e.joint_dim,
        margin: e.margin,
        n_neg: e.n_neg,
        video_feature: e.feature.clone(),
        video_dim: p.store.dim(&e.feature)?,
    })
}

/// Trains the evaluator on the training split.
pub fn train_evaluator_stage(cfg: &ExperimentConfig, p: &Prepared) -> Result<(EvaluatorParams, Vec<f64>)> {
    let data = EvalData::build(p, cfg.train_split, &cfg.evaluator.feature)?;
    let ecfg = evaluator_config(cfg, p)?;
    train_evaluator(&data.views(), &ecfg, &cfg.evaluator_training, &mut stage_rng(cfg.seed, "evaluator"))
}

/// Share of matched-pair vs negative comparisons won on `split`.
pub fn evaluator_accuracy(cfg: &ExperimentConfig, p: &Prepared, params: &EvaluatorParams, split: Split) -> Result<f64> {
    let data = EvalData::build(p, split, &params.config.video_feature)?;
    ranking_accuracy(params, &data.views(), cfg.evaluator.n_neg, &mut stage_rng(cfg.seed, "evaluator-accuracy"))
}

pub fn bind_models(cfg: &ExperimentConfig, params: Vec<LMParams>) -> Vec<ModelBinding> {
    cfg.models
        .iter()
        .zip(params)
        .map(|(s, p)| ModelBinding { tag: s.tag.clone(), params: p, init_feature: s.init.clone(), persist_feature: s.persist.clone() })
        .collect()
}

/// One pool per evaluation video, in dataset order.
pub fn generate_stage(cfg: &ExperimentConfig, p: &Prepared, models: &[ModelBinding]) -> Result<Vec<CandidatePool>> {
    let ids: Vec<String> = p.videos(cfg.eval_split).iter().map(|v| v.id.clone()).collect();
    generate_pools(models, &ids, &p.store, &p.vocab, &cfg.generation)
}

/// Scores every pool with the evaluator; returns the chosen candidates.
pub fn rerank_stage(
    cfg: &ExperimentConfig,
    p: &Prepared,
    pools: &mut [CandidatePool],
    evaluator: &EvaluatorParams,
) -> Result<Vec<Candidate>> {
    pools
        .par_iter_mut()
        .map(|pool| {
            let f = p.store.get(&pool.video_id, &evaluator.config.video_feature)?;
            rerank(pool, &f, evaluator, &p.vocab, &cfg.rerank)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub index: usize,
    pub model: String,
    pub init: Option<String>,
    pub persist: Option<String>,
    pub depth: Option<usize>,
    pub perplexity: Option<f64>,
    pub bleu4: f64,
    pub cider: f64,
    pub rouge_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub reports: Vec<(String, MetricReport)>,
    pub ensemble: MetricReport,
    pub evaluator_accuracy: Option<f64>,
}

impl ExperimentResult {
    pub fn row(&self, model: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn ensemble_row(&self) -> &ResultRow {
        self.rows.last().expect("ensemble row")
    }
}

/// Metrics for each single model (from the pools) and the ensemble.
pub fn score_stage(
    cfg: &ExperimentConfig,
    p: &Prepared,
    pools: &[CandidatePool],
    chosen: &[Candidate],
    perplexities: &[Option<f64>],
) -> Result<ExperimentResult> {
    let refs: Vec<Vec<String>> = pools
        .iter()
        .map(|pool| {
            p.dataset
                .get(&pool.video_id)
                .map(|v| v.captions.clone())
                .ok_or_else(|| Error::Input(format!("pool for unknown video `{}`", pool.video_id)))
        })
        .collect::<Result<_>>()?;
    let ids: Vec<String> = pools.iter().map(|p| p.video_id.clone()).collect();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (i, spec) in cfg.models.iter().enumerate() {
        let hyps: Vec<String> = pools
            .iter()
            .map(|pool| {
                pool.entries
                    .iter()
                    .find(|c| c.model == spec.tag)
                    .map(|c| c.caption.clone())
                    .ok_or_else(|| Error::Input(format!("pool for `{}` lacks model `{}`", pool.video_id, spec.tag)))
            })
            .collect::<Result<_>>()?;
        let r = evaluate(&ids, &hyps, &refs, &cfg.metrics)?;
        rows.push(ResultRow {
            index: i + 1,
            model: spec.tag.clone(),
            init: Some(spec.init.clone()),
            persist: Some(spec.persist.clone()),
            depth: Some(spec.depth),
            perplexity: perplexities.get(i).copied().flatten(),
            bleu4: r.bleu4,
            cider: r.cider,
            rouge_l: r.rouge_l,
        });
        reports.push((spec.tag.clone(), r));
    }
    let hyps: Vec<String> = chosen.iter().map(|c| c.caption.clone()).collect();
    let ensemble = evaluate(&ids, &hyps, &refs, &cfg.metrics)?;
    let tags: Vec<&str> = cfg.models.iter().map(|m| m.tag.as_str()).collect();
    rows.push(ResultRow {
        index: cfg.models.len() + 1,
        model: format!("ensemble({})", tags.join(",")),
        init: None,
        persist: None,
        depth: None,
        perplexity: None,
        bleu4: ensemble.bleu4,
        cider: ensemble.cider,
        rouge_l: ensemble.rouge_l,
    });
    Ok(ExperimentResult { rows, reports, ensemble, evaluator_accuracy: None })
}

/// Fixed-layout text table: one row per model plus the ensemble.
pub fn results_table(rows: &[ResultRow]) -> String {
    let dash = || "-".to_string();
    let header = ["#", "model", "init", "persist", "depth", "perplex", "BLEU-4", "CIDEr", "ROUGE-L"].map(String::from);
    let mut cells: Vec<[String; 9]> = vec![header];
    for r in rows {
        cells.push([
            r.index.to_string(),
            r.model.clone(),
            r.init.clone().unwrap_or_else(dash),
            r.persist.clone().unwrap_or_else(dash),
            r.depth.map_or_else(dash, |d| d.to_string()),
            r.perplexity.map_or_else(dash, |x| format!("{x:.3}")),
            format!("{:.4}", r.bleu4),
            format!("{:.4}", r.cider),
            format!("{:.4}", r.rouge_l),
        ]);
    }
    let widths: Vec<usize> = (0..9).map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// File names inside an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root.join("models"))?;
        std::fs::create_dir_all(root.join("reports"))?;
        Ok(Self { root: root.to_path_buf() })
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.txt")
    }
    pub fn model(&self, tag: &str) -> PathBuf {
        self.root.join("models").join(format!("{tag}.vlmp"))
    }
    pub fn evaluator(&self) -> PathBuf {
        self.root.join("evaluator.vevp")
    }
    pub fn pools(&self) -> PathBuf {
        self.root.join("pools.jsonl")
    }
    pub fn reranked(&self) -> PathBuf {
        self.root.join("reranked.jsonl")
    }
    pub fn chosen(&self) -> PathBuf {
        self.root.join("ensemble_captions.jsonl")
    }
    pub fn report(&self, tag: &str) -> (PathBuf, PathBuf) {
        let d = self.root.join("reports");
        (d.join(format!("{tag}.txt")), d.join(format!("{tag}.json")))
    }
    pub fn results(&self) -> (PathBuf, PathBuf) {
        (self.root.join("results.txt"), self.root.join("results.json"))
    }
}

/// Writes chosen captions as `{"video_id", "model", "caption", "score"}` lines.
pub fn write_chosen(path: &Path, pools: &[CandidatePool], chosen: &[Candidate]) -> Result<()> {
    let mut s = String::new();
    for (p, c) in pools.iter().zip(chosen) {
        let line = serde_json::json!({"video_id": p.video_id, "model": c.model, "caption": c.caption, "score": c.score});
        s.push_str(&line.to_string());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_results(layout: &Layout, result: &ExperimentResult) -> Result<()> {
    for (tag, r) in &result.reports {
        let (t, j) = layout.report(tag);
        r.save(&t, &j)?;
    }
    let (t, j) = layout.report("ensemble");
    result.ensemble.save(&t, &j)?;
    let (txt, json) = layout.results();
    std::fs::write(txt, results_table(&result.rows))?;
    let j = serde_json::to_string_pretty(&result.rows).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(json, j + "\n")?;
    Ok(())
}

/// The whole pipeline: train every roster model and the evaluator, generate
/// pools on the eval split, rerank and score. With `out`, every artefact is
/// written there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate().stage("config")?;
    let layout = out.map(Layout::new).transpose().stage("setup")?;
    let p = prepare(cfg).stage("prepare")?;
    if let Some(l) = &layout {
        p.vocab.save(&l.vocab()).stage("vocab")?;
    }
    let mut params = Vec::new();
    let mut ppl = Vec::new();
    for spec in &cfg.models {
        let (m, _) = train_generator(cfg, &p, spec).stage("train-lm")?;
        ppl.push(Some(split_perplexity(&p, cfg.eval_split, spec, &m).stage("train-lm")?));
        if let Some(l) = &layout {
            m.save(&l.model(&spec.tag)).stage("train-lm")?;
        }
        params.push(m);
    }
    let (evaluator, _) = train_evaluator_stage(cfg, &p).stage("train-eval")?;
    if let Some(l) = &layout {
        evaluator.save(&l.evaluator()).stage("train-eval")?;
    }
    let models = bind_models(cfg, params);
    let mut pools = generate_stage(cfg, &p, &models).stage("generate")?;
    if let Some(l) = &layout {
        crate::ensemble::write_pools(&l.pools(), &pools).stage("generate")?;
    }
    let chosen = rerank_stage(cfg, &p, &mut pools, &evaluator).stage("rerank")?;
    if let Some(l) = &layout {
        crate::ensemble::write_pools(&l.reranked(), &pools).stage("rerank")?;
        write_chosen(&l.chosen(), &pools, &chosen).stage("rerank")?;
    }
    let mut result = score_stage(cfg, &p, &pools, &chosen, &ppl).stage("score")?;
    result.evaluator_accuracy = Some(evaluator_accuracy(cfg, &p, &evaluator, cfg.eval_split).stage("score")?);
    if let Some(l) = &layout {
        write_results(l, &result).stage("score")?;
    }
    Ok(result)
}

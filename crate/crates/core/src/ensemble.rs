//! Candidate pools from several generators and evaluator reranking.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::LMParams;
use crate::error::{Error, Result};
use crate::evaluator::{encode_sentence, project_video, EvaluatorParams};
use crate::features::FeatureVector;
use crate::generation::{beam_search, GenerationConfig};
use crate::numerics::cosine;
use crate::text::{encode_caption, Vocabulary};

/// Source of per-video features by name.
pub trait FeatureLookup: Sync {
    /// Missing features are an input error.
    fn lookup(&self, video_id: &str, name: &str) -> Result<FeatureVector>;
}

/// A trained generator and the features it reads.
#[derive(Clone, Debug)]
pub struct ModelBinding {
    pub tag: String,
    pub params: LMParams,
    pub init_feature: String,
    pub persist_feature: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub caption: String,
    pub model: String,
    pub log_prob: f64,
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePool {
    pub video_id: String,
    pub entries: Vec<Candidate>,
}

/// One beam-search caption per model, in roster order. Duplicates are kept.
pub fn generate_pool(
    models: &[ModelBinding],
    video_id: &str,
    features: &dyn FeatureLookup,
    vocab: &Vocabulary,
    cfg: &GenerationConfig,
) -> Result<CandidatePool> {
    let mut entries = Vec::with_capacity(models.len());
    for m in models {
        let get = |name: &str| {
            features.lookup(video_id, name).map_err(|e| match e {
                Error::Input(msg) => Error::Input(format!("model `{}` feature `{name}`: {msg}", m.tag)),
                other => other,
            })
        };
        let (init, persist) = (get(&m.init_feature)?, get(&m.persist_feature)?);
        let g = beam_search(&m.params, &init, &persist, cfg)?;
        entries.push(Candidate { caption: g.caption(vocab)?, model: m.tag.clone(), log_prob: g.log_prob, score: None });
    }
    Ok(CandidatePool { video_id: video_id.to_string(), entries })
}

/// [`generate_pool`] for many videos in parallel; output follows `video_ids`.
pub fn generate_pools(
    models: &[ModelBinding],
    video_ids: &[String],
    features: &dyn FeatureLookup,
    vocab: &Vocabulary,
    cfg: &GenerationConfig,
) -> Result<Vec<CandidatePool>> {
    video_ids.par_iter().map(|id| generate_pool(models, id, features, vocab, cfg)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    /// Weight of the generator log-prob added to the evaluator score.
    pub blend: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self { blend: 0.0 }
    }
}

fn combined(c: &Candidate, blend: f64) -> f64 {
    c.score.unwrap_or(f64::NEG_INFINITY) + if blend == 0.0 { 0.0 } else { blend * c.log_prob }
}

/// Index of the best scored entry: highest score, then higher log-prob, then
/// lexicographically smaller caption.
pub fn choose(pool: &CandidatePool, cfg: &RerankConfig) -> Result<usize> {
    if pool.entries.is_empty() {
        return Err(Error::EmptyInput(format!("empty candidate pool for video `{}`", pool.video_id)));
    }
    if pool.entries.iter().any(|c| c.score.is_none()) {
        return Err(Error::Input(format!("unscored candidate in pool for `{}`", pool.video_id)));
    }
    let better = |a: &Candidate, b: &Candidate| -> Ordering {
        combined(a, cfg.blend)
            .total_cmp(&combined(b, cfg.blend))
            .then(a.log_prob.total_cmp(&b.log_prob))
            .then_with(|| b.caption.cmp(&a.caption))
    };
    let mut best = 0;
    for i in 1..pool.entries.len() {
        if better(&pool.entries[i], &pool.entries[best]) == Ordering::Greater {
            best = i;
        }
    }
    Ok(best)
}

/// Fills every entry's evaluator score against `video` and returns the
/// chosen entry.
pub fn rerank(
    pool: &mut CandidatePool,
    video: &FeatureVector,
    evaluator: &EvaluatorParams,
    vocab: &Vocabulary,
    cfg: &RerankConfig,
) -> Result<Candidate> {
    if pool.entries.is_empty() {
        return Err(Error::EmptyInput(format!("empty candidate pool for video `{}`", pool.video_id)));
    }
    let v = project_video(video, evaluator)?;
    for c in &mut pool.entries {
        let s = encode_sentence(&encode_caption(&c.caption, vocab), evaluator)?;
        c.score = Some(cosine(s.data(), v.data()));
    }
    Ok(pool.entries[choose(pool, cfg)?].clone())
}

#[derive(Serialize, Deserialize)]
struct PoolRecord {
    video_id: String,
    model: String,
    caption: String,
    log_prob: f64,
    score: Option<f64>,
}

/// One JSON object per candidate per line.
pub fn write_pools(path: &Path, pools: &[CandidatePool]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pools {
        for c in &p.entries {
            let rec = PoolRecord {
                video_id: p.video_id.clone(),
                model: c.model.clone(),
                caption: c.caption.clone(),
                log_prob: c.log_prob,
                score: c.score,
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_pools`]; records of one video must be contiguous.
pub fn read_pools(path: &Path) -> Result<Vec<CandidatePool>> {
    let mut pools: Vec<CandidatePool> = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoolRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { context: format!("{}:{}", path.display(), i + 1), message: e.to_string() })?;
        let c = Candidate { caption: rec.caption, model: rec.model, log_prob: rec.log_prob, score: rec.score };
        match pools.last_mut() {
            Some(p) if p.video_id == rec.video_id => p.entries.push(c),
            _ => {
                if pools.iter().any(|p| p.video_id == rec.video_id) {
                    return Err(Error::Integrity(format!("pool records for `{}` are not contiguous", rec.video_id)));
                }
                pools.push(CandidatePool { video_id: rec.video_id, entries: vec![c] });
            }
        }
    }
    Ok(pools)
}

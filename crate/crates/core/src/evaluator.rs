//! Caption/video evaluator: a convolutional sentence encoder and an affine
//! video projection into a joint space, scored by cosine similarity and
//! trained with a margin ranking loss against sampled negative captions.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::numerics::{cosine, dot, matvec_acc, matvec_t_acc, norm, outer_acc, OptState, ParamSet, RmsProp, Rng, Tensor};
use crate::text::{TokenSeq, PAD};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VEVP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    /// Joint embedding size `e`.
    pub joint_dim: usize,
    pub margin: f64,
    /// Negatives per video (capped by availability).
    pub n_neg: usize,
    pub video_feature: String,
    pub video_dim: usize,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embed_dim: 64,
            filter_widths: vec![2, 3, 4],
            filters_per_width: 64,
            joint_dim: 64,
            margin: 0.2,
            n_neg: 50,
            video_feature: String::new(),
            video_dim: 0,
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("filters_per_width", self.filters_per_width),
            ("joint_dim", self.joint_dim),
            ("video_dim", self.video_dim),
            ("n_neg", self.n_neg),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("evaluator {name} must be > 0")));
            }
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(Error::Config("filter widths must be a non-empty list of positive sizes".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin {} must be > 0", self.margin)));
        }
        Ok(())
    }

    fn widest(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    fn pooled_dim(&self) -> usize {
        self.filter_widths.len() * self.filters_per_width
    }

    fn to_header(&self) -> BTreeMap<String, String> {
        let widths: Vec<String> = self.filter_widths.iter().map(|w| w.to_string()).collect();
        [
            ("vocab_size", self.vocab_size.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("filter_widths", widths.join(",")),
            ("filters_per_width", self.filters_per_width.to_string()),
            ("joint_dim", self.joint_dim.to_string()),
            ("margin", format!("{:?}", self.margin)),
            ("n_neg", self.n_neg.to_string()),
            ("video_feature", self.video_feature.clone()),
            ("video_dim", self.video_dim.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let widths: String = ck.get("filter_widths")?;
        let filter_widths = widths
            .split(',')
            .map(|w| w.parse().map_err(|_| Error::Format(format!("bad filter width `{w}`"))))
            .collect::<Result<Vec<usize>>>()?;
        Ok(Self {
            vocab_size: ck.get("vocab_size")?,
            embed_dim: ck.get("embed_dim")?,
            filter_widths,
            filters_per_width: ck.get("filters_per_width")?,
            joint_dim: ck.get("joint_dim")?,
            margin: ck.get("margin")?,
            n_neg: ck.get("n_neg")?,
            video_feature: ck.get("video_feature")?,
            video_dim: ck.get("video_dim")?,
        })
    }
}

/// One convolution bank: `filters × (width·embed_dim)` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBank {
    pub width: usize,
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatorParams {
    pub config: EvaluatorConfig,
    /// vocab × embed; the PAD row stays zero.
    pub embed: Tensor,
    pub convs: Vec<ConvBank>,
    /// joint × pooled
    pub sent_w: Tensor,
    pub sent_b: Tensor,
    /// joint × video_dim
    pub video_w: Tensor,
    pub video_b: Tensor,
}

impl EvaluatorParams {
    pub fn init(config: EvaluatorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let s = 0.08;
        let (v, e, j) = (config.vocab_size, config.embed_dim, config.joint_dim);
        let mut embed = Tensor::uniform(&[v, e], -s, s, rng);
        embed.row_mut(PAD).fill(0.0);
        let convs = config
            .filter_widths
            .iter()
            .map(|&width| ConvBank {
                width,
                w: Tensor::uniform(&[config.filters_per_width, width * e], -s, s, rng),
                b: Tensor::zeros(&[config.filters_per_width]),
            })
            .collect();
        let sent_w = Tensor::uniform(&[j, config.pooled_dim()], -s, s, rng);
        let video_w = Tensor::uniform(&[j, config.video_dim], -s, s, rng);
        Ok(Self { sent_b: Tensor::zeros(&[j]), video_b: Tensor::zeros(&[j]), config, embed, convs, sent_w, video_w })
    }

    pub fn zeros(config: EvaluatorConfig) -> Result<Self> {
        let mut p = Self::init(config, &mut crate::numerics::rng_from_seed(0))?;
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::from_params(self.config.to_header(), self).save(path, CHECKPOINT_MAGIC)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path, CHECKPOINT_MAGIC)?;
        let mut p = Self::zeros(EvaluatorConfig::from_checkpoint(&ck)?)?;
        ck.fill_params(&mut p)?;
        Ok(p)
    }
}

impl ParamSet for EvaluatorParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embed];
        for c in &self.convs {
            v.extend([&c.w, &c.b]);
        }
        v.extend([&self.sent_w, &self.sent_b, &self.video_w, &self.video_b]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embed];
        for c in &mut self.convs {
            v.extend([&mut c.w, &mut c.b]);
        }
        v.extend([&mut self.sent_w, &mut self.sent_b, &mut self.video_w, &mut self.video_b]);
        v
    }

    fn names(&self) -> Vec<String> {
        let mut v = vec!["embed".to_string()];
        for c in &self.convs {
            v.push(format!("conv{}.w", c.width));
            v.push(format!("conv{}.b", c.width));
        }
        v.extend(["sent_w", "sent_b", "video_w", "video_b"].map(String::from));
        v
    }
}

struct SentCache {
    /// ids after stripping trailing PAD and zero-padding to the widest filter
    ids: Vec<usize>,
    /// per bank, per filter: (argmax position, tanh activation)
    winners: Vec<Vec<(usize, f64)>>,
    pooled: Vec<f64>,
    out: Vec<f64>,
}

fn strip_pad(ids: &[usize]) -> &[usize] {
    let end = ids.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
    &ids[..end]
}

fn sentence_forward(params: &EvaluatorParams, ids: &[usize]) -> Result<SentCache> {
    let c = &params.config;
    let ids = strip_pad(ids);
    if ids.is_empty() {
        return Err(Error::EmptyInput("cannot encode an empty caption".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&t| t >= c.vocab_size) {
        return Err(Error::Range(format!("token id {bad} >= evaluator vocabulary size {}", c.vocab_size)));
    }
    let mut ids = ids.to_vec();
    ids.resize(ids.len().max(c.widest()), PAD);
    let e = c.embed_dim;
    let mut winners = Vec::with_capacity(params.convs.len());
    let mut pooled = Vec::with_capacity(c.pooled_dim());
    let mut window = Vec::new();
    for bank in &params.convs {
        let positions = ids.len() + 1 - bank.width;
        let mut best = vec![(0usize, f64::NEG_INFINITY); c.filters_per_width];
        for p in 0..positions {
            window.clear();
            for &t in &ids[p..p + bank.width] {
                window.extend_from_slice(params.embed.row(t));
            }
            debug_assert_eq!(window.len(), bank.width * e);
            for (f, slot) in best.iter_mut().enumerate() {
                let a = (dot(bank.w.row(f), &window) + bank.b.data()[f]).tanh();
                if a > slot.1 {
                    *slot = (p, a);
                }
            }
        }
        pooled.extend(best.iter().map(|b| b.1));
        winners.push(best);
    }
    let mut out = params.sent_b.data().to_vec();
    matvec_acc(params.sent_w.data(), pooled.len(), &pooled, &mut out);
    Ok(SentCache { ids, winners, pooled, out })
}

fn sentence_backward(params: &EvaluatorParams, cache: &SentCache, d_out: &[f64], grads: &mut EvaluatorParams) {
    let e = params.config.embed_dim;
    outer_acc(grads.sent_w.data_mut(), d_out, &cache.pooled);
    for (g, d) in grads.sent_b.data_mut().iter_mut().zip(d_out) {
        *g += d;
    }
    let mut d_pooled = vec![0.0; cache.pooled.len()];
    matvec_t_acc(params.sent_w.data(), cache.pooled.len(), d_out, &mut d_pooled);
    let mut offset = 0;
    for (bi, bank) in params.convs.iter().enumerate() {
        for (f, &(p, a)) in cache.winners[bi].iter().enumerate() {
            let dz = d_pooled[offset + f] * (1.0 - a * a);
            if dz == 0.0 {
                continue;
            }
            grads.convs[bi].b.data_mut()[f] += dz;
            let wrow = bank.w.row(f);
            for (k, &t) in cache.ids[p..p + bank.width].iter().enumerate() {
                let span = k * e..(k + 1) * e;
                let gw = &mut grads.convs[bi].w.row_mut(f)[span.clone()];
                for (g, x) in gw.iter_mut().zip(params.embed.row(t)) {
                    *g += dz * x;
                }
                if t != PAD {
                    for (g, w) in grads.embed.row_mut(t).iter_mut().zip(&wrow[span]) {
                        *g += dz * w;
                    }
                }
            }
        }
        offset += bank.b.len();
    }
}

fn check_video(params: &EvaluatorParams, f: &[f64]) -> Result<()> {
    if f.len() != params.config.video_dim {
        return Err(Error::dim(format!(
            "video feature has dim {}, evaluator expects {}",
            f.len(),
            params.config.video_dim
        )));
    }
    Ok(())
}

fn video_forward(params: &EvaluatorParams, f: &[f64]) -> Vec<f64> {
    let mut v = params.video_b.data().to_vec();
    matvec_acc(params.video_w.data(), f.len(), f, &mut v);
    v
}

/// Sentence embedding of `ids` in the joint space.
pub fn encode_sentence(ids: &TokenSeq, params: &EvaluatorParams) -> Result<Tensor> {
    encode_ids(ids.ids(), params)
}

/// As [`encode_sentence`] on raw ids; trailing PAD is ignored.
pub fn encode_ids(ids: &[usize], params: &EvaluatorParams) -> Result<Tensor> {
    Ok(Tensor::vector(sentence_forward(params, ids)?.out))
}

pub fn project_video(f: &FeatureVector, params: &EvaluatorParams) -> Result<Tensor> {
    project_slice(f.as_slice(), params)
}

pub fn project_slice(f: &[f64], params: &EvaluatorParams) -> Result<Tensor> {
    check_video(params, f)?;
    Ok(Tensor::vector(video_forward(params, f)))
}

/// Cosine between caption and video embeddings; 0 if either is zero.
pub fn similarity(caption: &TokenSeq, video: &FeatureVector, params: &EvaluatorParams) -> Result<f64> {
    let s = encode_sentence(caption, params)?;
    let v = project_video(video, params)?;
    Ok(cosine(s.data(), v.data()))
}

/// Mean over negatives of `max(0, m − pos + neg)`.
pub fn ranking_loss(pos: f64, negs: &[f64], m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::Parameter(format!("margin {m} must be > 0")));
    }
    if negs.is_empty() {
        return Err(Error::EmptyInput("ranking loss needs at least one negative".into()));
    }
    Ok(negs.iter().map(|n| (m - pos + n).max(0.0)).sum::<f64>() / negs.len() as f64)
}

/// A video with its evaluator feature and reference captions.
#[derive(Clone, Copy, Debug)]
pub struct EvalVideo<'a> {
    pub id: &'a str,
    pub feature: &'a [f64],
    pub captions: &'a [TokenSeq],
}

/// Uniform sample without replacement of `min(n_neg, available)` captions
/// belonging to videos other than `video_id`.
pub fn sample_negatives<'a>(
    video_id: &str,
    videos: &[EvalVideo<'a>],
    n_neg: usize,
    rng: &mut Rng,
) -> Result<Vec<&'a TokenSeq>> {
    if videos.len() < 2 {
        return Err(Error::Input("negative sampling needs at least two videos".into()));
    }
    if !videos.iter().any(|v| v.id == video_id) {
        return Err(Error::Input(format!("unknown video `{video_id}`")));
    }
    let pool: Vec<&'a TokenSeq> =
        videos.iter().filter(|v| v.id != video_id).flat_map(|v| v.captions.iter()).collect();
    let k = n_neg.min(pool.len());
    Ok(sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect())
}

/// d cos(u, v) / du; zero when either vector is zero.
fn cosine_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return vec![0.0; u.len()];
    }
    let c = dot(u, v) / (nu * nv);
    u.iter().zip(v).map(|(a, b)| b / (nu * nv) - c * a / (nu * nu)).collect()
}

/// One ranking example: a video, its positive caption and sampled negatives.
#[derive(Clone, Debug)]
pub struct Triple<'a> {
    pub feature: &'a [f64],
    pub positive: &'a TokenSeq,
    pub negatives: Vec<&'a TokenSeq>,
}

fn triple_loss_grad(params: &EvaluatorParams, t: &Triple, grads: Option<&mut EvaluatorParams>) -> Result<f64> {
    check_video(params, t.feature)?;
    let m = params.config.margin;
    let v = video_forward(params, t.feature);
    let pos = sentence_forward(params, t.positive.ids())?;
    let negs = t
        .negatives
        .iter()
        .map(|n| sentence_forward(params, n.ids()))
        .collect::<Result<Vec<_>>>()?;
    let pos_s = cosine(&pos.out, &v);
    let neg_s: Vec<f64> = negs.iter().map(|n| cosine(&n.out, &v)).collect();
    let loss = ranking_loss(pos_s, &neg_s, m)?;
    let Some(grads) = grads else { return Ok(loss) };

    let k = negs.len() as f64;
    let mut dv = vec![0.0; v.len()];
    let mut d_pos = 0.0;
    for (n, &s) in negs.iter().zip(&neg_s) {
        if m - pos_s + s > 0.0 {
            d_pos -= 1.0 / k;
            let du = cosine_grad(&n.out, &v);
            let d_out: Vec<f64> = du.iter().map(|x| x / k).collect();
            sentence_backward(params, n, &d_out, grads);
            for (a, b) in dv.iter_mut().zip(cosine_grad(&v, &n.out)) {
                *a += b / k;
            }
        }
    }
    if d_pos != 0.0 {
        let d_out: Vec<f64> = cosine_grad(&pos.out, &v).iter().map(|x| x * d_pos).collect();
        sentence_backward(params, &pos, &d_out, grads);
        for (a, b) in dv.iter_mut().zip(cosine_grad(&v, &pos.out)) {
            *a += b * d_pos;
        }
    }
    outer_acc(grads.video_w.data_mut(), &dv, t.feature);
    for (g, d) in grads.video_b.data_mut().iter_mut().zip(&dv) {
        *g += d;
    }
    Ok(loss)
}

/// Mean ranking loss over `triples`.
pub fn triples_loss(params: &EvaluatorParams, triples: &[Triple]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::EmptyInput("no ranking triples".into()));
    }
    let losses = triples.par_iter().map(|t| triple_loss_grad(params, t, None)).collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / triples.len() as f64)
}

/// Mean ranking loss over `triples` and its gradient. Per-triple gradients
/// are computed in parallel and summed in order.
pub fn triples_loss_grad(params: &EvaluatorParams, triples: &[Triple]) -> Result<(f64, EvaluatorParams)> {
    if triples.is_empty() {
        return Err(Error::EmptyInput("no ranking triples".into()));
    }
    let parts = triples
        .par_iter()
        .map(|t| {
            let mut g = params.zeros_like();
            triple_loss_grad(params, t, Some(&mut g)).map(|l| (l, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grads.accumulate(g);
    }
    let n = triples.len() as f64;
    grads.scale_all(1.0 / n);
    Ok((loss / n, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Draw fresh negatives every epoch instead of once up front.
    pub resample_negatives: bool,
    pub optimizer: RmsProp,
}

impl Default for EvalTrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, resample_negatives: true, optimizer: RmsProp::default() }
    }
}

/// Trains from random initialisation. Each epoch visits every video once in
/// shuffled order with one randomly chosen reference as the positive.
/// Returns the parameters and the mean loss of each epoch.
pub fn train_evaluator(
    videos: &[EvalVideo],
    config: &EvaluatorConfig,
    train: &EvalTrainConfig,
    rng: &mut Rng,
) -> Result<(EvaluatorParams, Vec<f64>)> {
    let mut params = EvaluatorParams::init(config.clone(), rng)?;
    let losses = continue_training(&mut params, videos, train, rng)?;
    Ok((params, losses))
}

/// Runs `train.epochs` epochs on existing parameters.
pub fn continue_training(
    params: &mut EvaluatorParams,
    videos: &[EvalVideo],
    train: &EvalTrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if train.batch_size == 0 {
        return Err(Error::Config("evaluator batch size must be > 0".into()));
    }
    if videos.iter().any(|v| v.captions.is_empty()) {
        return Err(Error::Input("every evaluator training video needs a caption".into()));
    }
    let mut opt = OptState::new(&*params, train.optimizer)?;
    let n_neg = params.config.n_neg;
    let draw_all = |rng: &mut Rng| -> Result<Vec<Vec<&TokenSeq>>> {
        videos.iter().map(|v| sample_negatives(v.id, videos, n_neg, rng)).collect()
    };
    let mut negatives = if train.epochs > 0 && !train.resample_negatives { Some(draw_all(rng)?) } else { None };
    let mut losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        let negs = match &negatives {
            Some(n) if !train.resample_negatives => n.clone(),
            _ => draw_all(rng)?,
        };
        let mut order: Vec<usize> = (0..videos.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(train.batch_size).enumerate() {
            let triples: Vec<Triple> = chunk
                .iter()
                .map(|&i| Triple {
                    feature: videos[i].feature,
                    positive: &videos[i].captions[rng.random_range(0..videos[i].captions.len())],
                    negatives: negs[i].clone(),
                })
                .collect();
            let (loss, grads) = triples_loss_grad(params, &triples)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Numeric(format!("non-finite evaluator loss at epoch {epoch} batch {bi}")));
            }
            opt.step(params, &grads)?;
            params.embed.row_mut(PAD).fill(0.0);
            total += loss * triples.len() as f64;
        }
        losses.push(total / videos.len() as f64);
        if negatives.is_none() && !train.resample_negatives {
            negatives = Some(negs);
        }
    }
    Ok(losses)
}

/// Fraction of (positive, negative) comparisons where the matched caption
/// scores strictly higher. Every reference of each video is used as a
/// positive against `n_neg` negatives drawn from the other videos.
pub fn ranking_accuracy(params: &EvaluatorParams, videos: &[EvalVideo], n_neg: usize, rng: &mut Rng) -> Result<f64> {
    let mut jobs = Vec::new();
    for v in videos {
        for cap in v.captions {
            jobs.push((v.feature, cap, sample_negatives(v.id, videos, n_neg, rng)?));
        }
    }
    let counts = jobs
        .par_iter()
        .map(|(f, pos, negs)| {
            let vid = project_slice(f, params)?;
            let p = cosine(encode_sentence(pos, params)?.data(), vid.data());
            let mut wins = 0usize;
            for n in negs {
                if p > cosine(encode_sentence(n, params)?.data(), vid.data()) {
                    wins += 1;
                }
            }
            Ok((wins, negs.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (wins, total) = counts.iter().fold((0, 0), |(a, b), (w, n)| (a + w, b + n));
    if total == 0 {
        return Err(Error::EmptyInput("no comparisons".into()));
    }
    Ok(wins as f64 / total as f64)
}

//! Corpus caption metrics: BLEU-4, ROUGE-L and CIDEr-D.
//!
//! Inputs are raw strings; they are tokenized with [`crate::text::tokenize`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;

type Gram = Vec<String>;

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<Gram, usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

fn check_aligned<H, R>(hyps: &[H], refs: &[Vec<R>]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::Input(format!("{} hypotheses but {} reference lists", hyps.len(), refs.len())));
    }
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(Error::Input(format!("video {i} has no references")));
    }
    Ok(())
}

fn tok_all<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) {
    let h = hyps.iter().map(|s| tokenize(s.as_ref())).collect();
    let r = refs.iter().map(|rs| rs.iter().map(|s| tokenize(s.as_ref())).collect()).collect();
    (h, r)
}

/// Corpus BLEU-4, unsmoothed.
pub fn bleu4<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<f64> {
    bleu4_with(hyps, refs, false)
}

/// Corpus BLEU-4 with uniform weights, clipped counts and a brevity penalty
/// from the closest reference length (ties go to the shorter one). With
/// `smooth`, orders 2–4 use add-one precision.
pub fn bleu4_with<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>], smooth: bool) -> Result<f64> {
    check_aligned(hyps, refs)?;
    let (hyps, refs) = tok_all(hyps, refs);
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, rs) in hyps.iter().zip(&refs) {
        hyp_len += h.len();
        ref_len += rs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(h.len()), l))
            .unwrap_or(0);
        for n in 1..=4 {
            let hc = ngrams(h, n);
            let mut max_ref: BTreeMap<&Gram, usize> = BTreeMap::new();
            let ref_counts: Vec<_> = rs.iter().map(|r| ngrams(r, n)).collect();
            for rc in &ref_counts {
                for (g, &c) in rc {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, &c) in &hc {
                matched[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let (m, t) = if smooth && n > 0 { (matched[n] + 1, total[n] + 1) } else { (matched[n], total[n]) };
        if m == 0 || t == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok(bp * (log_sum / 4.0).exp())
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(1+β²)PR / (R + β²P)`, 0 when P or R is 0.
pub fn f_beta(p: f64, r: f64, beta: f64) -> f64 {
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

fn rouge_tokens(h: &[String], rs: &[Vec<String>]) -> f64 {
    rs.iter()
        .map(|r| {
            if h.is_empty() || r.is_empty() {
                return 0.0;
            }
            let l = lcs(h, r) as f64;
            f_beta(l / h.len() as f64, l / r.len() as f64, ROUGE_BETA)
        })
        .fold(0.0, f64::max)
}

/// ROUGE-L of one hypothesis: the best LCS F-measure over its references.
pub fn rouge_l<S: AsRef<str>>(hyp: &str, refs: &[S]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Input("ROUGE-L needs at least one reference".into()));
    }
    let r: Vec<Vec<String>> = refs.iter().map(|s| tokenize(s.as_ref())).collect();
    Ok(rouge_tokens(&tokenize(hyp), &r))
}

/// Per-video ROUGE-L and their mean.
pub fn rouge_l_corpus<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<(f64, Vec<f64>)> {
    check_aligned(hyps, refs)?;
    let (hyps, refs) = tok_all(hyps, refs);
    let per: Vec<f64> = hyps.iter().zip(&refs).map(|(h, r)| rouge_tokens(h, r)).collect();
    let mean = if per.is_empty() { 0.0 } else { per.iter().sum::<f64>() / per.len() as f64 };
    Ok((mean, per))
}

struct TfIdf {
    vecs: [BTreeMap<Gram, f64>; 4],
    norms: [f64; 4],
    len: usize,
}

fn tfidf(tokens: &[String], df: &BTreeMap<Gram, usize>, log_n: f64) -> TfIdf {
    let mut vecs: [BTreeMap<Gram, f64>; 4] = Default::default();
    let mut norms = [0.0; 4];
    for n in 1..=4 {
        for (g, c) in ngrams(tokens, n) {
            let d = (df.get(&g).copied().unwrap_or(0).max(1) as f64).ln();
            let v = c as f64 * (log_n - d);
            norms[n - 1] += v * v;
            vecs[n - 1].insert(g, v);
        }
    }
    TfIdf { vecs, norms: norms.map(f64::sqrt), len: tokens.len() }
}

fn cider_sim(h: &TfIdf, r: &TfIdf) -> [f64; 4] {
    let delta = h.len as f64 - r.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; 4];
    for n in 0..4 {
        let mut val = 0.0;
        for (g, &vh) in &h.vecs[n] {
            if let Some(&vr) = r.vecs[n].get(g) {
                val += vh.min(vr) * vr;
            }
        }
        if h.norms[n] != 0.0 && r.norms[n] != 0.0 {
            val /= h.norms[n] * r.norms[n];
        }
        out[n] = val * penalty;
    }
    out
}

/// CIDEr-D: per-video scores and their mean. Document frequencies come from
/// the references, one document per video.
pub fn cider_d<S: AsRef<str>>(hyps: &[S], refs: &[Vec<S>]) -> Result<(f64, Vec<f64>)> {
    check_aligned(hyps, refs)?;
    if refs.len() < 2 {
        return Err(Error::Input("CIDEr-D needs a corpus of at least two videos".into()));
    }
    let (hyps, refs) = tok_all(hyps, refs);
    let mut df: BTreeMap<Gram, usize> = BTreeMap::new();
    for rs in &refs {
        let mut seen: BTreeSet<Gram> = BTreeSet::new();
        for r in rs {
            for n in 1..=4 {
                seen.extend(ngrams(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_n = (refs.len() as f64).ln();
    let per: Vec<f64> = hyps
        .iter()
        .zip(&refs)
        .map(|(h, rs)| {
            let hv = tfidf(h, &df, log_n);
            let mut acc = [0.0; 4];
            for r in rs {
                let s = cider_sim(&hv, &tfidf(r, &df, log_n));
                for n in 0..4 {
                    acc[n] += s[n];
                }
            }
            acc.iter().sum::<f64>() / 4.0 / rs.len() as f64 * 10.0
        })
        .collect();
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub id: String,
    pub rouge_l: f64,
    pub cider: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub per_video: Vec<VideoScore>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub bleu_smoothing: bool,
}

/// All three metrics over aligned `ids`, hypotheses and references.
pub fn evaluate<S: AsRef<str>>(ids: &[String], hyps: &[S], refs: &[Vec<S>], cfg: &MetricConfig) -> Result<MetricReport> {
    if ids.len() != hyps.len() {
        return Err(Error::Input(format!("{} ids but {} hypotheses", ids.len(), hyps.len())));
    }
    let bleu4 = bleu4_with(hyps, refs, cfg.bleu_smoothing)?;
    let (rouge, rouge_per) = rouge_l_corpus(hyps, refs)?;
    let (cider, cider_per) = cider_d(hyps, refs)?;
    let per_video = ids
        .iter()
        .zip(rouge_per.into_iter().zip(cider_per))
        .map(|(id, (rouge_l, cider))| VideoScore { id: id.clone(), rouge_l, cider })
        .collect();
    Ok(MetricReport { bleu4, rouge_l: rouge, cider, per_video })
}

impl MetricReport {
    /// `key: value` lines; per-video lines follow the corpus scores.
    pub fn to_text(&self) -> String {
        let mut s = format!("bleu4: {:.6}\nrouge_l: {:.6}\ncider: {:.6}\n", self.bleu4, self.rouge_l, self.cider);
        for v in &self.per_video {
            let _ = writeln!(s, "video {}: rouge_l={:.6} cider={:.6}", v.id, v.rouge_l, v.cider);
        }
        s
    }

    pub fn save(&self, text_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(text_path, self.to_text())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(json_path, json + "\n")?;
        Ok(())
    }
}

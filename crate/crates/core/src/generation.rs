//! Beam-search caption generation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderRun, LMParams, StackState};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::text::{self, Vocabulary, BOS, EOS, PAD, UNK};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub beam_size: usize,
    /// Maximum number of emitted tokens, EOS included.
    pub max_len: usize,
    /// Rank completed captions by mean per-token log-prob. Off by default.
    pub length_normalization: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { beam_size: 5, max_len: 30, length_normalization: false }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size < 1 {
            return Err(Error::Parameter("beam size must be >= 1".into()));
        }
        if self.max_len < 1 {
            return Err(Error::Parameter("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// A partial or finished caption during the search.
#[derive(Clone, Debug)]
pub struct BeamHypothesis {
    /// Emitted tokens, EOS included once finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: StackState,
    pub finished: bool,
}

/// Search result.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Word ids, without BOS/EOS.
    pub words: Vec<usize>,
    /// Summed log-probability of the emitted tokens (EOS included when emitted).
    pub log_prob: f64,
    /// False when the caption was cut at `max_len` without EOS.
    pub ended_with_eos: bool,
}

impl Generated {
    pub fn caption(&self, vocab: &Vocabulary) -> Result<String> {
        text::decode(&self.words, vocab)
    }
}

/// Tokens that may be emitted: everything except PAD, BOS and UNK.
fn emittable(vocab_size: usize) -> impl Iterator<Item = usize> {
    (0..vocab_size).filter(|&t| t != PAD && t != BOS && t != UNK)
}

/// Higher score first, then lexicographically smaller token sequence.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn final_score(h: &BeamHypothesis, cfg: &GenerationConfig) -> f64 {
    if cfg.length_normalization {
        h.log_prob / h.tokens.len() as f64
    } else {
        h.log_prob
    }
}

/// Beam search over the decoder conditioned on `init` and `persist`.
///
/// Every live hypothesis is expanded over all emittable tokens; the top
/// `beam_size` expansions survive. Expansions ending in EOS or reaching
/// `max_len` move to the completed set. The search stops when nothing is
/// live or, without length normalisation, when the best completed score
/// is at least the best live score.
pub fn beam_search(
    params: &LMParams,
    init: &FeatureVector,
    persist: &FeatureVector,
    cfg: &GenerationConfig,
) -> Result<Generated> {
    beam_search_slices(params, init.as_slice(), persist.as_slice(), cfg)
}

pub fn beam_search_slices(
    params: &LMParams,
    init: &[f64],
    persist: &[f64],
    cfg: &GenerationConfig,
) -> Result<Generated> {
    cfg.validate()?;
    let run = DecoderRun::new(params, init, persist)?;
    let vocab_size = params.config.vocab_size;
    let mut live = vec![BeamHypothesis { tokens: Vec::new(), log_prob: 0.0, state: run.start(), finished: false }];
    let mut completed: Vec<BeamHypothesis> = Vec::new();

    while !live.is_empty() {
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (hi, h) in live.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let (lp, state) = run.step(&h.state, prev)?;
            for tok in emittable(vocab_size) {
                expansions.push((hi, tok, h.log_prob + lp[tok]));
            }
            next_states.push(state);
        }
        let seq = |&(hi, tok, _): &(usize, usize, f64)| {
            let mut s = live[hi].tokens.clone();
            s.push(tok);
            s
        };
        let mut keyed: Vec<(Vec<usize>, f64, usize)> =
            expansions.iter().map(|e| (seq(e), e.2, e.0)).collect();
        keyed.sort_by(|a, b| rank((a.1, &a.0), (b.1, &b.0)));
        keyed.truncate(cfg.beam_size);

        let mut next_live = Vec::new();
        for (tokens, log_prob, hi) in keyed {
            if !log_prob.is_finite() {
                return Err(Error::Numeric("non-finite score during beam search".into()));
            }
            let finished = *tokens.last().unwrap() == EOS || tokens.len() >= cfg.max_len;
            let h = BeamHypothesis { tokens, log_prob, state: next_states[hi].clone(), finished };
            if finished {
                completed.push(h);
            } else {
                next_live.push(h);
            }
        }
        live = next_live;

        if !cfg.length_normalization {
            if let (Some(best_done), Some(best_live)) = (
                completed.iter().map(|h| h.log_prob).max_by(f64::total_cmp),
                live.iter().map(|h| h.log_prob).max_by(f64::total_cmp),
            ) {
                if best_done >= best_live {
                    break;
                }
            }
        }
    }

    let best = completed
        .iter()
        .min_by(|a, b| rank((final_score(a, cfg), &a.tokens), (final_score(b, cfg), &b.tokens)))
        .ok_or_else(|| Error::Numeric("beam search produced no hypothesis".into()))?;
    let ended_with_eos = best.tokens.last() == Some(&EOS);
    let words = if ended_with_eos { best.tokens[..best.tokens.len() - 1].to_vec() } else { best.tokens.clone() };
    Ok(Generated { words, log_prob: best.log_prob, ended_with_eos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{forward_logprob, LMConfig, Mode};
    use crate::numerics::{rng_from_seed, ParamSet};
    use crate::text::TokenSeq;
    use proptest::prelude::*;

    fn tiny(seed: u64, vocab: usize, scale: f64) -> LMParams {
        let cfg = LMConfig { depth: 2, hidden: 6, embed_dim: 4, vocab_size: vocab, dropout_rate: 0.0, init_dim: 3, persist_dim: 2 };
        let mut p = LMParams::init(cfg, &mut rng_from_seed(seed)).unwrap();
        for t in p.tensors_mut() {
            t.scale(scale);
        }
        p
    }

    const INIT: [f64; 3] = [0.5, -0.2, 0.9];
    const PERSIST: [f64; 2] = [-0.4, 0.3];

    #[test]
    fn log_prob_matches_teacher_forcing() {
        for seed in 0..10 {
            let p = tiny(seed, 10, 25.0);
            let g = beam_search_slices(&p, &INIT, &PERSIST, &GenerationConfig::default()).unwrap();
            if g.ended_with_eos {
                let lp = forward_logprob(&p, &INIT, &PERSIST, &TokenSeq::from_words(&g.words), Mode::Eval).unwrap();
                assert!((lp.total_logprob - g.log_prob).abs() < 1e-9);
            }
            assert!(g.words.iter().all(|&w| w >= text::NUM_RESERVED));
        }
    }

    #[test]
    fn eos_at_step_zero_gives_empty_caption() {
        let mut p = tiny(1, 8, 1.0);
        p.out_b.data_mut()[EOS] = 1e3;
        let g = beam_search_slices(&p, &INIT, &PERSIST, &GenerationConfig::default()).unwrap();
        assert!(g.words.is_empty() && g.ended_with_eos);
        assert!(g.log_prob.abs() < 1e-12);
    }

    #[test]
    fn max_len_cuts_without_eos() {
        let mut p = tiny(2, 8, 1.0);
        p.out_b.data_mut()[EOS] = -1e3;
        let cfg = GenerationConfig { max_len: 3, ..Default::default() };
        let g = beam_search_slices(&p, &INIT, &PERSIST, &cfg).unwrap();
        assert_eq!(g.words.len(), 3);
        assert!(!g.ended_with_eos);
    }

    #[test]
    fn invalid_config() {
        let p = tiny(3, 8, 1.0);
        let cfg = GenerationConfig { beam_size: 0, ..Default::default() };
        assert!(matches!(beam_search_slices(&p, &INIT, &PERSIST, &cfg), Err(Error::Parameter(_))));
        assert!(matches!(beam_search_slices(&p, &INIT, &[0.0], &Default::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn deterministic() {
        let p = tiny(4, 12, 10.0);
        let cfg = GenerationConfig { beam_size: 3, ..Default::default() };
        let a = beam_search_slices(&p, &INIT, &PERSIST, &cfg).unwrap();
        let b = beam_search_slices(&p, &INIT, &PERSIST, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
    }

    #[test]
    fn length_normalisation_prefers_per_token_score() {
        let p = tiny(5, 9, 15.0);
        let cfg = GenerationConfig { beam_size: 4, max_len: 6, length_normalization: true };
        let g = beam_search_slices(&p, &INIT, &PERSIST, &cfg).unwrap();
        assert!(g.log_prob.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn exhaustive_width_dominates_narrow_beams(seed in 0u64..1000) {
            // 4 emittable tokens, max_len 4: b = 256 keeps every prefix
            let p = tiny(seed, 7, 20.0);
            let run = |b| beam_search_slices(&p, &INIT, &PERSIST, &GenerationConfig { beam_size: b, max_len: 4, ..Default::default() }).unwrap();
            let full = run(256);
            for b in 1..6 {
                prop_assert!(full.log_prob >= run(b).log_prob - 1e-12);
            }
        }
    }
}

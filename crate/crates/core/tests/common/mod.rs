#![allow(dead_code)]
//! Oracles shared by the integration tests. Nothing here calls the code
//! under test except the teacher-forced forward pass used to score
//! complete sequences.

pub mod metrics;


use vidcap::decoder::{forward_logprob, LMConfig, LMParams, Mode};
use vidcap::numerics::{rng_from_seed, ParamSet};
use vidcap::text::{TokenSeq, EOS, NUM_RESERVED};

pub const INIT: [f64; 3] = [0.7, -0.1, 0.4];
pub const PERSIST: [f64; 2] = [0.2, -0.6];

pub fn model(seed: u64, vocab: usize, scale: f64) -> LMParams {
    let cfg = LMConfig { depth: 2, hidden: 8, embed_dim: 5, vocab_size: vocab, dropout_rate: 0.0, init_dim: 3, persist_dim: 2 };
    let mut p = LMParams::init(cfg, &mut rng_from_seed(seed)).unwrap();
    for t in p.tensors_mut() {
        t.scale(scale);
    }
    p
}

/// Log-prob of the first `n` emitted tokens of `words` (+EOS if `eos`),
/// read from teacher-forced distributions.
pub fn score(p: &LMParams, words: &[usize], eos: bool) -> f64 {
    let out = forward_logprob(p, &INIT, &PERSIST, &TokenSeq::from_words(words), Mode::Eval).unwrap();
    let mut s: f64 = words.iter().enumerate().map(|(i, &w)| out.log_probs[i][w]).sum();
    if eos {
        s += out.log_probs[words.len()][EOS];
    }
    s
}

/// Every caption of at most `max_len` emitted tokens: EOS-terminated ones and
/// the EOS-free ones of exactly `max_len` tokens.
pub fn exhaustive(p: &LMParams, max_len: usize) -> (Vec<usize>, f64) {
    let words: Vec<usize> = (NUM_RESERVED..p.config.vocab_size).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for len in 0..=max_len {
        for seq in &frontier {
            let cands: Vec<(Vec<usize>, f64)> = if len < max_len {
                let mut with_eos = seq.clone();
                with_eos.push(EOS);
                vec![(with_eos, score(p, seq, true))]
            } else {
                vec![(seq.clone(), score(p, seq, false))]
            };
            for (s, v) in cands {
                let better = match &best {
                    None => true,
                    Some((bs, bv)) => v > *bv || (v == *bv && s < *bs),
                };
                if better {
                    best = Some((s, v));
                }
            }
        }
        frontier = frontier
            .iter()
            .flat_map(|s| words.iter().map(move |&w| [s.clone(), vec![w]].concat()))
            .collect();
    }
    let (mut s, v) = best.unwrap();
    if s.last() == Some(&EOS) {
        s.pop();
    }
    (s, v)
}

pub fn greedy(p: &LMParams, max_len: usize) -> Vec<usize> {
    let mut words = Vec::new();
    loop {
        let out = forward_logprob(p, &INIT, &PERSIST, &TokenSeq::from_words(&words), Mode::Eval).unwrap();
        let lp = &out.log_probs[words.len()];
        let mut arg = EOS;
        for t in std::iter::once(EOS).chain(NUM_RESERVED..p.config.vocab_size) {
            if lp[t] > lp[arg] || (lp[t] == lp[arg] && t < arg) {
                arg = t;
            }
        }
        if arg == EOS {
            return words;
        }
        words.push(arg);
        if words.len() == max_len {
            return words;
        }
    }
}

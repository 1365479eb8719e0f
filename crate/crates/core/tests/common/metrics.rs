//! Brute-force caption metrics, written independently of the library:
//! n-grams are space-joined strings in hash maps and ROUGE-L's LCS comes
//! from enumerating every subsequence of the hypothesis.

use std::collections::{HashMap, HashSet};

use rand::Rng as _;
use vidcap::numerics::Rng;

pub const WORDS: [&str; 6] = ["a", "man", "dog", "runs", "on", "grass"];

pub struct Corpus {
    pub hyps: Vec<String>,
    pub refs: Vec<Vec<String>>,
}

fn sentence(rng: &mut Rng, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// 2–4 videos, 1–3 references of 1–7 words, hypotheses of 0–7 words.
pub fn random_corpus(rng: &mut Rng) -> Corpus {
    let n = rng.random_range(2..=4);
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(0..=7);
        hyps.push(sentence(rng, len));
        let k = rng.random_range(1..=3);
        refs.push((0..k).map(|_| { let l = rng.random_range(1..=7); sentence(rng, l) }).collect());
    }
    Corpus { hyps, refs }
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn gram_counts(w: &[&str], n: usize) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    let mut i = 0;
    while i + n <= w.len() {
        *m.entry(w[i..i + n].join(" ")).or_default() += 1;
        i += 1;
    }
    m
}

pub fn bleu4(hyps: &[String], refs: &[Vec<String>], smooth: bool) -> f64 {
    let mut num = [0f64; 4];
    let mut den = [0f64; 4];
    let mut c = 0usize;
    let mut r = 0usize;
    for (h, rs) in hyps.iter().zip(refs) {
        let hw = words(h);
        c += hw.len();
        let mut lens: Vec<usize> = rs.iter().map(|x| words(x).len()).collect();
        lens.sort_by_key(|&l| ((l as i64 - hw.len() as i64).abs(), l));
        r += lens[0];
        for n in 1..=4 {
            for (g, cnt) in gram_counts(&hw, n) {
                let best_ref = rs.iter().map(|x| gram_counts(&words(x), n).get(&g).copied().unwrap_or(0)).max().unwrap();
                num[n - 1] += cnt.min(best_ref) as f64;
                den[n - 1] += cnt as f64;
            }
        }
    }
    if c == 0 {
        return 0.0;
    }
    let mut logp = 0.0;
    for i in 0..4 {
        let (a, b) = if smooth && i >= 1 { (num[i] + 1.0, den[i] + 1.0) } else { (num[i], den[i]) };
        if a == 0.0 {
            return 0.0;
        }
        logp += 0.25 * (a / b).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * logp.exp()
}

fn is_subsequence(sub: &[&str], of: &[&str]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|w| it.any(|x| x == w))
}

fn lcs_brute(h: &[&str], r: &[&str]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << h.len()) {
        let sub: Vec<&str> = (0..h.len()).filter(|i| mask >> i & 1 == 1).map(|i| h[i]).collect();
        if sub.len() > best && is_subsequence(&sub, r) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(hyp: &str, refs: &[String]) -> f64 {
    let h = words(hyp);
    let beta2 = 1.2f64 * 1.2;
    let mut best = 0.0f64;
    for r in refs {
        let rw = words(r);
        let l = lcs_brute(&h, &rw) as f64;
        if l == 0.0 {
            continue;
        }
        let (p, rec) = (l / h.len() as f64, l / rw.len() as f64);
        best = best.max((1.0 + beta2) * p * rec / (rec + beta2 * p));
    }
    best
}

pub fn cider_d(hyps: &[String], refs: &[Vec<String>]) -> Vec<f64> {
    let n_docs = refs.len() as f64;
    let mut df: HashMap<String, f64> = HashMap::new();
    for rs in refs {
        let mut seen = HashSet::new();
        for r in rs {
            let w = words(r);
            for n in 1..=4 {
                for g in gram_counts(&w, n).into_keys() {
                    seen.insert(format!("{n}|{g}"));
                }
            }
        }
        for k in seen {
            *df.entry(k).or_default() += 1.0;
        }
    }
    let vectorize = |s: &str| -> Vec<HashMap<String, f64>> {
        let w = words(s);
        (1..=4)
            .map(|n| {
                gram_counts(&w, n)
                    .into_iter()
                    .map(|(g, c)| {
                        let d = df.get(&format!("{n}|{g}")).copied().unwrap_or(0.0).max(1.0);
                        (g, c as f64 * (n_docs.ln() - d.ln()))
                    })
                    .collect()
            })
            .collect()
    };
    let l2 = |m: &HashMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    hyps.iter()
        .zip(refs)
        .map(|(h, rs)| {
            let hv = vectorize(h);
            let hl = words(h).len() as f64;
            let mut total = 0.0;
            for r in rs {
                let rv = vectorize(r);
                let penalty = (-(hl - words(r).len() as f64).powi(2) / 72.0).exp();
                for n in 0..4 {
                    let mut s: f64 = hv[n].iter().map(|(g, &a)| rv[n].get(g).map_or(0.0, |&b| a.min(b) * b)).sum();
                    let (nh, nr) = (l2(&hv[n]), l2(&rv[n]));
                    if nh > 0.0 && nr > 0.0 {
                        s /= nh * nr;
                    }
                    total += s * penalty / 4.0;
                }
            }
            10.0 * total / rs.len() as f64
        })
        .collect()
}

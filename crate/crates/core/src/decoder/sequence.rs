use rayon::prelude::*;
use rand::RngCore;

use super::cell::{cell_forward, check_stack, CellCache};
use super::{LMParams, StackState};
use crate::error::{Error, Result};
use crate::numerics::{
    apply_mask, dropout_mask, log_softmax, matvec_acc, matvec_t_acc, outer_acc, rng_from_seed, OptState,
    ParamSet, Rng,
};
use crate::text::TokenSeq;

/// Forward-pass mode. `Train` draws dropout masks from the given seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// One training/evaluation caption with its two feature channels.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub init: &'a [f64],
    pub persist: &'a [f64],
    pub target: &'a TokenSeq,
}

#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub label: String,
    pub items: Vec<Example<'a>>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Logits for each predicted position (targets 1..=EOS).
    pub logits: Vec<Vec<f64>>,
    pub log_probs: Vec<Vec<f64>>,
    pub total_logprob: f64,
    pub predicted: usize,
}

struct Masks {
    /// [step][layer]
    input: Vec<Vec<Vec<f64>>>,
    /// [step], applied to the top output before the softmax projection
    output: Vec<Vec<f64>>,
}

struct StepTrace {
    /// masked input of each layer
    inputs: Vec<Vec<f64>>,
    cells: Vec<CellCache>,
    /// masked top output (empty at step 0)
    top: Vec<f64>,
    probs: Vec<f64>,
}

fn check_example(params: &LMParams, ex: &Example) -> Result<()> {
    let c = &params.config;
    if ex.init.len() != c.init_dim {
        return Err(Error::dim(format!("init feature has dim {}, model expects {}", ex.init.len(), c.init_dim)));
    }
    if ex.persist.len() != c.persist_dim {
        return Err(Error::dim(format!(
            "persist feature has dim {}, model expects {}",
            ex.persist.len(),
            c.persist_dim
        )));
    }
    if let Some(&bad) = ex.target.ids().iter().find(|&&i| i >= c.vocab_size) {
        return Err(Error::Range(format!("token id {bad} >= vocabulary size {}", c.vocab_size)));
    }
    Ok(())
}

fn make_masks(params: &LMParams, steps: usize, mode: Mode) -> Result<Option<Masks>> {
    let c = &params.config;
    let seed = match mode {
        Mode::Train { seed } if c.dropout_rate > 0.0 => seed,
        _ => return Ok(None),
    };
    let mut rng = rng_from_seed(seed);
    let mut input = Vec::with_capacity(steps);
    let mut output = Vec::with_capacity(steps);
    for _ in 0..steps {
        let per_layer = (0..c.depth)
            .map(|l| {
                let width = if l == 0 { c.input_dim() } else { c.hidden };
                dropout_mask(&[width], c.dropout_rate, &mut rng).map(|m| m.into_data())
            })
            .collect::<Result<Vec<_>>>()?;
        input.push(per_layer);
        output.push(dropout_mask(&[c.hidden], c.dropout_rate, &mut rng)?.into_data());
    }
    Ok(Some(Masks { input, output }))
}

/// Layer-1 input: `word` (or the init projection when `word` is `None`)
/// followed by the persist feature.
pub(crate) fn step_input(params: &LMParams, init: &[f64], persist: &[f64], word: Option<usize>) -> Vec<f64> {
    let e = params.config.embed_dim;
    let mut x = Vec::with_capacity(e + persist.len());
    match word {
        Some(w) => x.extend_from_slice(params.embed.row(w)),
        None => {
            x.extend_from_slice(params.init_b.data());
            matvec_acc(params.init_w.data(), init.len(), init, &mut x);
        }
    }
    x.extend_from_slice(persist);
    x
}

fn run_stack(params: &LMParams, x: Vec<f64>, state: &mut StackState, masks: Option<&[Vec<f64>]>) -> (Vec<Vec<f64>>, Vec<CellCache>, Vec<f64>) {
    let depth = params.layers.len();
    let mut inputs = Vec::with_capacity(depth);
    let mut cells = Vec::with_capacity(depth);
    let mut out = x;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut input = out.clone();
        if let Some(m) = masks {
            apply_mask(&mut input, &m[l]);
        }
        let cache = cell_forward(&input, &state.h[l], &state.c[l], layer);
        out = if l == 0 { cache.h.clone() } else { cache.h.iter().zip(&out).map(|(a, b)| a + b).collect() };
        state.h[l].clone_from(&cache.h);
        state.c[l].clone_from(&cache.c);
        inputs.push(input);
        cells.push(cache);
    }
    (inputs, cells, out)
}

fn logits_of(params: &LMParams, top: &[f64]) -> Vec<f64> {
    let mut logits = params.out_b.data().to_vec();
    matvec_acc(params.out_w.data(), top.len(), top, &mut logits);
    logits
}

fn forward_traced(params: &LMParams, ex: &Example, masks: Option<&Masks>) -> Result<(Vec<StepTrace>, ForwardOutput)> {
    let ids = ex.target.unpadded();
    let c = &params.config;
    let mut state = StackState::zeros(c.depth, c.hidden);
    let mut traces = Vec::with_capacity(ids.len());
    let mut out = ForwardOutput { logits: Vec::new(), log_probs: Vec::new(), total_logprob: 0.0, predicted: 0 };
    for t in 0..ids.len() {
        let word = if t == 0 { None } else { Some(ids[t - 1]) };
        let x = step_input(params, ex.init, ex.persist, word);
        let (inputs, cells, top) = run_stack(params, x, &mut state, masks.map(|m| m.input[t].as_slice()));
        let mut trace = StepTrace { inputs, cells, top: Vec::new(), probs: Vec::new() };
        if t > 0 {
            let mut top = top;
            if let Some(m) = masks {
                apply_mask(&mut top, &m.output[t]);
            }
            let logits = logits_of(params, &top);
            let lp = log_softmax(&logits)?;
            out.total_logprob += lp[ids[t]];
            out.predicted += 1;
            trace.probs = lp.iter().map(|v| v.exp()).collect();
            trace.top = top;
            out.logits.push(logits);
            out.log_probs.push(lp);
        }
        traces.push(trace);
    }
    Ok((traces, out))
}

/// Accumulates `d(−Σ log p)/dθ` for one example into `grads`.
fn backward(params: &LMParams, ex: &Example, traces: &[StepTrace], masks: Option<&Masks>, grads: &mut LMParams) {
    let ids = ex.target.unpadded();
    let c = &params.config;
    let (h, depth, e) = (c.hidden, c.depth, c.embed_dim);
    let mut dh_next = vec![vec![0.0; h]; depth];
    let mut dc_next = vec![vec![0.0; h]; depth];

    for t in (0..ids.len()).rev() {
        let tr = &traces[t];
        let mut d_out = vec![0.0; h];
        if t > 0 {
            let mut dlogits = tr.probs.clone();
            dlogits[ids[t]] -= 1.0;
            outer_acc(grads.out_w.data_mut(), &dlogits, &tr.top);
            grads.out_b.add_assign(&crate::numerics::Tensor::vector(dlogits.clone()));
            matvec_t_acc(params.out_w.data(), h, &dlogits, &mut d_out);
            if let Some(m) = masks {
                apply_mask(&mut d_out, &m.output[t]);
            }
        }
        for l in (0..depth).rev() {
            let cc = &tr.cells[l];
            let layer = &params.layers[l];
            let g = &mut grads.layers[l];
            let dh: Vec<f64> = d_out.iter().zip(&dh_next[l]).map(|(a, b)| a + b).collect();
            let mut dz = vec![0.0; 4 * h];
            let mut dc_prev = vec![0.0; h];
            for k in 0..h {
                let dc = dh[k] * cc.o[k] * (1.0 - cc.tanh_c[k] * cc.tanh_c[k]) + dc_next[l][k];
                let (i, f, o, gg) = (cc.i[k], cc.f[k], cc.o[k], cc.g[k]);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * cc.c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dh[k] * cc.tanh_c[k] * o * (1.0 - o);
                dz[3 * h + k] = dc * i * (1.0 - gg * gg);
                dc_prev[k] = dc * f;
            }
            let input = &tr.inputs[l];
            outer_acc(g.w_x.data_mut(), &dz, input);
            outer_acc(g.w_h.data_mut(), &dz, &cc.h_prev);
            for (b, d) in g.b.data_mut().iter_mut().zip(&dz) {
                *b += d;
            }
            let mut dx = vec![0.0; input.len()];
            matvec_t_acc(layer.w_x.data(), input.len(), &dz, &mut dx);
            let mut dh_prev = vec![0.0; h];
            matvec_t_acc(layer.w_h.data(), h, &dz, &mut dh_prev);
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;
            if let Some(m) = masks {
                apply_mask(&mut dx, &m.input[t][l]);
            }
            if l > 0 {
                // residual path plus input path into the layer below
                for (a, b) in d_out.iter_mut().zip(&dx) {
                    *a += b;
                }
            } else {
                let dword = &dx[..e];
                if t == 0 {
                    outer_acc(grads.init_w.data_mut(), dword, ex.init);
                    for (b, d) in grads.init_b.data_mut().iter_mut().zip(dword) {
                        *b += d;
                    }
                } else {
                    for (a, d) in grads.embed.row_mut(ids[t - 1]).iter_mut().zip(dword) {
                        *a += d;
                    }
                }
            }
        }
    }
}

/// Teacher-forced pass over `target`: per-step logits and the summed log
/// probability of every token after BOS (EOS included, PAD excluded).
pub fn forward_logprob(
    params: &LMParams,
    init: &[f64],
    persist: &[f64],
    target: &TokenSeq,
    mode: Mode,
) -> Result<ForwardOutput> {
    check_stack(&params.layers)?;
    let ex = Example { init, persist, target };
    check_example(params, &ex)?;
    let masks = make_masks(params, target.unpadded().len(), mode)?;
    Ok(forward_traced(params, &ex, masks.as_ref())?.1)
}

fn example_seeds(n: usize, rng: Option<&mut Rng>) -> Vec<Mode> {
    match rng {
        Some(r) => (0..n).map(|_| Mode::Train { seed: r.next_u64() }).collect(),
        None => vec![Mode::Eval; n],
    }
}

/// Mean per-token cross-entropy over `items` and its gradient.
///
/// `modes[i]` selects dropout for item `i`. Per-example gradients are
/// computed in parallel and summed in item order.
pub fn batch_loss_grad(params: &LMParams, items: &[Example], modes: &[Mode]) -> Result<(f64, LMParams)> {
    check_stack(&params.layers)?;
    if items.is_empty() {
        return Err(Error::EmptyInput("batch has no items".into()));
    }
    let per_item = items
        .par_iter()
        .zip(modes.par_iter())
        .map(|(ex, &mode)| {
            check_example(params, ex)?;
            let masks = make_masks(params, ex.target.unpadded().len(), mode)?;
            let (traces, out) = forward_traced(params, ex, masks.as_ref())?;
            let mut g = params.zeros_like();
            backward(params, ex, &traces, masks.as_ref(), &mut g);
            Ok((-out.total_logprob, out.predicted, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = params.zeros_like();
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for (l, n, g) in &per_item {
        nll += l;
        tokens += n;
        grads.accumulate(g);
    }
    let scale = 1.0 / tokens as f64;
    grads.scale_all(scale);
    Ok((nll * scale, grads))
}

/// Mean per-token cross-entropy only.
pub fn batch_loss(params: &LMParams, items: &[Example], modes: &[Mode]) -> Result<f64> {
    let (nll, tokens) = items
        .par_iter()
        .zip(modes.par_iter())
        .map(|(ex, &mode)| {
            check_example(params, ex)?;
            let masks = make_masks(params, ex.target.unpadded().len(), mode)?;
            let out = forward_traced(params, ex, masks.as_ref())?.1;
            Ok((-out.total_logprob, out.predicted))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0, 0usize), |(a, b), (l, n)| (a + l, b + n));
    if tokens == 0 {
        return Err(Error::EmptyInput("batch has no items".into()));
    }
    Ok(nll / tokens as f64)
}

/// One RMSProp step on the batch; returns the pre-update mean loss.
///
/// Dropout masks are seeded per item from `rng` in item order.
pub fn train_step(batch: &Batch, params: &mut LMParams, opt: &mut OptState, rng: &mut Rng) -> Result<f64> {
    let modes = if params.config.dropout_rate > 0.0 {
        example_seeds(batch.items.len(), Some(rng))
    } else {
        example_seeds(batch.items.len(), None)
    };
    let (loss, grads) = batch_loss_grad(params, &batch.items, &modes)?;
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numeric(format!("non-finite loss or gradient in batch `{}`", batch.label)));
    }
    opt.step(params, &grads)?;
    Ok(loss)
}

/// `exp(total NLL / predicted tokens)` in eval mode.
pub fn perplexity(dataset: &[Example], params: &LMParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("perplexity of an empty dataset".into()));
    }
    let modes = vec![Mode::Eval; dataset.len()];
    Ok(batch_loss(params, dataset, &modes)?.exp())
}

/// Incremental eval-mode decoding used by beam search.
#[derive(Clone, Copy)]
pub(crate) struct DecoderRun<'a> {
    pub params: &'a LMParams,
    pub init: &'a [f64],
    pub persist: &'a [f64],
}

impl<'a> DecoderRun<'a> {
    pub fn new(params: &'a LMParams, init: &'a [f64], persist: &'a [f64]) -> Result<Self> {
        check_stack(&params.layers)?;
        let dummy = TokenSeq::from_words(&[]);
        check_example(params, &Example { init, persist, target: &dummy })?;
        Ok(Self { params, init, persist })
    }

    /// State after consuming the init projection (step 0).
    pub fn start(&self) -> StackState {
        let c = &self.params.config;
        let mut state = StackState::zeros(c.depth, c.hidden);
        let x = step_input(self.params, self.init, self.persist, None);
        run_stack(self.params, x, &mut state, None);
        state
    }

    /// Feeds `token` and returns the log-distribution of the next token.
    pub fn step(&self, state: &StackState, token: usize) -> Result<(Vec<f64>, StackState)> {
        let mut next = state.clone();
        let x = step_input(self.params, self.init, self.persist, Some(token));
        let (_, _, top) = run_stack(self.params, x, &mut next, None);
        Ok((log_softmax(&logits_of(self.params, &top))?, next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{LMConfig, LstmLayer};
    use crate::numerics::{grad_check, RmsProp, Tensor};
    use crate::text::{BOS, EOS};
    use rand::Rng as _;

    fn config(depth: usize, dropout: f64) -> LMConfig {
        LMConfig { depth, hidden: 8, embed_dim: 6, vocab_size: 12, dropout_rate: dropout, init_dim: 5, persist_dim: 4 }
    }

    fn rand_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    struct Data {
        inits: Vec<Vec<f64>>,
        persists: Vec<Vec<f64>>,
        targets: Vec<TokenSeq>,
    }

    impl Data {
        fn random(n: usize, cfg: &LMConfig, rng: &mut Rng) -> Self {
            let mut d = Data { inits: vec![], persists: vec![], targets: vec![] };
            for _ in 0..n {
                d.inits.push(rand_vec(cfg.init_dim, rng));
                d.persists.push(rand_vec(cfg.persist_dim, rng));
                let len = rng.random_range(1..5);
                let words: Vec<usize> = (0..len).map(|_| rng.random_range(4..cfg.vocab_size)).collect();
                d.targets.push(TokenSeq::from_words(&words));
            }
            d
        }

        fn examples(&self) -> Vec<Example<'_>> {
            (0..self.targets.len())
                .map(|i| Example { init: &self.inits[i], persist: &self.persists[i], target: &self.targets[i] })
                .collect()
        }
    }

    #[test]
    fn uniform_model_log_prob() {
        let mut p = LMParams::zeros(config(2, 0.0)).unwrap();
        p.out_b.fill(0.37);
        let t = TokenSeq::from_words(&[4, 5, 6]);
        let out = forward_logprob(&p, &[0.1; 5], &[0.2; 4], &t, Mode::Eval).unwrap();
        assert_eq!(out.predicted, 4);
        assert!((out.total_logprob + 4.0 * 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distributions_normalised() {
        let mut rng = rng_from_seed(0);
        let p = LMParams::init(config(3, 0.0), &mut rng).unwrap();
        let d = Data::random(3, &p.config, &mut rng);
        for ex in d.examples() {
            let out = forward_logprob(&p, ex.init, ex.persist, ex.target, Mode::Eval).unwrap();
            for lp in &out.log_probs {
                assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn persist_ablation() {
        let mut rng = rng_from_seed(1);
        let cfg = config(2, 0.0);
        let mut with = LMParams::init(cfg.clone(), &mut rng).unwrap();
        // zero the persist column block of layer 1
        let e = cfg.embed_dim;
        for r in 0..with.layers[0].w_x.rows() {
            with.layers[0].w_x.row_mut(r)[e..].fill(0.0);
        }
        let mut without = with.clone();
        without.config.persist_dim = 1;
        let mut w = LstmLayer::zeros(e + 1, cfg.hidden);
        for r in 0..w.w_x.rows() {
            w.w_x.row_mut(r)[..e].copy_from_slice(&with.layers[0].w_x.row(r)[..e]);
        }
        w.w_h = with.layers[0].w_h.clone();
        w.b = with.layers[0].b.clone();
        without.layers[0] = w;
        let t = TokenSeq::from_words(&[4, 9, 7]);
        let init = rand_vec(5, &mut rng);
        let a = forward_logprob(&with, &init, &[0.0; 4], &t, Mode::Eval).unwrap();
        let b = forward_logprob(&without, &init, &[0.0], &t, Mode::Eval).unwrap();
        assert!((a.total_logprob - b.total_logprob).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let p = LMParams::init(config(1, 0.0), &mut rng_from_seed(2)).unwrap();
        let t = TokenSeq::from_words(&[4]);
        assert!(matches!(forward_logprob(&p, &[0.0; 4], &[0.0; 4], &t, Mode::Eval), Err(Error::Dimension(_))));
        assert!(matches!(forward_logprob(&p, &[0.0; 5], &[0.0; 3], &t, Mode::Eval), Err(Error::Dimension(_))));
    }

    #[test]
    fn padding_is_masked() {
        let mut rng = rng_from_seed(3);
        let p = LMParams::init(config(2, 0.0), &mut rng).unwrap();
        let t = TokenSeq::from_words(&[5, 6]);
        let a = forward_logprob(&p, &[0.1; 5], &[0.3; 4], &t, Mode::Eval).unwrap();
        let b = forward_logprob(&p, &[0.1; 5], &[0.3; 4], &t.padded(9), Mode::Eval).unwrap();
        assert_eq!(a.total_logprob, b.total_logprob);
        assert_eq!(b.predicted, 3);
    }

    #[test]
    fn eval_mode_is_deterministic_train_mode_is_seeded() {
        let mut rng = rng_from_seed(4);
        let p = LMParams::init(config(2, 0.5), &mut rng).unwrap();
        let t = TokenSeq::from_words(&[5, 6, 7]);
        let run = |m| forward_logprob(&p, &[0.1; 5], &[0.3; 4], &t, m).unwrap().total_logprob;
        assert_eq!(run(Mode::Eval), run(Mode::Eval));
        assert_eq!(run(Mode::Train { seed: 5 }), run(Mode::Train { seed: 5 }));
        assert_ne!(run(Mode::Train { seed: 5 }), run(Mode::Eval));
    }

    fn check_grads(depth: usize, dropout: f64, seed: u64) -> f64 {
        let mut rng = rng_from_seed(seed);
        let p = LMParams::init(config(depth, dropout), &mut rng).unwrap();
        // larger weights so gradients are not vanishingly small
        let mut p = p;
        for t in p.tensors_mut() {
            for v in t.data_mut() {
                *v *= 6.0;
            }
        }
        let d = Data::random(3, &p.config, &mut rng);
        let items = d.examples();
        let modes: Vec<Mode> = (0..items.len()).map(|i| Mode::Train { seed: 100 + i as u64 }).collect();
        let (_, grads) = batch_loss_grad(&p, &items, &modes).unwrap();
        let r = grad_check(&p, &grads, |q| batch_loss(q, &items, &modes), &mut rng, usize::MAX, 1e-4).unwrap();
        r.max_rel_error
    }

    #[test]
    fn gradients_match_finite_differences() {
        for depth in 1..=3 {
            let err = check_grads(depth, 0.0, depth as u64);
            assert!(err < 1e-4, "depth {depth}: {err}");
        }
    }

    #[test]
    fn gradients_with_dropout_masks() {
        let err = check_grads(2, 0.3, 11);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut rng = rng_from_seed(5);
        let mut p = LMParams::init(config(2, 0.2), &mut rng).unwrap();
        let before = p.clone();
        let d = Data::random(4, &p.config, &mut rng);
        let batch = Batch { label: "b0".into(), items: d.examples() };
        let mut opt = OptState::new(&p, RmsProp { learning_rate: 0.0, ..RmsProp::default() }).unwrap();
        train_step(&batch, &mut p, &mut opt, &mut rng).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn memorises_two_examples() {
        let mut rng = rng_from_seed(6);
        let cfg = LMConfig { hidden: 32, embed_dim: 16, ..config(2, 0.0) };
        let mut p = LMParams::init(cfg, &mut rng).unwrap();
        let d = Data {
            inits: vec![vec![1.0, 0.0, 0.0, 0.5, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.5]],
            persists: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
            targets: vec![TokenSeq::from_words(&[4, 5, 6]), TokenSeq::from_words(&[7, 8, 9, 10])],
        };
        let batch = Batch { label: "pair".into(), items: d.examples() };
        let mut opt = OptState::new(&p, RmsProp { learning_rate: 0.01, ..RmsProp::default() }).unwrap();
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            loss = train_step(&batch, &mut p, &mut opt, &mut rng).unwrap();
            if loss < 0.1 {
                break;
            }
        }
        assert!(loss < 0.1, "{loss}");
        let single = [d.examples()[0]];
        for _ in 0..200 {
            train_step(&Batch { label: "one".into(), items: single.to_vec() }, &mut p, &mut opt, &mut rng).unwrap();
        }
        let ppl = perplexity(&single, &p).unwrap();
        assert!(ppl <= 1.05, "{ppl}");
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let p = LMParams::zeros(config(1, 0.0)).unwrap();
        let t = TokenSeq::from_words(&[4, 5]);
        let ex = [Example { init: &[0.0; 5], persist: &[0.0; 4], target: &t }];
        assert!((perplexity(&ex, &p).unwrap() - 12.0).abs() < 1e-9);
        assert!(matches!(perplexity(&[], &p), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn non_finite_loss_names_batch() {
        let mut p = LMParams::zeros(config(1, 0.0)).unwrap();
        p.out_b.data_mut()[4] = f64::NAN;
        let t = TokenSeq::from_words(&[4]);
        let batch = Batch { label: "epoch3/batch7".into(), items: vec![Example { init: &[0.0; 5], persist: &[0.0; 4], target: &t }] };
        let mut opt = OptState::new(&p, RmsProp::default()).unwrap();
        let err = train_step(&batch, &mut p, &mut opt, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(&err, Error::Numeric(m) if m.contains("epoch3/batch7")), "{err}");
    }

    #[test]
    fn decoder_run_matches_teacher_forcing() {
        let mut rng = rng_from_seed(8);
        let p = LMParams::init(config(3, 0.0), &mut rng).unwrap();
        let (init, persist) = (rand_vec(5, &mut rng), rand_vec(4, &mut rng));
        let t = TokenSeq::from_words(&[6, 4, 11]);
        let full = forward_logprob(&p, &init, &persist, &t, Mode::Eval).unwrap();
        let run = DecoderRun::new(&p, &init, &persist).unwrap();
        let mut state = run.start();
        let mut prev = BOS;
        let mut total = 0.0;
        for &w in &[6, 4, 11, EOS] {
            let (lp, next) = run.step(&state, prev).unwrap();
            total += lp[w];
            state = next;
            prev = w;
        }
        assert!((total - full.total_logprob).abs() < 1e-12);
        let _ = Tensor::zeros(&[1]);
    }
}

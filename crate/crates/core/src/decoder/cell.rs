use crate::error::{Error, Result};
use crate::numerics::{matvec_acc, sigmoid, Rng, Tensor};

/// One LSTM layer. Gate rows are stacked as `[i; f; o; g]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// 4H × input
    pub w_x: Tensor,
    /// 4H × H
    pub w_h: Tensor,
    /// 4H
    pub b: Tensor,
}

impl LstmLayer {
    pub fn init(input: usize, hidden: usize, scale: f64, forget_bias: f64, rng: &mut Rng) -> Self {
        let w_x = Tensor::uniform(&[4 * hidden, input], -scale, scale, rng);
        let w_h = Tensor::uniform(&[4 * hidden, hidden], -scale, scale, rng);
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = forget_bias);
        Self { w_x, w_h, b }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[4 * hidden, input]),
            w_h: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }

    fn check(&self, x: usize, h: usize, c: usize) -> Result<()> {
        let hid = self.hidden();
        let ok = self.w_x.rows() == 4 * hid
            && self.w_h.rows() == 4 * hid
            && self.b.len() == 4 * hid
            && x == self.input_dim()
            && h == hid
            && c == hid;
        if ok {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "lstm layer W_x{:?} W_h{:?} b{:?} given x[{x}] h[{h}] c[{c}]",
                self.w_x.shape(),
                self.w_h.shape(),
                self.b.shape()
            )))
        }
    }
}

/// Activations of one cell evaluation, kept for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct CellCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn cell_forward(x: &[f64], h: &[f64], c: &[f64], layer: &LstmLayer) -> CellCache {
    let hid = layer.hidden();
    let mut z = layer.b.data().to_vec();
    matvec_acc(layer.w_x.data(), x.len(), x, &mut z);
    matvec_acc(layer.w_h.data(), hid, h, &mut z);
    let i: Vec<f64> = z[..hid].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hid..2 * hid].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * hid..3 * hid].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * hid..].iter().map(|v| v.tanh()).collect();
    let c_new: Vec<f64> = (0..hid).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new = (0..hid).map(|k| o[k] * tanh_c[k]).collect();
    CellCache { h_prev: h.to_vec(), c_prev: c.to_vec(), i, f, o, g, tanh_c, c: c_new, h: h_new }
}

/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')` with sigmoid gates and tanh candidate.
pub fn lstm_cell_step(x: &[f64], h: &[f64], c: &[f64], layer: &LstmLayer) -> Result<(Vec<f64>, Vec<f64>)> {
    layer.check(x.len(), h.len(), c.len())?;
    let cache = cell_forward(x, h, c, layer);
    Ok((cache.h, cache.c))
}

/// Hidden and cell state of every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StackState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl StackState {
    pub fn zeros(depth: usize, hidden: usize) -> Self {
        Self { h: vec![vec![0.0; hidden]; depth], c: vec![vec![0.0; hidden]; depth] }
    }
}

pub(crate) fn check_stack(layers: &[LstmLayer]) -> Result<()> {
    let first = layers.first().ok_or_else(|| Error::Config("empty LSTM stack".into()))?;
    for (l, layer) in layers.iter().enumerate().skip(1) {
        if layer.hidden() != first.hidden() {
            return Err(Error::Config(format!(
                "residual stack needs equal hidden sizes: layer 0 has {}, layer {l} has {}",
                first.hidden(),
                layer.hidden()
            )));
        }
        if layer.input_dim() != first.hidden() {
            return Err(Error::Config(format!(
                "layer {l} input width {} differs from hidden size {}",
                layer.input_dim(),
                first.hidden()
            )));
        }
    }
    Ok(())
}

/// Runs one time step through the stack.
///
/// Layer 1 reads `x`; layer ℓ ≥ 2 reads the output of layer ℓ−1 and its
/// output is `h'_ℓ + output_{ℓ−1}`. `masks[ℓ]`, when given, multiplies the
/// input of layer ℓ. Returns the top output and the new states.
pub fn stack_step(
    x: &[f64],
    state: &StackState,
    layers: &[LstmLayer],
    masks: Option<&[Vec<f64>]>,
) -> Result<(Vec<f64>, StackState)> {
    check_stack(layers)?;
    if state.h.len() != layers.len() || state.c.len() != layers.len() {
        return Err(Error::dim(format!("{} layer states for a {}-layer stack", state.h.len(), layers.len())));
    }
    let mut next = state.clone();
    let mut out = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut input = out.clone();
        if let Some(m) = masks {
            crate::numerics::apply_mask(&mut input, &m[l]);
        }
        layer.check(input.len(), state.h[l].len(), state.c[l].len())?;
        let cache = cell_forward(&input, &state.h[l], &state.c[l], layer);
        out = if l == 0 { cache.h.clone() } else { cache.h.iter().zip(&out).map(|(a, b)| a + b).collect() };
        next.h[l] = cache.h;
        next.c[l] = cache.c;
    }
    Ok((out, next))
}

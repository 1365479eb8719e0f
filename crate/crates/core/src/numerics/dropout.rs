use rand::Rng as _;

use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1/(1−rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if rate == 0.0 {
        let mut t = Tensor::zeros(shape);
        t.fill(1.0);
        return Ok(t);
    }
    let keep = 1.0 / (1.0 - rate);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (a, m) in x.iter_mut().zip(mask) {
        *a *= m;
    }
}

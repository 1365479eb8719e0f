use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// RMSProp hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self { learning_rate: 1e-3, decay: 0.9, epsilon: 1e-8 }
    }
}

impl RmsProp {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Parameter(format!("decay {} must lie in (0, 1)", self.decay)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon {} must be > 0", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-parameter squared-gradient accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub hyper: RmsProp,
    acc: Vec<Tensor>,
}

impl OptState {
    pub fn new<P: ParamSet>(params: &P, hyper: RmsProp) -> Result<Self> {
        hyper.validate()?;
        let acc = params.tensors().iter().map(|t| t.zeros_like()).collect();
        Ok(Self { hyper, acc })
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.acc
    }

    /// Applies one RMSProp update to every tensor of `params`.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let hyper = self.hyper;
        let grads = grads.tensors();
        let params = params.tensors_mut();
        if params.len() != self.acc.len() || grads.len() != self.acc.len() {
            return Err(Error::dim("optimizer state does not mirror the parameter set"));
        }
        for ((p, g), acc) in params.into_iter().zip(grads).zip(self.acc.iter_mut()) {
            rmsprop_step(p, g, acc, &hyper)?;
        }
        Ok(())
    }
}

/// `acc ← decay·acc + (1−decay)·g²;  θ ← θ − lr·g/√(acc+eps)`.
pub fn rmsprop_step(param: &mut Tensor, grad: &Tensor, acc: &mut Tensor, hyper: &RmsProp) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != acc.shape() {
        return Err(Error::dim(format!(
            "rmsprop: param {:?}, grad {:?}, accumulator {:?}",
            param.shape(),
            grad.shape(),
            acc.shape()
        )));
    }
    grad.ensure_finite("gradient")?;
    let RmsProp { learning_rate: lr, decay, epsilon } = *hyper;
    for ((p, &g), a) in param.data_mut().iter_mut().zip(grad.data()).zip(acc.data_mut()) {
        *a = decay * *a + (1.0 - decay) * g * g;
        if g != 0.0 {
            *p -= lr * g / (*a + epsilon).sqrt();
        }
    }
    Ok(())
}

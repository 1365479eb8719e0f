//! Two-channel stacked LSTM language model with residual connections.
//!
//! The *init* feature is projected into the word-embedding space and fed as
//! the input of step 0. The *persist* feature is appended to the layer-1
//! input at every step. Layer ℓ ≥ 2 reads the output of layer ℓ−1 and adds
//! it to its own hidden state.

mod cell;
mod sequence;

pub use cell::{lstm_cell_step, stack_step, LstmLayer, StackState};
pub use sequence::{
    batch_loss, batch_loss_grad, forward_logprob, perplexity, train_step, Batch, Example, ForwardOutput, Mode,
};
pub(crate) use sequence::DecoderRun;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Rng, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VLMP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LMConfig {
    pub depth: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub init_dim: usize,
    pub persist_dim: usize,
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        for (name, v) in [
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("vocab_size", self.vocab_size),
            ("init_dim", self.init_dim),
            ("persist_dim", self.persist_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} must lie in [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Width of the layer-1 input: word embedding plus persist feature.
    pub fn input_dim(&self) -> usize {
        self.embed_dim + self.persist_dim
    }

    fn to_header(&self) -> BTreeMap<String, String> {
        [
            ("depth", self.depth.to_string()),
            ("hidden", self.hidden.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("dropout_rate", format!("{:?}", self.dropout_rate)),
            ("init_dim", self.init_dim.to_string()),
            ("persist_dim", self.persist_dim.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self {
            depth: ck.get("depth")?,
            hidden: ck.get("hidden")?,
            embed_dim: ck.get("embed_dim")?,
            vocab_size: ck.get("vocab_size")?,
            dropout_rate: ck.get("dropout_rate")?,
            init_dim: ck.get("init_dim")?,
            persist_dim: ck.get("persist_dim")?,
        })
    }
}

/// Every learnable array of one caption generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LMParams {
    pub config: LMConfig,
    /// vocab × embed
    pub embed: Tensor,
    /// embed × init_dim
    pub init_w: Tensor,
    pub init_b: Tensor,
    pub layers: Vec<LstmLayer>,
    /// vocab × hidden
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl LMParams {
    /// Uniform(−0.08, 0.08) weights, zero biases except a +1 forget gate.
    pub fn init(config: LMConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let s = 0.08;
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden);
        let embed = Tensor::uniform(&[v, e], -s, s, rng);
        let init_w = Tensor::uniform(&[e, config.init_dim], -s, s, rng);
        let layers = (0..config.depth)
            .map(|l| {
                let input = if l == 0 { config.input_dim() } else { h };
                LstmLayer::init(input, h, s, 1.0, rng)
            })
            .collect();
        let out_w = Tensor::uniform(&[v, h], -s, s, rng);
        Ok(Self { init_b: Tensor::zeros(&[e]), out_b: Tensor::zeros(&[v]), config, embed, init_w, layers, out_w })
    }

    /// All-zero parameters.
    pub fn zeros(config: LMConfig) -> Result<Self> {
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
        let config = LMConfig::from_checkpoint(&ck)?;
        let mut p = Self::zeros(config)?;
        ck.fill_params(&mut p)?;
        Ok(p)
    }
}

impl ParamSet for LMParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embed, &self.init_w, &self.init_b];
        for l in &self.layers {
            v.extend([&l.w_x, &l.w_h, &l.b]);
        }
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embed, &mut self.init_w, &mut self.init_b];
        for l in &mut self.layers {
            v.extend([&mut l.w_x, &mut l.w_h, &mut l.b]);
        }
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["embed", "init_w", "init_b"].map(String::from).to_vec();
        for i in 0..self.layers.len() {
            v.extend(["w_x", "w_h", "b"].map(|n| format!("layer{i}.{n}")));
        }
        v.extend(["out_w", "out_b"].map(String::from));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng_from_seed;

    pub(crate) fn tiny_config(depth: usize) -> LMConfig {
        LMConfig { depth, hidden: 6, embed_dim: 5, vocab_size: 9, dropout_rate: 0.0, init_dim: 3, persist_dim: 4 }
    }

    #[test]
    fn shapes_follow_config() {
        let p = LMParams::init(tiny_config(3), &mut rng_from_seed(0)).unwrap();
        assert_eq!(p.layers[0].w_x.shape(), &[24, 9]);
        assert_eq!(p.layers[1].w_x.shape(), &[24, 6]);
        assert_eq!(p.layers[2].w_h.shape(), &[24, 6]);
        assert_eq!(p.init_w.shape(), &[5, 3]);
        assert_eq!(p.out_w.shape(), &[9, 6]);
        assert_eq!(p.names().len(), p.tensors().len());
        let b = p.layers[0].b.data();
        assert!(b[..6].iter().all(|&x| x == 0.0) && b[6..12].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn invalid_config() {
        let mut c = tiny_config(0);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.depth = 1;
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = LMParams::init(LMConfig { dropout_rate: 0.3, ..tiny_config(2) }, &mut rng_from_seed(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vlmp");
        p.save(&path).unwrap();
        let q = LMParams::load(&path).unwrap();
        assert_eq!(q.config, p.config);
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let path2 = dir.path().join("m2.vlmp");
        q.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"VLMP");
    }
}

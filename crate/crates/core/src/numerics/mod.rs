//! Dense arithmetic, parameter containers, RMSProp, dropout and
//! finite-difference gradient checking.

mod dropout;
mod gradcheck;
mod optim;
mod tensor;

pub use dropout::{apply_mask, dropout_mask};
pub use gradcheck::{grad_check, GradCheck};
pub use optim::{rmsprop_step, OptState, RmsProp};
pub use tensor::{affine, cosine, dot, log_softmax, norm, sigmoid, softmax, Tensor};
pub(crate) use tensor::{matvec_acc, matvec_t_acc, outer_acc};

use rand::{RngCore, SeedableRng};

/// Deterministic generator used everywhere randomness appears.
///
/// ChaCha8 with `seed_from_u64` produces the same stream on every platform.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent child generator from `rng`.
pub fn fork(rng: &mut Rng) -> Rng {
    rng_from_seed(rng.next_u64())
}

/// A fixed, ordered collection of named learnable tensors.
///
/// The order of `tensors()` defines the layout used by the optimizer state,
/// gradient accumulation and checkpoint files.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn names(&self) -> Vec<String>;

    /// Same structure with every entry zero; used as a gradient buffer.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Element-wise `self += other`.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    fn scale_all(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }
}

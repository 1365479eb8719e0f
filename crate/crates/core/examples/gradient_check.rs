//! Finite-difference check of the decoder gradients.

use vidcap::decoder::{batch_loss, batch_loss_grad, Example, LMConfig, LMParams, Mode};
use vidcap::numerics::{grad_check, rng_from_seed};
use vidcap::text::TokenSeq;

fn main() -> vidcap::Result<()> {
    for depth in 1..=3 {
        let cfg = LMConfig { depth, hidden: 8, embed_dim: 5, vocab_size: 12, dropout_rate: 0.0, init_dim: 3, persist_dim: 4 };
        let params = LMParams::init(cfg, &mut rng_from_seed(depth as u64))?;
        let target = TokenSeq::from_words(&[4, 7, 9, 5]);
        let (init, persist) = ([0.3, -0.1, 0.8], [0.5, 0.2, -0.6, 0.1]);
        let items = [Example { init: &init, persist: &persist, target: &target }];
        let modes = [Mode::Eval];
        let (_, grads) = batch_loss_grad(&params, &items, &modes)?;
        let r = grad_check(&params, &grads, |p| batch_loss(p, &items, &modes), &mut rng_from_seed(9), 300, 1e-4)?;
        println!("depth {depth}: {} coordinates, max relative error {:.2e}", r.checked, r.max_rel_error);
    }
    Ok(())
}

//! Beam width against search quality on a small random model.

use vidcap::decoder::{LMConfig, LMParams};
use vidcap::generation::{beam_search_slices, GenerationConfig};
use vidcap::numerics::{rng_from_seed, ParamSet};

fn main() -> vidcap::Result<()> {
    let cfg = LMConfig { depth: 2, hidden: 6, embed_dim: 4, vocab_size: 9, dropout_rate: 0.0, init_dim: 3, persist_dim: 2 };
    let mut params = LMParams::init(cfg, &mut rng_from_seed(11))?;
    for t in params.tensors_mut() {
        t.scale(15.0);
    }
    let (init, persist) = ([0.5, -0.2, 0.9], [-0.4, 0.3]);
    for b in [1, 2, 5, 25, 256] {
        let g = beam_search_slices(&params, &init, &persist, &GenerationConfig { beam_size: b, max_len: 6, ..Default::default() })?;
        println!("b={b:<3} log-prob {:>9.4}  tokens {:?}  eos {}", g.log_prob, g.words, g.ended_with_eos);
    }
    Ok(())
}

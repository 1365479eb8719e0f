//! Trains one caption generator on the synthetic benchmark and captions a
//! few held-out videos with beam search.

use vidcap::generation::beam_search;
use vidcap::harness::{prepare, split_perplexity, train_generator, ExperimentConfig, Split};

fn main() -> vidcap::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.lm.epochs = 5;
    let p = prepare(&cfg)?;
    let spec = &cfg.models[0];
    let (params, losses) = train_generator(&cfg, &p, spec)?;
    println!("model {} epoch losses: {:.3?}", spec.tag, losses);
    println!("val perplexity: {:.3}", split_perplexity(&p, Split::Val, spec, &params)?);
    for v in p.videos(Split::Val).into_iter().take(5) {
        let g = beam_search(&params, &p.store.get(&v.id, &spec.init)?, &p.store.get(&v.id, &spec.persist)?, &cfg.generation)?;
        println!("{}: {:<28} (ref: {})", v.id, g.caption(&p.vocab)?, v.captions[0]);
    }
    Ok(())
}

//! Trains the evaluator on the synthetic benchmark and scores a held-out
//! video against its own caption and a few others.

use vidcap::evaluator::similarity;
use vidcap::harness::{evaluator_accuracy, prepare, train_evaluator_stage, ExperimentConfig, Split};
use vidcap::text::encode_caption;

fn main() -> vidcap::Result<()> {
    let cfg = ExperimentConfig::default();
    let p = prepare(&cfg)?;
    let (params, losses) = train_evaluator_stage(&cfg, &p)?;
    println!("epoch losses: {losses:.4?}");
    println!("val pairwise accuracy: {:.4}", evaluator_accuracy(&cfg, &p, &params, Split::Val)?);
    let val = p.videos(Split::Val);
    let f = p.store.get(&val[0].id, &cfg.evaluator.feature)?;
    for other in val.iter().take(4) {
        let s = similarity(&encode_caption(&other.captions[0], &p.vocab), &f, &params)?;
        println!("{} vs {:<30} {s:+.4}", val[0].id, other.captions[0]);
    }
    Ok(())
}

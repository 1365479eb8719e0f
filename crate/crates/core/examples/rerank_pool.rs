//! Reranking a hand-made candidate pool with a trained evaluator.

use vidcap::ensemble::{rerank, Candidate, CandidatePool, RerankConfig};
use vidcap::harness::{prepare, train_evaluator_stage, ExperimentConfig, Split};

fn main() -> vidcap::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.evaluator_training.epochs = 5;
    let p = prepare(&cfg)?;
    let (evaluator, _) = train_evaluator_stage(&cfg, &p)?;
    let val = p.videos(Split::Val);
    let (target, other) = (val[0], val[1]);
    let cand = |caption: &str, model: &str, lp| Candidate { caption: caption.into(), model: model.into(), log_prob: lp, score: None };
    let mut pool = CandidatePool {
        video_id: target.id.clone(),
        entries: vec![cand(&other.captions[0], "wrong", -1.0), cand(&target.captions[0], "right", -3.0)],
    };
    let f = p.store.get(&target.id, &cfg.evaluator.feature)?;
    let best = rerank(&mut pool, &f, &evaluator, &p.vocab, &RerankConfig::default())?;
    for c in &pool.entries {
        println!("{:<6} {:<30} score {:+.4}", c.model, c.caption, c.score.unwrap_or(f64::NAN));
    }
    println!("chosen: {} ({})", best.caption, best.model);
    Ok(())
}

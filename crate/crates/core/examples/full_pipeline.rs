//! Full pipeline on the synthetic benchmark: two specialist generators,
//! the evaluator, reranking and the results table.
//!
//!     cargo run --release --example full_pipeline -- [seed] [out_dir]

use vidcap::harness::{results_table, run_experiment, ExperimentConfig};

fn main() -> vidcap::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::default();
    if let Some(s) = args.next() {
        cfg.seed = s.parse().map_err(|_| vidcap::Error::Config(format!("bad seed `{s}`")))?;
    }
    let out = args.next().map(std::path::PathBuf::from);
    let t = std::time::Instant::now();
    let r = run_experiment(&cfg, out.as_deref())?;
    print!("{}", results_table(&r.rows));
    if let Some(a) = r.evaluator_accuracy {
        println!("evaluator pairwise accuracy: {a:.4}");
    }
    println!("elapsed: {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}

//! Generates the synthetic benchmark and round-trips its feature files.
//!
//!     cargo run --example synthetic_benchmark -- [out_dir]

use vidcap::harness::{synth_generate, FeatureStore, SynthConfig};
use vidcap::numerics::rng_from_seed;

fn main() -> vidcap::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let s = synth_generate(&SynthConfig::default(), &mut rng_from_seed(7))?;
    let [train, val, test] = s.dataset.counts();
    println!("videos: train {train}, val {val}, test {test}");
    for v in s.dataset.videos.iter().take(4) {
        println!("{} (category {}): {:?}", v.id, v.category, v.captions[0]);
    }
    let mut back = FeatureStore::new();
    for name in s.store.names() {
        let path = out.join(format!("{name}.vfea"));
        s.store.save_features(name, &path)?;
        back.load_features(&path)?;
        println!("feature {name}: dim {} -> {}", s.store.dim(name)?, path.display());
    }
    assert_eq!(back.get("video0000", "gcnn+categ")?, s.store.get("video0000", "gcnn+categ")?);
    println!("round trip ok");
    Ok(())
}

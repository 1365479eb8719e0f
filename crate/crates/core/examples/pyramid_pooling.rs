//! Region-pyramid pooling of frame activations into one video vector.

use rand::Rng as _;
use vidcap::features::{mean_pool, pyramid_pool, PoolingCombo, RegionActivations, NUM_REGIONS};
use vidcap::numerics::rng_from_seed;

fn main() -> vidcap::Result<()> {
    let mut rng = rng_from_seed(2);
    let d = 4;
    let mut rand_vec = || (0..d).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
    let frames: Vec<RegionActivations> = (0..3)
        .map(|_| RegionActivations::new(rand_vec(), (0..NUM_REGIONS).map(|_| rand_vec()).collect()))
        .collect::<vidcap::Result<_>>()?;
    for combo in [PoolingCombo::AvgAvg, PoolingCombo::MaxAvg, PoolingCombo::MaxMax] {
        let v = pyramid_pool(&frames, combo)?;
        println!("{combo:?}: dim {} {:.3?}", v.len(), v);
    }
    let scale1: Vec<&[f64]> = frames.iter().map(|f| f.scale1.as_slice()).collect();
    println!("mean of scale-1 frames: {:.3?}", mean_pool(&scale1)?);
    Ok(())
}

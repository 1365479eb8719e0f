//! k-means codebooks and bag-of-features encoding of trajectory descriptors.

use std::collections::BTreeMap;

use rand::Rng as _;
use vidcap::features::{bof_encode, kmeans, Channel, DescriptorSet};
use vidcap::numerics::{rng_from_seed, Tensor};

fn main() -> vidcap::Result<()> {
    let mut rng = rng_from_seed(5);
    let k = 8;
    let mut set = DescriptorSet::default();
    let mut books = BTreeMap::new();
    for ch in Channel::ALL {
        let descs: Vec<Vec<f64>> = (0..200).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let flat: Vec<f64> = descs.iter().flatten().copied().collect();
        let fit = kmeans(ch.name(), &Tensor::matrix(descs.len(), 6, flat)?, k, &mut rng, 25)?;
        let obj = &fit.objectives;
        println!("{ch:>10}: {} iterations, objective {:.3} -> {:.3}", obj.len(), obj[0], obj[obj.len() - 1]);
        books.insert(ch, fit.codebook);
        set.insert(ch, descs[..50].to_vec())?;
    }
    let v = bof_encode(&set, &books)?;
    println!("BoF dimension {} (= 5 x {k}); first histogram: {:.2?}", v.dim(), &v.as_slice()[..k]);
    Ok(())
}

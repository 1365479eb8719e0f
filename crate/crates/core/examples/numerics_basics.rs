//! Tensors, softmax, RMSProp and inverted dropout.

use vidcap::numerics::{affine, dropout_mask, rmsprop_step, rng_from_seed, softmax, RmsProp, Tensor};

fn main() -> vidcap::Result<()> {
    let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0])?;
    let y = affine(&Tensor::vector(vec![1.0, 1.0]), &w, &Tensor::vector(vec![0.0, 0.0]))?;
    println!("W·[1,1] = {:?}", y.data());
    println!("softmax([1,2,3]) = {:?}", softmax(&[1.0, 2.0, 3.0])?);

    let hyper = RmsProp { learning_rate: 0.01, ..RmsProp::default() };
    let mut p = Tensor::vector(vec![0.0]);
    let mut acc = Tensor::zeros(&[1]);
    let g = Tensor::vector(vec![1.0]);
    for step in 1..=3 {
        rmsprop_step(&mut p, &g, &mut acc, &hyper)?;
        println!("rmsprop step {step}: param {:.6}  acc {:.4}", p.data()[0], acc.data()[0]);
    }

    let mask = dropout_mask(&[12], 0.5, &mut rng_from_seed(1))?;
    println!("dropout mask (rate 0.5): {:?}", mask.data());
    Ok(())
}

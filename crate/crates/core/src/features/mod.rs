//! Video-level feature construction: pooling of frame/segment activations,
//! bag-of-features encoding of trajectory descriptors, category one-hot and
//! feature concatenation.

mod bof;
mod codebook;
mod pyramid;

pub use bof::{bof_encode, Channel, DescriptorSet};
pub use codebook::{kmeans, train_codebook, Codebook, KMeansFit};
pub use pyramid::{pyramid_pool, Pooling, PoolingCombo, RegionActivations, NUM_REGIONS};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Number of video categories in the challenge data.
pub const NUM_CATEGORIES: usize = 20;

/// A named video-level feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub name: String,
    pub values: Tensor,
}

impl FeatureVector {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::dim(format!("feature `{name}` has zero dimension")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature `{name}` has non-finite values")));
        }
        Ok(Self { name, values: Tensor::vector(values) })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.data()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Coordinate-wise arithmetic mean of equally sized vectors.
pub fn mean_pool<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| Error::EmptyInput("mean_pool of no vectors".into()))?;
    let d = first.as_ref().len();
    let mut acc = vec![0.0; d];
    for (i, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != d {
            return Err(Error::dim(format!("mean_pool: vector {i} has dim {}, expected {d}", v.len())));
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn category_onehot(idx: usize, n_categories: usize) -> Result<FeatureVector> {
    if idx >= n_categories {
        return Err(Error::Range(format!("category {idx} not in [0, {n_categories})")));
    }
    let mut v = vec![0.0; n_categories];
    v[idx] = 1.0;
    FeatureVector::new("categ", v)
}

/// Concatenates in order; the name joins part names with `+`.
pub fn concat_features(parts: &[FeatureVector]) -> Result<FeatureVector> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("concat_features of no parts".into()));
    }
    let name = parts.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join("+");
    let values = parts.iter().flat_map(|p| p.as_slice().iter().copied()).collect();
    FeatureVector::new(name, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_pool_examples() {
        assert_eq!(mean_pool(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(mean_pool(&[vec![0.25, -7.0]]).unwrap(), vec![0.25, -7.0]);
        let v = vec![0.1, 0.7, -3.3];
        let copies = vec![v.clone(); 100];
        let m = mean_pool(&copies).unwrap();
        for (a, b) in m.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_errors() {
        assert!(matches!(mean_pool::<Vec<f64>>(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(mean_pool(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Dimension(_))));
    }

    #[test]
    fn onehot_examples() {
        let v = category_onehot(3, 20).unwrap();
        assert_eq!(v.dim(), 20);
        assert!(v.as_slice().iter().enumerate().all(|(i, &x)| x == if i == 3 { 1.0 } else { 0.0 }));
        assert_eq!(category_onehot(0, 1).unwrap().as_slice(), &[1.0]);
        assert!(matches!(category_onehot(20, 20), Err(Error::Range(_))));
    }

    #[test]
    fn concat_examples() {
        let a = FeatureVector::new("a", vec![1.0, 2.0]).unwrap();
        let b = FeatureVector::new("b", vec![3.0]).unwrap();
        let c = concat_features(&[a.clone(), b]).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(c.name, "a+b");
        assert_eq!(concat_features(&[a.clone()]).unwrap(), a);

        let gcnn = FeatureVector::new("gcnn", vec![0.5; 1024]).unwrap();
        let cat = category_onehot(7, NUM_CATEGORIES).unwrap();
        let p = concat_features(&[gcnn, cat]).unwrap();
        assert_eq!((p.dim(), p.name.as_str()), (1044, "gcnn+categ"));
        assert!(concat_features(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn mean_pool_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 1..8),
            rot in 0usize..8,
        ) {
            let mut perm = rows.clone();
            let r = rot % perm.len();
            perm.rotate_left(r);
            perm.reverse();
            let a = mean_pool(&rows).unwrap();
            let b = mean_pool(&perm).unwrap();
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

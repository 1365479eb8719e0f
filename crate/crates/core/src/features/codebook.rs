use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;

use crate::binfmt::{self, round_f32};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

const MAGIC: &[u8; 4] = b"VCBK";

/// k centroids for one descriptor channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub channel: String,
    centroids: Tensor,
}

impl Codebook {
    /// Centroids are rounded to `f32` precision, the precision of the file
    /// format, so that save/load is exact.
    pub fn new(channel: impl Into<String>, mut centroids: Tensor) -> Result<Self> {
        if centroids.shape().len() != 2 {
            return Err(Error::dim(format!("centroids must be k×d, got {:?}", centroids.shape())));
        }
        centroids.ensure_finite("codebook centroids")?;
        centroids.data_mut().iter_mut().for_each(|x| *x = round_f32(*x));
        Ok(Self { channel: channel.into(), centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn centroids(&self) -> &Tensor {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        self.centroids.row(i)
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, x)
    }

    /// Writes `VCBK`, the channel name (u16 length + UTF-8), u32 k, u32 d and
    /// k·d little-endian f32 values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        binfmt::write_magic(&mut w, MAGIC)?;
        binfmt::write_str16(&mut w, &self.channel)?;
        binfmt::write_u32(&mut w, binfmt::to_u32(self.k(), "k")?)?;
        binfmt::write_u32(&mut w, binfmt::to_u32(self.dim(), "d")?)?;
        binfmt::write_f32s(&mut w, self.centroids.data())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        binfmt::read_magic(&mut r, MAGIC)?;
        let channel = binfmt::read_str16(&mut r, "channel name")?;
        let k = binfmt::read_u32(&mut r, "k")? as usize;
        let d = binfmt::read_u32(&mut r, "d")? as usize;
        let data = binfmt::read_f32s(&mut r, k * d, "centroids")?;
        binfmt::expect_eof(&mut r)?;
        Self::new(channel, Tensor::matrix(k, d, data).map_err(|e| Error::Format(e.to_string()))?)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Tensor, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for i in 0..centroids.rows() {
        let d = sq_dist(centroids.row(i), x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Result of a k-means run.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Sum of squared distances after each assignment step.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Stops after `max_iters` assignment steps or when assignments stop
/// changing. An emptied cluster is reseeded with the point farthest from its
/// centroid. The returned codebook holds `f32`-rounded centroids (see
/// [`Codebook::new`]).
pub fn kmeans(channel: &str, samples: &Tensor, k: usize, rng: &mut Rng, max_iters: usize) -> Result<KMeansFit> {
    if samples.shape().len() != 2 {
        return Err(Error::dim(format!("samples must be n×d, got {:?}", samples.shape())));
    }
    let (n, d) = (samples.rows(), samples.cols());
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::Parameter(format!("{n} samples cannot seed {k} centroids")));
    }
    samples.ensure_finite("k-means samples")?;

    let mut centroids = plus_plus_init(samples, k, rng);
    let mut assign = vec![usize::MAX; n];
    let mut objectives = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut objective = 0.0;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dist) = nearest(&centroids, samples.row(i));
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
            dists[i] = dist;
            objective += dist;
        }
        objectives.push(objective);
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assign[i];
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(samples.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let row = centroids.row_mut(c);
                for (r, s) in row.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *r = s / counts[c] as f64;
                }
            } else {
                // reseed with the farthest point not already used
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("n >= k leaves a free point");
                taken[far] = true;
                dists[far] = 0.0;
                centroids.row_mut(c).copy_from_slice(samples.row(far));
            }
        }
    }

    Ok(KMeansFit { codebook: Codebook::new(channel, centroids)?, objectives, converged })
}

/// Trains a k-centroid codebook on `samples` (n×d).
pub fn train_codebook(channel: &str, samples: &Tensor, k: usize, rng: &mut Rng, max_iters: usize) -> Result<Codebook> {
    kmeans(channel, samples, k, rng, max_iters).map(|f| f.codebook)
}

fn plus_plus_init(samples: &Tensor, k: usize, rng: &mut Rng) -> Tensor {
    let (n, d) = (samples.rows(), samples.cols());
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(samples.row(i), samples.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(samples.row(i), samples.row(next)));
        }
    }
    let mut data = Vec::with_capacity(k * d);
    for &c in &chosen {
        data.extend_from_slice(samples.row(c));
    }
    Tensor::matrix(k, d, data).expect("k×d centroids")
}

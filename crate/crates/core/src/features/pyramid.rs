use serde::{Deserialize, Serialize};

use super::mean_pool;
use crate::error::{Error, Result};

/// Scale-2 regions per frame (overlapping grid cells and their flips).
pub const NUM_REGIONS: usize = 26;

/// Activations of one frame: the whole-frame vector and its 26 regions.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionActivations {
    pub scale1: Vec<f64>,
    pub regions: Vec<Vec<f64>>,
}

impl RegionActivations {
    pub fn new(scale1: Vec<f64>, regions: Vec<Vec<f64>>) -> Result<Self> {
        let r = Self { scale1, regions };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.regions.len() != NUM_REGIONS {
            return Err(Error::dim(format!("{} scale-2 regions, expected {NUM_REGIONS}", self.regions.len())));
        }
        let d = self.scale1.len();
        if d == 0 {
            return Err(Error::dim("empty scale-1 activation"));
        }
        if let Some((i, r)) = self.regions.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::dim(format!("region {i} has dim {}, scale-1 has {d}", r.len())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Avg,
    Max,
}

impl Pooling {
    fn pool(self, vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Pooling::Avg => mean_pool(vectors),
            Pooling::Max => {
                let first = vectors.first().ok_or_else(|| Error::EmptyInput("max pool of no vectors".into()))?;
                let mut out = first.clone();
                for v in &vectors[1..] {
                    if v.len() != out.len() {
                        return Err(Error::dim("max pool over mixed dimensions"));
                    }
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = o.max(*x);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Region-stage then frame-stage pooling operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingCombo {
    AvgAvg,
    MaxAvg,
    MaxMax,
}

impl PoolingCombo {
    pub fn stages(self) -> (Pooling, Pooling) {
        match self {
            PoolingCombo::AvgAvg => (Pooling::Avg, Pooling::Avg),
            PoolingCombo::MaxAvg => (Pooling::Max, Pooling::Avg),
            PoolingCombo::MaxMax => (Pooling::Max, Pooling::Max),
        }
    }
}

/// Pools the 26 regions of each frame into one vector, appends it to the
/// scale-1 vector (giving `2·d` per frame) and pools the frames.
///
/// With `d = 1024` the result is the 2048-d frame feature.
pub fn pyramid_pool(frames: &[RegionActivations], combo: PoolingCombo) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("pyramid_pool of no frames".into()));
    }
    let (region_op, frame_op) = combo.stages();
    let d = frames[0].scale1.len();
    let per_frame = frames
        .iter()
        .map(|f| {
            f.validate()?;
            if f.scale1.len() != d {
                return Err(Error::dim(format!("frame dim {} differs from {d}", f.scale1.len())));
            }
            let mut v = f.scale1.clone();
            v.extend(region_op.pool(&f.regions)?);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    frame_op.pool(&per_frame)
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Codebook, FeatureVector};
use crate::error::{Error, Result};

/// Trajectory descriptor channels, in encoding order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Trajectory,
    Hog,
    Hof,
    MbhX,
    MbhY,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::Trajectory, Channel::Hog, Channel::Hof, Channel::MbhX, Channel::MbhY];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Trajectory => "trajectory",
            Channel::Hog => "hog",
            Channel::Hof => "hof",
            Channel::MbhX => "mbhx",
            Channel::MbhY => "mbhy",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown descriptor channel `{s}`")))
    }
}

/// Per-channel local descriptors extracted from one video.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DescriptorSet {
    pub channels: BTreeMap<Channel, Vec<Vec<f64>>>,
}

impl DescriptorSet {
    pub fn insert(&mut self, channel: Channel, descriptors: Vec<Vec<f64>>) -> Result<()> {
        if let Some(d) = descriptors.first().map(Vec::len) {
            if descriptors.iter().any(|v| v.len() != d) {
                return Err(Error::dim(format!("channel {channel} mixes descriptor dimensions")));
            }
        }
        self.channels.insert(channel, descriptors);
        Ok(())
    }
}

/// Hard-assignment bag-of-features: one L1-normalised k-bin histogram per
/// channel, concatenated in [`Channel::ALL`] order. A channel without
/// descriptors contributes zeros.
pub fn bof_encode(descriptors: &DescriptorSet, codebooks: &BTreeMap<Channel, Codebook>) -> Result<FeatureVector> {
    let mut out = Vec::new();
    for channel in Channel::ALL {
        let descs = descriptors
            .channels
            .get(&channel)
            .ok_or_else(|| Error::Input(format!("descriptor channel {channel} missing")))?;
        let book = codebooks
            .get(&channel)
            .ok_or_else(|| Error::Input(format!("no codebook for channel {channel}")))?;
        let mut hist = vec![0.0; book.k()];
        for (i, d) in descs.iter().enumerate() {
            if d.len() != book.dim() {
                return Err(Error::dim(format!(
                    "{channel} descriptor {i} has dim {}, codebook expects {}",
                    d.len(),
                    book.dim()
                )));
            }
            hist[book.nearest(d).0] += 1.0;
        }
        if !descs.is_empty() {
            let n = descs.len() as f64;
            hist.iter_mut().for_each(|h| *h /= n);
        }
        out.extend(hist);
    }
    FeatureVector::new("bof", out)
}

//! Desk-scale synthetic benchmark.
//!
//! Every video has an object and a scene; "motion" videos (categories in the
//! upper half) also have an action. Scene videos are captioned with their
//! object and scene, motion videos with their object and action.
//!
//! Family A (`gcnn`) is pyramid-pooled region activations built from object
//! and scene prototypes. Family B (`dt`) is a bag-of-features histogram of
//! trajectory-style descriptors drawn around action-specific centres; only
//! the HOG channel carries a weaker object signal. A model fed A captions
//! scene videos well, a model fed B captions motion videos well.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split, VideoRecord};
use super::store::FeatureStore;
use crate::error::{Error, Result};
use crate::features::{
    bof_encode, category_onehot, pyramid_pool, train_codebook, Channel, Codebook, DescriptorSet, PoolingCombo,
    RegionActivations, NUM_CATEGORIES, NUM_REGIONS,
};
use crate::numerics::{fork, Rng, Tensor};

pub const OBJECTS: [&str; 8] = ["man", "woman", "dog", "cat", "car", "child", "bird", "horse"];
pub const ACTIONS: [&str; 8] = ["running", "jumping", "swimming", "dancing", "cooking", "singing", "driving", "climbing"];
pub const SCENES: [&str; 4] = ["kitchen", "park", "street", "room"];

const MOTION_TEMPLATES: [&str; 3] = ["a {o} is {a}", "the {o} is {a}", "a {o} is {a} here"];
const SCENE_TEMPLATES: [&str; 3] = ["a {o} is in the {s}", "the {o} is in the {s}", "a {o} is in a {s}"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub val_fraction: f64,
    pub captions_per_video: usize,
    pub frames: usize,
    pub gcnn_dim: usize,
    pub gcnn_noise: f64,
    pub pooling: PoolingCombo,
    pub descriptor_dim: usize,
    pub descriptors_per_channel: usize,
    pub dt_noise: f64,
    /// Share of HOG descriptors drawn around the object centre.
    pub hog_object_share: f64,
    /// Share of motion-channel descriptors drawn around the action centre.
    pub action_share: f64,
    pub codebook_k: usize,
    pub kmeans_iters: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_videos: 200,
            val_fraction: 0.25,
            captions_per_video: 5,
            frames: 4,
            gcnn_dim: 32,
            gcnn_noise: 0.5,
            pooling: PoolingCombo::MaxAvg,
            descriptor_dim: 8,
            descriptors_per_channel: 40,
            dt_noise: 0.6,
            hog_object_share: 0.5,
            action_share: 0.7,
            codebook_k: 16,
            kmeans_iters: 30,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 {
            return Err(Error::Parameter("synthetic benchmark needs at least one video".into()));
        }
        for (name, v) in [
            ("captions_per_video", self.captions_per_video),
            ("frames", self.frames),
            ("gcnn_dim", self.gcnn_dim),
            ("descriptor_dim", self.descriptor_dim),
            ("descriptors_per_channel", self.descriptors_per_channel),
            ("codebook_k", self.codebook_k),
        ] {
            if v == 0 {
                return Err(Error::Parameter(format!("synthetic {name} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Parameter(format!("val_fraction {} must lie in [0, 1)", self.val_fraction)));
        }
        for (name, v) in [("hog_object_share", self.hog_object_share), ("action_share", self.action_share)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} {v} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Latent content of one synthetic video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Concepts {
    pub object: usize,
    pub scene: usize,
    /// `None` for scene videos.
    pub action: Option<usize>,
}

pub fn is_motion_category(category: usize) -> bool {
    category >= NUM_CATEGORIES / 2
}

pub struct SynthData {
    pub dataset: Dataset,
    /// `gcnn`, `dt` and `categ` for every video.
    pub store: FeatureStore,
    pub codebooks: BTreeMap<Channel, Codebook>,
    pub descriptors: BTreeMap<String, DescriptorSet>,
    pub concepts: BTreeMap<String, Concepts>,
}

fn gaussian_vec(n: usize, sd: f64, rng: &mut Rng) -> Vec<f64> {
    let d = Normal::new(0.0, sd).expect("positive sd");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn noisy(center: &[f64], sd: f64, rng: &mut Rng) -> Vec<f64> {
    let d = Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("positive sd");
    center.iter().map(|c| c + d.sample(rng)).collect()
}

fn caption(c: &Concepts, rng: &mut Rng) -> String {
    match c.action {
        Some(a) => MOTION_TEMPLATES[rng.random_range(0..3)].replace("{o}", OBJECTS[c.object]).replace("{a}", ACTIONS[a]),
        None => SCENE_TEMPLATES[rng.random_range(0..3)].replace("{o}", OBJECTS[c.object]).replace("{s}", SCENES[c.scene]),
    }
}

struct Prototypes {
    object: Vec<Vec<f64>>,
    scene: Vec<Vec<f64>>,
    /// [channel][action], index ACTIONS.len() is the static centre
    action: Vec<Vec<Vec<f64>>>,
    hog_object: Vec<Vec<f64>>,
    /// [channel][i]
    background: Vec<Vec<Vec<f64>>>,
}

impl Prototypes {
    fn new(cfg: &SynthConfig, rng: &mut Rng) -> Self {
        let (g, d) = (cfg.gcnn_dim, cfg.descriptor_dim);
        let object = (0..OBJECTS.len()).map(|_| gaussian_vec(g, 1.0, rng)).collect();
        let scene = (0..SCENES.len()).map(|_| gaussian_vec(g, 1.0, rng)).collect();
        let action = Channel::ALL
            .iter()
            .map(|_| (0..=ACTIONS.len()).map(|_| gaussian_vec(d, 2.0, rng)).collect())
            .collect();
        let hog_object = (0..OBJECTS.len()).map(|_| gaussian_vec(d, 2.0, rng)).collect();
        let background = Channel::ALL.iter().map(|_| (0..4).map(|_| gaussian_vec(d, 2.0, rng)).collect()).collect();
        Self { object, scene, action, hog_object, background }
    }
}

fn frame_activations(p: &Prototypes, c: &Concepts, cfg: &SynthConfig, rng: &mut Rng) -> Result<Vec<RegionActivations>> {
    let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    let (obj, scn) = (&p.object[c.object], &p.scene[c.scene]);
    let both: Vec<f64> = obj.iter().zip(scn).map(|(a, b)| a + b).collect();
    (0..cfg.frames)
        .map(|_| {
            let scale1 = relu(noisy(&both, cfg.gcnn_noise, rng));
            // even regions see the object, odd ones the background scene
            let regions = (0..NUM_REGIONS)
                .map(|r| relu(noisy(if r % 2 == 0 { obj } else { scn }, cfg.gcnn_noise, rng)))
                .collect();
            RegionActivations::new(scale1, regions)
        })
        .collect()
}

fn descriptors(p: &Prototypes, c: &Concepts, cfg: &SynthConfig, rng: &mut Rng) -> Result<DescriptorSet> {
    let mut set = DescriptorSet::default();
    let action = c.action.unwrap_or(ACTIONS.len());
    for (ci, channel) in Channel::ALL.into_iter().enumerate() {
        let (center, share) = if channel == Channel::Hog {
            (&p.hog_object[c.object], cfg.hog_object_share)
        } else {
            (&p.action[ci][action], cfg.action_share)
        };
        let descs = (0..cfg.descriptors_per_channel)
            .map(|_| {
                if rng.random_bool(share) {
                    noisy(center, cfg.dt_noise, rng)
                } else {
                    let bg = &p.background[ci][rng.random_range(0..4)];
                    noisy(bg, cfg.dt_noise, rng)
                }
            })
            .collect();
        set.insert(channel, descs)?;
    }
    Ok(set)
}

/// Codebooks fitted on the pooled descriptors of `videos`.
pub fn train_codebooks<'a>(
    sets: impl IntoIterator<Item = &'a DescriptorSet> + Clone,
    k: usize,
    iters: usize,
    rng: &mut Rng,
) -> Result<BTreeMap<Channel, Codebook>> {
    let mut out = BTreeMap::new();
    for channel in Channel::ALL {
        let rows: Vec<&Vec<f64>> = sets.clone().into_iter().filter_map(|s| s.channels.get(&channel)).flatten().collect();
        let d = rows.first().map(|r| r.len()).ok_or_else(|| Error::EmptyInput(format!("no {channel} descriptors")))?;
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let samples = Tensor::matrix(rows.len(), d, data)?;
        out.insert(channel, train_codebook(channel.name(), &samples, k, rng, iters)?);
    }
    Ok(out)
}

/// Builds the benchmark. Train/val membership is by position: the last
/// `val_fraction` of videos form the val split.
pub fn synth_generate(cfg: &SynthConfig, rng: &mut Rng) -> Result<SynthData> {
    cfg.validate()?;
    let mut proto_rng = fork(rng);
    let protos = Prototypes::new(cfg, &mut proto_rng);
    let n_val = (cfg.n_videos as f64 * cfg.val_fraction).round() as usize;
    let n_train = cfg.n_videos - n_val;

    let mut dataset = Dataset::default();
    let mut concepts = BTreeMap::new();
    let mut descs = BTreeMap::new();
    let mut gcnn = BTreeMap::new();
    for i in 0..cfg.n_videos {
        let id = format!("video{i:04}");
        let category = rng.random_range(0..NUM_CATEGORIES);
        let c = Concepts {
            object: rng.random_range(0..OBJECTS.len()),
            scene: rng.random_range(0..SCENES.len()),
            action: is_motion_category(category).then(|| rng.random_range(0..ACTIONS.len())),
        };
        let captions = (0..cfg.captions_per_video).map(|_| caption(&c, rng)).collect();
        let split = if i < n_train { Split::Train } else { Split::Val };
        dataset.videos.push(VideoRecord { id: id.clone(), category, split, captions });
        gcnn.insert(id.clone(), pyramid_pool(&frame_activations(&protos, &c, cfg, rng)?, cfg.pooling)?);
        descs.insert(id.clone(), descriptors(&protos, &c, cfg, rng)?);
        concepts.insert(id, c);
    }

    let train_sets: Vec<&DescriptorSet> =
        dataset.videos.iter().filter(|v| v.split == Split::Train).map(|v| &descs[&v.id]).collect();
    let train_sets = if train_sets.is_empty() { descs.values().collect() } else { train_sets };
    let codebooks = train_codebooks(train_sets.iter().copied(), cfg.codebook_k, cfg.kmeans_iters, rng)?;

    let mut store = FeatureStore::new();
    for v in &dataset.videos {
        store.insert("gcnn", &v.id, &gcnn[&v.id])?;
        store.insert("dt", &v.id, bof_encode(&descs[&v.id], &codebooks)?.as_slice())?;
        store.insert("categ", &v.id, category_onehot(v.category, NUM_CATEGORIES)?.as_slice())?;
    }
    Ok(SynthData { dataset, store, codebooks, descriptors: descs, concepts })
}

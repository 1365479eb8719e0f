use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NUM_CATEGORIES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Input(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub category: usize,
    pub split: Split,
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    /// Checks id uniqueness, category range and that train/val records
    /// carry captions.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, v) in self.videos.iter().enumerate() {
            if !seen.insert(v.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate video id `{}` (record {i})", v.id)));
            }
            if v.category >= NUM_CATEGORIES {
                return Err(Error::Integrity(format!(
                    "video `{}` has category {} outside [0, {NUM_CATEGORIES})",
                    v.id, v.category
                )));
            }
            if v.split != Split::Test && v.captions.is_empty() {
                return Err(Error::Integrity(format!("{} video `{}` has no captions", v.split, v.id)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&VideoRecord> {
        self.videos.iter().filter(|v| v.split == split).collect()
    }

    pub fn get(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    /// Record counts for train, val and test.
    pub fn counts(&self) -> [usize; 3] {
        [Split::Train, Split::Val, Split::Test].map(|s| self.videos.iter().filter(|v| v.split == s).count())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }
}

/// Reads a `{"videos": [...]}` document. An empty file is an empty dataset.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let ctx = path.display().to_string();
    parse_dataset(&text, &ctx)
}

pub fn parse_dataset(text: &str, ctx: &str) -> Result<Dataset> {
    if text.trim().is_empty() {
        eprintln!("warning: {ctx} is empty; using an empty dataset");
        return Ok(Dataset::default());
    }
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: format!("{ctx}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let records = doc
        .get("videos")
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Parse { context: ctx.to_string(), message: "expected an object with a `videos` array".into() })?;
    let mut videos = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let id = rec.get("id").and_then(|v| v.as_str()).unwrap_or("?");
        let v: VideoRecord = serde_json::from_value(rec.clone()).map_err(|e| Error::Parse {
            context: format!("{ctx} record {i} (id `{id}`)"),
            message: e.to_string(),
        })?;
        videos.push(v);
    }
    let d = Dataset { videos };
    d.validate()?;
    Ok(d)
}

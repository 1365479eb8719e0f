//! Local-descriptor files: one JSON object per (video, channel) line,
//! `{"video_id": .., "channel": "hog", "descriptors": [[..], ..]}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Channel, DescriptorSet};

#[derive(Serialize, Deserialize)]
struct Line {
    video_id: String,
    channel: Channel,
    descriptors: Vec<Vec<f64>>,
}

pub fn write_descriptors(path: &Path, sets: &BTreeMap<String, DescriptorSet>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, set) in sets {
        for (&channel, descriptors) in &set.channels {
            let line = Line { video_id: id.clone(), channel, descriptors: descriptors.clone() };
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_descriptors(path: &Path) -> Result<BTreeMap<String, DescriptorSet>> {
    let mut out: BTreeMap<String, DescriptorSet> = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { context: format!("{}:{}", path.display(), i + 1), message: e.to_string() })?;
        out.entry(l.video_id).or_default().insert(l.channel, l.descriptors)?;
    }
    Ok(out)
}

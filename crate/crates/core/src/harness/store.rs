use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binfmt::{self, round_f32};
use crate::ensemble::FeatureLookup;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const FEATURE_MAGIC: &[u8; 4] = b"VFEA";

/// Vectors of one feature name, keyed by video id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
}

/// `(video id, feature name) → vector`. Values are held at f32 precision so
/// the on-disk format round-trips exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    tables: BTreeMap<String, FeatureTable>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a vector, rounding to f32. All vectors of one name share a dim.
    pub fn insert(&mut self, name: &str, video_id: &str, values: &[f64]) -> Result<()> {
        if name.is_empty() || name.contains('+') {
            return Err(Error::Input(format!("invalid feature name `{name}`")));
        }
        if values.is_empty() {
            return Err(Error::dim(format!("feature `{name}` for `{video_id}` is empty")));
        }
        let table = self.tables.entry(name.to_string()).or_insert_with(|| FeatureTable { dim: values.len(), rows: BTreeMap::new() });
        if table.dim != values.len() {
            return Err(Error::dim(format!(
                "feature `{name}` for `{video_id}` has dim {}, others have {}",
                values.len(),
                table.dim
            )));
        }
        table.rows.insert(video_id.to_string(), values.iter().map(|&v| round_f32(v)).collect());
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.tables.keys().map(String::as_str).collect()
    }

    pub fn table(&self, name: &str) -> Option<&FeatureTable> {
        self.tables.get(name)
    }

    fn parts(name: &str) -> Vec<&str> {
        name.split('+').collect()
    }

    /// True if every `+`-separated part of `name` is stored.
    pub fn has(&self, name: &str) -> bool {
        Self::parts(name).iter().all(|p| self.tables.contains_key(*p))
    }

    /// Dimension of `name`; composites add up their parts.
    pub fn dim(&self, name: &str) -> Result<usize> {
        Self::parts(name)
            .iter()
            .map(|p| {
                self.tables
                    .get(*p)
                    .map(|t| t.dim)
                    .ok_or_else(|| Error::Input(format!("unknown feature `{p}`")))
            })
            .sum()
    }

    /// The vector for `video_id`; `a+b` concatenates `a` and `b`.
    pub fn get(&self, video_id: &str, name: &str) -> Result<FeatureVector> {
        let mut values = Vec::new();
        for p in Self::parts(name) {
            let table = self.tables.get(p).ok_or_else(|| Error::Input(format!("unknown feature `{p}`")))?;
            let row = table
                .rows
                .get(video_id)
                .ok_or_else(|| Error::Input(format!("feature `{p}` missing for video `{video_id}`")))?;
            values.extend_from_slice(row);
        }
        FeatureVector::new(name, values)
    }

    /// Writes one feature name as a VFEA file; rows are ordered by video id.
    pub fn save_features(&self, name: &str, path: &Path) -> Result<()> {
        let empty = FeatureTable::default();
        let table = self.tables.get(name).unwrap_or(&empty);
        let mut w = BufWriter::new(File::create(path)?);
        write_table(&mut w, name, table)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a VFEA file into the store; returns the feature name.
    pub fn load_features(&mut self, path: &Path) -> Result<String> {
        let (name, table) = read_table(&mut BufReader::new(File::open(path)?))?;
        if self.tables.contains_key(&name) {
            return Err(Error::Integrity(format!("feature `{name}` loaded twice")));
        }
        if !table.rows.is_empty() {
            self.tables.insert(name.clone(), table);
        }
        Ok(name)
    }
}

impl FeatureLookup for FeatureStore {
    fn lookup(&self, video_id: &str, name: &str) -> Result<FeatureVector> {
        self.get(video_id, name)
    }
}

pub fn write_table<W: Write>(w: &mut W, name: &str, table: &FeatureTable) -> Result<()> {
    binfmt::write_magic(w, FEATURE_MAGIC)?;
    binfmt::write_u32(w, binfmt::to_u32(table.rows.len(), "row count")?)?;
    binfmt::write_u32(w, binfmt::to_u32(table.dim, "dim")?)?;
    binfmt::write_str16(w, name)?;
    for (id, row) in &table.rows {
        if row.len() != table.dim {
            return Err(Error::Format(format!("row `{id}` has dim {}, table has {}", row.len(), table.dim)));
        }
        binfmt::write_str16(w, id)?;
        binfmt::write_f32s(w, row)?;
    }
    Ok(())
}

pub fn read_table<R: Read>(r: &mut R) -> Result<(String, FeatureTable)> {
    binfmt::read_magic(r, FEATURE_MAGIC)?;
    let count = binfmt::read_u32(r, "row count")? as usize;
    let dim = binfmt::read_u32(r, "dim")? as usize;
    let name = binfmt::read_str16(r, "feature name")?;
    if count > 0 && dim == 0 {
        return Err(Error::Format(format!("feature `{name}` declares zero dimension")));
    }
    let mut rows = BTreeMap::new();
    for i in 0..count {
        let id = binfmt::read_str16(r, &format!("id of row {i}"))?;
        let vals = binfmt::read_f32s(r, dim, &format!("row `{id}`"))?;
        if rows.insert(id.clone(), vals).is_some() {
            return Err(Error::Format(format!("duplicate row `{id}` in feature `{name}`")));
        }
    }
    binfmt::expect_eof(r)?;
    Ok((name, FeatureTable { dim, rows }))
}

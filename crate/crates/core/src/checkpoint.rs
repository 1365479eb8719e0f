//! Model checkpoint files.
//!
//! Layout: 4-byte magic, u32 header length, header text of `key=value`
//! lines, u32 tensor count, then per tensor a u16-prefixed UTF-8 name,
//! u32 rows, u32 cols and rows·cols little-endian f64 values. Vectors are
//! stored as n×1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::binfmt;
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params<P: ParamSet>(header: BTreeMap<String, String>, params: &P) -> Self {
        let tensors = params.names().into_iter().zip(params.tensors().into_iter().cloned()).collect();
        Self { header, tensors }
    }

    /// Copies stored tensors into `params`, matching by name and shape.
    pub fn fill_params<P: ParamSet>(&self, params: &mut P) -> Result<()> {
        let names = params.names();
        if names.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, dst), (stored_name, src)) in names.iter().zip(params.tensors_mut()).zip(&self.tensors) {
            if name != stored_name || dst.len() != src.len() {
                return Err(Error::Format(format!(
                    "checkpoint tensor `{stored_name}` {:?} does not match `{name}` {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .header
            .get(key)
            .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("checkpoint header `{key}` has bad value `{raw}`")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W, magic: &[u8; 4]) -> Result<()> {
        binfmt::write_magic(w, magic)?;
        let mut header = String::new();
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!("header entry `{k}` cannot be encoded")));
            }
            header.push_str(&format!("{k}={v}\n"));
        }
        binfmt::write_u32(w, binfmt::to_u32(header.len(), "header length")?)?;
        w.write_all(header.as_bytes())?;
        binfmt::write_u32(w, binfmt::to_u32(self.tensors.len(), "tensor count")?)?;
        for (name, t) in &self.tensors {
            binfmt::write_str16(w, name)?;
            binfmt::write_u32(w, binfmt::to_u32(t.rows(), "rows")?)?;
            binfmt::write_u32(w, binfmt::to_u32(t.cols(), "cols")?)?;
            binfmt::write_f64s(w, t.data())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Self> {
        binfmt::read_magic(r, magic)?;
        let len = binfmt::read_u32(r, "header length")? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| Error::Format("truncated header".into()))?;
        let text = String::from_utf8(buf).map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let mut header = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
            header.insert(k.to_owned(), v.to_owned());
        }
        let count = binfmt::read_u32(r, "tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = binfmt::read_str16(r, "tensor name")?;
            let rows = binfmt::read_u32(r, "rows")? as usize;
            let cols = binfmt::read_u32(r, "cols")? as usize;
            let data = binfmt::read_f64s(r, rows * cols, &name)?;
            let t = Tensor::matrix(rows, cols, data).map_err(|e| Error::Format(e.to_string()))?;
            tensors.push((name, t));
        }
        binfmt::expect_eof(r)?;
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path, magic: &[u8; 4]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, magic)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, magic: &[u8; 4]) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?), magic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let mut header = BTreeMap::new();
        header.insert("depth".to_string(), "2".to_string());
        let ck = Checkpoint {
            header,
            tensors: vec![
                ("w".into(), Tensor::matrix(2, 2, vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 7.0]).unwrap()),
                ("b".into(), Tensor::matrix(3, 1, vec![1e-300, 2.0, -0.0]).unwrap()),
            ],
        };
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes, b"TEST").unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice(), b"TEST").unwrap();
        let mut again = Vec::new();
        back.write_to(&mut again, b"TEST").unwrap();
        assert_eq!(bytes, again);
        assert_eq!(back.get::<usize>("depth").unwrap(), 2);
        assert!(Checkpoint::read_from(&mut bytes.as_slice(), b"ELSE").is_err());
        assert!(Checkpoint::read_from(&mut &bytes[..bytes.len() - 1], b"TEST").is_err());
    }
}

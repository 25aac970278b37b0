//! `LRWT` weight files, little-endian:
//! magic, version u32, spec-name (u32 length + bytes), parameter count u32,
//! then per parameter: name (u32 length + bytes), rank u32, dims u32 each, raw f64 payload.

use std::fs;
use std::path::Path;

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor_nn::{ParamSet, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"LRWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub spec_id: String,
    pub params: ParamSet,
}

pub fn write_weights(spec: &ModelSpec, weights: &ModelWeights) -> Result<Vec<u8>> {
    spec.network().check_params(&weights.params)?;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    put_str(&mut out, &spec.id());
    out.extend_from_slice(&(weights.params.len() as u32).to_le_bytes());
    for (key, t) in weights.params.iter() {
        put_str(&mut out, &key.to_string());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_weights(
    spec: &ModelSpec,
    weights: &ModelWeights,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, write_weights(spec, weights)?)?;
    Ok(())
}

pub fn read_weights(spec: &ModelSpec, bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            expected: "LRWT".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Version {
            what: "weights",
            expected: WEIGHTS_VERSION,
            found: version,
        });
    }
    let name = r.string()?;
    if name != spec.id() {
        return Err(Error::ModelMismatch {
            expected: spec.id(),
            found: name,
        });
    }
    let count = r.u32()? as usize;
    let expected = spec.network().param_shapes();
    if count != expected.len() {
        return Err(Error::Dataset(format!(
            "weights file holds {count} tensors, {} expects {}",
            spec.id(),
            expected.len()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for (key, shape) in expected {
        let pname = r.string()?;
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        if pname != key.to_string() || dims != *shape {
            return Err(Error::ParamShape {
                name: pname,
                expected: shape.clone(),
                found: dims,
            });
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        entries.push((*key, Tensor::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Truncated(format!(
            "weights file: {} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelWeights {
        spec_id: name,
        params: ParamSet::new(entries),
    })
}

pub fn load_weights(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<ModelWeights> {
    read_weights(spec, &fs::read(path)?)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "weights file: needed {n} bytes at offset {}",
                    self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Dataset("weights file: name is not UTF-8".into()))
    }
}

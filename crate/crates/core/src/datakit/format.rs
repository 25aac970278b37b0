//! `LRDS` container, little-endian:
//! magic, version u32, manifest length u32, manifest JSON, fixed-stride records
//! (RGB bytes, v f64, w f64, t f64, circuit u32, episode u32, index u32), then
//! chunk count u32 and one CRC32 per `chunk_bytes` of record payload.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, DatasetManifest, Sample};
use crate::error::{Error, Result};
use crate::pilots::CommandLimits;
use crate::simworld::ImageFrame;

pub const DATASET_MAGIC: &[u8; 4] = b"LRDS";
pub const DATASET_VERSION: u32 = 1;
pub const CHUNK_BYTES: usize = 64 << 20;

fn stride(width: usize, height: usize) -> usize {
    3 * width * height + 3 * 8 + 3 * 4
}

pub fn write_dataset_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    write_with_chunk(ds, CHUNK_BYTES)
}

pub(crate) fn write_with_chunk(ds: &Dataset, chunk_bytes: usize) -> Result<Vec<u8>> {
    let mut manifest = ds.manifest()?;
    manifest.chunk_bytes = chunk_bytes;
    let header = serde_json::to_vec_pretty(&manifest)?;
    let payload_len = ds.len() * stride(manifest.width, manifest.height);
    let mut out =
        Vec::with_capacity(12 + header.len() + payload_len + 4 * (payload_len / chunk_bytes + 2));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let start = out.len();
    for s in &ds.samples {
        out.extend_from_slice(&s.frame.rgb);
        for x in [s.v, s.w, s.t] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in [s.circuit, s.episode, s.index] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crcs: Vec<u32> = out[start..]
        .chunks(chunk_bytes)
        .map(crc32fast::hash)
        .collect();
    out.extend_from_slice(&(crcs.len() as u32).to_le_bytes());
    for c in crcs {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_dataset_bytes(ds)?)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| {
            Error::Truncated(format!("dataset: {what} needs {n} bytes at offset {pos}"))
        })?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn u32_at(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().expect("4 bytes"))
}

fn f64_at(b: &[u8]) -> f64 {
    f64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

pub fn read_dataset_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0;
    let magic = take(bytes, &mut pos, 4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: "LRDS".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = u32_at(take(bytes, &mut pos, 4, "version")?);
    if version != DATASET_VERSION {
        return Err(Error::Version {
            what: "dataset",
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let hlen = u32_at(take(bytes, &mut pos, 4, "manifest length")?) as usize;
    let manifest: DatasetManifest =
        serde_json::from_slice(take(bytes, &mut pos, hlen, "manifest")?)?;
    if manifest.version != version {
        return Err(Error::Dataset(format!(
            "manifest version {} in a v{version} container",
            manifest.version
        )));
    }
    if manifest.chunk_bytes == 0 || manifest.width == 0 || manifest.height == 0 {
        return Err(Error::Dataset("zero chunk size or frame dimension".into()));
    }
    let st = stride(manifest.width, manifest.height);
    let payload_len = manifest
        .sample_count
        .checked_mul(st)
        .ok_or_else(|| Error::Dataset("sample count overflows".into()))?;
    let payload = take(bytes, &mut pos, payload_len, "records")?;
    let n_chunks = u32_at(take(bytes, &mut pos, 4, "chunk count")?) as usize;
    let expected_chunks = payload_len.div_ceil(manifest.chunk_bytes);
    if n_chunks != expected_chunks {
        return Err(Error::Dataset(format!(
            "{n_chunks} checksums for {expected_chunks} chunks"
        )));
    }
    for (i, chunk) in payload.chunks(manifest.chunk_bytes).enumerate() {
        let stored = u32_at(take(bytes, &mut pos, 4, "checksum")?);
        if crc32fast::hash(chunk) != stored {
            return Err(Error::Checksum { chunk: i });
        }
    }
    if pos != bytes.len() {
        return Err(Error::Dataset(format!(
            "{} trailing bytes after the checksum table",
            bytes.len() - pos
        )));
    }

    let img = 3 * manifest.width * manifest.height;
    let mut samples = Vec::with_capacity(manifest.sample_count);
    for rec in payload.chunks_exact(st) {
        let tail = &rec[img..];
        samples.push(Sample {
            frame: ImageFrame::new(
                manifest.width,
                manifest.height,
                manifest.horizon_row,
                rec[..img].to_vec(),
            )?,
            v: f64_at(&tail[0..]),
            w: f64_at(&tail[8..]),
            t: f64_at(&tail[16..]),
            circuit: u32_at(&tail[24..]),
            episode: u32_at(&tail[28..]),
            index: u32_at(&tail[32..]),
        });
    }
    let ds = Dataset {
        circuits: manifest.circuits.clone(),
        limits: CommandLimits {
            v_max: manifest.v_max,
            w_max: manifest.w_max,
        },
        samples,
    };
    let episodes = ds.episodes()?;
    if episodes != manifest.episodes {
        return Err(Error::Dataset(
            "episode index disagrees with the records".into(),
        ));
    }
    if episodes.windows(2).any(|w| w[1].offset <= w[0].offset) {
        return Err(Error::Dataset(
            "episode offsets not strictly increasing".into(),
        ));
    }
    Ok(ds)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset_bytes(&fs::read(path)?)
}

/// Writes every frame as `frames/NNNNNN.ppm` plus `labels.csv`.
pub fn export_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let frames = dir.join("frames");
    fs::create_dir_all(&frames)?;
    let mut csv = String::from("sample,file,circuit,episode,index,t,v,w\n");
    for (i, s) in ds.samples.iter().enumerate() {
        let name = format!("{i:06}.ppm");
        fs::write(frames.join(&name), s.frame.to_ppm())?;
        writeln!(
            csv,
            "{i},frames/{name},{},{},{},{},{},{}",
            s.circuit, s.episode, s.index, s.t, s.v, s.w
        )
        .expect("write to String");
    }
    fs::write(dir.join("labels.csv"), csv)?;
    Ok(())
}

//! Expert recordings: samples, the `LRDS` container, augmentation and episode-level splits.

mod format;
mod record;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use format::{
    export_dataset, read_dataset, read_dataset_bytes, write_dataset, write_dataset_bytes,
    CHUNK_BYTES, DATASET_MAGIC, DATASET_VERSION,
};
pub use record::{record_dataset, record_episode, RecordRecipe};

use crate::error::{Error, Result};
use crate::pilots::CommandLimits;
use crate::simworld::ImageFrame;

/// One control tick: the raw (uncropped) frame and the command the expert issued on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub frame: ImageFrame,
    pub v: f64,
    pub w: f64,
    pub t: f64,
    pub circuit: u32,
    pub episode: u32,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeIndex {
    pub episode: u32,
    pub circuit: u32,
    /// Index of the episode's first sample.
    pub offset: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub sample_count: usize,
    pub width: usize,
    pub height: usize,
    pub horizon_row: usize,
    /// Circuit names indexed by circuit id.
    pub circuits: Vec<CircuitEntry>,
    pub episodes: Vec<EpisodeIndex>,
    pub v_max: f64,
    pub w_max: f64,
    /// Payload bytes covered by each CRC32.
    pub chunk_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitEntry {
    pub id: u32,
    pub name: String,
}

/// Samples grouped in contiguous episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub circuits: Vec<CircuitEntry>,
    pub limits: CommandLimits,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(circuits: Vec<CircuitEntry>, limits: CommandLimits) -> Self {
        Dataset {
            circuits,
            limits,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Contiguous episode runs, in order. Fails if an episode id reappears after a gap.
    pub fn episodes(&self) -> Result<Vec<EpisodeIndex>> {
        let mut out: Vec<EpisodeIndex> = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            match out.last_mut() {
                Some(e) if e.episode == s.episode => {
                    if e.circuit != s.circuit {
                        return Err(Error::Dataset(format!(
                            "episode {} spans two circuits",
                            s.episode
                        )));
                    }
                    e.count += 1;
                }
                _ => {
                    if out.iter().any(|e| e.episode == s.episode) {
                        return Err(Error::Dataset(format!(
                            "episode {} is not contiguous",
                            s.episode
                        )));
                    }
                    out.push(EpisodeIndex {
                        episode: s.episode,
                        circuit: s.circuit,
                        offset: i,
                        count: 1,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::Dataset("no samples".into()))?;
        let (w, h, hr) = (
            first.frame.width,
            first.frame.height,
            first.frame.horizon_row,
        );
        if let Some(s) = self
            .samples
            .iter()
            .find(|s| (s.frame.width, s.frame.height, s.frame.horizon_row) != (w, h, hr))
        {
            return Err(Error::Dataset(format!(
                "sample {} of episode {} has a different frame geometry",
                s.index, s.episode
            )));
        }
        Ok(DatasetManifest {
            version: DATASET_VERSION,
            sample_count: self.samples.len(),
            width: w,
            height: h,
            horizon_row: hr,
            circuits: self.circuits.clone(),
            episodes: self.episodes()?,
            v_max: self.limits.v_max,
            w_max: self.limits.w_max,
            chunk_bytes: CHUNK_BYTES,
        })
    }

    /// Sample indices of the 3-frame window ending at `i`; the first two frames of an
    /// episode repeat its first frame.
    pub fn sequence_indices(&self, i: usize) -> [usize; 3] {
        let ep = self.samples[i].episode;
        let back = |k: usize| {
            let mut j = i;
            for _ in 0..k {
                if j > 0 && self.samples[j - 1].episode == ep {
                    j -= 1;
                }
            }
            j
        };
        [back(2), back(1), i]
    }

    pub fn episode_samples(&self, episodes: &[u32]) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| episodes.contains(&self.samples[i].episode))
            .collect()
    }

    /// Labels scaled to `[0,1] x [-1,1]`.
    pub fn normalized_label(&self, i: usize) -> (f64, f64) {
        let s = &self.samples[i];
        (s.v / self.limits.v_max, s.w / self.limits.w_max)
    }
}

/// Image columns reversed, angular speed negated.
pub fn mirror(sample: &Sample) -> Sample {
    Sample {
        frame: sample.frame.mirrored(),
        w: -sample.w,
        ..sample.clone()
    }
}

/// Photometric jitter: one brightness scale in [0.8, 1.2] and per-value Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub brightness: (f64, f64),
    pub sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness: (0.8, 1.2),
            sigma: 4.0,
        }
    }
}

pub fn augment(sample: &Sample, rng: &mut impl Rng) -> Sample {
    augment_with(sample, &AugmentConfig::default(), rng)
}

pub fn augment_with(sample: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Sample {
    let scale = if cfg.brightness.0 < cfg.brightness.1 {
        rng.random_range(cfg.brightness.0..=cfg.brightness.1)
    } else {
        cfg.brightness.0
    };
    let noise = Normal::new(0.0, cfg.sigma.max(0.0)).expect("finite sigma");
    let mut out = sample.clone();
    for b in out.frame.rgb.iter_mut() {
        let jitter = if cfg.sigma > 0.0 {
            noise.sample(rng)
        } else {
            0.0
        };
        *b = (*b as f64 * scale + jitter).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Per-sample RNG derived from (seed, sample index), independent of processing order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
}

/// Episode-level split. Validation gets `round(n * val_fraction)` episodes, at least one
/// and at most `n - 1`.
pub fn split(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<Split> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction {val_fraction} outside (0, 1)"
        )));
    }
    let mut ids: Vec<u32> = manifest.episodes.iter().map(|e| e.episode).collect();
    let n = ids.len();
    if n < 2 {
        return Err(Error::Dataset(format!(
            "{n} episode(s); a split needs at least 2"
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut val = ids[..n_val].to_vec();
    let mut train = ids[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, val })
}

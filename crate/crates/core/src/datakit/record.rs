use serde::{Deserialize, Serialize};

use super::{CircuitEntry, Dataset, Sample};
use crate::error::{Error, Result};
use crate::harness::{run_episode_observed, EpisodeConfig};
use crate::pilots::{CommandLimits, ExpertConfig, ExpertPilot};
use crate::simworld::{builtin_circuit, CameraConfig, Track, TrackVariation};

/// Drives the expert for `config.laps` laps and returns one sample per tick. Ticks are cut
/// into episodes of `segment_ticks` (the remainder joins the last one) numbered from
/// `first_episode`. A failed run yields an error and no samples.
pub fn record_episode(
    expert: &mut ExpertPilot,
    track: &Track,
    circuit: u32,
    config: &EpisodeConfig,
    first_episode: u32,
    segment_ticks: Option<usize>,
) -> Result<Vec<Sample>> {
    let mut raw = Vec::new();
    let metrics = run_episode_observed(expert, track, config, |tick| {
        raw.push((tick.frame.clone(), tick.command, tick.state.time));
    })?;
    if !metrics.completed {
        return Err(Error::Dataset(format!(
            "expert did not finish {} (seed {}): {:?}",
            track.name(),
            config.seed,
            metrics.failure_reason
        )));
    }
    let n = raw.len();
    let seg = segment_ticks.filter(|&s| s > 0).unwrap_or(n).max(1);
    let n_segments = (n / seg).max(1);
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, (frame, cmd, t))| {
            let k = (i / seg).min(n_segments - 1);
            Sample {
                frame,
                v: cmd.v,
                w: cmd.w,
                t,
                circuit,
                episode: first_episode + k as u32,
                index: (i - k * seg) as u32,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordRecipe {
    /// Builtin circuit names or numbers.
    pub circuits: Vec<String>,
    pub laps: u32,
    pub seed: u64,
    pub variation: TrackVariation,
    pub camera: CameraConfig,
    pub expert: ExpertConfig,
    pub limits: CommandLimits,
    /// Std-dev of the steering disturbance applied while recording (labels stay clean).
    pub steer_noise: f64,
    pub start_jitter: f64,
    /// Ticks per split unit; `None` keeps each run as one episode.
    pub segment_ticks: Option<usize>,
}

impl Default for RecordRecipe {
    fn default() -> Self {
        RecordRecipe {
            circuits: ["simple_oval", "rounded_rectangle", "s_curve", "many_curves"]
                .map(String::from)
                .to_vec(),
            laps: 1,
            seed: 0,
            variation: TrackVariation::default(),
            camera: CameraConfig::desk(),
            expert: ExpertConfig::default(),
            limits: CommandLimits::default(),
            steer_noise: 0.3,
            start_jitter: 0.3,
            segment_ticks: Some(250),
        }
    }
}

/// Per-circuit episode seed.
pub fn episode_seed(seed: u64, circuit: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(circuit as u64)
}

pub fn record_dataset(recipe: &RecordRecipe) -> Result<Dataset> {
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for key in &recipe.circuits {
        let c = builtin_circuit(key)?;
        let track = Track::new(c.spec.clone())?;
        let config = EpisodeConfig {
            variation: recipe.variation,
            camera: recipe.camera,
            seed: episode_seed(recipe.seed, c.id),
            laps: recipe.laps,
            steer_noise: recipe.steer_noise,
            start_jitter: recipe.start_jitter,
            ..Default::default()
        };
        let mut expert = ExpertPilot::new(
            recipe.expert.clone(),
            recipe.limits,
            recipe.variation.line_color,
        );
        let first = samples.last().map_or(0, |s: &Sample| s.episode + 1);
        samples.extend(record_episode(
            &mut expert,
            &track,
            c.id,
            &config,
            first,
            recipe.segment_ticks,
        )?);
        entries.push(CircuitEntry {
            id: c.id,
            name: c.spec.name.clone(),
        });
    }
    Ok(Dataset {
        circuits: entries,
        limits: recipe.limits,
        samples,
    })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pilots::{DriveCommand, Pilot};
use crate::simworld::{
    off_track_threshold, render, salt_pepper_with, step_dynamics, CameraConfig, CarState,
    ImageFrame, Track, TrackVariation, DT, TAU,
};

/// Arc bins used by the lap-completion rule.
pub const LAP_BINS: usize = 100;
/// Bins that must be visited before crossing the start counts as a lap.
pub const LAP_BINS_REQUIRED: usize = 95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    OffTrack,
    LineLostTimeout,
    TimeLimit,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub completed: bool,
    pub lap_seconds: Option<f64>,
    /// Mean distance to the centerline over control ticks, meters.
    pub position_deviation_mae: f64,
    /// Path length over elapsed time, m/s.
    pub average_speed: f64,
    pub failure_reason: FailureReason,
}

/// Camera and image perturbations applied during an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Perturbation {
    /// Meters, positive to the right.
    pub camera_lateral: f64,
    pub extra_pitch_down: f64,
    /// Salt-and-pepper probability applied to every frame before the pilot sees it.
    pub noise_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub variation: TrackVariation,
    pub camera: CameraConfig,
    pub perturbation: Perturbation,
    pub seed: u64,
    /// `None` means 6 x centerline length / 3 m/s.
    pub max_time: Option<f64>,
    pub laps: u32,
    pub dt: f64,
    pub tau: f64,
    /// Seconds without a line before a line-following pilot is failed.
    pub t_lost: f64,
    /// Half-width of the uniform lateral start offset, meters.
    pub start_jitter: f64,
    /// Half-width of the uniform start heading offset, radians.
    pub heading_jitter: f64,
    /// Std-dev of an Ornstein-Uhlenbeck disturbance added to the applied angular speed.
    /// The pilot's own command is what gets reported to observers.
    pub steer_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            variation: TrackVariation::default(),
            camera: CameraConfig::desk(),
            perturbation: Perturbation::default(),
            seed: 0,
            max_time: None,
            laps: 1,
            dt: DT,
            tau: TAU,
            t_lost: 2.0,
            start_jitter: 0.3,
            heading_jitter: 0.03,
            steer_noise: 0.0,
        }
    }
}

/// Slowest speed the default time limit is sized for.
pub const MAX_TIME_V_MIN: f64 = 3.0;

impl EpisodeConfig {
    pub fn max_time_for(&self, track: &Track) -> f64 {
        self.max_time
            .unwrap_or(6.0 * track.length() / MAX_TIME_V_MIN * self.laps.max(1) as f64)
    }

    pub fn effective_camera(&self) -> CameraConfig {
        CameraConfig {
            lateral_offset: self.camera.lateral_offset + self.perturbation.camera_lateral,
            extra_pitch_down: self.camera.extra_pitch_down + self.perturbation.extra_pitch_down,
            ..self.camera
        }
    }
}

/// What an observer sees on each control tick.
pub struct Tick<'a> {
    pub index: usize,
    /// The frame the pilot saw (after noise).
    pub frame: &'a ImageFrame,
    /// The pilot's command (before any disturbance).
    pub command: DriveCommand,
    pub state: &'a CarState,
}

const STREAM_START: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_STEER: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn run_episode(
    pilot: &mut dyn Pilot,
    track: &Track,
    config: &EpisodeConfig,
) -> Result<EpisodeMetrics> {
    run_episode_observed(pilot, track, config, |_| {})
}

/// Simulates one episode. Failures are reported in the metrics; `Err` means the pilot
/// itself could not run (bad shapes, invalid camera).
pub fn run_episode_observed(
    pilot: &mut dyn Pilot,
    track: &Track,
    config: &EpisodeConfig,
    mut observe: impl FnMut(&Tick),
) -> Result<EpisodeMetrics> {
    let camera = config.effective_camera();
    camera.validate()?;
    pilot.reset();
    let max_time = config.max_time_for(track);
    let off_limit = off_track_threshold(track);

    let mut start_rng = stream(config.seed, STREAM_START);
    let mut noise_rng = stream(config.seed, STREAM_NOISE);
    let mut steer_rng = stream(config.seed, STREAM_STEER);

    let (p0, h0) = track.start_pose();
    let lat: f64 = config.start_jitter * (2.0 * start_rng.random::<f64>() - 1.0);
    let dh: f64 = config.heading_jitter * (2.0 * start_rng.random::<f64>() - 1.0);
    let mut state = CarState::at(p0[0] + lat * h0.sin(), p0[1] - lat * h0.cos(), h0 + dh);

    let mut visited = [false; LAP_BINS];
    let mut prev_progress = track.lap_progress(state.x, state.y)?;
    visited[bin(prev_progress)] = true;
    let (mut laps_done, mut dev_sum, mut path, mut ticks) = (0u32, 0.0, 0.0, 0usize);
    let mut steer_state = 0.0;
    let mut failure = FailureReason::TimeLimit;
    let ou_theta = 1.0;

    while state.time < max_time - 1e-9 {
        let clean = render(track, &config.variation, &state, &camera);
        let frame = salt_pepper_with(&clean, config.perturbation.noise_p, &mut noise_rng);
        let step = pilot.act(&frame, config.dt)?;
        observe(&Tick {
            index: ticks,
            frame: &frame,
            command: step.cmd,
            state: &state,
        });
        if step.line_lost_for > config.t_lost {
            failure = FailureReason::LineLostTimeout;
            break;
        }
        let mut applied = step.cmd;
        if config.steer_noise > 0.0 {
            // discretized OU process with unit mean-reversion rate
            let n: f64 =
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut steer_rng);
            steer_state += -ou_theta * steer_state * config.dt
                + config.steer_noise * (2.0 * ou_theta * config.dt).sqrt() * n;
            applied.w += steer_state;
        }
        let next = step_dynamics(&state, applied, config.dt, config.tau);
        path += (next.x - state.x).hypot(next.y - state.y);
        state = next;
        ticks += 1;
        let d = track.distance_to_centerline(state.x, state.y);
        dev_sum += d;
        if d > off_limit {
            failure = FailureReason::OffTrack;
            break;
        }
        let p = track.lap_progress(state.x, state.y)?;
        if prev_progress - p > 0.5 {
            if visited.iter().filter(|&&v| v).count() >= LAP_BINS_REQUIRED {
                laps_done += 1;
                if laps_done >= config.laps.max(1) {
                    failure = FailureReason::None;
                    break;
                }
            }
            visited = [false; LAP_BINS];
        }
        visited[bin(p)] = true;
        prev_progress = p;
    }

    let completed = failure == FailureReason::None;
    Ok(EpisodeMetrics {
        completed,
        lap_seconds: completed.then(|| state.time / config.laps.max(1) as f64),
        position_deviation_mae: if ticks > 0 {
            dev_sum / ticks as f64
        } else {
            0.0
        },
        average_speed: if state.time > 0.0 {
            path / state.time
        } else {
            0.0
        },
        failure_reason: failure,
    })
}

fn bin(p: f64) -> usize {
    ((p * LAP_BINS as f64) as usize).min(LAP_BINS - 1)
}

//! Driving agents: the PID line-following expert and the neural-brain adapter.

mod expert;
mod neural;

use serde::{Deserialize, Serialize};

pub use expert::{
    detect_line_error, expert_command, pid_step, ExpertConfig, ExpertPilot, PidState,
    MIN_LINE_PIXELS,
};
pub use neural::{neural_command, NeuralPilot, SequenceBuffer, SEQUENCE_LEN};

use crate::error::Result;
use crate::simworld::ImageFrame;

/// Linear (m/s) and angular (rad/s, positive = counter-clockwise) speed command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct DriveCommand {
    pub v: f64,
    pub w: f64,
}

/// Actuation limits, also the label normalization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandLimits {
    pub v_max: f64,
    pub w_max: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        CommandLimits {
            v_max: 20.0,
            w_max: 3.0,
        }
    }
}

impl DriveCommand {
    pub fn clamped(self, limits: CommandLimits) -> Self {
        DriveCommand {
            v: self.v.clamp(0.0, limits.v_max),
            w: self.w.clamp(-limits.w_max, limits.w_max),
        }
    }
}

/// Output of one control tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotStep {
    pub cmd: DriveCommand,
    /// Seconds the pilot has been without a visible line (always 0 for neural brains).
    pub line_lost_for: f64,
}

/// Anything that drives from camera frames.
pub trait Pilot {
    fn label(&self) -> String;
    /// Clears per-episode state.
    fn reset(&mut self);
    fn act(&mut self, frame: &ImageFrame, dt: f64) -> Result<PilotStep>;
}

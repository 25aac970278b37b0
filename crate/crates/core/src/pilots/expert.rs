use serde::{Deserialize, Serialize};

use super::{CommandLimits, DriveCommand, Pilot, PilotStep};
use crate::error::Result;
use crate::simworld::{ImageFrame, LineColor};

/// Fewer matching pixels than this means the line is lost.
pub const MIN_LINE_PIXELS: usize = 10;

/// Column centroid of `target`-colored pixels in the lower third of the image, as
/// `(centroid - W/2) / (W/2)`; positive means the line is right of centre.
pub fn detect_line_error(image: &ImageFrame, target: [u8; 3], tolerance: u8) -> Option<f64> {
    let w = image.width;
    let start = image.height - image.height / 3;
    let (mut sum, mut count) = (0.0, 0usize);
    for y in start..image.height {
        for x in 0..w {
            let p = image.pixel(x, y);
            if (0..3).all(|k| p[k].abs_diff(target[k]) <= tolerance) {
                sum += x as f64 + 0.5;
                count += 1;
            }
        }
    }
    if count < MIN_LINE_PIXELS {
        return None;
    }
    let half = w as f64 / 2.0;
    Some(((sum / count as f64 - half) / half).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub prev_error: Option<f64>,
    /// Anti-windup bound on `|integral|`.
    pub integral_clamp: f64,
    /// Output bound on `|w|`.
    pub w_max: f64,
}

impl PidState {
    pub fn new(kp: f64, ki: f64, kd: f64, integral_clamp: f64, w_max: f64) -> Self {
        PidState {
            kp,
            ki,
            kd,
            integral: 0.0,
            prev_error: None,
            integral_clamp,
            w_max,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }
}

/// `w = -(kp e + ki int(e) + kd de/dt)`, clamped. The derivative is zero on the first call.
pub fn pid_step(pid: &mut PidState, error: f64, dt: f64) -> f64 {
    pid.integral = (pid.integral + error * dt).clamp(-pid.integral_clamp, pid.integral_clamp);
    let deriv = pid.prev_error.map_or(0.0, |p| (error - p) / dt);
    pid.prev_error = Some(error);
    let u = pid.kp * error + pid.ki * pid.integral + pid.kd * deriv;
    (-u).clamp(-pid.w_max, pid.w_max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_clamp: f64,
    pub v_cruise: f64,
    pub v_min: f64,
    pub alpha: f64,
    /// Seconds without a visible line before the run is failed.
    pub t_lost: f64,
    /// Time constant of the speed decay towards `v_min` while the line is lost.
    pub lost_decay: f64,
    /// Per-channel color tolerance of the line filter.
    pub tolerance: u8,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            kp: 2.2,
            ki: 0.01,
            kd: 1.2,
            integral_clamp: 1.0,
            v_cruise: 10.0,
            v_min: 3.0,
            alpha: 0.6,
            t_lost: 2.0,
            lost_decay: 0.5,
            tolerance: 20,
        }
    }
}

impl ExpertConfig {
    pub fn speed(&self, error: f64) -> f64 {
        (self.v_cruise * (1.0 - self.alpha * error.abs())).max(self.v_min)
    }
}

/// The hand-written line follower. It sees only the rendered frame.
#[derive(Clone, Debug)]
pub struct ExpertPilot {
    pub config: ExpertConfig,
    pub limits: CommandLimits,
    pid: PidState,
    target: [u8; 3],
    last: DriveCommand,
    lost_for: f64,
}

impl ExpertPilot {
    /// `line` is the color the filter looks for; a line-less circuit still makes the expert
    /// search for red.
    pub fn new(config: ExpertConfig, limits: CommandLimits, line: LineColor) -> Self {
        let pid = PidState::new(
            config.kp,
            config.ki,
            config.kd,
            config.integral_clamp,
            limits.w_max,
        );
        let target = line.rgb().unwrap_or(crate::simworld::LINE_RED);
        ExpertPilot {
            config,
            limits,
            pid,
            target,
            last: DriveCommand::default(),
            lost_for: 0.0,
        }
    }

    pub fn pid(&self) -> &PidState {
        &self.pid
    }

    /// Seconds since the line was last seen.
    pub fn lost_for(&self) -> f64 {
        self.lost_for
    }

    pub fn command(&mut self, image: &ImageFrame, dt: f64) -> DriveCommand {
        let cmd = match detect_line_error(image, self.target, self.config.tolerance) {
            Some(e) => {
                self.lost_for = 0.0;
                let w = pid_step(&mut self.pid, e, dt);
                DriveCommand {
                    v: self.config.speed(e),
                    w,
                }
            }
            None => {
                self.lost_for += dt;
                let vm = self.config.v_min;
                let v = vm + (self.last.v - vm) * (-dt / self.config.lost_decay).exp();
                DriveCommand { v, w: self.last.w }
            }
        };
        self.last = cmd.clamped(self.limits);
        self.last
    }
}

/// One expert decision on a frame, see [`ExpertPilot::command`].
pub fn expert_command(expert: &mut ExpertPilot, image: &ImageFrame, dt: f64) -> DriveCommand {
    expert.command(image, dt)
}

impl Pilot for ExpertPilot {
    fn label(&self) -> String {
        "expert".into()
    }

    fn reset(&mut self) {
        self.pid.reset();
        self.last = DriveCommand::default();
        self.lost_for = 0.0;
    }

    fn act(&mut self, frame: &ImageFrame, dt: f64) -> Result<PilotStep> {
        let cmd = self.command(frame, dt);
        Ok(PilotStep {
            cmd,
            line_lost_for: self.lost_for,
        })
    }
}

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::pilots::DriveCommand;

/// Default control and render period, seconds.
pub const DT: f64 = 0.05;
/// Default first-order command lag, seconds.
pub const TAU: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct CarState {
    pub x: f64,
    pub y: f64,
    /// Radians in (-pi, pi].
    pub heading: f64,
    pub v: f64,
    pub w: f64,
    pub time: f64,
}

impl CarState {
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        CarState {
            x,
            y,
            heading: normalize_angle(heading),
            ..Default::default()
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Unicycle step. Commanded speeds pass through a first-order lag with time constant `tau`
/// (exact discretization, `tau = 0` applies them at once); the resulting speeds are held for
/// the step and the pose advances along the exact arc.
pub fn step_dynamics(state: &CarState, cmd: DriveCommand, dt: f64, tau: f64) -> CarState {
    let alpha = if tau > 0.0 {
        1.0 - (-dt / tau).exp()
    } else {
        1.0
    };
    let v = state.v + alpha * (cmd.v - state.v);
    let w = state.w + alpha * (cmd.w - state.w);
    let th = state.heading;
    let (x, y) = if (w * dt).abs() < 1e-12 {
        (state.x + v * th.cos() * dt, state.y + v * th.sin() * dt)
    } else {
        let th1 = th + w * dt;
        (
            state.x + v / w * (th1.sin() - th.sin()),
            state.y - v / w * (th1.cos() - th.cos()),
        )
    };
    CarState {
        x,
        y,
        heading: normalize_angle(th + w * dt),
        v,
        w,
        time: state.time + dt,
    }
}

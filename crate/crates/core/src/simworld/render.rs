use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::dynamics::CarState;
use super::image::ImageFrame;
use super::track::{Track, WALL_BAND};
use crate::error::{Error, Result};

pub const GRASS: [u8; 3] = [0, 140, 0];
pub const ROAD_GREY: [u8; 3] = [60, 60, 60];
pub const ROAD_WHITE: [u8; 3] = [230, 230, 230];
pub const LINE_RED: [u8; 3] = [230, 20, 20];
pub const LINE_WHITE: [u8; 3] = [255, 255, 255];
pub const WALL: [u8; 3] = [180, 30, 30];
pub const SKY: [u8; 3] = [60, 60, 235];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineColor {
    Red,
    White,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadColor {
    Grey,
    White,
}

impl LineColor {
    pub fn rgb(self) -> Option<[u8; 3]> {
        match self {
            LineColor::Red => Some(LINE_RED),
            LineColor::White => Some(LINE_WHITE),
            LineColor::None => None,
        }
    }
}

impl RoadColor {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            RoadColor::Grey => ROAD_GREY,
            RoadColor::White => ROAD_WHITE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrackVariation {
    pub line_color: LineColor,
    pub road_color: RoadColor,
    pub walls: bool,
}

impl Default for TrackVariation {
    fn default() -> Self {
        TrackVariation {
            line_color: LineColor::Red,
            road_color: RoadColor::Grey,
            walls: true,
        }
    }
}

impl TrackVariation {
    pub fn new(line_color: LineColor, road_color: RoadColor, walls: bool) -> Self {
        TrackVariation {
            line_color,
            road_color,
            walls,
        }
    }

    /// Short label such as `red/grey/walls`.
    pub fn label(&self) -> String {
        let line = match self.line_color {
            LineColor::Red => "red",
            LineColor::White => "white",
            LineColor::None => "none",
        };
        let road = match self.road_color {
            RoadColor::Grey => "grey",
            RoadColor::White => "white",
        };
        format!(
            "{line}/{road}/{}",
            if self.walls { "walls" } else { "no-walls" }
        )
    }
}

/// Forward camera rigidly mounted on the car.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Mount height above ground, meters.
    pub height: f64,
    /// Radians below horizontal.
    pub pitch: f64,
    /// Meters, positive to the right of the car.
    pub lateral_offset: f64,
    /// Radians, added to `pitch`.
    pub extra_pitch_down: f64,
    pub hfov: f64,
    /// (width, height) in pixels.
    pub resolution: (usize, usize),
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            height: 1.2,
            pitch: 0.25,
            lateral_offset: 0.0,
            extra_pitch_down: 0.0,
            hfov: 1.7,
            resolution: (160, 120),
        }
    }
}

impl CameraConfig {
    /// Default mounting at the 64x48 desk resolution.
    pub fn desk() -> Self {
        CameraConfig {
            resolution: (64, 48),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.pitch + self.extra_pitch_down;
        if !(p > 0.0 && p < FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "total camera pitch {p} outside (0, pi/2)"
            )));
        }
        if self.resolution.0 < 32 || self.resolution.1 < 24 {
            return Err(Error::InvalidArgument(format!(
                "resolution {:?} below 32x24",
                self.resolution
            )));
        }
        if !(self.height > 0.0 && self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(
                "camera height and hfov must be positive, hfov < pi".into(),
            ));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        (self.resolution.0 as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    fn total_pitch(&self) -> f64 {
        self.pitch + self.extra_pitch_down
    }

    /// First pixel row whose centre looks below the horizon.
    pub fn horizon_row(&self) -> usize {
        let h = self.resolution.1 as f64;
        let r = (h / 2.0 - 0.5 - self.focal() * self.total_pitch().tan()).floor() + 1.0;
        (r.max(0.0) as usize).min(self.resolution.1 - 1)
    }

    /// Ground intersection of the ray through the centre of pixel (u, v), in world meters.
    pub fn ground_point(&self, state: &CarState, u: usize, v: usize) -> Option<[f64; 2]> {
        let (w, h) = (self.resolution.0 as f64, self.resolution.1 as f64);
        let f = self.focal();
        let a = (u as f64 + 0.5 - w / 2.0) / f;
        let b = (v as f64 + 0.5 - h / 2.0) / f;
        let p = self.total_pitch();
        let down = p.sin() + b * p.cos();
        if down <= 0.0 {
            return None;
        }
        let t = self.height / down;
        let fwd = t * (p.cos() - b * p.sin());
        let right = t * a;
        let (s, c) = state.heading.sin_cos();
        let cx = state.x + self.lateral_offset * s;
        let cy = state.y - self.lateral_offset * c;
        Some([cx + fwd * c + right * s, cy + fwd * s - right * c])
    }
}

/// Pinhole ground-plane rendering of the circuit as seen from `state`.
pub fn render(
    track: &Track,
    variation: &TrackVariation,
    state: &CarState,
    camera: &CameraConfig,
) -> ImageFrame {
    let (w, h) = camera.resolution;
    let horizon = camera.horizon_row();
    let mut rgb = Vec::with_capacity(3 * w * h);
    let half_road = track.road_width() / 2.0;
    let half_line = track.spec().line_width / 2.0;
    let reach = half_road + if variation.walls { WALL_BAND } else { 0.0 };
    let line = variation.line_color.rgb();
    let road = variation.road_color.rgb();
    for v in 0..h {
        for u in 0..w {
            let color = if v < horizon {
                SKY
            } else {
                match camera.ground_point(state, u, v) {
                    None => SKY,
                    Some([x, y]) => match track.nearest_within(x, y, reach) {
                        None => GRASS,
                        Some(n) => match line {
                            Some(lc) if n.distance <= half_line => lc,
                            _ if n.distance <= half_road => road,
                            _ => WALL,
                        },
                    },
                }
            };
            rgb.extend_from_slice(&color);
        }
    }
    ImageFrame {
        width: w,
        height: h,
        horizon_row: horizon,
        rgb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_matches_ray_sign() {
        let cam = CameraConfig::default();
        let s = CarState::default();
        let hr = cam.horizon_row();
        assert!(cam.ground_point(&s, 0, hr).is_some());
        assert!(hr == 0 || cam.ground_point(&s, 0, hr - 1).is_none());
        let desk = CameraConfig::desk();
        assert_eq!(desk.horizon_row(), 17);
    }

    #[test]
    fn ground_point_follows_depression_angle() {
        // car at the origin facing +x; the ray through row v dips p + atan(b) below horizontal
        let cam = CameraConfig {
            resolution: (64, 48),
            ..Default::default()
        };
        let s = CarState::default();
        let f = cam.focal();
        for v in [cam.horizon_row(), 24, 30, 47] {
            let b = (v as f64 + 0.5 - 24.0) / f;
            let expect = cam.height / (cam.pitch + b.atan()).tan();
            // columns 31 and 32 straddle the optical axis
            let l = cam.ground_point(&s, 31, v).unwrap();
            let r = cam.ground_point(&s, 32, v).unwrap();
            assert!(
                ((l[0] + r[0]) / 2.0 - expect).abs() < 1e-9 * expect.max(1.0),
                "row {v}"
            );
            assert!((l[1] + r[1]).abs() < 1e-12);
            // one row is a line across the heading, lateral spread linear in the column
            let a = cam.ground_point(&s, 0, v).unwrap();
            let z = cam.ground_point(&s, 63, v).unwrap();
            assert!((a[0] - expect).abs() < 1e-9 * expect.max(1.0));
            assert!(a[1] > 0.0 && z[1] < 0.0 && (a[1] + z[1]).abs() < 1e-9);
            assert!(((a[1] - l[1]) / 31.0 - (l[1] - r[1])).abs() < 1e-9);
        }
    }

    #[test]
    fn pitch_bounds() {
        let mut c = CameraConfig {
            extra_pitch_down: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.extra_pitch_down = 0.15;
        assert!(c.validate().is_ok());
        c.resolution = (31, 24);
        assert!(c.validate().is_err());
    }
}

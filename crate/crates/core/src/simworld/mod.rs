//! Flat-world circuits, unicycle dynamics, ground-plane camera and image noise.

mod circuits;
mod dynamics;
mod image;
mod noise;
mod render;
mod track;

pub use circuits::{
    builtin_circuit, builtin_circuits, BuiltinCircuit, CircuitRole, BUILTIN_NAMES, LINE_WIDTH,
    ROAD_WIDTH,
};
pub use dynamics::{normalize_angle, step_dynamics, CarState, DT, TAU};
pub use image::ImageFrame;
pub use noise::{salt_pepper, salt_pepper_with};
pub use render::{
    render, CameraConfig, LineColor, RoadColor, TrackVariation, GRASS, LINE_RED, LINE_WHITE,
    ROAD_GREY, ROAD_WHITE, SKY, WALL,
};
pub use track::{Nearest, Track, TrackSpec, WALL_BAND};

/// Off-track margin beyond the road edge, meters.
pub const OFF_TRACK_MARGIN: f64 = 1.0;

/// Distance beyond which an episode is failed as off-track.
pub fn off_track_threshold(track: &Track) -> f64 {
    track.road_width() / 2.0 + OFF_TRACK_MARGIN
}

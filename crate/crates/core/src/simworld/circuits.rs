//! Procedural circuits. Each is a turtle path of straights and arcs; where a
//! shape does not close by symmetry, two straights are marked free and their
//! lengths are solved so the path returns to its origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::track::TrackSpec;
use crate::error::{Error, Result};

pub const ROAD_WIDTH: f64 = 10.0;
pub const LINE_WIDTH: f64 = 0.5;
/// Target waypoint spacing, meters.
const SPACING: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitRole {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinCircuit {
    /// 1-based.
    pub id: u32,
    pub role: CircuitRole,
    pub spec: TrackSpec,
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    Straight(f64),
    /// Radius, signed turn in degrees (positive = left).
    Arc(f64, f64),
    /// Extra length on top of the given base, solved for closure.
    Free(f64),
}

use Piece::{Arc, Free, Straight};

fn stadium() -> Vec<Piece> {
    vec![
        Straight(120.0),
        Arc(40.0, 180.0),
        Straight(120.0),
        Arc(40.0, 180.0),
    ]
}

fn rounded_rectangle() -> Vec<Piece> {
    let mut v = Vec::new();
    for _ in 0..2 {
        v.extend([
            Straight(100.0),
            Arc(22.0, 90.0),
            Straight(60.0),
            Arc(22.0, 90.0),
        ]);
    }
    v
}

fn s_curve() -> Vec<Piece> {
    vec![
        Free(20.0),
        Arc(30.0, 50.0),
        Arc(30.0, -50.0),
        Straight(40.0),
        Arc(45.0, 180.0),
        Arc(30.0, 50.0),
        Arc(30.0, -50.0),
        Straight(80.0),
        Arc(35.0, 90.0),
        Free(10.0),
        Arc(35.0, 90.0),
    ]
}

fn montmelo_like() -> Vec<Piece> {
    vec![
        Free(60.0),
        Arc(15.0, 180.0),
        Straight(120.0),
        Arc(25.0, -60.0),
        Arc(25.0, 60.0),
        Straight(30.0),
        Arc(20.0, 90.0),
        Free(5.0),
        Arc(20.0, 90.0),
    ]
}

fn monaco_like() -> Vec<Piece> {
    vec![
        Free(20.0),
        Arc(12.0, 90.0),
        Straight(30.0),
        Arc(12.0, 90.0),
        Straight(25.0),
        Arc(10.0, -90.0),
        Straight(20.0),
        Arc(10.0, 90.0),
        Straight(30.0),
        Arc(12.0, 90.0),
        Free(10.0),
        Arc(12.0, 90.0),
    ]
}

fn extreme() -> Vec<Piece> {
    vec![
        Free(0.0),
        Arc(10.0, 180.0),
        Straight(20.0),
        Arc(8.0, -180.0),
        Straight(20.0),
        Arc(10.0, 180.0),
        Straight(45.0),
        Arc(12.0, 90.0),
        Free(0.0),
        Arc(12.0, 90.0),
    ]
}

/// Walks the pieces with the given free lengths; returns sampled points (last point = end pose).
fn walk(pieces: &[Piece], free: &[f64], spacing: f64) -> (Vec<[f64; 2]>, [f64; 2], f64) {
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    let mut pts = vec![[x, y]];
    let mut k = 0;
    for p in pieces {
        match *p {
            Straight(_) | Free(_) => {
                let len = match *p {
                    Straight(l) => l,
                    Free(base) => {
                        k += 1;
                        base + free[k - 1]
                    }
                    Arc(..) => unreachable!(),
                };
                let n = (len / spacing).ceil().max(1.0) as usize;
                let (x0, y0) = (x, y);
                for i in 1..=n {
                    let s = len * i as f64 / n as f64;
                    pts.push([x0 + s * h.cos(), y0 + s * h.sin()]);
                }
                x = x0 + len * h.cos();
                y = y0 + len * h.sin();
            }
            Arc(r, deg) => {
                let turn = deg.to_radians();
                let side = turn.signum();
                // centre to the left for left turns
                let (cx, cy) = (x - side * r * h.sin(), y + side * r * h.cos());
                let n = (r * turn.abs() / spacing).ceil().max(1.0) as usize;
                let h0 = h;
                for i in 1..=n {
                    let a = h0 + turn * i as f64 / n as f64;
                    pts.push([cx + side * r * a.sin(), cy - side * r * a.cos()]);
                }
                h = h0 + turn;
                x = cx + side * r * h.sin();
                y = cy - side * r * h.cos();
            }
        }
    }
    (pts, [x, y], h)
}

fn free_directions(pieces: &[Piece]) -> Vec<f64> {
    let mut h = 0.0;
    let mut dirs = Vec::new();
    for p in pieces {
        match *p {
            Arc(_, deg) => h += deg.to_radians(),
            Free(_) => dirs.push(h),
            Straight(_) => {}
        }
    }
    dirs
}

fn build(name: &str, pieces: &[Piece]) -> Result<TrackSpec> {
    let dirs = free_directions(pieces);
    let free = match dirs.len() {
        0 => vec![],
        2 => {
            let (_, end, _) = walk(pieces, &[0.0, 0.0], SPACING);
            let (u, v) = (
                [dirs[0].cos(), dirs[0].sin()],
                [dirs[1].cos(), dirs[1].sin()],
            );
            let det = u[0] * v[1] - u[1] * v[0];
            if det.abs() < 1e-9 {
                return Err(Error::InvalidTrack {
                    name: name.into(),
                    reason: "free straights are parallel".into(),
                });
            }
            let (rx, ry) = (-end[0], -end[1]);
            let a = (rx * v[1] - ry * v[0]) / det;
            let b = (u[0] * ry - u[1] * rx) / det;
            if a < 0.0 || b < 0.0 {
                return Err(Error::InvalidTrack {
                    name: name.into(),
                    reason: format!("closure needs negative straights ({a:.2}, {b:.2})"),
                });
            }
            vec![a, b]
        }
        k => unreachable!("{k} free straights"),
    };
    let (mut pts, end, h) = walk(pieces, &free, SPACING);
    if end[0].hypot(end[1]) > 1e-6 || ((h / (2.0 * PI)).round() * 2.0 * PI - h).abs() > 1e-9 {
        return Err(Error::InvalidTrack {
            name: name.into(),
            reason: format!("path does not close (end {end:?})"),
        });
    }
    pts.pop();
    let spec = TrackSpec {
        name: name.into(),
        centerline: pts,
        road_width: ROAD_WIDTH,
        line_width: LINE_WIDTH,
        start_index: 0,
    };
    spec.validate()?;
    Ok(spec)
}

fn many_curves() -> TrackSpec {
    // five-lobed polar loop, r = R (1 + a cos 5t)
    let (r0, a) = (70.0, 0.1);
    let n = 240;
    let centerline = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            let r = r0 * (1.0 + a * (5.0 * t).cos());
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    TrackSpec {
        name: "many_curves".into(),
        centerline,
        road_width: ROAD_WIDTH,
        line_width: LINE_WIDTH,
        // start mid-way along a gentle stretch rather than on a lobe apex
        start_index: 12,
    }
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "simple_oval",
    "rounded_rectangle",
    "s_curve",
    "many_curves",
    "montmelo_like",
    "monaco_like",
    "extreme",
];

/// The seven builtin circuits in difficulty order; 1-4 are TRAIN, 5-7 TEST.
pub fn builtin_circuits() -> Vec<BuiltinCircuit> {
    let specs = [
        build("simple_oval", &stadium()),
        build("rounded_rectangle", &rounded_rectangle()),
        build("s_curve", &s_curve()),
        Ok(many_curves()),
        build("montmelo_like", &montmelo_like()),
        build("monaco_like", &monaco_like()),
        build("extreme", &extreme()),
    ];
    specs
        .into_iter()
        .enumerate()
        .map(|(i, s)| BuiltinCircuit {
            id: i as u32 + 1,
            role: if i < 4 {
                CircuitRole::Train
            } else {
                CircuitRole::Test
            },
            spec: s.expect("builtin circuit geometry is valid"),
        })
        .collect()
}

/// Looks a builtin up by name or 1-based number.
pub fn builtin_circuit(key: &str) -> Result<BuiltinCircuit> {
    let idx = match key.parse::<usize>() {
        Ok(n) if (1..=7).contains(&n) => n - 1,
        _ => BUILTIN_NAMES
            .iter()
            .position(|&n| n == key)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown circuit `{key}` (known: {})",
                    BUILTIN_NAMES.join(", ")
                ))
            })?,
    };
    Ok(builtin_circuits().swap_remove(idx))
}

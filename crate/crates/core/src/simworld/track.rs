use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the painted wall band beyond the road edge, meters.
pub const WALL_BAND: f64 = 1.5;

/// Closed-centerline circuit as stored in circuit files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    /// Waypoints in meters; the closing segment back to the first point is implicit.
    pub centerline: Vec<[f64; 2]>,
    pub road_width: f64,
    pub line_width: f64,
    pub start_index: usize,
}

impl TrackSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidTrack {
            name: self.name.clone(),
            reason,
        };
        let n = self.centerline.len();
        if n < 32 {
            return Err(bad(format!("{n} waypoints, at least 32 required")));
        }
        if self.centerline.iter().flatten().any(|c| !c.is_finite()) {
            return Err(bad("non-finite waypoint".into()));
        }
        if !(self.line_width > 0.0 && self.road_width > 4.0 * self.line_width) {
            return Err(bad(format!(
                "road width {} must exceed 4 x line width {}",
                self.road_width, self.line_width
            )));
        }
        if self.start_index >= n {
            return Err(bad(format!(
                "start index {} outside {n} waypoints",
                self.start_index
            )));
        }
        if self.centerline[0] == self.centerline[n - 1] {
            return Err(bad(
                "first and last waypoint coincide (closure is implicit)".into(),
            ));
        }
        for i in 0..n {
            let d = dist(self.centerline[i], self.centerline[(i + 1) % n]);
            if d == 0.0 || d >= self.road_width {
                return Err(bad(format!(
                    "waypoints {i} and {} are {d:.3} m apart",
                    (i + 1) % n
                )));
            }
        }
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (self.centerline[i], self.centerline[(i + 1) % n]);
                let (c, d) = (self.centerline[j], self.centerline[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(bad(format!("segments {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrackSpec> {
        let spec: TrackSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrackSpec> {
        TrackSpec::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Nearest point on the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub segment: usize,
    /// Fraction along the segment.
    pub t: f64,
    pub distance: f64,
}

/// Validated circuit with arc-length table and a uniform-grid segment index.
#[derive(Clone, Debug)]
pub struct Track {
    spec: TrackSpec,
    /// Arc length at each waypoint; `cum[n]` is the full length.
    cum: Vec<f64>,
    grid: Grid,
}

#[derive(Clone, Debug)]
struct Grid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl Track {
    pub fn new(spec: TrackSpec) -> Result<Track> {
        spec.validate()?;
        let n = spec.centerline.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let d = dist(spec.centerline[i], spec.centerline[(i + 1) % n]);
            cum.push(cum[i] + d);
        }
        let cell = (spec.road_width / 2.0 + WALL_BAND + 0.5).max(4.0);
        let grid = Grid::build(&spec.centerline, cell);
        Ok(Track { spec, cum, grid })
    }

    pub fn spec(&self) -> &TrackSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn road_width(&self) -> f64 {
        self.spec.road_width
    }

    pub fn length(&self) -> f64 {
        self.cum[self.spec.centerline.len()]
    }

    fn segment(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        let c = &self.spec.centerline;
        (c[i], c[(i + 1) % c.len()])
    }

    /// Largest radius for which [`Track::nearest_within`] is exact.
    pub fn index_radius(&self) -> f64 {
        self.grid.cell
    }

    /// Nearest centerline point if one lies within `radius` (clamped to the index radius).
    pub fn nearest_within(&self, x: f64, y: f64, radius: f64) -> Option<Nearest> {
        let r = radius.min(self.grid.cell);
        let best = self.grid_search(x, y)?;
        (best.distance <= r).then_some(best)
    }

    fn grid_search(&self, x: f64, y: f64) -> Option<Nearest> {
        let g = &self.grid;
        let cx = ((x - g.origin[0]) / g.cell).floor();
        let cy = ((y - g.origin[1]) / g.cell).floor();
        let mut best: Option<Nearest> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ix, iy) = (cx + dx as f64, cy + dy as f64);
                if ix < 0.0 || iy < 0.0 || ix >= g.nx as f64 || iy >= g.ny as f64 {
                    continue;
                }
                for &s in &g.cells[iy as usize * g.nx + ix as usize] {
                    let (a, b) = self.segment(s as usize);
                    let (t, d) = point_segment(a, b, [x, y]);
                    if best.is_none_or(|n| {
                        d < n.distance || (d == n.distance && (s as usize) < n.segment)
                    }) {
                        best = Some(Nearest {
                            segment: s as usize,
                            t,
                            distance: d,
                        });
                    }
                }
            }
        }
        best
    }

    pub fn nearest(&self, x: f64, y: f64) -> Nearest {
        if let Some(n) = self.nearest_within(x, y, self.grid.cell) {
            return n;
        }
        self.nearest_brute(x, y)
    }

    fn nearest_brute(&self, x: f64, y: f64) -> Nearest {
        let mut best = Nearest {
            segment: 0,
            t: 0.0,
            distance: f64::INFINITY,
        };
        for s in 0..self.spec.centerline.len() {
            let (a, b) = self.segment(s);
            let (t, d) = point_segment(a, b, [x, y]);
            if d < best.distance {
                best = Nearest {
                    segment: s,
                    t,
                    distance: d,
                };
            }
        }
        best
    }

    pub fn distance_to_centerline(&self, x: f64, y: f64) -> f64 {
        self.nearest(x, y).distance
    }

    /// Arc length of the nearest centerline point, measured from the start waypoint, as a fraction.
    pub fn lap_progress(&self, x: f64, y: f64) -> Result<f64> {
        let n = self.nearest(x, y);
        if n.distance > self.spec.road_width {
            return Err(Error::OffTrack {
                distance: n.distance,
            });
        }
        let seg_len = self.cum[n.segment + 1] - self.cum[n.segment];
        let arc = self.cum[n.segment] + n.t * seg_len - self.cum[self.spec.start_index];
        let l = self.length();
        let f = arc.rem_euclid(l) / l;
        Ok(if f >= 1.0 { 0.0 } else { f })
    }

    /// Pose of the start waypoint: position and heading along the direction of travel.
    pub fn start_pose(&self) -> ([f64; 2], f64) {
        let (a, b) = self.segment(self.spec.start_index);
        (a, (b[1] - a[1]).atan2(b[0] - a[0]))
    }

    /// Point and heading at a given arc length from the start waypoint.
    pub fn point_at(&self, arc: f64) -> ([f64; 2], f64) {
        let l = self.length();
        let s = (arc + self.cum[self.spec.start_index]).rem_euclid(l);
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.spec.centerline.len() - 1),
            Err(i) => i - 1,
        };
        let (a, b) = self.segment(i);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        (
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            (b[1] - a[1]).atan2(b[0] - a[0]),
        )
    }
}

impl Grid {
    fn build(pts: &[[f64; 2]], cell: f64) -> Grid {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let origin = [lo[0] - cell, lo[1] - cell];
        let nx = ((hi[0] - origin[0]) / cell).floor() as usize + 2;
        let ny = ((hi[1] - origin[1]) / cell).floor() as usize + 2;
        let mut cells = vec![Vec::new(); nx * ny];
        let n = pts.len();
        for s in 0..n {
            let (a, b) = (pts[s], pts[(s + 1) % n]);
            let x0 = ((a[0].min(b[0]) - origin[0]) / cell).floor() as usize;
            let x1 = ((a[0].max(b[0]) - origin[0]) / cell).floor() as usize;
            let y0 = ((a[1].min(b[1]) - origin[1]) / cell).floor() as usize;
            let y1 = ((a[1].max(b[1]) - origin[1]) / cell).floor() as usize;
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    cells[iy * nx + ix].push(s as u32);
                }
            }
        }
        Grid {
            origin,
            cell,
            nx,
            ny,
            cells,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Returns (fraction along segment, distance).
pub(crate) fn point_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * dx, a[1] + t * dy];
    (t, dist(p, q))
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn circle(n: usize, r: f64) -> TrackSpec {
        let centerline = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        TrackSpec {
            name: "circle".into(),
            centerline,
            road_width: 10.0,
            line_width: 0.5,
            start_index: 0,
        }
    }

    #[test]
    fn circle_progress() {
        let t = Track::new(circle(200, 50.0)).unwrap();
        assert_eq!(t.lap_progress(50.0, 0.0).unwrap(), 0.0);
        assert!((t.lap_progress(-50.0, 0.0).unwrap() - 0.5).abs() < 0.01);
        assert!((t.lap_progress(0.0, 48.0).unwrap() - 0.25).abs() < 0.01);
        assert!(matches!(
            t.lap_progress(0.0, 0.0),
            Err(Error::OffTrack { .. })
        ));
    }

    #[test]
    fn distance_on_waypoint_and_offsets() {
        let t = Track::new(circle(200, 50.0)).unwrap();
        let p = t.spec().centerline[17];
        assert!(t.distance_to_centerline(p[0], p[1]) < 1e-12);
        // far away point goes through the brute-force path
        assert!((t.distance_to_centerline(500.0, 0.0) - 450.0).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = circle(40, 30.0);
        s.line_width = 3.0;
        assert!(s.validate().is_err());
        let mut s = circle(40, 30.0);
        s.centerline.truncate(20);
        assert!(s.validate().is_err());
        let mut s = circle(40, 30.0);
        s.centerline.push(s.centerline[0]);
        assert!(s.validate().is_err());
        let mut s = circle(40, 30.0);
        s.centerline.swap(5, 20);
        assert!(s.validate().is_err());
    }

    #[test]
    fn figure_eight_is_not_simple() {
        let centerline: Vec<[f64; 2]> = (0..100)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 100.0;
                [40.0 * a.sin(), 20.0 * (2.0 * a).sin()]
            })
            .collect();
        let s = TrackSpec {
            name: "eight".into(),
            centerline,
            road_width: 10.0,
            line_width: 0.5,
            start_index: 0,
        };
        assert!(s.validate().unwrap_err().to_string().contains("intersect"));
    }

    #[test]
    fn point_at_walks_the_centerline() {
        let t = Track::new(circle(200, 50.0)).unwrap();
        let (p, h) = t.point_at(t.length() / 4.0);
        assert!(p[0].abs() < 0.1 && (p[1] - 50.0).abs() < 0.1);
        assert!((h - std::f64::consts::PI).abs() < 0.05);
        let (p0, _) = t.point_at(0.0);
        assert_eq!(p0, [50.0, 0.0]);
    }
}

//! Synthetic 2D worlds, LIDAR simulation and scan files.

mod fixtures;
pub mod io;
mod scan;

pub use fixtures::{trajectory, WorldKind};
pub use scan::{generate_scan, sample_beam_points, sample_free_points, Beam, LabeledPoint, Scan};

use std::f64::consts::TAU;

use crate::{PotError, Result, Vec2};

/// A wall segment in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        if (b - a).norm_squared() == 0.0 {
            return Err(PotError::InvalidArgument(format!(
                "zero-length segment at ({}, {})",
                a.x, a.y
            )));
        }
        Ok(Self { a, b })
    }

    /// Distance along the ray `origin + t * dir` (unit `dir`) to this segment, if hit.
    fn intersect(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = cross(dir, e);
        if denom.abs() < 1e-12 {
            return None;
        }
        let w = self.a - origin;
        let t = cross(w, e) / denom;
        let s = cross(w, dir) / denom;
        if t > 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            Some(t)
        } else {
            None
        }
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec2::repeat(f64::INFINITY),
            max: Vec2::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Vec2) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.y >= self.min.y && p.x <= self.max.x && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn padded(&self, margin: f64) -> Self {
        Self {
            min: self.min - Vec2::repeat(margin),
            max: self.max + Vec2::repeat(margin),
        }
    }
}

/// A set of wall segments.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    segments: Vec<Segment>,
    bounds: Bounds,
}

impl World {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut bounds = Bounds::empty();
        for s in &segments {
            bounds.include(s.a);
            bounds.include(s.b);
        }
        if segments.is_empty() {
            bounds = Bounds::new(Vec2::zeros(), Vec2::zeros());
        }
        Self { segments, bounds }
    }

    /// Builds a world from a list of closed or open polylines.
    pub fn from_polylines(lines: &[Vec<Vec2>]) -> Result<Self> {
        let mut segments = Vec::new();
        for line in lines {
            for w in line.windows(2) {
                segments.push(Segment::new(w[0], w[1])?);
            }
        }
        Ok(Self::new(segments))
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Nearest wall along a ray. Returns `(max_range, false)` on a miss.
    pub fn cast_ray(&self, origin: Vec2, angle: f64, max_range: f64) -> (f64, bool) {
        let dir = Vec2::new(angle.cos(), angle.sin());
        let nearest = self
            .segments
            .iter()
            .filter_map(|s| s.intersect(origin, dir))
            .fold(f64::INFINITY, f64::min);
        if nearest <= max_range {
            (nearest, true)
        } else {
            (max_range, false)
        }
    }
}

/// Sensor pose. Heading is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

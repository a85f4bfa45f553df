use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{Pose2, World};
use crate::rng;
use crate::Vec2;

/// Smallest range a noisy hit is clamped to.
const MIN_RANGE: f64 = 0.01;

/// One LIDAR return. `angle` is relative to the sensor heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub angle: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub id: String,
    pub pose: Pose2,
    pub beams: Vec<Beam>,
    pub max_range: f64,
}

impl Scan {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// World-frame endpoint of beam `i`.
    pub fn endpoint(&self, i: usize) -> Vec2 {
        let b = &self.beams[i];
        let a = self.pose.heading + b.angle;
        self.pose.position() + b.range * Vec2::new(a.cos(), a.sin())
    }

    /// Copy of this scan restricted to the given beam indices.
    pub fn select_beams(&self, indices: &[usize]) -> Scan {
        Scan {
            id: self.id.clone(),
            pose: self.pose,
            beams: indices.iter().map(|&i| self.beams[i]).collect(),
            max_range: self.max_range,
        }
    }
}

/// A spatial sample with its occupancy label (1 occupied, 0 free).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Vec2,
    pub label: u8,
}

impl LabeledPoint {
    pub fn hit(position: Vec2) -> Self {
        Self { position, label: 1 }
    }

    pub fn free(position: Vec2) -> Self {
        Self { position, label: 0 }
    }

    pub fn is_hit(&self) -> bool {
        self.label == 1
    }
}

/// Simulates a 360° scan with `n_beams` evenly spaced beams.
///
/// Gaussian range noise is applied to hits only and clamped to
/// `[0.01, max_range]`.
pub fn generate_scan(
    world: &World,
    pose: Pose2,
    n_beams: usize,
    max_range: f64,
    range_noise_sd: f64,
    seed: u64,
) -> Scan {
    assert!(n_beams >= 1, "n_beams must be at least 1");
    assert!(max_range > 0.0, "max_range must be positive");
    let mut rng = rng::rng(seed);
    let noise = (range_noise_sd > 0.0).then(|| Normal::new(0.0, range_noise_sd).expect("finite sd"));
    let beams = (0..n_beams)
        .map(|k| {
            let angle = TAU * k as f64 / n_beams as f64;
            let (range, hit) = world.cast_ray(pose.position(), pose.heading + angle, max_range);
            let range = match (&noise, hit) {
                (Some(n), true) => (range + n.sample(&mut rng)).clamp(MIN_RANGE, max_range),
                _ => range,
            };
            Beam { angle, range, hit }
        })
        .collect();
    Scan {
        id: "0".to_owned(),
        pose,
        beams,
        max_range,
    }
}

/// Labeled points of a single beam: the endpoint (if it is a hit) followed by
/// `k_per_beam` free samples strictly between the sensor and the endpoint.
///
/// Each beam draws from its own seeded stream, so the points of a beam do not
/// depend on which other beams are processed.
pub fn sample_beam_points(scan: &Scan, beam: usize, k_per_beam: usize, seed: u64) -> Vec<LabeledPoint> {
    let b = &scan.beams[beam];
    let origin = scan.pose.position();
    let a = scan.pose.heading + b.angle;
    let dir = Vec2::new(a.cos(), a.sin());
    let mut rng = rng::rng(rng::derive(seed, beam as u64));
    let mut out = Vec::with_capacity(k_per_beam + 1);
    if b.hit {
        out.push(LabeledPoint::hit(origin + b.range * dir));
    }
    for _ in 0..k_per_beam {
        let mut u: f64 = rng.random();
        while u == 0.0 {
            u = rng.random();
        }
        out.push(LabeledPoint::free(origin + (u * b.range) * dir));
    }
    out
}

/// Labeled points of every beam in order.
pub fn sample_free_points(scan: &Scan, k_per_beam: usize, seed: u64) -> Vec<LabeledPoint> {
    (0..scan.beams.len())
        .flat_map(|i| sample_beam_points(scan, i, k_per_beam, seed))
        .collect()
}

//! Bundled worlds and sensor trajectories.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use super::{Pose2, World};
use crate::{PotError, Vec2};

/// Named fixture worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldKind {
    /// 10 m square room centered at the origin.
    Square,
    /// 270° arc of radius 5 m, open towards +x.
    Arc,
    /// 40 m long, 4 m wide corridor.
    Corridor,
    /// 60 m × 60 m town with a 3 × 3 grid of irregular blocks.
    TownA,
    /// 70 m × 50 m town with rotated buildings and a plaza.
    TownB,
}

impl WorldKind {
    pub const ALL: [WorldKind; 5] = [Self::Square, Self::Arc, Self::Corridor, Self::TownA, Self::TownB];

    pub fn name(self) -> &'static str {
        match self {
            Self::Square => "square",
            Self::Arc => "arc",
            Self::Corridor => "corridor",
            Self::TownA => "town-a",
            Self::TownB => "town-b",
        }
    }

    pub fn build(self) -> World {
        let lines = match self {
            Self::Square => vec![rect(-5.0, -5.0, 5.0, 5.0)],
            Self::Arc => vec![arc(Vec2::zeros(), 5.0, PI / 4.0, 7.0 * PI / 4.0, 36)],
            Self::Corridor => vec![
                vec![Vec2::new(-20.0, -2.0), Vec2::new(20.0, -2.0), Vec2::new(20.0, 2.0), Vec2::new(-20.0, 2.0)],
                vec![Vec2::new(-20.0, 2.0), Vec2::new(-20.0, -2.0)],
            ],
            Self::TownA => town_a(),
            Self::TownB => town_b(),
        };
        World::from_polylines(&lines).expect("fixture segments have nonzero length")
    }

    /// Waypoints of a route through the free space of the world.
    pub fn route(self) -> Vec<Vec2> {
        let p = |x: f64, y: f64| Vec2::new(x, y);
        match self {
            Self::Square => vec![p(-3.0, -3.0), p(3.0, -3.0), p(3.0, 3.0), p(-3.0, 3.0), p(-3.0, -2.0)],
            Self::Arc => vec![p(-2.5, -1.5), p(-2.5, 1.5), p(0.5, 1.5), p(0.5, -1.5), p(-2.0, -1.5)],
            Self::Corridor => vec![p(-18.0, 0.0), p(18.0, 0.0)],
            Self::TownA => vec![
                p(3.0, 3.0),
                p(57.0, 3.0),
                p(57.0, 57.0),
                p(3.0, 57.0),
                p(3.0, 21.0),
                p(39.0, 21.0),
                p(39.0, 39.0),
                p(21.0, 39.0),
                p(21.0, 3.0),
            ],
            Self::TownB => vec![
                p(4.0, 4.0),
                p(66.0, 4.0),
                p(66.0, 46.0),
                p(4.0, 46.0),
                p(4.0, 25.0),
                p(66.0, 25.0),
            ],
        }
    }
}

impl fmt::Display for WorldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorldKind {
    type Err = PotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PotError::InvalidArgument(format!("unknown world '{s}'")))
    }
}

/// `n` poses spaced `step` meters apart along a polyline route, facing the
/// direction of travel. The route is traversed back and forth if it is too short.
pub fn trajectory(route: &[Vec2], n: usize, step: f64) -> Vec<Pose2> {
    assert!(route.len() >= 2 && step > 0.0);
    let mut legs: Vec<(Vec2, Vec2)> = route.windows(2).map(|w| (w[0], w[1])).collect();
    let back: Vec<(Vec2, Vec2)> = legs.iter().rev().map(|&(a, b)| (b, a)).collect();
    legs.extend(back);
    let total: f64 = legs.iter().map(|(a, b)| (b - a).norm()).sum();
    (0..n)
        .map(|i| {
            let mut s = (i as f64 * step) % total;
            for &(a, b) in &legs {
                let len = (b - a).norm();
                if s <= len {
                    let d = (b - a) / len;
                    let p = a + s * d;
                    return Pose2::new(p.x, p.y, d.y.atan2(d.x));
                }
                s -= len;
            }
            let (a, b) = legs[legs.len() - 1];
            let d = b - a;
            Pose2::new(b.x, b.y, d.y.atan2(d.x))
        })
        .collect()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
    vec![
        Vec2::new(x0, y0),
        Vec2::new(x1, y0),
        Vec2::new(x1, y1),
        Vec2::new(x0, y1),
        Vec2::new(x0, y0),
    ]
}

fn polygon(points: &[(f64, f64)]) -> Vec<Vec2> {
    let mut v: Vec<Vec2> = points.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
    v.push(v[0]);
    v
}

fn arc(center: Vec2, radius: f64, from: f64, to: f64, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            center + radius * Vec2::new(a.cos(), a.sin())
        })
        .collect()
}

/// Rectangle of size `w × h` centered at `(cx, cy)` and rotated by `angle`.
fn rotated_rect(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Vec<Vec2> {
    let (s, c) = angle.sin_cos();
    let corners = [(-w, -h), (w, -h), (w, h), (-w, h), (-w, -h)];
    corners
        .iter()
        .map(|&(dx, dy)| {
            let (dx, dy) = (dx / 2.0, dy / 2.0);
            Vec2::new(cx + c * dx - s * dy, cy + s * dx + c * dy)
        })
        .collect()
}

// Streets are 6 m wide with centerlines at 3, 21, 39 and 57 on both axes.
fn town_a() -> Vec<Vec<Vec2>> {
    vec![
        rect(0.0, 0.0, 60.0, 60.0),
        // row 0
        rect(6.0, 6.0, 18.0, 18.0),
        rect(24.0, 6.0, 36.0, 11.0),
        rect(24.0, 13.0, 36.0, 18.0),
        polygon(&[(42.0, 6.0), (54.0, 6.0), (54.0, 10.0), (47.0, 10.0), (47.0, 18.0), (42.0, 18.0)]),
        // row 1
        polygon(&[(6.0, 24.0), (18.0, 24.0), (18.0, 36.0), (13.0, 36.0), (13.0, 31.0), (6.0, 31.0)]),
        rect(25.0, 25.0, 35.0, 33.0),
        rect(42.0, 24.0, 54.0, 36.0),
        rect(48.0, 29.0, 51.0, 32.0),
        // row 2
        rect(6.0, 42.0, 11.0, 54.0),
        rect(13.0, 42.0, 18.0, 47.0),
        polygon(&[(24.0, 42.0), (36.0, 42.0), (36.0, 54.0), (24.0, 54.0), (24.0, 50.0), (30.0, 50.0), (30.0, 46.0), (24.0, 46.0)]),
        rect(42.0, 42.0, 54.0, 54.0),
        // kiosks along the kerbs
        rect(10.0, 0.5, 11.0, 1.5),
        rect(58.5, 30.0, 59.5, 31.0),
        rect(27.0, 58.5, 28.0, 59.5),
    ]
}

// Streets are 8 m wide with centerlines at y = 4, 25, 46 and x = 4, 66.
fn town_b() -> Vec<Vec<Vec2>> {
    let mut lines = vec![
        rect(0.0, 0.0, 70.0, 50.0),
        rect(8.0, 8.0, 20.0, 21.0),
        rotated_rect(30.0, 14.5, 9.0, 6.0, PI / 6.0),
        rect(40.0, 8.0, 44.0, 21.0),
        polygon(&[(48.0, 8.0), (62.0, 8.0), (62.0, 21.0), (55.0, 14.0), (48.0, 14.0)]),
        rotated_rect(16.0, 35.5, 12.0, 7.0, -PI / 8.0),
        rect(26.0, 29.0, 40.0, 42.0),
        rotated_rect(57.0, 35.5, 6.0, 6.0, PI / 4.0),
    ];
    let mut plaza = arc(Vec2::new(47.0, 35.5), 2.5, 0.0, TAU, 8);
    plaza.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    lines.push(plaza);
    lines
}

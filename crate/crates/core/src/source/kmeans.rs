//! Lloyd's k-means with k-means++ seeding.

use rand::Rng as _;

use crate::rng;
use crate::{PotError, Result, Vec2};

const MAX_ITER: usize = 100;

pub fn kmeans(points: &[Vec2], k: usize, seed: u64) -> Result<Vec<Vec2>> {
    if points.is_empty() {
        return Err(PotError::NoPoints);
    }
    if k == 0 {
        return Err(PotError::InvalidArgument("k must be at least 1".into()));
    }
    let k = k.min(points.len());
    let mut rng = rng::rng(seed);

    // k-means++
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining points coincide with a center
            break;
        };
        let c = points[next];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = nearest(&centers, *p);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Vec2::zeros(); centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (a, p) in assign.iter().zip(points) {
            sums[*a] += p;
            counts[*a] += 1;
        }
        for ((c, s), n) in centers.iter_mut().zip(sums).zip(counts) {
            if n > 0 {
                *c = s / n as f64;
            }
        }
    }
    Ok(centers)
}

fn nearest(centers: &[Vec2], p: Vec2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

//! Held-out evaluation: beam splits, ACC/AUC/NLL and an occupancy-grid reference.

use std::fmt;

use rand::seq::index;

use crate::model::{sigmoid, ParameterSet};
use crate::world::{Bounds, Scan};
use crate::{rng, PotError, Result, Vec2};

/// Disjoint train/test index split with `round(test_frac · n)` test items.
/// Both halves keep the original order.
pub fn split_indices(n: usize, test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!((0.0..1.0).contains(&test_frac) && test_frac > 0.0, "test_frac must be in (0, 1)");
    let n_test = ((test_frac * n as f64).round() as usize).min(n);
    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng::rng(seed), n, n_test) {
        is_test[i] = true;
    }
    (0..n).partition(|&i| !is_test[i])
}

pub fn split_train_test<T: Clone>(items: &[T], test_frac: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let (train, test) = split_indices(items.len(), test_frac, seed);
    (
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub auc: f64,
    pub nll: f64,
    pub n_test: usize,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ACC={:.6} AUC={:.6} NLL={:.6} N={}", self.acc, self.auc, self.nll, self.n_test)
    }
}

const P_CLAMP: f64 = 1e-12;

fn check(predictions: &[f64], labels: &[u8]) -> Result<()> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(PotError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|l| *l > 1) {
        return Err(PotError::InvalidArgument("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Fraction correct with `p >= 0.5` classified as occupied.
pub fn accuracy(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    check(predictions, labels)?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| u8::from(**p >= 0.5) == **l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Mean negative log-likelihood with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn nll(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    check(predictions, labels)?;
    let s: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            if *l == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(s / labels.len() as f64)
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed from mid-ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PotError::InvalidArgument("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn compute_metrics(predictions: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: accuracy(predictions, labels)?,
        auc: auc(predictions, labels)?,
        nll: nll(predictions, labels)?,
        n_test: labels.len(),
    })
}

/// Mean and sample standard deviation of per-scan reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub mean: MetricsReport,
    pub sd: (f64, f64, f64),
    pub n_scans: usize,
}

pub fn summarize(reports: &[MetricsReport]) -> Option<MetricsSummary> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let stats = |f: &dyn Fn(&MetricsReport) -> f64| {
        let m = reports.iter().map(f).sum::<f64>() / n;
        let v = if reports.len() > 1 {
            reports.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, v.sqrt())
    };
    let (acc, acc_sd) = stats(&|r| r.acc);
    let (auc, auc_sd) = stats(&|r| r.auc);
    let (nll, nll_sd) = stats(&|r| r.nll);
    Some(MetricsSummary {
        mean: MetricsReport {
            acc,
            auc,
            nll,
            n_test: reports.iter().map(|r| r.n_test).sum(),
        },
        sd: (acc_sd, auc_sd, nll_sd),
        n_scans: reports.len(),
    })
}

/// Mean `|w̄|` of kernels within `near` of a hit versus kernels farther than
/// `far` from every data point. `None` for a group with no kernels.
pub fn weight_locality(params: &ParameterSet, hits: &[Vec2], data: &[Vec2], near: f64, far: f64) -> (Option<f64>, Option<f64>) {
    let min_dist = |p: Vec2, set: &[Vec2]| set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let near_w = params
        .kernels
        .iter()
        .filter(|k| min_dist(k.pos_mean, hits) <= near)
        .map(|k| k.weight_mean.abs())
        .collect();
    let far_w = params
        .kernels
        .iter()
        .filter(|k| min_dist(k.pos_mean, data) > far)
        .map(|k| k.weight_mean.abs())
        .collect();
    (mean(near_w), mean(far_w))
}

/// Log-odds occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, `height` rows of `width` cells.
    pub log_odds: Vec<f64>,
    pub clamp: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OgmConfig {
    pub resolution: f64,
    pub clamp: (f64, f64),
    pub inc_occ: f64,
    pub dec_free: f64,
}

impl Default for OgmConfig {
    fn default() -> Self {
        Self {
            resolution: 0.2,
            clamp: (-5.0, 5.0),
            inc_occ: 0.85,
            dec_free: 0.4,
        }
    }
}

impl GridMap {
    pub fn new(bounds: Bounds, cfg: &OgmConfig) -> Result<Self> {
        if !(cfg.resolution > 0.0) {
            return Err(PotError::InvalidArgument("resolution must be positive".into()));
        }
        let width = ((bounds.width() / cfg.resolution).ceil() as usize).max(1);
        let height = ((bounds.height() / cfg.resolution).ceil() as usize).max(1);
        Ok(Self {
            origin: bounds.min,
            resolution: cfg.resolution,
            width,
            height,
            log_odds: vec![0.0; width * height],
            clamp: cfg.clamp,
        })
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = (p - self.origin) / self.resolution;
        let (x, y) = (c.x.floor(), c.y.floor());
        (x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height).then(|| (x as usize, y as usize))
    }

    pub fn log_odds_at(&self, cell: (usize, usize)) -> f64 {
        self.log_odds[cell.1 * self.width + cell.0]
    }

    fn add(&mut self, cell: (usize, usize), delta: f64) {
        let v = &mut self.log_odds[cell.1 * self.width + cell.0];
        *v = (*v + delta).clamp(self.clamp.0, self.clamp.1);
    }

    /// Occupancy probability; 0.5 outside the grid.
    pub fn probability(&self, p: Vec2) -> f64 {
        self.cell_of(p).map_or(0.5, |c| sigmoid(self.log_odds_at(c)))
    }

    /// Cells crossed by the segment `a → b`, in order, ending with the cell of `b`.
    pub fn traverse(&self, a: Vec2, b: Vec2) -> Vec<(usize, usize)> {
        let res = self.resolution;
        let ga = (a - self.origin) / res;
        let gb = (b - self.origin) / res;
        let (mut x, mut y) = (ga.x.floor() as i64, ga.y.floor() as i64);
        let (ex, ey) = (gb.x.floor() as i64, gb.y.floor() as i64);
        let d = gb - ga;
        let step_x = if d.x > 0.0 { 1 } else { -1 };
        let step_y = if d.y > 0.0 { 1 } else { -1 };
        let t_delta_x = if d.x != 0.0 { (1.0 / d.x).abs() } else { f64::INFINITY };
        let t_delta_y = if d.y != 0.0 { (1.0 / d.y).abs() } else { f64::INFINITY };
        let mut t_max_x = if d.x > 0.0 {
            (x as f64 + 1.0 - ga.x) / d.x
        } else if d.x < 0.0 {
            (ga.x - x as f64) / -d.x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if d.y > 0.0 {
            (y as f64 + 1.0 - ga.y) / d.y
        } else if d.y < 0.0 {
            (ga.y - y as f64) / -d.y
        } else {
            f64::INFINITY
        };
        let mut cells = Vec::new();
        let limit = (ex - x).abs() + (ey - y).abs() + 1;
        for _ in 0..=limit {
            if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                cells.push((x as usize, y as usize));
            }
            if x == ex && y == ey {
                break;
            }
            if t_max_x < t_max_y {
                x += step_x;
                t_max_x += t_delta_x;
            } else {
                y += step_y;
                t_max_y += t_delta_y;
            }
        }
        cells
    }

    /// Standard log-odds update for one beam.
    pub fn integrate_beam(&mut self, origin: Vec2, end: Vec2, hit: bool, inc_occ: f64, dec_free: f64) {
        let cells = self.traverse(origin, end);
        let end_cell = self.cell_of(end);
        for c in cells {
            if hit && Some(c) == end_cell {
                continue;
            }
            self.add(c, -dec_free);
        }
        if hit {
            if let Some(c) = end_cell {
                self.add(c, inc_occ);
            }
        }
    }
}

/// Builds an occupancy grid covering every beam of `scans`.
pub fn ogm_baseline(scans: &[Scan], cfg: &OgmConfig) -> Result<GridMap> {
    let mut bounds = Bounds::empty();
    for s in scans {
        bounds.include(s.pose.position());
        for i in 0..s.beams.len() {
            bounds.include(s.endpoint(i));
        }
    }
    if scans.is_empty() {
        bounds = Bounds::new(Vec2::zeros(), Vec2::repeat(cfg.resolution));
    }
    let mut grid = GridMap::new(bounds.padded(cfg.resolution), cfg)?;
    for s in scans {
        for (i, b) in s.beams.iter().enumerate() {
            grid.integrate_beam(s.pose.position(), s.endpoint(i), b.hit, cfg.inc_occ, cfg.dec_free);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Beam, Pose2};
    use proptest::prelude::*;

    /// Pairwise count over all (positive, negative) pairs.
    fn auc_brute(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..100).collect();
        let (train, test) = split_train_test(&items, 0.2, 7);
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(split_train_test(&items, 0.2, 7), (train.clone(), test.clone()));
        let mut all = [train, test].concat();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0.999, 0.001, 0.999, 0.001], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.acc, 1.0);
        assert_eq!(m.auc, 1.0);
        assert!((m.nll - 0.001).abs() < 1e-6);
    }

    #[test]
    fn constant_half() {
        let m = compute_metrics(&[0.5; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.acc, 0.5);
        assert!((m.nll - 2f64.ln()).abs() < 1e-15);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn pairwise_auc_example() {
        let (s, l) = ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]);
        assert_eq!(auc_brute(&s, &l), 0.75);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn threshold_tie_is_occupied() {
        assert_eq!(accuracy(&[0.5], &[1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.5], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn single_class_has_no_auc() {
        assert!(compute_metrics(&[0.2, 0.9], &[1, 1]).is_err());
        assert!(accuracy(&[0.2, 0.9], &[1, 1]).is_ok());
        assert!(nll(&[0.2, 0.9], &[1, 1]).is_ok());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn report_format() {
        let m = MetricsReport {
            acc: 0.5,
            auc: 0.75,
            nll: 2f64.ln(),
            n_test: 4,
        };
        assert_eq!(m.to_string(), "ACC=0.500000 AUC=0.750000 NLL=0.693147 N=4");
    }

    #[test]
    fn summary_stats() {
        let r = |a| MetricsReport {
            acc: a,
            auc: a,
            nll: a,
            n_test: 2,
        };
        let s = summarize(&[r(0.2), r(0.4)]).unwrap();
        assert!((s.mean.acc - 0.3).abs() < 1e-15);
        assert!((s.sd.0 - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.mean.n_test, 4);
        assert!(summarize(&[]).is_none());
    }

    fn one_beam_scan(range: f64, hit: bool, repeats: usize) -> Scan {
        Scan {
            id: "0".into(),
            pose: Pose2::new(0.1, 0.1, 0.0),
            beams: vec![Beam { angle: 0.0, range, hit }; repeats],
            max_range: 10.0,
        }
    }

    #[test]
    fn ogm_without_observations_is_half() {
        let g = ogm_baseline(&[], &OgmConfig::default()).unwrap();
        assert!(g.log_odds.iter().all(|v| *v == 0.0));
        assert_eq!(g.probability(Vec2::new(0.05, 0.05)), 0.5);
        assert_eq!(g.probability(Vec2::new(100.0, 0.0)), 0.5);
    }

    #[test]
    fn ogm_single_hit() {
        let cfg = OgmConfig::default();
        let g = ogm_baseline(&[one_beam_scan(3.0, true, 1)], &cfg).unwrap();
        let end = g.cell_of(Vec2::new(3.1, 0.1)).unwrap();
        assert!((g.log_odds_at(end) - cfg.inc_occ).abs() < 1e-12);
        let mid = g.cell_of(Vec2::new(1.5, 0.1)).unwrap();
        assert!((g.log_odds_at(mid) + cfg.dec_free).abs() < 1e-12);
        let start = g.cell_of(Vec2::new(0.1, 0.1)).unwrap();
        assert!((g.log_odds_at(start) + cfg.dec_free).abs() < 1e-12);
    }

    #[test]
    fn ogm_saturates() {
        let cfg = OgmConfig::default();
        let g = ogm_baseline(&[one_beam_scan(3.0, true, 100)], &cfg).unwrap();
        let end = g.cell_of(Vec2::new(3.1, 0.1)).unwrap();
        assert_eq!(g.log_odds_at(end), cfg.clamp.1);
        assert!(g.log_odds.iter().all(|v| *v >= cfg.clamp.0 && *v <= cfg.clamp.1));
    }

    #[test]
    fn traversal_is_connected() {
        let g = GridMap::new(Bounds::new(Vec2::zeros(), Vec2::new(10.0, 10.0)), &OgmConfig::default()).unwrap();
        let cells = g.traverse(Vec2::new(1.03, 2.07), Vec2::new(8.91, 6.55));
        assert_eq!(*cells.last().unwrap(), g.cell_of(Vec2::new(8.91, 6.55)).unwrap());
        for w in cells.windows(2) {
            let dx = (w[0].0 as i64 - w[1].0 as i64).abs();
            let dy = (w[0].1 as i64 - w[1].1 as i64).abs();
            assert_eq!(dx + dy, 1);
        }
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_is_rank_invariant(data in prop::collection::vec((0u8..20, 0u8..2), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 20.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - auc_brute(&scores, &labels)).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((auc(&warped, &labels).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_permutation_invariant(data in prop::collection::vec((0.001f64..0.999, 0u8..2), 2..40), rot in 0usize..40) {
            let p: Vec<f64> = data.iter().map(|d| d.0).collect();
            let l: Vec<u8> = data.iter().map(|d| d.1).collect();
            prop_assume!(l.contains(&0) && l.contains(&1));
            let k = rot % p.len();
            let (mut p2, mut l2) = (p.clone(), l.clone());
            p2.rotate_left(k);
            l2.rotate_left(k);
            let a = compute_metrics(&p, &l).unwrap();
            let b = compute_metrics(&p2, &l2).unwrap();
            prop_assert_eq!(a.acc, b.acc);
            prop_assert!((a.auc - b.auc).abs() < 1e-12 && (a.nll - b.nll).abs() < 1e-12);
            prop_assert!(a.nll >= 0.0);
        }

        #[test]
        fn sharper_correct_predictions_lower_nll(q in 0.5f64..0.98, dq in 0.001f64..0.019) {
            let labels = [1u8, 0];
            let soft = nll(&[q, 1.0 - q], &labels).unwrap();
            let sharp = nll(&[q + dq, 1.0 - q - dq], &labels).unwrap();
            prop_assert!(sharp < soft);
        }
    }
}

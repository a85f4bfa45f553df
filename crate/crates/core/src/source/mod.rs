//! Dictionary of source atoms.
//!
//! Each source scan is cut into equal circular sectors around the sensor. For
//! every sector a kernel model is fitted (k-means centers, nearest-neighbour
//! widths, variational weights) and stored with the sector's labeled points
//! as one atom.

pub mod io;
mod kmeans;
mod vb;

pub use kmeans::kmeans;
pub use vb::{jj_lambda, learn_weights_vb, VbConfig, VbTrace};

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::model::{Kernel, ParameterSet};
use crate::ot::centroid;
use crate::world::{normalize_angle, sample_free_points, LabeledPoint, Scan};
use crate::{rng, PotError, Result, Vec2};

pub const DICTIONARY_VERSION: u32 = 1;

/// One sector of a source scan with its learned kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: String,
    pub points: Vec<LabeledPoint>,
    pub params: ParameterSet,
    /// Mean of all point positions.
    pub centroid: Vec2,
    pub radius: f64,
}

impl Atom {
    pub fn hit_points(&self) -> Vec<Vec2> {
        self.points.iter().filter(|p| p.is_hit()).map(|p| p.position).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub version: u32,
    pub atoms: Vec<Atom>,
    /// Free-form `(key, value)` provenance; keys contain no whitespace.
    pub meta: Vec<(String, String)>,
}

impl Dictionary {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let mut ids: Vec<&str> = atoms.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PotError::InvalidArgument(format!("duplicate atom id '{}'", w[0])));
        }
        Ok(Self {
            version: DICTIONARY_VERSION,
            atoms,
            meta: Vec::new(),
        })
    }

    pub fn get(&self, id: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.id == id)
    }
}

/// Assigns each point to the sector containing its bearing from the sensor,
/// measured from the sensor heading. Sector `s` spans `[s, s + 1) · 2π / n`.
pub fn split_into_sectors(scan: &Scan, points: &[LabeledPoint], n_sectors: usize) -> Vec<Vec<LabeledPoint>> {
    let mut out = vec![Vec::new(); n_sectors];
    for p in points {
        out[sector_of(scan, p.position, n_sectors)].push(*p);
    }
    out
}

pub fn sector_of(scan: &Scan, p: Vec2, n_sectors: usize) -> usize {
    assert!(n_sectors >= 1, "n_sectors must be at least 1");
    let d = p - scan.pose.position();
    let bearing = normalize_angle(d.y.atan2(d.x) - scan.pose.heading);
    ((bearing / (TAU / n_sectors as f64)) as usize).min(n_sectors - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Lattice over the bounding box, endpoints inclusive.
    Grid { spacing: f64 },
    KMeans { k: usize, seed: u64 },
}

pub fn place_kernels(points: &[LabeledPoint], strategy: Placement) -> Result<Vec<Vec2>> {
    let pos: Vec<Vec2> = points.iter().map(|p| p.position).collect();
    match strategy {
        Placement::Grid { spacing } => {
            if !(spacing > 0.0) {
                return Err(PotError::InvalidArgument(format!("grid spacing must be positive, got {spacing}")));
            }
            if pos.is_empty() {
                return Ok(Vec::new());
            }
            let lo = pos.iter().fold(Vec2::repeat(f64::INFINITY), |a, p| a.inf(p));
            let hi = pos.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
            let nx = ((hi.x - lo.x) / spacing + 1e-9).floor() as usize + 1;
            let ny = ((hi.y - lo.y) / spacing + 1e-9).floor() as usize + 1;
            Ok((0..ny)
                .flat_map(|j| (0..nx).map(move |i| lo + spacing * Vec2::new(i as f64, j as f64)))
                .collect())
        }
        Placement::KMeans { k, seed } => kmeans(&pos, k, seed),
    }
}

/// Width mean and dispersion per center: `clamp(c / d², γmin, γmax)` where `d`
/// is the distance to the `k_nn`-th nearest other center. The dispersion is a
/// quarter of the mean.
pub fn estimate_widths(centers: &[Vec2], c: f64, k_nn: usize, gamma_min: f64, gamma_max: f64) -> Result<Vec<(f64, f64)>> {
    if k_nn == 0 || !(gamma_min > 0.0 && gamma_min < gamma_max) || !(c > 0.0) {
        return Err(PotError::InvalidArgument(format!(
            "need k_nn >= 1, c > 0 and 0 < gamma_min < gamma_max (got {k_nn}, {c}, {gamma_min}, {gamma_max})"
        )));
    }
    Ok(centers
        .iter()
        .enumerate()
        .map(|(i, ci)| {
            let mut d: Vec<f64> = centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, cj)| (ci - cj).norm_squared())
                .collect();
            let gamma = if d.is_empty() {
                gamma_min
            } else {
                let kth = (k_nn - 1).min(d.len() - 1);
                d.select_nth_unstable_by(kth, f64::total_cmp);
                let d2 = d[kth];
                if d2 == 0.0 {
                    gamma_max
                } else {
                    (c / d2).clamp(gamma_min, gamma_max)
                }
            };
            (gamma, 0.25 * gamma)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionaryConfig {
    pub n_sectors: usize,
    pub k_per_beam: usize,
    pub kernels_per_sector: usize,
    pub width_c: f64,
    pub width_knn: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub prior_weight_var: f64,
    pub vb: VbConfig,
    pub seed: u64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            n_sectors: 3,
            k_per_beam: 3,
            kernels_per_sector: 40,
            width_c: 1.0,
            width_knn: 1,
            gamma_min: 0.1,
            gamma_max: 20.0,
            prior_weight_var: 10.0,
            vb: VbConfig::default(),
            seed: 0,
        }
    }
}

/// Fits the kernel model of one sector.
pub fn learn_atom(id: String, points: Vec<LabeledPoint>, radius: f64, cfg: &DictionaryConfig, seed: u64) -> Result<Atom> {
    let centers = place_kernels(&points, Placement::KMeans { k: cfg.kernels_per_sector, seed })?;
    let widths = estimate_widths(&centers, cfg.width_c, cfg.width_knn, cfg.gamma_min, cfg.gamma_max)?;
    let pos_var = (radius / 20.0).powi(2);
    let prior = ParameterSet::new(
        centers
            .iter()
            .zip(&widths)
            .map(|(h, &(g, gd))| Kernel {
                pos_mean: *h,
                pos_var: Vec2::repeat(pos_var),
                width_mean: g,
                width_disp: gd,
                weight_mean: 0.0,
                weight_var: cfg.prior_weight_var,
            })
            .collect(),
    );
    let (params, _) = learn_weights_vb(&points, &prior, &cfg.vb)?;
    let centroid = centroid(&points.iter().map(|p| p.position).collect::<Vec<_>>());
    Ok(Atom {
        id,
        points,
        params,
        centroid,
        radius,
    })
}

/// Builds one atom per nonempty sector of every scan. Atom ids are `<scan id>/<sector>`.
pub fn build_dictionary(scans: &[Scan], cfg: &DictionaryConfig) -> Result<Dictionary> {
    if scans.is_empty() {
        return Err(PotError::InvalidArgument("no source scans".into()));
    }
    if cfg.n_sectors == 0 {
        return Err(PotError::InvalidArgument("n_sectors must be at least 1".into()));
    }
    let mut jobs = Vec::new();
    for (si, scan) in scans.iter().enumerate() {
        let points = sample_free_points(scan, cfg.k_per_beam, rng::derive(cfg.seed, si as u64));
        for (k, sector) in split_into_sectors(scan, &points, cfg.n_sectors).into_iter().enumerate() {
            if !sector.is_empty() {
                let seed = rng::derive(cfg.seed, ((si as u64) << 16) ^ (k as u64) ^ 0xA70);
                jobs.push((format!("{}/{}", scan.id, k), sector, scan.max_range, seed));
            }
        }
    }
    let atoms = jobs
        .into_par_iter()
        .map(|(id, pts, radius, seed)| learn_atom(id, pts, radius, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut dict = Dictionary::new(atoms)?;
    dict.meta = vec![
        ("scans".into(), scans.len().to_string()),
        ("n_sectors".into(), cfg.n_sectors.to_string()),
        ("k_per_beam".into(), cfg.k_per_beam.to_string()),
        ("kernels_per_sector".into(), cfg.kernels_per_sector.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scan, Beam, Pose2, WorldKind};
    use proptest::prelude::*;

    fn scan_at_origin() -> Scan {
        generate_scan(&WorldKind::Square.build(), Pose2::new(0.0, 0.0, 0.0), 36, 10.0, 0.0, 0)
    }

    #[test]
    fn bearing_zero_is_sector_zero() {
        let s = scan_at_origin();
        assert_eq!(sector_of(&s, Vec2::new(1.0, 0.0), 3), 0);
        assert_eq!(sector_of(&s, Vec2::new(-1.0, 0.1), 3), 1);
        assert_eq!(sector_of(&s, Vec2::new(1.0, -0.1), 3), 2);
    }

    #[test]
    fn sectors_follow_heading() {
        let mut s = scan_at_origin();
        s.pose = Pose2::new(0.0, 0.0, std::f64::consts::PI);
        assert_eq!(sector_of(&s, Vec2::new(-1.0, -0.01), 3), 0);
    }

    #[test]
    fn three_sectors_partition_points() {
        let s = scan_at_origin();
        let pts = sample_free_points(&s, 2, 1);
        let sectors = split_into_sectors(&s, &pts, 3);
        assert_eq!(sectors.len(), 3);
        assert_eq!(sectors.iter().map(Vec::len).sum::<usize>(), pts.len());
        let mut all: Vec<_> = sectors.concat().iter().map(|p| (p.position.x.to_bits(), p.position.y.to_bits(), p.label)).collect();
        let mut orig: Vec<_> = pts.iter().map(|p| (p.position.x.to_bits(), p.position.y.to_bits(), p.label)).collect();
        all.sort_unstable();
        orig.sort_unstable();
        assert_eq!(all, orig);
    }

    #[test]
    fn grid_lattice_count() {
        let pts = vec![LabeledPoint::free(Vec2::new(0.0, 0.0)), LabeledPoint::hit(Vec2::new(4.0, 2.0))];
        assert_eq!(place_kernels(&pts, Placement::Grid { spacing: 1.0 }).unwrap().len(), 15);
        assert!(place_kernels(&pts, Placement::Grid { spacing: 0.0 }).is_err());
    }

    #[test]
    fn kmeans_placement() {
        let pts = vec![LabeledPoint::free(Vec2::new(0.0, 0.0)), LabeledPoint::hit(Vec2::new(4.0, 2.0))];
        let c = place_kernels(&pts, Placement::KMeans { k: 1, seed: 0 }).unwrap();
        assert!((c[0] - Vec2::new(2.0, 1.0)).norm() < 1e-12);
        assert!(matches!(place_kernels(&[], Placement::KMeans { k: 2, seed: 0 }), Err(PotError::NoPoints)));
    }

    #[test]
    fn width_rules() {
        let grid: Vec<Vec2> = (0..5).flat_map(|j| (0..5).map(move |i| Vec2::new(i as f64, j as f64))).collect();
        let w = estimate_widths(&grid, 1.0, 1, 0.01, 100.0).unwrap();
        assert_eq!(w[12], (1.0, 0.25));

        let w = estimate_widths(&[Vec2::zeros()], 1.0, 1, 0.05, 10.0).unwrap();
        assert_eq!(w[0].0, 0.05);

        let w = estimate_widths(&[Vec2::zeros(), Vec2::new(2.0, 0.0)], 4.0, 1, 0.05, 10.0).unwrap();
        assert_eq!(w[0].0, 1.0);

        assert!(estimate_widths(&grid, 1.0, 0, 0.1, 1.0).is_err());
        assert!(estimate_widths(&grid, 1.0, 1, 1.0, 0.5).is_err());
    }

    #[test]
    fn dictionary_atom_count_and_ids() {
        let w = WorldKind::TownA.build();
        let scans: Vec<Scan> = crate::world::trajectory(&WorldKind::TownA.route(), 4, 2.0)
            .into_iter()
            .enumerate()
            .map(|(i, p)| generate_scan(&w, p, 60, 10.0, 0.0, i as u64).with_id(format!("s{i}")))
            .collect();
        let cfg = DictionaryConfig {
            kernels_per_sector: 10,
            ..Default::default()
        };
        let d = build_dictionary(&scans, &cfg).unwrap();
        assert_eq!(d.atoms.len(), 12);
        assert_eq!(d.atoms[4].id, "s1/1");
        for a in &d.atoms {
            let c = centroid(&a.points.iter().map(|p| p.position).collect::<Vec<_>>());
            assert!((a.centroid - c).norm() < 1e-12);
            assert!(a.params.kernels.iter().all(Kernel::is_valid));
        }
        assert_eq!(build_dictionary(&scans, &cfg).unwrap(), d);
    }

    #[test]
    fn blind_scan_contributes_nothing() {
        let s = Scan {
            id: "blind".into(),
            pose: Pose2::new(0.0, 0.0, 0.0),
            beams: (0..8).map(|k| Beam { angle: k as f64, range: 10.0, hit: false }).collect(),
            max_range: 10.0,
        };
        let cfg = DictionaryConfig {
            k_per_beam: 0,
            ..Default::default()
        };
        assert!(build_dictionary(&[s], &cfg).unwrap().atoms.is_empty());
        assert!(build_dictionary(&[], &cfg).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = Atom {
            id: "x".into(),
            points: vec![],
            params: ParameterSet::default(),
            centroid: Vec2::zeros(),
            radius: 1.0,
        };
        assert!(Dictionary::new(vec![a.clone(), a]).is_err());
    }

    proptest! {
        #[test]
        fn sectors_partition(n in 1usize..9, h in 0.0f64..6.28, seed in 0u64..100) {
            let mut s = scan_at_origin();
            s.pose = Pose2::new(0.5, -0.3, h);
            let pts = sample_free_points(&s, 1, seed);
            let sectors = split_into_sectors(&s, &pts, n);
            prop_assert_eq!(sectors.len(), n);
            prop_assert_eq!(sectors.iter().map(Vec::len).sum::<usize>(), pts.len());
        }
    }
}

//! Parameter transport from a dictionary of atoms to new scans.
//!
//! For every nonempty sector of a new scan the hit cloud is matched against
//! every atom's hit cloud under a grid of rotations. Both clouds are centered
//! on their hit centroids; the candidate with the lowest entropic transport
//! cost wins, and the atom's kernels are carried into the scan's frame by the
//! affine map fitted to that coupling.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::model::{Kernel, ParameterSet};
use crate::ot::{centroid, cost_matrix, fit_linear_map, rotation, sinkhorn, transport_cost, uniform, Coupling, SinkhornConfig};
use crate::source::{split_into_sectors, Atom, Dictionary};
use crate::world::{LabeledPoint, Scan};
use crate::{rng, PotError, Result, Vec2};

/// Discrete rotation grid, strictly increasing in `[0, 2π)` and containing 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSet {
    angles: Vec<f64>,
}

impl RotationSet {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.first() != Some(&0.0) {
            return Err(PotError::InvalidArgument("rotation set must start at 0".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) || angles.iter().any(|a| !(0.0..TAU).contains(a)) {
            return Err(PotError::InvalidArgument("rotations must be strictly increasing in [0, 2π)".into()));
        }
        Ok(Self { angles })
    }

    /// `{2πk/n : k = 0..n}`
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(PotError::InvalidArgument("need at least one rotation".into()));
        }
        Self::new((0..n).map(|k| TAU * k as f64 / n as f64).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

impl Default for RotationSet {
    fn default() -> Self {
        Self::uniform(8).expect("8 rotations")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub sinkhorn: SinkhornConfig,
    /// Clouds larger than this are uniformly subsampled before matching.
    pub subsample_cap: usize,
    /// Ridge on `‖A - I‖²` of the kernel position map.
    pub ridge: f64,
    /// Divide centered clouds by their RMS radius before matching.
    pub scale_normalize: bool,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornConfig::default(),
            subsample_cap: 300,
            ridge: 1e-6,
            scale_normalize: false,
            seed: 0,
        }
    }
}

/// Centering (and optional scaling) applied to a cloud before matching.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    center: Vec2,
    scale: f64,
}

impl Frame {
    fn fit(points: &[Vec2], scale_normalize: bool) -> Self {
        let center = centroid(points);
        let scale = if scale_normalize {
            let rms = (points.iter().map(|p| (p - center).norm_squared()).sum::<f64>() / points.len() as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        } else {
            1.0
        };
        Self { center, scale }
    }

    fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center) / self.scale
    }

    fn to_world(&self, p: Vec2) -> Vec2 {
        p * self.scale + self.center
    }
}

/// A cloud prepared for matching: subsampled hits expressed in their own frame.
#[derive(Debug, Clone)]
struct Cloud {
    local: Vec<Vec2>,
    frame: Frame,
}

impl Cloud {
    fn new(hits: &[Vec2], cfg: &TransportConfig, seed: u64) -> Result<Self> {
        if hits.is_empty() {
            return Err(PotError::NoPoints);
        }
        let hits = subsample(hits, cfg.subsample_cap, seed);
        let frame = Frame::fit(&hits, cfg.scale_normalize);
        Ok(Self {
            local: hits.iter().map(|p| frame.to_local(*p)).collect(),
            frame,
        })
    }

    fn rotated(&self, alpha: f64) -> Vec<Vec2> {
        let r = rotation(alpha);
        self.local.iter().map(|p| r * p).collect()
    }
}

/// Uniform subsample of at most `cap` points, in original order.
pub fn subsample(points: &[Vec2], cap: usize, seed: u64) -> Vec<Vec2> {
    if cap == 0 || points.len() <= cap {
        return points.to_vec();
    }
    let mut idx = index::sample(&mut rng::rng(seed), points.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

/// Seed for a named stream, hashed with FNV-1a.
pub fn id_seed(seed: u64, id: &str) -> u64 {
    let h = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    rng::derive(seed, h)
}

/// One (atom, rotation) match.
///
/// `alpha` is the rotation that carries the atom onto the target: the target
/// cloud is compared with the atom after rotating it by `-alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub atom_id: String,
    pub alpha: f64,
    pub coupling: Coupling,
    pub cost: f64,
}

/// Atoms with hit geometry, preprocessed once for repeated matching.
pub struct Transporter<'a> {
    atoms: Vec<(&'a Atom, Cloud)>,
    rotations: RotationSet,
    cfg: TransportConfig,
}

impl<'a> Transporter<'a> {
    /// Atoms without hits carry no geometry and are left out.
    pub fn new(dict: &'a Dictionary, rotations: RotationSet, cfg: TransportConfig) -> Result<Self> {
        let atoms = dict
            .atoms
            .iter()
            .filter_map(|a| {
                let hits = a.hit_points();
                (!hits.is_empty()).then(|| Cloud::new(&hits, &cfg, id_seed(cfg.seed, &a.id)).map(|c| (a, c)))
            })
            .collect::<Result<Vec<_>>>()?;
        if atoms.is_empty() {
            return Err(PotError::InvalidArgument("dictionary has no atoms with hits".into()));
        }
        Ok(Self { atoms, rotations, cfg })
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    fn target_cloud(&self, target: &[LabeledPoint]) -> Result<Cloud> {
        let hits: Vec<Vec2> = target.iter().filter(|p| p.is_hit()).map(|p| p.position).collect();
        Cloud::new(&hits, &self.cfg, rng::derive(self.cfg.seed, 0x7A26))
    }

    /// Every (atom, rotation) coupling, atom-major.
    pub fn candidate_search(&self, target: &[LabeledPoint]) -> Result<Vec<Candidate>> {
        let tgt = self.target_cloud(target)?;
        let pairs: Vec<(usize, f64)> = (0..self.atoms.len())
            .flat_map(|a| self.rotations.angles().iter().map(move |&r| (a, r)))
            .collect();
        pairs
            .into_par_iter()
            .map(|(a, alpha)| {
                let (atom, src) = &self.atoms[a];
                let d = cost_matrix(&src.local, &tgt.rotated(-alpha))?;
                let coupling = match sinkhorn(&d, &self.cfg.sinkhorn, &uniform(d.rows()), &uniform(d.cols())) {
                    Ok(out) => out.coupling,
                    Err(PotError::NotConverged { best, .. }) => *best,
                    Err(e) => return Err(e),
                };
                let cost = transport_cost(&coupling, &d)?;
                Ok(Candidate {
                    atom_id: atom.id.clone(),
                    alpha,
                    coupling,
                    cost,
                })
            })
            .collect()
    }

    /// Carries the chosen atom's kernels into the target frame.
    pub fn transport_parameters(&self, chosen: &Candidate, target: &[LabeledPoint]) -> Result<Vec<Kernel>> {
        let (atom, src) = self
            .atoms
            .iter()
            .find(|(a, _)| a.id == chosen.atom_id)
            .ok_or_else(|| PotError::InvalidArgument(format!("candidate references unknown atom '{}'", chosen.atom_id)))?;
        let tgt = self.target_cloud(target)?;
        let map = fit_linear_map(&chosen.coupling, &src.local, &tgt.rotated(-chosen.alpha), self.cfg.ridge)?;
        let back = rotation(chosen.alpha);
        Ok(atom
            .params
            .kernels
            .iter()
            .map(|k| Kernel {
                pos_mean: tgt.frame.to_world(back * map.apply(src.frame.to_local(k.pos_mean))),
                ..*k
            })
            .collect())
    }

    /// Best-matching atom for the given target points, transported.
    pub fn transport_best(&self, target: &[LabeledPoint]) -> Result<(Candidate, Vec<Kernel>)> {
        let best = select_best(self.candidate_search(target)?)?;
        let kernels = self.transport_parameters(&best, target)?;
        Ok((best, kernels))
    }

    /// Transports kernels for every sector of `scan` that contains hits.
    /// `points` are the scan's labeled points used for matching.
    pub fn transport_scan(&self, scan: &Scan, points: &[LabeledPoint], n_sectors: usize) -> Result<ScanTransport> {
        let mut out = ScanTransport::default();
        for (k, sector) in split_into_sectors(scan, points, n_sectors).into_iter().enumerate() {
            if !sector.iter().any(LabeledPoint::is_hit) {
                continue;
            }
            let (best, kernels) = self.transport_best(&sector)?;
            out.matches.push(SectorMatch {
                sector: k,
                atom_id: best.atom_id,
                alpha: best.alpha,
                cost: best.cost,
            });
            out.kernels.extend(kernels);
        }
        Ok(out)
    }

    /// One mapping step: transport the scan and fold the kernels into `state`.
    pub fn update_map(&self, state: &mut MapState, scan: &Scan, points: &[LabeledPoint], n_sectors: usize) -> Result<ScanTransport> {
        let t = self.transport_scan(scan, points, n_sectors)?;
        state.absorb(t.kernels.clone());
        Ok(t)
    }
}

/// `|atoms| × |rotations|` candidates for one target cloud.
pub fn candidate_search(
    dict: &Dictionary,
    target: &[LabeledPoint],
    rotations: &RotationSet,
    cfg: &TransportConfig,
) -> Result<Vec<Candidate>> {
    if dict.atoms.is_empty() {
        return Err(PotError::InvalidArgument("empty dictionary".into()));
    }
    Transporter::new(dict, rotations.clone(), *cfg)?.candidate_search(target)
}

pub fn transport_parameters(
    dict: &Dictionary,
    chosen: &Candidate,
    target: &[LabeledPoint],
    rotations: &RotationSet,
    cfg: &TransportConfig,
) -> Result<Vec<Kernel>> {
    Transporter::new(dict, rotations.clone(), *cfg)?.transport_parameters(chosen, target)
}

/// Minimum-cost candidate; ties go to the lexicographically smaller atom id,
/// then the smaller rotation.
pub fn select_best(candidates: Vec<Candidate>) -> Result<Candidate> {
    candidates
        .into_iter()
        .min_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then_with(|| a.atom_id.cmp(&b.atom_id))
                .then_with(|| a.alpha.total_cmp(&b.alpha))
        })
        .ok_or_else(|| PotError::InvalidArgument("no candidates".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorMatch {
    pub sector: usize,
    pub atom_id: String,
    pub alpha: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanTransport {
    pub matches: Vec<SectorMatch>,
    pub kernels: Vec<Kernel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Only the latest scan's kernels.
    Instantaneous,
    /// Kernels accumulate across scans.
    Overall,
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Instantaneous => "instantaneous",
            Self::Overall => "overall",
        })
    }
}

impl FromStr for MapMode {
    type Err = PotError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instantaneous" => Ok(Self::Instantaneous),
            "overall" => Ok(Self::Overall),
            _ => Err(PotError::InvalidArgument(format!("unknown map mode '{s}'"))),
        }
    }
}

/// Transported kernels forming the continuous occupancy map.
#[derive(Debug, Clone)]
pub struct MapState {
    pub params: ParameterSet,
    pub dedup_radius: f64,
    pub mode: MapMode,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl PartialEq for MapState {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.dedup_radius == other.dedup_radius && self.mode == other.mode
    }
}

impl MapState {
    pub fn new(mode: MapMode, dedup_radius: f64) -> Self {
        Self {
            params: ParameterSet::default(),
            dedup_radius,
            mode,
            cells: HashMap::new(),
        }
    }

    pub fn with_kernels(mode: MapMode, dedup_radius: f64, kernels: Vec<Kernel>) -> Self {
        let mut s = Self::new(mode, dedup_radius);
        s.params.kernels = kernels;
        s.reindex();
        s
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.params.kernels
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn cell(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.dedup_radius).floor() as i64, (p.y / self.dedup_radius).floor() as i64)
    }

    fn reindex(&mut self) {
        self.cells.clear();
        if self.dedup_radius > 0.0 {
            for i in 0..self.params.len() {
                let c = self.cell(self.params.kernels[i].pos_mean);
                self.cells.entry(c).or_default().push(i);
            }
        }
    }

    fn has_neighbor(&self, p: Vec2) -> bool {
        let (cx, cy) = self.cell(p);
        let r2 = self.dedup_radius * self.dedup_radius;
        (cx - 1..=cx + 1).any(|x| {
            (cy - 1..=cy + 1).any(|y| {
                self.cells
                    .get(&(x, y))
                    .is_some_and(|v| v.iter().any(|&i| (self.params.kernels[i].pos_mean - p).norm_squared() <= r2))
            })
        })
    }

    /// Replaces (instantaneous) or appends to (overall) the kernel set.
    /// Returns the number of kernels added.
    pub fn absorb(&mut self, kernels: Vec<Kernel>) -> usize {
        match self.mode {
            MapMode::Instantaneous => {
                let n = kernels.len();
                self.params.kernels = kernels;
                self.reindex();
                n
            }
            MapMode::Overall => {
                let before = self.params.len();
                for k in kernels {
                    if self.dedup_radius > 0.0 {
                        if self.has_neighbor(k.pos_mean) {
                            continue;
                        }
                        let c = self.cell(k.pos_mean);
                        self.cells.entry(c).or_default().push(self.params.len());
                    }
                    self.params.kernels.push(k);
                }
                self.params.len() - before
            }
        }
    }

    /// Indices of kernels within `radius` of any of `points`.
    pub fn kernels_near(&self, points: &[Vec2], radius: f64) -> Vec<usize> {
        if points.is_empty() {
            return Vec::new();
        }
        // bucket the query points so each kernel only checks nearby cells
        let cell = radius.max(1e-6);
        let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let mut grid: HashMap<(i64, i64), Vec<Vec2>> = HashMap::new();
        for p in points {
            grid.entry(key(*p)).or_default().push(*p);
        }
        let r2 = radius * radius;
        self.params
            .kernels
            .iter()
            .enumerate()
            .filter(|(_, k)| {
                let (cx, cy) = key(k.pos_mean);
                (cx - 1..=cx + 1).any(|x| {
                    (cy - 1..=cy + 1).any(|y| {
                        grid.get(&(x, y))
                            .is_some_and(|v| v.iter().any(|p| (p - k.pos_mean).norm_squared() <= r2))
                    })
                })
            })
            .map(|(i, _)| i)
            .collect()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kernel;
    use std::f64::consts::PI;

    fn kernel_at(x: f64, y: f64) -> Kernel {
        Kernel {
            pos_mean: Vec2::new(x, y),
            pos_var: Vec2::new(0.25, 0.25),
            width_mean: 1.0,
            width_disp: 0.25,
            weight_mean: 1.0,
            weight_var: 0.5,
        }
    }

    fn cand(id: &str, alpha: f64, cost: f64) -> Candidate {
        Candidate {
            atom_id: id.into(),
            alpha,
            coupling: Coupling::with_uniform_marginals(1, 1, vec![1.0]).unwrap(),
            cost,
        }
    }

    #[test]
    fn rotation_set_validation() {
        assert_eq!(RotationSet::default().angles().len(), 8);
        assert!(RotationSet::new(vec![]).is_err());
        assert!(RotationSet::new(vec![0.5]).is_err());
        assert!(RotationSet::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(RotationSet::new(vec![0.0, TAU]).is_err());
        assert!(RotationSet::new(vec![0.0, 2.0]).is_ok());
    }

    #[test]
    fn select_minimum() {
        let best = select_best(vec![cand("a", 0.0, 0.3), cand("b", 0.0, 0.1), cand("c", 0.0, 0.2)]).unwrap();
        assert_eq!(best.atom_id, "b");
        assert_eq!(select_best(vec![cand("z", 1.0, 5.0)]).unwrap().atom_id, "z");
        assert!(select_best(vec![]).is_err());
    }

    #[test]
    fn tie_break_by_id_then_angle() {
        let best = select_best(vec![cand("atomB", 0.0, 0.5), cand("atomA", PI, 0.5)]).unwrap();
        assert_eq!(best.atom_id, "atomA");
        let best = select_best(vec![cand("a", PI, 0.5), cand("a", 0.5, 0.5)]).unwrap();
        assert_eq!(best.alpha, 0.5);
    }

    #[test]
    fn instantaneous_replaces() {
        let mut s = MapState::new(MapMode::Instantaneous, 0.25);
        s.absorb(vec![kernel_at(0.0, 0.0), kernel_at(1.0, 0.0)]);
        assert_eq!(s.absorb(vec![kernel_at(5.0, 5.0)]), 1);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn overall_dedups() {
        let mut s = MapState::new(MapMode::Overall, 0.5);
        assert_eq!(s.absorb(vec![kernel_at(0.0, 0.0), kernel_at(1.0, 0.0)]), 2);
        assert_eq!(s.absorb(vec![kernel_at(0.1, 0.1), kernel_at(0.98, -0.2), kernel_at(3.0, 0.0)]), 1);
        assert_eq!(s.len(), 3);
        let mut raw = MapState::new(MapMode::Overall, 0.0);
        raw.absorb(vec![kernel_at(0.0, 0.0)]);
        assert_eq!(raw.absorb(vec![kernel_at(0.0, 0.0)]), 1);
    }

    #[test]
    fn dedup_across_cell_boundaries() {
        let mut s = MapState::new(MapMode::Overall, 0.25);
        s.absorb(vec![kernel_at(0.249, 0.0)]);
        assert_eq!(s.absorb(vec![kernel_at(0.251, 0.0)]), 0);
        assert_eq!(s.absorb(vec![kernel_at(-0.2, 0.0)]), 1);
    }

    #[test]
    fn kernels_near_query() {
        let s = MapState::with_kernels(MapMode::Overall, 0.25, vec![kernel_at(0.0, 0.0), kernel_at(10.0, 0.0), kernel_at(4.9, 0.0)]);
        assert_eq!(s.kernels_near(&[Vec2::new(0.0, 0.0)], 5.0), vec![0, 2]);
        assert!(s.kernels_near(&[], 5.0).is_empty());
    }

    #[test]
    fn subsample_is_deterministic_and_capped() {
        let pts: Vec<Vec2> = (0..50).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let a = subsample(&pts, 10, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, subsample(&pts, 10, 3));
        assert!(a.windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(subsample(&pts, 300, 3).len(), 50);
    }

    mod transport {
        use super::*;
        use crate::experiment::{simulate, SimConfig};
        use crate::ot::rotation;
        use crate::source::{build_dictionary, DictionaryConfig};
        use crate::world::{sample_free_points, WorldKind};

        fn fixture_dict() -> Dictionary {
            let scans = simulate(WorldKind::TownA, 3, 0, 0, &SimConfig::default(), 11);
            let cfg = DictionaryConfig {
                kernels_per_sector: 20,
                ..Default::default()
            };
            build_dictionary(&scans, &cfg).unwrap()
        }

        fn hits_of(atom: &Atom) -> Vec<LabeledPoint> {
            atom.hit_points().into_iter().map(LabeledPoint::hit).collect()
        }

        fn moved(points: &[LabeledPoint], pivot: Vec2, alpha: f64, shift: Vec2) -> Vec<LabeledPoint> {
            let r = rotation(alpha);
            points.iter().map(|p| LabeledPoint { position: r * (p.position - pivot) + pivot + shift, ..*p }).collect()
        }

        fn sharp() -> TransportConfig {
            TransportConfig {
                sinkhorn: SinkhornConfig {
                    lambda: 1e4,
                    ..Default::default()
                },
                ..Default::default()
            }
        }

        #[test]
        fn candidate_count_is_atoms_times_rotations() {
            let dict = fixture_dict();
            let two = Dictionary::new(dict.atoms[..2].to_vec()).unwrap();
            let target = hits_of(&dict.atoms[3]);
            let c = candidate_search(&two, &target, &RotationSet::uniform(4).unwrap(), &TransportConfig::default()).unwrap();
            assert_eq!(c.len(), 8);
            let one = Dictionary::new(dict.atoms[..1].to_vec()).unwrap();
            let c = candidate_search(&one, &target, &RotationSet::uniform(1).unwrap(), &TransportConfig::default()).unwrap();
            assert_eq!(c.len(), 1);
            assert!(candidate_search(&one, &[], &RotationSet::default(), &TransportConfig::default()).is_err());
            let empty = Dictionary::new(vec![]).unwrap();
            assert!(candidate_search(&empty, &target, &RotationSet::default(), &TransportConfig::default()).is_err());
        }

        #[test]
        fn self_match_has_minimal_cost() {
            let dict = fixture_dict();
            let t = Transporter::new(&dict, RotationSet::default(), TransportConfig::default()).unwrap();
            for atom in dict.atoms.iter().filter(|a| a.hit_points().len() > 2) {
                let cands = t.candidate_search(&hits_of(atom)).unwrap();
                let own = cands.iter().find(|c| c.atom_id == atom.id && c.alpha == 0.0).unwrap();
                assert!(cands.iter().all(|c| c.cost >= own.cost), "atom {}", atom.id);
                for c in &cands {
                    let (rv, cv) = c.coupling.marginal_violation();
                    // plans that hit max_iter still have exact columns
                    assert!(rv < 0.05 && cv < 1e-9, "{rv} {cv}");
                    assert!(c.cost >= 0.0);
                }
            }
        }

        #[test]
        fn self_transport_stays_put() {
            let dict = fixture_dict();
            let t = Transporter::new(&dict, RotationSet::default(), TransportConfig::default()).unwrap();
            for atom in dict.atoms.iter().filter(|a| a.hit_points().len() > 2) {
                let target = hits_of(atom);
                let own = t.candidate_search(&target).unwrap().into_iter().find(|c| c.atom_id == atom.id && c.alpha == 0.0).unwrap();
                let ks = t.transport_parameters(&own, &target).unwrap();
                let mean_disp: f64 = ks.iter().zip(&atom.params.kernels).map(|(a, b)| (a.pos_mean - b.pos_mean).norm()).sum::<f64>() / ks.len() as f64;
                assert!(mean_disp < 0.05 * atom.radius, "atom {} moved {mean_disp}", atom.id);
                for (a, b) in ks.iter().zip(&atom.params.kernels) {
                    assert_eq!((a.width_mean, a.width_disp, a.weight_mean, a.weight_var, a.pos_var), (b.width_mean, b.width_disp, b.weight_mean, b.weight_var, b.pos_var));
                }
            }
        }

        #[test]
        fn translation_moves_kernels_rigidly() {
            let dict = fixture_dict();
            let shift = Vec2::new(3.0, -1.0);
            for cfg in [TransportConfig::default(), sharp()] {
                let t = Transporter::new(&dict, RotationSet::default(), cfg).unwrap();
                let atom = &dict.atoms[1];
                let own = hits_of(atom);
                let pick = |target: &[LabeledPoint]| t.candidate_search(target).unwrap().into_iter().find(|c| c.atom_id == atom.id && c.alpha == 0.0).unwrap();
                let (c0, c1) = (pick(&own), pick(&moved(&own, Vec2::zeros(), 0.0, shift)));
                assert!((c0.cost - c1.cost).abs() < 1e-9);
                let k0 = t.transport_parameters(&c0, &own).unwrap();
                let k1 = t.transport_parameters(&c1, &moved(&own, Vec2::zeros(), 0.0, shift)).unwrap();
                for (a, b) in k0.iter().zip(&k1) {
                    assert!((b.pos_mean - (a.pos_mean + shift)).norm() < 1e-6);
                }
                if cfg.sinkhorn.lambda > 1e3 {
                    // a near-permutation plan makes the fitted map exactly the identity
                    for (a, b) in atom.params.kernels.iter().zip(&k1) {
                        assert!((b.pos_mean - (a.pos_mean + shift)).norm() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn rotated_and_translated_copy_is_equivariant() {
            let dict = fixture_dict();
            let rots = RotationSet::default();
            let shift = Vec2::new(-2.0, 5.0);
            let atom = &dict.atoms[4];
            let own = hits_of(atom);
            let pivot = crate::ot::centroid(&atom.hit_points());
            for cfg in [TransportConfig::default(), sharp()] {
                let t = Transporter::new(&dict, rots.clone(), cfg).unwrap();
                let self_ks = t.transport_parameters(&select_best(t.candidate_search(&own).unwrap()).unwrap(), &own).unwrap();
                for &alpha in &rots.angles()[1..3] {
                    let target = moved(&own, pivot, alpha, shift);
                    let (best, ks) = t.transport_best(&target).unwrap();
                    assert_eq!((best.atom_id.as_str(), best.alpha), (atom.id.as_str(), alpha));
                    let r = rotation(alpha);
                    for (a, b) in self_ks.iter().zip(&ks) {
                        let expect = r * (a.pos_mean - pivot) + pivot + shift;
                        assert!((b.pos_mean - expect).norm() < 1e-3);
                    }
                }
            }
        }

        #[test]
        fn candidate_costs_ignore_target_translation() {
            let dict = fixture_dict();
            let t = Transporter::new(&dict, RotationSet::uniform(4).unwrap(), TransportConfig::default()).unwrap();
            let target = hits_of(&dict.atoms[2]);
            let a = t.candidate_search(&target).unwrap();
            let b = t.candidate_search(&moved(&target, Vec2::zeros(), 0.0, Vec2::new(100.0, -40.0))).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!((&x.atom_id, x.alpha), (&y.atom_id, y.alpha));
                assert!((x.cost - y.cost).abs() < 1e-8 * (1.0 + x.cost));
            }
        }

        #[test]
        fn map_modes() {
            let dict = fixture_dict();
            let t = Transporter::new(&dict, RotationSet::uniform(2).unwrap(), TransportConfig::default()).unwrap();
            let scans = simulate(WorldKind::TownA, 50, 3, 3, &SimConfig { n_beams: 45, ..Default::default() }, 11);
            let pts = |i: usize| sample_free_points(&scans[i], 3, i as u64);

            let mut inst = MapState::new(MapMode::Instantaneous, 0.25);
            t.update_map(&mut inst, &scans[0], &pts(0), 3).unwrap();
            let step = t.update_map(&mut inst, &scans[1], &pts(1), 3).unwrap();
            assert_eq!(inst.len(), step.kernels.len());

            let mut overall = MapState::new(MapMode::Overall, 0.5);
            t.update_map(&mut overall, &scans[0], &pts(0), 3).unwrap();
            let before = overall.len();
            t.update_map(&mut overall, &scans[0], &pts(0), 3).unwrap();
            assert_eq!(overall.len(), before);

            let mut overall = MapState::new(MapMode::Overall, 0.25);
            let mut again = MapState::new(MapMode::Overall, 0.25);
            let mut last = 0;
            for i in 0..scans.len() {
                t.update_map(&mut overall, &scans[i], &pts(i), 3).unwrap();
                assert!(overall.len() >= last);
                last = overall.len();
                if i < 3 {
                    t.update_map(&mut again, &scans[i], &pts(i), 3).unwrap();
                }
            }
            let mut replay = MapState::new(MapMode::Overall, 0.25);
            for i in 0..3 {
                t.update_map(&mut replay, &scans[i], &pts(i), 3).unwrap();
            }
            assert_eq!(replay, again);
        }
    }
}

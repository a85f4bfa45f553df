//! End-to-end mapping runs: simulate source and target trajectories, build the
//! dictionary, transport every target scan, refine, and score everything on
//! held-out beams against an occupancy-grid reference.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::eval::{compute_metrics, split_indices, summarize, GridMap, MetricsReport, MetricsSummary, OgmConfig};
use crate::mapfile::write_map;
use crate::pot::{MapMode, MapState, RotationSet, SectorMatch, TransportConfig, Transporter};
use crate::render::render_map;
use crate::repot::{refine_weights, RefineConfig};
use crate::source::{build_dictionary, Dictionary, DictionaryConfig};
use crate::world::{generate_scan, sample_beam_points, trajectory, Bounds, LabeledPoint, Scan, WorldKind};
use crate::{rng, PotError, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_beams: usize,
    pub max_range: f64,
    pub noise_sd: f64,
    /// Distance between consecutive poses (m).
    pub step: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_beams: 90,
            max_range: 10.0,
            noise_sd: 0.0,
            step: 1.5,
        }
    }
}

/// Scans along the world's route. Scan ids are `first_id`, `first_id + 1`, ...
pub fn simulate(world: WorldKind, n: usize, first_id: usize, skip: usize, sim: &SimConfig, seed: u64) -> Vec<Scan> {
    let w = world.build();
    trajectory(&world.route(), skip + n, sim.step)
        .into_iter()
        .skip(skip)
        .enumerate()
        .map(|(i, pose)| {
            let id = first_id + i;
            generate_scan(&w, pose, sim.n_beams, sim.max_range, sim.noise_sd, rng::derive(seed, id as u64)).with_id(id.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source_world: WorldKind,
    pub target_world: WorldKind,
    pub n_source: usize,
    pub n_target: usize,
    pub sim: SimConfig,
    pub dict: DictionaryConfig,
    pub n_rotations: usize,
    pub transport: TransportConfig,
    pub mode: MapMode,
    pub dedup_radius: f64,
    pub refine: RefineConfig,
    pub test_frac: f64,
    pub ogm: OgmConfig,
    pub render_resolution: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source_world: WorldKind::Square,
            target_world: WorldKind::Arc,
            n_source: 10,
            n_target: 20,
            sim: SimConfig::default(),
            dict: DictionaryConfig::default(),
            n_rotations: 8,
            transport: TransportConfig::default(),
            mode: MapMode::Overall,
            dedup_radius: 0.25,
            refine: RefineConfig::default(),
            test_frac: 0.2,
            ogm: OgmConfig::default(),
            render_resolution: 0.1,
            seed: 0,
        }
    }
}

/// Source scans for the dictionary and target scans to map. When both worlds
/// coincide, one trajectory is used: its first `n_source` scans are the source.
pub fn experiment_scans(cfg: &ExperimentConfig) -> (Vec<Scan>, Vec<Scan>) {
    let seed = rng::derive(cfg.seed, 1);
    if cfg.source_world == cfg.target_world {
        let src = simulate(cfg.source_world, cfg.n_source, 0, 0, &cfg.sim, seed);
        let tgt = simulate(cfg.target_world, cfg.n_target, cfg.n_source, cfg.n_source, &cfg.sim, seed);
        (src, tgt)
    } else {
        let src = simulate(cfg.source_world, cfg.n_source, 0, 0, &cfg.sim, seed);
        let tgt = simulate(cfg.target_world, cfg.n_target, cfg.n_source, 0, &cfg.sim, rng::derive(cfg.seed, 2));
        (src, tgt)
    }
}

/// Held-out split of one scan: labeled points of the training beams and of the test beams.
pub fn split_scan(scan: &Scan, k_per_beam: usize, test_frac: f64, seed: u64) -> (Vec<LabeledPoint>, Vec<LabeledPoint>, Vec<usize>, Vec<usize>) {
    let id = crate::pot::id_seed(seed, &scan.id);
    let (train_idx, test_idx) = split_indices(scan.beams.len(), test_frac, rng::derive(id, 3));
    let pts_seed = rng::derive(id, 4);
    let gather = |idx: &[usize]| idx.iter().flat_map(|&b| sample_beam_points(scan, b, k_per_beam, pts_seed)).collect::<Vec<_>>();
    (gather(&train_idx), gather(&test_idx), train_idx, test_idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub id: String,
    /// `None` when the scan's test beams contain a single class.
    pub pot: Option<MetricsReport>,
    pub repot: Option<MetricsReport>,
    pub ogm: Option<MetricsReport>,
    pub matches: Vec<SectorMatch>,
    pub n_kernels: usize,
    pub elbo_monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanTiming {
    pub transport_s: f64,
    pub refine_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub pot: MetricsReport,
    pub repot: MetricsReport,
    pub ogm: MetricsReport,
    pub scans: Vec<ScanRecord>,
    pub timings: Vec<ScanTiming>,
    pub pot_map: MapState,
    pub repot_map: MapState,
    pub grid: GridMap,
    pub bounds: Bounds,
    pub n_atoms: usize,
}

impl ExperimentResult {
    pub fn summaries(&self) -> [(&'static str, MetricsReport, Option<MetricsSummary>); 3] {
        let per = |f: fn(&ScanRecord) -> Option<MetricsReport>| summarize(&self.scans.iter().filter_map(f).collect::<Vec<_>>());
        [
            ("pot", self.pot, per(|s| s.pot)),
            ("repot", self.repot, per(|s| s.repot)),
            ("ogm", self.ogm, per(|s| s.ogm)),
        ]
    }

    pub fn elbo_monotone(&self) -> bool {
        self.scans.iter().all(|s| s.elbo_monotone)
    }
}

fn scan_metrics(p: &[f64], l: &[u8]) -> Option<MetricsReport> {
    compute_metrics(p, l).ok()
}

/// Runs the full experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (source, target) = experiment_scans(cfg);
    let dict_cfg = DictionaryConfig {
        seed: rng::derive(cfg.seed, 5),
        ..cfg.dict
    };
    let dict = build_dictionary(&source, &dict_cfg)?;
    run_on_scans(cfg, &dict, &target, cfg.target_world.build().bounds())
}

/// Maps `target` with an existing dictionary. `area` bounds the occupancy grid and the images.
pub fn run_on_scans(cfg: &ExperimentConfig, dict: &Dictionary, target: &[Scan], area: Bounds) -> Result<ExperimentResult> {
    if target.is_empty() {
        return Err(PotError::InvalidArgument("no target scans".into()));
    }
    let tcfg = TransportConfig {
        seed: rng::derive(cfg.seed, 6),
        ..cfg.transport
    };
    let transporter = Transporter::new(dict, RotationSet::uniform(cfg.n_rotations)?, tcfg)?;
    let bounds = area.padded(1.0);
    let mut pot_map = MapState::new(cfg.mode, cfg.dedup_radius);
    let mut repot_map = MapState::new(cfg.mode, cfg.dedup_radius);
    let mut grid = GridMap::new(bounds, &cfg.ogm)?;
    let (mut all_pot, mut all_repot, mut all_ogm, mut all_labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut scans = Vec::with_capacity(target.len());
    let mut timings = Vec::with_capacity(target.len());
    let split_seed = rng::derive(cfg.seed, 7);

    for scan in target {
        let (train, test, train_idx, _) = split_scan(scan, cfg.dict.k_per_beam, cfg.test_frac, split_seed);
        let t0 = Instant::now();
        let step = transporter.transport_scan(scan, &train, cfg.dict.n_sectors)?;
        let transport_s = t0.elapsed().as_secs_f64();
        pot_map.absorb(step.kernels.clone());
        repot_map.absorb(step.kernels);

        let t1 = Instant::now();
        let mut elbo_monotone = true;
        if !repot_map.is_empty() {
            let (refined, trace) = refine_weights(&repot_map, &train, &cfg.refine)?;
            elbo_monotone = trace.elbo_per_iter.windows(2).all(|w| w[1] >= w[0] - 1e-8);
            repot_map = refined;
        }
        let refine_s = t1.elapsed().as_secs_f64();

        if cfg.mode == MapMode::Instantaneous {
            grid = GridMap::new(bounds, &cfg.ogm)?;
        }
        let origin = scan.pose.position();
        for &b in &train_idx {
            grid.integrate_beam(origin, scan.endpoint(b), scan.beams[b].hit, cfg.ogm.inc_occ, cfg.ogm.dec_free);
        }

        let labels: Vec<u8> = test.iter().map(|p| p.label).collect();
        let predict = |m: &MapState| -> Vec<f64> { test.iter().map(|p| m.params.predict_with_uncertainty(p.position).mean).collect() };
        let p_pot = predict(&pot_map);
        let p_repot = predict(&repot_map);
        let p_ogm: Vec<f64> = test.iter().map(|p| grid.probability(p.position)).collect();
        scans.push(ScanRecord {
            id: scan.id.clone(),
            pot: scan_metrics(&p_pot, &labels),
            repot: scan_metrics(&p_repot, &labels),
            ogm: scan_metrics(&p_ogm, &labels),
            matches: step.matches,
            n_kernels: pot_map.len(),
            elbo_monotone,
        });
        timings.push(ScanTiming { transport_s, refine_s });
        all_pot.extend(p_pot);
        all_repot.extend(p_repot);
        all_ogm.extend(p_ogm);
        all_labels.extend(labels);
    }

    Ok(ExperimentResult {
        pot: compute_metrics(&all_pot, &all_labels)?,
        repot: compute_metrics(&all_repot, &all_labels)?,
        ogm: compute_metrics(&all_ogm, &all_labels)?,
        scans,
        timings,
        pot_map,
        repot_map,
        grid,
        bounds,
        n_atoms: dict.atoms.len(),
    })
}

/// Machine-readable `key=value` metrics. Contains no timing, so it is
/// byte-identical across runs with the same configuration.
pub fn format_metrics(res: &ExperimentResult) -> String {
    let mut out = String::new();
    for (name, pooled, per) in res.summaries() {
        let _ = writeln!(out, "{name}.acc={:.9}", pooled.acc);
        let _ = writeln!(out, "{name}.auc={:.9}", pooled.auc);
        let _ = writeln!(out, "{name}.nll={:.9}", pooled.nll);
        let _ = writeln!(out, "{name}.n={}", pooled.n_test);
        if let Some(s) = per {
            let _ = writeln!(out, "{name}.scan_mean.acc={:.9}", s.mean.acc);
            let _ = writeln!(out, "{name}.scan_mean.auc={:.9}", s.mean.auc);
            let _ = writeln!(out, "{name}.scan_mean.nll={:.9}", s.mean.nll);
            let _ = writeln!(out, "{name}.scan_sd.acc={:.9}", s.sd.0);
            let _ = writeln!(out, "{name}.scan_sd.auc={:.9}", s.sd.1);
            let _ = writeln!(out, "{name}.scan_sd.nll={:.9}", s.sd.2);
            let _ = writeln!(out, "{name}.scans_scored={}", s.n_scans);
        }
    }
    let _ = writeln!(out, "n_scans={}", res.scans.len());
    let _ = writeln!(out, "n_atoms={}", res.n_atoms);
    let _ = writeln!(out, "pot.n_kernels={}", res.pot_map.len());
    let _ = writeln!(out, "repot.elbo_monotone={}", res.elbo_monotone());
    out
}

pub fn format_report(res: &ExperimentResult, ogm: &OgmConfig) -> String {
    let mut out = String::new();
    for (name, pooled, per) in res.summaries() {
        let label = match name {
            "pot" => "POT  ",
            "repot" => "RePOT",
            _ => "OGM  ",
        };
        let _ = writeln!(out, "{label} {pooled}");
        if let Some(s) = per {
            let _ = writeln!(
                out,
                "      per-scan ACC={:.4}±{:.4} AUC={:.4}±{:.4} NLL={:.4}±{:.4} over {} scans",
                s.mean.acc, s.sd.0, s.mean.auc, s.sd.1, s.mean.nll, s.sd.2, s.n_scans
            );
        }
    }
    let _ = writeln!(
        out,
        "OGM reference: resolution={} inc_occ={} dec_free={} clamp=[{}, {}]",
        ogm.resolution, ogm.inc_occ, ogm.dec_free, ogm.clamp.0, ogm.clamp.1
    );
    out
}

pub fn format_timing(res: &ExperimentResult) -> String {
    let mut out = String::from("scan transport_s refine_s\n");
    for (s, t) in res.scans.iter().zip(&res.timings) {
        let _ = writeln!(out, "{} {:.6} {:.6}", s.id, t.transport_s, t.refine_s);
    }
    out
}

/// Writes metrics, report, timing, final maps and their images into `dir`.
pub fn write_outputs(res: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.txt"), format_metrics(res))?;
    fs::write(dir.join("report.txt"), format_report(res, &cfg.ogm))?;
    fs::write(dir.join("timing.txt"), format_timing(res))?;
    write_map(&dir.join("pot.map"), &res.pot_map)?;
    write_map(&dir.join("repot.map"), &res.repot_map)?;
    for (name, map) in [("pot", &res.pot_map), ("repot", &res.repot_map)] {
        let (mean, var) = render_map(map, &res.bounds, cfg.render_resolution)?;
        mean.write_pgm(&dir.join(format!("{name}_mean.pgm")))?;
        var.write_pgm(&dir.join(format!("{name}_var.pgm")))?;
    }
    Ok(())
}

/// Mean `|w̄|` near hits versus far from all data, and the mean moderated
/// prediction over `probes` that lie far from all data.
pub fn observation_diagnostic(map: &MapState, data: &[LabeledPoint], probes: &[Vec2], near: f64, far: f64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let hits: Vec<Vec2> = data.iter().filter(|p| p.is_hit()).map(|p| p.position).collect();
    let all: Vec<Vec2> = data.iter().map(|p| p.position).collect();
    let (w_near, w_far) = crate::eval::weight_locality(&map.params, &hits, &all, near, far);
    let far_probes: Vec<f64> = probes
        .iter()
        .filter(|q| all.iter().all(|p| (*p - **q).norm() > far))
        .map(|q| map.params.predict_with_uncertainty(*q).mean)
        .collect();
    let mean_far = (!far_probes.is_empty()).then(|| far_probes.iter().sum::<f64>() / far_probes.len() as f64);
    (w_near, w_far, mean_far)
}

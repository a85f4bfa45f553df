//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use pot_core::experiment::ExperimentConfig;
use pot_core::world::{Bounds, WorldKind};
use pot_core::Vec2;

/// Everything a subcommand can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub exp: ExperimentConfig,
    /// World for `simulate`.
    pub world: WorldKind,
    pub n_scans: usize,
    /// Poses skipped at the start of the route by `simulate`.
    pub skip: usize,
    pub scans: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub map: Option<PathBuf>,
    pub bbox: Option<Bounds>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            exp: ExperimentConfig::default(),
            world: WorldKind::Square,
            n_scans: 10,
            skip: 0,
            scans: None,
            dict: None,
            map: None,
            bbox: None,
            out: PathBuf::from("pot-out"),
        }
    }
}

/// Every recognised key, in the order `format` writes them.
pub const KEYS: &[&str] = &[
    "source_world",
    "target_world",
    "n_source",
    "n_target",
    "n_beams",
    "max_range",
    "noise_sd",
    "step",
    "n_sectors",
    "k_per_beam",
    "kernels_per_sector",
    "width_c",
    "width_knn",
    "gamma_min",
    "gamma_max",
    "prior_weight_var",
    "vb_max_iter",
    "vb_tol",
    "rotations",
    "lambda",
    "max_iter",
    "marginal_tol",
    "subsample_cap",
    "ridge",
    "scale_normalize",
    "mode",
    "dedup_radius",
    "refine_max_iter",
    "refine_tol",
    "neighborhood",
    "test_frac",
    "ogm_resolution",
    "ogm_inc_occ",
    "ogm_dec_free",
    "ogm_clamp",
    "render_resolution",
    "seed",
    "world",
    "n_scans",
    "skip",
    "scans",
    "dict",
    "map",
    "bbox",
    "out",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().ok().with_context(|| format!("invalid value '{v}' for '{key}'"))
}

/// `key = value` pairs of a config file. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').with_context(|| format!("line {}: expected key = value", i + 1))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let e = &mut self.exp;
        match key {
            "source_world" => e.source_world = v.parse()?,
            "target_world" => e.target_world = v.parse()?,
            "n_source" => e.n_source = num(key, v)?,
            "n_target" => e.n_target = num(key, v)?,
            "n_beams" => e.sim.n_beams = num(key, v)?,
            "max_range" => e.sim.max_range = num(key, v)?,
            "noise_sd" => e.sim.noise_sd = num(key, v)?,
            "step" => e.sim.step = num(key, v)?,
            "n_sectors" => e.dict.n_sectors = num(key, v)?,
            "k_per_beam" => e.dict.k_per_beam = num(key, v)?,
            "kernels_per_sector" => e.dict.kernels_per_sector = num(key, v)?,
            "width_c" => e.dict.width_c = num(key, v)?,
            "width_knn" => e.dict.width_knn = num(key, v)?,
            "gamma_min" => e.dict.gamma_min = num(key, v)?,
            "gamma_max" => e.dict.gamma_max = num(key, v)?,
            "prior_weight_var" => e.dict.prior_weight_var = num(key, v)?,
            "vb_max_iter" => e.dict.vb.max_iter = num(key, v)?,
            "vb_tol" => e.dict.vb.tol = num(key, v)?,
            "rotations" => e.n_rotations = num(key, v)?,
            "lambda" => e.transport.sinkhorn.lambda = num(key, v)?,
            "max_iter" => e.transport.sinkhorn.max_iter = num(key, v)?,
            "marginal_tol" => e.transport.sinkhorn.marginal_tol = num(key, v)?,
            "subsample_cap" => e.transport.subsample_cap = num(key, v)?,
            "ridge" => e.transport.ridge = num(key, v)?,
            "scale_normalize" => e.transport.scale_normalize = num(key, v)?,
            "mode" => e.mode = v.parse()?,
            "dedup_radius" => e.dedup_radius = num(key, v)?,
            "refine_max_iter" => e.refine.max_iter = num(key, v)?,
            "refine_tol" => e.refine.tol = num(key, v)?,
            "neighborhood" => e.refine.neighborhood = num(key, v)?,
            "test_frac" => e.test_frac = num(key, v)?,
            "ogm_resolution" => e.ogm.resolution = num(key, v)?,
            "ogm_inc_occ" => e.ogm.inc_occ = num(key, v)?,
            "ogm_dec_free" => e.ogm.dec_free = num(key, v)?,
            "ogm_clamp" => {
                let c: f64 = num(key, v)?;
                e.ogm.clamp = (-c, c);
            }
            "render_resolution" => e.render_resolution = num(key, v)?,
            "seed" => e.seed = num(key, v)?,
            "world" => self.world = v.parse()?,
            "n_scans" => self.n_scans = num(key, v)?,
            "skip" => self.skip = num(key, v)?,
            "scans" => self.scans = Some(v.into()),
            "dict" => self.dict = Some(v.into()),
            "map" => self.map = Some(v.into()),
            "bbox" => {
                let c: Vec<f64> = v.split(',').map(|t| num(key, t.trim())).collect::<Result<_>>()?;
                ensure!(c.len() == 4, "bbox needs xmin,ymin,xmax,ymax");
                self.bbox = Some(Bounds::new(Vec2::new(c[0], c[1]), Vec2::new(c[2], c[3])));
            }
            "out" => self.out = v.into(),
            _ => bail!("unknown config key '{key}'"),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.exp;
        ensure!(e.n_source >= 1 && e.n_target >= 1, "n_source and n_target must be at least 1");
        ensure!(e.sim.n_beams >= 1, "n_beams must be at least 1");
        ensure!(e.sim.max_range > 0.0, "max_range must be positive");
        ensure!(e.sim.noise_sd >= 0.0, "noise_sd must be nonnegative");
        ensure!(e.sim.step > 0.0, "step must be positive");
        ensure!(e.dict.n_sectors >= 1, "n_sectors must be at least 1");
        ensure!(e.dict.kernels_per_sector >= 1, "kernels_per_sector must be at least 1");
        ensure!(e.dict.width_c > 0.0 && e.dict.width_knn >= 1, "width_c must be positive and width_knn at least 1");
        ensure!(
            e.dict.gamma_min > 0.0 && e.dict.gamma_min < e.dict.gamma_max,
            "need 0 < gamma_min < gamma_max"
        );
        ensure!(e.dict.prior_weight_var > 0.0, "prior_weight_var must be positive");
        ensure!(e.dict.vb.max_iter >= 1 && e.dict.vb.tol > 0.0, "vb_max_iter must be at least 1 and vb_tol positive");
        ensure!(e.n_rotations >= 1, "rotations must be at least 1");
        ensure!(e.transport.sinkhorn.lambda > 0.0 && e.transport.sinkhorn.lambda.is_finite(), "lambda must be positive");
        ensure!(e.transport.sinkhorn.max_iter >= 1, "max_iter must be at least 1");
        ensure!(e.transport.sinkhorn.marginal_tol > 0.0, "marginal_tol must be positive");
        ensure!(e.transport.subsample_cap >= 1, "subsample_cap must be at least 1");
        ensure!(e.transport.ridge >= 0.0, "ridge must be nonnegative");
        ensure!(e.dedup_radius >= 0.0, "dedup_radius must be nonnegative");
        e.refine.validate()?;
        ensure!(e.test_frac > 0.0 && e.test_frac < 1.0, "test_frac must be in (0, 1)");
        ensure!(e.ogm.resolution > 0.0 && e.ogm.clamp.1 > 0.0, "ogm_resolution and ogm_clamp must be positive");
        ensure!(e.ogm.inc_occ >= 0.0 && e.ogm.dec_free >= 0.0, "ogm increments must be nonnegative");
        ensure!(e.render_resolution > 0.0, "render_resolution must be positive");
        ensure!(self.n_scans >= 1, "n_scans must be at least 1");
        if let Some(b) = &self.bbox {
            ensure!(b.width() > 0.0 && b.height() > 0.0, "bbox is empty");
        }
        Ok(())
    }

    /// The resolved configuration, readable back with `parse_pairs`.
    pub fn format(&self) -> String {
        let e = &self.exp;
        let mut out = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for &key in KEYS {
            let v = match key {
                "source_world" => Some(e.source_world.to_string()),
                "target_world" => Some(e.target_world.to_string()),
                "n_source" => Some(e.n_source.to_string()),
                "n_target" => Some(e.n_target.to_string()),
                "n_beams" => Some(e.sim.n_beams.to_string()),
                "max_range" => Some(e.sim.max_range.to_string()),
                "noise_sd" => Some(e.sim.noise_sd.to_string()),
                "step" => Some(e.sim.step.to_string()),
                "n_sectors" => Some(e.dict.n_sectors.to_string()),
                "k_per_beam" => Some(e.dict.k_per_beam.to_string()),
                "kernels_per_sector" => Some(e.dict.kernels_per_sector.to_string()),
                "width_c" => Some(e.dict.width_c.to_string()),
                "width_knn" => Some(e.dict.width_knn.to_string()),
                "gamma_min" => Some(e.dict.gamma_min.to_string()),
                "gamma_max" => Some(e.dict.gamma_max.to_string()),
                "prior_weight_var" => Some(e.dict.prior_weight_var.to_string()),
                "vb_max_iter" => Some(e.dict.vb.max_iter.to_string()),
                "vb_tol" => Some(e.dict.vb.tol.to_string()),
                "rotations" => Some(e.n_rotations.to_string()),
                "lambda" => Some(e.transport.sinkhorn.lambda.to_string()),
                "max_iter" => Some(e.transport.sinkhorn.max_iter.to_string()),
                "marginal_tol" => Some(e.transport.sinkhorn.marginal_tol.to_string()),
                "subsample_cap" => Some(e.transport.subsample_cap.to_string()),
                "ridge" => Some(e.transport.ridge.to_string()),
                "scale_normalize" => Some(e.transport.scale_normalize.to_string()),
                "mode" => Some(e.mode.to_string()),
                "dedup_radius" => Some(e.dedup_radius.to_string()),
                "refine_max_iter" => Some(e.refine.max_iter.to_string()),
                "refine_tol" => Some(e.refine.tol.to_string()),
                "neighborhood" => Some(e.refine.neighborhood.to_string()),
                "test_frac" => Some(e.test_frac.to_string()),
                "ogm_resolution" => Some(e.ogm.resolution.to_string()),
                "ogm_inc_occ" => Some(e.ogm.inc_occ.to_string()),
                "ogm_dec_free" => Some(e.ogm.dec_free.to_string()),
                "ogm_clamp" => Some(e.ogm.clamp.1.to_string()),
                "render_resolution" => Some(e.render_resolution.to_string()),
                "seed" => Some(e.seed.to_string()),
                "world" => Some(self.world.to_string()),
                "n_scans" => Some(self.n_scans.to_string()),
                "skip" => Some(self.skip.to_string()),
                "scans" => path(&self.scans),
                "dict" => path(&self.dict),
                "map" => path(&self.map),
                "bbox" => self.bbox.map(|b| format!("{},{},{},{}", b.min.x, b.min.y, b.max.x, b.max.y)),
                "out" => Some(self.out.display().to_string()),
                _ => unreachable!("every key is listed"),
            };
            if let Some(v) = v {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}

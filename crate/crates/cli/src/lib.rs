//! `pot` command-line driver.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pot_core::eval::{accuracy, compute_metrics, nll};
use pot_core::experiment::{format_report, run_experiment, simulate, write_outputs};
use pot_core::mapfile::{read_map, write_map};
use pot_core::pot::id_seed;
use pot_core::render::render_map;
use pot_core::repot::refine_weights;
use pot_core::source::build_dictionary;
use pot_core::source::io::{read_dictionary, write_dictionary};
use pot_core::world::io::{read_scans, write_scans};
use pot_core::world::{sample_free_points, Bounds, Scan};
use pot_core::{rng, LabeledPoint, MapState, RotationSet, TransportConfig, Transporter};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "pot", version, about = "Occupancy mapping by parameter optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scans along a fixture world's route.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: Option<String>,
        /// Number of scans.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Learn a dictionary of atoms from source scans.
    BuildDict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        scans: Option<PathBuf>,
    },
    /// Transport dictionary parameters onto target scans.
    Transport {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        dict: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        scans: Option<PathBuf>,
        /// Existing map to extend (overall mode).
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
    },
    /// Refine map weights on scan data.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        scans: Option<PathBuf>,
    },
    /// Score a map on the labeled points of scans.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        scans: Option<PathBuf>,
    },
    /// Render a map as PGM images.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        map: Option<PathBuf>,
        /// `xmin,ymin,xmax,ymax`
        #[arg(long, allow_hyphen_values = true)]
        bbox: Option<String>,
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Simulate, build, transport, refine, evaluate and render in one run.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Simulate { common, .. }
            | Self::BuildDict { common, .. }
            | Self::Transport { common, .. }
            | Self::Refine { common, .. }
            | Self::Evaluate { common, .. }
            | Self::Render { common, .. }
            | Self::Pipeline { common } => common,
        }
    }

    /// Subcommand flags as config overrides.
    fn flag_pairs(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_owned(), val));
            }
        };
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        match self {
            Self::Simulate { world, n, .. } => {
                push("world", world.clone());
                push("n_scans", n.map(|n| n.to_string()));
            }
            Self::BuildDict { scans, .. } => push("scans", p(scans)),
            Self::Transport { dict, scans, map, .. } => {
                push("dict", p(dict));
                push("scans", p(scans));
                push("map", p(map));
            }
            Self::Refine { map, scans, .. } | Self::Evaluate { map, scans, .. } => {
                push("map", p(map));
                push("scans", p(scans));
            }
            Self::Render { map, bbox, resolution, .. } => {
                push("map", p(map));
                push("bbox", bbox.clone());
                push("render_resolution", resolution.map(|r| r.to_string()));
            }
            Self::Pipeline { .. } => {}
        }
        v
    }
}

/// Config file, then `--set`, then dedicated flags.
pub fn resolve_config(cmd: &Command) -> Result<RunConfig> {
    let common = cmd.common();
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply(&config::parse_pairs(&text).with_context(|| format!("in {}", path.display()))?)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for s in &common.set {
        let (k, v) = s.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got '{s}'"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.apply(&cmd.flag_pairs())?;
    if let Some(seed) = common.seed {
        cfg.exp.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => bail!("missing {what}: pass --{what} FILE or set '{what}' in the config"),
    }
}

/// All labeled points of a scan, seeded by the scan id.
fn scan_points(scan: &Scan, cfg: &RunConfig) -> Vec<LabeledPoint> {
    sample_free_points(scan, cfg.exp.dict.k_per_beam, id_seed(rng::derive(cfg.exp.seed, 8), &scan.id))
}

fn simulate_cmd(cfg: &RunConfig) -> Result<()> {
    let scans = simulate(cfg.world, cfg.n_scans, cfg.skip, cfg.skip, &cfg.exp.sim, rng::derive(cfg.exp.seed, 1));
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("scans.txt");
    write_scans(&path, &scans)?;
    println!("wrote {} scans to {}", scans.len(), path.display());
    Ok(())
}

fn build_dict_cmd(cfg: &RunConfig) -> Result<()> {
    let scans = read_scans(need(&cfg.scans, "scans")?)?;
    let dcfg = pot_core::DictionaryConfig {
        seed: rng::derive(cfg.exp.seed, 5),
        ..cfg.exp.dict
    };
    let dict = build_dictionary(&scans, &dcfg)?;
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("dict.txt");
    write_dictionary(&path, &dict)?;
    println!("wrote {} atoms to {}", dict.atoms.len(), path.display());
    Ok(())
}

fn load_or_new_map(cfg: &RunConfig) -> Result<MapState> {
    Ok(match &cfg.map {
        Some(p) => read_map(p)?,
        None => MapState::new(cfg.exp.mode, cfg.exp.dedup_radius),
    })
}

fn transport_cmd(cfg: &RunConfig) -> Result<()> {
    let dict = read_dictionary(need(&cfg.dict, "dict")?)?;
    let scans = read_scans(need(&cfg.scans, "scans")?)?;
    let tcfg = TransportConfig {
        seed: rng::derive(cfg.exp.seed, 6),
        ..cfg.exp.transport
    };
    let t = Transporter::new(&dict, RotationSet::uniform(cfg.exp.n_rotations)?, tcfg)?;
    let mut state = load_or_new_map(cfg)?;
    let mut timing = String::from("scan seconds kernels\n");
    for scan in &scans {
        let start = Instant::now();
        let step = t.update_map(&mut state, scan, &scan_points(scan, cfg), cfg.exp.dict.n_sectors)?;
        let secs = start.elapsed().as_secs_f64();
        println!("scan {} transported {} kernels in {secs:.3} s (map has {})", scan.id, step.kernels.len(), state.len());
        timing.push_str(&format!("{} {secs:.6} {}\n", scan.id, state.len()));
    }
    fs::create_dir_all(&cfg.out)?;
    write_map(&cfg.out.join("map.txt"), &state)?;
    fs::write(cfg.out.join("timing.txt"), timing)?;
    println!("wrote {}", cfg.out.join("map.txt").display());
    Ok(())
}

fn refine_cmd(cfg: &RunConfig) -> Result<()> {
    let mut state = read_map(need(&cfg.map, "map")?)?;
    let scans = read_scans(need(&cfg.scans, "scans")?)?;
    for scan in &scans {
        let (next, trace) = refine_weights(&state, &scan_points(scan, cfg), &cfg.exp.refine)?;
        println!("scan {} refined in {} iterations", scan.id, trace.iterations);
        state = next;
    }
    fs::create_dir_all(&cfg.out)?;
    write_map(&cfg.out.join("refined.txt"), &state)?;
    println!("wrote {}", cfg.out.join("refined.txt").display());
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let state = read_map(need(&cfg.map, "map")?)?;
    let scans = read_scans(need(&cfg.scans, "scans")?)?;
    let points: Vec<LabeledPoint> = scans.iter().flat_map(|s| scan_points(s, cfg)).collect();
    let preds: Vec<f64> = points.iter().map(|p| state.params.predict_with_uncertainty(p.position).mean).collect();
    let labels: Vec<u8> = points.iter().map(|p| p.label).collect();
    let (report, metrics) = match compute_metrics(&preds, &labels) {
        Ok(m) => (m.to_string(), format!("acc={:.9}\nauc={:.9}\nnll={:.9}\nn={}\n", m.acc, m.auc, m.nll, m.n_test)),
        Err(_) => {
            let (acc, nll) = (accuracy(&preds, &labels)?, nll(&preds, &labels)?);
            let n = labels.len();
            (
                format!("ACC={acc:.6} AUC=undefined NLL={nll:.6} N={n}"),
                format!("acc={acc:.9}\nnll={nll:.9}\nn={n}\n"),
            )
        }
    };
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("metrics.txt"), metrics)?;
    println!("{report}");
    Ok(())
}

fn render_cmd(cfg: &RunConfig) -> Result<()> {
    let state = read_map(need(&cfg.map, "map")?)?;
    let bbox = match cfg.bbox {
        Some(b) => b,
        None => {
            let mut b = Bounds::empty();
            for k in state.kernels() {
                b.include(k.pos_mean);
            }
            if state.is_empty() {
                bail!("empty map: pass --bbox");
            }
            b.padded(2.0)
        }
    };
    let (mean, var) = render_map(&state, &bbox, cfg.exp.render_resolution)?;
    fs::create_dir_all(&cfg.out)?;
    mean.write_pgm(&cfg.out.join("mean.pgm"))?;
    var.write_pgm(&cfg.out.join("var.pgm"))?;
    println!("wrote {}x{} images to {}", mean.width, mean.height, cfg.out.display());
    Ok(())
}

fn pipeline_cmd(cfg: &RunConfig) -> Result<()> {
    let res = run_experiment(&cfg.exp)?;
    write_outputs(&res, &cfg.exp, &cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.format())?;
    print!("{}", format_report(&res, &cfg.exp.ogm));
    println!("outputs in {}", cfg.out.display());
    Ok(())
}

pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Simulate { .. } => simulate_cmd(cfg),
        Command::BuildDict { .. } => build_dict_cmd(cfg),
        Command::Transport { .. } => transport_cmd(cfg),
        Command::Refine { .. } => refine_cmd(cfg),
        Command::Evaluate { .. } => evaluate_cmd(cfg),
        Command::Render { .. } => render_cmd(cfg),
        Command::Pipeline { .. } => pipeline_cmd(cfg),
    }
}

/// Runs `pot` with the given arguments (program name first). Returns the exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    match execute(&cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

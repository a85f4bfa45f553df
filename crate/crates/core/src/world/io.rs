//! Line-oriented scan files.
//!
//! ```text
//! POTSCAN 1
//! SCAN <id> <x> <y> <heading> <max_range> <n_beams>
//! <angle> <range> <hit:0|1>      (n_beams lines)
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits so a
//! read after write reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Beam, Pose2, Scan};
use crate::{PotError, Result};

pub const SCAN_HEADER: &str = "POTSCAN";
pub const SCAN_VERSION: u32 = 1;

/// Formats a real so that parsing it yields the same bits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_scans(path: &Path, scans: &[Scan]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{SCAN_HEADER} {SCAN_VERSION}\n"));
    for s in scans {
        out.push_str(&format!(
            "SCAN {} {} {} {} {} {}\n",
            s.id,
            fmt_real(s.pose.x),
            fmt_real(s.pose.y),
            fmt_real(s.pose.heading),
            fmt_real(s.max_range),
            s.beams.len()
        ));
        for b in &s.beams {
            out.push_str(&format!("{} {} {}\n", fmt_real(b.angle), fmt_real(b.range), u8::from(b.hit)));
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_scans(path: &Path) -> Result<Vec<Scan>> {
    let text = fs::read_to_string(path)?;
    parse_scans(&text, path)
}

/// Parses scan-file text. `path` is only used in error messages.
pub fn parse_scans(text: &str, path: &Path) -> Result<Vec<Scan>> {
    let perr = |line: usize, msg: String| PotError::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());

    let (n, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let mut h = header.split_whitespace();
    if h.next() != Some(SCAN_HEADER) {
        return Err(perr(n, format!("expected '{SCAN_HEADER}' header")));
    }
    match h.next().map(str::parse::<u32>) {
        Some(Ok(SCAN_VERSION)) => {}
        Some(Ok(v)) => {
            return Err(PotError::Format {
                path: path.to_owned(),
                msg: format!("scan file version {v}, expected {SCAN_VERSION}"),
            })
        }
        _ => return Err(perr(n, "malformed version".into())),
    }

    let mut scans = Vec::new();
    while let Some((n, line)) = lines.next() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 || f[0] != "SCAN" {
            return Err(perr(n, "expected 'SCAN <id> <x> <y> <heading> <max_range> <n_beams>'".into()));
        }
        let x = real(f[2], n, &perr)?;
        let y = real(f[3], n, &perr)?;
        let heading = real(f[4], n, &perr)?;
        let max_range = real(f[5], n, &perr)?;
        if max_range <= 0.0 {
            return Err(perr(n, "max_range must be positive".into()));
        }
        let n_beams: usize = f[6].parse().map_err(|_| perr(n, format!("bad beam count '{}'", f[6])))?;
        let mut beams = Vec::with_capacity(n_beams);
        for _ in 0..n_beams {
            let (bn, bl) = lines
                .next()
                .ok_or_else(|| perr(n, format!("scan '{}' truncated", f[1])))?;
            let bf: Vec<&str> = bl.split_whitespace().collect();
            if bf.len() != 3 {
                return Err(perr(bn, "expected '<angle> <range> <hit>'".into()));
            }
            let angle = real(bf[0], bn, &perr)?;
            let range = real(bf[1], bn, &perr)?;
            let hit = match bf[2] {
                "0" => false,
                "1" => true,
                other => return Err(perr(bn, format!("hit flag must be 0 or 1, got '{other}'"))),
            };
            if !(range > 0.0 && range <= max_range) {
                return Err(perr(bn, format!("range {range} outside (0, {max_range}]")));
            }
            if !hit && range != max_range {
                return Err(perr(bn, "non-returning beam must have range = max_range".into()));
            }
            beams.push(Beam { angle, range, hit });
        }
        // Pose::new would renormalize; keep the stored heading bits as written.
        scans.push(Scan {
            id: f[1].to_owned(),
            pose: Pose2 { x, y, heading },
            beams,
            max_range,
        });
    }
    Ok(scans)
}

fn real(tok: &str, line: usize, perr: &impl Fn(usize, String) -> PotError) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(perr(line, format!("bad number '{tok}'"))),
    }
}

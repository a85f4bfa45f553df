//! Dictionary files.
//!
//! ```text
//! POTDICT 1
//! META <key> <value>                                   (optional, any number)
//! ATOM <id> <centroid_x> <centroid_y> <radius> <n_points> <n_kernels>
//! <x> <y> <label>                                      (n_points lines)
//! <hx> <hy> <hvx> <hvy> <gmean> <gdisp> <wmean> <wvar> (n_kernels lines)
//! ```

use std::fs;
use std::path::Path;

use super::{Atom, Dictionary, DICTIONARY_VERSION};
use crate::model::{Kernel, ParameterSet};
use crate::world::io::fmt_real;
use crate::world::LabeledPoint;
use crate::{PotError, Result, Vec2};

pub const DICT_HEADER: &str = "POTDICT";

pub fn kernel_line(k: &Kernel) -> String {
    [
        k.pos_mean.x,
        k.pos_mean.y,
        k.pos_var.x,
        k.pos_var.y,
        k.width_mean,
        k.width_disp,
        k.weight_mean,
        k.weight_var,
    ]
    .iter()
    .map(|v| fmt_real(*v))
    .collect::<Vec<_>>()
    .join(" ")
}

/// Parses a kernel line; `None` on any malformed or invalid field.
pub fn parse_kernel(line: &str) -> Option<Kernel> {
    let v: Vec<f64> = line.split_whitespace().map(|t| t.parse::<f64>().ok()).collect::<Option<_>>()?;
    if v.len() != 8 || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let k = Kernel {
        pos_mean: Vec2::new(v[0], v[1]),
        pos_var: Vec2::new(v[2], v[3]),
        width_mean: v[4],
        width_disp: v[5],
        weight_mean: v[6],
        weight_var: v[7],
    };
    k.is_valid().then_some(k)
}

pub fn format_dictionary(dict: &Dictionary) -> String {
    let mut out = format!("{DICT_HEADER} {}\n", dict.version);
    for (k, v) in &dict.meta {
        out.push_str(&format!("META {k} {v}\n"));
    }
    for a in &dict.atoms {
        out.push_str(&format!(
            "ATOM {} {} {} {} {} {}\n",
            a.id,
            fmt_real(a.centroid.x),
            fmt_real(a.centroid.y),
            fmt_real(a.radius),
            a.points.len(),
            a.params.len()
        ));
        for p in &a.points {
            out.push_str(&format!("{} {} {}\n", fmt_real(p.position.x), fmt_real(p.position.y), p.label));
        }
        for k in &a.params.kernels {
            out.push_str(&kernel_line(k));
            out.push('\n');
        }
    }
    out
}

pub fn write_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    fs::write(path, format_dictionary(dict))?;
    Ok(())
}

pub fn read_dictionary(path: &Path) -> Result<Dictionary> {
    parse_dictionary(&fs::read_to_string(path)?, path)
}

pub fn parse_dictionary(text: &str, path: &Path) -> Result<Dictionary> {
    let perr = |line: usize, msg: String| PotError::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty()).peekable();
    let (n, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 2 || h[0] != DICT_HEADER {
        return Err(perr(n, format!("expected '{DICT_HEADER} <version>'")));
    }
    let version: u32 = h[1].parse().map_err(|_| perr(n, "malformed version".into()))?;
    if version != DICTIONARY_VERSION {
        return Err(PotError::Format {
            path: path.to_owned(),
            msg: format!("dictionary version {version}, expected {DICTIONARY_VERSION}"),
        });
    }

    let mut meta = Vec::new();
    while let Some((n, l)) = lines.next_if(|(_, l)| l.starts_with("META")) {
        let mut it = l.splitn(3, ' ');
        it.next();
        let key = it.next().ok_or_else(|| perr(n, "META without key".into()))?;
        meta.push((key.to_owned(), it.next().unwrap_or("").to_owned()));
    }

    let mut atoms = Vec::new();
    while let Some((n, line)) = lines.next() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 || f[0] != "ATOM" {
            return Err(perr(n, "expected 'ATOM <id> <cx> <cy> <radius> <n_points> <n_kernels>'".into()));
        }
        let id = f[1];
        let bad = |line: usize, what: &str| perr(line, format!("atom '{id}': {what}"));
        let num = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite());
        let (cx, cy, radius) = match (num(f[2]), num(f[3]), num(f[4])) {
            (Some(x), Some(y), Some(r)) if r > 0.0 => (x, y, r),
            _ => return Err(bad(n, "bad centroid or radius")),
        };
        let n_points: usize = f[5].parse().map_err(|_| bad(n, "bad point count"))?;
        let n_kernels: usize = f[6].parse().map_err(|_| bad(n, "bad kernel count"))?;

        let mut points = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let (pn, pl) = lines.next().ok_or_else(|| bad(n, "truncated point block"))?;
            let pf: Vec<&str> = pl.split_whitespace().collect();
            let point = match pf.as_slice() {
                [x, y, l] => match (num(x), num(y), *l) {
                    (Some(x), Some(y), "0") => LabeledPoint::free(Vec2::new(x, y)),
                    (Some(x), Some(y), "1") => LabeledPoint::hit(Vec2::new(x, y)),
                    _ => return Err(bad(pn, "malformed point")),
                },
                _ => return Err(bad(pn, "malformed point")),
            };
            points.push(point);
        }
        let mut kernels = Vec::with_capacity(n_kernels);
        for _ in 0..n_kernels {
            let (kn, kl) = lines.next().ok_or_else(|| bad(n, "truncated kernel block"))?;
            kernels.push(parse_kernel(kl).ok_or_else(|| bad(kn, "malformed kernel"))?);
        }
        atoms.push(Atom {
            id: id.to_owned(),
            points,
            params: ParameterSet::new(kernels),
            centroid: Vec2::new(cx, cy),
            radius,
        });
    }
    let mut dict = Dictionary::new(atoms)?;
    dict.meta = meta;
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dictionary> {
        parse_dictionary(s, Path::new("mem"))
    }

    fn sample() -> Dictionary {
        let k = Kernel {
            pos_mean: Vec2::new(0.1, -2.0 / 3.0),
            pos_var: Vec2::new(0.25, 0.25),
            width_mean: 1.0 / 7.0,
            width_disp: 0.25 / 7.0,
            weight_mean: -3.141592653589793,
            weight_var: 1e-7,
        };
        let atom = Atom {
            id: "s0/2".into(),
            points: vec![LabeledPoint::hit(Vec2::new(1.0 / 3.0, 2.0)), LabeledPoint::free(Vec2::new(0.0, 0.5))],
            params: ParameterSet::new(vec![k, k]),
            centroid: Vec2::new(1.0 / 6.0, 1.25),
            radius: 10.0,
        };
        let mut d = Dictionary::new(vec![atom]).unwrap();
        d.meta = vec![("source".into(), "town-a first 10 scans".into())];
        d
    }

    #[test]
    fn round_trip() {
        let d = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.potdict");
        write_dictionary(&p, &d).unwrap();
        assert_eq!(read_dictionary(&p).unwrap(), d);
    }

    #[test]
    fn empty_dictionary() {
        let d = Dictionary::new(vec![]).unwrap();
        assert!(parse(&format_dictionary(&d)).unwrap().atoms.is_empty());
    }

    #[test]
    fn wrong_version() {
        assert!(matches!(parse("POTDICT 2\n"), Err(PotError::Format { .. })));
    }

    #[test]
    fn truncated_file() {
        let text = format_dictionary(&sample());
        let cut: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse(&cut), Err(PotError::Parse { .. })));
    }

    #[test]
    fn corrupted_atom_names_id() {
        let mut lines: Vec<String> = format_dictionary(&sample()).lines().map(str::to_owned).collect();
        // first point of the atom gets an invalid label
        lines[3] = lines[3].replace(" 1", " 7");
        let text = lines.join("\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("s0/2"), "{err}");
    }
}

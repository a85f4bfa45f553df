//! Map files, so transported maps can be passed between CLI steps.
//!
//! ```text
//! POTMAP 1
//! MODE <instantaneous|overall> <dedup_radius>
//! KERNELS <n>
//! <hx> <hy> <hvx> <hvy> <gmean> <gdisp> <wmean> <wvar>   (n lines)
//! ```

use std::fs;
use std::path::Path;

use crate::pot::{MapMode, MapState};
use crate::source::io::{kernel_line, parse_kernel};
use crate::world::io::fmt_real;
use crate::{PotError, Result};

pub const MAP_HEADER: &str = "POTMAP";
pub const MAP_VERSION: u32 = 1;

pub fn format_map(state: &MapState) -> String {
    let mut out = format!("{MAP_HEADER} {MAP_VERSION}\nMODE {} {}\nKERNELS {}\n", state.mode, fmt_real(state.dedup_radius), state.len());
    for k in state.kernels() {
        out.push_str(&kernel_line(k));
        out.push('\n');
    }
    out
}

pub fn write_map(path: &Path, state: &MapState) -> Result<()> {
    fs::write(path, format_map(state))?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<MapState> {
    parse_map(&fs::read_to_string(path)?, path)
}

pub fn parse_map(text: &str, path: &Path) -> Result<MapState> {
    let parse_err = |line: usize, msg: String| PotError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {what}")));

    let (_, header) = next("header")?;
    match header.split_whitespace().collect::<Vec<_>>()[..] {
        [MAP_HEADER, v] if v == MAP_VERSION.to_string() => {}
        [MAP_HEADER, v] => {
            return Err(PotError::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported map version {v}"),
            })
        }
        _ => {
            return Err(PotError::Format {
                path: path.to_path_buf(),
                msg: "missing POTMAP header".into(),
            })
        }
    }
    let (ln, mode_line) = next("MODE line")?;
    let (mode, dedup) = match mode_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["MODE", m, r] => (
            m.parse::<MapMode>().map_err(|e| parse_err(ln, e.to_string()))?,
            r.parse::<f64>().ok().filter(|r| *r >= 0.0).ok_or_else(|| parse_err(ln, format!("bad dedup radius '{r}'")))?,
        ),
        _ => return Err(parse_err(ln, "expected MODE <mode> <dedup_radius>".into())),
    };
    let (ln, count_line) = next("KERNELS line")?;
    let n = match count_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["KERNELS", n] => n.parse::<usize>().map_err(|_| parse_err(ln, format!("bad kernel count '{n}'")))?,
        _ => return Err(parse_err(ln, "expected KERNELS <n>".into())),
    };
    let mut kernels = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = next("kernel line")?;
        kernels.push(parse_kernel(l).ok_or_else(|| parse_err(ln, "malformed kernel".into()))?);
    }
    Ok(MapState::with_kernels(mode, dedup, kernels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kernel;
    use crate::Vec2;

    fn state() -> MapState {
        let k = |x: f64| Kernel {
            pos_mean: Vec2::new(x, -x / 3.0),
            pos_var: Vec2::new(0.1, 0.2),
            width_mean: 1.0 / 3.0,
            width_disp: 0.25,
            weight_mean: -0.7,
            weight_var: 2.5,
        };
        MapState::with_kernels(MapMode::Overall, 0.3, vec![k(0.1), k(1.7)])
    }

    #[test]
    fn round_trip() {
        let s = state();
        assert_eq!(parse_map(&format_map(&s), Path::new("m")).unwrap(), s);
        let empty = MapState::new(MapMode::Instantaneous, 0.0);
        assert_eq!(parse_map(&format_map(&empty), Path::new("m")).unwrap(), empty);
    }

    #[test]
    fn errors() {
        let text = format_map(&state());
        assert!(matches!(parse_map(&text.replace("POTMAP 1", "POTMAP 2"), Path::new("m")), Err(PotError::Format { .. })));
        let cut: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_map(&cut, Path::new("m")), Err(PotError::Parse { .. })));
        let bad = text.replace("overall", "sometimes");
        assert!(matches!(parse_map(&bad, Path::new("m")), Err(PotError::Parse { line: 2, .. })));
    }
}

//! Raster export of a continuous map as binary PGM (P5) images.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::pot::MapState;
use crate::world::Bounds;
use crate::{PotError, Result, Vec2};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_pgm())?;
        f.flush()?;
        Ok(())
    }
}

/// Mean occupancy image (occupied is dark) and logit-variance image scaled to
/// the maximum variance in view (uncertain is bright).
pub fn render_map(state: &MapState, bbox: &Bounds, resolution: f64) -> Result<(GrayImage, GrayImage)> {
    if !(resolution > 0.0) {
        return Err(PotError::InvalidArgument("resolution must be positive".into()));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(PotError::InvalidArgument("empty bounding box".into()));
    }
    let width = (bbox.width() / resolution).ceil() as usize;
    let height = (bbox.height() / resolution).ceil() as usize;
    // pixel centers, top row at max y
    let rows: Vec<Vec<(f64, f64)>> = (0..height)
        .into_par_iter()
        .map(|r| {
            let y = bbox.max.y - (r as f64 + 0.5) * resolution;
            (0..width)
                .map(|c| {
                    let x = bbox.min.x + (c as f64 + 0.5) * resolution;
                    let o = state.params.predict_with_uncertainty(Vec2::new(x, y));
                    (o.mean, o.logit_var)
                })
                .collect()
        })
        .collect();
    let max_var = rows.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let mut mean = Vec::with_capacity(width * height);
    let mut var = Vec::with_capacity(width * height);
    for (m, v) in rows.into_iter().flatten() {
        mean.push((255.0 * (1.0 - m)).round().clamp(0.0, 255.0) as u8);
        let scaled = if max_var > 0.0 { v / max_var } else { 0.0 };
        var.push((255.0 * scaled).round().clamp(0.0, 255.0) as u8);
    }
    Ok((
        GrayImage {
            width,
            height,
            pixels: mean,
        },
        GrayImage {
            width,
            height,
            pixels: var,
        },
    ))
}

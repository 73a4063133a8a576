//! Density grids as CSV and 8-bit grayscale PGM.

use std::io::Write;
use std::path::Path;

use crate::error::{data_err, Result, TradeError};
use crate::model::GridDensity;

/// Columns `x,y,density`, one row per grid node.
pub fn write_grid_csv(path: &Path, grid: &GridDensity) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| data_err(format!("{}: {e}", path.display()));
    w.write_record(["x", "y", "density"]).map_err(fail)?;
    let (xs, ys) = (grid.xs(), grid.ys());
    for (j, y) in ys.iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            let v = grid.log_values[j * grid.resolution + i].exp();
            w.write_record([x.to_string(), y.to_string(), v.to_string()]).map_err(fail)?;
        }
    }
    w.flush().map_err(|e| TradeError::io(path, e))
}

/// Binary PGM (P5). `pixels` is row-major, top row first.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(data_err(format!("PGM needs {} pixels, got {}", width * height, pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| TradeError::io(path, e))
}

/// Density scaled so that the maximum is white; rows flipped so that larger
/// `y` is at the top.
pub fn grid_to_pixels(grid: &GridDensity) -> Vec<u8> {
    let values = grid.values();
    let max = values.iter().copied().fold(0.0, f64::max);
    let r = grid.resolution;
    let mut px = Vec::with_capacity(r * r);
    for j in (0..r).rev() {
        for i in 0..r {
            let v = if max > 0.0 { values[j * r + i] / max } else { 0.0 };
            px.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

pub fn write_grid_pgm(path: &Path, grid: &GridDensity) -> Result<()> {
    write_pgm(path, grid.resolution, grid.resolution, &grid_to_pixels(grid))
}

/// Tiles square images (values in [0, 1]) into a sheet `cols` images wide.
pub fn contact_sheet(images: &[Vec<f64>], side: usize, cols: usize) -> Result<(usize, usize, Vec<u8>)> {
    if images.is_empty() || cols == 0 || images.iter().any(|im| im.len() != side * side) {
        return Err(data_err(format!("contact sheet needs non-empty {side}x{side} images")));
    }
    let rows = images.len().div_ceil(cols);
    let (w, h) = (cols * side, rows * side);
    let mut px = vec![0u8; w * h];
    for (k, im) in images.iter().enumerate() {
        let (oy, ox) = ((k / cols) * side, (k % cols) * side);
        for y in 0..side {
            for x in 0..side {
                px[(oy + y) * w + ox + x] = (im[y * side + x].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    Ok((w, h, px))
}

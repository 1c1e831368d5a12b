use super::geometry::LocalPlane;
use crate::interchange::ascii_grid::MAX_CELLS;
use crate::interchange::{AsciiGrid, GeoPoint};

pub const DEFAULT_KDE_RADIUS_M: f64 = 2000.0;

/// Quartic (biweight) kernel `(1 - (d/r)^2)^2` inside the radius, 0 outside.
pub fn quartic_kernel(d: f64, r: f64) -> f64 {
    if d < r {
        let u = d / r;
        (1.0 - u * u).powi(2)
    } else {
        0.0
    }
}

/// Integral of the quartic kernel over the plane.
pub fn quartic_mass(r: f64) -> f64 {
    std::f64::consts::PI * r * r / 3.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KdeError {
    #[error("no points")]
    NoPoints,
    #[error("radius and cell size must be finite and positive")]
    BadParameters,
    #[error("raster would exceed {MAX_CELLS} cells")]
    TooLarge,
}

/// Kernel sum surface on a metre grid in the local plane (grid x/y are metres
/// east/north of `plane.origin`).
#[derive(Debug, Clone, PartialEq)]
pub struct KdeRaster {
    pub grid: AsciiGrid,
    pub anchor: GeoPoint,
    pub radius_m: f64,
    pub cell_m: f64,
}

/// Sums the quartic kernel of every point at each cell centre. The raster
/// covers the points' extent padded by the radius, snapped to whole cells.
pub fn kde_density(points: &[GeoPoint], radius_m: f64, cell_m: f64, plane: &LocalPlane) -> Result<KdeRaster, KdeError> {
    if points.is_empty() {
        return Err(KdeError::NoPoints);
    }
    if !(radius_m.is_finite() && radius_m > 0.0 && cell_m.is_finite() && cell_m > 0.0) {
        return Err(KdeError::BadParameters);
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&p| plane.project(p)).collect();
    let min_x = xy.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = xy.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = xy.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = xy.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x0 = ((min_x - radius_m) / cell_m).floor() * cell_m;
    let y0 = ((min_y - radius_m) / cell_m).floor() * cell_m;
    let ncols = (((max_x + radius_m) - x0) / cell_m).ceil().max(1.0);
    let nrows = (((max_y + radius_m) - y0) / cell_m).ceil().max(1.0);
    if ncols * nrows > MAX_CELLS as f64 {
        return Err(KdeError::TooLarge);
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);
    let mut grid = AsciiGrid::filled(ncols, nrows, x0, y0, cell_m, 0.0).map_err(|_| KdeError::TooLarge)?;
    let reach = (radius_m / cell_m).ceil() as i64 + 1;
    for &(px, py) in &xy {
        let c0 = ((px - x0) / cell_m).floor() as i64;
        // row index counts from the north edge
        let r0 = nrows as i64 - 1 - ((py - y0) / cell_m).floor() as i64;
        for row in (r0 - reach).max(0)..=(r0 + reach).min(nrows as i64 - 1) {
            for col in (c0 - reach).max(0)..=(c0 + reach).min(ncols as i64 - 1) {
                let (cx, cy) = grid.cell_center(col as usize, row as usize);
                let k = quartic_kernel((cx - px).hypot(cy - py), radius_m);
                if k > 0.0 {
                    let v = grid.get(col as usize, row as usize);
                    grid.set(col as usize, row as usize, v + k);
                }
            }
        }
    }
    Ok(KdeRaster {
        grid,
        anchor: plane.origin,
        radius_m,
        cell_m,
    })
}

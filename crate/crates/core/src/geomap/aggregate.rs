use serde::{Deserialize, Serialize};

use super::extent::{touched_tracts, Placement};
use super::geometry::tract_contains;
use super::layer::TractLayer;
use crate::interchange::{AsciiGrid, GeoPoint, WaterLevelClass};

/// Affine map from grid coordinates to lon/lat:
/// `lon = lon0 + a·x + b·y`, `lat = lat0 + c·x + d·y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMapping {
    pub lon0: f64,
    pub a: f64,
    pub b: f64,
    pub lat0: f64,
    pub c: f64,
    pub d: f64,
}

impl GridMapping {
    /// Grid coordinates are already lon/lat degrees.
    pub const IDENTITY: Self = Self {
        lon0: 0.0,
        a: 1.0,
        b: 0.0,
        lat0: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn apply(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint::new(self.lon0 + self.a * x + self.b * y, self.lat0 + self.c * x + self.d * y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub cells_with_data: usize,
    pub cells_in_tracts: usize,
    pub tracts_with_depth: usize,
}

/// Maximum grid value over the cells whose centres lie in each tract; nodata
/// cells are ignored and tracts without covered cells get no depth. A cell on
/// a shared border counts for every tract containing it.
pub fn aggregate_depth(layer: &TractLayer, grid: &AsciiGrid, mapping: &GridMapping) -> (TractLayer, DepthReport) {
    let mut out = layer.clone();
    let bounds: Vec<_> = layer.tracts().iter().map(|t| t.geometry.bounds()).collect();
    let mut maxima: Vec<Option<f64>> = vec![None; layer.len()];
    let mut cells_with_data = 0;
    let mut cells_in_tracts = 0;
    for row in 0..grid.nrows {
        for col in 0..grid.ncols {
            let Some(v) = grid.value(col, row) else { continue };
            cells_with_data += 1;
            let (x, y) = grid.cell_center(col, row);
            let p = mapping.apply(x, y);
            let mut hit = false;
            for (i, t) in layer.tracts().iter().enumerate() {
                let b = bounds[i];
                if p.lon < b.0 || p.lon > b.2 || p.lat < b.1 || p.lat > b.3 || !tract_contains(&t.geometry, p) {
                    continue;
                }
                hit = true;
                maxima[i] = Some(maxima[i].map_or(v, |m: f64| m.max(v)));
            }
            cells_in_tracts += usize::from(hit);
        }
    }
    if cells_in_tracts == 0 {
        log::warn!("depth grid does not overlap any tract");
    }
    for (t, m) in out.tracts_mut().iter_mut().zip(&maxima) {
        t.attrs.max_depth = *m;
    }
    let report = DepthReport {
        cells_with_data,
        cells_in_tracts,
        tracts_with_depth: maxima.iter().flatten().count(),
    };
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub estimates_used: usize,
    pub excluded_box: usize,
    pub excluded_other: usize,
    pub excluded_n: usize,
    pub tracts_with_severity: usize,
    /// Tracts whose class rests on only one or two estimates.
    pub tracts_with_one_or_two: usize,
}

/// Most frequent class among the point-placed, non-N estimates within
/// `radius_m` of each tract. Ties go to the more severe class.
pub fn aggregate_severity(layer: &TractLayer, estimates: &[(Placement, WaterLevelClass)], radius_m: f64) -> (TractLayer, SeverityReport) {
    let plane = layer.plane();
    let mut votes = vec![[0usize; WaterLevelClass::COUNT]; layer.len()];
    let mut report = SeverityReport {
        estimates_used: 0,
        excluded_box: 0,
        excluded_other: 0,
        excluded_n: 0,
        tracts_with_severity: 0,
        tracts_with_one_or_two: 0,
    };
    for (placement, class) in estimates {
        if *class == WaterLevelClass::N {
            report.excluded_n += 1;
            continue;
        }
        match placement {
            Placement::Point { .. } => {}
            Placement::Box { .. } => {
                report.excluded_box += 1;
                continue;
            }
            Placement::Excluded { .. } => {
                report.excluded_other += 1;
                continue;
            }
        }
        report.estimates_used += 1;
        for i in touched_tracts(layer, placement, radius_m, &plane) {
            votes[i][class.index()] += 1;
        }
    }
    let mut out = layer.clone();
    for (t, v) in out.tracts_mut().iter_mut().zip(&votes) {
        let total: usize = v.iter().sum();
        t.attrs.severity_support = total;
        t.attrs.severity = if total == 0 {
            None
        } else {
            let best = (0..WaterLevelClass::COUNT).max_by_key(|&k| (v[k], k)).expect("five classes");
            WaterLevelClass::from_index(best)
        };
        if total > 0 {
            report.tracts_with_severity += 1;
            if total <= 2 {
                report.tracts_with_one_or_two += 1;
            }
        }
    }
    (out, report)
}

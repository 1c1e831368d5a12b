//! Scene segmentation label maps.
//!
//! On the wire a label map is a per-row run-length encoding
//! `[class_id, run_length, class_id, run_length, ...]` plus a class registry.
//! The map may be a uniform downsample of the image; `scale_x`/`scale_y` give
//! the number of image pixels per label cell along each axis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bundle::PixelBox;

pub const WATER: &str = "water";
pub const GROUND: &str = "ground";

/// Upper bound on decoded cells; larger maps are rejected rather than allocated.
pub const MAX_CELLS: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub scale_x: f64,
    pub scale_y: f64,
    pub rows: Vec<Vec<u32>>,
    pub classes: BTreeMap<u32, String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelMapIssue {
    #[error("label map dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("label map scale factors must be finite and positive")]
    BadScale,
    #[error("label map has {found} RLE rows, expected {expected}")]
    RowCount { found: usize, expected: usize },
    #[error("RLE row {row} has an odd number of entries")]
    OddRow { row: usize },
    #[error("RLE row {row} has a zero-length run")]
    ZeroRun { row: usize },
    #[error("RLE row {row} decodes to {decoded} cells, expected {expected}")]
    RowLength { row: usize, decoded: u64, expected: u32 },
    #[error("RLE row {row} uses class id {id} missing from the class registry")]
    UnknownClass { row: usize, id: u32 },
    #[error("label map of {0} cells exceeds the {MAX_CELLS}-cell limit")]
    TooLarge(u64),
    #[error("class registry lacks a {0:?} entry")]
    MissingClassName(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelMapError {
    #[error("query region does not intersect the image")]
    EmptyRegion,
    #[error("invalid label map: {0:?}")]
    Invalid(Vec<LabelMapIssue>),
}

impl LabelMap {
    /// All structural problems of the encoded map. Empty iff [`decode`](Self::decode) succeeds.
    pub fn issues(&self) -> Vec<LabelMapIssue> {
        let mut issues = Vec::new();
        if self.width == 0 || self.height == 0 {
            issues.push(LabelMapIssue::EmptyDimensions {
                width: self.width,
                height: self.height,
            });
        }
        let n_cells = u64::from(self.width) * u64::from(self.height);
        if n_cells > MAX_CELLS {
            issues.push(LabelMapIssue::TooLarge(n_cells));
        }
        if !(self.scale_x.is_finite() && self.scale_x > 0.0 && self.scale_y.is_finite() && self.scale_y > 0.0) {
            issues.push(LabelMapIssue::BadScale);
        }
        if self.rows.len() != self.height as usize {
            issues.push(LabelMapIssue::RowCount {
                found: self.rows.len(),
                expected: self.height as usize,
            });
        }
        for name in [WATER, GROUND] {
            if !self.classes.values().any(|n| n == name) {
                issues.push(LabelMapIssue::MissingClassName(name));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() % 2 != 0 {
                issues.push(LabelMapIssue::OddRow { row: r });
                continue;
            }
            let mut total: u64 = 0;
            for pair in row.chunks_exact(2) {
                let (id, run) = (pair[0], pair[1]);
                if run == 0 {
                    issues.push(LabelMapIssue::ZeroRun { row: r });
                }
                if !self.classes.contains_key(&id) {
                    issues.push(LabelMapIssue::UnknownClass { row: r, id });
                }
                total += u64::from(run);
            }
            if total != u64::from(self.width) {
                issues.push(LabelMapIssue::RowLength {
                    row: r,
                    decoded: total,
                    expected: self.width,
                });
            }
        }
        issues
    }

    pub fn decode(&self) -> Result<LabelGrid, LabelMapError> {
        let issues = self.issues();
        if !issues.is_empty() {
            return Err(LabelMapError::Invalid(issues));
        }
        let mut cells = Vec::with_capacity(self.width as usize * self.height as usize);
        for row in &self.rows {
            for pair in row.chunks_exact(2) {
                cells.extend(std::iter::repeat_n(pair[0], pair[1] as usize));
            }
        }
        Ok(LabelGrid {
            width: self.width,
            height: self.height,
            scale_x: self.scale_x,
            scale_y: self.scale_y,
            cells,
            classes: self.classes.clone(),
        })
    }
}

/// Class id → number of label cells.
pub type ClassHistogram = BTreeMap<u32, u64>;

/// A decoded label map.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    width: u32,
    height: u32,
    scale_x: f64,
    scale_y: f64,
    cells: Vec<u32>,
    classes: BTreeMap<u32, String>,
}

impl LabelGrid {
    /// Builds a grid from row-major cells. Panics if the cell count does not
    /// match the dimensions or a cell id is not registered.
    pub fn from_cells(
        width: u32,
        height: u32,
        scale_x: f64,
        scale_y: f64,
        cells: Vec<u32>,
        classes: BTreeMap<u32, String>,
    ) -> Self {
        assert_eq!(cells.len(), width as usize * height as usize, "cell count mismatch");
        assert!(cells.iter().all(|c| classes.contains_key(c)), "unregistered class id");
        Self {
            width,
            height,
            scale_x,
            scale_y,
            cells,
            classes,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn classes(&self) -> &BTreeMap<u32, String> {
        &self.classes
    }

    pub fn class_name(&self, id: u32) -> Option<&str> {
        self.classes.get(&id).map(String::as_str)
    }

    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.classes.iter().find(|(_, n)| n.as_str() == name).map(|(id, _)| *id)
    }

    pub fn get(&self, col: u32, row: u32) -> u32 {
        self.cells[row as usize * self.width as usize + col as usize]
    }

    /// Image extent covered by the map, in image pixels.
    pub fn image_extent(&self) -> (f64, f64) {
        (self.width as f64 * self.scale_x, self.height as f64 * self.scale_y)
    }

    pub fn encode(&self) -> LabelMap {
        let w = self.width as usize;
        let rows = self
            .cells
            .chunks_exact(w)
            .map(|row| {
                let mut rle = Vec::new();
                let mut iter = row.iter();
                let mut current = *iter.next().expect("non-empty row");
                let mut run = 1u32;
                for &c in iter {
                    if c == current {
                        run += 1;
                    } else {
                        rle.extend([current, run]);
                        current = c;
                        run = 1;
                    }
                }
                rle.extend([current, run]);
                rle
            })
            .collect();
        LabelMap {
            width: self.width,
            height: self.height,
            scale_x: self.scale_x,
            scale_y: self.scale_y,
            rows,
            classes: self.classes.clone(),
        }
    }

    /// Histogram of the label cells whose centers fall in `region`, a pixel
    /// rectangle in image coordinates (half-open: `[x_min, x_max) x [y_min, y_max)`).
    ///
    /// When the region intersects the image but is thinner than a cell so no
    /// center falls inside, the cell nearest to the region center is counted,
    /// so the total is always positive.
    pub fn label_at(&self, region: &PixelBox) -> Result<ClassHistogram, LabelMapError> {
        let (ext_w, ext_h) = self.image_extent();
        let x0 = region.x_min.max(0.0);
        let x1 = region.x_max.min(ext_w);
        let y0 = region.y_min.max(0.0);
        let y1 = region.y_max.min(ext_h);
        if !(x0 < x1 && y0 < y1) {
            return Err(LabelMapError::EmptyRegion);
        }
        let (c_lo, c_hi) = center_range(x0, x1, self.scale_x, self.width);
        let (r_lo, r_hi) = center_range(y0, y1, self.scale_y, self.height);
        let mut hist = ClassHistogram::new();
        for r in r_lo..r_hi {
            let cy = (r as f64 + 0.5) * self.scale_y;
            if !(cy >= y0 && cy < y1) {
                continue;
            }
            for c in c_lo..c_hi {
                let cx = (c as f64 + 0.5) * self.scale_x;
                if cx >= x0 && cx < x1 {
                    *hist.entry(self.get(c, r)).or_insert(0) += 1;
                }
            }
        }
        if hist.is_empty() {
            let c = nearest_cell(0.5 * (x0 + x1), self.scale_x, self.width);
            let r = nearest_cell(0.5 * (y0 + y1), self.scale_y, self.height);
            hist.insert(self.get(c, r), 1);
        }
        Ok(hist)
    }
}

/// Candidate cell index range (widened by one on each side) for centers in `[lo, hi)`.
fn center_range(lo: f64, hi: f64, scale: f64, n: u32) -> (u32, u32) {
    let first = (lo / scale - 0.5).ceil() - 1.0;
    let last = (hi / scale - 0.5).ceil() + 1.0;
    let first = first.max(0.0) as u32;
    let last = (last.max(0.0) as u32).min(n);
    (first.min(n), last)
}

fn nearest_cell(coord: f64, scale: f64, n: u32) -> u32 {
    let idx = (coord / scale).floor();
    (idx.max(0.0) as u32).min(n - 1)
}

//! ESRI ASCII grid rasters.
//!
//! ```text
//! ncols        4
//! nrows        3
//! xllcorner    -95.5
//! yllcorner    29.5
//! cellsize     0.01
//! NODATA_value -9999
//! 0 0 1.5 -9999
//! ...
//! ```
//!
//! Header keywords are case-insensitive; `xllcenter`/`yllcenter` are accepted
//! and converted to corner form. Values are row-major starting with the
//! northernmost row.

use std::fmt::Write as _;

pub const DEFAULT_NODATA: f64 = -9999.0;
pub const MAX_CELLS: u64 = 1 << 26;

const HEADER_KEYS: [&str; 8] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "xllcenter",
    "yllcenter",
    "cellsize",
    "nodata_value",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("missing header keyword {0}")]
    MissingKey(&'static str),
    #[error("grid dimensions must be positive and at most {MAX_CELLS} cells")]
    BadDimensions,
    #[error("cellsize must be finite and positive")]
    BadCellsize,
    #[error("value {index} ({token:?}) is not a number")]
    BadValue { index: usize, token: String },
    #[error("expected {expected} values, found {found}")]
    ValueCount { expected: usize, found: usize },
}

impl AsciiGrid {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64, values: Vec<f64>) -> Result<Self, GridError> {
        if ncols == 0 || nrows == 0 || (ncols as u64).saturating_mul(nrows as u64) > MAX_CELLS {
            return Err(GridError::BadDimensions);
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(GridError::BadCellsize);
        }
        if values.len() != ncols * nrows {
            return Err(GridError::ValueCount {
                expected: ncols * nrows,
                found: values.len(),
            });
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    pub fn filled(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, value: f64) -> Result<Self, GridError> {
        Self::new(ncols, nrows, xll, yll, cellsize, DEFAULT_NODATA, vec![value; ncols * nrows])
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    /// The cell value, or `None` for nodata / non-finite cells.
    pub fn value(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (v.is_finite() && v != self.nodata).then_some(v)
    }

    /// Center of a cell in grid CRS units. Row 0 is the northernmost row.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.xll,
            self.yll,
            self.xll + self.ncols as f64 * self.cellsize,
            self.yll + self.nrows as f64 * self.cellsize,
        )
    }

    pub fn parse(src: &str) -> Result<Self, GridError> {
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut x_is_center = false;
        let mut y_is_center = false;
        let mut cellsize = None;
        let mut nodata = DEFAULT_NODATA;

        let mut rest = src;
        let mut line_no = 0;
        loop {
            let (line, tail) = match rest.find('\n') {
                Some(i) => (&rest[..i], &rest[i + 1..]),
                None => (rest, ""),
            };
            let mut tokens = line.split_whitespace();
            let Some(key) = tokens.next() else {
                if tail.is_empty() {
                    break;
                }
                line_no += 1;
                rest = tail;
                continue;
            };
            let key_lc = key.to_ascii_lowercase();
            if !HEADER_KEYS.contains(&key_lc.as_str()) {
                break;
            }
            line_no += 1;
            let header_err = |message: String| GridError::Header { line: line_no, message };
            let value = tokens.next().ok_or_else(|| header_err(format!("{key} has no value")))?;
            let num: f64 = value.parse().map_err(|_| header_err(format!("{key}: {value:?} is not a number")))?;
            let as_count = |v: f64| -> Result<usize, GridError> {
                if v.fract() == 0.0 && v > 0.0 && v <= MAX_CELLS as f64 {
                    Ok(v as usize)
                } else {
                    Err(GridError::BadDimensions)
                }
            };
            match key_lc.as_str() {
                "ncols" => ncols = Some(as_count(num)?),
                "nrows" => nrows = Some(as_count(num)?),
                "xllcorner" => xll = Some(num),
                "yllcorner" => yll = Some(num),
                "xllcenter" => {
                    xll = Some(num);
                    x_is_center = true;
                }
                "yllcenter" => {
                    yll = Some(num);
                    y_is_center = true;
                }
                "cellsize" => cellsize = Some(num),
                "nodata_value" => nodata = num,
                _ => unreachable!(),
            }
            rest = tail;
            if tail.is_empty() {
                break;
            }
        }

        let ncols = ncols.ok_or(GridError::MissingKey("ncols"))?;
        let nrows = nrows.ok_or(GridError::MissingKey("nrows"))?;
        let cellsize = cellsize.ok_or(GridError::MissingKey("cellsize"))?;
        let mut xll = xll.ok_or(GridError::MissingKey("xllcorner"))?;
        let mut yll = yll.ok_or(GridError::MissingKey("yllcorner"))?;
        if (ncols as u64).saturating_mul(nrows as u64) > MAX_CELLS {
            return Err(GridError::BadDimensions);
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(GridError::BadCellsize);
        }
        if x_is_center {
            xll -= 0.5 * cellsize;
        }
        if y_is_center {
            yll -= 0.5 * cellsize;
        }
        let expected = ncols * nrows;
        let mut values = Vec::with_capacity(expected.min(1 << 20));
        for (index, tok) in rest.split_whitespace().enumerate() {
            if index >= expected {
                return Err(GridError::ValueCount {
                    expected,
                    found: index + 1 + rest.split_whitespace().skip(index + 1).count(),
                });
            }
            let v: f64 = tok.parse().map_err(|_| GridError::BadValue {
                index,
                token: tok.to_string(),
            })?;
            values.push(v);
        }
        Self::new(ncols, nrows, xll, yll, cellsize, nodata, values)
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols        {}", self.ncols);
        let _ = writeln!(out, "nrows        {}", self.nrows);
        let _ = writeln!(out, "xllcorner    {}", self.xll);
        let _ = writeln!(out, "yllcorner    {}", self.yll);
        let _ = writeln!(out, "cellsize     {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for row in self.values.chunks_exact(self.ncols) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "NCOLS 3\nnrows 2\nxllcenter 10.5\nYLLCORNER 20\ncellsize 1\nNODATA_value -1\n1 2 -1\n4\n5 6\n";

    #[test]
    fn parses_header_variants_and_values() {
        let g = AsciiGrid::parse(SAMPLE).unwrap();
        assert_eq!((g.ncols, g.nrows), (3, 2));
        assert_eq!(g.xll, 10.0);
        assert_eq!(g.yll, 20.0);
        assert_eq!(g.value(2, 0), None);
        assert_eq!(g.value(0, 1), Some(4.0));
        // row 0 is the northern row
        assert_eq!(g.cell_center(0, 0), (10.5, 21.5));
        assert_eq!(g.cell_center(2, 1), (12.5, 20.5));
    }

    #[test]
    fn roundtrip() {
        let g = AsciiGrid::parse(SAMPLE).unwrap();
        assert_eq!(AsciiGrid::parse(&g.to_ascii()).unwrap(), g);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            AsciiGrid::parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n"),
            Err(GridError::ValueCount { expected: 4, found: 3 })
        ));
        assert!(matches!(
            AsciiGrid::parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n"),
            Err(GridError::ValueCount { expected: 1, found: 2 })
        ));
        assert_eq!(
            AsciiGrid::parse("ncols 2\nnrows 1\nxllcorner 0\ncellsize 1\n1 2\n"),
            Err(GridError::MissingKey("yllcorner"))
        );
        assert!(matches!(
            AsciiGrid::parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nx\n"),
            Err(GridError::BadValue { index: 0, .. })
        ));
        assert_eq!(
            AsciiGrid::parse("ncols 100000\nnrows 100000\nxllcorner 0\nyllcorner 0\ncellsize 1\n"),
            Err(GridError::BadDimensions)
        );
        assert_eq!(
            AsciiGrid::parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 0\n1"),
            Err(GridError::BadCellsize)
        );
    }
}

//! Small CSV manifests: bag labels for water-level training and binary
//! relevance labels.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::post::RecordError;
use super::water_level::WaterLevelClass;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagLabel {
    pub image_ref: String,
    pub bag_label: WaterLevelClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceLabel {
    pub image_ref: String,
    /// 1 = flood relevant, 0 = not relevant.
    pub label: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {}: {}", .0.line, .0.message)]
    Record(RecordError),
    #[error("reading manifest: {0}")]
    Csv(#[from] csv::Error),
}

fn read_rows<T, R>(reader: R) -> Result<Vec<T>, ManifestError>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(v) => out.push(v),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                return Err(ManifestError::Record(RecordError {
                    line,
                    message: e.to_string(),
                }));
            }
        }
    }
    Ok(out)
}

/// Reads an `image_ref,bag_label` CSV; the first bad row aborts.
pub fn parse_bag_labels<R: Read>(reader: R) -> Result<Vec<BagLabel>, ManifestError> {
    read_rows(reader)
}

/// Reads an `image_ref,label` CSV with labels 0/1.
pub fn parse_relevance_labels<R: Read>(reader: R) -> Result<Vec<RelevanceLabel>, ManifestError> {
    let rows: Vec<RelevanceLabel> = read_rows(reader)?;
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.label > 1) {
        return Err(ManifestError::Record(RecordError {
            line: i + 2,
            message: format!("label for {} must be 0 or 1, got {}", r.image_ref, r.label),
        }));
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize, W: std::io::Write>(w: W, rows: &[T]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

//! Property damage claims (`id, lon, lat, date, loss_type` CSV).

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::post::{GeoPoint, RecordError};

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimPoint {
    pub id: String,
    pub location: GeoPoint,
    pub date: NaiveDate,
    pub loss_type: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClaimRow {
    id: String,
    lon: f64,
    lat: f64,
    date: String,
    loss_type: String,
}

#[derive(Debug, Default)]
pub struct ClaimBatch {
    pub claims: Vec<ClaimPoint>,
    pub errors: Vec<RecordError>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClaimsError {
    #[error("claims CSV header must contain id, lon, lat, date, loss_type: {0}")]
    Header(String),
    #[error("reading claims: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads a claims CSV. Rows that fail to parse are reported with their
/// 1-based line number; a bad header or I/O failure aborts.
pub fn parse_claims<R: Read>(reader: R) -> Result<ClaimBatch, ClaimsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ClaimsError::Header(e.to_string()))?.clone();
    for col in ["id", "lon", "lat", "date", "loss_type"] {
        if !headers.iter().any(|h| h == col) {
            return Err(ClaimsError::Header(format!("missing column {col:?}")));
        }
    }
    let mut batch = ClaimBatch::default();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(ClaimsError::Io(std::io::Error::other(e.to_string())));
                }
                let line = e.position().map_or(0, |p| p.line() as usize);
                batch.errors.push(RecordError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        match rec.deserialize::<ClaimRow>(Some(&headers)) {
            Ok(row) => match claim_from_row(row) {
                Ok(c) => batch.claims.push(c),
                Err(message) => batch.errors.push(RecordError { line, message }),
            },
            Err(e) => batch.errors.push(RecordError {
                line,
                message: e.to_string(),
            }),
        }
    }
    Ok(batch)
}

fn claim_from_row(row: ClaimRow) -> Result<ClaimPoint, String> {
    let location = GeoPoint::new(row.lon, row.lat);
    if !location.is_valid() {
        return Err(format!("invalid coordinate ({}, {})", row.lon, row.lat));
    }
    let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d")
        .or_else(|_| {
            chrono::DateTime::parse_from_rfc3339(row.date.trim()).map(|dt| dt.date_naive())
        })
        .map_err(|e| format!("bad date {:?}: {e}", row.date))?;
    Ok(ClaimPoint {
        id: row.id,
        location,
        date,
        loss_type: row.loss_type,
    })
}

pub fn write_claims<W: std::io::Write>(w: W, claims: &[ClaimPoint]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for c in claims {
        wtr.serialize(ClaimRow {
            id: c.id.clone(),
            lon: c.location.lon,
            lat: c.location.lat,
            date: c.date.format("%Y-%m-%d").to_string(),
            loss_type: c.loss_type.clone(),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_reports_bad_ones() {
        let src = "id,lon,lat,date,loss_type\n\
                   c1,-95.4,29.7,2017-08-28,flood\n\
                   c2,-95.5,29.8,2017-08-29T10:00:00Z,water damage\n\
                   c3,abc,29.8,2017-08-29,flood\n\
                   c4,-95.5,29.8,yesterday,wind\n";
        let batch = parse_claims(src.as_bytes()).unwrap();
        assert_eq!(batch.claims.len(), 2);
        assert_eq!(batch.claims[1].loss_type, "water damage");
        assert_eq!(batch.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn missing_column_is_fatal() {
        assert!(matches!(
            parse_claims("id,lon,lat,date\n1,2,3,2017-01-01\n".as_bytes()),
            Err(ClaimsError::Header(_))
        ));
    }

    #[test]
    fn write_then_read() {
        let claims = vec![ClaimPoint {
            id: "x".into(),
            location: GeoPoint::new(-95.25, 29.5),
            date: NaiveDate::from_ymd_opt(2017, 8, 30).unwrap(),
            loss_type: "flood".into(),
        }];
        let mut buf = Vec::new();
        write_claims(&mut buf, &claims).unwrap();
        assert_eq!(parse_claims(buf.as_slice()).unwrap().claims, claims);
    }
}

//! Census-tract polygons read from a GeoJSON `FeatureCollection`.
//!
//! Only `Polygon` and `MultiPolygon` geometries are accepted. Each feature
//! must carry a `tract_id` property (string or number).

use std::collections::BTreeSet;

use serde::Deserialize;
use serde_json::Value;

use super::post::GeoPoint;

pub type Ring = Vec<GeoPoint>;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Self {
        Self { exterior, holes }
    }

    /// Axis-aligned rectangle as a closed counter-clockwise ring.
    pub fn rectangle(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Self::new(
            vec![
                GeoPoint::new(min_lon, min_lat),
                GeoPoint::new(max_lon, min_lat),
                GeoPoint::new(max_lon, max_lat),
                GeoPoint::new(min_lon, max_lat),
                GeoPoint::new(min_lon, min_lat),
            ],
            vec![],
        )
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

/// Shoelace area in squared degrees (positive for counter-clockwise rings).
pub fn ring_signed_area(ring: &[GeoPoint]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].lon * w[1].lat - w[1].lon * w[0].lat)
        .sum::<f64>()
        * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractGeometry {
    pub tract_id: String,
    pub polygons: Vec<Polygon>,
}

impl TractGeometry {
    /// `(min_lon, min_lat, max_lon, max_lat)` over all exterior rings.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.polygons.iter().flat_map(|poly| poly.exterior.iter()) {
            b.0 = b.0.min(p.lon);
            b.1 = b.1.min(p.lat);
            b.2 = b.2.max(p.lon);
            b.3 = b.3.max(p.lat);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TractParseError {
    #[error("invalid GeoJSON: {0}")]
    Json(String),
    #[error("expected a FeatureCollection, found {0:?}")]
    NotFeatureCollection(String),
    #[error("feature {index}: missing or non-scalar tract_id property")]
    MissingTractId { index: usize },
    #[error("duplicate tract_id {0:?}")]
    DuplicateTractId(String),
    #[error("tract {tract}: unsupported geometry {kind:?}")]
    UnsupportedGeometry { tract: String, kind: String },
    #[error("tract {tract}: {message}")]
    InvalidGeometry { tract: String, message: String },
}

#[derive(Deserialize)]
struct RawCollection {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    features: Vec<RawFeature>,
}

#[derive(Deserialize)]
struct RawFeature {
    #[serde(default)]
    properties: Option<serde_json::Map<String, Value>>,
    geometry: Option<RawGeometry>,
}

#[derive(Deserialize)]
struct RawGeometry {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    coordinates: Value,
}

type RawRing = Vec<Vec<f64>>;

pub fn parse_tracts(json: &str) -> Result<Vec<TractGeometry>, TractParseError> {
    let raw: RawCollection = serde_json::from_str(json).map_err(|e| TractParseError::Json(e.to_string()))?;
    if raw.kind != "FeatureCollection" {
        return Err(TractParseError::NotFeatureCollection(raw.kind));
    }
    let mut seen = BTreeSet::new();
    let mut tracts = Vec::with_capacity(raw.features.len());
    for (index, f) in raw.features.into_iter().enumerate() {
        let tract_id = match f.properties.as_ref().and_then(|p| p.get("tract_id")) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(TractParseError::MissingTractId { index }),
        };
        if !seen.insert(tract_id.clone()) {
            return Err(TractParseError::DuplicateTractId(tract_id));
        }
        let geom = f.geometry.ok_or_else(|| TractParseError::UnsupportedGeometry {
            tract: tract_id.clone(),
            kind: "null".into(),
        })?;
        let invalid = |message: String| TractParseError::InvalidGeometry {
            tract: tract_id.clone(),
            message,
        };
        let raw_polys: Vec<Vec<RawRing>> = match geom.kind.as_str() {
            "Polygon" => vec![serde_json::from_value(geom.coordinates).map_err(|e| invalid(e.to_string()))?],
            "MultiPolygon" => serde_json::from_value(geom.coordinates).map_err(|e| invalid(e.to_string()))?,
            other => {
                return Err(TractParseError::UnsupportedGeometry {
                    tract: tract_id,
                    kind: other.to_string(),
                })
            }
        };
        if raw_polys.is_empty() {
            return Err(invalid("empty MultiPolygon".into()));
        }
        let mut polygons = Vec::with_capacity(raw_polys.len());
        for rings in raw_polys {
            let mut rings = rings
                .into_iter()
                .map(|r| to_ring(r).map_err(&invalid))
                .collect::<Result<Vec<_>, _>>()?;
            if rings.is_empty() {
                return Err(invalid("polygon without rings".into()));
            }
            let exterior = rings.remove(0);
            if ring_signed_area(&exterior) == 0.0 {
                return Err(invalid("outer ring has zero area".into()));
            }
            polygons.push(Polygon::new(exterior, rings));
        }
        tracts.push(TractGeometry { tract_id, polygons });
    }
    Ok(tracts)
}

fn to_ring(raw: RawRing) -> Result<Ring, String> {
    if raw.len() < 4 {
        return Err(format!("ring has {} positions, need at least 4", raw.len()));
    }
    let mut ring = Vec::with_capacity(raw.len());
    for pos in raw {
        if pos.len() < 2 || !pos[0].is_finite() || !pos[1].is_finite() {
            return Err("position must hold two finite numbers".into());
        }
        ring.push(GeoPoint::new(pos[0], pos[1]));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    Ok(ring)
}

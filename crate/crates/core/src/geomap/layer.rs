use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::geometry::LocalPlane;
use crate::interchange::tracts::TractGeometry;
use crate::interchange::{GeoPoint, WaterLevelClass};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TractAttributes {
    /// At least one located post touches the tract.
    pub has_posts: bool,
    pub flood_relevant: bool,
    pub severity: Option<WaterLevelClass>,
    /// Number of image estimates behind `severity`.
    pub severity_support: usize,
    pub max_depth: Option<f64>,
    pub claim_count: u64,
    pub reference_flooded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tract {
    pub geometry: TractGeometry,
    pub attrs: TractAttributes,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayerError {
    #[error("tract layer is empty")]
    Empty,
    #[error("duplicate tract id {0:?}")]
    DuplicateId(String),
    #[error("tract id sets differ; only in one layer: {0:?}")]
    IdMismatch(Vec<String>),
}

/// Tract polygons with their attributes, ordered by tract id.
#[derive(Debug, Clone, PartialEq)]
pub struct TractLayer {
    tracts: Vec<Tract>,
}

impl TractLayer {
    pub fn new(geometries: Vec<TractGeometry>) -> Result<Self, LayerError> {
        if geometries.is_empty() {
            return Err(LayerError::Empty);
        }
        let mut tracts: Vec<Tract> = geometries
            .into_iter()
            .map(|geometry| Tract {
                geometry,
                attrs: TractAttributes::default(),
            })
            .collect();
        tracts.sort_by(|a, b| a.geometry.tract_id.cmp(&b.geometry.tract_id));
        if let Some(w) = tracts.windows(2).find(|w| w[0].geometry.tract_id == w[1].geometry.tract_id) {
            return Err(LayerError::DuplicateId(w[0].geometry.tract_id.clone()));
        }
        Ok(Self { tracts })
    }

    pub fn tracts(&self) -> &[Tract] {
        &self.tracts
    }

    pub(crate) fn tracts_mut(&mut self) -> &mut [Tract] {
        &mut self.tracts
    }

    pub fn len(&self) -> usize {
        self.tracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracts.is_empty()
    }

    pub fn get(&self, tract_id: &str) -> Option<&Tract> {
        self.tracts
            .binary_search_by(|t| t.geometry.tract_id.as_str().cmp(tract_id))
            .ok()
            .map(|i| &self.tracts[i])
    }

    /// `(min_lon, min_lat, max_lon, max_lat)` of the whole layer.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.tracts.iter().map(|t| t.geometry.bounds()).fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
        )
    }

    /// Local metric plane anchored at the centre of the layer bounds.
    pub fn plane(&self) -> LocalPlane {
        let b = self.bounds();
        LocalPlane::new(GeoPoint::new(0.5 * (b.0 + b.2), 0.5 * (b.1 + b.3)))
    }

    pub fn flags(&self, f: impl Fn(&TractAttributes) -> bool) -> BTreeMap<String, bool> {
        self.tracts.iter().map(|t| (t.geometry.tract_id.clone(), f(&t.attrs))).collect()
    }

    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .tracts
            .iter()
            .map(|t| {
                let polys: Vec<Value> = t
                    .geometry
                    .polygons
                    .iter()
                    .map(|p| Value::Array(p.rings().map(|r| json!(r.iter().map(|q| [q.lon, q.lat]).collect::<Vec<_>>())).collect()))
                    .collect();
                let a = &t.attrs;
                json!({
                    "type": "Feature",
                    "properties": {
                        "tract_id": t.geometry.tract_id,
                        "has_posts": a.has_posts,
                        "flood_relevant": a.flood_relevant,
                        "severity": a.severity.map(|s| s.as_str()),
                        "severity_support": a.severity_support,
                        "max_depth": a.max_depth,
                        "claim_count": a.claim_count,
                        "reference_flooded": a.reference_flooded,
                    },
                    "geometry": {"type": "MultiPolygon", "coordinates": polys},
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }

    /// Reads attributes back from a layer document written by
    /// [`TractLayer::to_geojson`].
    pub fn from_geojson(src: &str) -> Result<Self, String> {
        let geoms = crate::interchange::parse_tracts(src).map_err(|e| e.to_string())?;
        let mut layer = Self::new(geoms).map_err(|e| e.to_string())?;
        let doc: Value = serde_json::from_str(src).map_err(|e| e.to_string())?;
        let mut attrs = BTreeMap::new();
        for f in doc["features"].as_array().into_iter().flatten() {
            let p = &f["properties"];
            let id = match &p["tract_id"] {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let a: TractAttributes = serde_json::from_value(p.clone()).unwrap_or_default();
            attrs.insert(id, a);
        }
        for t in layer.tracts_mut() {
            if let Some(a) = attrs.remove(&t.geometry.tract_id) {
                t.attrs = a;
            }
        }
        Ok(layer)
    }
}

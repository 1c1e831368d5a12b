//! Geotagged social-media posts and the line-delimited posts file.

use std::io::{self, BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// How a post's location was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocationKind {
    /// Exact geo-coordinates attached by the client.
    ExactPoint,
    /// Only a place bounding box (usually city level) is known.
    BoundingBoxOnly,
    /// Shared Instagram post carrying the Instagram location point.
    InstagramPoint,
}

/// WGS84 longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

impl From<[f64; 2]> for GeoPoint {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<GeoPoint> for [f64; 2] {
    fn from(p: GeoPoint) -> Self {
        [p.lon, p.lat]
    }
}

/// Axis-aligned lon/lat box, serialized as `[min_lon, min_lat, max_lon, max_lat]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct GeoBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBox {
    pub const fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Self {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new(
            0.5 * (self.min_lon + self.max_lon),
            0.5 * (self.min_lat + self.max_lat),
        )
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    pub fn is_valid(&self) -> bool {
        GeoPoint::new(self.min_lon, self.min_lat).is_valid()
            && GeoPoint::new(self.max_lon, self.max_lat).is_valid()
            && self.min_lon <= self.max_lon
            && self.min_lat <= self.max_lat
    }
}

impl From<[f64; 4]> for GeoBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<GeoBox> for [f64; 4] {
    fn from(b: GeoBox) -> Self {
        [b.min_lon, b.min_lat, b.max_lon, b.max_lat]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PostError {
    #[error("timestamp must be strictly positive, got {0}")]
    NonPositiveTimestamp(i64),
    #[error("{0:?} post requires a point")]
    MissingPoint(LocationKind),
    #[error("BoundingBoxOnly post requires a bbox")]
    MissingBbox,
    #[error("point ({lon}, {lat}) is not a valid WGS84 coordinate", lon = .0.lon, lat = .0.lat)]
    InvalidPoint(GeoPoint),
    #[error("bbox must be finite WGS84 with min <= max per axis")]
    InvalidBbox,
    #[error("post id must not be empty")]
    EmptyId,
    #[error("image_ref must not be empty")]
    EmptyImageRef,
    #[error("timestamp {0:?} is not ISO-8601: {1}")]
    BadTimestamp(String, String),
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// A validated post. Fields are only reachable through accessors so that no
/// invalid post can be constructed outside [`Post::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    id: String,
    timestamp: i64,
    location_kind: LocationKind,
    point: Option<GeoPoint>,
    bbox: Option<GeoBox>,
    image_ref: String,
    text: Option<String>,
}

impl Post {
    pub fn new(
        id: impl Into<String>,
        timestamp: i64,
        location_kind: LocationKind,
        point: Option<GeoPoint>,
        bbox: Option<GeoBox>,
        image_ref: impl Into<String>,
        text: Option<String>,
    ) -> Result<Self, PostError> {
        let id = id.into();
        let image_ref = image_ref.into();
        if id.is_empty() {
            return Err(PostError::EmptyId);
        }
        if image_ref.is_empty() {
            return Err(PostError::EmptyImageRef);
        }
        if timestamp <= 0 {
            return Err(PostError::NonPositiveTimestamp(timestamp));
        }
        match location_kind {
            LocationKind::ExactPoint | LocationKind::InstagramPoint if point.is_none() => {
                return Err(PostError::MissingPoint(location_kind));
            }
            LocationKind::BoundingBoxOnly if bbox.is_none() => return Err(PostError::MissingBbox),
            _ => {}
        }
        if let Some(p) = point {
            if !p.is_valid() {
                return Err(PostError::InvalidPoint(p));
            }
        }
        if let Some(b) = bbox {
            if !b.is_valid() {
                return Err(PostError::InvalidBbox);
            }
        }
        Ok(Self {
            id,
            timestamp,
            location_kind,
            point,
            bbox,
            image_ref,
            text,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// UTC seconds since the epoch.
    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn location_kind(&self) -> LocationKind {
        self.location_kind
    }

    pub fn point(&self) -> Option<GeoPoint> {
        self.point
    }

    pub fn bbox(&self) -> Option<GeoBox> {
        self.bbox
    }

    pub fn image_ref(&self) -> &str {
        &self.image_ref
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn to_record(&self) -> PostRecord {
        let ts = DateTime::<Utc>::from_timestamp(self.timestamp, 0)
            .expect("validated timestamp is representable")
            .to_rfc3339_opts(SecondsFormat::Secs, true);
        PostRecord {
            id: self.id.clone(),
            timestamp: ts,
            location_kind: self.location_kind,
            point: self.point,
            bbox: self.bbox,
            image_ref: self.image_ref.clone(),
            text: self.text.clone(),
        }
    }

    /// One normalized line of the posts file (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("post record serializes")
    }
}

/// Wire form of one line of the posts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub id: String,
    /// ISO-8601 / RFC 3339 timestamp.
    pub timestamp: String,
    pub location_kind: LocationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<GeoBox>,
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl TryFrom<PostRecord> for Post {
    type Error = PostError;

    fn try_from(r: PostRecord) -> Result<Self, Self::Error> {
        let ts = parse_timestamp(&r.timestamp)?;
        Post::new(r.id, ts, r.location_kind, r.point, r.bbox, r.image_ref, r.text)
    }
}

/// Parses an RFC 3339 timestamp (any offset) into whole UTC seconds.
pub fn parse_timestamp(s: &str) -> Result<i64, PostError> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|dt| dt.with_timezone(&Utc).timestamp())
        .map_err(|e| PostError::BadTimestamp(s.to_string(), e.to_string()))
}

/// Parses a single posts-file line.
pub fn parse_post_line(line: &str) -> Result<Post, PostError> {
    let record: PostRecord =
        serde_json::from_str(line).map_err(|e| PostError::Malformed(e.to_string()))?;
    Post::try_from(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    /// 1-based line number in the source.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct PostBatch {
    pub posts: Vec<Post>,
    pub errors: Vec<RecordError>,
}

/// Reads a line-delimited posts stream. Blank lines are skipped, bad records
/// are reported with their line number, I/O failures abort.
pub fn parse_posts<R: BufRead>(reader: R) -> io::Result<PostBatch> {
    let mut batch = PostBatch::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_post_line(&line) {
            Ok(p) => batch.posts.push(p),
            Err(e) => batch.errors.push(RecordError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(batch)
}

pub fn parse_posts_str(s: &str) -> PostBatch {
    parse_posts(s.as_bytes()).expect("reading from memory cannot fail")
}

pub fn write_posts<W: Write>(mut w: W, posts: &[Post]) -> io::Result<()> {
    for p in posts {
        writeln!(w, "{}", p.to_json_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_point_line() {
        let line = r#"{"id":"t1","timestamp":"2017-08-27T14:03:00Z","location_kind":"ExactPoint","point":[-95.37,29.76],"image_ref":"img-1"}"#;
        let p = parse_post_line(line).unwrap();
        assert_eq!(p.location_kind(), LocationKind::ExactPoint);
        assert_eq!(p.point(), Some(GeoPoint::new(-95.37, 29.76)));
        assert_eq!(p.timestamp(), 1_503_842_580);
        assert_eq!(p.to_json_line(), line);
    }

    #[test]
    fn bbox_kind_without_bbox_is_rejected() {
        let line = r#"{"id":"t2","timestamp":"2017-08-27T14:03:00Z","location_kind":"BoundingBoxOnly","image_ref":"img-2"}"#;
        assert_eq!(parse_post_line(line), Err(PostError::MissingBbox));
    }

    #[test]
    fn three_valid_one_malformed() {
        let src = [
            r#"{"id":"a","timestamp":"2017-08-27T00:00:00Z","location_kind":"ExactPoint","point":[-95.0,29.0],"image_ref":"a"}"#,
            r#"{"id":"b","timestamp":"2017-08-27T00:00:00+02:00","location_kind":"InstagramPoint","point":[-95.0,29.0],"bbox":[-96,29,-95,30],"image_ref":"b"}"#,
            r#"{"id":"c","timestamp":"#,
            "",
            r#"{"id":"d","timestamp":"2017-08-28T00:00:00Z","location_kind":"BoundingBoxOnly","bbox":[-96,29,-95,30],"image_ref":"d","text":"flooded"}"#,
        ]
        .join("\n");
        let batch = parse_posts_str(&src);
        assert_eq!(batch.posts.len(), 3);
        assert_eq!(batch.errors.len(), 1);
        assert_eq!(batch.errors[0].line, 3);
        // offset is folded into UTC
        assert_eq!(batch.posts[1].timestamp(), 1_503_792_000 - 7200);
    }

    #[test]
    fn invariants_checked_at_construction() {
        assert!(matches!(
            Post::new("x", 0, LocationKind::ExactPoint, Some(GeoPoint::new(0.0, 0.0)), None, "i", None),
            Err(PostError::NonPositiveTimestamp(0))
        ));
        assert!(matches!(
            Post::new("x", 5, LocationKind::InstagramPoint, None, None, "i", None),
            Err(PostError::MissingPoint(LocationKind::InstagramPoint))
        ));
        assert_eq!(
            Post::new(
                "x",
                5,
                LocationKind::BoundingBoxOnly,
                None,
                Some(GeoBox::new(1.0, 0.0, 0.0, 1.0)),
                "i",
                None
            ),
            Err(PostError::InvalidBbox)
        );
        assert!(matches!(
            Post::new("x", 5, LocationKind::ExactPoint, Some(GeoPoint::new(200.0, 0.0)), None, "i", None),
            Err(PostError::InvalidPoint(_))
        ));
    }

    #[test]
    fn unknown_fields_are_errors() {
        let line = r#"{"id":"t1","timestamp":"2017-08-27T14:03:00Z","location_kind":"ExactPoint","point":[1,2],"image_ref":"i","extra":1}"#;
        assert!(matches!(parse_post_line(line), Err(PostError::Malformed(_))));
    }
}

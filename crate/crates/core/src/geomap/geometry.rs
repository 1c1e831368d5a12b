//! Planar geometry on lon/lat and on a local metric plane.

use crate::interchange::tracts::{Polygon, TractGeometry};
use crate::interchange::{GeoBox, GeoPoint};

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Local equirectangular projection anchored at `origin`: metres east and
/// north of the anchor, with longitudes scaled by the cosine of its latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPlane {
    pub origin: GeoPoint,
    m_per_deg_lon: f64,
    m_per_deg_lat: f64,
}

impl LocalPlane {
    pub fn new(origin: GeoPoint) -> Self {
        let m_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Self {
            origin,
            m_per_deg_lon: m_per_deg_lat * origin.lat.to_radians().cos(),
            m_per_deg_lat,
        }
    }

    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint::new(self.origin.lon + x / self.m_per_deg_lon, self.origin.lat + y / self.m_per_deg_lat)
    }

    pub fn distance_m(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let (ax, ay) = self.project(a);
        let (bx, by) = self.project(b);
        (ax - bx).hypot(ay - by)
    }
}

/// Great-circle distance in metres.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = ((b.lon - a.lon) * (p.lat - a.lat)).abs() + ((b.lat - a.lat) * (p.lon - a.lon)).abs();
    cross.abs() <= 4.0 * f64::EPSILON * scale
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// Position of a point relative to a closed ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingSide {
    Inside,
    Boundary,
    Outside,
}

/// Even-odd test with explicit boundary detection.
pub fn ring_side(p: GeoPoint, ring: &[GeoPoint]) -> RingSide {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(p, a, b) {
            return RingSide::Boundary;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    if inside {
        RingSide::Inside
    } else {
        RingSide::Outside
    }
}

/// Containment with boundary points counted as inside (also on hole borders).
pub fn polygon_contains(poly: &Polygon, p: GeoPoint) -> bool {
    match ring_side(p, &poly.exterior) {
        RingSide::Outside => false,
        RingSide::Boundary => true,
        RingSide::Inside => poly.holes.iter().all(|h| ring_side(p, h) != RingSide::Inside),
    }
}

pub fn tract_contains(t: &TractGeometry, p: GeoPoint) -> bool {
    t.polygons.iter().any(|poly| polygon_contains(poly, p))
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
}

/// Metric distance from a point to the tract (0 inside or on the border).
pub fn tract_distance_m(t: &TractGeometry, p: GeoPoint, plane: &LocalPlane) -> f64 {
    if tract_contains(t, p) {
        return 0.0;
    }
    let pp = plane.project(p);
    let mut best = f64::INFINITY;
    for poly in &t.polygons {
        for ring in poly.rings() {
            for w in ring.windows(2) {
                best = best.min(point_segment_distance(pp, plane.project(w[0]), plane.project(w[1])));
            }
        }
    }
    best
}

fn segments_intersect(p1: GeoPoint, p2: GeoPoint, q1: GeoPoint, q2: GeoPoint) -> bool {
    let orient = |a: GeoPoint, b: GeoPoint, c: GeoPoint| {
        let v = (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
        v.partial_cmp(&0.0).map_or(0, |o| o as i8)
    };
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(p1, q1, q2))
        || (d2 == 0 && on_segment(p2, q1, q2))
        || (d3 == 0 && on_segment(q1, p1, p2))
        || (d4 == 0 && on_segment(q2, p1, p2))
}

/// Whether the closed box and the tract share at least one point.
pub fn tract_intersects_box(t: &TractGeometry, b: &GeoBox) -> bool {
    let corners = [
        GeoPoint::new(b.min_lon, b.min_lat),
        GeoPoint::new(b.max_lon, b.min_lat),
        GeoPoint::new(b.max_lon, b.max_lat),
        GeoPoint::new(b.min_lon, b.max_lat),
    ];
    for poly in &t.polygons {
        if poly.exterior.iter().any(|&v| b.contains(v)) || corners.iter().any(|&c| polygon_contains(poly, c)) {
            return true;
        }
        for ring in poly.rings() {
            for w in ring.windows(2) {
                for i in 0..4 {
                    if segments_intersect(w[0], w[1], corners[i], corners[(i + 1) % 4]) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

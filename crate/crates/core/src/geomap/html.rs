use std::fmt::Write as _;

use super::layer::TractLayer;
use crate::interchange::{GeoPoint, WaterLevelClass};

#[derive(Debug, Clone, PartialEq)]
pub struct MapMarker {
    pub point: GeoPoint,
    pub image_ref: String,
    pub class: Option<WaterLevelClass>,
    pub confidence: Option<f64>,
}

const WIDTH: f64 = 900.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn severity_fill(c: Option<WaterLevelClass>) -> Option<&'static str> {
    Some(match c? {
        WaterLevelClass::N => "#f0f0f0",
        WaterLevelClass::A => "#c6dbef",
        WaterLevelClass::B => "#6baed6",
        WaterLevelClass::C => "#2171b5",
        WaterLevelClass::D => "#08306b",
    })
}

/// Self-contained HTML document: an SVG of the tracts (filled by severity,
/// else by extent), post markers with hover popups, and the layer GeoJSON
/// embedded for reuse. Output depends only on the inputs.
pub fn render_map(layer: &TractLayer, markers: &[MapMarker], title: &str) -> String {
    let plane = layer.plane();
    let b = layer.bounds();
    let (x0, y0) = plane.project(GeoPoint::new(b.0, b.1));
    let (x1, y1) = plane.project(GeoPoint::new(b.2, b.3));
    let scale = WIDTH / (x1 - x0).max(1e-9);
    let height = ((y1 - y0) * scale).max(1.0);
    let to_svg = |p: GeoPoint| {
        let (x, y) = plane.project(p);
        ((x - x0) * scale, height - (y - y0) * scale)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    );
    for t in layer.tracts() {
        let a = &t.attrs;
        let fill = severity_fill(a.severity).unwrap_or(if a.flood_relevant { "#fdd49e" } else { "#ffffff" });
        let stroke = if a.reference_flooded { "#d7301f" } else { "#999999" };
        let mut d = String::new();
        for poly in &t.geometry.polygons {
            for ring in poly.rings() {
                for (i, &p) in ring.iter().enumerate() {
                    let (x, y) = to_svg(p);
                    let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { "L" });
                }
                d.push('Z');
            }
        }
        let depth = a.max_depth.map_or("none".to_string(), |v| format!("{v:.2} m"));
        let severity = a.severity.map_or("none", |s| s.as_str());
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="{fill}" fill-rule="evenodd" stroke="{stroke}" stroke-width="1"><title>tract {}: extent {}, severity {severity}, max depth {depth}, claims {}</title></path>"#,
            escape(&t.geometry.tract_id),
            a.flood_relevant,
            a.claim_count,
        );
    }
    for m in markers {
        let (x, y) = to_svg(m.point);
        let class = m.class.map_or("-", |c| c.as_str());
        let conf = m.confidence.map_or("-".to_string(), |c| format!("{c:.3}"));
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#e6550d" stroke="#000000" stroke-width="0.5"><title>{}: class {class}, confidence {conf}</title></circle>"##,
            escape(&m.image_ref),
        );
    }
    svg.push_str("</svg>\n");

    let geojson = serde_json::to_string(&layer.to_geojson())
        .expect("layer serialises")
        .replace("</", "<\\/");
    let title = escape(title);
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n</head>\n<body>\n<h1>{title}</h1>\n{svg}<p>Fill: water-level class (light to dark blue for A to D), orange for flood extent without a class. Red outline: reference flooded.</p>\n<script type=\"application/geo+json\" id=\"tracts\">{geojson}</script>\n</body>\n</html>\n"
    )
}

use crate::interchange::bundle::PixelBox;
use crate::interchange::label_map::{ClassHistogram, LabelGrid, LabelMapError, GROUND, WATER};

/// Share of the box height scanned below the box.
pub const STRIP_HEIGHT_SHARE: f64 = 0.25;

/// What a person stands on. The declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Surface {
    Water,
    Ground,
    Other,
}

impl Surface {
    pub fn from_class_name(name: &str) -> Self {
        match name {
            WATER => Surface::Water,
            GROUND => Surface::Ground,
            _ => Surface::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuery {
    pub surface: Surface,
    pub histogram: ClassHistogram,
    /// Set when the strip below the box lay outside the image and the bottom
    /// row of the box was used instead.
    pub fallback: bool,
}

/// Most frequent class in the strip of height `h/4` directly below the box,
/// clipped to the image. Equal counts resolve Water, then Ground, then Other.
pub fn support_surface(grid: &LabelGrid, bbox: &PixelBox, image_w: f64, image_h: f64) -> Result<SurfaceQuery, LabelMapError> {
    let strip = PixelBox::new(
        bbox.x_min,
        bbox.y_max,
        bbox.x_max,
        (bbox.y_max + STRIP_HEIGHT_SHARE * bbox.height()).min(image_h),
    );
    let (histogram, fallback) = if strip.y_min < strip.y_max && strip.y_min < image_h {
        (grid.label_at(&strip)?, false)
    } else {
        let bottom = bbox.y_max.min(image_h);
        let row = PixelBox::new(bbox.x_min, (bottom - 1.0).max(bbox.y_min), bbox.x_max, bottom);
        (grid.label_at(&row.clamped(image_w, image_h))?, true)
    };
    let surface = majority_surface(grid, &histogram);
    Ok(SurfaceQuery {
        surface,
        histogram,
        fallback,
    })
}

fn majority_surface(grid: &LabelGrid, hist: &ClassHistogram) -> Surface {
    let mut best: Option<(u64, Surface)> = None;
    for (&id, &count) in hist {
        let s = Surface::from_class_name(grid.class_name(id).unwrap_or_default());
        let better = match best {
            None => true,
            Some((c, bs)) => count > c || (count == c && s < bs),
        };
        if better {
            best = Some((count, s));
        }
    }
    best.map_or(Surface::Other, |(_, s)| s)
}

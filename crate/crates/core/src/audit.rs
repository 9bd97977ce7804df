//! Quality flags for labeled scenes.
//!
//! A center point can miss the object it belongs to (a ring, a chair seen
//! through its legs), and one caption can annotate several objects. Both
//! cases are reported, never silently fixed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::SceneRecord;
use crate::caption::normalize_caption;
use crate::depth::{center_pixel, median, DepthError, DepthMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum AuditFlag {
    /// The center pixel disagrees with the bulk of the bbox.
    CenterOffset {
        image_id: String,
        object_id: String,
        center_depth: f64,
        bbox_median: f64,
        difference: f64,
    },
    /// Several objects share one normalized caption.
    DuplicateCaption {
        image_id: String,
        caption: String,
        object_ids: Vec<String>,
    },
}

/// Flag suspicious objects of a labeled scene. `map` must be the normalized
/// map the labels were sampled from.
pub fn audit_scene(record: &SceneRecord, map: &DepthMap, threshold: f64) -> Vec<AuditFlag> {
    let mut flags = Vec::new();
    let sx = map.width() as f64 / f64::from(record.width);
    let sy = map.height() as f64 / f64::from(record.height);

    for object in &record.objects {
        let center = (object.center.0 * sx, object.center.1 * sy);
        let Ok((px, py)) = center_pixel(map, center) else {
            continue;
        };
        let center_depth = map.get(px, py);
        let b = &object.bbox;
        let Some(mut interior) = bbox_pixels(map, b.x * sx, b.y * sy, b.w * sx, b.h * sy) else {
            continue;
        };
        let bbox_median = median(&mut interior);
        let difference = (center_depth - bbox_median).abs();
        if difference > threshold {
            flags.push(AuditFlag::CenterOffset {
                image_id: record.image_id.clone(),
                object_id: object.object_id.clone(),
                center_depth,
                bbox_median,
                difference,
            });
        }
    }

    let mut by_caption: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for object in &record.objects {
        by_caption
            .entry(normalize_caption(&object.caption))
            .or_default()
            .push(object.object_id.clone());
    }
    for (caption, object_ids) in by_caption {
        if object_ids.len() >= 2 {
            flags.push(AuditFlag::DuplicateCaption {
                image_id: record.image_id.clone(),
                caption,
                object_ids,
            });
        }
    }
    flags
}

/// Depth values of the pixels in `[floor(x), ceil(x + w)) × [floor(y), ceil(y + h))`
/// clipped to the map, or `None` if nothing remains.
fn bbox_pixels(map: &DepthMap, x: f64, y: f64, w: f64, h: f64) -> Option<Vec<f64>> {
    let span = |lo: f64, len: f64, n: usize| {
        let start = lo.floor().max(0.0) as usize;
        let end = ((lo + len).ceil().max(0.0) as usize).min(n);
        (start < end).then_some(start..end)
    };
    let xs = span(x, w, map.width())?;
    let ys = span(y, h, map.height())?;
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for y in ys {
        for x in xs.clone() {
            out.push(map.get(x, y));
        }
    }
    Some(out)
}

/// Convenience for callers holding a possibly unlabeled map.
pub fn audit_scene_checked(
    record: &SceneRecord,
    map: &DepthMap,
    threshold: f64,
) -> Result<Vec<AuditFlag>, DepthError> {
    if !map.is_normalized() {
        return Err(DepthError::NotNormalized);
    }
    Ok(audit_scene(record, map, threshold))
}

//! Scene annotations: the canonical scene schema and the Make3D manifest.
//!
//! Both inputs are lowered into [`SceneRecord`]s. Structural problems (bad
//! JSON) abort the parse with a line/column position; problems inside an
//! otherwise well-formed entry (missing caption, missing bbox, duplicate
//! object ids) reject only that record and are reported in
//! [`ParsedScenes::rejects`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::label::DepthLabel;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("malformed annotation input at line {line}, column {column} (byte {offset}): {message}")]
    Syntax {
        line: usize,
        column: usize,
        offset: usize,
        message: String,
    },
    #[error("invalid bbox {0:?}: width and height must be positive")]
    InvalidBBox([f64; 4]),
    #[error("unknown annotation format {0:?} (expected coco_vg or make3d_manifest)")]
    UnknownFormat(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    CocoVg,
    Make3dManifest,
}

impl FromStr for AnnotationFormat {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coco_vg" | "coco" | "vg" => Ok(Self::CocoVg),
            "make3d_manifest" | "make3d" => Ok(Self::Make3dManifest),
            other => Err(AnnotationError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for AnnotationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CocoVg => "coco_vg",
            Self::Make3dManifest => "make3d_manifest",
        })
    }
}

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

/// Center of a bbox as exact fractional pixels.
pub fn bbox_center(bbox: &BBox) -> Result<(f64, f64), AnnotationError> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(AnnotationError::InvalidBBox(bbox.as_array()));
    }
    Ok((bbox.x + bbox.w / 2.0, bbox.y + bbox.h / 2.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: String,
    /// Verbatim source caption.
    pub caption: String,
    pub bbox: BBox,
    pub center: (f64, f64),
    /// The source bbox overflowed the image and was clamped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_label: Option<DepthLabel>,
}

impl SceneObject {
    /// Build an object from a bbox, deriving its center.
    pub fn new(
        object_id: impl Into<String>,
        caption: impl Into<String>,
        bbox: BBox,
    ) -> Result<Self, AnnotationError> {
        let center = bbox_center(&bbox)?;
        Ok(SceneObject {
            object_id: object_id.into(),
            caption: caption.into(),
            bbox,
            center,
            clamped: false,
            depth_label: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: String,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

impl SceneRecord {
    pub fn labeled_objects(&self) -> impl Iterator<Item = (&SceneObject, DepthLabel)> {
        self.objects.iter().filter_map(|o| o.depth_label.map(|l| (o, l)))
    }
}

/// An input entry that could not become a [`SceneRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// Zero-based position of the entry in the input.
    pub entry: usize,
    pub image_id: Option<String>,
    /// One-based source line, when known.
    pub line: Option<usize>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneWarning {
    EmptyObjects { image_id: String },
    BboxClamped { image_id: String, object_id: String },
    DimensionsInferred { image_id: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedScenes {
    pub records: Vec<SceneRecord>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<SceneWarning>,
    /// Number of entries seen; always `records.len() + rejects.len()`.
    pub entries: usize,
}

pub fn parse_annotations(
    source: &[u8],
    format: AnnotationFormat,
) -> Result<ParsedScenes, AnnotationError> {
    match format {
        AnnotationFormat::CocoVg => parse_scene_json(source),
        AnnotationFormat::Make3dManifest => parse_make3d_manifest(source),
    }
}

fn syntax_error(source: &[u8], err: &serde_json::Error, base: usize) -> AnnotationError {
    let (line, column) = (err.line(), err.column());
    let offset = offset_of(source, line, column).unwrap_or(base);
    AnnotationError::Syntax {
        line,
        column,
        offset,
        message: err.to_string(),
    }
}

fn offset_of(source: &[u8], line: usize, column: usize) -> Option<usize> {
    if line == 0 {
        return None;
    }
    let mut start = 0;
    for _ in 1..line {
        start += source[start..].iter().position(|&b| b == b'\n')? + 1;
    }
    Some(start + column.saturating_sub(1))
}

fn line_of(source: &[u8], offset: usize) -> usize {
    source[..offset.min(source.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Entries are one JSON array of records, or a sequence of records (a
/// single object or JSONL).
fn parse_scene_json(source: &[u8]) -> Result<ParsedScenes, AnnotationError> {
    let first = source.iter().find(|b| !b.is_ascii_whitespace()).copied();
    let mut entries: Vec<(Value, Option<usize>)> = Vec::new();
    if first == Some(b'[') {
        let values: Vec<Value> =
            serde_json::from_slice(source).map_err(|e| syntax_error(source, &e, 0))?;
        entries.extend(values.into_iter().map(|v| (v, None)));
    } else {
        let mut stream = serde_json::Deserializer::from_slice(source).into_iter::<Value>();
        loop {
            let start = stream.byte_offset();
            match stream.next() {
                None => break,
                Some(Ok(v)) => {
                    let at = start
                        + source[start..]
                            .iter()
                            .position(|b| !b.is_ascii_whitespace())
                            .unwrap_or(0);
                    entries.push((v, Some(line_of(source, at))));
                }
                Some(Err(e)) => return Err(syntax_error(source, &e, start)),
            }
        }
    }

    let mut out = ParsedScenes {
        entries: entries.len(),
        ..Default::default()
    };
    for (entry, (value, line)) in entries.into_iter().enumerate() {
        match scene_from_value(&value, &mut out.warnings) {
            Ok(record) => out.records.push(record),
            Err(reason) => out.rejects.push(Reject {
                entry,
                image_id: value.get("image_id").and_then(id_string),
                line,
                reason,
            }),
        }
    }
    Ok(out)
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn positive_dim(v: Option<&Value>, name: &str) -> Result<u32, String> {
    let n = v
        .and_then(Value::as_u64)
        .ok_or_else(|| format!("missing or non-integer {name}"))?;
    if n == 0 || n > u64::from(u32::MAX) {
        return Err(format!("{name} must be a positive integer, got {n}"));
    }
    Ok(n as u32)
}

fn number_array<const N: usize>(v: Option<&Value>) -> Option<[f64; N]> {
    let arr = v?.as_array()?;
    if arr.len() != N {
        return None;
    }
    let mut out = [0.0; N];
    for (slot, item) in out.iter_mut().zip(arr) {
        *slot = item.as_f64().filter(|x| x.is_finite())?;
    }
    Some(out)
}

fn caption_of(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string)
}

fn scene_from_value(value: &Value, warnings: &mut Vec<SceneWarning>) -> Result<SceneRecord, String> {
    let image_id = value
        .get("image_id")
        .and_then(id_string)
        .ok_or("missing image_id")?;
    let image_path = value
        .get("image_path")
        .and_then(Value::as_str)
        .ok_or("missing image_path")?
        .to_string();
    let width = positive_dim(value.get("width"), "width")?;
    let height = positive_dim(value.get("height"), "height")?;
    let raw_objects = value
        .get("objects")
        .and_then(Value::as_array)
        .ok_or("missing objects array")?;

    let mut local_warnings = Vec::new();
    let mut objects = Vec::with_capacity(raw_objects.len());
    let mut seen = HashSet::new();
    for (k, obj) in raw_objects.iter().enumerate() {
        let object_id = obj
            .get("object_id")
            .and_then(id_string)
            .ok_or_else(|| format!("object {k}: missing object_id"))?;
        if !seen.insert(object_id.clone()) {
            return Err(format!("duplicate object_id {object_id:?}"));
        }
        let caption = caption_of(obj.get("caption"))
            .ok_or_else(|| format!("object {object_id:?}: missing caption"))?;
        let [x, y, w, h] = number_array::<4>(obj.get("bbox"))
            .ok_or_else(|| format!("object {object_id:?}: missing bbox"))?;
        if !(w > 0.0 && h > 0.0) {
            return Err(format!("object {object_id:?}: invalid bbox, non-positive size"));
        }
        let (bbox, clamped) = clamp_bbox(BBox::new(x, y, w, h), width, height)
            .ok_or_else(|| format!("object {object_id:?}: bbox lies outside the image"))?;
        let mut object = SceneObject::new(object_id, caption, bbox).map_err(|e| e.to_string())?;
        if clamped {
            object.clamped = true;
            local_warnings.push(SceneWarning::BboxClamped {
                image_id: image_id.clone(),
                object_id: object.object_id.clone(),
            });
        }
        objects.push(object);
    }
    if objects.is_empty() {
        local_warnings.push(SceneWarning::EmptyObjects {
            image_id: image_id.clone(),
        });
    }
    warnings.append(&mut local_warnings);
    Ok(SceneRecord {
        image_id,
        image_path,
        width,
        height,
        objects,
    })
}

/// Intersect with `[0,width]×[0,height]`; `None` if nothing is left.
fn clamp_bbox(b: BBox, width: u32, height: u32) -> Option<(BBox, bool)> {
    let (wf, hf) = (f64::from(width), f64::from(height));
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = (b.x + b.w).min(wf);
    let y1 = (b.y + b.h).min(hf);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let clamped = x0 != b.x || y0 != b.y || x1 != b.x + b.w || y1 != b.y + b.h;
    if !clamped {
        return Some((b, false));
    }
    Some((BBox::new(x0, y0, x1 - x0, y1 - y0), true))
}

struct ManifestGroup {
    image_id: String,
    image_path: String,
    first_line: usize,
    dims: Option<(u32, u32)>,
    objects: Vec<SceneObject>,
    error: Option<String>,
}

/// One JSON object per line; rows sharing an `image_id` form one record in
/// order of first appearance. Rows may carry optional `width`, `height`, and
/// `object_id`; without dimensions, the record spans the annotated centers
/// and a [`SceneWarning::DimensionsInferred`] is emitted.
fn parse_make3d_manifest(source: &[u8]) -> Result<ParsedScenes, AnnotationError> {
    let mut groups: Vec<ManifestGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut offset = 0usize;

    for (lineno, raw) in source.split(|&b| b == b'\n').enumerate() {
        let line_start = offset;
        offset += raw.len() + 1;
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let line = lineno + 1;
        let value: Value = serde_json::from_slice(raw).map_err(|e| AnnotationError::Syntax {
            line,
            column: e.column(),
            offset: line_start + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        let Some(image_id) = value.get("image_id").and_then(id_string) else {
            // Without an id the row cannot be attached to any record.
            groups.push(ManifestGroup {
                image_id: String::new(),
                image_path: String::new(),
                first_line: line,
                dims: None,
                objects: Vec::new(),
                error: Some(format!("line {line}: missing image_id")),
            });
            continue;
        };
        let gi = *index.entry(image_id.clone()).or_insert_with(|| {
            groups.push(ManifestGroup {
                image_id: image_id.clone(),
                image_path: String::new(),
                first_line: line,
                dims: None,
                objects: Vec::new(),
                error: None,
            });
            groups.len() - 1
        });
        let group = &mut groups[gi];
        if group.error.is_some() {
            continue;
        }
        if let Err(reason) = add_manifest_row(group, &value, line) {
            group.error = Some(reason);
        }
    }

    let mut out = ParsedScenes {
        entries: groups.len(),
        ..Default::default()
    };
    for (entry, group) in groups.into_iter().enumerate() {
        if let Some(reason) = group.error {
            out.rejects.push(Reject {
                entry,
                image_id: (!group.image_id.is_empty()).then_some(group.image_id),
                line: Some(group.first_line),
                reason,
            });
            continue;
        }
        let (width, height) = match group.dims {
            Some(d) => d,
            None => {
                out.warnings.push(SceneWarning::DimensionsInferred {
                    image_id: group.image_id.clone(),
                });
                let w = group.objects.iter().map(|o| o.center.0).fold(0.0, f64::max);
                let h = group.objects.iter().map(|o| o.center.1).fold(0.0, f64::max);
                (w.floor() as u32 + 1, h.floor() as u32 + 1)
            }
        };
        if let Some(o) = group
            .objects
            .iter()
            .find(|o| o.center.0 > f64::from(width) || o.center.1 > f64::from(height))
        {
            out.rejects.push(Reject {
                entry,
                image_id: Some(group.image_id),
                line: Some(group.first_line),
                reason: format!("object {:?}: center outside {width}x{height}", o.object_id),
            });
            continue;
        }
        out.records.push(SceneRecord {
            image_id: group.image_id,
            image_path: group.image_path,
            width,
            height,
            objects: group.objects,
        });
    }
    Ok(out)
}

fn add_manifest_row(group: &mut ManifestGroup, value: &Value, line: usize) -> Result<(), String> {
    let image_path = value
        .get("image_path")
        .and_then(Value::as_str)
        .ok_or_else(|| format!("line {line}: missing image_path"))?;
    if group.image_path.is_empty() {
        group.image_path = image_path.to_string();
    }
    if value.get("width").is_some() || value.get("height").is_some() {
        let dims = (
            positive_dim(value.get("width"), "width")?,
            positive_dim(value.get("height"), "height")?,
        );
        match group.dims {
            Some(prev) if prev != dims => {
                return Err(format!("line {line}: conflicting image dimensions"))
            }
            _ => group.dims = Some(dims),
        }
    }
    let caption =
        caption_of(value.get("caption")).ok_or_else(|| format!("line {line}: missing caption"))?;
    let [cx, cy] = number_array::<2>(value.get("center"))
        .ok_or_else(|| format!("line {line}: missing center"))?;
    if cx < 0.0 || cy < 0.0 {
        return Err(format!("line {line}: negative center"));
    }
    let object_id = value
        .get("object_id")
        .and_then(id_string)
        .unwrap_or_else(|| format!("{}#{}", group.image_id, group.objects.len()));
    if group.objects.iter().any(|o| o.object_id == object_id) {
        return Err(format!("line {line}: duplicate object_id {object_id:?}"));
    }
    group.objects.push(SceneObject {
        object_id,
        caption,
        bbox: BBox::new(cx, cy, 1.0, 1.0),
        center: (cx, cy),
        clamped: false,
        depth_label: None,
    });
    Ok(())
}

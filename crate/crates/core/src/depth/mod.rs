//! Disparity/depth grids and object depth labels.
//!
//! The pipeline for one image is
//! `read → disparity_to_depth → normalize_depth → sample_object_depth`.
//! Grids are row-major with a top-left origin. After normalization 0 is the
//! closest pixel and 1 the farthest.

mod io;

pub use io::{read_depth_file, write_pfm, write_png16, write_rawf32, DepthFormat, DepthGrid};

use thiserror::Error;

use crate::annotation::SceneRecord;
use crate::label::{round_half_up, DepthLabel};

/// Default inversion offset; keeps zero disparity finite.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DepthError {
    #[error("depth file header mismatch: {0}")]
    Header(String),
    #[error("depth payload size mismatch: expected {expected} bytes, found {found}")]
    Size { expected: usize, found: usize },
    #[error("invalid value {value} at pixel ({x}, {y}), byte offset {offset}")]
    BadPixel {
        x: usize,
        y: usize,
        offset: usize,
        value: f64,
    },
    #[error("grid of {width}x{height} needs {expected} values, got {found}")]
    Shape {
        width: usize,
        height: usize,
        expected: usize,
        found: usize,
    },
    #[error("flat depth map (min == max == {0}) cannot rank proximity")]
    DegenerateMap(f64),
    #[error("depth map must be normalized before sampling")]
    NotNormalized,
    #[error("sampling window must be an odd integer >= 1, got {0}")]
    InvalidWindow(usize),
    #[error("center ({cx}, {cy}) lies outside the {width}x{height} map")]
    OutOfBounds {
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
    #[error("no depth map found for image {0:?}")]
    Missing(String),
    #[error("i/o error reading depth map: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DisparityMap {
    /// Values must be finite and non-negative; larger means closer.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        check_shape(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(DepthError::BadPixel {
                x: i % width,
                y: i / width,
                offset: i,
                value: values[i],
            });
        }
        Ok(DisparityMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl DepthMap {
    /// An unnormalized depth grid; smaller means closer.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        check_shape(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DepthError::BadPixel {
                x: i % width,
                y: i / width,
                offset: i,
                value: values[i],
            });
        }
        Ok(DepthMap {
            width,
            height,
            values,
            normalized: false,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

fn check_shape(width: usize, height: usize, found: usize) -> Result<(), DepthError> {
    let expected = width.saturating_mul(height);
    if width == 0 || height == 0 || expected != found {
        return Err(DepthError::Shape {
            width,
            height,
            expected,
            found,
        });
    }
    Ok(())
}

/// Elementwise `1 / (disparity + epsilon)`.
///
/// # Panics
///
/// If `epsilon` is not a positive finite number.
pub fn disparity_to_depth(map: &DisparityMap, epsilon: f64) -> DepthMap {
    assert!(
        epsilon > 0.0 && epsilon.is_finite(),
        "epsilon must be positive, got {epsilon}"
    );
    DepthMap {
        width: map.width,
        height: map.height,
        values: map.values.iter().map(|d| 1.0 / (d + epsilon)).collect(),
        normalized: false,
    }
}

/// Per-image min–max normalization to `[0, 1]`.
pub fn normalize_depth(map: &DepthMap) -> Result<DepthMap, DepthError> {
    let (min, max) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return Err(DepthError::DegenerateMap(min));
    }
    let range = max - min;
    Ok(DepthMap {
        width: map.width,
        height: map.height,
        values: map.values.iter().map(|v| (v - min) / range).collect(),
        normalized: true,
    })
}

/// Raw (unquantized) depth around a center: the single pixel for
/// `window == 1`, else the median of the `window × window` neighborhood
/// clipped to the image.
pub fn sample_depth_value(
    map: &DepthMap,
    center: (f64, f64),
    window: usize,
) -> Result<f64, DepthError> {
    if window == 0 || window % 2 == 0 {
        return Err(DepthError::InvalidWindow(window));
    }
    let (px, py) = center_pixel(map, center)?;
    if window == 1 {
        return Ok(map.get(px, py));
    }
    let r = window / 2;
    let mut neighborhood: Vec<f64> = Vec::with_capacity(window * window);
    for y in py.saturating_sub(r)..=(py + r).min(map.height - 1) {
        for x in px.saturating_sub(r)..=(px + r).min(map.width - 1) {
            neighborhood.push(map.get(x, y));
        }
    }
    Ok(median(&mut neighborhood))
}

/// Depth label of an object from a normalized map.
pub fn sample_object_depth(
    map: &DepthMap,
    center: (f64, f64),
    window: usize,
) -> Result<DepthLabel, DepthError> {
    if !map.normalized {
        return Err(DepthError::NotNormalized);
    }
    let v = sample_depth_value(map, center, window)?;
    DepthLabel::quantize(v).map_err(|_| DepthError::NotNormalized)
}

/// Pixel under a fractional center, rounding half-up. Centers up to one
/// pixel beyond the grid are clamped onto the border; farther is an error.
pub(crate) fn center_pixel(map: &DepthMap, (cx, cy): (f64, f64)) -> Result<(usize, usize), DepthError> {
    let out = || DepthError::OutOfBounds {
        cx,
        cy,
        width: map.width,
        height: map.height,
    };
    let px = round_half_up(cx);
    let py = round_half_up(cy);
    if !px.is_finite() || !py.is_finite() {
        return Err(out());
    }
    if px < -1.0 || py < -1.0 || px > map.width as f64 || py > map.height as f64 {
        return Err(out());
    }
    let clamp = |p: f64, n: usize| (p.max(0.0) as usize).min(n - 1);
    Ok((clamp(px, map.width), clamp(py, map.height)))
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// An object whose center could not be sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelIssue {
    pub object_id: String,
    pub error: DepthError,
}

/// Assign a depth label to every object of `record` from a normalized map.
///
/// When the map resolution differs from the record's, centers are rescaled
/// into map coordinates first. Objects that fail to sample keep
/// `depth_label == None` and are reported.
pub fn label_scene(
    record: &SceneRecord,
    map: &DepthMap,
    window: usize,
) -> Result<(SceneRecord, Vec<LabelIssue>), DepthError> {
    if !map.normalized {
        return Err(DepthError::NotNormalized);
    }
    let sx = map.width as f64 / f64::from(record.width);
    let sy = map.height as f64 / f64::from(record.height);
    let mut out = record.clone();
    let mut issues = Vec::new();
    for object in &mut out.objects {
        let center = (object.center.0 * sx, object.center.1 * sy);
        match sample_object_depth(map, center, window) {
            Ok(label) => object.depth_label = Some(label),
            Err(error) => {
                object.depth_label = None;
                issues.push(LabelIssue {
                    object_id: object.object_id.clone(),
                    error,
                });
            }
        }
    }
    Ok((out, issues))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> DepthMap {
        let disp = DisparityMap::new(2, 2, vec![1.0, 2.0, 4.0, 5.0]).unwrap();
        normalize_depth(&disparity_to_depth(&disp, DEFAULT_EPSILON)).unwrap()
    }

    #[test]
    fn inversion_examples() {
        let disp = DisparityMap::new(2, 2, vec![1.0, 2.0, 4.0, 5.0]).unwrap();
        let depth = disparity_to_depth(&disp, 1e-12);
        for (got, want) in depth.values().iter().zip([1.0, 0.5, 0.25, 0.2]) {
            assert!((got - want).abs() < 1e-9);
        }
        let zero = disparity_to_depth(&DisparityMap::new(1, 1, vec![0.0]).unwrap(), 1e-6);
        assert!((zero.values()[0] - 1e6).abs() < 1e-6);
        let flat = disparity_to_depth(&DisparityMap::new(3, 1, vec![2.0; 3]).unwrap(), 1e-6);
        assert!(flat.values().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn normalization_fixture() {
        // Frozen from an exact rational computation with epsilon = 1e-6.
        let expected = [1.0, 0.375_000_187_499_906_3, 0.062_500_046_874_988_28, 0.0];
        let map = fixture();
        assert!(map.is_normalized());
        for (got, want) in map.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let ideal = normalize_depth(&DepthMap::new(2, 2, vec![1.0, 0.5, 0.25, 0.2]).unwrap()).unwrap();
        for (got, want) in ideal.values().iter().zip([1.0, 0.375, 0.0625, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_map_is_degenerate() {
        let flat = DepthMap::new(2, 1, vec![0.7, 0.7]).unwrap();
        assert_eq!(normalize_depth(&flat), Err(DepthError::DegenerateMap(0.7)));
    }

    #[test]
    fn sampling_examples() {
        let map = fixture();
        assert_eq!(sample_object_depth(&map, (0.0, 0.0), 1).unwrap().to_string(), "1.00");
        assert_eq!(sample_object_depth(&map, (1.0, 1.0), 1).unwrap().to_string(), "0.00");
        assert_eq!(sample_object_depth(&map, (0.4, 0.4), 1).unwrap().to_string(), "1.00");
        assert_eq!(sample_object_depth(&map, (1.0, 0.0), 1).unwrap().to_string(), "0.38");
        assert_eq!(sample_object_depth(&map, (0.0, 1.0), 1).unwrap().to_string(), "0.06");
        // 0.5 rounds up to pixel 1
        assert_eq!(sample_object_depth(&map, (0.5, 0.5), 1).unwrap().to_string(), "0.00");
    }

    #[test]
    fn sampling_bounds_and_window() {
        let map = fixture();
        // one pixel of slack beyond the border
        assert!(sample_object_depth(&map, (2.0, 2.0), 1).is_ok());
        assert!(sample_object_depth(&map, (-1.0, 0.0), 1).is_ok());
        assert!(matches!(
            sample_object_depth(&map, (3.6, 0.0), 1),
            Err(DepthError::OutOfBounds { .. })
        ));
        assert!(matches!(
            sample_object_depth(&map, (f64::NAN, 0.0), 1),
            Err(DepthError::OutOfBounds { .. })
        ));
        assert_eq!(sample_object_depth(&map, (0.0, 0.0), 2), Err(DepthError::InvalidWindow(2)));
        // 3x3 clipped to the 2x2 image: median of all four values
        let v = sample_depth_value(&map, (0.0, 0.0), 3).unwrap();
        assert!((v - (0.375_000_187_499_906_3 + 0.062_500_046_874_988_28) / 2.0).abs() < 1e-12);
        let raw = DepthMap::new(1, 1, vec![0.5]).unwrap();
        assert_eq!(sample_object_depth(&raw, (0.0, 0.0), 1), Err(DepthError::NotNormalized));
    }

    #[test]
    fn median_window_ignores_center_outlier() {
        let mut values = vec![0.1; 25];
        values[12] = 0.9;
        values[0] = 0.0;
        values[24] = 1.0;
        let map = normalize_depth(&DepthMap::new(5, 5, values).unwrap()).unwrap();
        assert_eq!(sample_object_depth(&map, (2.0, 2.0), 1).unwrap().to_string(), "0.90");
        assert_eq!(sample_object_depth(&map, (2.0, 2.0), 3).unwrap().to_string(), "0.10");
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(DisparityMap::new(2, 2, vec![1.0; 3]), Err(DepthError::Shape { .. })));
        assert!(matches!(
            DisparityMap::new(2, 1, vec![1.0, -1.0]),
            Err(DepthError::BadPixel { x: 1, y: 0, .. })
        ));
        assert!(matches!(
            DepthMap::new(1, 2, vec![1.0, f64::INFINITY]),
            Err(DepthError::BadPixel { x: 0, y: 1, .. })
        ));
    }

    #[test]
    fn label_scene_rescales_centers() {
        use crate::annotation::{BBox, SceneObject};
        let map = fixture();
        let record = SceneRecord {
            image_id: "s".into(),
            image_path: "s.jpg".into(),
            width: 20,
            height: 20,
            objects: vec![
                SceneObject::new("near", "cup", BBox::new(12.0, 12.0, 6.0, 6.0)).unwrap(),
                SceneObject::new("far", "wall", BBox::new(0.0, 0.0, 4.0, 4.0)).unwrap(),
            ],
        };
        let (labeled, issues) = label_scene(&record, &map, 1).unwrap();
        assert!(issues.is_empty());
        assert_eq!(labeled.objects[0].depth_label, Some(DepthLabel::ZERO));
        assert_eq!(labeled.objects[1].depth_label, Some(DepthLabel::ONE));
    }

    fn grid() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(0.0f64..100.0, w * h))
        })
    }

    proptest! {
        #[test]
        fn normalized_range_and_idempotence((w, h, values) in grid()) {
            let map = DepthMap::new(w, h, values).unwrap();
            if let Ok(n) = normalize_depth(&map) {
                let min = n.values().iter().copied().fold(f64::INFINITY, f64::min);
                let max = n.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(min, 0.0);
                prop_assert_eq!(max, 1.0);
                let again = normalize_depth(&n).unwrap();
                prop_assert_eq!(again.values(), n.values());
            }
        }

        #[test]
        fn normalization_is_affine_invariant(
            (w, h, values) in grid(), a in 0.5f64..4.0, b in -10.0f64..10.0,
        ) {
            let values: Vec<f64> = values.iter().map(|v| v / 10.0).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 0.5);
            let base = normalize_depth(&DepthMap::new(w, h, values.clone()).unwrap()).unwrap();
            let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let shifted = normalize_depth(&DepthMap::new(w, h, moved).unwrap()).unwrap();
            for (x, y) in base.values().iter().zip(shifted.values()) {
                prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y);
            }
        }

        #[test]
        fn inversion_reverses_order(d1 in 0.0f64..1e3, d2 in 0.0f64..1e3) {
            prop_assume!((d1 - d2).abs() > 1e-6);
            let map = DisparityMap::new(2, 1, vec![d1, d2]).unwrap();
            let depth = disparity_to_depth(&map, DEFAULT_EPSILON);
            let v = depth.values();
            prop_assert_eq!(d1 > d2, v[0] < v[1]);
        }

        #[test]
        fn samples_are_valid_labels(
            (w, h, values) in grid(), cx in -1.0f64..6.0, cy in -1.0f64..6.0, k in 0usize..3,
        ) {
            let map = DepthMap::new(w, h, values).unwrap();
            if let Ok(n) = normalize_depth(&map) {
                if let Ok(label) = sample_object_depth(&n, (cx, cy), 2 * k + 1) {
                    prop_assert!(label.hundredths() <= 100);
                    prop_assert_eq!(DepthLabel::quantize(label.value()).unwrap(), label);
                }
            }
        }
    }
}

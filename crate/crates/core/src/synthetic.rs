//! Procedural scenes for tests, benchmarks and demos.
//!
//! A scene is a disparity map made of a vertical gradient (the bottom of
//! the image is closer) plus Gaussian bumps on some of the objects, and
//! 3 to 8 objects with distinct captions drawn from a mix of short object
//! names and longer region phrases. Everything is a pure function of
//! `(seed, index, width, height)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::{BBox, SceneObject, SceneRecord};
use crate::conversation::derive_seed;
use crate::depth::{DepthError, DepthGrid, DisparityMap};
use crate::pipeline::DepthSource;

const OBJECT_CAPTIONS: &[&str] = &[
    "red car", "tree", "lamp", "chair", "white fence", "dog", "bicycle", "shelf", "curtains", "door",
    "cabinet", "window", "rug", "sofa", "potted plant", "clock", "mirror", "bench", "street sign",
    "blue umbrella", "building", "old wooden table",
];

const REGION_CAPTIONS: &[&str] = &[
    "man riding a bicycle", "cup on the table", "woman holding an umbrella", "sign near the road",
    "cat sleeping on the sofa", "boy in a red shirt", "painting on the wall", "car parked by the curb",
    "person walking a dog", "light above the door", "small brown dog with a collar",
];

#[derive(Clone, Copy, Debug, PartialEq)]
struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amplitude: f64,
}

/// One procedural scene: its annotation record and raw disparity.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub record: SceneRecord,
    pub disparity: DisparityMap,
}

pub fn image_id(index: usize) -> String {
    format!("syn-{index:05}")
}

fn layout(seed: u64, index: usize, width: u32, height: u32) -> (SceneRecord, Vec<Blob>) {
    let id = image_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &id));
    let n = rng.random_range(3..=8);

    let mut captions: Vec<&str> = OBJECT_CAPTIONS.iter().chain(REGION_CAPTIONS).copied().collect();
    captions.shuffle(&mut rng);

    let max_side = (width.min(height) / 3).max(2);
    let mut objects = Vec::with_capacity(n);
    let mut blobs = Vec::new();
    for (k, caption) in captions.into_iter().take(n).enumerate() {
        let w = rng.random_range(1..=max_side);
        let h = rng.random_range(1..=max_side);
        let x = rng.random_range(0..=width - w);
        let y = rng.random_range(0..=height - h);
        let bbox = BBox::new(f64::from(x), f64::from(y), f64::from(w), f64::from(h));
        let object = SceneObject::new(format!("o{k}"), caption, bbox).expect("positive bbox");
        if rng.random_ratio(7, 10) {
            blobs.push(Blob {
                cx: object.center.0,
                cy: object.center.1,
                sigma: (f64::from(w.min(h)) / 2.0).max(1.0),
                amplitude: rng.random_range(0.2..1.5),
            });
        }
        objects.push(object);
    }
    let record = SceneRecord {
        image_id: id.clone(),
        image_path: format!("images/{id}.jpg"),
        width,
        height,
        objects,
    };
    (record, blobs)
}

fn render(blobs: &[Blob], width: u32, height: u32) -> DisparityMap {
    let (w, h) = (width as usize, height as usize);
    let mut values = Vec::with_capacity(w * h);
    let denom_y = (h.max(2) - 1) as f64;
    let denom_x = (w.max(2) - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            values.push(0.1 + 0.9 * y as f64 / denom_y + 0.1 * x as f64 / denom_x);
        }
    }
    for b in blobs {
        // Bumps are cut off at four sigma, where they are below 4e-4.
        let reach = 4.0 * b.sigma;
        let x0 = (b.cx - reach).floor().max(0.0) as usize;
        let x1 = ((b.cx + reach).ceil().max(0.0) as usize).min(w);
        let y0 = (b.cy - reach).floor().max(0.0) as usize;
        let y1 = ((b.cy + reach).ceil().max(0.0) as usize).min(h);
        let inv = 1.0 / (2.0 * b.sigma * b.sigma);
        for y in y0..y1 {
            let dy = y as f64 - b.cy;
            for x in x0..x1 {
                let dx = x as f64 - b.cx;
                values[y * w + x] += b.amplitude * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    DisparityMap::new(w, h, values).expect("synthetic disparity is finite and positive")
}

/// Scene `index` of the synthetic family for `seed`.
pub fn synthetic_scene(seed: u64, index: usize, width: u32, height: u32) -> SyntheticScene {
    let (record, blobs) = layout(seed, index, width, height);
    SyntheticScene {
        disparity: render(&blobs, width, height),
        record,
    }
}

/// Only the annotation records of scenes `0..n`; cheap.
pub fn synthetic_records(seed: u64, n: usize, width: u32, height: u32) -> Vec<SceneRecord> {
    (0..n).map(|i| layout(seed, i, width, height).0).collect()
}

/// Renders disparity maps on demand for image ids from [`image_id`].
#[derive(Clone, Copy, Debug)]
pub struct SyntheticSource {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl DepthSource for SyntheticSource {
    fn load(&self, id: &str) -> Result<DepthGrid, DepthError> {
        let index = id
            .strip_prefix("syn-")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| DepthError::Missing(id.to_string()))?;
        let (_, blobs) = layout(self.seed, index, self.width, self.height);
        Ok(DepthGrid::Disparity(render(&blobs, self.width, self.height)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::{classify_caption, normalize_caption, CaptionKind};
    use std::collections::HashSet;

    #[test]
    fn scenes_are_well_formed() {
        let mut kinds = HashSet::new();
        for i in 0..50 {
            let s = synthetic_scene(3, i, 64, 48);
            let n = s.record.objects.len();
            assert!((3..=8).contains(&n));
            let captions: HashSet<_> = s.record.objects.iter().map(|o| normalize_caption(&o.caption)).collect();
            assert_eq!(captions.len(), n);
            for o in &s.record.objects {
                assert!(o.center.0 <= 64.0 && o.center.1 <= 48.0);
                kinds.insert(classify_caption(&o.caption).kind);
            }
            assert_eq!(s.disparity.width(), 64);
        }
        assert!(kinds.contains(&CaptionKind::ObjectType) && kinds.contains(&CaptionKind::RegionType));
    }

    #[test]
    fn deterministic_and_source_consistent() {
        assert_eq!(synthetic_scene(1, 7, 32, 32), synthetic_scene(1, 7, 32, 32));
        assert_ne!(synthetic_scene(1, 7, 32, 32), synthetic_scene(2, 7, 32, 32));
        let source = SyntheticSource { seed: 1, width: 32, height: 32 };
        let grid = source.load(&image_id(7)).unwrap();
        assert_eq!(grid.values(), synthetic_scene(1, 7, 32, 32).disparity.values());
        assert_eq!(synthetic_records(1, 8, 32, 32)[7], synthetic_scene(1, 7, 32, 32).record);
        assert!(source.load("other").is_err());
    }
}

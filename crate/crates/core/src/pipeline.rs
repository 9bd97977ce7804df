//! Scene-at-a-time generation with optional data parallelism.
//!
//! Every scene is processed independently from `(record, depth grid,
//! config)`, and results are collected in input order, so the output is the
//! same for any number of worker threads.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::annotation::SceneRecord;
use crate::config::GenConfig;
use crate::conversation::{build_conversations, Conversation, GenerationError, SkippedPair};
use crate::depth::{
    disparity_to_depth, label_scene, normalize_depth, read_depth_file, DepthError, DepthFormat, DepthGrid, DepthMap,
    LabelIssue,
};

/// Where depth grids come from, keyed by image id.
pub trait DepthSource: Sync {
    fn load(&self, image_id: &str) -> Result<DepthGrid, DepthError>;
}

impl<F> DepthSource for F
where
    F: Fn(&str) -> Result<DepthGrid, DepthError> + Sync,
{
    fn load(&self, image_id: &str) -> Result<DepthGrid, DepthError> {
        self(image_id)
    }
}

/// A directory holding `<image_id>.pfm`, `<image_id>.png` or
/// `<image_id>.pxdm`, tried in that order.
#[derive(Clone, Debug)]
pub struct DepthDir {
    dir: PathBuf,
}

impl DepthDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DepthDir { dir: dir.into() }
    }
}

impl DepthSource for DepthDir {
    fn load(&self, image_id: &str) -> Result<DepthGrid, DepthError> {
        for format in [DepthFormat::Pfm, DepthFormat::Png16, DepthFormat::RawF32] {
            let path = self.dir.join(format!("{image_id}.{}", format.extension()));
            match fs::read(&path) {
                Ok(bytes) => return read_depth_file(&bytes, format),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(DepthError::Io(format!("{}: {e}", path.display()))),
            }
        }
        Err(DepthError::Missing(image_id.to_string()))
    }
}

/// How to read the values of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridReading {
    /// Disparity files are inverted, depth files used as is.
    AsTagged,
    /// Every grid holds absolute depth (benchmark ground truth).
    AbsoluteDepth,
}

/// A labeled scene and the normalized map its labels came from.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub record: SceneRecord,
    pub map: DepthMap,
    pub issues: Vec<LabelIssue>,
}

/// Invert (if needed), normalize and label one scene.
pub fn prepare_scene(
    record: &SceneRecord,
    grid: DepthGrid,
    config: &GenConfig,
    reading: GridReading,
) -> Result<PreparedScene, DepthError> {
    let depth = match (grid, reading) {
        (DepthGrid::Disparity(d), GridReading::AsTagged) => disparity_to_depth(&d, config.epsilon),
        (DepthGrid::Disparity(d), GridReading::AbsoluteDepth) => {
            DepthMap::new(d.width(), d.height(), d.values().to_vec())?
        }
        (DepthGrid::Depth(d), _) => d,
    };
    let map = normalize_depth(&depth)?;
    let (record, issues) = label_scene(record, &map, config.median_window)?;
    Ok(PreparedScene { record, map, issues })
}

/// Everything produced for one input scene.
#[derive(Clone, Debug, Default)]
pub struct SceneOutcome {
    pub image_id: String,
    pub conversations: Vec<Conversation>,
    pub skipped_pairs: Vec<SkippedPair>,
    pub errors: Vec<GenerationError>,
    pub label_issues: Vec<LabelIssue>,
    /// Set when the scene produced nothing (no depth, flat depth, no
    /// labeled objects).
    pub skip_reason: Option<String>,
}

pub fn process_scene<S: DepthSource + ?Sized>(record: &SceneRecord, source: &S, config: &GenConfig) -> SceneOutcome {
    let mut outcome = SceneOutcome {
        image_id: record.image_id.clone(),
        ..Default::default()
    };
    let prepared = source
        .load(&record.image_id)
        .and_then(|grid| prepare_scene(record, grid, config, GridReading::AsTagged));
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => {
            outcome.skip_reason = Some(e.to_string());
            return outcome;
        }
    };
    let built = build_conversations(&prepared.record, config, config.seed);
    outcome.conversations = built.conversations;
    outcome.skipped_pairs = built.skipped_pairs;
    outcome.errors = built.errors;
    outcome.label_issues = prepared.issues;
    outcome.skip_reason = built.skip_reason;
    outcome
}

/// Map `f` over `items` on `jobs` threads, keeping input order.
pub fn map_ordered<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Generate conversations for every record, in input order.
pub fn generate<S: DepthSource + ?Sized>(
    records: &[SceneRecord],
    source: &S,
    config: &GenConfig,
    jobs: usize,
) -> Vec<SceneOutcome> {
    map_ordered(records, jobs, |r| process_scene(r, source, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{BBox, SceneObject};
    use crate::depth::{write_pfm, DisparityMap};

    fn record(id: &str) -> SceneRecord {
        SceneRecord {
            image_id: id.into(),
            image_path: format!("{id}.jpg"),
            width: 4,
            height: 4,
            objects: vec![
                SceneObject::new("a", "cup", BBox::new(0.0, 0.0, 1.0, 1.0)).unwrap(),
                SceneObject::new("b", "lamp", BBox::new(2.0, 2.0, 1.0, 1.0)).unwrap(),
            ],
        }
    }

    fn gradient(_: &str) -> Result<DepthGrid, DepthError> {
        let values = (0..16).map(|i| f64::from(i) + 1.0).collect();
        Ok(DepthGrid::Disparity(DisparityMap::new(4, 4, values)?))
    }

    #[test]
    fn jobs_do_not_change_output() {
        let records: Vec<_> = (0..20).map(|i| record(&format!("s{i}"))).collect();
        let config = GenConfig::default();
        let one = generate(&records, &gradient, &config, 1);
        let four = generate(&records, &gradient, &config, 4);
        let ser = |o: &[SceneOutcome]| {
            o.iter()
                .map(|s| serde_json::to_string(&s.conversations).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(ser(&one), ser(&four));
        assert_eq!(one[0].conversations.len(), 3);
    }

    #[test]
    fn skips_missing_and_flat_maps() {
        let missing = |id: &str| Err(DepthError::Missing(id.to_string()));
        let out = process_scene(&record("m"), &missing, &GenConfig::default());
        assert!(out.skip_reason.unwrap().contains("no depth map"));

        let flat = |_: &str| Ok(DepthGrid::Disparity(DisparityMap::new(4, 4, vec![3.0; 16]).unwrap()));
        let out = process_scene(&record("f"), &flat, &GenConfig::default());
        assert!(out.skip_reason.unwrap().contains("flat"));
    }

    #[test]
    fn depth_dir_reads_files() {
        let dir = std::env::temp_dir().join(format!("proxforge-depthdir-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let values: Vec<f64> = (0..16).map(|i| f64::from(i) + 1.0).collect();
        fs::write(dir.join("s0.pfm"), write_pfm(4, 4, &values)).unwrap();
        let source = DepthDir::new(&dir);
        assert_eq!(source.load("s0").unwrap().values(), &values[..]);
        assert_eq!(source.load("nope").unwrap_err(), DepthError::Missing("nope".into()));
        fs::remove_dir_all(&dir).unwrap();
    }
}

//! Benchmark conversion: annotated scenes plus depth become an eval set.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AnswerKeyEntry, EvalItem, EvalStage};
use crate::annotation::{ParsedScenes, SceneRecord, SceneWarning};
use crate::config::{GenConfig, ModeRatio};
use crate::conversation::{build_conversations, Conversation};
use crate::pipeline::{map_ordered, prepare_scene, DepthSource, GridReading};
use crate::templates::Stage;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub reason: String,
}

/// Questions, their hidden answers and the images that produced nothing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalSet {
    pub items: Vec<EvalItem>,
    pub key: Vec<AnswerKeyEntry>,
    pub skipped: Vec<SkippedImage>,
}

impl EvalSet {
    fn push(&mut self, conv: Conversation) {
        let stage = match conv.stage {
            Stage::Perception => EvalStage::Perception,
            Stage::Reasoning => EvalStage::Proximity,
        };
        self.items.push(EvalItem {
            item_id: conv.id.clone(),
            image: conv.image.clone(),
            stage,
            question: conv.question().to_string(),
        });
        self.key.push(AnswerKeyEntry {
            item_id: conv.id,
            gt: conv.meta.ground_truth,
        });
    }
}

type SceneResult = Result<Vec<Conversation>, String>;

/// Evaluation questions always use the single-answer templates.
fn eval_config(config: &GenConfig) -> GenConfig {
    GenConfig {
        mode_ratio: ModeRatio { direct: 1, reasoned: 0 },
        ..config.clone()
    }
}

fn convert_one<S: DepthSource + ?Sized>(
    record: &SceneRecord,
    source: &S,
    config: &GenConfig,
    reading: GridReading,
) -> SceneResult {
    let grid = source.load(&record.image_id).map_err(|e| e.to_string())?;
    let prepared = prepare_scene(record, grid, config, reading).map_err(|e| e.to_string())?;
    let built = build_conversations(&prepared.record, config, config.seed);
    match built.skip_reason {
        Some(reason) => Err(reason),
        None => Ok(built.conversations),
    }
}

fn collect(records: &[SceneRecord], results: Vec<SceneResult>, keep: impl Fn(&Conversation) -> bool) -> EvalSet {
    let mut set = EvalSet::default();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(convs) => convs.into_iter().filter(|c| keep(c)).for_each(|c| set.push(c)),
            Err(reason) => set.skipped.push(SkippedImage {
                image_id: record.image_id.clone(),
                reason,
            }),
        }
    }
    set
}

/// Perception and proximity items from bbox-annotated scenes and
/// disparity (or depth) maps.
pub fn convert_gqa<S: DepthSource + ?Sized>(
    records: &[SceneRecord],
    source: &S,
    config: &GenConfig,
    jobs: usize,
) -> EvalSet {
    let config = eval_config(config);
    let results = map_ordered(records, jobs, |r| convert_one(r, source, &config, GridReading::AsTagged));
    collect(records, results, |_| true)
}

/// Proximity items from manually placed centers and absolute ground-truth
/// depth.
///
/// Scenes whose manifest gave no image size are assumed to use depth-map
/// coordinates.
pub fn convert_make3d<S: DepthSource + ?Sized>(
    scenes: &ParsedScenes,
    source: &S,
    config: &GenConfig,
    jobs: usize,
) -> EvalSet {
    let config = eval_config(config);
    let inferred: HashSet<&str> = scenes
        .warnings
        .iter()
        .filter_map(|w| match w {
            SceneWarning::DimensionsInferred { image_id } => Some(image_id.as_str()),
            _ => None,
        })
        .collect();
    let results = map_ordered(&scenes.records, jobs, |record| {
        if !inferred.contains(record.image_id.as_str()) {
            return convert_one(record, source, &config, GridReading::AbsoluteDepth);
        }
        let grid = source.load(&record.image_id).map_err(|e| e.to_string())?;
        let mut rebound = record.clone();
        rebound.width = u32::try_from(grid.width()).map_err(|e| e.to_string())?;
        rebound.height = u32::try_from(grid.height()).map_err(|e| e.to_string())?;
        let fixed = |_: &str| Ok(grid.clone());
        convert_one(&rebound, &fixed, &config, GridReading::AbsoluteDepth)
    });
    collect(&scenes.records, results, |c| c.stage == Stage::Reasoning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{parse_annotations, AnnotationFormat, BBox, SceneObject};
    use crate::depth::{DepthError, DepthGrid, DepthMap, DisparityMap};

    fn record(id: &str, captions: &[&str]) -> SceneRecord {
        SceneRecord {
            image_id: id.into(),
            image_path: format!("{id}.jpg"),
            width: 4,
            height: 4,
            objects: captions
                .iter()
                .enumerate()
                .map(|(i, c)| SceneObject::new(format!("o{i}"), *c, BBox::new(i as f64, i as f64, 1.0, 1.0)).unwrap())
                .collect(),
        }
    }

    fn ramp(_: &str) -> Result<DepthGrid, DepthError> {
        Ok(DepthGrid::Disparity(DisparityMap::new(
            4,
            4,
            (0..16).map(|i| f64::from(i) + 1.0).collect(),
        )?))
    }

    #[test]
    fn gqa_counts() {
        let set = convert_gqa(&[record("g", &["cup", "lamp"])], &ramp, &GenConfig::default(), 1);
        let perception = set.items.iter().filter(|i| i.stage == EvalStage::Perception).count();
        let proximity = set.items.iter().filter(|i| i.stage == EvalStage::Proximity).count();
        assert_eq!((perception, proximity), (2, 1));
        assert_eq!(set.items.len(), set.key.len());
        assert!(set.items.iter().all(|i| !i.question.contains("<image>")));

        let dup = convert_gqa(&[record("g", &["window", "window"])], &ramp, &GenConfig::default(), 1);
        assert_eq!(dup.items.iter().filter(|i| i.stage == EvalStage::Proximity).count(), 0);
    }

    #[test]
    fn make3d_items_and_skips() {
        let manifest = br#"{"image_id":"m1","image_path":"m1.jpg","caption":"tree","center":[0.0,0.0]}
{"image_id":"m1","image_path":"m1.jpg","caption":"car","center":[3.0,3.0]}
{"image_id":"m2","image_path":"m2.jpg","caption":"tree","center":[0.0,0.0]}
{"image_id":"m2","image_path":"m2.jpg","caption":"car","center":[1.0,1.0]}
{"image_id":"m3","image_path":"m3.jpg","caption":"tree","center":[0.0,0.0]}
{"image_id":"m3","image_path":"m3.jpg","caption":"car","center":[1.0,1.0]}
"#;
        let scenes = parse_annotations(manifest, AnnotationFormat::Make3dManifest).unwrap();
        let source = |id: &str| match id {
            "m1" => Ok(DepthGrid::Depth(DepthMap::new(4, 4, (0..16).map(f64::from).collect())?)),
            "m2" => Ok(DepthGrid::Depth(DepthMap::new(2, 2, vec![5.0; 4])?)),
            other => Err(DepthError::Missing(other.to_string())),
        };
        let set = convert_make3d(&scenes, &source, &GenConfig::default(), 1);
        assert_eq!(set.items.len(), 1);
        assert_eq!(set.items[0].stage, EvalStage::Proximity);
        let skipped: Vec<_> = set.skipped.iter().map(|s| s.image_id.as_str()).collect();
        assert_eq!(skipped, ["m2", "m3"]);
        assert!(set.skipped[0].reason.contains("flat"));
    }
}

//! Perception and reasoning conversations.
//!
//! A perception conversation asks for one object's relative depth and is
//! answered with the two-decimal label alone. A reasoning conversation asks
//! which of two objects is closer and is answered either with the bare
//! caption of the closer object (direct mode) or with a short chain of
//! thought that quotes both labels and the comparison before concluding
//! (reasoned mode).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{SceneObject, SceneRecord};
use crate::caption::{normalize_caption, CaptionKind, Lexicon};
use crate::config::GenConfig;
use crate::label::DepthLabel;
use crate::templates::{AnswerMode, QuestionTemplate, Stage, TemplateSet};

/// Placeholder that opens every human turn.
pub const IMAGE_TOKEN: &str = "<image>";
/// Answer phrase for two objects at the same two-decimal depth.
pub const EQUALLY_CLOSE: &str = "equally close";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityRelation {
    FirstCloser,
    SecondCloser,
    EquallyClose,
}

/// Smaller depth is closer; equality is decided on the two-decimal labels.
pub fn compare_proximity(d_s: DepthLabel, d_t: DepthLabel) -> ProximityRelation {
    match d_s.cmp(&d_t) {
        std::cmp::Ordering::Less => ProximityRelation::FirstCloser,
        std::cmp::Ordering::Greater => ProximityRelation::SecondCloser,
        std::cmp::Ordering::Equal => ProximityRelation::EquallyClose,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "human")]
    Human,
    #[serde(rename = "gpt")]
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTruth {
    pub relation: ProximityRelation,
    pub caption_1: String,
    pub caption_2: String,
    pub depth_1: DepthLabel,
    pub depth_2: DepthLabel,
}

impl RelationTruth {
    /// The canonical direct answer: the closer caption or
    /// [`EQUALLY_CLOSE`].
    pub fn direct_answer(&self) -> &str {
        match self.relation {
            ProximityRelation::FirstCloser => self.caption_1.trim(),
            ProximityRelation::SecondCloser => self.caption_2.trim(),
            ProximityRelation::EquallyClose => EQUALLY_CLOSE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Depth(DepthLabel),
    Relation(RelationTruth),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationMeta {
    pub template_id: String,
    pub ground_truth: GroundTruth,
    pub seed_trace: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub image: String,
    pub stage: Stage,
    #[serde(rename = "conversations")]
    pub turns: Vec<Turn>,
    pub meta: ConversationMeta,
}

impl Conversation {
    /// The question without the leading image token.
    pub fn question(&self) -> &str {
        let human = self
            .turns
            .iter()
            .find(|t| t.from == Role::Human)
            .map_or("", |t| t.value.as_str());
        human
            .strip_prefix(IMAGE_TOKEN)
            .map_or(human, |rest| rest.trim_start_matches('\n'))
    }

    pub fn answer(&self) -> &str {
        self.turns
            .iter()
            .find(|t| t.from == Role::Assistant)
            .map_or("", |t| t.value.as_str())
    }
}

/// One rendered question/answer pair before it is wrapped into a
/// [`Conversation`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaPair {
    pub template_id: String,
    pub stage: Stage,
    pub question: String,
    pub answer: String,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub first: String,
    pub second: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum GenerationError {
    #[error("object {0:?} has no depth label")]
    MissingLabel(String),
    #[error("pair ({}, {}) skipped: {}", .0.first, .0.second, .0.reason)]
    SkippedPair(SkippedPair),
    #[error("template {template_id} cannot render a {wanted} question")]
    WrongTemplate { template_id: String, wanted: String },
}

pub fn render_perception_qa(
    template: &QuestionTemplate,
    object: &SceneObject,
) -> Result<QaPair, GenerationError> {
    if template.stage != Stage::Perception {
        return Err(GenerationError::WrongTemplate {
            template_id: template.template_id.clone(),
            wanted: "perception".into(),
        });
    }
    let label = object
        .depth_label
        .ok_or_else(|| GenerationError::MissingLabel(object.object_id.clone()))?;
    Ok(QaPair {
        template_id: template.template_id.clone(),
        stage: Stage::Perception,
        question: template.render(object.caption.trim(), None),
        answer: label.to_string(),
        ground_truth: GroundTruth::Depth(label),
    })
}

/// The chain-of-thought answer. The stated comparison is always
/// `smaller < larger` (or `=`), so the text is arithmetically true.
pub fn reasoned_answer(truth: &RelationTruth) -> String {
    let (c1, c2) = (truth.caption_1.trim(), truth.caption_2.trim());
    let (d1, d2) = (truth.depth_1, truth.depth_2);
    let premise = format!(
        "'{c1}' corresponds to a relative depth value of {d1}, \
         and '{c2}' corresponds to a relative depth value of {d2}."
    );
    let conclusion = match truth.relation {
        ProximityRelation::FirstCloser => format!(
            "Since {d1} < {d2}, it can be inferred that the object: '{c1}' is closer, the answer is: '{c1}'."
        ),
        ProximityRelation::SecondCloser => format!(
            "Since {d2} < {d1}, it can be inferred that the object: '{c2}' is closer, the answer is: '{c2}'."
        ),
        ProximityRelation::EquallyClose => format!(
            "Since {d1} = {d2}, it can be inferred that they are equally close, the answer is: '{EQUALLY_CLOSE}'."
        ),
    };
    format!("{premise} {conclusion}")
}

/// Why two captions cannot be paired, if they cannot.
fn pair_conflict(first: &str, second: &str) -> Option<&'static str> {
    let (a, b) = (normalize_caption(first), normalize_caption(second));
    if a == b {
        Some("identical captions make the reference ambiguous")
    } else if a == EQUALLY_CLOSE || b == EQUALLY_CLOSE {
        Some("caption collides with the equal-proximity answer")
    } else {
        None
    }
}

pub fn render_reasoning_qa(
    template: &QuestionTemplate,
    first: &SceneObject,
    second: &SceneObject,
) -> Result<QaPair, GenerationError> {
    if template.stage != Stage::Reasoning {
        return Err(GenerationError::WrongTemplate {
            template_id: template.template_id.clone(),
            wanted: "reasoning".into(),
        });
    }
    let d1 = first
        .depth_label
        .ok_or_else(|| GenerationError::MissingLabel(first.object_id.clone()))?;
    let d2 = second
        .depth_label
        .ok_or_else(|| GenerationError::MissingLabel(second.object_id.clone()))?;
    if let Some(reason) = pair_conflict(&first.caption, &second.caption) {
        return Err(GenerationError::SkippedPair(SkippedPair {
            first: first.object_id.clone(),
            second: second.object_id.clone(),
            reason: reason.to_string(),
        }));
    }
    let truth = RelationTruth {
        relation: compare_proximity(d1, d2),
        caption_1: first.caption.trim().to_string(),
        caption_2: second.caption.trim().to_string(),
        depth_1: d1,
        depth_2: d2,
    };
    let answer = match template.answer_mode {
        AnswerMode::Direct => truth.direct_answer().to_string(),
        AnswerMode::Reasoned => reasoned_answer(&truth),
    };
    Ok(QaPair {
        template_id: template.template_id.clone(),
        stage: Stage::Reasoning,
        question: template.render(&truth.caption_1, Some(&truth.caption_2)),
        answer,
        ground_truth: GroundTruth::Relation(truth),
    })
}

/// Everything generated for one scene.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConversations {
    pub conversations: Vec<Conversation>,
    pub skipped_pairs: Vec<SkippedPair>,
    pub errors: Vec<GenerationError>,
    /// Set when the scene produced nothing at all.
    pub skip_reason: Option<String>,
}

/// Per-image seed derived from the run seed and the image id, so a scene's
/// output does not depend on its position in the input.
pub fn derive_seed(seed: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn build_conversations(record: &SceneRecord, config: &GenConfig, seed: u64) -> SceneConversations {
    build_conversations_with(record, config, seed, TemplateSet::builtin(), Lexicon::builtin())
}

/// [`build_conversations`] with an explicit template set and lexicon.
///
/// Random choices are drawn in a fixed order from a ChaCha8 stream seeded by
/// [`derive_seed`]: the perception template offset, the pair shuffle, then
/// per kept pair its presentation order, answer mode and template.
pub fn build_conversations_with(
    record: &SceneRecord,
    config: &GenConfig,
    seed: u64,
    templates: &TemplateSet,
    lexicon: &Lexicon,
) -> SceneConversations {
    let mut out = SceneConversations::default();
    let labeled: Vec<&SceneObject> = record.objects.iter().filter(|o| o.depth_label.is_some()).collect();
    for o in record.objects.iter().filter(|o| o.depth_label.is_none()) {
        out.errors.push(GenerationError::MissingLabel(o.object_id.clone()));
    }
    if labeled.is_empty() {
        out.skip_reason = Some("no labeled objects".to_string());
        return out;
    }

    let seed_trace = derive_seed(seed, &record.image_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed_trace);
    let kind_of = |o: &SceneObject| lexicon.classify(&o.caption).kind;
    let wrap = |id: String, qa: QaPair| Conversation {
        id,
        image: record.image_path.clone(),
        stage: qa.stage,
        turns: vec![
            Turn {
                from: Role::Human,
                value: format!("{IMAGE_TOKEN}\n{}", qa.question),
            },
            Turn {
                from: Role::Assistant,
                value: qa.answer,
            },
        ],
        meta: ConversationMeta {
            template_id: qa.template_id,
            ground_truth: qa.ground_truth,
            seed_trace,
        },
    };

    let offset = rng.random_range(0..crate::templates::PERCEPTION_PER_KIND);
    let cap = config.perception_cap.unwrap_or(usize::MAX);
    for (i, object) in labeled.iter().take(cap).enumerate() {
        let family = templates.perception(kind_of(object));
        let template = family[(offset + i) % family.len()];
        match render_perception_qa(template, object) {
            Ok(qa) => out.conversations.push(wrap(format!("{}-p{i}", record.image_id), qa)),
            Err(e) => out.errors.push(e),
        }
    }

    let mut pairs = Vec::new();
    for (i, a) in labeled.iter().enumerate() {
        for b in &labeled[i + 1..] {
            match pair_conflict(&a.caption, &b.caption) {
                None => pairs.push((*a, *b)),
                Some(reason) => out.skipped_pairs.push(SkippedPair {
                    first: a.object_id.clone(),
                    second: b.object_id.clone(),
                    reason: reason.to_string(),
                }),
            }
        }
    }
    pairs.shuffle(&mut rng);
    pairs.truncate(config.max_pairs_per_image);

    let ratio = config.mode_ratio;
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        let (first, second) = if rng.random_bool(0.5) { (b, a) } else { (a, b) };
        let mode = if rng.random_ratio(ratio.direct, ratio.direct + ratio.reasoned) {
            AnswerMode::Direct
        } else {
            AnswerMode::Reasoned
        };
        let kind = if kind_of(first) == CaptionKind::RegionType || kind_of(second) == CaptionKind::RegionType {
            CaptionKind::RegionType
        } else {
            CaptionKind::ObjectType
        };
        let family = templates.reasoning(kind, mode);
        let template = family[rng.random_range(0..family.len())];
        match render_reasoning_qa(template, first, second) {
            Ok(qa) => out.conversations.push(wrap(format!("{}-r{k}", record.image_id), qa)),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::BBox;
    use crate::eval::{parse_perception_response, parse_proximity_response, PerceptionParse, ProximityParse};
    use proptest::prelude::*;

    fn label(s: &str) -> DepthLabel {
        s.parse().unwrap()
    }

    fn object(id: &str, caption: &str, depth: Option<&str>) -> SceneObject {
        let mut o = SceneObject::new(id, caption, BBox::new(0.0, 0.0, 2.0, 2.0)).unwrap();
        o.depth_label = depth.map(label);
        o
    }

    fn record(objects: Vec<SceneObject>) -> SceneRecord {
        SceneRecord {
            image_id: "img".into(),
            image_path: "img.jpg".into(),
            width: 10,
            height: 10,
            objects,
        }
    }

    #[test]
    fn relation_examples() {
        assert_eq!(compare_proximity(label("0.04"), label("0.45")), ProximityRelation::FirstCloser);
        assert_eq!(compare_proximity(label("0.04"), label("0.01")), ProximityRelation::SecondCloser);
        assert_eq!(compare_proximity(label("0.37"), label("0.37")), ProximityRelation::EquallyClose);
    }

    #[test]
    fn perception_answers() {
        let set = TemplateSet::builtin();
        let t = set.get("Q1-1-region").unwrap();
        let qa = render_perception_qa(t, &object("o", "rug", Some("0.35"))).unwrap();
        assert_eq!(qa.answer, "0.35");
        assert_eq!(qa.question, "What's the relative depth value of region: rug in the image?");
        assert_eq!(render_perception_qa(t, &object("o", "rug", Some("0.00"))).unwrap().answer, "0.00");
        assert_eq!(render_perception_qa(t, &object("o", "rug", Some("1.00"))).unwrap().answer, "1.00");
        assert_eq!(
            render_perception_qa(t, &object("o", "rug", None)),
            Err(GenerationError::MissingLabel("o".into()))
        );
    }

    #[test]
    fn reasoning_answers() {
        let set = TemplateSet::builtin();
        let reasoned = set.get("Q2-11-object").unwrap();
        let qa = render_reasoning_qa(
            reasoned,
            &object("a", "shelf", Some("0.04")),
            &object("b", "bicycle", Some("0.45")),
        )
        .unwrap();
        assert_eq!(
            qa.answer,
            "'shelf' corresponds to a relative depth value of 0.04, and 'bicycle' corresponds to a \
             relative depth value of 0.45. Since 0.04 < 0.45, it can be inferred that the object: \
             'shelf' is closer, the answer is: 'shelf'."
        );

        let direct = set.get("Q2-2-object").unwrap();
        let qa = render_reasoning_qa(
            direct,
            &object("a", "curtains", Some("0.60")),
            &object("b", "chair", Some("0.20")),
        )
        .unwrap();
        assert_eq!(qa.answer, "chair");

        let qa = render_reasoning_qa(
            reasoned,
            &object("a", "door", Some("0.30")),
            &object("b", "cabinet", Some("0.30")),
        )
        .unwrap();
        assert!(qa.answer.ends_with("Since 0.30 = 0.30, it can be inferred that they are equally close, the answer is: 'equally close'."));

        let err = render_reasoning_qa(
            direct,
            &object("a", "window", Some("0.1")),
            &object("b", "A window", Some("0.2")),
        )
        .unwrap_err();
        assert!(matches!(err, GenerationError::SkippedPair(_)));
    }

    #[test]
    fn build_three_objects() {
        let rec = record(vec![
            object("a", "red car", Some("0.10")),
            object("b", "tree", Some("0.50")),
            object("c", "man riding a bicycle", Some("0.30")),
        ]);
        let out = build_conversations(&rec, &GenConfig { max_pairs_per_image: 10, ..Default::default() }, 7);
        let p = out.conversations.iter().filter(|c| c.stage == Stage::Perception).count();
        let r = out.conversations.iter().filter(|c| c.stage == Stage::Reasoning).count();
        assert_eq!((p, r), (3, 3));
        assert!(out.errors.is_empty());
        for c in &out.conversations {
            assert!(c.turns[0].value.starts_with("<image>\n"));
            assert_eq!(c.turns.len(), 2);
        }
    }

    #[test]
    fn build_identical_captions() {
        let rec = record(vec![object("a", "window", Some("0.10")), object("b", "window", Some("0.40"))]);
        let out = build_conversations(&rec, &GenConfig::default(), 1);
        assert_eq!(out.conversations.len(), 2);
        assert!(out.conversations.iter().all(|c| c.stage == Stage::Perception));
        assert_eq!(out.skipped_pairs.len(), 1);
    }

    #[test]
    fn build_is_deterministic() {
        let rec = record((0..6).map(|i| object(&format!("o{i}"), &format!("thing {i}"), Some("0.25"))).collect());
        let config = GenConfig::default();
        let a = serde_json::to_string(&build_conversations(&rec, &config, 7).conversations).unwrap();
        let b = serde_json::to_string(&build_conversations(&rec, &config, 7).conversations).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&build_conversations(&rec, &config, 8).conversations).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn build_caps_and_skips() {
        let rec = record(vec![object("a", "cup", None)]);
        let out = build_conversations(&rec, &GenConfig::default(), 0);
        assert!(out.conversations.is_empty());
        assert_eq!(out.skip_reason.as_deref(), Some("no labeled objects"));
        assert_eq!(out.errors, vec![GenerationError::MissingLabel("a".into())]);

        let rec = record((0..6).map(|i| object(&format!("o{i}"), &format!("cup {i}"), Some("0.5"))).collect());
        let config = GenConfig {
            perception_cap: Some(2),
            max_pairs_per_image: 4,
            ..Default::default()
        };
        let out = build_conversations(&rec, &config, 3);
        assert_eq!(out.conversations.len(), 2 + 4);
    }

    #[test]
    fn mode_ratio_extremes() {
        let rec = record((0..5).map(|i| object(&format!("o{i}"), &format!("box {i}"), Some("0.5"))).collect());
        let direct_only = GenConfig {
            mode_ratio: "1:0".parse().unwrap(),
            ..Default::default()
        };
        let out = build_conversations(&rec, &direct_only, 9);
        for c in out.conversations.iter().filter(|c| c.stage == Stage::Reasoning) {
            assert_eq!(c.answer(), "equally close");
        }
    }

    fn caption_strategy() -> impl Strategy<Value = String> {
        proptest::sample::select(vec![
            "cup", "red car", "tree", "the man riding a bicycle", "window", "a window", "shelf",
            "bicycle", "lamp on the table", "dog", "white fence", "sky", "man's hat",
        ])
        .prop_map(str::to_string)
    }

    proptest! {
        #[test]
        fn antisymmetry(a in 0u8..=100, b in 0u8..=100) {
            let (a, b) = (DepthLabel::from_hundredths(a).unwrap(), DepthLabel::from_hundredths(b).unwrap());
            prop_assert_eq!(
                compare_proximity(a, b) == ProximityRelation::FirstCloser,
                compare_proximity(b, a) == ProximityRelation::SecondCloser
            );
            prop_assert_eq!(compare_proximity(a, a), ProximityRelation::EquallyClose);
        }

        #[test]
        fn generated_answers_round_trip(
            objects in proptest::collection::vec((caption_strategy(), 0u8..=100), 1..7),
            seed in any::<u64>(),
        ) {
            let rec = record(objects.iter().enumerate().map(|(i, (c, d))| {
                let mut o = object(&format!("o{i}"), c, None);
                o.depth_label = DepthLabel::from_hundredths(*d);
                o
            }).collect());
            let out = build_conversations(&rec, &GenConfig { max_pairs_per_image: 50, ..Default::default() }, seed);
            for conv in &out.conversations {
                match &conv.meta.ground_truth {
                    GroundTruth::Depth(l) => {
                        prop_assert_eq!(parse_perception_response(conv.answer()), PerceptionParse::Valid(l.value()));
                    }
                    GroundTruth::Relation(t) => {
                        prop_assert_ne!(normalize_caption(&t.caption_1), normalize_caption(&t.caption_2));
                        let parsed = parse_proximity_response(conv.answer(), &t.caption_1, &t.caption_2);
                        prop_assert_eq!(parsed, ProximityParse::from_relation(t.relation));
                        if conv.answer().contains("Since ") {
                            let clause = conv.answer().split("Since ").nth(1).unwrap();
                            let nums: Vec<f64> = clause.split(',').next().unwrap()
                                .split(['<', '='])
                                .map(|s| s.trim().parse().unwrap())
                                .collect();
                            if clause.contains(" < ") { prop_assert!(nums[0] < nums[1]); } else { prop_assert_eq!(nums[0], nums[1]); }
                        }
                    }
                }
            }
        }
    }
}

//! Evaluation sets, response parsing and metrics.
//!
//! An eval set is two files: questions ([`EvalItem`]) that can be handed to
//! a model runner, and an answer key ([`AnswerKeyEntry`]) kept apart so the
//! runner never sees labels. [`score`] joins both with the model's
//! [`ModelResponse`]s.

mod convert;
mod metrics;
mod oracle;
mod parse;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convert::{convert_gqa, convert_make3d, EvalSet, SkippedImage};
pub use metrics::{
    compute_perception_metrics, compute_proximity_metrics, PerceptionAccumulator, PerceptionMetrics,
    ProximityAccumulator, ProximityMetrics, RATIO_FLOOR,
};
pub use oracle::oracle_responder;
pub use parse::{parse_perception_response, parse_proximity_response, InvalidReason, PerceptionParse, ProximityParse};

use crate::conversation::GroundTruth;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStage {
    Perception,
    Proximity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub image: String,
    pub stage: EvalStage,
    /// Question text without the image token.
    pub question: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub item_id: String,
    pub gt: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub item_id: String,
    pub text: String,
}

/// Denominator of the squared relative error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqRelDenominator {
    /// Divide by the prediction.
    #[default]
    Pred,
    /// Divide by the ground truth.
    Gt,
}

impl FromStr for SqRelDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pred" => Ok(SqRelDenominator::Pred),
            "gt" => Ok(SqRelDenominator::Gt),
            other => Err(format!("expected pred or gt, got {other:?}")),
        }
    }
}

impl fmt::Display for SqRelDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SqRelDenominator::Pred => "pred",
            SqRelDenominator::Gt => "gt",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("invalid eval set: {0}")]
    InvalidEvalSet(String),
    #[error("item {0:?} has no answer key entry")]
    MissingKey(String),
    #[error("answer key entry {0:?} matches no eval item")]
    UnknownKey(String),
    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),
    #[error("item {item_id:?} is a {stage:?} item but its key holds the other kind of ground truth")]
    StageMismatch { item_id: String, stage: EvalStage },
}

/// How the report was computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringNotes {
    pub sqrel_denominator: SqRelDenominator,
    /// Both values are floored at this before δ ratios and Sq Rel.
    pub ratio_floor: f64,
    pub accuracy_denominator: String,
    pub duplicate_rule: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub perception: Option<PerceptionMetrics>,
    pub proximity: Option<ProximityMetrics>,
    /// Items with no response; scored as invalid.
    pub missing_responses: u64,
    /// Extra responses for an id already answered; the last one wins.
    pub duplicate_responses: u64,
    /// Responses whose id matches no item; ignored.
    pub unknown_responses: u64,
    pub notes: ScoringNotes,
}

/// Ground truth of every item, checked for one-to-one correspondence and
/// stage agreement.
pub fn join_key<'a>(
    items: &'a [EvalItem],
    key: &'a [AnswerKeyEntry],
) -> Result<Vec<(&'a EvalItem, &'a GroundTruth)>, EvalError> {
    if items.is_empty() {
        return Err(EvalError::InvalidEvalSet("no items".into()));
    }
    let mut truths: HashMap<&str, &GroundTruth> = HashMap::with_capacity(key.len());
    for entry in key {
        if truths.insert(entry.item_id.as_str(), &entry.gt).is_some() {
            return Err(EvalError::DuplicateItem(entry.item_id.clone()));
        }
    }
    let mut seen = std::collections::HashSet::with_capacity(items.len());
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        if !seen.insert(item.item_id.as_str()) {
            return Err(EvalError::DuplicateItem(item.item_id.clone()));
        }
        let gt = truths
            .get(item.item_id.as_str())
            .ok_or_else(|| EvalError::MissingKey(item.item_id.clone()))?;
        let matches = matches!(
            (item.stage, gt),
            (EvalStage::Perception, GroundTruth::Depth(_)) | (EvalStage::Proximity, GroundTruth::Relation(_))
        );
        if !matches {
            return Err(EvalError::StageMismatch {
                item_id: item.item_id.clone(),
                stage: item.stage,
            });
        }
        out.push((item, *gt));
    }
    if let Some(extra) = key.iter().find(|e| !seen.contains(e.item_id.as_str())) {
        return Err(EvalError::UnknownKey(extra.item_id.clone()));
    }
    Ok(out)
}

/// Score model responses against an eval set and its answer key.
pub fn score(
    items: &[EvalItem],
    key: &[AnswerKeyEntry],
    responses: &[ModelResponse],
    policy: SqRelDenominator,
) -> Result<EvalReport, EvalError> {
    let joined = join_key(items, key)?;

    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(responses.len());
    let mut duplicate_responses = 0;
    for r in responses {
        if by_id.insert(r.item_id.as_str(), r.text.as_str()).is_some() {
            duplicate_responses += 1;
        }
    }
    let unknown_responses = by_id
        .keys()
        .filter(|id| !joined.iter().any(|(item, _)| item.item_id == **id))
        .count() as u64;

    let mut perception = PerceptionAccumulator::new(policy);
    let mut proximity = ProximityAccumulator::new();
    let mut missing_responses = 0;
    for (item, gt) in &joined {
        let text = by_id.get(item.item_id.as_str()).copied();
        if text.is_none() {
            missing_responses += 1;
        }
        match gt {
            GroundTruth::Depth(label) => {
                let parsed = text.map_or(PerceptionParse::Invalid(InvalidReason::Missing), parse_perception_response);
                perception.add(&parsed, *label);
            }
            GroundTruth::Relation(t) => {
                let parsed = text.map_or(ProximityParse::Invalid(InvalidReason::Missing), |s| {
                    parse_proximity_response(s, &t.caption_1, &t.caption_2)
                });
                proximity.add(&parsed, t.relation);
            }
        }
    }

    Ok(EvalReport {
        perception: (perception.n_total() > 0).then(|| perception.finish()),
        proximity: (proximity.n_total() > 0).then(|| proximity.finish()),
        missing_responses,
        duplicate_responses,
        unknown_responses,
        notes: ScoringNotes {
            sqrel_denominator: policy,
            ratio_floor: RATIO_FLOOR,
            accuracy_denominator: "all items, including invalid and missing responses".into(),
            duplicate_rule: "last response per item id wins".into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::{ProximityRelation, RelationTruth};
    use crate::label::DepthLabel;

    fn item(id: &str, stage: EvalStage) -> EvalItem {
        EvalItem {
            item_id: id.into(),
            image: "i.jpg".into(),
            stage,
            question: "q".into(),
        }
    }

    fn relation(relation: ProximityRelation) -> GroundTruth {
        GroundTruth::Relation(RelationTruth {
            relation,
            caption_1: "curtains".into(),
            caption_2: "chair".into(),
            depth_1: DepthLabel::from_hundredths(60).unwrap(),
            depth_2: DepthLabel::from_hundredths(20).unwrap(),
        })
    }

    fn response(id: &str, text: &str) -> ModelResponse {
        ModelResponse {
            item_id: id.into(),
            text: text.into(),
        }
    }

    #[test]
    fn four_item_example() {
        let items: Vec<_> = ["a", "b", "c", "d"].iter().map(|id| item(id, EvalStage::Proximity)).collect();
        let key: Vec<_> = items
            .iter()
            .map(|i| AnswerKeyEntry {
                item_id: i.item_id.clone(),
                gt: relation(ProximityRelation::SecondCloser),
            })
            .collect();
        let responses = vec![
            response("a", "chair"),
            response("b", "The answer is: 'chair'."),
            response("c", "curtains"),
            response("d", "I cannot tell"),
        ];
        let report = score(&items, &key, &responses, SqRelDenominator::Pred).unwrap();
        let p = report.proximity.unwrap();
        assert_eq!((p.n_total, p.n_valid, p.n_correct), (4, 3, 2));
        assert_eq!(p.valid_answer_ratio, 0.75);
        assert_eq!(p.accuracy, 0.5);
        assert!(report.perception.is_none());
    }

    #[test]
    fn join_rules() {
        assert_eq!(
            score(&[], &[], &[], SqRelDenominator::Pred).unwrap_err(),
            EvalError::InvalidEvalSet("no items".into())
        );
        let items = vec![item("a", EvalStage::Perception)];
        let key = vec![AnswerKeyEntry {
            item_id: "a".into(),
            gt: GroundTruth::Depth(DepthLabel::from_hundredths(35).unwrap()),
        }];
        let responses = vec![response("a", "0.9"), response("a", "0.35"), response("zzz", "1")];
        let report = score(&items, &key, &responses, SqRelDenominator::Pred).unwrap();
        assert_eq!(report.duplicate_responses, 1);
        assert_eq!(report.unknown_responses, 1);
        assert_eq!(report.perception.unwrap().mse, Some(0.0));

        let report = score(&items, &key, &[], SqRelDenominator::Pred).unwrap();
        assert_eq!(report.missing_responses, 1);
        let m = report.perception.unwrap();
        assert_eq!((m.n_valid, m.mse), (0, None));

        let wrong = vec![AnswerKeyEntry {
            item_id: "a".into(),
            gt: relation(ProximityRelation::FirstCloser),
        }];
        assert!(matches!(score(&items, &wrong, &[], SqRelDenominator::Pred), Err(EvalError::StageMismatch { .. })));
        assert_eq!(
            score(&items, &[], &[], SqRelDenominator::Pred).unwrap_err(),
            EvalError::MissingKey("a".into())
        );
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("gt".parse::<SqRelDenominator>().unwrap(), SqRelDenominator::Gt);
        assert!("both".parse::<SqRelDenominator>().is_err());
        assert_eq!(serde_json::to_string(&SqRelDenominator::Pred).unwrap(), "\"pred\"");
    }
}

//! The shipped question templates.
//!
//! 42 templates: for each caption family (object/region), 3 perception
//! templates with one `{R1}` placeholder, 9 direct-answer reasoning
//! templates and 9 chain-of-thought reasoning templates with `{R1}` and
//! `{R2}`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::CaptionKind;
use crate::provenance::sha256_hex;

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

pub const PERCEPTION_PER_KIND: usize = 3;
pub const REASONING_PER_MODE: usize = 9;
pub const TEMPLATE_COUNT: usize = (PERCEPTION_PER_KIND + 2 * REASONING_PER_MODE) * 2;

const R1: &str = "{R1}";
const R2: &str = "{R2}";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("template {id}: {problem}")]
    Invalid { id: String, problem: String },
    #[error("template set has {found} templates in group {group}, expected {expected}")]
    Inventory {
        group: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Perception,
    Reasoning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    /// A bare value or caption.
    Direct,
    /// Chain-of-thought answer stating both labels.
    Reasoned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub template_id: String,
    pub stage: Stage,
    pub answer_mode: AnswerMode,
    pub caption_type: CaptionKind,
    pub text: String,
}

impl QuestionTemplate {
    pub fn placeholders(&self) -> usize {
        self.text.matches(R1).count() + self.text.matches(R2).count()
    }

    /// Substitute captions verbatim. `second` is ignored by perception
    /// templates.
    pub fn render(&self, first: &str, second: Option<&str>) -> String {
        let text = self.text.replace(R1, first);
        match second {
            Some(s) => text.replace(R2, s),
            None => text,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    version: u32,
    templates: Vec<QuestionTemplate>,
}

#[derive(Clone, Debug)]
pub struct TemplateSet {
    version: u32,
    templates: Vec<QuestionTemplate>,
    hash: String,
}

impl TemplateSet {
    /// Parse and validate a template file.
    pub fn parse(json: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = serde_json::from_str(json)?;
        let set = TemplateSet {
            version: file.version,
            templates: file.templates,
            hash: sha256_hex(json.as_bytes()),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn builtin() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| TemplateSet::parse(BUILTIN_TEMPLATES).expect("shipped templates are valid"))
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// SHA-256 of the template file text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn all(&self) -> &[QuestionTemplate] {
        &self.templates
    }

    pub fn get(&self, template_id: &str) -> Option<&QuestionTemplate> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    pub fn perception(&self, kind: CaptionKind) -> Vec<&QuestionTemplate> {
        self.select(Stage::Perception, AnswerMode::Direct, kind)
    }

    pub fn reasoning(&self, kind: CaptionKind, mode: AnswerMode) -> Vec<&QuestionTemplate> {
        self.select(Stage::Reasoning, mode, kind)
    }

    fn select(&self, stage: Stage, mode: AnswerMode, kind: CaptionKind) -> Vec<&QuestionTemplate> {
        self.templates
            .iter()
            .filter(|t| t.stage == stage && t.answer_mode == mode && t.caption_type == kind)
            .collect()
    }

    fn validate(&self) -> Result<(), TemplateError> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.templates {
            let invalid = |problem: String| TemplateError::Invalid {
                id: t.template_id.clone(),
                problem,
            };
            if !seen.insert(t.template_id.as_str()) {
                return Err(invalid("duplicate template_id".into()));
            }
            let (r1, r2) = (t.text.matches(R1).count(), t.text.matches(R2).count());
            let expected = match t.stage {
                Stage::Perception => (1, 0),
                Stage::Reasoning => (1, 1),
            };
            if (r1, r2) != expected {
                return Err(invalid(format!(
                    "has {r1} {{R1}} and {r2} {{R2}} placeholders, expected {expected:?}"
                )));
            }
            if t.stage == Stage::Perception && t.answer_mode != AnswerMode::Direct {
                return Err(invalid("perception templates are always direct".into()));
            }
        }
        for kind in [CaptionKind::ObjectType, CaptionKind::RegionType] {
            let groups = [
                ("perception", self.perception(kind).len(), PERCEPTION_PER_KIND),
                ("direct", self.reasoning(kind, AnswerMode::Direct).len(), REASONING_PER_MODE),
                ("reasoned", self.reasoning(kind, AnswerMode::Reasoned).len(), REASONING_PER_MODE),
            ];
            for (name, found, expected) in groups {
                if found != expected {
                    return Err(TemplateError::Inventory {
                        group: format!("{}/{name}", kind.as_str()),
                        expected,
                        found,
                    });
                }
            }
        }
        if self.templates.len() != TEMPLATE_COUNT {
            return Err(TemplateError::Inventory {
                group: "all".into(),
                expected: TEMPLATE_COUNT,
                found: self.templates.len(),
            });
        }
        Ok(())
    }
}

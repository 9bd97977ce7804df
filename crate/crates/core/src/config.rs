//! Generation and scoring configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::depth::DEFAULT_EPSILON;
use crate::eval::SqRelDenominator;
use crate::provenance::sha256_hex;

pub const DEFAULT_MAX_PAIRS: usize = 8;
pub const DEFAULT_AUDIT_THRESHOLD: f64 = 0.15;
pub const DEFAULT_SYSTEM_MESSAGE: &str = "You are a visual assistant that reasons about how far objects \
are from the camera. Relative depth values lie between 0 and 1: 0 is the nearest point of the image \
and 1 is the farthest.";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid config value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("mode ratio must look like DIRECT:REASONED, got {0:?}")]
    Ratio(String),
}

/// Relative weights of direct and chain-of-thought reasoning answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeRatio {
    pub direct: u32,
    pub reasoned: u32,
}

impl Default for ModeRatio {
    fn default() -> Self {
        ModeRatio {
            direct: 1,
            reasoned: 1,
        }
    }
}

impl FromStr for ModeRatio {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Ratio(s.to_string());
        let (d, r) = s.split_once(':').ok_or_else(bad)?;
        let ratio = ModeRatio {
            direct: d.trim().parse().map_err(|_| bad())?,
            reasoned: r.trim().parse().map_err(|_| bad())?,
        };
        if ratio.direct.checked_add(ratio.reasoned).is_none_or(|t| t == 0) {
            return Err(bad());
        }
        Ok(ratio)
    }
}

impl fmt::Display for ModeRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.direct, self.reasoned)
    }
}

impl Serialize for ModeRatio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeRatio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// How two labels are judged equally close. Only two-decimal equality is
/// supported; the field exists so the rule is recorded in every output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieRule {
    #[default]
    #[serde(rename = "2dp")]
    TwoDecimals,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejects: Option<PathBuf>,
}

impl Paths {
    fn is_empty(&self) -> bool {
        *self == Paths::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    /// Reasoning conversations kept per image.
    pub max_pairs_per_image: usize,
    /// Perception conversations per image; `None` keeps every object.
    pub perception_cap: Option<usize>,
    pub mode_ratio: ModeRatio,
    pub epsilon: f64,
    /// Odd side length of the median sampling window; 1 samples the center
    /// pixel only.
    pub median_window: usize,
    pub equal_tie_rule: TieRule,
    pub sqrel_denominator: SqRelDenominator,
    pub audit_threshold: f64,
    pub system_message: String,
    #[serde(skip_serializing_if = "Paths::is_empty")]
    pub paths: Paths,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            max_pairs_per_image: DEFAULT_MAX_PAIRS,
            perception_cap: None,
            mode_ratio: ModeRatio::default(),
            epsilon: DEFAULT_EPSILON,
            median_window: 1,
            equal_tie_rule: TieRule::TwoDecimals,
            sqrel_denominator: SqRelDenominator::Pred,
            audit_threshold: DEFAULT_AUDIT_THRESHOLD,
            system_message: DEFAULT_SYSTEM_MESSAGE.to_string(),
            paths: Paths::default(),
        }
    }
}

impl GenConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason: String| Err(ConfigError::Invalid { field, reason });
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid("epsilon", format!("must be positive and finite, got {}", self.epsilon));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return invalid("median_window", format!("must be odd and >= 1, got {}", self.median_window));
        }
        if !(self.audit_threshold >= 0.0 && self.audit_threshold.is_finite()) {
            return invalid("audit_threshold", format!("must be >= 0, got {}", self.audit_threshold));
        }
        if self.mode_ratio.direct.checked_add(self.mode_ratio.reasoned).is_none_or(|t| t == 0) {
            return invalid("mode_ratio", format!("weights must sum to a positive u32, got {}", self.mode_ratio));
        }
        Ok(())
    }

    /// The same configuration with all file paths removed.
    pub fn without_paths(&self) -> GenConfig {
        GenConfig {
            paths: Paths::default(),
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON of everything except paths, so the
    /// hash identifies the generation settings, not where files live.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.without_paths()).expect("config serializes");
        sha256_hex(canonical.as_bytes())
    }
}

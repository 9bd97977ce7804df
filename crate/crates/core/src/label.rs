//! Two-decimal relative depth labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Slack added before flooring so that decimal ties such as `0.285`, whose
/// binary value sits a hair below the tie, still round up.
const TIE_NUDGE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("depth label value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("depth label value {0} is not finite")]
    NotFinite(f64),
    #[error("depth label {0} has more than two decimal places")]
    NotQuantized(f64),
    #[error("cannot parse depth label from {0:?}")]
    Parse(String),
}

/// A relative depth in `[0, 1]` quantized to hundredths; 0 is the closest
/// point of the image, 1 the farthest.
///
/// Stored as an integer count of hundredths, so equality and ordering are
/// exact and `value() == round(value() * 100) / 100` always holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepthLabel(u8);

impl DepthLabel {
    pub const ZERO: DepthLabel = DepthLabel(0);
    pub const ONE: DepthLabel = DepthLabel(100);

    pub fn from_hundredths(hundredths: u8) -> Option<Self> {
        (hundredths <= 100).then_some(DepthLabel(hundredths))
    }

    /// Round half-up to two decimals.
    ///
    /// Values within `1e-9` outside `[0, 1]` are accepted and clamped, which
    /// absorbs floating-point slop from normalization.
    pub fn quantize(value: f64) -> Result<Self, LabelError> {
        if !value.is_finite() {
            return Err(LabelError::NotFinite(value));
        }
        if !(-TIE_NUDGE..=1.0 + TIE_NUDGE).contains(&value) {
            return Err(LabelError::OutOfRange(value));
        }
        let hundredths = (value * 100.0 + 0.5 + TIE_NUDGE).floor().clamp(0.0, 100.0);
        Ok(DepthLabel(hundredths as u8))
    }

    /// Accept a value only if it already carries at most two decimals.
    pub fn from_exact(value: f64) -> Result<Self, LabelError> {
        let label = Self::quantize(value)?;
        if (label.value() - value).abs() > 1e-9 {
            return Err(LabelError::NotQuantized(value));
        }
        Ok(label)
    }

    pub fn hundredths(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for DepthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for DepthLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s.trim().parse().map_err(|_| LabelError::Parse(s.to_string()))?;
        Self::from_exact(v)
    }
}

impl Serialize for DepthLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for DepthLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        DepthLabel::from_exact(v).map_err(serde::de::Error::custom)
    }
}

/// Round to the nearest integer, ties toward positive infinity.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

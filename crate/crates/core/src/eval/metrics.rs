//! Perception and proximity metrics as mergeable accumulators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, InvalidReason, PerceptionParse, ProximityParse, SqRelDenominator};
use crate::conversation::ProximityRelation;
use crate::exact_sum::ExactSum;
use crate::label::DepthLabel;

/// Floor applied to both values before δ ratios and to the Sq Rel
/// denominator, so a valid prediction of `0` stays finite.
pub const RATIO_FLOOR: f64 = 1e-6;

const DELTA_BASE: f64 = 1.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionMetrics {
    pub n_total: u64,
    pub n_valid: u64,
    pub valid_answer_ratio: f64,
    /// Error metrics are `None` when no response was valid.
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub sq_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub delta3: Option<f64>,
    pub invalid_reasons: BTreeMap<InvalidReason, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionAccumulator {
    policy: SqRelDenominator,
    n_total: u64,
    n_valid: u64,
    squared: ExactSum,
    relative: ExactSum,
    within: [u64; 3],
    invalid: BTreeMap<InvalidReason, u64>,
}

impl PerceptionAccumulator {
    pub fn new(policy: SqRelDenominator) -> Self {
        PerceptionAccumulator {
            policy,
            n_total: 0,
            n_valid: 0,
            squared: ExactSum::new(),
            relative: ExactSum::new(),
            within: [0; 3],
            invalid: BTreeMap::new(),
        }
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn add(&mut self, parsed: &PerceptionParse, gt: DepthLabel) {
        self.n_total += 1;
        let pred = match *parsed {
            PerceptionParse::Valid(v) => v,
            PerceptionParse::Invalid(reason) => {
                *self.invalid.entry(reason).or_default() += 1;
                return;
            }
        };
        let gt = gt.value();
        self.n_valid += 1;
        let sq = (gt - pred) * (gt - pred);
        self.squared.add(sq);
        let den = match self.policy {
            SqRelDenominator::Pred => pred,
            SqRelDenominator::Gt => gt,
        };
        self.relative.add(sq / den.max(RATIO_FLOOR));
        let (p, g) = (pred.max(RATIO_FLOOR), gt.max(RATIO_FLOOR));
        let ratio = (p / g).max(g / p);
        for (k, hit) in self.within.iter_mut().enumerate() {
            if ratio < DELTA_BASE.powi(k as i32 + 1) {
                *hit += 1;
            }
        }
    }

    /// Combine with an accumulator of the same policy.
    ///
    /// # Panics
    ///
    /// If the policies differ.
    pub fn merge(&mut self, other: &PerceptionAccumulator) {
        assert_eq!(self.policy, other.policy, "cannot merge accumulators with different Sq Rel policies");
        self.n_total += other.n_total;
        self.n_valid += other.n_valid;
        self.squared.merge(&other.squared);
        self.relative.merge(&other.relative);
        for (a, b) in self.within.iter_mut().zip(other.within) {
            *a += b;
        }
        for (reason, n) in &other.invalid {
            *self.invalid.entry(*reason).or_default() += n;
        }
    }

    pub fn finish(&self) -> PerceptionMetrics {
        let valid = self.n_valid as f64;
        let mean = |s: &ExactSum| (self.n_valid > 0).then(|| s.value() / valid);
        let mse = mean(&self.squared);
        let delta = |k: usize| (self.n_valid > 0).then(|| self.within[k] as f64 / valid);
        PerceptionMetrics {
            n_total: self.n_total,
            n_valid: self.n_valid,
            valid_answer_ratio: if self.n_total == 0 { 0.0 } else { valid / self.n_total as f64 },
            mse,
            rmse: mse.map(f64::sqrt),
            sq_rel: mean(&self.relative),
            delta1: delta(0),
            delta2: delta(1),
            delta3: delta(2),
            invalid_reasons: self.invalid.clone(),
        }
    }
}

pub fn compute_perception_metrics(
    pairs: &[(PerceptionParse, DepthLabel)],
    policy: SqRelDenominator,
) -> Result<PerceptionMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::InvalidEvalSet("no perception items".into()));
    }
    let mut acc = PerceptionAccumulator::new(policy);
    for (parsed, gt) in pairs {
        acc.add(parsed, *gt);
    }
    Ok(acc.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityMetrics {
    pub n_total: u64,
    pub n_valid: u64,
    pub n_correct: u64,
    pub valid_answer_ratio: f64,
    /// Correct answers over all items.
    pub accuracy: f64,
    pub invalid_reasons: BTreeMap<InvalidReason, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProximityAccumulator {
    n_total: u64,
    n_valid: u64,
    n_correct: u64,
    invalid: BTreeMap<InvalidReason, u64>,
}

impl ProximityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn add(&mut self, parsed: &ProximityParse, truth: ProximityRelation) {
        self.n_total += 1;
        match parsed.relation() {
            Some(r) => {
                self.n_valid += 1;
                if r == truth {
                    self.n_correct += 1;
                }
            }
            None => {
                if let ProximityParse::Invalid(reason) = parsed {
                    *self.invalid.entry(*reason).or_default() += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &ProximityAccumulator) {
        self.n_total += other.n_total;
        self.n_valid += other.n_valid;
        self.n_correct += other.n_correct;
        for (reason, n) in &other.invalid {
            *self.invalid.entry(*reason).or_default() += n;
        }
    }

    pub fn finish(&self) -> ProximityMetrics {
        let total = self.n_total.max(1) as f64;
        ProximityMetrics {
            n_total: self.n_total,
            n_valid: self.n_valid,
            n_correct: self.n_correct,
            valid_answer_ratio: self.n_valid as f64 / total,
            accuracy: self.n_correct as f64 / total,
            invalid_reasons: self.invalid.clone(),
        }
    }
}

pub fn compute_proximity_metrics(
    pairs: &[(ProximityParse, ProximityRelation)],
) -> Result<ProximityMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::InvalidEvalSet("no proximity items".into()));
    }
    let mut acc = ProximityAccumulator::new();
    for (parsed, truth) in pairs {
        acc.add(parsed, *truth);
    }
    Ok(acc.finish())
}

//! Descriptive statistics of a generated or converted dataset.
//!
//! All tallies are integers, so partial accumulators from any partition of
//! the input merge into exactly the single-pass result.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conversation::{Conversation, GroundTruth, ProximityRelation, IMAGE_TOKEN};
use crate::label::DepthLabel;
use crate::templates::Stage;

pub const HISTOGRAM_BUCKETS: usize = 10;

/// How words are counted, recorded in every report.
pub const WORD_RULE: &str = "whitespace-separated tokens; the leading <image> token is not counted";
/// Bucket edges, recorded in every report.
pub const BUCKET_RULE: &str = "[k/10, (k+1)/10) for k < 9; the top bucket [0.9, 1.0] is closed";

/// Whitespace tokens, ignoring a leading image token.
pub fn word_count(text: &str) -> usize {
    let text = text.trim_start();
    let text = text.strip_prefix(IMAGE_TOKEN).unwrap_or(text);
    text.split_whitespace().count()
}

pub fn bucket_of(label: DepthLabel) -> usize {
    (usize::from(label.hundredths()) / 10).min(HISTOGRAM_BUCKETS - 1)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub perception: u64,
    pub reasoning: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub first_closer: u64,
    pub second_closer: u64,
    pub equally_close: u64,
}

impl RelationCounts {
    fn total(&self) -> u64 {
        self.first_closer + self.second_closer + self.equally_close
    }
}

/// Mergeable running tallies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsAccumulator {
    pub pair_counts: StageCounts,
    pub question_words: u64,
    pub answer_words: u64,
    /// Items that carried an answer text.
    pub answered: u64,
    pub histogram: [u64; HISTOGRAM_BUCKETS],
    pub relations: RelationCounts,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_conversation(&mut self, conv: &Conversation) {
        self.add_item(conv.stage, conv.question(), Some(conv.answer()), Some(&conv.meta.ground_truth));
    }

    /// Add one question/answer item; converted eval sets have no answer
    /// text and may lack ground truth.
    pub fn add_item(&mut self, stage: Stage, question: &str, answer: Option<&str>, truth: Option<&GroundTruth>) {
        match stage {
            Stage::Perception => self.pair_counts.perception += 1,
            Stage::Reasoning => self.pair_counts.reasoning += 1,
        }
        self.question_words += word_count(question) as u64;
        if let Some(a) = answer {
            self.answer_words += word_count(a) as u64;
            self.answered += 1;
        }
        match truth {
            Some(GroundTruth::Depth(label)) => self.histogram[bucket_of(*label)] += 1,
            Some(GroundTruth::Relation(t)) => match t.relation {
                ProximityRelation::FirstCloser => self.relations.first_closer += 1,
                ProximityRelation::SecondCloser => self.relations.second_closer += 1,
                ProximityRelation::EquallyClose => self.relations.equally_close += 1,
            },
            None => {}
        }
    }

    pub fn add_label(&mut self, label: DepthLabel) {
        self.histogram[bucket_of(label)] += 1;
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.pair_counts.perception += other.pair_counts.perception;
        self.pair_counts.reasoning += other.pair_counts.reasoning;
        self.question_words += other.question_words;
        self.answer_words += other.answer_words;
        self.answered += other.answered;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self.relations.first_closer += other.relations.first_closer;
        self.relations.second_closer += other.relations.second_closer;
        self.relations.equally_close += other.relations.equally_close;
    }

    pub fn report(&self) -> StatsReport {
        let total = self.pair_counts.perception + self.pair_counts.reasoning;
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        let labels: u64 = self.histogram.iter().sum();
        let rel = self.relations.total();
        StatsReport {
            total_pairs: total,
            pair_counts: self.pair_counts.clone(),
            mean_question_words: ratio(self.question_words, total),
            mean_answer_words: ratio(self.answer_words, self.answered),
            histogram_counts: self.histogram,
            depth_histogram: (labels > 0).then(|| self.histogram.map(|c| c as f64 / labels as f64)),
            relation_counts: self.relations.clone(),
            relation_distribution: (rel > 0).then(|| RelationFractions {
                first_closer: self.relations.first_closer as f64 / rel as f64,
                second_closer: self.relations.second_closer as f64 / rel as f64,
                equally_close: self.relations.equally_close as f64 / rel as f64,
            }),
            word_rule: WORD_RULE.to_string(),
            bucket_rule: BUCKET_RULE.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationFractions {
    pub first_closer: f64,
    pub second_closer: f64,
    pub equally_close: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_pairs: u64,
    pub pair_counts: StageCounts,
    pub mean_question_words: Option<f64>,
    pub mean_answer_words: Option<f64>,
    pub histogram_counts: [u64; HISTOGRAM_BUCKETS],
    /// Fractions per bucket; `None` without perception labels.
    pub depth_histogram: Option<[f64; HISTOGRAM_BUCKETS]>,
    pub relation_counts: RelationCounts,
    pub relation_distribution: Option<RelationFractions>,
    pub word_rule: String,
    pub bucket_rule: String,
}

impl StatsReport {
    /// Plain-text histogram, one bar per bucket.
    pub fn render_histogram(&self, width: usize) -> String {
        let mut out = String::new();
        let Some(fractions) = self.depth_histogram else {
            out.push_str("(no perception labels)\n");
            return out;
        };
        let peak = fractions.iter().copied().fold(0.0, f64::max);
        for (k, f) in fractions.iter().enumerate() {
            let bar = if peak > 0.0 { (f / peak * width as f64).round() as usize } else { 0 };
            let close = if k == HISTOGRAM_BUCKETS - 1 { ']' } else { ')' };
            let _ = writeln!(
                out,
                "[{:.1}, {:.1}{close} {:>6.2}% {}",
                k as f64 / 10.0,
                (k + 1) as f64 / 10.0,
                f * 100.0,
                "#".repeat(bar)
            );
        }
        out
    }
}

pub fn compute_stats<'a>(dataset: impl IntoIterator<Item = &'a Conversation>) -> StatsReport {
    let mut acc = StatsAccumulator::new();
    for conv in dataset {
        acc.add_conversation(conv);
    }
    acc.report()
}

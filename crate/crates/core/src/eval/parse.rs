//! Model response parsing. Both parsers are total: any UTF-8 input maps to
//! a value or an invalid reason.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::caption::normalize_caption;
use crate::conversation::{ProximityRelation, EQUALLY_CLOSE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NoNumber,
    MultipleNumbers,
    OutOfRange,
    Ambiguous,
    NoMatch,
    Missing,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::NoNumber => "no_number",
            InvalidReason::MultipleNumbers => "multiple_numbers",
            InvalidReason::OutOfRange => "out_of_range",
            InvalidReason::Ambiguous => "ambiguous",
            InvalidReason::NoMatch => "no_match",
            InvalidReason::Missing => "missing",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PerceptionParse {
    Valid(f64),
    Invalid(InvalidReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProximityParse {
    First,
    Second,
    Equal,
    Invalid(InvalidReason),
}

impl ProximityParse {
    pub fn from_relation(relation: ProximityRelation) -> Self {
        match relation {
            ProximityRelation::FirstCloser => ProximityParse::First,
            ProximityRelation::SecondCloser => ProximityParse::Second,
            ProximityRelation::EquallyClose => ProximityParse::Equal,
        }
    }

    pub fn relation(self) -> Option<ProximityRelation> {
        match self {
            ProximityParse::First => Some(ProximityRelation::FirstCloser),
            ProximityParse::Second => Some(ProximityRelation::SecondCloser),
            ProximityParse::Equal => Some(ProximityRelation::EquallyClose),
            ProximityParse::Invalid(_) => None,
        }
    }
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)").expect("valid regex"))
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)the answer is\s*:").expect("valid regex"))
}

/// Valid iff the response holds exactly one numeric token and its value
/// lies in `[0, 1]`.
///
/// A sign directly after a letter or digit is read as a hyphen, not as
/// part of the number (`"region-2"` holds the token `2`).
pub fn parse_perception_response(text: &str) -> PerceptionParse {
    let mut matches = number_regex().find_iter(text);
    let Some(m) = matches.next() else {
        return PerceptionParse::Invalid(InvalidReason::NoNumber);
    };
    if matches.next().is_some() {
        return PerceptionParse::Invalid(InvalidReason::MultipleNumbers);
    }
    let mut token = m.as_str();
    let glued = text[..m.start()].chars().next_back().is_some_and(char::is_alphanumeric);
    if glued && (token.starts_with('-') || token.starts_with('+')) {
        token = &token[1..];
    }
    match token.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => PerceptionParse::Valid(v),
        _ => PerceptionParse::Invalid(InvalidReason::OutOfRange),
    }
}

/// `needle` occurs in `hay` delimited by non-alphanumeric characters.
fn contains_phrase(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before = hay[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before && after {
            return true;
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Decide which caption a response names.
///
/// The answer phrase is whatever follows the last `the answer is:` marker,
/// or the whole response without one. After normalization it must equal
/// one caption or `equally close` exactly.
pub fn parse_proximity_response(text: &str, caption_1: &str, caption_2: &str) -> ProximityParse {
    let phrase = match marker_regex().find_iter(text).last() {
        Some(m) => &text[m.end()..],
        None => text,
    };
    let phrase = normalize_caption(phrase);
    let (c1, c2) = (normalize_caption(caption_1), normalize_caption(caption_2));

    let is_first = phrase == c1;
    let is_second = phrase == c2;
    match (is_first, is_second) {
        (true, false) => return ProximityParse::First,
        (false, true) => return ProximityParse::Second,
        (true, true) => return ProximityParse::Invalid(InvalidReason::Ambiguous),
        (false, false) => {}
    }
    if phrase == EQUALLY_CLOSE {
        return ProximityParse::Equal;
    }
    if contains_phrase(&phrase, &c1) && contains_phrase(&phrase, &c2) {
        ProximityParse::Invalid(InvalidReason::Ambiguous)
    } else {
        ProximityParse::Invalid(InvalidReason::NoMatch)
    }
}

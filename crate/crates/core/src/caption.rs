//! Caption classification into "object" and "region" template families.
//!
//! Short subject+attribute captions ("red car", "rug") use the object
//! templates, anything longer or containing a function word or an `-ing`
//! verb form ("man riding a bicycle") uses the region templates. The rule
//! only picks phrasing; it never affects ground truth.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::provenance::sha256_hex;

const BUILTIN_LEXICON: &str = include_str!("../data/function_words.txt");

/// Captions with more tokens than this are always region captions.
pub const MAX_OBJECT_TOKENS: usize = 3;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaptionKind {
    #[serde(rename = "object")]
    ObjectType,
    #[serde(rename = "region")]
    RegionType,
}

impl CaptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptionKind::ObjectType => "object",
            CaptionKind::RegionType => "region",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionClass {
    pub kind: CaptionKind,
    /// Tokens left after dropping leading articles.
    pub token_count: usize,
    /// Which rule decided the class, e.g. `function_word:in`.
    pub trigger: String,
}

#[derive(Clone, Debug)]
pub struct Lexicon {
    function_words: HashSet<String>,
    ing_nouns: HashSet<String>,
    hash: String,
}

impl Lexicon {
    /// Parse the line-oriented lexicon format: one token per line, `#`
    /// comments, `!token` for `-ing` nouns.
    pub fn parse(text: &str) -> Self {
        let mut function_words = HashSet::new();
        let mut ing_nouns = HashSet::new();
        for line in text.lines() {
            let token = line.split('#').next().unwrap_or("").trim();
            if token.is_empty() {
                continue;
            }
            match token.strip_prefix('!') {
                Some(noun) => ing_nouns.insert(noun.trim().to_lowercase()),
                None => function_words.insert(token.to_lowercase()),
            };
        }
        Lexicon {
            function_words,
            ing_nouns,
            hash: sha256_hex(text.as_bytes()),
        }
    }

    pub fn builtin() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(BUILTIN_LEXICON))
    }

    /// SHA-256 of the lexicon source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn is_function_word(&self, token: &str) -> bool {
        self.function_words.contains(token)
    }

    pub fn is_ing_form(&self, token: &str) -> bool {
        token.len() >= 5
            && token.ends_with("ing")
            && token.chars().all(|c| c.is_alphabetic())
            && !self.ing_nouns.contains(token)
    }

    pub fn classify(&self, caption: &str) -> CaptionClass {
        let tokens = content_tokens(caption);
        let count = tokens.len();
        let region = |trigger: String| CaptionClass {
            kind: CaptionKind::RegionType,
            token_count: count,
            trigger,
        };
        if let Some(t) = tokens.iter().find(|t| self.is_function_word(t)) {
            return region(format!("function_word:{t}"));
        }
        if let Some(t) = tokens.iter().find(|t| self.is_ing_form(t)) {
            return region(format!("ing_form:{t}"));
        }
        if count > MAX_OBJECT_TOKENS {
            return region(format!("token_count:{count}"));
        }
        CaptionClass {
            kind: CaptionKind::ObjectType,
            token_count: count,
            trigger: "subject_attribute".to_string(),
        }
    }
}

pub fn classify_caption(caption: &str) -> CaptionClass {
    Lexicon::builtin().classify(caption)
}

/// Lowercased whitespace tokens with edge punctuation trimmed and leading
/// articles removed.
fn content_tokens(caption: &str) -> Vec<String> {
    let mut tokens: Vec<String> = caption
        .split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect();
    let leading = tokens
        .iter()
        .take_while(|t| ARTICLES.contains(&t.as_str()))
        .count();
    tokens.drain(..leading);
    tokens
}

/// Comparison form of a caption or answer phrase: lowercase, collapsed
/// whitespace, outer quotes/periods and leading articles removed.
///
/// Used only to compare captions with each other and with model answers;
/// generated text always keeps the verbatim caption.
pub fn normalize_caption(text: &str) -> String {
    let lowered = text.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '\'' | '"' | '.' | '`' | '‘' | '’' | '“' | '”')
    });
    let mut words: Vec<&str> = trimmed.split_whitespace().collect();
    while words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

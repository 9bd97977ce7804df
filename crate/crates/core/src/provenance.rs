//! Hashes and file headers that make outputs traceable to their inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caption::Lexicon;
use crate::config::GenConfig;
use crate::templates::TemplateSet;

/// Key of the single header object that opens every JSONL file we write.
pub const HEADER_KEY: &str = "proxforge_header";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// What the file holds: `conversations`, `eval_set`, `answer_key`, ...
    pub kind: String,
    pub tool_version: String,
    pub config_hash: String,
    pub template_hash: String,
    pub lexicon_hash: String,
    pub config: GenConfig,
}

impl Provenance {
    pub fn new(kind: &str, config: &GenConfig) -> Self {
        Provenance {
            kind: kind.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            template_hash: TemplateSet::builtin().hash().to_string(),
            lexicon_hash: Lexicon::builtin().hash().to_string(),
            config: config.without_paths(),
        }
    }

    /// The header as one JSON line (no trailing newline).
    pub fn header_line(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert(
            HEADER_KEY.to_string(),
            serde_json::to_value(self).expect("provenance serializes"),
        );
        serde_json::Value::Object(map).to_string()
    }

    /// Recognize a header line written by [`Provenance::header_line`].
    pub fn from_line(line: &str) -> Option<Provenance> {
        if !line.trim_start().starts_with(&format!("{{\"{HEADER_KEY}\"")) {
            return None;
        }
        let mut value: serde_json::Value = serde_json::from_str(line).ok()?;
        serde_json::from_value(value.get_mut(HEADER_KEY)?.take()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn header_round_trip() {
        let p = Provenance::new("conversations", &GenConfig::default());
        let line = p.header_line();
        assert!(line.starts_with("{\"proxforge_header\""));
        assert_eq!(Provenance::from_line(&line), Some(p));
        assert_eq!(Provenance::from_line("{\"id\":\"x\"}"), None);
    }
}

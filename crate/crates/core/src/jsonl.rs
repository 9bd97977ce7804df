//! JSON Lines with an optional provenance header line.

use std::io::{self, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::provenance::Provenance;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Write the header (if any) and one compact JSON object per line.
pub fn write_jsonl<W, T, I>(mut out: W, header: Option<&Provenance>, items: I) -> io::Result<()>
where
    W: Write,
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    if let Some(h) = header {
        writeln!(out, "{}", h.header_line())?;
    }
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl_bytes<T, I>(header: Option<&Provenance>, items: I) -> Vec<u8>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut buf = Vec::new();
    write_jsonl(&mut buf, header, items).expect("writing to memory cannot fail");
    buf
}

/// Parse JSON Lines, skipping blank lines and returning the header if the
/// first non-blank line is one.
pub fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<(Option<Provenance>, Vec<T>), JsonlError> {
    let mut header = None;
    let mut items = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if first {
            first = false;
            if let Some(h) = Provenance::from_line(line) {
                header = Some(h);
                continue;
            }
        }
        let item = serde_json::from_str(line).map_err(|source| JsonlError::Json { line: i + 1, source })?;
        items.push(item);
    }
    Ok((header, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GenConfig;

    #[test]
    fn round_trip_with_header() {
        let header = Provenance::new("numbers", &GenConfig::default());
        let bytes = to_jsonl_bytes(Some(&header), [1, 2, 3]);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 4);
        let (h, items) = read_jsonl::<i32>(&format!("{text}\n\n")).unwrap();
        assert_eq!(h, Some(header));
        assert_eq!(items, [1, 2, 3]);
    }

    #[test]
    fn reports_bad_line() {
        let err = read_jsonl::<i32>("1\n\nx\n").unwrap_err();
        assert!(matches!(err, JsonlError::Json { line: 3, .. }));
        let (h, items) = read_jsonl::<i32>("").unwrap();
        assert!(h.is_none() && items.is_empty());
    }
}

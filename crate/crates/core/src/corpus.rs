//! JSON Lines corpus input.
//!
//! Each non-blank line is either `{"id": .., "text": ..}` or
//! `{"id": .., "tokens": [..]}`.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::text::{tokenize, Cleaner, Document, DocumentError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Document {
        line: usize,
        #[source]
        source: DocumentError,
    },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
}

/// Parses a JSON Lines corpus. When `cleaner` is given it is applied to
/// `text` entries before tokenization; pre-tokenized entries pass through.
pub fn read_corpus<R: BufRead>(
    reader: R,
    cleaner: Option<&Cleaner>,
) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let tokens = match (parsed.text, parsed.tokens) {
            (Some(text), None) => match cleaner {
                Some(c) => tokenize(&c.clean(&text)),
                None => tokenize(&text),
            },
            (None, Some(tokens)) => tokens,
            _ => {
                return Err(CorpusError::Parse {
                    line: line_no,
                    message: "expected exactly one of \"text\" or \"tokens\"".into(),
                })
            }
        };
        if !seen.insert(parsed.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: parsed.id,
            });
        }
        let doc = Document::new(parsed.id, tokens).map_err(|source| CorpusError::Document {
            line: line_no,
            source,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path, cleaner: Option<&Cleaner>) -> Result<Vec<Document>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file), cleaner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_both_shapes() {
        let input = r#"{"id":"a","text":"chest  pain."}

{"id":"b","tokens":["x","y"]}
"#;
        let docs = read_corpus(input.as_bytes(), None).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens(), ["chest", "pain."]);
        assert_eq!(docs[1].tokens(), ["x", "y"]);

        let cleaned = read_corpus(input.as_bytes(), Some(&Cleaner::new())).unwrap();
        assert_eq!(cleaned[0].tokens(), ["chest", "pain"]);
    }

    #[test]
    fn rejects_bad_lines() {
        let dup = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            read_corpus(dup.as_bytes(), None),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
        let both = r#"{"id":"a","text":"x","tokens":["x"]}"#;
        assert!(matches!(
            read_corpus(both.as_bytes(), None),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        let empty_tok = r#"{"id":"a","tokens":["x",""]}"#;
        assert!(matches!(
            read_corpus(empty_tok.as_bytes(), None),
            Err(CorpusError::Document { line: 1, .. })
        ));
        assert!(read_corpus("not json".as_bytes(), None).is_err());
    }
}

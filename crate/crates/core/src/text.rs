//! Tokenization, clinical-style text cleaning and block segmentation.
//!
//! Everything here is a pure function of its inputs. The engine is
//! tokenizer-agnostic: callers can supply pre-tokenized documents, and the
//! default whitespace tokenizer only exists so plain text can be explained
//! without an external vocabulary.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters trimmed from both ends of every word.
pub const BOUNDARY_STRIP: &str = ".!\"#$&'()*+,/:;?@[\\]^_`{|}~";

/// Characters deleted wherever they occur inside a word.
pub const ALWAYS_REMOVE: &str = "!\"#$&'()*+,;?@[\\]^_`{|}~\u{201d}";

/// Words with more characters than this are dropped.
pub const MAX_WORD_CHARS: usize = 39;

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|ftp://|www\.)\S+").unwrap());
static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+").unwrap());
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+?1[-. ])?(?:\(\d{3}\)\s?|\b\d{3}[-.])\d{3}[-.]\d{4}\b").unwrap()
});
static DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"\b\d{4}-\d{1,2}-\d{1,2}\b",
        r"|\b\d{1,2}[/-]\d{1,2}[/-]\d{2,4}\b",
        r"|(?i)\b(?:jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\.?\s+\d{1,2}(?:st|nd|rd|th)?,?\s+\d{4}\b",
    ))
    .unwrap()
});

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("document id must be non-empty")]
    EmptyId,
    #[error("document {id:?} has an empty token at position {position}")]
    EmptyToken { id: String, position: usize },
    #[error("block size must be at least 1")]
    ZeroBlockSize,
}

/// An identified, tokenized text sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    id: String,
    tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Result<Self, DocumentError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DocumentError::EmptyId);
        }
        if let Some(position) = tokens.iter().position(|t| t.is_empty()) {
            return Err(DocumentError::EmptyToken { id, position });
        }
        Ok(Self { id, tokens })
    }

    /// Builds a document by whitespace-tokenizing `text`.
    pub fn from_text(id: impl Into<String>, text: &str) -> Result<Self, DocumentError> {
        Self::new(id, tokenize(text))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of `block` joined by single spaces.
    pub fn block_text(&self, block: &Block) -> String {
        self.tokens[block.span()].join(" ")
    }
}

/// A contiguous span of at most `block_size` tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    pub start: usize,
    pub length: usize,
}

impl Block {
    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.length
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    block_size: usize,
}

impl SegmentationConfig {
    pub fn new(block_size: usize) -> Result<Self, DocumentError> {
        if block_size == 0 {
            return Err(DocumentError::ZeroBlockSize);
        }
        Ok(Self { block_size })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

/// Number of blocks a document of `len` tokens splits into.
pub fn block_count(len: usize, block_size: usize) -> usize {
    len.div_ceil(block_size)
}

/// Splits a token sequence of length `len` into consecutive blocks.
///
/// The trailing block may be shorter than the configured size; it is kept
/// and treated like every other block.
pub fn segment_len(len: usize, cfg: SegmentationConfig) -> Vec<Block> {
    let b = cfg.block_size;
    (0..block_count(len, b))
        .map(|index| {
            let start = index * b;
            Block {
                index,
                start,
                length: b.min(len - start),
            }
        })
        .collect()
}

pub fn segment(doc: &Document, cfg: SegmentationConfig) -> Vec<Block> {
    segment_len(doc.len(), cfg)
}

/// Splits on Unicode whitespace, dropping empty fragments.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Text normalizer for clinical notes.
///
/// Dates, phone numbers, URLs and e-mail addresses are removed first, then
/// each word is trimmed of boundary punctuation, purged of noise characters,
/// dropped when longer than [`MAX_WORD_CHARS`], and stripped of character
/// runs of length three or more. Numeric words are left untouched. Words
/// found in the optional gazetteer (names, cities, states) are dropped,
/// compared case-insensitively.
#[derive(Clone, Debug, Default)]
pub struct Cleaner {
    gazetteer: HashSet<String>,
}

impl Cleaner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_gazetteer<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let gazetteer = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Self { gazetteer }
    }

    /// Reads a gazetteer with one entry per line.
    pub fn from_gazetteer_file(path: &std::path::Path) -> std::io::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        Ok(Self::with_gazetteer(body.lines()))
    }

    pub fn clean(&self, text: &str) -> String {
        let mut scrubbed = text.to_owned();
        for re in [&*URL, &*EMAIL, &*PHONE, &*DATE] {
            scrubbed = re.replace_all(&scrubbed, " ").into_owned();
        }
        let mut out: Vec<String> = Vec::new();
        for raw in scrubbed.split_whitespace() {
            if let Some(word) = self.clean_word(raw) {
                out.push(word);
            }
        }
        out.join(" ")
    }

    fn clean_word(&self, raw: &str) -> Option<String> {
        let trimmed = raw.trim_matches(|c: char| BOUNDARY_STRIP.contains(c));
        let kept: String = trimmed
            .chars()
            .filter(|c| !ALWAYS_REMOVE.contains(*c))
            .collect();
        if kept.is_empty() || kept.chars().count() > MAX_WORD_CHARS {
            return None;
        }
        let word = if is_numeric_word(&kept) {
            kept
        } else {
            drop_character_runs(&kept)
        };
        if word.is_empty() || self.gazetteer.contains(&word.to_lowercase()) {
            return None;
        }
        Some(word)
    }
}

/// [`Cleaner::clean`] without a gazetteer.
pub fn clean_text(text: &str) -> String {
    Cleaner::new().clean(text)
}

fn is_numeric_word(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
        && word
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '/' | '-' | '+' | '%' | ':'))
}

/// Deletes every run of three or more identical characters.
fn drop_character_runs(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len());
    let mut i = 0;
    while i < chars.len() {
        let mut j = i + 1;
        while j < chars.len() && chars[j] == chars[i] {
            j += 1;
        }
        if j - i < 3 {
            out.extend(&chars[i..j]);
        }
        i = j;
    }
    out
}

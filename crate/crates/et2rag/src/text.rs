//! Text normalization and word-level tokenization.
//!
//! Everything downstream (retrieval, truncation, similarity, metrics)
//! measures text in the same unit: whitespace-separated words after
//! normalization. Normalization lowercases, maps punctuation and
//! symbols to spaces, and collapses whitespace. Punctuation becomes a
//! space rather than being deleted so "U.S." tokenizes as ["u", "s"]
//! instead of merging into "us".
//!
//! For HTTP backends the response-length budget L is passed through as
//! the backend's max-token parameter and the backend's own tokenizer
//! governs; these word-level routines define L only for the offline
//! path.

use serde::{Deserialize, Serialize};

/// An ordered list of normalized word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Joins tokens with single spaces; re-tokenizing the result
    /// reproduces the same sequence.
    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, maps non-alphanumeric characters to spaces, collapses
/// whitespace runs to single spaces, and trims.
pub fn normalize(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().collect::<Vec<_>>()
            } else {
                vec![' ']
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits normalized text on spaces; empty text yields an empty sequence.
pub fn tokenize(text: &str) -> TokenSeq {
    let normalized = normalize(text);
    let tokens = if normalized.is_empty() {
        Vec::new()
    } else {
        normalized.split(' ').map(str::to_owned).collect()
    };
    TokenSeq { tokens }
}

/// First `limit` tokens of `seq`. Idempotent.
pub fn truncate_tokens(seq: &TokenSeq, limit: usize) -> TokenSeq {
    TokenSeq {
        tokens: seq.tokens.iter().take(limit).cloned().collect(),
    }
}

/// Word count of `text` under this module's tokenization.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases, splits on whitespace and detaches punctuation at either end
/// of a word, one token per character. Punctuation between alphanumeric
/// characters stays inside the word (`what's`, `3.5`).
///
/// Input without a single alphanumeric character is rejected.
pub fn tokenize(raw: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for chunk in raw.split_whitespace() {
        let lower: Vec<char> = chunk.to_lowercase().chars().collect();
        let Some(first) = lower.iter().position(|c| c.is_alphanumeric()) else {
            tokens.extend(lower.iter().map(char::to_string));
            continue;
        };
        let last = lower.iter().rposition(|c| c.is_alphanumeric()).expect("has alnum");
        tokens.extend(lower[..first].iter().map(char::to_string));
        tokens.push(lower[first..=last].iter().collect());
        tokens.extend(lower[last + 1..].iter().map(char::to_string));
    }
    if !tokens.iter().any(|t| t.chars().any(char::is_alphanumeric)) {
        return Err(Error::EmptyDocument(raw.chars().take(40).collect()));
    }
    Ok(tokens)
}

/// One short text with its tokens and optional gold label id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub raw: String,
    pub tokens: Vec<String>,
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: usize, raw: impl Into<String>, label: Option<usize>) -> Result<Self> {
        let raw = raw.into();
        let tokens = tokenize(&raw)?;
        Ok(Document {
            id,
            raw,
            tokens,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

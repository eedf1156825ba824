use std::fmt;

use serde::{Deserialize, Serialize};

use super::AsrError;

/// Ordered output characters. The CTC blank is the index one past the last
/// character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    /// Builds an alphabet from the given characters (deduplicated, sorted).
    /// Space is always included.
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let mut chars: Vec<char> = chars.into_iter().chain(std::iter::once(' ')).collect();
        chars.sort_unstable();
        chars.dedup();
        Self { chars }
    }

    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(texts.into_iter().flat_map(str::chars))
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.chars.len()
    }

    /// Number of model outputs (characters plus blank).
    pub fn n_outputs(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.chars.binary_search(&c).ok()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index_of(c).is_some()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, AsrError> {
        text.chars()
            .map(|c| self.index_of(c).ok_or(AsrError::UnknownCharacter(c)))
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels
            .iter()
            .filter_map(|&l| self.chars.get(l).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript(pub String);

impl Transcript {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Length in characters, spaces included.
    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split_whitespace()
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self(words.into_iter().collect::<Vec<_>>().join(" "))
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Transcript {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

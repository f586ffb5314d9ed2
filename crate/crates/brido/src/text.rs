//! Tokenization and token sequences.

use serde::{Deserialize, Serialize};

/// Lowercases and splits on runs of non-alphanumeric characters, dropping
/// empty fragments. Deterministic and locale-independent.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A text together with its tokenization.
///
/// The token list is always exactly `tokenize(text)`, so re-tokenizing the
/// stored text reproduces the stored tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    text: String,
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { text, tokens }
    }

    /// Builds a sequence from tokens that are already in canonical form
    /// (lowercase alphanumeric words); the text is their space-joined form.
    ///
    /// Callers must guarantee canonical tokens; this is checked in debug
    /// builds.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let text = tokens.join(" ");
        debug_assert_eq!(tokenize(&text), tokens, "tokens must be canonical");
        Self { text, tokens }
    }

    pub fn text(&self) -> &str {
        &self.text
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
}

impl From<&str> for TokenSequence {
    fn from(text: &str) -> Self {
        Self::new(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_strips_punctuation() {
        assert_eq!(tokenize("The cat, sat."), vec!["the", "cat", "sat"]);
    }

    #[test]
    fn empty_text_yields_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(TokenSequence::new("").is_empty());
    }

    #[test]
    fn splits_on_nonalnum_runs() {
        assert_eq!(tokenize("A-B  c"), vec!["a", "b", "c"]);
        assert_eq!(tokenize("--x--"), vec!["x"]);
    }

    #[test]
    fn digits_are_tokens() {
        assert_eq!(tokenize("slot 0 is v3"), vec!["slot", "0", "is", "v3"]);
    }

    #[test]
    fn retokenization_is_stable() {
        let seq = TokenSequence::new("FIFTY-five Bottles, of beer!");
        assert_eq!(tokenize(seq.text()), seq.tokens());
        let rebuilt = TokenSequence::from_tokens(seq.tokens().to_vec());
        assert_eq!(rebuilt.tokens(), seq.tokens());
    }

    #[test]
    fn unicode_words_survive() {
        assert_eq!(tokenize("Café au lait"), vec!["café", "au", "lait"]);
    }
}

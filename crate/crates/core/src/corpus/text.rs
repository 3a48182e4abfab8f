//! Tokenization: case folding, splitting, stop-word removal and Porter stemming.

use std::collections::HashSet;

/// English stop words, applied when no explicit list is configured.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

#[derive(Debug, Clone, Default)]
pub struct TokenizerConfig {
    pub stopwords: HashSet<String>,
    pub stem: bool,
}

impl TokenizerConfig {
    pub fn new(stopwords: impl IntoIterator<Item = impl Into<String>>, stem: bool) -> Self {
        Self {
            stopwords: stopwords.into_iter().map(|s| s.into().to_lowercase()).collect(),
            stem,
        }
    }

    pub fn english(stem: bool) -> Self {
        Self::new(ENGLISH_STOPWORDS.iter().copied(), stem)
    }
}

/// Splits `text` into lowercase alphanumeric terms.
///
/// Purely numeric tokens are dropped. Stop words are removed both before and
/// after stemming, so no configured stop word can ever become a term.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|raw| !raw.is_empty())
        .filter_map(|raw| {
            let token = raw.to_lowercase();
            if token.chars().all(char::is_numeric) || config.stopwords.contains(&token) {
                return None;
            }
            let term = if config.stem {
                porter_stemmer::stem(&token)
            } else {
                token
            };
            (!term.is_empty() && !config.stopwords.contains(&term)).then_some(term)
        })
        .collect()
}

/// Parses a stop-word file: one word per line, `#` starts a comment.
pub fn parse_stopwords(contents: &str) -> HashSet<String> {
    contents
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

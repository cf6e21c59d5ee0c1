//! Word-level normalization shared by the categorizer and the polarity pipeline.

use std::collections::HashSet;

/// Splits `text` into lowercase word tokens.
///
/// Alphanumeric characters are kept, apostrophes are dropped (so `city's`
/// becomes `citys` and `don't` becomes `dont`), and every other character
/// acts as a separator.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if is_apostrophe(ch) {
            continue;
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn is_apostrophe(ch: char) -> bool {
    matches!(ch, '\'' | '\u{2019}' | '\u{2018}')
}

/// Normalizes a single word the same way [`words`] does, joining any
/// internal separators. Used for stop-word lists and lookup tables.
pub fn normalize_word(word: &str) -> String {
    words(word).concat()
}

/// A normalized stop-word set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            words
                .into_iter()
                .map(|w| normalize_word(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// Parses a one-word-per-line list. Blank lines and `#` comments are ignored.
    pub fn parse(contents: &str) -> Self {
        Self::new(
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            words("In the city's heart, Joe labored."),
            vec!["in", "the", "citys", "heart", "joe", "labored"]
        );
        assert_eq!(words("tech-enthusiast"), vec!["tech", "enthusiast"]);
        assert!(words("  ...  ").is_empty());
    }

    #[test]
    fn stopwords_are_normalized() {
        let sw = StopWords::new(["Don't", "SHE"]);
        assert!(sw.contains("dont"));
        assert!(sw.contains("she"));
        assert_eq!(sw.len(), 2);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Tokenizing, light stemming, slugs, sentence segmentation and digests.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "into",
    "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "will",
    "with",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

/// Hex SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Splits on non-alphanumerics and camelCase boundaries, lowercased.
pub fn raw_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if ch.is_uppercase() && prev_lower && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = ch.is_lowercase() || ch.is_numeric();
            cur.extend(ch.to_lowercase());
        } else {
            prev_lower = false;
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Suffix-stripping stemmer. Keeps at least three characters of stem.
pub fn stem(word: &str) -> String {
    const SUFFIXES: &[&str] = &[
        "ations", "ation", "ators", "ator", "ates", "ate", "ing", "ed",
    ];
    for suffix in SUFFIXES {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    if word.ends_with('s') && !word.ends_with("ss") && word.chars().count() > 3 {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Normalized token set: raw tokens minus stopwords, stemmed.
pub fn normalized_tokens(text: &str) -> BTreeSet<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

/// Lowercase words joined by `-`, at most `max_words` words.
pub fn slugify(text: &str, max_words: usize) -> String {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .take(max_words)
        .collect();
    words.join("-")
}

/// A sentence with its character (unicode scalar) range in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on `.`, `;` and newline, trimming whitespace; empty pieces dropped.
pub fn sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut begin = 0;
    for i in 0..=chars.len() {
        let boundary = i == chars.len() || matches!(chars[i], '.' | ';' | '\n');
        if !boundary {
            continue;
        }
        let mut s = begin;
        let mut e = i;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if e > s {
            out.push(Sentence {
                text: chars[s..e].iter().collect(),
                start: s,
                end: e,
            });
        }
        begin = i + 1;
    }
    out
}

/// Substring by character range; `None` when out of bounds.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<String> {
    if start > end {
        return None;
    }
    let count = text.chars().count();
    if end > count {
        return None;
    }
    Some(text.chars().skip(start).take(end - start).collect())
}

/// Finds a whole-word, case-insensitive occurrence of a (possibly multi-word)
/// cue. Returns the character index just past the match.
pub fn find_cue(sentence: &str, cue: &str) -> Option<(usize, usize)> {
    let hay: Vec<char> = sentence.chars().flat_map(char::to_lowercase).collect();
    let needle: Vec<char> = cue.chars().flat_map(char::to_lowercase).collect();
    if needle.is_empty() || hay.len() < needle.len() {
        return None;
    }
    let is_word = |c: char| c.is_alphanumeric();
    (0..=hay.len() - needle.len()).find_map(|i| {
        let fits = hay[i..i + needle.len()] == needle[..];
        let left_ok = i == 0 || !is_word(hay[i - 1]);
        let right_ok = i + needle.len() == hay.len() || !is_word(hay[i + needle.len()]);
        (fits && left_ok && right_ok).then_some((i, i + needle.len()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_validation_family_together() {
        assert_eq!(stem("validation"), "valid");
        assert_eq!(stem("validate"), "valid");
        assert_eq!(stem("validator"), "valid");
        assert_eq!(stem("payments"), "payment");
        assert_eq!(stem("process"), "process");
        assert_eq!(stem("ordered"), "order");
    }

    #[test]
    fn tokens_split_camel_and_punctuation() {
        assert_eq!(
            raw_tokens("PaymentValidator.java"),
            vec!["payment", "validator", "java"]
        );
        assert_eq!(raw_tokens("retry.max"), vec!["retry", "max"]);
        let toks = normalized_tokens("refactor payment validation to async");
        assert_eq!(
            toks.into_iter().collect::<Vec<_>>(),
            vec!["async", "payment", "refactor", "valid"]
        );
    }

    #[test]
    fn sentence_split_tracks_char_ranges() {
        let text = "First one. Second; third\n  fourth  ";
        let s = sentences(text);
        assert_eq!(s.len(), 4);
        for sent in &s {
            assert_eq!(char_slice(text, sent.start, sent.end).unwrap(), sent.text);
        }
        assert_eq!(s[3].text, "fourth");
        assert!(sentences("").is_empty());
    }

    #[test]
    fn cue_matching_is_word_bounded() {
        assert!(find_cue("This is a must.", "must").is_some());
        assert!(find_cue("mustard", "must").is_none());
        assert_eq!(
            find_cue("Retry due to flaky network", "due to"),
            Some((6, 12))
        );
    }

    #[test]
    fn slug_limits_words() {
        assert_eq!(slugify("Payment Validation", 6), "payment-validation");
        assert_eq!(slugify("a b c d e", 3), "a-b-c");
    }
}

//! Text-level features: tokenization, negation and swear-word lexicons,
//! surface statistics and bag-of-words vocabularies.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::thread::Tweet;

/// Lowercased whitespace-separated tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Strip leading/trailing ASCII punctuation; used for lexicon matching only,
/// so that "don't," matches "don't".
pub fn lexicon_form(token: &str) -> &str {
    token.trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'').trim_matches('\'')
}

/// Negation cue words.
pub const NEGATION_WORDS: [&str; 19] = [
    "not",
    "no",
    "nobody",
    "nothing",
    "none",
    "never",
    "neither",
    "nor",
    "nowhere",
    "hardly",
    "scarcely",
    "barely",
    "don't",
    "isn't",
    "wasn't",
    "shouldn't",
    "wouldn't",
    "couldn't",
    "doesn't",
];

/// Count case-insensitive token matches against the negation word list.
pub fn negation_count(text: &str) -> usize {
    tokenize(text)
        .iter()
        .filter(|t| NEGATION_WORDS.contains(&lexicon_form(t)))
        .count()
}

/// A swear-word list loaded from a one-word-per-line resource.
#[derive(Debug, Clone)]
pub struct SwearLexicon {
    words: BTreeSet<String>,
}

impl SwearLexicon {
    pub fn from_lines(lines: &str) -> Self {
        let words = lines
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        SwearLexicon { words }
    }

    /// The bundled 458-word list.
    pub fn bundled() -> Self {
        Self::from_lines(include_str!("../../data/bad_words.txt"))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// Count case-insensitive token matches against the swear-word list.
pub fn swear_count(text: &str, lexicon: &SwearLexicon) -> usize {
    tokenize(text)
        .iter()
        .filter(|t| lexicon.contains(lexicon_form(t)))
        .count()
}

/// Per-tag occurrence counts over a fixed ordered tagset. Tweets without POS
/// tags yield the all-zero vector; tags outside the tagset are ignored.
pub fn pos_counts(tweet: &Tweet, tagset: &[String]) -> Vec<f64> {
    let mut counts = alloc::vec![0.0; tagset.len()];
    if let Some(tags) = &tweet.pos_tags {
        let index: BTreeMap<&str, usize> = tagset
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        for tag in tags {
            if let Some(&i) = index.get(tag.as_str()) {
                counts[i] += 1.0;
            }
        }
    }
    counts
}

/// Surface statistics of a tweet's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceFeatures {
    /// Length in characters.
    pub length: usize,
    /// Number of whitespace-separated tokens.
    pub word_count: usize,
    pub has_question: bool,
    pub has_exclamation: bool,
    pub has_url: bool,
}

pub fn local_surface_features(text: &str) -> SurfaceFeatures {
    let lower = text.to_lowercase();
    SurfaceFeatures {
        length: text.chars().count(),
        word_count: text.split_whitespace().count(),
        has_question: text.contains('?'),
        has_exclamation: text.contains('!'),
        has_url: lower.contains("http://") || lower.contains("https://"),
    }
}

/// An ordered word list with a reverse index. Built from training folds only.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Deduplicate and sort lexicographically for a deterministic order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts
            .into_iter()
            .flat_map(|t| tokenize(t))
            .collect();
        Self::from_words(set.into_iter().collect())
    }

    /// Keep the given order (entries must be unique).
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Vocabulary::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.words
    }
}

/// Sparse per-word counts over the vocabulary; out-of-vocabulary tokens are
/// dropped.
pub fn bag_of_words(text: &str, vocab: &Vocabulary) -> Vec<(usize, u32)> {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(i) = vocab.index_of(&token) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    counts.into_iter().collect()
}

/// Bag-of-words counts plus the posting timestamp.
pub fn hawkes_text_features(tweet: &Tweet, vocab: &Vocabulary) -> (Vec<(usize, u32)>, i64) {
    (bag_of_words(&tweet.text, vocab), tweet.timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thread::fixtures::tweet;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn negation_list_has_nineteen_entries() {
        let set: BTreeSet<&str> = NEGATION_WORDS.iter().copied().collect();
        assert_eq!(set.len(), 19);
    }

    #[test]
    fn negation_examples() {
        assert_eq!(negation_count("no, that's definitely false"), 1);
        assert_eq!(
            negation_count("I don't believe there are soldiers guarding this area right now."),
            1
        );
        assert_eq!(negation_count("yes, you're right"), 0);
        assert_eq!(negation_count("Not now, NOT ever, nobody!"), 3);
    }

    #[test]
    fn bundled_swear_list_has_documented_count() {
        let lex = SwearLexicon::bundled();
        assert_eq!(lex.len(), 458);
    }

    #[test]
    fn swear_examples() {
        let lex = SwearLexicon::bundled();
        assert_eq!(swear_count("ok, thanks.", &lex), 0);
        assert_eq!(swear_count("this is crap", &lex), 1);
        assert_eq!(swear_count("crap, CRAP!", &lex), 2);
        assert_eq!(swear_count("", &lex), 0);
    }

    #[test]
    fn pos_count_examples() {
        let tagset = vec!["N".to_string(), "V".to_string(), "A".to_string()];
        let mut tw = tweet("a", None, "u", "x", 0, None);
        tw.pos_tags = Some(vec!["N".into(), "V".into(), "N".into()]);
        assert_eq!(pos_counts(&tw, &tagset), vec![2.0, 1.0, 0.0]);

        tw.pos_tags = None;
        assert_eq!(pos_counts(&tw, &tagset), vec![0.0, 0.0, 0.0]);

        tw.pos_tags = Some(vec!["N".into(), "X".into()]);
        assert_eq!(pos_counts(&tw, &tagset), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn surface_examples() {
        let s = local_surface_features("ok, thanks.");
        assert_eq!(s.length, 11);
        assert_eq!(s.word_count, 2);
        assert!(!s.has_question && !s.has_exclamation && !s.has_url);

        let s = local_surface_features("Really?!");
        assert!(s.has_question && s.has_exclamation);

        let s = local_surface_features("");
        assert_eq!(s.length, 0);
        assert_eq!(s.word_count, 0);
        assert!(!s.has_question && !s.has_exclamation && !s.has_url);

        assert!(local_surface_features("see https://t.co/abc").has_url);
    }

    #[test]
    fn bag_of_words_examples() {
        let vocab = Vocabulary::from_words(vec!["hoax".into(), "down".into(), "up".into()]);
        assert_eq!(
            bag_of_words("hoax hoax down", &vocab),
            vec![(0, 2), (1, 1)]
        );
        assert_eq!(bag_of_words("unseen words only", &vocab), vec![]);

        let tw = tweet("a", None, "u", "hoax", 1414000000, None);
        let (counts, ts) = hawkes_text_features(&tw, &vocab);
        assert_eq!(counts, vec![(0, 1)]);
        assert_eq!(ts, 1414000000);
    }

    #[test]
    fn vocabulary_is_sorted_and_deduplicated() {
        let v = Vocabulary::from_texts(["b a", "a c"]);
        assert_eq!(v.words(), ["a", "b", "c"]);
        assert_eq!(v.index_of("c"), Some(2));
        assert_eq!(v.index_of("zz"), None);
    }

    #[test]
    fn lexicon_form_strips_edges_only() {
        assert_eq!(lexicon_form("don't,"), "don't");
        assert_eq!(lexicon_form("\"no\""), "no");
        assert_eq!(lexicon_form("o'clock"), "o'clock");
    }
}

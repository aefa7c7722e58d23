//! Word-embedding lookups and averaged tweet representations.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use super::text::tokenize;
use crate::numeric;

/// Read-only word-vector source. Out-of-vocabulary lookups return `None`,
/// never a fabricated vector. Implementations must support concurrent
/// lookups.
pub trait EmbeddingProvider: Sync {
    /// Width of every returned vector.
    fn dimension(&self) -> usize;

    /// The vector for `word`, if known.
    fn vector(&self, word: &str) -> Option<&[f64]>;

    /// Fraction of lookups so far that were found (1.0 before any lookup).
    fn coverage(&self) -> f64 {
        1.0
    }
}

/// In-memory embedding table with hit-rate tracking.
#[derive(Debug, Default)]
pub struct MapEmbeddings {
    dim: usize,
    map: BTreeMap<String, Vec<f64>>,
    queries: AtomicU64,
    hits: AtomicU64,
}

impl MapEmbeddings {
    pub fn new(dim: usize) -> Self {
        MapEmbeddings {
            dim,
            map: BTreeMap::new(),
            queries: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        }
    }

    /// Insert a word vector; rejects wrong widths and non-finite entries.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> bool {
        if vector.len() != self.dim || !numeric::all_finite(&vector) {
            return false;
        }
        self.map.insert(word.into(), vector);
        true
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl EmbeddingProvider for MapEmbeddings {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn vector(&self, word: &str) -> Option<&[f64]> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let v = self.map.get(word);
        if v.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        v.map(|v| v.as_slice())
    }

    fn coverage(&self) -> f64 {
        let q = self.queries.load(Ordering::Relaxed);
        if q == 0 {
            1.0
        } else {
            self.hits.load(Ordering::Relaxed) as f64 / q as f64
        }
    }
}

/// Arithmetic mean of the vectors of in-vocabulary tokens. Empty or fully
/// out-of-vocabulary text yields the zero vector.
pub fn embed_tweet(text: &str, provider: &dyn EmbeddingProvider) -> Vec<f64> {
    let mut acc = vec![0.0; provider.dimension()];
    let mut found = 0usize;
    for token in tokenize(text) {
        if let Some(v) = provider.vector(&token) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            found += 1;
        }
    }
    if found > 0 {
        for a in acc.iter_mut() {
            *a /= found as f64;
        }
    }
    acc
}

/// Cosine similarity; defined as 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = numeric::norm2(a);
    let nb = numeric::norm2(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        numeric::dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_provider() -> MapEmbeddings {
        let mut p = MapEmbeddings::new(2);
        p.insert("right", vec![1.0, 0.0]);
        p.insert("left", vec![0.0, 1.0]);
        p.insert("both", vec![1.0, 1.0]);
        p
    }

    #[test]
    fn mean_of_one_word_is_its_vector() {
        let p = toy_provider();
        assert_eq!(embed_tweet("right", &p), vec![1.0, 0.0]);
    }

    #[test]
    fn mean_of_two_orthogonal_words() {
        let p = toy_provider();
        assert_eq!(embed_tweet("right left", &p), vec![0.5, 0.5]);
    }

    #[test]
    fn empty_and_oov_text_embed_to_zero() {
        let p = toy_provider();
        assert_eq!(embed_tweet("", &p), vec![0.0, 0.0]);
        assert_eq!(embed_tweet("unknown words", &p), vec![0.0, 0.0]);
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_relative_eq!(cosine(&[1.0, 1.0], &[1.0, 1.0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coverage_tracks_hit_rate() {
        let p = toy_provider();
        assert_eq!(p.coverage(), 1.0);
        let _ = embed_tweet("right wrong", &p);
        assert_relative_eq!(p.coverage(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn insert_rejects_bad_vectors() {
        let mut p = MapEmbeddings::new(2);
        assert!(!p.insert("w", vec![1.0]));
        assert!(!p.insert("w", vec![f64::NAN, 0.0]));
        assert!(p.insert("w", vec![1.0, 2.0]));
    }

    proptest! {
        /// Convexity: the norm of a mean never exceeds the largest word norm.
        #[test]
        fn mean_norm_bounded_by_max_word_norm(
            vecs in proptest::collection::vec(
                proptest::array::uniform3(-10.0f64..10.0), 1..6)
        ) {
            let mut p = MapEmbeddings::new(3);
            let mut text = alloc::string::String::new();
            let mut max_norm = 0.0f64;
            for (i, v) in vecs.iter().enumerate() {
                let w = alloc::format!("w{i}");
                p.insert(w.clone(), v.to_vec());
                text.push_str(&w);
                text.push(' ');
                max_norm = crate::numeric::max(max_norm, crate::numeric::norm2(v));
            }
            let norm = crate::numeric::norm2(&embed_tweet(&text, &p));
            prop_assert!(norm <= max_norm + 1e-12);
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::text::alnum_words;

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_SEED: u64 = 0x5eed_c1ea_2b3c_0001;

/// Dense embedding; unit L2 norm unless every component is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalize `values` to unit length. All-zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self { values }
    }

    /// Wrap values as-is.
    pub fn raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> EmbeddingVector;
    fn dimension(&self) -> usize;
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
];

pub fn is_stopword(word: &str) -> bool {
    (word.chars().count() == 1 && word.chars().all(char::is_alphabetic))
        || STOPWORDS.binary_search(&word).is_ok()
}

/// Lowercase alphanumeric words with stopwords removed.
pub fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    alnum_words(text).filter(|w| !is_stopword(w))
}

fn fnv1a64(seed: u64, parts: &[&[u8]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(PRIME);
        }
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

/// Feature-hashed bag of unigrams and bigrams over content words,
/// term-frequency weighted and L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, DEFAULT_SEED)
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket index of every unigram and bigram feature of `text`, in order.
    pub fn feature_buckets(&self, text: &str) -> Vec<usize> {
        let words: Vec<String> = content_words(text).collect();
        let dim = self.dimension as u64;
        let mut out = Vec::with_capacity(words.len() * 2);
        for (i, w) in words.iter().enumerate() {
            out.push((fnv1a64(self.seed, &[w.as_bytes()]) % dim) as usize);
            if i > 0 {
                let prev = words[i - 1].as_bytes();
                out.push((fnv1a64(self.seed, &[prev, w.as_bytes()]) % dim) as usize);
            }
        }
        out
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dimension];
        for b in self.feature_buckets(text) {
            v[b] += 1.0;
        }
        EmbeddingVector::normalized(v)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

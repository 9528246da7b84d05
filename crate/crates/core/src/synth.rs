//! Seeded synthetic corpora for testing and demos.
//!
//! Two generators:
//!
//! * [`disjoint_alphabet_corpus`]: author `i` writes i.i.d. uniform characters
//!   from its own alphabet of `alphabet_size` CJK code points starting at
//!   `U+4E00 + i * alphabet_size`. No two authors share a character, and none
//!   of the characters occur in the prompt templates.
//! * [`markov_style_corpus`]: all authors write over the same alphabet
//!   (`"abcdefghijklmnop "`, sixteen letters and a space) with a first-order
//!   Markov chain (each character depends on the previous one). Author `i`'s
//!   transition row for previous character `c` is
//!   `(1 - style_weight) * shared[c] + style_weight * own_i[c]`, where `shared`
//!   and every `own_i` row are drawn as `u^sharpness` (u uniform in (0, 1))
//!   and normalized. Style weight 0 makes authors indistinguishable; 1 makes
//!   them fully independent sources.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;

pub const MARKOV_ALPHABET: &str = "abcdefghijklmnop ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointConfig {
    pub num_authors: usize,
    pub docs_per_author: usize,
    pub doc_chars: usize,
    pub alphabet_size: usize,
    pub seed: u64,
}

impl Default for DisjointConfig {
    fn default() -> Self {
        DisjointConfig {
            num_authors: 10,
            docs_per_author: 3,
            doc_chars: 400,
            alphabet_size: 4,
            seed: 1,
        }
    }
}

pub fn author_alphabet(author: usize, alphabet_size: usize) -> Vec<char> {
    (0..alphabet_size)
        .map(|j| char::from_u32(0x4E00 + (author * alphabet_size + j) as u32).expect("CJK block code point"))
        .collect()
}

pub fn disjoint_alphabet_corpus(cfg: &DisjointConfig) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut docs = Vec::with_capacity(cfg.num_authors * cfg.docs_per_author);
    for a in 0..cfg.num_authors {
        let alphabet = author_alphabet(a, cfg.alphabet_size);
        for d in 0..cfg.docs_per_author {
            let text: String = (0..cfg.doc_chars)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            docs.push(Document::new(format!("disjoint-{a:02}-{d}"), format!("author{a:02}"), text));
        }
    }
    docs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    pub num_authors: usize,
    pub docs_per_author: usize,
    pub doc_chars: usize,
    /// Share of each transition row that is author-specific, in [0, 1].
    pub style_weight: f64,
    /// Exponent applied to uniform draws when building rows; larger is peakier.
    pub sharpness: f64,
    pub seed: u64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig {
            num_authors: 10,
            docs_per_author: 3,
            doc_chars: 300,
            style_weight: 0.3,
            sharpness: 3.0,
            seed: 7,
        }
    }
}

fn random_row<R: Rng>(rng: &mut R, len: usize, sharpness: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen::<f64>().powf(sharpness) + 1e-6).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Transition matrices, one per author, over [`MARKOV_ALPHABET`].
pub fn markov_sources(cfg: &MarkovConfig) -> Vec<Vec<Vec<f64>>> {
    let n = MARKOV_ALPHABET.chars().count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shared: Vec<Vec<f64>> = (0..n).map(|_| random_row(&mut rng, n, cfg.sharpness)).collect();
    (0..cfg.num_authors)
        .map(|_| {
            shared
                .iter()
                .map(|row| {
                    let own = random_row(&mut rng, n, cfg.sharpness);
                    row.iter()
                        .zip(&own)
                        .map(|(s, o)| (1.0 - cfg.style_weight) * s + cfg.style_weight * o)
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn markov_style_corpus(cfg: &MarkovConfig) -> Vec<Document> {
    let alphabet: Vec<char> = MARKOV_ALPHABET.chars().collect();
    let sources = markov_sources(cfg);
    // separate stream for sampling so source construction is independent of doc sizes
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005E_ED0F_D0C5);
    let mut docs = Vec::with_capacity(cfg.num_authors * cfg.docs_per_author);
    for (a, matrix) in sources.iter().enumerate() {
        let rows: Vec<WeightedIndex<f64>> = matrix
            .iter()
            .map(|r| WeightedIndex::new(r).expect("rows are positive"))
            .collect();
        for d in 0..cfg.docs_per_author {
            let mut prev = rng.gen_range(0..alphabet.len());
            let mut text = String::with_capacity(cfg.doc_chars);
            for _ in 0..cfg.doc_chars {
                text.push(alphabet[prev]);
                prev = rows[prev].sample(&mut rng);
            }
            docs.push(Document::new(format!("markov-{a:02}-{d}"), format!("author{a:02}"), text));
        }
    }
    docs
}

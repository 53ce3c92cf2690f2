//! Corpus with two independent latent factors for intention steering
//! experiments.
//!
//! Every document mentions one *topic* (two topic words) and one *intent*
//! (one cue word) among filler words. Topic words have large embeddings, so
//! unsupervised clustering of averaged vectors groups by topic; the corpus is
//! labeled by intent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::EmbeddingTable;

use super::corpus::{Corpus, CorpusFormat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub intents: usize,
    pub docs_per_cell: usize,
    /// Distinct words per topic and per intent.
    pub words_per_value: usize,
    pub fillers: usize,
    pub dim: usize,
    pub topic_scale: f64,
    pub intent_scale: f64,
    /// Half-width of the uniform jitter added to every word vector.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            topics: 4,
            intents: 4,
            docs_per_cell: 40,
            words_per_value: 5,
            fillers: 10,
            dim: 16,
            topic_scale: 3.0,
            intent_scale: 1.0,
            noise: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    /// Documents labeled by intent.
    pub corpus: Corpus,
    /// Topic of every document.
    pub topics: Vec<usize>,
    pub table: EmbeddingTable,
}

fn topic_word(i: usize, w: usize) -> String {
    format!("t{i}w{w}")
}

fn intent_word(j: usize, w: usize) -> String {
    format!("q{j}w{w}")
}

fn filler_word(w: usize) -> String {
    format!("f{w}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.topics == 0 || spec.intents < 2 || spec.docs_per_cell == 0 || spec.words_per_value == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs topics, two intents and documents".into()));
    }
    if spec.dim < spec.topics + spec.intents {
        return Err(Error::InvalidArgument(format!(
            "dim {} cannot hold {} orthogonal factor directions",
            spec.dim,
            spec.topics + spec.intents
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..spec.dim)
            .map(|_| if spec.noise > 0.0 { rng.random_range(-spec.noise..spec.noise) } else { 0.0 })
            .collect()
    };

    let mut rows = Vec::new();
    for i in 0..spec.topics {
        for w in 0..spec.words_per_value {
            let mut v = jitter(&mut rng);
            v[i] += spec.topic_scale;
            rows.push((topic_word(i, w), v));
        }
    }
    for j in 0..spec.intents {
        for w in 0..spec.words_per_value {
            let mut v = jitter(&mut rng);
            v[spec.topics + j] += spec.intent_scale;
            rows.push((intent_word(j, w), v));
        }
    }
    for w in 0..spec.fillers {
        rows.push((filler_word(w), jitter(&mut rng)));
    }
    let table = EmbeddingTable::from_rows(rows, spec.dim, spec.seed)?;

    let mut docs: Vec<(usize, usize, String)> = Vec::new();
    for i in 0..spec.topics {
        for j in 0..spec.intents {
            for _ in 0..spec.docs_per_cell {
                let pick = |rng: &mut ChaCha8Rng| rng.random_range(0..spec.words_per_value);
                let mut words = vec![
                    intent_word(j, pick(&mut rng)),
                    topic_word(i, pick(&mut rng)),
                    topic_word(i, pick(&mut rng)),
                ];
                for _ in 0..2.min(spec.fillers) {
                    words.push(filler_word(rng.random_range(0..spec.fillers)));
                }
                words.shuffle(&mut rng);
                docs.push((i, j, words.join(" ")));
            }
        }
    }
    docs.shuffle(&mut rng);
    let topics = docs.iter().map(|d| d.0).collect();
    let pairs = docs.iter().map(|(_, j, text)| (format!("intent{j}"), text.as_str()));
    let corpus = Corpus::from_pairs(pairs, "synthetic", CorpusFormat::Tsv)?;
    Ok(Synthetic { corpus, topics, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SyntheticSpec {
            docs_per_cell: 3,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a.corpus.len(), 4 * 4 * 3);
        assert_eq!(a.corpus.num_labels(), 4);
        assert_eq!(a.topics.len(), a.corpus.len());
        assert_eq!(a.table.len(), 4 * 5 * 2 + 10);
        let b = generate(&spec).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.table, b.table);
        for d in &a.corpus.documents {
            assert_eq!(d.tokens.len(), 5);
            assert!(d.tokens.iter().all(|t| a.table.index_of(t).is_some()));
        }
    }

    #[test]
    fn factors_are_independent() {
        let s = generate(&SyntheticSpec::default()).unwrap();
        let labels = s.corpus.labels();
        let mut cells = vec![vec![0usize; 4]; 4];
        for (t, y) in s.topics.iter().zip(&labels) {
            cells[*t][*y] += 1;
        }
        assert!(cells.iter().flatten().all(|&c| c == 40));
    }

    #[test]
    fn rejects_cramped_dimension() {
        let spec = SyntheticSpec {
            dim: 5,
            ..SyntheticSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}

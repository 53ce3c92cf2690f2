use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::corpus::Corpus;

/// Random draws tried before falling back to a stratified pick.
pub const SPLIT_RETRIES: usize = 100;

/// Disjoint labeled / unlabeled document indices, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl Split {
    /// `(document, label)` pairs for the labeled part.
    pub fn supervision(&self, corpus: &Corpus) -> Vec<(usize, usize)> {
        self.labeled
            .iter()
            .map(|&i| (i, corpus.documents[i].label.expect("labeled corpus")))
            .collect()
    }
}

/// Draws `round(ratio * N)` labeled documents so that every label appears
/// among them.
///
/// Up to [`SPLIT_RETRIES`] uniform draws are tried; if none covers all labels
/// the draw is completed from one document per label first.
pub fn split_labeled(corpus: &Corpus, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let labels = corpus.labels();
    let n = labels.len();
    let m = (ratio * n as f64).round() as usize;
    let classes = corpus.num_labels();
    if m < classes {
        return Err(Error::RatioTooSmall { ratio, labels: classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let covers = |picked: &[usize]| picked.iter().map(|&i| labels[i]).collect::<BTreeSet<_>>().len() == classes;

    let mut chosen = None;
    for _ in 0..SPLIT_RETRIES {
        order.shuffle(&mut rng);
        if covers(&order[..m]) {
            chosen = Some(order[..m].to_vec());
            break;
        }
    }
    let chosen = chosen.unwrap_or_else(|| {
        let mut seen = vec![false; classes];
        let mut picked: Vec<usize> = Vec::with_capacity(m);
        for &i in &order {
            if !seen[labels[i]] {
                seen[labels[i]] = true;
                picked.push(i);
            }
        }
        let first: BTreeSet<usize> = picked.iter().copied().collect();
        picked.extend(order.iter().copied().filter(|i| !first.contains(i)).take(m - classes));
        picked
    });

    let mut is_labeled = vec![false; n];
    for &i in &chosen {
        is_labeled[i] = true;
    }
    let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_labeled[i]);
    Ok(Split { labeled, unlabeled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::CorpusFormat;

    fn corpus(sizes: &[usize]) -> Corpus {
        let mut text = String::new();
        for (label, &count) in sizes.iter().enumerate() {
            for i in 0..count {
                text.push_str(&format!("L{label}\tdocument number {i}\n"));
            }
        }
        Corpus::parse(&text, CorpusFormat::Tsv, "mem").unwrap()
    }

    #[test]
    fn sizes_follow_rounding() {
        let c = corpus(&[1000, 1000, 1000, 1000, 1000, 953]);
        let s = split_labeled(&c, 0.1, 0).unwrap();
        assert_eq!(s.labeled.len(), 595);
        assert_eq!(s.labeled.len() + s.unlabeled.len(), 5953);
        let c = corpus(&[1000; 4]);
        assert_eq!(split_labeled(&c, 0.1, 0).unwrap().labeled.len(), 400);
    }

    #[test]
    fn deterministic_and_disjoint() {
        let c = corpus(&[40, 30, 30]);
        let a = split_labeled(&c, 0.2, 7).unwrap();
        assert_eq!(a, split_labeled(&c, 0.2, 7).unwrap());
        assert_ne!(a, split_labeled(&c, 0.2, 8).unwrap());
        let all: BTreeSet<usize> = a.labeled.iter().chain(&a.unlabeled).copied().collect();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn rare_label_forces_stratification() {
        // One document of label 1 among 500; 5 labeled slots rarely hit it.
        let c = corpus(&[499, 1]);
        for seed in 0..20 {
            let s = split_labeled(&c, 0.01, seed).unwrap();
            assert_eq!(s.labeled.len(), 5);
            assert!(s.supervision(&c).iter().any(|&(_, y)| y == 1));
        }
    }

    #[test]
    fn ratio_errors() {
        let c = corpus(&[5, 5, 5]);
        assert!(matches!(split_labeled(&c, 0.1, 0), Err(Error::RatioTooSmall { .. })));
        assert!(split_labeled(&c, 0.0, 0).is_err());
        assert!(split_labeled(&c, 1.0, 0).is_err());
    }
}

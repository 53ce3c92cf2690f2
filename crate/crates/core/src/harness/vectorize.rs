use std::collections::BTreeMap;

use ndarray::Array2;

use crate::encoders::encode_average;
use crate::error::Result;
use crate::text::{Document, EmbeddingTable};

/// Sorted vocabulary of every token in `docs`.
pub fn vocabulary(docs: &[Document]) -> BTreeMap<String, usize> {
    let mut words: BTreeMap<String, usize> = docs
        .iter()
        .flat_map(|d| d.tokens.iter().map(|t| (t.clone(), 0)))
        .collect();
    for (i, v) in words.values_mut().enumerate() {
        *v = i;
    }
    words
}

/// Raw term counts, one row per document, columns in vocabulary order.
pub fn vectorize_bow(docs: &[Document]) -> Array2<f64> {
    let vocab = vocabulary(docs);
    let mut x = Array2::<f64>::zeros((docs.len(), vocab.len()));
    for (n, d) in docs.iter().enumerate() {
        for t in &d.tokens {
            x[[n, vocab[t]]] += 1.0;
        }
    }
    x
}

/// Raw term count times `ln(N / df)`.
pub fn vectorize_tfidf(docs: &[Document]) -> Array2<f64> {
    let mut x = vectorize_bow(docs);
    let n = docs.len() as f64;
    for mut col in x.columns_mut() {
        let df = col.iter().filter(|&&c| c > 0.0).count() as f64;
        let idf = (n / df).ln();
        col.mapv_inplace(|c| c * idf);
    }
    x
}

/// Mean word vector of every document.
pub fn vectorize_average(table: &EmbeddingTable, docs: &[Document]) -> Result<Array2<f64>> {
    let mut x = Array2::<f64>::zeros((docs.len(), table.dim()));
    for (n, d) in docs.iter().enumerate() {
        let v = encode_average(table, &d.tokens)?;
        x.row_mut(n).assign(&ndarray::Array1::from(v));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(i, *t, None).unwrap())
            .collect()
    }

    #[test]
    fn bow_counts() {
        let x = vectorize_bow(&docs(&["a a b"]));
        assert_eq!(x, ndarray::array![[2.0, 1.0]]);
    }

    #[test]
    fn ubiquitous_term_has_zero_idf() {
        let x = vectorize_tfidf(&docs(&["a b", "a c", "a"]));
        assert!(x.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tfidf_hand_values() {
        // Vocabulary a, b, c. df: a=2, b=1, c=2.
        let x = vectorize_tfidf(&docs(&["a a b", "c", "a c"]));
        let l3 = 3.0_f64.ln();
        let l15 = 1.5_f64.ln();
        let expected = ndarray::array![[2.0 * l15, l3, 0.0], [0.0, 0.0, l15], [l15, 0.0, l15]];
        for (a, b) in x.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn average_vectors() {
        let table = EmbeddingTable::from_rows(
            vec![("a".into(), vec![1.0, 0.0]), ("b".into(), vec![0.0, 2.0])],
            2,
            0,
        )
        .unwrap();
        let x = vectorize_average(&table, &docs(&["a b", "b"])).unwrap();
        assert_eq!(x, ndarray::array![[0.5, 1.0], [0.0, 2.0]]);
    }
}

//! Clustering evaluation: contingency tables, adjusted mutual information and
//! matched accuracy.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian;
use crate::error::{Error, Result};

/// Counts `[label][cluster]`; rows follow ascending label id, columns
/// ascending cluster id. Ids that never occur get no row or column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub labels: Vec<usize>,
    pub clusters: Vec<usize>,
    pub counts: Array2<usize>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

impl Contingency {
    pub fn new(labels: &[usize], clusters: &[usize]) -> Result<Self> {
        if labels.len() != clusters.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels but {} cluster ids",
                labels.len(),
                clusters.len()
            )));
        }
        let rows: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let cols: Vec<usize> = clusters.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let mut counts = Array2::<usize>::zeros((rows.len(), cols.len()));
        for (y, c) in labels.iter().zip(clusters) {
            let i = rows.binary_search(y).expect("collected");
            let j = cols.binary_search(c).expect("collected");
            counts[[i, j]] += 1;
        }
        let row_sums = counts.rows().into_iter().map(|r| r.sum()).collect();
        let col_sums = counts.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Contingency {
            labels: rows,
            clusters: cols,
            counts,
            row_sums,
            col_sums,
            total: labels.len(),
        })
    }

    /// Mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut mi = 0.0;
        for ((i, j), &c) in self.counts.indexed_iter() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let a = self.row_sums[i] as f64;
            let b = self.col_sums[j] as f64;
            mi += c / n * (n * c / (a * b)).ln();
        }
        mi
    }

    pub fn label_entropy(&self) -> f64 {
        entropy(&self.row_sums, self.total)
    }

    pub fn cluster_entropy(&self) -> f64 {
        entropy(&self.col_sums, self.total)
    }

    /// Expected mutual information under the hypergeometric model with the
    /// observed marginals held fixed.
    pub fn expected_mutual_information(&self) -> f64 {
        let n = self.total;
        let lf = ln_factorials(n);
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.row_sums {
            for &b in &self.col_sums {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
                for k in lo..=hi {
                    let log_p = fixed - lf[k] - lf[a - k] - lf[b - k] - lf[n + k - a - b];
                    let kf = k as f64;
                    emi += kf / nf * (nf * kf / (a as f64 * b as f64)).ln() * log_p.exp();
                }
            }
        }
        emi
    }

    fn is_bijective(&self) -> bool {
        self.labels.len() == self.clusters.len()
            && self.counts.rows().into_iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

fn entropy(sums: &[usize], total: usize) -> f64 {
    let n = total as f64;
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Adjusted mutual information, normalized by the arithmetic mean of the two
/// entropies.
///
/// If both partitions are a single block the result is 1; if exactly one is,
/// it is 0. When the normalizer vanishes otherwise, identical partitions score
/// 1 and anything else 0.
pub fn ami(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let table = Contingency::new(labels, clusters)?;
    if table.total < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: table.total,
        });
    }
    let trivial_u = table.labels.len() == 1;
    let trivial_v = table.clusters.len() == 1;
    if trivial_u && trivial_v {
        return Ok(1.0);
    }
    if trivial_u || trivial_v {
        return Ok(0.0);
    }
    let mi = table.mutual_information();
    let emi = table.expected_mutual_information();
    let mean_h = 0.5 * (table.label_entropy() + table.cluster_entropy());
    let denom = mean_h - emi;
    if denom.abs() < 1e-15 {
        return Ok(if table.is_bijective() { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// Fraction of points correct under the best one-to-one matching between
/// clusters and labels. Unmatched clusters or labels count as wrong.
pub fn acc(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let table = Contingency::new(labels, clusters)?;
    if table.total == 0 {
        return Err(Error::InsufficientPoints { needed: 1, found: 0 });
    }
    Ok(matched_count(&table.counts) as f64 / table.total as f64)
}

/// Largest total count over one-to-one row/column matchings.
fn matched_count(counts: &Array2<usize>) -> usize {
    let oriented = if counts.nrows() <= counts.ncols() {
        counts.clone()
    } else {
        counts.t().to_owned()
    };
    let max = oriented.iter().copied().max().unwrap_or(0);
    let cost = oriented.mapv(|c| (max - c) as f64);
    let matched = hungarian(&cost).expect("finite cost with rows <= cols");
    matched
        .rows
        .iter()
        .enumerate()
        .map(|(i, &j)| oriented[[i, j]])
        .sum()
}

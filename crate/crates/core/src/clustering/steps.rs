use ndarray::Array2;
use rand::Rng;

use crate::assignment::{map_labels, LabelMap};
use crate::error::{Error, Result};

use super::config::WeightMode;
use super::objective::{check_shapes, compute_weights, mapped_clusters, sq_dist};

/// Denominators at or below this fall back to the plain cluster mean.
pub const DENOMINATOR_EPS: f64 = 1e-9;

/// k-means++ seeding: the first centroid is a uniformly drawn point, each
/// further one is drawn with probability proportional to its squared distance
/// to the nearest centroid chosen so far.
pub fn kmeanspp_init<R: Rng>(x: &Array2<f64>, k: usize, rng: &mut R) -> Result<Array2<f64>> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InsufficientPoints { needed: k, found: n });
    }
    let mut mu = Array2::<f64>::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    mu.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|row| sq_dist(row, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InsufficientPoints { needed: k, found: c });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total has a positive entry");
        mu.row_mut(c).assign(&x.row(pick));
        for (i, row) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, x.row(pick)));
        }
    }
    Ok(mu)
}

/// Index of the nearest centroid for every point; ties go to the smaller id.
pub fn nearest(x: &Array2<f64>, mu: &Array2<f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in mu.rows().into_iter().enumerate() {
                let d = sq_dist(row, c);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Nearest-centroid assignment plus the label map recomputed on the labeled
/// points.
pub fn assign_cluster(
    x: &Array2<f64>,
    mu: &Array2<f64>,
    labeled: &[(usize, usize)],
) -> Result<(Vec<usize>, LabelMap)> {
    if x.ncols() != mu.ncols() {
        return Err(Error::shape("assign_cluster", format!("dim {} vs {}", x.ncols(), mu.ncols())));
    }
    if !mu.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("assign_cluster"));
    }
    let r = nearest(x, mu);
    let (clusters, labels): (Vec<usize>, Vec<usize>) = labeled.iter().map(|&(n, y)| (r[n], y)).unzip();
    let g = map_labels(&clusters, &labels, mu.nrows())?;
    Ok((r, g))
}

/// Weighted centroid update with hinge indicators frozen at `mu_prev`.
///
/// A cluster whose denominator is at most [`DENOMINATOR_EPS`] takes the mean
/// of its assigned points instead. A cluster that also has no points is
/// re-seeded at the point farthest from its own updated centroid, ties to the
/// lowest index, never reusing a point for two clusters.
#[allow(clippy::too_many_arguments)]
pub fn estimate_centroid(
    x: &Array2<f64>,
    r: &[usize],
    labeled: &[(usize, usize)],
    g: &LabelMap,
    mu_prev: &Array2<f64>,
    alpha: f64,
    margin: f64,
    mode: WeightMode,
) -> Result<Array2<f64>> {
    check_shapes(x, r, mu_prev)?;
    let (k, p) = mu_prev.dim();
    let mut num = Array2::<f64>::zeros((k, p));
    let mut den = vec![0.0; k];
    let mut sums = Array2::<f64>::zeros((k, p));
    let mut counts = vec![0usize; k];
    for (row, &c) in x.rows().into_iter().zip(r) {
        num.row_mut(c).scaled_add(alpha, &row);
        den[c] += alpha;
        sums.row_mut(c).scaled_add(1.0, &row);
        counts[c] += 1;
    }
    for (n, gn) in mapped_clusters(labeled, g)? {
        let f = x.row(n);
        for (j, w) in compute_weights(f, gn, mu_prev, alpha, margin, mode).into_iter().enumerate() {
            if w != 0.0 {
                num.row_mut(j).scaled_add(w, &f);
                den[j] += w;
            }
        }
    }

    let mut mu = Array2::<f64>::zeros((k, p));
    let mut empty = Vec::new();
    for j in 0..k {
        if den[j] > DENOMINATOR_EPS {
            mu.row_mut(j).assign(&(&num.row(j) / den[j]));
        } else if counts[j] > 0 {
            mu.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
        } else {
            empty.push(j);
        }
    }
    if !empty.is_empty() {
        let mut far: Vec<(f64, usize)> = x
            .rows()
            .into_iter()
            .zip(r)
            .enumerate()
            .map(|(n, (row, &c))| (sq_dist(row, mu.row(c)), n))
            .collect();
        // Largest distance first, then lowest index.
        far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (j, &(_, n)) in empty.iter().zip(&far) {
            mu.row_mut(*j).assign(&x.row(n));
        }
    }
    if !mu.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("estimate_centroid"));
    }
    Ok(mu)
}

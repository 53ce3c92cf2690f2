use ndarray::{Array2, ArrayView1};

use crate::assignment::LabelMap;
use crate::error::{Error, Result};

use super::config::WeightMode;

pub fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_shapes(x: &Array2<f64>, r: &[usize], mu: &Array2<f64>) -> Result<()> {
    if x.nrows() != r.len() {
        return Err(Error::shape("objective", format!("{} points but {} assignments", x.nrows(), r.len())));
    }
    if x.ncols() != mu.ncols() {
        return Err(Error::shape(
            "objective",
            format!("points have dim {} but centroids {}", x.ncols(), mu.ncols()),
        ));
    }
    if let Some(&k) = r.iter().find(|&&k| k >= mu.nrows()) {
        return Err(Error::shape("objective", format!("cluster {k} but only {} centroids", mu.nrows())));
    }
    Ok(())
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn objective_unsup(x: &Array2<f64>, r: &[usize], mu: &Array2<f64>) -> Result<f64> {
    check_shapes(x, r, mu)?;
    Ok(x.rows()
        .into_iter()
        .zip(r)
        .map(|(row, &k)| sq_dist(row, mu.row(k)))
        .sum())
}

/// Resolves `(document, label)` pairs to `(document, cluster)` through `g`.
pub fn mapped_clusters(labeled: &[(usize, usize)], g: &LabelMap) -> Result<Vec<(usize, usize)>> {
    labeled
        .iter()
        .map(|&(n, y)| g.cluster_of(y).map(|k| (n, k)).ok_or(Error::UnmappedLabel(y)))
        .collect()
}

/// Labeled part of the objective for one point mapped to cluster `g`:
/// `d_g + sum_{j != g} [l + d_g - d_j]_+`.
pub fn labeled_term(f: ArrayView1<f64>, g: usize, mu: &Array2<f64>, margin: f64) -> f64 {
    let dg = sq_dist(f, mu.row(g));
    let hinge: f64 = (0..mu.nrows())
        .filter(|&j| j != g)
        .map(|j| (margin + dg - sq_dist(f, mu.row(j))).max(0.0))
        .sum();
    dg + hinge
}

/// `alpha * J_unsup + (1 - alpha) * sum over labeled points of the hinge term`.
#[allow(clippy::too_many_arguments)]
pub fn objective_semi(
    x: &Array2<f64>,
    r: &[usize],
    mu: &Array2<f64>,
    labeled: &[(usize, usize)],
    g: &LabelMap,
    alpha: f64,
    margin: f64,
) -> Result<f64> {
    let unsup = objective_unsup(x, r, mu)?;
    let mapped = mapped_clusters(labeled, g)?;
    let sup: f64 = mapped
        .iter()
        .map(|&(n, k)| labeled_term(x.row(n), k, mu, margin))
        .sum();
    Ok(alpha * unsup + (1.0 - alpha) * sup)
}

/// Hinge indicators `l + d_g - d_j > 0` for every cluster `j`; always false
/// at `g`.
pub fn hinge_active(f: ArrayView1<f64>, g: usize, mu: &Array2<f64>, margin: f64) -> Vec<bool> {
    let dg = sq_dist(f, mu.row(g));
    (0..mu.nrows())
        .map(|j| j != g && margin + dg - sq_dist(f, mu.row(j)) > 0.0)
        .collect()
}

/// Weight of one labeled point on every centroid given frozen indicators.
pub fn weights_from_indicators(active: &[bool], g: usize, alpha: f64, mode: WeightMode) -> Vec<f64> {
    let s = 1.0 - alpha;
    let total = active.iter().filter(|&&a| a).count() as f64;
    let ind = |j: usize| if active[j] { 1.0 } else { 0.0 };
    (0..active.len())
        .map(|k| match mode {
            WeightMode::Derived if k == g => s * (1.0 + total),
            WeightMode::Derived => -s * ind(k),
            WeightMode::PaperLiteral if k == g => s * (1.0 - total),
            WeightMode::PaperLiteral => s * (ind(k) - (total - ind(k))),
        })
        .collect()
}

/// Weights `w_nk` of a labeled point `f` mapped to cluster `g`, with hinge
/// indicators evaluated at `mu_prev`.
pub fn compute_weights(
    f: ArrayView1<f64>,
    g: usize,
    mu_prev: &Array2<f64>,
    alpha: f64,
    margin: f64,
    mode: WeightMode,
) -> Vec<f64> {
    weights_from_indicators(&hinge_active(f, g, mu_prev, margin), g, alpha, mode)
}

/// Objective with hinge indicators held fixed:
/// `alpha * J_unsup + (1 - alpha) * sum_n [d_g + sum_j active_nj (l + d_g - d_j)]`.
///
/// `mapped` holds `(document, cluster)` pairs and `active` one indicator row
/// per pair.
#[allow(clippy::too_many_arguments)]
pub fn frozen_objective(
    x: &Array2<f64>,
    r: &[usize],
    mu: &Array2<f64>,
    mapped: &[(usize, usize)],
    active: &[Vec<bool>],
    alpha: f64,
    margin: f64,
) -> Result<f64> {
    let unsup = objective_unsup(x, r, mu)?;
    let mut sup = 0.0;
    for (&(n, g), act) in mapped.iter().zip(active) {
        let f = x.row(n);
        let dg = sq_dist(f, mu.row(g));
        sup += dg;
        for (j, &on) in act.iter().enumerate() {
            if on {
                sup += margin + dg - sq_dist(f, mu.row(j));
            }
        }
    }
    Ok(alpha * unsup + (1.0 - alpha) * sup)
}

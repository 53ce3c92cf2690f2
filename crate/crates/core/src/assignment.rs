//! Minimum-cost bipartite matching and the label to cluster map.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `rows[i]` is the column matched to row `i`.
    pub rows: Vec<usize>,
    pub cost: f64,
}

/// Hungarian algorithm for an `n x m` cost matrix with `n <= m`; missing rows
/// are treated as zero-cost padding.
///
/// Among all optimal assignments the lexicographically smallest `rows`
/// vector is returned. Costs within `1e-9 * (1 + n * max|c|)` of the optimum
/// count as optimal.
pub fn hungarian(cost: &Array2<f64>) -> Result<Assignment> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "cost matrix has more rows ({n}) than columns ({m})"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("hungarian"));
    }
    if n == 0 {
        return Ok(Assignment {
            rows: Vec::new(),
            cost: 0.0,
        });
    }
    let mut square = Array2::<f64>::zeros((m, m));
    square.slice_mut(ndarray::s![..n, ..]).assign(cost);

    let scale = square.iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
    let tol = 1e-9 * (1.0 + scale * m as f64);

    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let (best, duals) = solve(&square, &all_rows, &all_cols);

    let mut fixed = Vec::with_capacity(n);
    let mut free: BTreeSet<usize> = all_cols.iter().copied().collect();
    let mut spent = 0.0;
    for i in 0..n {
        let rest_rows: Vec<usize> = ((i + 1)..m).collect();
        let mut chosen = None;
        for &j in &free {
            // Complementary slackness: every optimal assignment uses only
            // zero reduced-cost edges of an optimal dual.
            if (square[[i, j]] - duals.0[i] - duals.1[j]).abs() > tol {
                continue;
            }
            let rest_cols: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
            let rest = solve(&square, &rest_rows, &rest_cols).0;
            if (spent + square[[i, j]] + rest - best).abs() <= tol {
                chosen = Some(j);
                break;
            }
        }
        let j = chosen.expect("an optimal completion always exists");
        spent += square[[i, j]];
        free.remove(&j);
        fixed.push(j);
    }
    let total = fixed.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    Ok(Assignment {
        rows: fixed,
        cost: total,
    })
}

/// Shortest augmenting path Hungarian method on the square submatrix given
/// by `rows` x `cols`. Returns the optimal cost and dual potentials indexed
/// by original row / column.
fn solve(c: &Array2<f64>, rows: &[usize], cols: &[usize]) -> (f64, (Vec<f64>, Vec<f64>)) {
    let k = rows.len();
    debug_assert_eq!(k, cols.len());
    let (big_n, big_m) = c.dim();
    if k == 0 {
        return (0.0, (vec![0.0; big_n], vec![0.0; big_m]));
    }
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = c[[rows[i0 - 1], cols[j - 1]]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=k {
        total += c[[rows[p[j] - 1], cols[j - 1]]];
    }
    let mut row_pot = vec![0.0; big_n];
    let mut col_pot = vec![0.0; big_m];
    for (i, &r) in rows.iter().enumerate() {
        row_pot[r] = u[i + 1];
    }
    for (j, &cc) in cols.iter().enumerate() {
        col_pot[cc] = v[j + 1];
    }
    (total, (row_pot, col_pot))
}

/// Injective map from supervision labels to cluster ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    map: BTreeMap<usize, usize>,
}

impl LabelMap {
    pub fn new(map: BTreeMap<usize, usize>) -> Result<Self> {
        let targets: BTreeSet<usize> = map.values().copied().collect();
        if targets.len() != map.len() {
            return Err(Error::InvalidArgument("label map is not injective".into()));
        }
        Ok(LabelMap { map })
    }

    pub fn cluster_of(&self, label: usize) -> Option<usize> {
        self.map.get(&label).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map.iter().map(|(&l, &k)| (l, k))
    }
}

/// Contingency counts `[label][cluster]` over labeled points, labels in
/// ascending order.
pub fn label_cluster_counts(clusters: &[usize], labels: &[usize], k: usize) -> (Vec<usize>, Array2<f64>) {
    let distinct: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut counts = Array2::<f64>::zeros((distinct.len(), k));
    for (&c, &y) in clusters.iter().zip(labels) {
        let row = distinct.binary_search(&y).expect("label collected above");
        counts[[row, c]] += 1.0;
    }
    (distinct, counts)
}

/// Label to cluster map maximizing agreement on the labeled points.
pub fn map_labels(clusters: &[usize], labels: &[usize], k: usize) -> Result<LabelMap> {
    if clusters.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cluster ids for {} labels",
            clusters.len(),
            labels.len()
        )));
    }
    if let Some(&c) = clusters.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("cluster id {c} out of range for K={k}")));
    }
    let (distinct, counts) = label_cluster_counts(clusters, labels, k);
    if distinct.len() > k {
        return Err(Error::TooManyLabels {
            labels: distinct.len(),
            clusters: k,
        });
    }
    let max = counts.iter().fold(0.0_f64, |a, &c| a.max(c));
    let cost = counts.mapv(|c| max - c);
    let matched = hungarian(&cost)?;
    let map = distinct.into_iter().zip(matched.rows).collect();
    LabelMap::new(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Lexicographically smallest optimal permutation by enumeration.
    fn brute_force(cost: &Array2<f64>) -> (Vec<usize>, f64) {
        let n = cost.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        permutations(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            let better = match &best {
                None => true,
                Some((bp, bc)) => c < *bc - 1e-9 || ((c - *bc).abs() <= 1e-9 && p < bp.as_slice()),
            };
            if better {
                best = Some((p.to_vec(), c));
            }
        });
        best.unwrap()
    }

    fn permutations(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permutations(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn zero_diagonal_picks_diagonal() {
        let c = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a.rows, vec![0, 1, 2]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn two_by_two_hand_case() {
        let a = hungarian(&array![[4.0, 1.0], [2.0, 3.0]]).unwrap();
        assert_eq!(a.rows, vec![1, 0]);
        assert_eq!(a.cost, 3.0);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let a = hungarian(&Array2::zeros((4, 4))).unwrap();
        assert_eq!(a.rows, vec![0, 1, 2, 3]);
        let c = array![[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]];
        assert_eq!(hungarian(&c).unwrap().rows, vec![2, 0, 1]);
    }

    #[test]
    fn rectangular_rows_are_padded() {
        let c = array![[5.0, 1.0, 3.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a.rows, vec![1]);
        assert_eq!(a.cost, 1.0);
        assert!(hungarian(&Array2::zeros((3, 2))).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            hungarian(&array![[1.0, f64::NAN], [0.0, 1.0]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..200 {
            let n = 1 + trial % 6;
            let integer = trial % 2 == 0;
            let c = Array2::from_shape_fn((n, n), |_| {
                if integer {
                    rng.random_range(0..5) as f64
                } else {
                    rng.random_range(-10.0..10.0)
                }
            });
            let (perm, best) = brute_force(&c);
            let a = hungarian(&c).unwrap();
            assert!((a.cost - best).abs() < 1e-9, "trial {trial}");
            assert_eq!(a.rows, perm, "trial {trial}: {c:?}");
        }
    }

    #[test]
    fn label_map_examples() {
        let g = map_labels(&[1, 1, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((g.cluster_of(0), g.cluster_of(1)), (Some(1), Some(0)));
        let g = map_labels(&[0, 0, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((g.cluster_of(0), g.cluster_of(1)), (Some(0), Some(1)));
        let g = map_labels(&[2, 0, 1, 2], &[2, 0, 1, 2], 3).unwrap();
        assert!(g.iter().all(|(l, k)| l == k));
    }

    #[test]
    fn label_map_errors() {
        assert!(matches!(
            map_labels(&[0, 1, 0], &[0, 1, 2], 2),
            Err(Error::TooManyLabels {
                labels: 3,
                clusters: 2
            })
        ));
        assert!(map_labels(&[0], &[0, 1], 2).is_err());
        assert!(map_labels(&[5], &[0], 2).is_err());
    }

    #[test]
    fn fewer_labels_than_clusters() {
        // Labels 3 and 7 only; four clusters.
        let g = map_labels(&[2, 2, 3, 0], &[7, 7, 3, 3], 4).unwrap();
        assert_eq!(g.cluster_of(7), Some(2));
        assert!(matches!(g.cluster_of(3), Some(0) | Some(3)));
        assert_eq!(g.len(), 2);
    }

    proptest! {
        #[test]
        fn constant_shift_keeps_assignment(
            vals in proptest::collection::vec(-50i32..50, 25),
            shift in -100.0f64..100.0,
        ) {
            let c = Array2::from_shape_fn((5, 5), |(i, j)| vals[i * 5 + j] as f64);
            let a = hungarian(&c).unwrap();
            let b = hungarian(&c.mapv(|x| x + shift)).unwrap();
            prop_assert_eq!(a.rows, b.rows);
        }

        #[test]
        fn relabeling_clusters_permutes_the_map(
            clusters in proptest::collection::vec(0usize..4, 12),
            labels in proptest::collection::vec(0usize..3, 12),
            perm_seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            let mut pi: Vec<usize> = (0..4).collect();
            for i in (1..4).rev() {
                pi.swap(i, rng.random_range(0..=i));
            }
            let g = map_labels(&clusters, &labels, 4).unwrap();
            let moved: Vec<usize> = clusters.iter().map(|&c| pi[c]).collect();
            let h = map_labels(&moved, &labels, 4).unwrap();
            // Agreement is what is maximized; ties may resolve differently.
            let agreement = |m: &LabelMap, cs: &[usize]| {
                cs.iter().zip(&labels).filter(|&(&c, &y)| m.cluster_of(y) == Some(c)).count()
            };
            prop_assert_eq!(agreement(&g, &clusters), agreement(&h, &moved));
            for (l, k) in g.iter() {
                if h.cluster_of(l) != Some(pi[k]) {
                    // Only allowed when the alternative has equal agreement.
                    prop_assert_eq!(agreement(&g, &clusters), agreement(&h, &moved));
                }
            }
        }
    }
}

//! Finite-difference check of recorded gradients.

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Worst `|a - b| / max(|a|, |b|, 1e-8)` over all checked entries.
    pub max_rel_error: f64,
    /// Leaf and flat index of the worst entry.
    pub worst: Option<(Var, usize)>,
    pub entries: usize,
    /// False when the point sits on, or a perturbation crosses, a kink of
    /// a relu or max-pool, where central differences are meaningless.
    pub checkable: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Numerical derivative used by [`finite_diff_check_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    /// `(f(x+h) - f(x-h)) / 2h`, error `O(h^2)`.
    #[default]
    Central,
    /// Richardson extrapolation `(4 D(h/2) - D(h)) / 3` of two central
    /// differences, error `O(h^4)`. Tolerates a wider step, which keeps
    /// rounding noise below tiny gradient entries.
    Richardson,
}

/// Compares `backward` against central differences for every entry of every
/// trainable leaf of `graph`, treating the recording as a function of its leaves.
pub fn finite_diff_check<T: Real>(graph: &Graph<T>, loss: Var, step: f64) -> Result<GradCheck> {
    finite_diff_check_with(graph, loss, step, Scheme::Central)
}

/// [`finite_diff_check`] with a chosen numerical scheme. Kink crossings are
/// detected at every evaluated point.
pub fn finite_diff_check_with<T: Real>(graph: &Graph<T>, loss: Var, step: f64, scheme: Scheme) -> Result<GradCheck> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let analytic = graph.clone().backward(loss)?;
    let (base_sig, on_kink) = graph.branch_signature();
    let mut checkable = !on_kink;

    let mut work = graph.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        entries: 0,
        checkable,
    };
    for leaf in graph.trainable_leaves() {
        let original = graph.value(leaf).clone();
        let grad = analytic
            .get(leaf)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(original.shape()));
        for k in 0..original.len() {
            // Returns the loss and the perturbed coordinate actually stored,
            // so the divisor is the representable step rather than 2*step.
            let mut eval_at = |delta: f64| -> Result<(f64, f64)> {
                let mut p = original.clone();
                p.data_mut()[k] = T::of(p.data()[k].as_f64() + delta);
                let moved = p.data()[k].as_f64();
                work.set_leaf(leaf, p)?;
                work.recompute()?;
                if work.branch_signature().0 != base_sig {
                    checkable = false;
                }
                Ok((work.value(loss).item()?.as_f64(), moved))
            };
            let mut central = |h: f64| -> Result<f64> {
                let (plus, x_plus) = eval_at(h)?;
                let (minus, x_minus) = eval_at(-h)?;
                Ok((plus - minus) / (x_plus - x_minus))
            };
            let numeric = match scheme {
                Scheme::Central => central(step)?,
                Scheme::Richardson => {
                    let wide = central(step)?;
                    let narrow = central(step / 2.0)?;
                    (4.0 * narrow - wide) / 3.0
                }
            };
            let err = relative_error(grad.data()[k].as_f64(), numeric);
            report.entries += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = Some((leaf, k));
            }
        }
        work.set_leaf(leaf, original)?;
    }
    report.checkable = checkable;
    Ok(report)
}

/// Builds `f` at `point` (one trainable leaf per tensor) and checks it.
pub fn finite_diff_check_fn<T, F>(f: F, point: &[Tensor<T>], step: f64) -> Result<GradCheck>
where
    T: Real,
    F: FnOnce(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = point
        .iter()
        .map(|p| g.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut g, &vars)?;
    finite_diff_check(&g, loss, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_map_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random(&mut rng, &[3, 4]);
        let x = random(&mut rng, &[4]);
        let r = finite_diff_check_fn(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                g.sum(y)
            },
            &[w, x],
            1e-3,
        )
        .unwrap();
        assert!(r.checkable);
        assert_eq!(r.entries, 16);
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn relu_at_exact_zero_is_flagged() {
        let x = Tensor::vector(vec![0.0_f64, 1.0]);
        let r = finite_diff_check_fn(
            |g, v| {
                let y = g.relu(v[0])?;
                g.sum(y)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(!r.checkable);
    }

    #[test]
    fn kink_crossing_is_flagged() {
        let x = Tensor::vector(vec![1e-7_f64]);
        let r = finite_diff_check_fn(
            |g, v| {
                let y = g.relu(v[0])?;
                g.sum(y)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(!r.checkable);
    }

    #[test]
    fn richardson_beats_central_on_a_cubic() {
        // d/dx x^3 at 1 is 3; central differences carry h^2 = 1e-4 error,
        // the extrapolated scheme none for a cubic.
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0_f64])).unwrap();
        let x2 = g.mul(x, x).unwrap();
        let x3 = g.mul(x2, x).unwrap();
        let loss = g.sum(x3).unwrap();
        let central = finite_diff_check(&g, loss, 1e-2).unwrap();
        let rich = finite_diff_check_with(&g, loss, 1e-2, Scheme::Richardson).unwrap();
        assert!(central.max_rel_error > 1e-5);
        assert!(rich.max_rel_error < 1e-12, "{rich:?}");
    }

    #[test]
    fn non_positive_step_is_rejected() {
        let x = Tensor::vector(vec![1.0_f64]);
        assert!(finite_diff_check_fn(|g, v| g.sum(v[0]), &[x], 0.0).is_err());
    }

    /// Every primitive, composed on random inputs away from kinks.
    #[test]
    fn every_primitive_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for trial in 0..20 {
            let s = random(&mut rng, &[3, 5]);
            let filters = random(&mut rng, &[4, 2, 3]);
            let bias = random(&mut rng, &[4]);
            let w = random(&mut rng, &[3, 8]);
            let u = random(&mut rng, &[3]);
            let table = random(&mut rng, &[4, 3]);
            let target = random(&mut rng, &[3]);
            let r = finite_diff_check_fn(
                |g, v| {
                    let (s, f, b, w, u, table) = (v[0], v[1], v[2], v[3], v[4], v[5]);
                    let conv = g.conv1d_full(s, f)?;
                    let conv = g.add_bias(conv, b)?;
                    let act = g.relu(conv)?;
                    let pooled = g.max_over_time(act)?;
                    let mean = g.mean_over_time(conv)?;
                    let feats = g.concat(&[pooled, mean])?;
                    let feats = g.tanh(feats)?;
                    let wide = g.stack_columns(&[u, u])?;
                    let col = g.column(wide, 1)?;
                    let proj = g.matmul(w, feats)?;
                    let proj = g.sigmoid(proj)?;
                    let prod = g.mul(proj, col)?;
                    let looked = g.lookup(table, &[Some(2), None, Some(0)])?;
                    let lcol = g.column(looked, 2)?;
                    let diff = g.sub(prod, lcol)?;
                    let sum = g.add(diff, u)?;
                    let scaled = g.scale(sum, 0.7)?;
                    let d = g.sq_dist(scaled, &target)?;
                    let xe = g.softmax_cross_entropy(scaled, 1)?;
                    g.sum_scalars(&[d, xe])
                },
                &[s, filters, bias, w, u, table],
                1e-5,
            )
            .unwrap();
            if !r.checkable {
                continue;
            }
            assert!(r.max_rel_error < 1e-4, "trial {trial}: {r:?}");
            checked += 1;
        }
        assert!(checked >= 15, "only {checked} checkable trials");
    }
}

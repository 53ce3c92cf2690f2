//! k-means with a semi-supervised objective over learned representations.

mod config;
mod fit;
mod objective;
mod steps;
mod update;

pub use config::{SemiConfig, WeightMode};
pub use fit::{fit, ClusterState, FixedVectors, NeuralRepresentation, Representation};
pub use objective::{
    compute_weights, frozen_objective, hinge_active, labeled_term, mapped_clusters,
    objective_semi, objective_unsup, sq_dist, weights_from_indicators,
};
pub use steps::{assign_cluster, estimate_centroid, kmeanspp_init, nearest, DENOMINATOR_EPS};
pub use update::{document_loss, update_parameter, SemiTargets};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::LabelMap;
    use crate::encoders::{EncoderConfig, EncoderKind, EncoderParams, Optimizer};
    use crate::error::Error;
    use crate::tensor_autodiff::{finite_diff_check, AdamConfig, Graph};
    use crate::text::{Document, EmbeddingTable};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_map(k: usize) -> LabelMap {
        LabelMap::new((0..k).map(|i| (i, i)).collect()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |_| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn kmeanspp_two_points_always_both() {
        let x = array![[0.0], [10.0]];
        for seed in 0..50 {
            let mu = kmeanspp_init(&x, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut got = vec![mu[[0, 0]], mu[[1, 0]]];
            got.sort_by(f64::total_cmp);
            assert_eq!(got, vec![0.0, 10.0]);
        }
    }

    #[test]
    fn kmeanspp_single_centroid_is_a_point() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mu = kmeanspp_init(&x, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(x.rows().into_iter().any(|r| r == mu.row(0)));
    }

    #[test]
    fn kmeanspp_rejects_duplicates_and_small_inputs() {
        let x = array![[1.0], [1.0], [1.0]];
        assert!(matches!(
            kmeanspp_init(&x, 2, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InsufficientPoints { needed: 2, found: 1 })
        ));
        assert!(kmeanspp_init(&x, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn kmeanspp_matches_d2_probabilities() {
        // Points 0, 1, 3. First pick uniform, second proportional to D^2.
        let pts = [0.0, 1.0, 3.0];
        let x = Array2::from_shape_vec((3, 1), pts.to_vec()).unwrap();
        let mut expected = [[0.0; 3]; 3];
        for a in 0..3 {
            let d2: Vec<f64> = pts.iter().map(|p| (p - pts[a]) * (p - pts[a])).collect();
            let total: f64 = d2.iter().sum();
            for b in 0..3 {
                expected[a][b] = d2[b] / total / 3.0;
            }
        }
        let trials = 100_000;
        let mut counts = [[0usize; 3]; 3];
        for seed in 0..trials {
            let mu = kmeanspp_init(&x, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let idx = |v: f64| pts.iter().position(|&p| p == v).unwrap();
            counts[idx(mu[[0, 0]])][idx(mu[[1, 0]])] += 1;
        }
        for a in 0..3 {
            for b in 0..3 {
                let freq = counts[a][b] as f64 / trials as f64;
                assert!((freq - expected[a][b]).abs() < 0.02, "{a}->{b}: {freq} vs {}", expected[a][b]);
            }
        }
    }

    #[test]
    fn unsup_objective_cases() {
        let x = array![[1.0, 0.0], [5.0, 5.0]];
        let mu = array![[1.0, 0.0], [5.0, 5.0]];
        assert_eq!(objective_unsup(&x, &[0, 1], &mu).unwrap(), 0.0);
        assert_eq!(objective_unsup(&array![[1.0, 0.0]], &[0], &array![[0.0, 0.0]]).unwrap(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 30, 4);
        let mu = random_matrix(&mut rng, 3, 4);
        let r: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let mut naive = 0.0;
        for n in 0..30 {
            for k in 0..3 {
                if r[n] == k {
                    for d in 0..4 {
                        naive += (x[[n, d]] - mu[[k, d]]).powi(2);
                    }
                }
            }
        }
        assert!((objective_unsup(&x, &r, &mu).unwrap() - naive).abs() < 1e-10);
        assert!(objective_unsup(&x, &r[..5], &mu).is_err());
    }

    #[test]
    fn semi_objective_hand_values() {
        let x = array![[1.0, 0.0]];
        let g = identity_map(2);
        let mu = array![[0.0, 0.0], [3.0, 0.0]];
        let j = objective_semi(&x, &[0], &mu, &[(0, 0)], &g, 0.5, 1.0).unwrap();
        assert!((j - 1.0).abs() < 1e-12);
        let mu = array![[0.0, 0.0], [1.5, 0.0]];
        let j = objective_semi(&x, &[0], &mu, &[(0, 0)], &g, 0.5, 1.0).unwrap();
        assert!((j - 1.875).abs() < 1e-12);
        assert!(matches!(
            objective_semi(&x, &[0], &mu, &[(0, 7)], &g, 0.5, 1.0),
            Err(Error::UnmappedLabel(7))
        ));
    }

    #[test]
    fn semi_objective_with_alpha_one_is_unsup() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 20, 3);
        let mu = random_matrix(&mut rng, 3, 3);
        let r = nearest(&x, &mu);
        let labeled: Vec<(usize, usize)> = (0..5).map(|n| (n, n % 3)).collect();
        let semi = objective_semi(&x, &r, &mu, &labeled, &identity_map(3), 1.0, 1.0).unwrap();
        assert_eq!(semi, objective_unsup(&x, &r, &mu).unwrap());
    }

    #[test]
    fn assignment_ties_and_scan() {
        let mu = array![[-1.0, 0.0], [1.0, 0.0]];
        assert_eq!(nearest(&array![[0.0, 5.0]], &mu), vec![0]);
        let x = array![[3.0, 1.0], [0.0, 0.0], [-2.0, 4.0]];
        assert_eq!(nearest(&x, &x), vec![0, 1, 2]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 50, 3);
        let mu = random_matrix(&mut rng, 4, 3);
        let (r, g) = assign_cluster(&x, &mu, &[(0, 1), (1, 2)]).unwrap();
        for (n, &k) in r.iter().enumerate() {
            for j in 0..4 {
                assert!(sq_dist(x.row(n), mu.row(k)) <= sq_dist(x.row(n), mu.row(j)));
            }
        }
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn weight_examples() {
        let mu = array![[0.0], [10.0]];
        let f = array![0.0];
        for mode in [WeightMode::Derived, WeightMode::PaperLiteral] {
            let w = compute_weights(f.view(), 0, &mu, 0.3, 1.0, mode);
            assert!((w[0] - 0.7).abs() < 1e-12 && w[1] == 0.0);
        }
        let mu = array![[0.0], [0.5]];
        let w = compute_weights(f.view(), 0, &mu, 0.3, 1.0, WeightMode::Derived);
        assert!((w[0] - 1.4).abs() < 1e-12);
        assert!((w[1] + 0.7).abs() < 1e-12);
        let w = compute_weights(f.view(), 0, &mu, 0.3, 1.0, WeightMode::PaperLiteral);
        assert!(w[0].abs() < 1e-12);
        assert!((w[1] - 0.7).abs() < 1e-12);
        let w = compute_weights(f.view(), 0, &mu, 1.0, 1.0, WeightMode::Derived);
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centroid_reduces_to_mean() {
        let x = array![[0.0, 0.0], [2.0, 0.0]];
        let g = LabelMap::default();
        let mu = estimate_centroid(&x, &[0, 0], &[], &g, &array![[5.0, 5.0], [0.0, 0.0]], 1.0, 1.0, WeightMode::Derived);
        // Cluster 1 is empty and gets re-seeded at a data point.
        let mu = mu.unwrap();
        assert_eq!(mu.row(0), array![1.0, 0.0]);
        assert!(x.rows().into_iter().any(|r| r == mu.row(1)));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 40, 3);
        let prev = random_matrix(&mut rng, 3, 3);
        let r = nearest(&x, &prev);
        let mu = estimate_centroid(&x, &r, &[], &g, &prev, 1.0, 1.0, WeightMode::Derived).unwrap();
        for k in 0..3 {
            let members: Vec<usize> = (0..40).filter(|&n| r[n] == k).collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..3 {
                let mean = members.iter().map(|&n| x[[n, d]]).sum::<f64>() / members.len() as f64;
                assert!((mu[[k, d]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centroid_matches_numeric_minimizer() {
        // One labeled point at (2, 1) mapped to cluster 0, one unlabeled point
        // at (0, 0) in cluster 0; cluster 1 far away so hinges stay inactive.
        let x = array![[2.0, 1.0], [0.0, 0.0], [50.0, 50.0]];
        let r = [0, 0, 1];
        let labeled = [(0, 0)];
        let g = identity_map(2);
        let prev = array![[1.0, 0.5], [50.0, 50.0]];
        let alpha = 0.5;
        let mu = estimate_centroid(&x, &r, &labeled, &g, &prev, alpha, 1.0, WeightMode::Derived).unwrap();

        let active = vec![hinge_active(x.row(0), 0, &prev, 1.0)];
        assert!(active[0].iter().all(|&a| !a));
        let mapped = [(0, 0)];
        let frozen = |m: &Array2<f64>| frozen_objective(&x, &r, m, &mapped, &active, alpha, 1.0).unwrap();
        let mut m = prev.clone();
        for _ in 0..5000 {
            let mut grad = Array2::<f64>::zeros(m.dim());
            for idx in [(0, 0), (0, 1)] {
                let mut up = m.clone();
                let mut down = m.clone();
                up[idx] += 1e-6;
                down[idx] -= 1e-6;
                grad[idx] = (frozen(&up) - frozen(&down)) / 2e-6;
            }
            m = &m - &(grad * 0.1);
        }
        assert!((mu[[0, 0]] - m[[0, 0]]).abs() < 1e-6, "{mu} vs {m}");
        assert!((mu[[0, 1]] - m[[0, 1]]).abs() < 1e-6);
    }

    #[test]
    fn derived_centroid_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        for _ in 0..40 {
            let x = random_matrix(&mut rng, 25, 3);
            let prev = random_matrix(&mut rng, 3, 3);
            let (r, g) = assign_cluster(&x, &prev, &[(0, 0), (1, 1), (2, 2), (3, 0)]).unwrap();
            let labeled = [(0, 0), (1, 1), (2, 2), (3, 0)];
            let alpha = 0.6;
            let mapped = mapped_clusters(&labeled, &g).unwrap();
            let active: Vec<Vec<bool>> = mapped.iter().map(|&(n, k)| hinge_active(x.row(n), k, &prev, 0.5)).collect();
            let mut den = [0.0; 3];
            for &k in &r {
                den[k] += alpha;
            }
            for (&(_, k), act) in mapped.iter().zip(&active) {
                for (j, w) in weights_from_indicators(act, k, alpha, WeightMode::Derived).iter().enumerate() {
                    den[j] += w;
                }
            }
            if den.iter().any(|&d| d <= DENOMINATOR_EPS) {
                continue;
            }
            tested += 1;
            let mu = estimate_centroid(&x, &r, &labeled, &g, &prev, alpha, 0.5, WeightMode::Derived).unwrap();
            let h = 1e-5;
            let mut norm = 0.0;
            for idx in ndarray::indices(mu.dim()) {
                let mut up = mu.clone();
                let mut down = mu.clone();
                up[idx] += h;
                down[idx] -= h;
                let d = (frozen_objective(&x, &r, &up, &mapped, &active, alpha, 0.5).unwrap()
                    - frozen_objective(&x, &r, &down, &mapped, &active, alpha, 0.5).unwrap())
                    / (2.0 * h);
                norm += d * d;
            }
            assert!(norm.sqrt() < 1e-8, "gradient norm {}", norm.sqrt());
        }
        assert!(tested >= 20);
    }

    fn toy_text() -> (EmbeddingTable, Vec<Document>) {
        let rows = vec![
            ("red".to_string(), vec![1.0, 0.2, 0.0]),
            ("blue".to_string(), vec![0.0, 0.3, 1.0]),
            ("thing".to_string(), vec![0.2, 0.2, 0.2]),
        ];
        let table = EmbeddingTable::from_rows(rows, 3, 0).unwrap();
        let docs = ["red thing", "red", "blue thing", "blue blue", "thing"]
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(i, *t, None).unwrap())
            .collect();
        (table, docs)
    }

    fn tiny_cnn() -> EncoderConfig {
        EncoderConfig {
            kind: EncoderKind::Cnn,
            output_dim: 2,
            cnn_windows: vec![1, 2],
            cnn_filters_per_window: 3,
            lstm_hidden: None,
        }
    }

    #[test]
    fn document_losses_sum_to_objective() {
        let (table, docs) = toy_text();
        let params = EncoderParams::<f64>::init(EncoderConfig::new(EncoderKind::Average), 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = crate::encoders::encode_all(&params, &table, &docs).unwrap();
        let mu = array![[0.5, 0.2, 0.1], [0.1, 0.3, 0.8]];
        let r = nearest(&x, &mu);
        let labeled = [(0, 0), (2, 1)];
        let g = identity_map(2);
        let targets = SemiTargets::<f64>::new(&r, &mu, &labeled, &g, 0.3, 1.0).unwrap();
        let mut graph = Graph::new();
        let bound = params.bind(&mut graph, true).unwrap();
        let mut total = 0.0;
        for (n, doc) in docs.iter().enumerate() {
            let l = document_loss(&mut graph, &params, &bound, &table, doc, &targets, n).unwrap();
            total += graph.value(l).item().unwrap();
        }
        let j = objective_semi(&x, &r, &mu, &labeled, &g, 0.3, 1.0).unwrap();
        assert!((total - j).abs() < 1e-12);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let (table, docs) = toy_text();
        for kind in [EncoderKind::Cnn, EncoderKind::Lstm] {
            let config = EncoderConfig { kind, ..tiny_cnn() };
            let params = EncoderParams::<f64>::init(config, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mu = array![[0.05, -0.02], [-0.03, 0.04]];
            let r = [0, 1, 0, 1, 0];
            let targets = SemiTargets::<f64>::new(&r, &mu, &[(0, 0), (3, 1)], &identity_map(2), 0.2, 0.01).unwrap();
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true).unwrap();
            let losses: Vec<_> = docs
                .iter()
                .enumerate()
                .map(|(n, d)| document_loss(&mut g, &params, &bound, &table, d, &targets, n).unwrap())
                .collect();
            let loss = g.sum_scalars(&losses).unwrap();
            let check = finite_diff_check(&g, loss, 1e-6).unwrap();
            assert!(check.max_rel_error < 1e-4, "{kind}: {check:?}");
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (table, docs) = toy_text();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = EncoderParams::<f64>::init(tiny_cnn(), 3, &mut rng).unwrap();
        let before = params.clone();
        let config = SemiConfig {
            adam: AdamConfig { lr: 0.0, ..AdamConfig::default() },
            ..SemiConfig::new(2)
        };
        let mut opt = Optimizer::new(config.adam, &params);
        let mu = array![[0.1, 0.0], [0.0, 0.1]];
        let targets = SemiTargets::new(&[0, 0, 1, 1, 0], &mu, &[], &LabelMap::default(), 0.5, 1.0).unwrap();
        update_parameter(&mut params, &mut opt, &table, &docs, &targets, &config, &mut rng).unwrap();
        assert_eq!(params, before);

        let mut opt = Optimizer::new(AdamConfig { lr: 0.01, ..AdamConfig::default() }, &params);
        update_parameter(&mut params, &mut opt, &table, &docs, &targets, &config, &mut rng).unwrap();
        assert_ne!(params, before);
    }

    #[test]
    fn non_finite_update_restores_params() {
        let (table, docs) = toy_text();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = EncoderParams::<f64>::init(tiny_cnn(), 3, &mut rng).unwrap();
        let before = params.clone();
        let config = SemiConfig::new(2);
        let mut opt = Optimizer::new(config.adam, &params);
        let mu = array![[f64::MAX, 0.0], [0.0, 0.1]];
        let targets = SemiTargets::new(&[0, 0, 1, 1, 0], &mu, &[], &LabelMap::default(), 0.5, 1.0).unwrap();
        let err = update_parameter(&mut params, &mut opt, &table, &docs, &targets, &config, &mut rng);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(params, before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn fit_on_distinct_points_reaches_zero() {
        let x = array![[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0], [9.0, 0.0]];
        let config = SemiConfig {
            alpha: 1.0,
            ..SemiConfig::new(3)
        };
        let state = fit(&mut FixedVectors(&x), &[], &config).unwrap();
        assert!(state.converged);
        assert_eq!(state.final_objective(), Some(0.0));
        assert_eq!(state.assignments[0], state.assignments[1]);
        assert_ne!(state.assignments[0], state.assignments[4]);
    }

    #[test]
    fn fit_neural_is_deterministic() {
        let (table, docs) = toy_text();
        let run = || {
            let params = EncoderParams::<f32>::init(tiny_cnn(), 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
            let config = SemiConfig { max_iters: 5, seed: 8, ..SemiConfig::new(2) };
            let mut repr = NeuralRepresentation::new(params, &table, &docs, &config);
            let state = fit(&mut repr, &[(0, 0), (2, 1)], &config).unwrap();
            (state, repr.into_params())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert!(a.iterations >= 1);
        let json = a.to_json().unwrap();
        assert_eq!(ClusterState::from_json(&json).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        assert!(SemiConfig::new(1).validate().is_err());
        assert!(SemiConfig { alpha: 1.5, ..SemiConfig::new(2) }.validate().is_err());
        assert!(SemiConfig { margin: -1.0, ..SemiConfig::new(2) }.validate().is_err());
        assert!(SemiConfig::new(2).validate().is_ok());
        assert_eq!("paper_literal".parse::<WeightMode>().unwrap(), WeightMode::PaperLiteral);
    }
}

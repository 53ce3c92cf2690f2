use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::LabelMap;
use crate::encoders::{encode_all, EncoderParams, Optimizer};
use crate::error::{Error, Result};
use crate::tensor_autodiff::Real;
use crate::text::{Document, EmbeddingTable};

use super::config::SemiConfig;
use super::objective::objective_semi;
use super::steps::{assign_cluster, estimate_centroid, kmeanspp_init};
use super::update::{update_parameter, SemiTargets};

/// Result of a clustering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub label_map: LabelMap,
    /// Objective after each centroid update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub config: SemiConfig,
}

impl ClusterState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }
}

/// Something that maps the corpus to an `N x p` matrix and may learn from
/// frozen clustering targets.
pub trait Representation {
    /// Recomputes the vectors after a parameter update.
    fn refresh(&mut self) -> Result<()>;

    /// Vectors as of the last [`Representation::refresh`].
    fn vectors(&self) -> &Array2<f64>;

    /// One parameter update against fixed assignments, centroids and label
    /// map.
    fn update(
        &mut self,
        r: &[usize],
        mu: &Array2<f64>,
        labeled: &[(usize, usize)],
        g: &LabelMap,
        config: &SemiConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<()>;
}

/// Precomputed vectors that never change: plain and constrained k-means on
/// bag-of-words, TF-IDF or averaged embeddings.
#[derive(Clone, Copy, Debug)]
pub struct FixedVectors<'a>(pub &'a Array2<f64>);

impl Representation for FixedVectors<'_> {
    fn refresh(&mut self) -> Result<()> {
        Ok(())
    }

    fn vectors(&self) -> &Array2<f64> {
        self.0
    }

    fn update(
        &mut self,
        _: &[usize],
        _: &Array2<f64>,
        _: &[(usize, usize)],
        _: &LabelMap,
        _: &SemiConfig,
        _: &mut ChaCha8Rng,
    ) -> Result<()> {
        Ok(())
    }
}

/// A trainable encoder over a fixed corpus.
#[derive(Clone, Debug)]
pub struct NeuralRepresentation<'a, T> {
    params: EncoderParams<T>,
    optimizer: Optimizer<T>,
    table: &'a EmbeddingTable,
    docs: &'a [Document],
    encoded: Array2<f64>,
    stale: bool,
}

impl<'a, T: Real> NeuralRepresentation<'a, T> {
    pub fn new(params: EncoderParams<T>, table: &'a EmbeddingTable, docs: &'a [Document], config: &SemiConfig) -> Self {
        let optimizer = Optimizer::new(config.adam, &params);
        NeuralRepresentation {
            params,
            optimizer,
            table,
            docs,
            encoded: Array2::zeros((0, 0)),
            stale: true,
        }
    }

    pub fn params(&self) -> &EncoderParams<T> {
        &self.params
    }

    pub fn into_params(self) -> EncoderParams<T> {
        self.params
    }
}

impl<T: Real> Representation for NeuralRepresentation<'_, T> {
    fn refresh(&mut self) -> Result<()> {
        if self.stale {
            self.encoded = encode_all(&self.params, self.table, self.docs)?;
            self.stale = false;
        }
        Ok(())
    }

    fn vectors(&self) -> &Array2<f64> {
        &self.encoded
    }

    fn update(
        &mut self,
        r: &[usize],
        mu: &Array2<f64>,
        labeled: &[(usize, usize)],
        g: &LabelMap,
        config: &SemiConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let targets = SemiTargets::new(r, mu, labeled, g, config.alpha, config.margin)?;
        self.stale = true;
        update_parameter(
            &mut self.params,
            &mut self.optimizer,
            self.table,
            self.docs,
            &targets,
            config,
            rng,
        )?;
        Ok(())
    }
}

/// Alternates assignment, centroid estimation and representation update until
/// the relative objective change drops below `config.tol` or
/// `config.max_iters` is reached.
///
/// `labeled` holds `(document index, label)` pairs. Hitting the iteration cap
/// is not an error; the state reports `converged: false`.
pub fn fit<Rp: Representation>(
    repr: &mut Rp,
    labeled: &[(usize, usize)],
    config: &SemiConfig,
) -> Result<ClusterState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    repr.refresh()?;
    let n = repr.vectors().nrows();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&(i, _)) = labeled.iter().find(|&&(i, _)| i >= n) {
        return Err(Error::InvalidArgument(format!("labeled document {i} out of range")));
    }
    let mut mu = kmeanspp_init(repr.vectors(), config.k, &mut rng)?;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut r = Vec::new();
    let mut g = LabelMap::default();
    let mut iterations = 0;
    for it in 0..config.max_iters {
        repr.refresh()?;
        let x = repr.vectors();
        (r, g) = assign_cluster(x, &mu, labeled)?;
        mu = estimate_centroid(x, &r, labeled, &g, &mu, config.alpha, config.margin, config.weight_mode)?;
        let j = objective_semi(x, &r, &mu, labeled, &g, config.alpha, config.margin)?;
        iterations += 1;
        let settled = history
            .last()
            .is_some_and(|&prev| (prev - j).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE));
        history.push(j);
        if settled {
            converged = true;
            break;
        }
        if it + 1 < config.max_iters {
            repr.update(&r, &mu, labeled, &g, config, &mut rng)?;
        }
    }
    Ok(ClusterState {
        centroids: mu,
        assignments: r,
        label_map: g,
        objective_history: history,
        iterations,
        converged,
        config: config.clone(),
    })
}

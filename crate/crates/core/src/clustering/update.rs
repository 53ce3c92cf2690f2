use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::assignment::LabelMap;
use crate::encoders::{batch_gradients, forward, input, Bound, EncoderParams, Optimizer};
use crate::error::{Error, Result};
use crate::tensor_autodiff::{Graph, Real, Tensor, Var};
use crate::text::{Document, EmbeddingTable};

use super::config::SemiConfig;
use super::objective::mapped_clusters;

/// Assignments, centroids and label map held fixed while the encoder trains.
#[derive(Clone, Debug)]
pub struct SemiTargets<T> {
    assigned: Vec<usize>,
    centroids: Vec<Tensor<T>>,
    mapped: Vec<Option<usize>>,
    alpha: f64,
    margin: f64,
}

impl<T: Real> SemiTargets<T> {
    pub fn new(
        r: &[usize],
        mu: &Array2<f64>,
        labeled: &[(usize, usize)],
        g: &LabelMap,
        alpha: f64,
        margin: f64,
    ) -> Result<Self> {
        if let Some(&c) = r.iter().find(|&&c| c >= mu.nrows()) {
            return Err(Error::InvalidArgument(format!("cluster {c} has no centroid")));
        }
        let mut mapped = vec![None; r.len()];
        for (n, k) in mapped_clusters(labeled, g)? {
            *mapped
                .get_mut(n)
                .ok_or_else(|| Error::InvalidArgument(format!("labeled document {n} out of range")))? = Some(k);
        }
        let centroids = mu
            .rows()
            .into_iter()
            .map(|row| Tensor::vector(row.iter().map(|&v| T::of(v)).collect()))
            .collect();
        Ok(SemiTargets {
            assigned: r.to_vec(),
            centroids,
            mapped,
            alpha,
            margin,
        })
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    /// Contribution of document `n` with representation `x` to the objective:
    /// `alpha * d_r` plus, when labeled, `(1 - alpha) * (d_g + sum_j [l + d_g - d_j]_+)`.
    pub fn loss(&self, g: &mut Graph<T>, x: Var, n: usize) -> Result<Var> {
        let d_r = g.sq_dist(x, &self.centroids[self.assigned[n]])?;
        let unsup = g.scale(d_r, T::of(self.alpha))?;
        let Some(gn) = self.mapped[n] else {
            return Ok(unsup);
        };
        let d_g = g.sq_dist(x, &self.centroids[gn])?;
        let mut parts = vec![d_g];
        let margin = g.constant(Tensor::scalar(T::of(self.margin)))?;
        for (j, c) in self.centroids.iter().enumerate() {
            if j == gn {
                continue;
            }
            let d_j = g.sq_dist(x, c)?;
            let gap = g.sub(d_g, d_j)?;
            let shifted = g.add(gap, margin)?;
            parts.push(g.relu(shifted)?);
        }
        let sup = g.sum_scalars(&parts)?;
        let sup = g.scale(sup, T::of(1.0 - self.alpha))?;
        g.sum_scalars(&[unsup, sup])
    }
}

/// Loss of document `n` through the encoder.
pub fn document_loss<T: Real>(
    g: &mut Graph<T>,
    params: &EncoderParams<T>,
    bound: &Bound,
    table: &EmbeddingTable,
    doc: &Document,
    targets: &SemiTargets<T>,
    n: usize,
) -> Result<Var> {
    let (s, len) = input(g, params, bound, table, &doc.tokens)?;
    let x = forward(g, params, bound, s, len)?;
    targets.loss(g, x, n)
}

/// Minibatch Adam on the objective with respect to the encoder parameters.
/// Returns the summed loss of the last pass.
///
/// On a non-finite loss or gradient the parameters and optimizer state are
/// restored to their values on entry and the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn update_parameter<T: Real, R: Rng>(
    params: &mut EncoderParams<T>,
    optimizer: &mut Optimizer<T>,
    table: &EmbeddingTable,
    docs: &[Document],
    targets: &SemiTargets<T>,
    config: &SemiConfig,
    rng: &mut R,
) -> Result<f64> {
    if targets.len() != docs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} documents",
            targets.len(),
            docs.len()
        )));
    }
    let saved = (params.clone(), optimizer.clone());
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut last = 0.0;
    for _ in 0..config.inner_epochs {
        order.shuffle(rng);
        let mut pass = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let step = {
                let model = &*params;
                let item = |g: &mut Graph<T>, bound: &Bound, n: usize| {
                    document_loss(g, model, bound, table, &docs[n], targets, n)
                };
                batch_gradients(model, batch, item)
            };
            let result = step.and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return Err(Error::NonFinite("update_parameter"));
                }
                optimizer.step(params, &grads).map(|_| loss)
            });
            match result {
                Ok(loss) => pass += loss,
                Err(e) => {
                    (*params, *optimizer) = saved;
                    return Err(e);
                }
            }
        }
        last = pass;
    }
    Ok(last)
}

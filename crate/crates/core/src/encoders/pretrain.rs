use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_autodiff::{AdamConfig, Graph, Real, Var};
use crate::text::{Document, EmbeddingTable};

use super::forward::{forward, head_logits, input};
use super::params::{Bound, EncoderParams};
use super::train::{batch_gradients, Optimizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after this many consecutive epochs whose relative loss
    /// improvement is below `min_rel_improvement`.
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            patience: 3,
            min_rel_improvement: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome<T> {
    pub params: EncoderParams<T>,
    /// Mean cross-entropy over the labeled documents before training.
    pub initial_loss: f64,
    /// Mean cross-entropy after training, head still attached.
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Trains encoder plus a softmax head on the labeled documents, then drops
/// the head. `labeled` holds `(document index, label)` pairs.
pub fn pretrain<T: Real, R: Rng>(
    params: &EncoderParams<T>,
    table: &EmbeddingTable,
    docs: &[Document],
    labeled: &[(usize, usize)],
    options: &PretrainOptions,
    rng: &mut R,
) -> Result<PretrainOutcome<T>> {
    let classes: Vec<usize> = labeled
        .iter()
        .map(|&(_, y)| y)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pretraining needs at least 2 distinct labels, found {}",
            classes.len()
        )));
    }
    if let Some(&(i, _)) = labeled.iter().find(|&&(i, _)| i >= docs.len()) {
        return Err(Error::InvalidArgument(format!("document index {i} out of range")));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let targets: Vec<(usize, usize)> = labeled
        .iter()
        .map(|&(i, y)| (i, classes.binary_search(&y).expect("collected above")))
        .collect();

    let mut model = params.clone();
    model.detach_head();
    model.attach_head(classes.len(), rng);
    let mut opt = Optimizer::new(options.adam, &model);

    let n = targets.len() as f64;
    let all: Vec<usize> = (0..targets.len()).collect();
    let mean_loss = |model: &EncoderParams<T>| -> Result<f64> {
        let loss = xent_loss(model, table, docs, &targets);
        Ok(batch_gradients(model, &all, loss)?.0 / n)
    };

    let initial_loss = mean_loss(&model)?;
    let mut order = all.clone();
    let mut prev = initial_loss;
    let mut stalled = 0;
    let mut epochs_run = 0;
    for _ in 0..options.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch_size) {
            let item_loss = xent_loss(&model, table, docs, &targets);
            let (loss, grads) = batch_gradients(&model, batch, item_loss)?;
            opt.step(&mut model, &grads)?;
            epoch_loss += loss;
        }
        epochs_run += 1;
        let epoch_loss = epoch_loss / n;
        let improvement = (prev - epoch_loss) / prev.abs().max(f64::MIN_POSITIVE);
        stalled = if improvement < options.min_rel_improvement {
            stalled + 1
        } else {
            0
        };
        prev = epoch_loss;
        if options.patience > 0 && stalled >= options.patience {
            break;
        }
    }
    let final_loss = mean_loss(&model)?;
    model.detach_head();
    if epochs_run == 0 {
        model = params.clone();
    }
    Ok(PretrainOutcome {
        params: model,
        initial_loss,
        final_loss,
        epochs_run,
    })
}

fn xent_loss<'a, T: Real>(
    model: &'a EncoderParams<T>,
    table: &'a EmbeddingTable,
    docs: &'a [Document],
    targets: &'a [(usize, usize)],
) -> impl Fn(&mut Graph<T>, &Bound, usize) -> Result<Var> + Sync + 'a {
    move |g, bound, k| {
        let (doc, class) = targets[k];
        let (s, len) = input(g, model, bound, table, &docs[doc].tokens)?;
        let x = forward(g, model, bound, s, len)?;
        let logits = head_logits(g, bound, x)?;
        g.softmax_cross_entropy(logits, class)
    }
}

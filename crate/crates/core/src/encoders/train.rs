use rayon::prelude::*;

use crate::error::Result;
use crate::tensor_autodiff::{AdamConfig, AdamState, Graph, Real, Tensor, Var};

use super::params::{Bound, EncoderParams};

/// Items differentiated per graph inside one minibatch. Fixed so gradient
/// summation order never depends on the worker count.
const GRAD_CHUNK: usize = 8;

/// Total loss over `batch` and its gradient for every parameter, in
/// parameter order.
pub fn batch_gradients<T, F>(
    params: &EncoderParams<T>,
    batch: &[usize],
    item_loss: F,
) -> Result<(f64, Vec<Tensor<T>>)>
where
    T: Real,
    F: Fn(&mut Graph<T>, &Bound, usize) -> Result<Var> + Sync,
{
    let partials: Vec<(f64, Vec<Tensor<T>>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, true)?;
            let losses = chunk
                .iter()
                .map(|&i| item_loss(&mut g, &bound, i))
                .collect::<Result<Vec<_>>>()?;
            let loss = g.sum_scalars(&losses)?;
            let value = g.value(loss).item()?.as_f64();
            let mut grads = g.backward(loss)?;
            let tensors = bound
                .iter()
                .zip(params.tensors().values())
                .map(|((_, v), p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            Ok((value, tensors))
        })
        .collect::<Result<_>>()?;

    let mut total = 0.0;
    let mut sum: Option<Vec<Tensor<T>>> = None;
    for (value, grads) in partials {
        total += value;
        match &mut sum {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
        }
    }
    let grads = sum.unwrap_or_else(|| {
        params
            .tensors()
            .values()
            .map(|p| Tensor::zeros(p.shape()))
            .collect()
    });
    Ok((total, grads))
}

/// Adam bound to the parameter layout of one [`EncoderParams`].
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    state: AdamState<T>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: AdamConfig, params: &EncoderParams<T>) -> Self {
        Optimizer {
            state: AdamState::new(config, params.tensors().values()),
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams<T>, grads: &[Tensor<T>]) -> Result<()> {
        let mut targets: Vec<&mut Tensor<T>> = params.tensors_mut().collect();
        let grads: Vec<&Tensor<T>> = grads.iter().collect();
        self.state.step(&mut targets, &grads)
    }

    pub fn step_count(&self) -> u64 {
        self.state.step_count()
    }
}

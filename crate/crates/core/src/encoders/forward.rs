use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_autodiff::{Graph, Real, Tensor, Var};
use crate::text::{Document, EmbeddingTable};

use super::params::{
    conv_bias, conv_weight, lstm_bias, lstm_weight, Bound, EncoderKind, EncoderParams, EMBEDDINGS,
    HEAD_BIAS, HEAD_WEIGHT,
};

/// Documents encoded per graph when encoding a corpus.
const ENCODE_CHUNK: usize = 32;

/// Places the word matrix of `tokens` on the graph: a constant built from
/// the table, or a lookup into trainable embeddings when they are bound.
pub fn input<T: Real>(
    g: &mut Graph<T>,
    params: &EncoderParams<T>,
    bound: &Bound,
    table: &EmbeddingTable,
    tokens: &[String],
) -> Result<(Var, usize)> {
    let min_cols = params.config.max_window();
    match bound.try_var(EMBEDDINGS) {
        Some(emb) => {
            let ids = table.token_ids(tokens, min_cols);
            Ok((g.lookup(emb, &ids)?, tokens.len()))
        }
        None => {
            let e = table.embed::<T>(tokens, min_cols);
            Ok((g.constant(e.matrix)?, e.true_len))
        }
    }
}

/// `x = f(s)` for a `[d, cols]` word matrix whose first `true_len` columns
/// are real tokens.
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    params: &EncoderParams<T>,
    bound: &Bound,
    s: Var,
    true_len: usize,
) -> Result<Var> {
    let shape = g.value(s).shape().to_vec();
    if shape.len() != 2 || shape[0] != params.embed_dim {
        return Err(Error::shape(
            "encoder input",
            format!("{shape:?} for embedding dim {}", params.embed_dim),
        ));
    }
    if true_len == 0 {
        return Err(Error::EmptyDocument("no tokens to encode".into()));
    }
    if true_len > shape[1] {
        return Err(Error::shape("encoder input", format!("{true_len} tokens in {shape:?}")));
    }
    match params.config.kind {
        EncoderKind::Average => average(g, s, true_len),
        EncoderKind::Cnn => cnn(g, params, bound, s, true_len),
        EncoderKind::Lstm => lstm(g, params, bound, s, true_len),
    }
}

fn average<T: Real>(g: &mut Graph<T>, s: Var, true_len: usize) -> Result<Var> {
    let cols = (0..true_len)
        .map(|t| g.column(s, t))
        .collect::<Result<Vec<_>>>()?;
    let tokens = g.stack_columns(&cols)?;
    g.mean_over_time(tokens)
}

fn cnn<T: Real>(
    g: &mut Graph<T>,
    params: &EncoderParams<T>,
    bound: &Bound,
    s: Var,
    true_len: usize,
) -> Result<Var> {
    let mut pooled = Vec::with_capacity(params.config.cnn_windows.len());
    for &h in &params.config.cnn_windows {
        // Windows fully inside the real tokens; a window longer than the
        // document is evaluated once at offset 0 over the zero padding.
        let positions = true_len.max(h) + 1 - h;
        let conv = g.conv1d(s, bound.var(&conv_weight(h))?, positions)?;
        let conv = g.add_bias(conv, bound.var(&conv_bias(h))?)?;
        let act = g.relu(conv)?;
        pooled.push(g.max_over_time(act)?);
    }
    let features = g.concat(&pooled)?;
    let out = g.matmul(bound.var("fc.weight")?, features)?;
    g.add_bias(out, bound.var("fc.bias")?)
}

fn lstm<T: Real>(
    g: &mut Graph<T>,
    params: &EncoderParams<T>,
    bound: &Bound,
    s: Var,
    true_len: usize,
) -> Result<Var> {
    let hidden = params.config.lstm_hidden();
    let w = |gate: &str| bound.var(&lstm_weight(gate));
    let b = |gate: &str| bound.var(&lstm_bias(gate));
    let (wi, wf, wo, wg) = (w("i")?, w("f")?, w("o")?, w("g")?);
    let (bi, bf, bo, bg) = (b("i")?, b("f")?, b("o")?, b("g")?);

    let mut h = g.constant(Tensor::zeros(&[hidden]))?;
    let mut c = h;
    let mut states = Vec::with_capacity(true_len);
    for t in 0..true_len {
        let x = g.column(s, t)?;
        let z = g.concat(&[h, x])?;
        let mut gate = |w: Var, b: Var| -> Result<Var> {
            let pre = g.matmul(w, z)?;
            g.add(pre, b)
        };
        let (i_pre, f_pre, o_pre, g_pre) = (gate(wi, bi)?, gate(wf, bf)?, gate(wo, bo)?, gate(wg, bg)?);
        let i = g.sigmoid(i_pre)?;
        let f = g.sigmoid(f_pre)?;
        let o = g.sigmoid(o_pre)?;
        let cand = g.tanh(g_pre)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        c = g.add(keep, write)?;
        let squashed = g.tanh(c)?;
        h = g.mul(o, squashed)?;
        states.push(h);
    }
    let stacked = g.stack_columns(&states)?;
    g.mean_over_time(stacked)
}

/// Softmax logits of the classifier head applied to `x`.
pub fn head_logits<T: Real>(g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
    let logits = g.matmul(bound.var(HEAD_WEIGHT)?, x)?;
    g.add_bias(logits, bound.var(HEAD_BIAS)?)
}

/// Encodes one document outside any training graph.
pub fn encode<T: Real>(
    params: &EncoderParams<T>,
    table: &EmbeddingTable,
    doc: &Document,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false)?;
    let (s, len) = input(&mut g, params, &bound, table, &doc.tokens)?;
    let x = forward(&mut g, params, &bound, s, len)?;
    Ok(g.value(x).to_f64())
}

/// Encodes every document into the rows of an `N x p` matrix. Work is
/// split into fixed chunks, so the result does not depend on thread count.
pub fn encode_all<T: Real>(
    params: &EncoderParams<T>,
    table: &EmbeddingTable,
    docs: &[Document],
) -> Result<Array2<f64>> {
    let p = params.representation_dim();
    let rows: Vec<Vec<f64>> = docs
        .par_chunks(ENCODE_CHUNK)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, false)?;
            let mut out = Vec::with_capacity(chunk.len() * p);
            for doc in chunk {
                let (s, len) = input(&mut g, params, &bound, table, &doc.tokens)?;
                let x = forward(&mut g, params, &bound, s, len)?;
                out.extend(g.value(x).to_f64());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((docs.len(), p), flat)
        .map_err(|e| Error::shape("encode_all", e.to_string()))
}

/// Mean of the table vectors of `tokens`: the averaged word vector baseline.
pub fn encode_average(table: &EmbeddingTable, tokens: &[String]) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyDocument("no tokens to average".into()));
    }
    let mut acc = vec![0.0; table.dim()];
    for t in tokens {
        for (a, &v) in acc.iter_mut().zip(table.vector(t)) {
            *a += v;
        }
    }
    let n = tokens.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

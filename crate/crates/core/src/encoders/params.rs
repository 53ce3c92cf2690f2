use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_autodiff::{Graph, Real, Tensor, Var};
use crate::text::EmbeddingTable;

/// Half-width of the uniform range for weight initialization.
pub const INIT_RANGE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

pub const EMBEDDINGS: &str = "embeddings";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Average,
    Cnn,
    Lstm,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Average => "average",
            EncoderKind::Cnn => "cnn",
            EncoderKind::Lstm => "lstm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub output_dim: usize,
    pub cnn_windows: Vec<usize>,
    pub cnn_filters_per_window: usize,
    /// Defaults to `output_dim`; the LSTM has no projection layer, so a
    /// different value changes the output size.
    pub lstm_hidden: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Cnn,
            output_dim: 100,
            cnn_windows: vec![1, 2, 3],
            cnn_filters_per_window: 500,
            lstm_hidden: None,
        }
    }
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind) -> Self {
        EncoderConfig {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(Error::InvalidArgument("output_dim must be at least 1".into()));
        }
        if self.kind == EncoderKind::Cnn {
            if self.cnn_windows.is_empty() || self.cnn_windows.contains(&0) {
                return Err(Error::InvalidArgument("cnn windows must be positive".into()));
            }
            let mut sorted = self.cnn_windows.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.cnn_windows.len() {
                return Err(Error::InvalidArgument("cnn windows must be distinct".into()));
            }
            if self.cnn_filters_per_window == 0 {
                return Err(Error::InvalidArgument("need at least one filter per window".into()));
            }
        }
        if self.lstm_hidden == Some(0) {
            return Err(Error::InvalidArgument("lstm_hidden must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest convolution window; documents are padded to this many columns.
    pub fn max_window(&self) -> usize {
        match self.kind {
            EncoderKind::Cnn => self.cnn_windows.iter().copied().max().unwrap_or(1),
            _ => 1,
        }
    }

    pub fn lstm_hidden(&self) -> usize {
        self.lstm_hidden.unwrap_or(self.output_dim)
    }

    /// Size of `f(s)` for word vectors of dimension `embed_dim`.
    pub fn representation_dim(&self, embed_dim: usize) -> usize {
        match self.kind {
            EncoderKind::Average => embed_dim,
            EncoderKind::Cnn => self.output_dim,
            EncoderKind::Lstm => self.lstm_hidden(),
        }
    }
}

pub(crate) fn conv_weight(h: usize) -> String {
    format!("conv{h}.weight")
}

pub(crate) fn conv_bias(h: usize) -> String {
    format!("conv{h}.bias")
}

pub(crate) const LSTM_GATES: [&str; 4] = ["i", "f", "o", "g"];

pub(crate) fn lstm_weight(gate: &str) -> String {
    format!("lstm.w_{gate}")
}

pub(crate) fn lstm_bias(gate: &str) -> String {
    format!("lstm.b_{gate}")
}

/// Trainable weights of one encoder, keyed by name in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub embed_dim: usize,
    tensors: BTreeMap<String, Tensor<T>>,
}

fn uniform<T: Real, R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.random_range(-INIT_RANGE..INIT_RANGE)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

impl<T: Real> EncoderParams<T> {
    /// Uniform weights, zero biases and a positive forget-gate bias.
    pub fn init<R: Rng>(config: EncoderConfig, embed_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if embed_dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut tensors = BTreeMap::new();
        let d = embed_dim;
        match config.kind {
            EncoderKind::Average => {}
            EncoderKind::Cnn => {
                let f = config.cnn_filters_per_window;
                for &h in &config.cnn_windows {
                    tensors.insert(conv_weight(h), uniform(rng, &[f, h, d]));
                    tensors.insert(conv_bias(h), Tensor::zeros(&[f]));
                }
                let pooled = f * config.cnn_windows.len();
                tensors.insert("fc.weight".into(), uniform(rng, &[config.output_dim, pooled]));
                tensors.insert("fc.bias".into(), Tensor::zeros(&[config.output_dim]));
            }
            EncoderKind::Lstm => {
                let h = config.lstm_hidden();
                for gate in LSTM_GATES {
                    tensors.insert(lstm_weight(gate), uniform(rng, &[h, h + d]));
                    let bias = if gate == "f" {
                        Tensor::filled(&[h], T::of(FORGET_BIAS))
                    } else {
                        Tensor::zeros(&[h])
                    };
                    tensors.insert(lstm_bias(gate), bias);
                }
            }
        }
        Ok(EncoderParams {
            config,
            embed_dim,
            tensors,
        })
    }

    /// Assembles parameters from named tensors, checking every shape.
    pub fn from_parts(
        config: EncoderConfig,
        embed_dim: usize,
        tensors: BTreeMap<String, Tensor<T>>,
    ) -> Result<Self> {
        let p = EncoderParams {
            config,
            embed_dim,
            tensors,
        };
        p.validate_shapes()?;
        Ok(p)
    }

    fn validate_shapes(&self) -> Result<()> {
        self.config.validate()?;
        let d = self.embed_dim;
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        match self.config.kind {
            EncoderKind::Average => {}
            EncoderKind::Cnn => {
                let f = self.config.cnn_filters_per_window;
                for &h in &self.config.cnn_windows {
                    expected.push((conv_weight(h), vec![f, h, d]));
                    expected.push((conv_bias(h), vec![f]));
                }
                let p = self.config.output_dim;
                expected.push(("fc.weight".into(), vec![p, f * self.config.cnn_windows.len()]));
                expected.push(("fc.bias".into(), vec![p]));
            }
            EncoderKind::Lstm => {
                let h = self.config.lstm_hidden();
                for gate in LSTM_GATES {
                    expected.push((lstm_weight(gate), vec![h, h + d]));
                    expected.push((lstm_bias(gate), vec![h]));
                }
            }
        }
        for (name, shape) in &expected {
            match self.tensors.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(
                        "encoder params",
                        format!("{name} is {:?}, expected {shape:?}", t.shape()),
                    ))
                }
                None => {
                    return Err(Error::shape("encoder params", format!("missing {name}")))
                }
            }
        }
        if let Some(t) = self.tensors.get(EMBEDDINGS) {
            if t.rank() != 2 || t.cols() != d {
                return Err(Error::shape("encoder params", format!("embeddings {:?}", t.shape())));
            }
        }
        let out = self.config.representation_dim(d);
        if let Some(w) = self.tensors.get(HEAD_WEIGHT) {
            let c = w.rows();
            let bias_ok = self.tensors.get(HEAD_BIAS).is_some_and(|b| b.shape() == [c]);
            if w.shape() != [c, out] || !bias_ok {
                return Err(Error::shape("encoder params", "classifier head"));
            }
        }
        Ok(())
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim(self.embed_dim)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.values_mut()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Makes the word vectors (plus unknown vector) trainable parameters.
    pub fn attach_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        if table.dim() != self.embed_dim {
            return Err(Error::shape(
                "attach_embeddings",
                format!("table dim {} vs encoder {}", table.dim(), self.embed_dim),
            ));
        }
        self.tensors.insert(EMBEDDINGS.into(), table.as_tensor());
        Ok(())
    }

    pub fn has_embeddings(&self) -> bool {
        self.tensors.contains_key(EMBEDDINGS)
    }

    pub fn detach_embeddings(&mut self) -> Option<Tensor<T>> {
        self.tensors.remove(EMBEDDINGS)
    }

    /// Adds a softmax classifier head over `classes` outputs.
    pub fn attach_head<R: Rng>(&mut self, classes: usize, rng: &mut R) {
        let p = self.representation_dim();
        self.tensors.insert(HEAD_WEIGHT.into(), uniform(rng, &[classes, p]));
        self.tensors.insert(HEAD_BIAS.into(), Tensor::zeros(&[classes]));
    }

    pub fn has_head(&self) -> bool {
        self.tensors.contains_key(HEAD_WEIGHT)
    }

    pub fn detach_head(&mut self) {
        self.tensors.remove(HEAD_WEIGHT);
        self.tensors.remove(HEAD_BIAS);
    }

    /// Registers every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            let v = if trainable {
                g.param(t.clone())?
            } else {
                g.constant(t.clone())?
            };
            vars.insert(name.clone(), v);
        }
        Ok(Bound { vars })
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams {
            config: self.config.clone(),
            embed_dim: self.embed_dim,
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Graph handles of a bound [`EncoderParams`], by name.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::shape("encoder", format!("missing parameter {name}")))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// `(name, var)` pairs in parameter order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

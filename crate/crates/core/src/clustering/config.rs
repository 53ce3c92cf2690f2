use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_autodiff::AdamConfig;

/// How labeled points weigh into the centroid update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Weights that make the centroid a stationary point of the objective
    /// with hinge indicators frozen.
    #[default]
    Derived,
    /// `w_g = (1-a)(1 - sum d')` and `w_k = (1-a)(d'_k - sum_{j != g,k} d'_j)`.
    /// Its signs on the hinge terms disagree with `Derived`.
    PaperLiteral,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Derived => "derived",
            WeightMode::PaperLiteral => "paper_literal",
        })
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" => Ok(WeightMode::Derived),
            "paper_literal" | "paper-literal" => Ok(WeightMode::PaperLiteral),
            other => Err(Error::InvalidArgument(format!("unknown weight mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemiConfig {
    /// Number of clusters.
    pub k: usize,
    /// Weight of the unsupervised term; `1 - alpha` goes to labeled points.
    pub alpha: f64,
    /// Hinge margin in squared distance.
    pub margin: f64,
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    /// Passes over the corpus per parameter update.
    pub inner_epochs: usize,
    pub batch_size: usize,
    pub weight_mode: WeightMode,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for SemiConfig {
    fn default() -> Self {
        SemiConfig {
            k: 2,
            alpha: 0.01,
            margin: 1.0,
            max_iters: 100,
            tol: 1e-6,
            inner_epochs: 1,
            batch_size: 32,
            weight_mode: WeightMode::Derived,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl SemiConfig {
    pub fn new(k: usize) -> Self {
        SemiConfig {
            k,
            ..SemiConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.k));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be finite and non-negative, got {}", self.margin));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return bad(format!("tol must be non-negative, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

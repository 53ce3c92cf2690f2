//! Text checkpoint of encoder parameters.
//!
//! ```text
//! shortclust-params 1
//! dtype f32
//! embed_dim 300
//! config {"kind":"cnn","output_dim":100,...}
//! tensors 8
//! conv1.bias 1 500
//! 0 0 0 ...
//! conv1.weight 3 500 1 300
//! 0.013 -0.07 ...
//! ```
//!
//! Each tensor is a header line (`name rank dims...`) followed by one line of
//! row-major values printed in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_autodiff::{Real, Tensor};

use super::params::{EncoderConfig, EncoderParams};

pub const CHECKPOINT_MAGIC: &str = "shortclust-params";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_string<T: Real>(params: &EncoderParams<T>) -> Result<String> {
    let mut out = String::new();
    let config = serde_json::to_string(&params.config)?;
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "dtype {}", T::NAME);
    let _ = writeln!(out, "embed_dim {}", params.embed_dim);
    let _ = writeln!(out, "config {config}");
    let _ = writeln!(out, "tensors {}", params.tensors().len());
    for (name, t) in params.tensors() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{name} {} {}", t.rank(), dims.join(" "));
        let values: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", values.join(" "));
    }
    Ok(out)
}

pub fn save<T: Real>(params: &EncoderParams<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(params)?)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected `{key}` line")))
}

/// Parses a checkpoint; values are converted to `T` whatever dtype was saved.
pub fn from_str<T: Real>(text: &str) -> Result<EncoderParams<T>> {
    let mut lines = text.lines();
    let version = keyed(lines.next(), CHECKPOINT_MAGIC)?;
    if version.trim() != CHECKPOINT_VERSION.to_string() {
        return Err(bad(format!("unsupported version {version}")));
    }
    keyed(lines.next(), "dtype")?;
    let embed_dim: usize = keyed(lines.next(), "embed_dim")?
        .trim()
        .parse()
        .map_err(|_| bad("embed_dim"))?;
    let config: EncoderConfig = serde_json::from_str(keyed(lines.next(), "config")?)?;
    let count: usize = keyed(lines.next(), "tensors")?
        .trim()
        .parse()
        .map_err(|_| bad("tensor count"))?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let header = lines.next().ok_or_else(|| bad("truncated tensor header"))?;
        let mut fields = header.split_whitespace();
        let name = fields.next().ok_or_else(|| bad("empty tensor header"))?;
        let nums: Vec<usize> = fields
            .map(|f| f.parse().map_err(|_| bad(format!("bad dimension in {header:?}"))))
            .collect::<Result<_>>()?;
        let (rank, dims) = nums.split_first().ok_or_else(|| bad("missing rank"))?;
        if *rank != dims.len() {
            return Err(bad(format!("rank {rank} with {} dims for {name}", dims.len())));
        }
        let values = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
        let data: Vec<T> = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().map(T::of).map_err(|_| bad(format!("bad value in {name}"))))
            .collect::<Result<_>>()?;
        let t = Tensor::new(dims.to_vec(), data).map_err(|e| bad(format!("{name}: {e}")))?;
        tensors.insert(name.to_string(), t);
    }
    EncoderParams::from_parts(config, embed_dim, tensors)
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<EncoderParams<T>> {
    from_str(&fs::read_to_string(path)?)
}

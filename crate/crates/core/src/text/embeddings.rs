use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor_autodiff::{Real, Tensor};

/// Half-width of the uniform range the shared unknown-word vector is drawn from.
pub const UNK_RANGE: f64 = 0.25;

/// Vocabulary plus one `d`-dimensional vector per word and a shared vector
/// for out-of-vocabulary tokens. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
    unk: Vec<f64>,
}

/// The `d x cols` matrix of a document and its count of real tokens.
#[derive(Clone, Debug)]
pub struct Embedded<T> {
    pub matrix: Tensor<T>,
    pub true_len: usize,
}

fn unk_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| rng.random_range(-UNK_RANGE..UNK_RANGE))
        .collect()
}

impl EmbeddingTable {
    /// Builds a table from in-memory rows; later duplicates are ignored.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut table = EmbeddingTable {
            vocab: HashMap::new(),
            words: Vec::new(),
            vectors: Vec::new(),
            dim,
            unk: unk_vector(dim, seed),
        };
        for (i, (word, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            table.insert(word, &v);
        }
        Ok(table)
    }

    fn insert(&mut self, word: String, v: &[f64]) {
        if self.vocab.contains_key(&word) {
            return;
        }
        self.vocab.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(v);
    }

    /// Reads the textual format: an optional `count dim` header line, then
    /// one `token v_1 ... v_d` line per word.
    pub fn load(path: impl AsRef<Path>, expected_dim: usize, seed: u64) -> Result<Self> {
        Self::load_filtered(path, expected_dim, seed, None)
    }

    /// Vector dimension of an embedding file, from its `count dim` header or
    /// else its first row.
    pub fn sniff_dim(path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                return Ok(fields[1].parse().expect("checked above"));
            }
            if fields.len() < 2 {
                break;
            }
            return Ok(fields.len() - 1);
        }
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no embedding rows".into(),
        })
    }

    /// Like [`EmbeddingTable::load`] but keeps only words in `keep`.
    /// Rows of skipped words are still validated.
    pub fn load_filtered(
        path: impl AsRef<Path>,
        expected_dim: usize,
        seed: u64,
        keep: Option<&HashSet<String>>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut table = Self::from_rows(Vec::new(), expected_dim, seed)?;
        let mut row = Vec::with_capacity(expected_dim);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            if idx == 0 {
                let rest: Vec<&str> = line.split_whitespace().collect();
                if rest.len() == 2 && rest.iter().all(|f| f.parse::<usize>().is_ok()) {
                    let dim: usize = rest[1].parse().expect("checked above");
                    if dim != expected_dim {
                        return Err(Error::DimensionMismatch {
                            line: lineno,
                            expected: expected_dim,
                            found: dim,
                        });
                    }
                    continue;
                }
            }
            row.clear();
            for f in fields {
                let x: f64 = f.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("malformed float {f:?}"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("non-finite value {f:?}"),
                    });
                }
                row.push(x);
            }
            if row.len() != expected_dim {
                return Err(Error::DimensionMismatch {
                    line: lineno,
                    expected: expected_dim,
                    found: row.len(),
                });
            }
            if keep.is_none_or(|k| k.contains(word)) {
                table.insert(word.to_string(), &row);
            }
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }

    /// Vector for `word`, or the unknown-word vector.
    pub fn vector(&self, word: &str) -> &[f64] {
        match self.index_of(word) {
            Some(i) => &self.vectors[i * self.dim..(i + 1) * self.dim],
            None => &self.unk,
        }
    }

    /// Builds `S`: column `i` is the vector of token `i`, right-padded with
    /// zero columns up to `min_cols`.
    pub fn embed<T: Real>(&self, tokens: &[String], min_cols: usize) -> Embedded<T> {
        let true_len = tokens.len();
        let cols = true_len.max(min_cols).max(1);
        let mut data = vec![T::zero(); self.dim * cols];
        for (t, tok) in tokens.iter().enumerate() {
            for (i, &x) in self.vector(tok).iter().enumerate() {
                data[i * cols + t] = T::of(x);
            }
        }
        Embedded {
            matrix: Tensor::matrix(self.dim, cols, data).expect("consistent dims"),
            true_len,
        }
    }

    /// Row ids into [`EmbeddingTable::as_tensor`]: the unknown vector is
    /// the last row and padding is `None`.
    pub fn token_ids(&self, tokens: &[String], min_cols: usize) -> Vec<Option<usize>> {
        let unk = self.words.len();
        let mut ids: Vec<Option<usize>> = tokens
            .iter()
            .map(|t| Some(self.index_of(t).unwrap_or(unk)))
            .collect();
        ids.resize(tokens.len().max(min_cols).max(1), None);
        ids
    }

    /// All word vectors plus the unknown vector as a `[|V| + 1, d]` tensor.
    pub fn as_tensor<T: Real>(&self) -> Tensor<T> {
        let mut data: Vec<T> = self.vectors.iter().map(|&x| T::of(x)).collect();
        data.extend(self.unk.iter().map(|&x| T::of(x)));
        Tensor::matrix(self.words.len() + 1, self.dim, data).expect("consistent dims")
    }

    /// Copy of this table with vectors replaced from a `[|V| + 1, d]` tensor.
    pub fn with_tensor<T: Real>(&self, t: &Tensor<T>) -> Result<Self> {
        if t.shape() != [self.words.len() + 1, self.dim] {
            return Err(Error::shape(
                "embedding table",
                format!("{:?} for {} words of dim {}", t.shape(), self.words.len(), self.dim),
            ));
        }
        let all = t.to_f64();
        let split = self.words.len() * self.dim;
        Ok(EmbeddingTable {
            vocab: self.vocab.clone(),
            words: self.words.clone(),
            vectors: all[..split].to_vec(),
            dim: self.dim,
            unk: all[split..].to_vec(),
        })
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Document;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `label<TAB>text` per line.
    #[default]
    Tsv,
    /// One JSON object per line with `label` and `text` fields.
    Jsonl,
}

impl CorpusFormat {
    /// Guesses from the file extension, defaulting to tsv.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::Tsv => "tsv",
            CorpusFormat::Jsonl => "jsonl",
        })
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Labeled short texts. Label ids index `label_names`, which is sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub label_names: Vec<String>,
    pub source: PathBuf,
    pub format: CorpusFormat,
    /// Lines skipped because nothing was left after tokenization.
    pub dropped: usize,
}

#[derive(Deserialize)]
struct JsonRecord {
    label: serde_json::Value,
    text: String,
}

impl Corpus {
    /// Builds a corpus from `(label, text)` pairs, dropping texts that
    /// tokenize to nothing.
    pub fn from_pairs<L: AsRef<str>, S: AsRef<str>>(
        pairs: impl IntoIterator<Item = (L, S)>,
        source: impl Into<PathBuf>,
        format: CorpusFormat,
    ) -> Result<Self> {
        let raw: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(l, s)| (l.as_ref().to_string(), s.as_ref().to_string()))
            .collect();
        Self::build(raw, source.into(), format, 0)
    }

    fn build(raw: Vec<(String, String)>, source: PathBuf, format: CorpusFormat, mut dropped: usize) -> Result<Self> {
        let mut kept = Vec::new();
        for (label, text) in raw {
            match Document::new(0, text, None) {
                Ok(doc) => kept.push((label, doc)),
                Err(Error::EmptyDocument(_)) => dropped += 1,
                Err(e) => return Err(e),
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let ids: BTreeMap<String, usize> = kept
            .iter()
            .map(|(l, _)| (l.clone(), 0))
            .collect::<BTreeMap<_, _>>()
            .into_keys()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        let label_names: Vec<String> = ids.keys().cloned().collect();
        let documents = kept
            .into_iter()
            .enumerate()
            .map(|(i, (label, mut doc))| {
                doc.id = i;
                doc.label = Some(ids[&label]);
                doc
            })
            .collect();
        Ok(Corpus {
            documents,
            label_names,
            source,
            format,
            dropped,
        })
    }

    pub fn parse(text: &str, format: CorpusFormat, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut raw = Vec::new();
        let mut dropped = 0;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let bad = |msg: String| Error::Parse {
                path: source.clone(),
                line: lineno,
                msg,
            };
            if line.trim().is_empty() {
                dropped += 1;
                continue;
            }
            match format {
                CorpusFormat::Tsv => {
                    let (label, body) = line
                        .split_once('\t')
                        .ok_or_else(|| bad("expected `label<TAB>text`".into()))?;
                    let label = label.trim();
                    if label.is_empty() {
                        return Err(bad("empty label".into()));
                    }
                    raw.push((label.to_string(), body.to_string()));
                }
                CorpusFormat::Jsonl => {
                    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
                    let label = match rec.label {
                        serde_json::Value::String(s) => s,
                        serde_json::Value::Number(n) => n.to_string(),
                        other => return Err(bad(format!("unsupported label {other}"))),
                    };
                    raw.push((label, rec.text));
                }
            }
        }
        Self::build(raw, source, format, dropped)
    }

    pub fn load(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text, format, path)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    /// Gold label id of every document.
    pub fn labels(&self) -> Vec<usize> {
        self.documents
            .iter()
            .map(|d| d.label.expect("corpus documents are labeled"))
            .collect()
    }

    /// Keeps at most `per_class` documents of every label, chosen by a
    /// seeded shuffle; document order is otherwise preserved.
    pub fn subsample(&self, per_class: usize, seed: u64) -> Result<Self> {
        if per_class == 0 {
            return Err(Error::InvalidArgument("per_class must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng);
        let mut taken = vec![0usize; self.num_labels()];
        let mut keep = vec![false; self.len()];
        for i in order {
            let y = self.documents[i].label.expect("labeled");
            if taken[y] < per_class {
                taken[y] += 1;
                keep[i] = true;
            }
        }
        let raw = self
            .documents
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(d, _)| (self.label_names[d.label.expect("labeled")].clone(), d.raw.clone()))
            .collect();
        Self::build(raw, self.source.clone(), self.format, 0)
    }

    /// Writes the corpus back out in `format`.
    pub fn to_text(&self, format: CorpusFormat) -> Result<String> {
        let mut out = String::new();
        for d in &self.documents {
            let label = &self.label_names[d.label.expect("labeled")];
            match format {
                CorpusFormat::Tsv => {
                    if d.raw.contains('\n') {
                        return Err(Error::InvalidArgument(format!("document {} spans lines", d.id)));
                    }
                    out.push_str(&format!("{label}\t{}\n", d.raw));
                }
                CorpusFormat::Jsonl => {
                    let rec = serde_json::json!({ "label": label, "text": d.raw });
                    out.push_str(&rec.to_string());
                    out.push('\n');
                }
            }
        }
        Ok(out)
    }
}

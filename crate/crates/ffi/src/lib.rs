//! C interface to `shortclust`.
//!
//! Every function returns an [`ScStatus`]. On failure the message is kept in
//! a thread-local buffer readable through [`sc_last_error`] until the next
//! call on the same thread. Objects cross the boundary as opaque handles that
//! must be released with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use ndarray::ArrayView2;
use shortclust::assignment::hungarian;
use shortclust::clustering::{fit, FixedVectors, SemiConfig, WeightMode};
use shortclust::harness::{run_trials, Corpus, CorpusFormat, ExperimentConfig, ExperimentReport};
use shortclust::metrics::{acc, ami};
use shortclust::text::EmbeddingTable;
use shortclust::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    Numeric = 6,
    Clustering = 7,
    Panic = 8,
}

impl From<&Error> for ScStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io(_) => ScStatus::Io,
            Error::Parse { .. } | Error::DimensionMismatch { .. } | Error::Json(_) | Error::Checkpoint(_) => {
                ScStatus::Parse
            }
            Error::NonFinite(_) => ScStatus::Numeric,
            Error::InsufficientPoints { .. }
            | Error::TooManyLabels { .. }
            | Error::UnmappedLabel(_)
            | Error::RatioTooSmall { .. }
            | Error::EmptyCorpus => ScStatus::Clustering,
            _ => ScStatus::InvalidArgument,
        }
    }
}

/// Weight mode for [`ScClusterOptions`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScWeightMode {
    Derived = 0,
    PaperLiteral = 1,
}

/// Settings for [`sc_cluster_vectors`]. Start from
/// [`sc_cluster_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ScClusterOptions {
    pub k: usize,
    pub alpha: f64,
    pub margin: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub weight_mode: ScWeightMode,
}

/// Loaded corpus.
pub struct ScCorpus(Corpus);

/// Loaded word vectors.
pub struct ScEmbeddings(EmbeddingTable);

/// Result of [`sc_run_trials`].
pub struct ScReport(ExperimentReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(ScStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(ScStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ScStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ScStatus::Panic
        }
    }
}

unsafe fn view<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn view_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ScStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library and valid until the next call.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Adjusted mutual information of two labelings of `n` items.
#[no_mangle]
pub unsafe extern "C" fn sc_ami(labels: *const usize, clusters: *const usize, n: usize, result: *mut f64) -> ScStatus {
    guard(|| {
        let score = ami(view(labels, n, "labels")?, view(clusters, n, "clusters")?)?;
        *out(result, "result")? = score;
        Ok(())
    })
}

/// Clustering accuracy under the best one-to-one label mapping.
#[no_mangle]
pub unsafe extern "C" fn sc_acc(labels: *const usize, clusters: *const usize, n: usize, result: *mut f64) -> ScStatus {
    guard(|| {
        let score = acc(view(labels, n, "labels")?, view(clusters, n, "clusters")?)?;
        *out(result, "result")? = score;
        Ok(())
    })
}

/// Minimum-cost assignment for a row-major `rows x cols` matrix with
/// `rows <= cols`. Writes the matched column of each row to
/// `assignment[0..rows]`.
#[no_mangle]
pub unsafe extern "C" fn sc_hungarian(
    cost: *const f64,
    rows: usize,
    cols: usize,
    assignment: *mut usize,
    total: *mut f64,
) -> ScStatus {
    guard(|| {
        let data = view(cost, rows * cols, "cost")?;
        let m = ArrayView2::from_shape((rows, cols), data).map_err(|e| Failure(ScStatus::InvalidArgument, e.to_string()))?;
        let a = hungarian(&m.to_owned())?;
        view_mut(assignment, rows, "assignment")?.copy_from_slice(&a.rows);
        if !total.is_null() {
            *total = a.cost;
        }
        Ok(())
    })
}

/// Default options for `k` clusters.
#[no_mangle]
pub extern "C" fn sc_cluster_options_default(k: usize) -> ScClusterOptions {
    let c = SemiConfig::new(k);
    ScClusterOptions {
        k,
        alpha: c.alpha,
        margin: c.margin,
        max_iters: c.max_iters,
        tol: c.tol,
        seed: c.seed,
        weight_mode: ScWeightMode::Derived,
    }
}

/// Semi-supervised k-means on fixed row-major `n x p` vectors.
///
/// `labeled_docs[i]` carries label `labeled_labels[i]` for `i < n_labeled`;
/// pass zero labels and `alpha = 1` for plain k-means. Writes `n` cluster ids
/// and, when non-null, the final objective.
#[no_mangle]
pub unsafe extern "C" fn sc_cluster_vectors(
    vectors: *const f64,
    n: usize,
    p: usize,
    labeled_docs: *const usize,
    labeled_labels: *const usize,
    n_labeled: usize,
    options: *const ScClusterOptions,
    assignments: *mut usize,
    objective: *mut f64,
) -> ScStatus {
    guard(|| {
        let o = *options.as_ref().ok_or_else(|| null("options"))?;
        let x = ArrayView2::from_shape((n, p), view(vectors, n * p, "vectors")?)
            .map_err(|e| Failure(ScStatus::InvalidArgument, e.to_string()))?
            .to_owned();
        let docs = view(labeled_docs, n_labeled, "labeled_docs")?;
        let labels = view(labeled_labels, n_labeled, "labeled_labels")?;
        let labeled: Vec<(usize, usize)> = docs.iter().copied().zip(labels.iter().copied()).collect();
        let config = SemiConfig {
            alpha: o.alpha,
            margin: o.margin,
            max_iters: o.max_iters,
            tol: o.tol,
            seed: o.seed,
            weight_mode: match o.weight_mode {
                ScWeightMode::Derived => WeightMode::Derived,
                ScWeightMode::PaperLiteral => WeightMode::PaperLiteral,
            },
            ..SemiConfig::new(o.k)
        };
        let state = fit(&mut FixedVectors(&x), &labeled, &config)?;
        view_mut(assignments, n, "assignments")?.copy_from_slice(&state.assignments);
        if !objective.is_null() {
            *objective = state.final_objective().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Loads a corpus. `format` is `"tsv"`, `"jsonl"` or NULL to guess from the
/// file extension.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_load(path: *const c_char, format: *const c_char, corpus: *mut *mut ScCorpus) -> ScStatus {
    guard(|| {
        let slot = out(corpus, "corpus")?;
        let path = text(path, "path")?;
        let format = if format.is_null() {
            CorpusFormat::from_path(Path::new(path))
        } else {
            text(format, "format")?.parse()?
        };
        let c = Corpus::load(path, format)?;
        *slot = Box::into_raw(Box::new(ScCorpus(c)));
        Ok(())
    })
}

/// Number of documents, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_len(corpus: *const ScCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Number of distinct labels, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_corpus_num_labels(corpus: *const ScCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.num_labels())
}

#[no_mangle]
pub unsafe extern "C" fn sc_corpus_free(corpus: *mut ScCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads word vectors in text format. The dimension is read from the file.
/// When `corpus` is non-null only words occurring in it are kept.
#[no_mangle]
pub unsafe extern "C" fn sc_embeddings_load(
    path: *const c_char,
    corpus: *const ScCorpus,
    seed: u64,
    embeddings: *mut *mut ScEmbeddings,
) -> ScStatus {
    guard(|| {
        let slot = out(embeddings, "embeddings")?;
        let path = text(path, "path")?;
        let keep: Option<HashSet<String>> = corpus
            .as_ref()
            .map(|c| c.0.documents.iter().flat_map(|d| d.tokens.iter().cloned()).collect());
        let dim = EmbeddingTable::sniff_dim(path)?;
        let table = EmbeddingTable::load_filtered(path, dim, seed, keep.as_ref())?;
        *slot = Box::into_raw(Box::new(ScEmbeddings(table)));
        Ok(())
    })
}

/// Vector dimension, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_embeddings_dim(embeddings: *const ScEmbeddings) -> usize {
    embeddings.as_ref().map_or(0, |e| e.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn sc_embeddings_free(embeddings: *mut ScEmbeddings) {
    if !embeddings.is_null() {
        drop(Box::from_raw(embeddings));
    }
}

/// Runs an experiment configured by a TOML string (NULL for defaults).
/// `embeddings` may be NULL for the bag-of-words baselines.
#[no_mangle]
pub unsafe extern "C" fn sc_run_trials(
    corpus: *const ScCorpus,
    embeddings: *const ScEmbeddings,
    config_toml: *const c_char,
    report: *mut *mut ScReport,
) -> ScStatus {
    guard(|| {
        let slot = out(report, "report")?;
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let config = if config_toml.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_toml(text(config_toml, "config_toml")?)?
        };
        let r = run_trials(&corpus.0, embeddings.as_ref().map(|e| &e.0), &config)?;
        *slot = Box::into_raw(Box::new(ScReport(r)));
        Ok(())
    })
}

/// Mean AMI and ACC over trials. Either output may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_report_summary(report: *const ScReport, ami_mean: *mut f64, acc_mean: *mut f64) -> ScStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if !ami_mean.is_null() {
            *ami_mean = r.0.summary.ami_mean;
        }
        if !acc_mean.is_null() {
            *acc_mean = r.0.summary.acc_mean;
        }
        Ok(())
    })
}

/// Number of trials, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sc_report_trials(report: *const ScReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.trials.len())
}

/// Report as JSON. Release the string with [`sc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sc_report_json(report: *const ScReport, json: *mut *mut c_char) -> ScStatus {
    guard(|| {
        let slot = out(json, "json")?;
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let s = CString::new(r.0.to_json()?).map_err(|e| Failure(ScStatus::InvalidArgument, e.to_string()))?;
        *slot = s.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sc_report_free(report: *mut ScReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    fit, ClusterState, FixedVectors, NeuralRepresentation, Representation, SemiConfig, WeightMode,
};
use crate::encoders::{pretrain, EncoderConfig, EncoderKind, EncoderParams, PretrainOptions};
use crate::error::{Error, Result};
use crate::metrics::{acc, ami};
use crate::tensor_autodiff::{AdamConfig, Real};
use crate::text::EmbeddingTable;

use super::corpus::{Corpus, CorpusFormat};
use super::split::{split_labeled, Split};
use super::vectorize::{vectorize_average, vectorize_bow, vectorize_tfidf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    SemiCnn,
    SemiLstm,
    KmeansBow,
    KmeansTfidf,
    KmeansAvgvec,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SemiCnn,
        Method::SemiLstm,
        Method::KmeansBow,
        Method::KmeansTfidf,
        Method::KmeansAvgvec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SemiCnn => "semi-cnn",
            Method::SemiLstm => "semi-lstm",
            Method::KmeansBow => "kmeans-bow",
            Method::KmeansTfidf => "kmeans-tfidf",
            Method::KmeansAvgvec => "kmeans-avgvec",
        }
    }

    pub fn encoder(self) -> Option<EncoderKind> {
        match self {
            Method::SemiCnn => Some(EncoderKind::Cnn),
            Method::SemiLstm => Some(EncoderKind::Lstm),
            _ => None,
        }
    }

    pub fn needs_embeddings(self) -> bool {
        !matches!(self, Method::KmeansBow | Method::KmeansTfidf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

/// Encoder shape; the kind comes from the method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub output_dim: usize,
    pub cnn_windows: Vec<usize>,
    pub cnn_filters_per_window: usize,
    pub lstm_hidden: Option<usize>,
    /// Train the word vectors along with the encoder.
    pub fine_tune_embeddings: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let base = EncoderConfig::new(EncoderKind::Cnn);
        EncoderSettings {
            output_dim: base.output_dim,
            cnn_windows: base.cnn_windows,
            cnn_filters_per_window: base.cnn_filters_per_window,
            lstm_hidden: base.lstm_hidden,
            fine_tune_embeddings: false,
        }
    }
}

impl EncoderSettings {
    pub fn config(&self, kind: EncoderKind) -> EncoderConfig {
        EncoderConfig {
            kind,
            output_dim: self.output_dim,
            cnn_windows: self.cnn_windows.clone(),
            cnn_filters_per_window: self.cnn_filters_per_window,
            lstm_hidden: self.lstm_hidden,
        }
    }
}

/// Everything that determines an experiment's numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub alpha: f64,
    pub margin: f64,
    /// Fraction of documents whose labels are revealed.
    pub ratio: f64,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t`.
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub inner_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_mode: WeightMode,
    /// When false the labeled subset is still drawn and excluded from
    /// evaluation, but its labels are not shown to the model.
    pub supervised: bool,
    pub pretrain: bool,
    pub pretrain_epochs: usize,
    pub precision: Precision,
    pub encoder: EncoderSettings,
    /// Run trials on the thread pool. Results do not depend on this.
    pub parallel_trials: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let semi = SemiConfig::default();
        ExperimentConfig {
            method: Method::SemiCnn,
            alpha: semi.alpha,
            margin: semi.margin,
            ratio: 0.1,
            trials: 10,
            seed: 0,
            max_iters: semi.max_iters,
            tol: semi.tol,
            inner_epochs: semi.inner_epochs,
            batch_size: semi.batch_size,
            learning_rate: semi.adam.lr,
            weight_mode: semi.weight_mode,
            supervised: true,
            pretrain: false,
            pretrain_epochs: PretrainOptions::default().epochs,
            precision: Precision::F32,
            encoder: EncoderSettings::default(),
            parallel_trials: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Clustering settings for one trial. Baselines run plain k-means.
    pub fn semi_config(&self, k: usize, trial: usize) -> SemiConfig {
        let unsupervised = self.method.encoder().is_none();
        SemiConfig {
            k,
            alpha: if unsupervised { 1.0 } else { self.alpha },
            margin: self.margin,
            max_iters: self.max_iters,
            tol: self.tol,
            inner_epochs: self.inner_epochs,
            batch_size: self.batch_size,
            weight_mode: self.weight_mode,
            adam: AdamConfig {
                lr: self.learning_rate,
                ..AdamConfig::default()
            },
            seed: self.trial_seed(trial),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative".into()));
        }
        if self.pretrain && !self.supervised {
            return Err(Error::InvalidArgument("pretraining needs labels".into()));
        }
        self.semi_config(2, 0).validate()?;
        if let Some(kind) = self.method.encoder() {
            self.encoder.config(kind).validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub ami: f64,
    pub acc: f64,
    pub labeled: usize,
    pub evaluated: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    /// Mean cross-entropy before and after pre-training, when it ran.
    pub pretrain_loss: Option<(f64, f64)>,
}

/// A finished trial with everything needed to export it.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub result: TrialResult,
    pub split: Split,
    pub state: ClusterState,
    pub vectors: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub source: String,
    pub format: CorpusFormat,
    pub documents: usize,
    pub labels: usize,
    pub dropped: usize,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> Self {
        CorpusSummary {
            source: corpus.source.display().to_string(),
            format: corpus.format,
            documents: corpus.len(),
            labels: corpus.num_labels(),
            dropped: corpus.dropped,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ami_mean: f64,
    pub ami_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Summary {
    /// Means and sample standard deviations over trials.
    pub fn of(trials: &[TrialResult]) -> Self {
        let amis: Vec<f64> = trials.iter().map(|t| t.ami).collect();
        let accs: Vec<f64> = trials.iter().map(|t| t.acc).collect();
        let (ami_mean, ami_std) = mean_std(&amis);
        let (acc_mean, acc_std) = mean_std(&accs);
        Summary {
            ami_mean,
            ami_std,
            acc_mean,
            acc_std,
        }
    }
}

/// Elapsed time; kept apart from the numbers so reports compare equal
/// across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    /// Entropy mean used to normalize AMI.
    pub ami_normalizer: String,
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ExperimentReport {
    /// The report without timing: identical for identical inputs.
    pub fn canonical(&self) -> Self {
        ExperimentReport {
            timing: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Whether the stored summary matches the per-trial values.
    pub fn is_consistent(&self) -> bool {
        self.trials.len() == self.config.trials && Summary::of(&self.trials) == self.summary
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{} on {} ({} documents, {} labels, ratio {})\n",
            self.method, self.corpus.source, self.corpus.documents, self.corpus.labels, self.config.ratio
        );
        out.push_str("trial  seed        AMI      ACC   iters\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{:>5}  {:<8}  {:>7.4}  {:>7.4}  {:>5}{}\n",
                t.trial,
                t.seed,
                t.ami,
                t.acc,
                t.iterations,
                if t.converged { "" } else { "*" }
            ));
        }
        out.push_str(&format!(
            "mean AMI {:.4} ± {:.4}   mean ACC {:.4} ± {:.4}   (AMI normalizer: {} mean)\n",
            self.summary.ami_mean, self.summary.ami_std, self.summary.acc_mean, self.summary.acc_std, self.ami_normalizer
        ));
        if self.trials.iter().any(|t| !t.converged) {
            out.push_str("* stopped at max_iters\n");
        }
        if let Some(t) = &self.timing {
            out.push_str(&format!("wall clock {:.1}s\n", t.wall_clock_secs));
        }
        out
    }
}

/// Inputs shared by all trials of one experiment.
struct Prepared<'a> {
    corpus: &'a Corpus,
    table: Option<&'a EmbeddingTable>,
    fixed: Option<Array2<f64>>,
}

fn prepare<'a>(corpus: &'a Corpus, table: Option<&'a EmbeddingTable>, config: &ExperimentConfig) -> Result<Prepared<'a>> {
    config.validate()?;
    if corpus.num_labels() < 2 {
        return Err(Error::InvalidArgument("corpus needs at least 2 labels".into()));
    }
    if config.method.needs_embeddings() && table.is_none() {
        return Err(Error::InvalidArgument(format!("{} needs an embedding table", config.method)));
    }
    let fixed = match config.method {
        Method::KmeansBow => Some(vectorize_bow(&corpus.documents)),
        Method::KmeansTfidf => Some(vectorize_tfidf(&corpus.documents)),
        Method::KmeansAvgvec => Some(vectorize_average(table.expect("checked"), &corpus.documents)?),
        Method::SemiCnn | Method::SemiLstm => None,
    };
    Ok(Prepared { corpus, table, fixed })
}

/// Final state, final vectors and pretraining loss before and after.
type Fitted = (ClusterState, Array2<f64>, Option<(f64, f64)>);

fn neural_trial<T: Real>(
    prep: &Prepared<'_>,
    config: &ExperimentConfig,
    kind: EncoderKind,
    supervision: &[(usize, usize)],
    semi: &SemiConfig,
) -> Result<Fitted> {
    let table = prep.table.expect("checked in prepare");
    let docs = &prep.corpus.documents;
    let mut rng = ChaCha8Rng::seed_from_u64(semi.seed);
    let mut params = EncoderParams::<T>::init(config.encoder.config(kind), table.dim(), &mut rng)?;
    if config.encoder.fine_tune_embeddings {
        params.attach_embeddings(table)?;
    }
    let mut pretrain_loss = None;
    if config.pretrain {
        let options = PretrainOptions {
            epochs: config.pretrain_epochs,
            batch_size: config.batch_size,
            adam: semi.adam,
            ..PretrainOptions::default()
        };
        let out = pretrain(&params, table, docs, supervision, &options, &mut rng)?;
        pretrain_loss = Some((out.initial_loss, out.final_loss));
        params = out.params;
    }
    let mut repr = NeuralRepresentation::new(params, table, docs, semi);
    let state = fit(&mut repr, supervision, semi)?;
    repr.refresh()?;
    Ok((state, repr.vectors().clone(), pretrain_loss))
}

fn trial(prep: &Prepared<'_>, config: &ExperimentConfig, t: usize) -> Result<TrialRun> {
    let corpus = prep.corpus;
    let seed = config.trial_seed(t);
    let split = split_labeled(corpus, config.ratio, seed)?;
    let supervision = if config.supervised { split.supervision(corpus) } else { Vec::new() };
    let semi = config.semi_config(corpus.num_labels(), t);
    let (state, vectors, pretrain_loss) = match (config.method.encoder(), &prep.fixed) {
        (Some(kind), _) => match config.precision {
            Precision::F32 => neural_trial::<f32>(prep, config, kind, &supervision, &semi)?,
            Precision::F64 => neural_trial::<f64>(prep, config, kind, &supervision, &semi)?,
        },
        (None, Some(x)) => (fit(&mut FixedVectors(x), &[], &semi)?, x.clone(), None),
        (None, None) => unreachable!("baselines always prepare vectors"),
    };
    let gold = corpus.labels();
    let truth: Vec<usize> = split.unlabeled.iter().map(|&i| gold[i]).collect();
    let found: Vec<usize> = split.unlabeled.iter().map(|&i| state.assignments[i]).collect();
    let result = TrialResult {
        trial: t,
        seed,
        ami: ami(&truth, &found)?,
        acc: acc(&truth, &found)?,
        labeled: split.labeled.len(),
        evaluated: split.unlabeled.len(),
        iterations: state.iterations,
        converged: state.converged,
        objective_history: state.objective_history.clone(),
        pretrain_loss,
    };
    Ok(TrialRun {
        result,
        split,
        state,
        vectors,
    })
}

/// Runs trial `t` alone and keeps its state and vectors.
pub fn run_trial(
    corpus: &Corpus,
    table: Option<&EmbeddingTable>,
    config: &ExperimentConfig,
    t: usize,
) -> Result<TrialRun> {
    let prep = prepare(corpus, table, config)?;
    trial(&prep, config, t)
}

/// Runs `config.trials` independent trials and aggregates AMI / ACC measured
/// on the unlabeled documents of each.
pub fn run_trials(corpus: &Corpus, table: Option<&EmbeddingTable>, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let prep = prepare(corpus, table, config)?;
    let one = |t: usize| trial(&prep, config, t).map(|run| run.result);
    let trials: Vec<TrialResult> = if config.parallel_trials {
        (0..config.trials).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..config.trials).map(one).collect::<Result<_>>()?
    };
    Ok(ExperimentReport {
        method: config.method,
        config: config.clone(),
        corpus: CorpusSummary::of(corpus),
        ami_normalizer: "arithmetic".into(),
        summary: Summary::of(&trials),
        trials,
        timing: Some(Timing {
            wall_clock_secs: start.elapsed().as_secs_f64(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Corpus, EmbeddingTable) {
        let mut text = String::new();
        for i in 0..12 {
            text.push_str(&format!("red\tred apple number {i}\n"));
            text.push_str(&format!("blue\tblue sky number {i}\n"));
        }
        let corpus = Corpus::parse(&text, CorpusFormat::Tsv, "toy.tsv").unwrap();
        let table = EmbeddingTable::from_rows(
            vec![
                ("red".into(), vec![2.0, 0.0, 0.1]),
                ("apple".into(), vec![1.0, 0.2, 0.0]),
                ("blue".into(), vec![0.0, 2.0, 0.1]),
                ("sky".into(), vec![0.1, 1.0, 0.0]),
                ("number".into(), vec![0.1, 0.1, 0.1]),
            ],
            3,
            0,
        )
        .unwrap();
        (corpus, table)
    }

    fn small(method: Method) -> ExperimentConfig {
        ExperimentConfig {
            method,
            ratio: 0.25,
            trials: 3,
            max_iters: 5,
            encoder: EncoderSettings {
                output_dim: 4,
                cnn_windows: vec![1, 2],
                cnn_filters_per_window: 4,
                ..EncoderSettings::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("kmeans".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_runs() {
        let (corpus, table) = toy();
        for m in Method::ALL {
            let report = run_trials(&corpus, Some(&table), &small(m)).unwrap();
            assert_eq!(report.trials.len(), 3);
            assert!(report.is_consistent());
            for t in &report.trials {
                assert_eq!(t.labeled, 6);
                assert_eq!(t.evaluated, 18);
                assert!((0.0..=1.0).contains(&t.acc));
            }
        }
    }

    #[test]
    fn single_trial_report_equals_single_run() {
        let (corpus, table) = toy();
        let config = ExperimentConfig {
            trials: 1,
            ..small(Method::KmeansAvgvec)
        };
        let report = run_trials(&corpus, Some(&table), &config).unwrap();
        let run = run_trial(&corpus, Some(&table), &config, 0).unwrap();
        assert_eq!(report.trials[0], run.result);
        assert_eq!(report.summary.acc_mean, run.result.acc);
        assert_eq!(report.summary.acc_std, 0.0);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let (corpus, table) = toy();
        let config = small(Method::SemiCnn);
        let a = run_trials(&corpus, Some(&table), &config).unwrap();
        let b = run_trials(
            &corpus,
            Some(&table),
            &ExperimentConfig {
                parallel_trials: false,
                ..config.clone()
            },
        )
        .unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.canonical().to_json().unwrap(), run_trials(&corpus, Some(&table), &config).unwrap().canonical().to_json().unwrap());
    }

    #[test]
    fn missing_embeddings_rejected() {
        let (corpus, _) = toy();
        assert!(run_trials(&corpus, None, &small(Method::SemiCnn)).is_err());
        assert!(run_trials(&corpus, None, &small(Method::KmeansBow)).is_ok());
    }

    #[test]
    fn config_toml_round_trip() {
        let config = ExperimentConfig {
            pretrain: true,
            weight_mode: WeightMode::PaperLiteral,
            ..small(Method::SemiLstm)
        };
        let text = config.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
        let partial = ExperimentConfig::from_toml("method = \"kmeans-tfidf\"\nalpha = 0.5\n").unwrap();
        assert_eq!(partial.method, Method::KmeansTfidf);
        assert_eq!(partial.trials, 10);
    }

    #[test]
    fn report_json_round_trip() {
        let (corpus, table) = toy();
        let report = run_trials(&corpus, Some(&table), &small(Method::KmeansBow)).unwrap();
        let back = ExperimentReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        assert!(report.render_table().contains("kmeans-bow"));
    }
}

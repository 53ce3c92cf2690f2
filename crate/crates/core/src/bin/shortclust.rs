use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shortclust::clustering::WeightMode;
use shortclust::harness::synthetic::{generate, SyntheticSpec};
use shortclust::harness::{
    export_vectors, read_vectors, run_trial, run_trials, Corpus, CorpusFormat, ExperimentConfig, Method, Precision,
};
use shortclust::metrics::{acc, ami};
use shortclust::text::EmbeddingTable;
use shortclust::{Error, Result};

/// Semi-supervised clustering of short texts.
#[derive(Parser, Debug)]
#[command(name = "shortclust", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run repeated trials and print AMI / ACC.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trial and write `id, label, cluster, vector` rows.
    Export {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an exported vectors file against its labels.
    Eval {
        vectors: PathBuf,
    },
    /// Write a synthetic two-factor corpus and matching embedding table.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Guessed from the extension when omitted.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// TOML experiment config. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Word vectors in text format, with or without a `count dim` header.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long)]
    pretrain: bool,
    #[arg(long)]
    unsupervised: bool,
    #[arg(long)]
    serial: bool,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(method, alpha, margin, ratio, trials, seed, max_iters, tol, learning_rate, weight_mode, precision);
        c.pretrain |= self.pretrain;
        c.supervised &= !self.unsupervised;
        c.parallel_trials &= !self.serial;
        c.validate()?;
        Ok(c)
    }

    fn load(&self) -> Result<(ExperimentConfig, Corpus, Option<EmbeddingTable>)> {
        let config = self.config()?;
        let format = match self.format {
            Some(f) => f,
            None => CorpusFormat::from_path(&self.corpus),
        };
        let corpus = Corpus::load(&self.corpus, format)?;
        let table = match &self.embeddings {
            Some(path) => Some(load_embeddings(path, &corpus, config.seed)?),
            None if config.method.needs_embeddings() => {
                return Err(Error::InvalidArgument(format!("{} needs --embeddings", config.method)))
            }
            None => None,
        };
        Ok((config, corpus, table))
    }
}

fn load_embeddings(path: &Path, corpus: &Corpus, seed: u64) -> Result<EmbeddingTable> {
    let keep: HashSet<String> = corpus.documents.iter().flat_map(|d| d.tokens.iter().cloned()).collect();
    let dim = EmbeddingTable::sniff_dim(path)?;
    EmbeddingTable::load_filtered(path, dim, seed, Some(&keep))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { exp, out } => {
            let (config, corpus, table) = exp.load()?;
            let report = run_trials(&corpus, table.as_ref(), &config)?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                fs::write(path, report.to_json()?)?;
            }
        }
        Command::Export { exp, trial, out } => {
            let (config, corpus, table) = exp.load()?;
            let run = run_trial(&corpus, table.as_ref(), &config, trial)?;
            export_vectors(&out, &corpus, &run.state.assignments, &run.vectors)?;
            println!(
                "trial {trial}: AMI {:.4} ACC {:.4}, {} rows written to {}",
                run.result.ami,
                run.result.acc,
                corpus.len(),
                out.display()
            );
        }
        Command::Eval { vectors } => {
            let rows = read_vectors(&vectors)?;
            let mut ids = BTreeMap::new();
            let (mut labels, mut clusters) = (Vec::new(), Vec::new());
            for row in rows.iter().filter(|r| !r.label.is_empty()) {
                let next = ids.len();
                labels.push(*ids.entry(row.label.as_str()).or_insert(next));
                clusters.push(row.cluster);
            }
            println!("documents {}", labels.len());
            println!("AMI {:.4}", ami(&labels, &clusters)?);
            println!("ACC {:.4}", acc(&labels, &clusters)?);
        }
        Command::Synth { out_dir, seed } => {
            let s = generate(&SyntheticSpec {
                seed,
                ..SyntheticSpec::default()
            })?;
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("corpus.tsv"), s.corpus.to_text(CorpusFormat::Tsv)?)?;
            let mut f = std::io::BufWriter::new(fs::File::create(out_dir.join("embeddings.txt"))?);
            writeln!(f, "{} {}", s.table.len(), s.table.dim())?;
            for word in s.table.words() {
                let v: Vec<String> = s.table.vector(word).iter().map(|x| x.to_string()).collect();
                writeln!(f, "{word} {}", v.join(" "))?;
            }
            f.flush()?;
            println!("wrote {} documents to {}", s.corpus.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

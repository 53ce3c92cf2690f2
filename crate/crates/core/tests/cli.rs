use std::path::Path;
use std::process::{Command, Output};

use shortclust::harness::ExperimentReport;

fn shortclust(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shortclust"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run shortclust")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn synth_run_export_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&shortclust(&["synth", "--out-dir", "data", "--seed", "4"], d));
    assert!(d.join("data/corpus.tsv").exists());

    let config = "method = \"semi-cnn\"\ntrials = 3\nmax_iters = 4\n[encoder]\noutput_dim = 4\ncnn_windows = [1, 2]\ncnn_filters_per_window = 4\n";
    std::fs::write(d.join("exp.toml"), config).unwrap();
    let table = ok(&shortclust(
        &[
            "run", "--corpus", "data/corpus.tsv", "--embeddings", "data/embeddings.txt", "--config", "exp.toml",
            "--trials", "2", "--out", "report.json",
        ],
        d,
    ));
    assert!(table.contains("semi-cnn"));
    assert!(table.contains("mean AMI"));
    let report = ExperimentReport::from_json(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    // The flag overrides the file; the file overrides the defaults.
    assert_eq!(report.trials.len(), 2);
    assert_eq!(report.config.max_iters, 4);
    assert!(report.is_consistent());

    let export = ok(&shortclust(
        &[
            "export", "--corpus", "data/corpus.tsv", "--embeddings", "data/embeddings.txt", "--method",
            "kmeans-avgvec", "--out", "vectors.tsv",
        ],
        d,
    ));
    assert!(export.contains("rows written"));
    let eval = ok(&shortclust(&["eval", "vectors.tsv"], d));
    assert!(eval.contains("documents 640"));
    assert!(eval.lines().any(|l| l.starts_with("AMI ")));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = shortclust(&["run", "--corpus", "missing.tsv"], d);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    std::fs::write(d.join("c.tsv"), "a\tone two\nb\tthree four\n").unwrap();
    let no_embeddings = shortclust(&["run", "--corpus", "c.tsv", "--method", "semi-lstm"], d);
    assert!(!no_embeddings.status.success());

    let bad_ratio = shortclust(&["run", "--corpus", "c.tsv", "--method", "kmeans-bow", "--ratio", "0.01"], d);
    assert!(!bad_ratio.status.success());

    let bad_method = shortclust(&["run", "--corpus", "c.tsv", "--method", "kmeans"], d);
    assert!(!bad_method.status.success());
}

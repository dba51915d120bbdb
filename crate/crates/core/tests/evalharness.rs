use std::path::PathBuf;

use dialectid::charcnn::{CnnConfig, ConvBlockConfig};
use dialectid::corpus::{Scenario, Task};
use dialectid::evalharness::{deterministic_part, run_experiment, ExperimentSpec, ModelSpec};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn external() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/external/bert-dialect.tsv")
}

fn small_cnn(epochs: usize) -> CnnConfig {
    CnnConfig {
        input_len: 128,
        embed_dim: 8,
        blocks: vec![ConvBlockConfig { filters: 8, width: 7 }; 2],
        se_ratio: 4,
        fc_dims: vec![8],
        epochs,
        batch: 8,
        lr: 5e-3,
        vocab_min_count: 1,
        ..CnnConfig::articles(2)
    }
}

fn spec(scenario: Scenario, models: &[&str]) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(Task::Dialect, scenario, models.iter().map(|m| m.parse().unwrap()).collect());
    s.cnn = Some(small_cnn(3));
    s
}

#[test]
fn constant_model_on_balanced_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&spec(Scenario::FullArticles, &["constant"]), &fixture(), dir.path()).unwrap();
    let r = &res.reports[0];
    assert_eq!(r.accuracy, 0.5);
    assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    for f in ["report-constant.txt", "confusion-constant.csv", "table.txt", "manifest.json", "predictions-test.tsv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn reruns_match_across_worker_counts() {
    let models = ["krr", "svm", "cnn", "vote", "stacking"];
    for scenario in [Scenario::FullArticles, Scenario::CrossGenreTweets] {
        let run = |workers: usize| {
            let mut s = spec(scenario, &models);
            s.workers = workers;
            let dir = tempfile::tempdir().unwrap();
            let res = run_experiment(&s, &fixture(), dir.path()).unwrap();
            res.reports.iter().map(|r| deterministic_part(&r.to_kv())).collect::<Vec<_>>()
        };
        let a = run(1);
        assert_eq!(a.len(), models.len());
        assert_eq!(a, run(1));
        assert_eq!(a, run(4));
    }
}

#[test]
fn kernel_cache_is_reused() {
    let cache = tempfile::tempdir().unwrap();
    let mut s = spec(Scenario::Sentences, &["krr"]);
    s.cache_dir = Some(cache.path().to_path_buf());
    let out = tempfile::tempdir().unwrap();
    let first = run_experiment(&s, &fixture(), out.path()).unwrap();
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 6);
    let second = run_experiment(&s, &fixture(), out.path()).unwrap();
    let note = |r: &dialectid::evalharness::EvalReport| {
        r.environment.iter().find(|n| n.0 == "kernel_cache").unwrap().1.clone()
    };
    assert_eq!(note(&first.reports[0]), "miss,miss,miss");
    assert_eq!(note(&second.reports[0]), "hit,hit,hit");
    assert_eq!(
        deterministic_part(&first.reports[0].to_kv()),
        deterministic_part(&second.reports[0].to_kv())
    );
    assert_eq!(first.manifest.inputs.len(), 4);
    assert!(first.manifest.inputs.iter().all(|f| f.sha256.len() == 64));
}

#[test]
fn external_predictions_feed_the_ensembles() {
    let base = spec(Scenario::FullArticles, &["krr", "svm", "stacking"]);
    let dir = tempfile::tempdir().unwrap();
    let without = run_experiment(&base, &fixture(), dir.path()).unwrap();
    let mut with = base.clone();
    with.external = vec![external()];
    let with = run_experiment(&with, &fixture(), dir.path()).unwrap();
    let stack = |rs: &[dialectid::evalharness::EvalReport]| rs.iter().find(|r| r.model_id == "stacking").unwrap().clone();
    let (a, b) = (stack(&without.reports), stack(&with.reports));
    assert_eq!(b.members, ["krr", "svm", "bert"]);
    assert!(a.macro_f1 < 1.0);
    assert!(b.macro_f1 > a.macro_f1, "{} vs {}", b.macro_f1, a.macro_f1);
    assert!(b.validation_macro_f1.unwrap() >= a.validation_macro_f1.unwrap());
    assert_ne!(a.config_fingerprint, b.config_fingerprint);
}

#[test]
fn failures_carry_experiment_context() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&spec(Scenario::FullArticles, &["krr"]), &dir.path().join("nowhere"), dir.path())
        .unwrap_err();
    assert!(err.to_string().starts_with("experiment dialect / full_articles"), "{err}");
    let mut s = spec(Scenario::FullArticles, &["krr"]);
    s.task = Task::TopicIntraMd;
    s.scenario = Scenario::CrossGenreTweets;
    let err = run_experiment(&s, &fixture(), dir.path()).unwrap_err();
    assert_eq!(err.tag(), "unsupported");
    assert!(matches!(
        run_experiment(&spec(Scenario::FullArticles, &["vote"]), &fixture(), dir.path()).unwrap_err().kind(),
        dialectid::ErrorKind::Usage
    ));
    let _ = ModelSpec::Krr;
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dialectid::evalharness::deterministic_part;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

fn dialectid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialectid"))
        .args(args)
        .env_remove("DIALECTID_DATA")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_CNN: [&str; 16] = [
    "--cnn", "input_len=128", "--cnn", "embed_dim=8", "--cnn", "filters=8", "--cnn", "widths=7,7", "--cnn", "fc=8",
    "--cnn", "epochs=3", "--cnn", "min_count=1", "--cnn", "se_ratio=4",
];

fn tree_digest(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn help_and_usage_errors() {
    let o = dialectid(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage: dialectid"));
    let o = dialectid(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage: dialectid"));
    let o = dialectid(&["evaluate", "--model", "krr", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("dialectid: error[usage]: "), "{}", stderr(&o));
    let o = dialectid(&["evaluate", "--model", "lstm", "--data", s(&fixture()), "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_krr_on_fixture() {
    let before = tree_digest(&fixture());
    let out = tempfile::tempdir().unwrap();
    let o = dialectid(&[
        "evaluate", "--task", "dialect", "--scenario", "full_articles", "--model", "krr", "--data", s(&fixture()),
        "--out", s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.path().join("report-krr.txt")).unwrap();
    assert!(report.contains("\nmacro_f1="));
    assert!(out.path().join("confusion-krr.csv").is_file());
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("run-evaluate.json")).unwrap()).unwrap();
    assert_eq!(run["settings"]["n"], "6");
    assert!(run["inputs"].as_array().unwrap().iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));
    assert_eq!(before, tree_digest(&fixture()));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!("# fixture run\ndata = {}\nmodel = krr\nn = 5   # shorter n-grams\nlambda = 0.1\n", s(&fixture())),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = dialectid(&["--config", s(&cfg), "evaluate", "--n", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run-evaluate.json")).unwrap()).unwrap();
    assert_eq!(run["settings"]["n"], "4");
    assert_eq!(run["settings"]["lambda"], "0.1");
    assert!(fs::read_to_string(out.join("report-krr.txt")).unwrap().contains("note.kernel=n=4"));

    fs::write(&cfg, "model = krr\nbogus_key = 1\n").unwrap();
    let o = dialectid(&["--config", s(&cfg), "evaluate", "--data", s(&fixture()), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus_key"));
}

#[test]
fn data_root_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dialectid"))
        .args(["validate-corpus"])
        .env("DIALECTID_DATA", fixture())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 5);
    let _ = out;
}

#[test]
fn data_and_numerical_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dialectid(&["evaluate", "--model", "krr", "--data", s(&dir.path().join("missing")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("dialectid: error[load]: "));
    assert_eq!(stderr(&o).lines().count(), 1);

    let fx = fixture();
    let mut args = vec!["evaluate", "--model", "cnn", "--data", s(&fx), "--out", s(dir.path())];
    args.extend(SMALL_CNN);
    args.extend(["--cnn", "lr=1e30"]);
    let o = dialectid(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("dialectid: error[numerical]: "));
}

#[test]
fn stepwise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let data = s(&fixture()).to_string();
    let run = |args: &[&str]| {
        let o = dialectid(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    run(&["precompute-kernel", "--data", &data, "--out", s(&d("k")), "--cache-dir", s(&d("cache"))]);
    assert_eq!(fs::read_dir(d("cache")).unwrap().count(), 6);
    for m in ["krr", "svm"] {
        run(&["train", "--model", m, "--data", &data, "--out", s(&d("models")), "--cache-dir", s(&d("cache"))]);
    }
    let models = d("models");
    let mut cnn = vec!["train", "--model", "cnn", "--data", &data, "--out", s(&models)];
    cnn.extend(SMALL_CNN);
    run(&cnn);
    assert!(fs::read_to_string(d("models/cnn-train-log.tsv")).unwrap().contains("#best_epoch"));
    for m in ["krr", "svm", "cnn"] {
        for split in ["validation", "test"] {
            let model = d(&format!("models/{m}.model"));
            run(&["predict", "--model", s(&model), "--split", split, "--data", &data, "--out", s(&d("preds"))]);
        }
    }
    let p = |m: &str, split: &str| s(&d(&format!("preds/predictions-{m}-{split}.tsv"))).to_string();
    run(&[
        "train-stacker", "--data", &data, "--out", s(&d("stack")), "--preds", &p("krr", "validation"),
        &p("svm", "validation"), &p("cnn", "validation"), "--test-preds", &p("krr", "test"), &p("svm", "test"),
        &p("cnn", "test"),
    ]);
    let stacker: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d("stack/stacker.json")).unwrap()).unwrap();
    assert_eq!(stacker["registry"]["model_ids"], serde_json::json!(["krr", "svm", "cnn"]));
    assert!(d("stack/report-stacking.txt").is_file());
    run(&["vote", "--data", &data, "--out", s(&d("vote")), "--preds", &p("krr", "test"), &p("svm", "test"), &p("cnn", "test")]);
    assert_eq!(fs::read_to_string(d("vote/vote-test.tsv")).unwrap().lines().count(), 9);
    run(&["gradcam", "--model", s(&d("models/cnn.model")), "--data", &data, "--out", s(&d("gc")), "--ids", "te-000,te-001"]);
    assert!(d("gc/te-001.html").is_file() && d("gc/index.html").is_file());

    let o = dialectid(&["gradcam", "--model", s(&d("models/krr.model")), "--data", &data, "--out", s(&d("gc"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_is_identical_across_worker_counts() {
    let fx = fixture();
    let run = |workers: &str| {
        let out = tempfile::tempdir().unwrap();
        let mut args = vec![
            "--workers", workers, "evaluate", "--model", "krr,svm,cnn,vote,stacking", "--data", s(&fx), "--out",
            s(out.path()),
        ];
        args.extend(SMALL_CNN);
        let o = dialectid(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        ["krr", "svm", "cnn", "vote", "stacking"]
            .iter()
            .map(|m| deterministic_part(&fs::read_to_string(out.path().join(format!("report-{m}.txt"))).unwrap()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run("1"), run("4"));
}

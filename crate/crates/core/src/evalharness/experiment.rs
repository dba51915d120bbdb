use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::{cached_gram, CacheStatus};
use super::report::{hardware_description, render_table, EvalReport};
use super::macro_f1;
use crate::charcnn::{CnnArtifact, CnnConfig, TrainOptions};
use crate::corpus::{build_scenario, corpus_path, CorpusBundle, LabeledCorpus, Scenario, Source, Task};
use crate::ensemble::{
    default_c_grid, export_predictions, from_kernel_prediction, group_by_sample, import_predictions, meta_feature_matrix,
    peek_model_ids, plurality_vote, predict_stacker, select_c, train_stacker, LevelZeroPrediction, ModelRegistry,
    Penalty, StackerOptions,
};
use crate::error::{Error, Result};
use crate::kernel_models::{predict_multiclass, train_multiclass, BaseModel, Hyper, Scheme};
use crate::strkernel::{GramMode, GramOptions, KernelMatrix, KernelSpec};

/// Folds used to choose the stacker's C and to score it on the validation split.
pub const STACKER_FOLDS: usize = 5;

pub const STACKER_PROTOCOL: &str =
    "level-zero models fit on train; stacker fit on their validation predictions; test predicted once";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    Krr,
    Svm,
    Cnn,
    /// Always predicts one class, by name; `None` means class 0.
    Constant(Option<String>),
    Vote,
    Stacking,
}

impl ModelSpec {
    pub fn id(&self) -> String {
        match self {
            ModelSpec::Krr => "krr".into(),
            ModelSpec::Svm => "svm".into(),
            ModelSpec::Cnn => "cnn".into(),
            ModelSpec::Constant(None) => "constant".into(),
            ModelSpec::Constant(Some(c)) => format!("constant-{c}"),
            ModelSpec::Vote => "vote".into(),
            ModelSpec::Stacking => "stacking".into(),
        }
    }

    pub fn is_ensemble(&self) -> bool {
        matches!(self, ModelSpec::Vote | ModelSpec::Stacking)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "krr" => ModelSpec::Krr,
            "svm" => ModelSpec::Svm,
            "cnn" => ModelSpec::Cnn,
            "constant" => ModelSpec::Constant(None),
            "vote" => ModelSpec::Vote,
            "stacking" => ModelSpec::Stacking,
            other => match other.strip_prefix("constant:") {
                Some(class) if !class.is_empty() => ModelSpec::Constant(Some(class.to_string())),
                _ => {
                    return Err(Error::Usage(format!(
                        "unknown model `{other}` (expected krr, svm, cnn, constant[:CLASS], vote or stacking)"
                    )))
                }
            },
        })
    }
}

/// Everything that determines an experiment's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    pub scenario: Scenario,
    pub models: Vec<ModelSpec>,
    pub kernel: KernelSpec,
    pub gram_mode: GramMode,
    pub hyper: Hyper,
    /// Multiclass scheme for kernel models; `None` picks the default per model.
    pub scheme: Option<Scheme>,
    /// CNN settings; `None` uses the defaults for the scenario. The class
    /// count and seed are always taken from the experiment.
    pub cnn: Option<CnnConfig>,
    pub penalty: Penalty,
    /// Fixed stacker C; `None` selects it by cross-validation over the grid.
    pub stacker_c: Option<f64>,
    pub seed: u64,
    /// Interchange files with validation and test predictions of extra
    /// level-zero models.
    pub external: Vec<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(task: Task, scenario: Scenario, models: Vec<ModelSpec>) -> Self {
        ExperimentSpec {
            task,
            scenario,
            models,
            kernel: KernelSpec::default(),
            gram_mode: GramMode::default(),
            hyper: Hyper::default(),
            scheme: None,
            cnn: None,
            penalty: Penalty::L2,
            stacker_c: None,
            seed: 42,
            external: Vec::new(),
            workers: 1,
            cache_dir: None,
        }
    }

    /// CNN settings actually used by this experiment.
    pub fn effective_cnn(&self) -> CnnConfig {
        let classes = self.task.num_classes();
        let mut cfg = self.cnn.clone().unwrap_or_else(|| match self.scenario {
            Scenario::FullArticles => CnnConfig::articles(classes),
            _ => CnnConfig::sentences(classes),
        });
        cfg.classes = classes;
        cfg.seed = self.seed;
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Usage("no models requested".into()));
        }
        let ids: BTreeSet<String> = self.models.iter().map(ModelSpec::id).collect();
        if ids.len() != self.models.len() {
            return Err(Error::Usage("a model is listed twice".into()));
        }
        if self.models.iter().any(ModelSpec::is_ensemble)
            && self.models.iter().all(ModelSpec::is_ensemble)
            && self.external.is_empty()
        {
            return Err(Error::Usage("ensembles need at least one level-zero model".into()));
        }
        if let Some(c) = self.stacker_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Usage(format!("stacker C must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// What is needed to rerun an experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentSpec,
    pub effective_cnn: CnnConfig,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    pub data_root: PathBuf,
    pub inputs: Vec<InputFile>,
    pub corpus_checksums: Vec<(String, String)>,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub reports: Vec<EvalReport>,
    pub manifest: RunManifest,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct LevelZero {
    id: String,
    validation: Vec<LevelZeroPrediction>,
    test: Vec<LevelZeroPrediction>,
    train_seconds: f64,
    inference_seconds_per_sample: f64,
    notes: Vec<(String, String)>,
    environment: Vec<(String, String)>,
}

struct Data {
    train: LabeledCorpus,
    validation: LabeledCorpus,
    test: LabeledCorpus,
    train_y: Vec<usize>,
    validation_y: Vec<usize>,
    test_y: Vec<usize>,
}

const WARMUP: usize = 8;

struct Kernels {
    train: KernelMatrix,
    validation: KernelMatrix,
    test: KernelMatrix,
    train_seconds: f64,
    test_seconds: f64,
    status: [CacheStatus; 3],
}

fn kernels(spec: &ExperimentSpec, d: &Data) -> Result<Kernels> {
    let opts = GramOptions {
        mode: spec.gram_mode,
        ..GramOptions::with_workers(spec.workers)
    };
    let cache = spec.cache_dir.as_deref();
    let t = Instant::now();
    let (train, s0) = cached_gram(cache, &d.train, &d.train, spec.kernel, &opts)?;
    let train_seconds = t.elapsed().as_secs_f64();
    let (validation, s1) = cached_gram(cache, &d.validation, &d.train, spec.kernel, &opts)?;
    let t = Instant::now();
    let (test, s2) = cached_gram(cache, &d.test, &d.train, spec.kernel, &opts)?;
    let test_seconds = t.elapsed().as_secs_f64();
    Ok(Kernels {
        train,
        validation,
        test,
        train_seconds,
        test_seconds,
        status: [s0, s1, s2],
    })
}

fn kernel_model(spec: &ExperimentSpec, d: &Data, k: &Kernels, base: BaseModel, id: &str) -> Result<LevelZero> {
    let classes = spec.task.num_classes();
    let scheme = spec.scheme.unwrap_or_else(|| Scheme::default_for(base, classes));
    let t = Instant::now();
    let model = train_multiclass(&k.train, &d.train_y, classes, base, scheme, spec.hyper)?;
    let train_seconds = k.train_seconds + t.elapsed().as_secs_f64();

    let warm: Vec<usize> = (0..k.test.rows.min(WARMUP)).collect();
    let cols: Vec<usize> = (0..k.test.cols).collect();
    predict_multiclass(&model, &k.test.submatrix(&warm, &cols))?;
    let t = Instant::now();
    let test_pred = predict_multiclass(&model, &k.test)?;
    let infer = k.test_seconds + t.elapsed().as_secs_f64();
    let val_pred = predict_multiclass(&model, &k.validation)?;

    let mut notes = vec![
        ("scheme".into(), format!("{scheme:?}")),
        ("kernel".into(), format!("n={} normalized={}", spec.kernel.n, spec.kernel.normalized)),
    ];
    match base {
        BaseModel::Krr => notes.push(("lambda".into(), spec.hyper.lambda.to_string())),
        BaseModel::Svm => notes.push(("c".into(), spec.hyper.svm.c.to_string())),
    }
    Ok(LevelZero {
        id: id.to_string(),
        validation: from_kernel_prediction(id, &d.validation.ids(), &val_pred, scheme)?,
        test: from_kernel_prediction(id, &d.test.ids(), &test_pred, scheme)?,
        train_seconds,
        inference_seconds_per_sample: infer / d.test.len() as f64,
        notes,
        environment: vec![(
            "kernel_cache".into(),
            k.status.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
        )],
    })
}

fn proba_to_level_zero(id: &str, ids: &[String], probs: &[Vec<f32>]) -> Vec<LevelZeroPrediction> {
    ids.iter()
        .zip(probs)
        .map(|(s, p)| {
            let mut probs: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|v| *v /= total);
            LevelZeroPrediction {
                sample_id: s.clone(),
                model_id: id.to_string(),
                hard_label: crate::ensemble::argmax(&probs),
                probs,
            }
        })
        .collect()
}

fn cnn_model(spec: &ExperimentSpec, d: &Data) -> Result<LevelZero> {
    let cfg = spec.effective_cnn();
    let texts = |c: &LabeledCorpus| c.texts().into_iter().map(str::to_string).collect::<Vec<_>>();
    let (train_t, val_t, test_t) = (texts(&d.train), texts(&d.validation), texts(&d.test));
    let t = Instant::now();
    let (artifact, history) = CnnArtifact::fit(
        &cfg,
        spec.task.class_names(),
        &train_t,
        &d.train_y,
        &val_t,
        &d.validation_y,
        TrainOptions { workers: spec.workers },
    )?;
    let train_seconds = t.elapsed().as_secs_f64();
    artifact.predict_proba(&test_t[..test_t.len().min(WARMUP)]);
    let t = Instant::now();
    let test_p = artifact.predict_proba(&test_t);
    let infer = t.elapsed().as_secs_f64();
    let val_p = artifact.predict_proba(&val_t);
    Ok(LevelZero {
        id: "cnn".into(),
        validation: proba_to_level_zero("cnn", &d.validation.ids(), &val_p),
        test: proba_to_level_zero("cnn", &d.test.ids(), &test_p),
        train_seconds,
        inference_seconds_per_sample: infer / d.test.len() as f64,
        notes: vec![
            ("epochs".into(), cfg.epochs.to_string()),
            ("best_epoch".into(), history.best_epoch.to_string()),
            ("input_len".into(), cfg.input_len.to_string()),
        ],
        environment: Vec::new(),
    })
}

fn constant_model(spec: &ExperimentSpec, d: &Data, class: &Option<String>, id: &str) -> Result<LevelZero> {
    let names = spec.task.class_names();
    let c = match class {
        None => 0,
        Some(name) => names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Usage(format!("constant model: unknown class {name} (classes {names:?})")))?,
    };
    let make = |corpus: &LabeledCorpus| {
        corpus
            .ids()
            .into_iter()
            .map(|s| LevelZeroPrediction {
                sample_id: s,
                model_id: id.to_string(),
                hard_label: c,
                probs: (0..names.len()).map(|j| if j == c { 1.0 } else { 0.0 }).collect(),
            })
            .collect()
    };
    Ok(LevelZero {
        id: id.to_string(),
        validation: make(&d.validation),
        test: make(&d.test),
        train_seconds: 0.0,
        inference_seconds_per_sample: 0.0,
        notes: vec![("constant_class".into(), names[c].clone())],
        environment: Vec::new(),
    })
}

fn external_models(spec: &ExperimentSpec, d: &Data, existing: &[String]) -> Result<Vec<LevelZero>> {
    let class_names = spec.task.class_names();
    let known: BTreeSet<String> = d.validation.ids().into_iter().chain(d.test.ids()).collect();
    let mut out: Vec<LevelZero> = Vec::new();
    for path in &spec.external {
        let ctx = |e: Error| e.context(format!("importing {}", path.display()));
        let ids = peek_model_ids(path).map_err(ctx)?;
        let registry = ModelRegistry::new(ids.clone(), class_names.clone()).map_err(ctx)?;
        let preds = import_predictions(path, &registry, Some(&known)).map_err(ctx)?;
        for id in ids {
            if existing.contains(&id) || out.iter().any(|m| m.id == id) {
                return Err(ctx(Error::Validation(format!("model id {id} is already in use"))));
            }
            let mine: Vec<LevelZeroPrediction> = preds.iter().filter(|p| p.model_id == id).cloned().collect();
            let pick = |c: &LabeledCorpus| -> Result<Vec<LevelZeroPrediction>> {
                let reg = ModelRegistry::new(vec![id.clone()], class_names.clone())?;
                Ok(group_by_sample(&mine, &reg, &c.ids())?.into_iter().map(|g| g[0].clone()).collect())
            };
            out.push(LevelZero {
                validation: pick(&d.validation).map_err(ctx)?,
                test: pick(&d.test).map_err(ctx)?,
                id,
                train_seconds: 0.0,
                inference_seconds_per_sample: 0.0,
                notes: Vec::new(),
                environment: vec![("source".into(), path.display().to_string())],
            });
        }
    }
    Ok(out)
}

fn hard_labels(preds: &[LevelZeroPrediction]) -> Vec<usize> {
    preds.iter().map(|p| p.hard_label).collect()
}

fn vote(members: &[&LevelZero], corpus: &LabeledCorpus, test: bool, k: usize) -> Result<Vec<usize>> {
    let all: Vec<LevelZeroPrediction> = members
        .iter()
        .flat_map(|m| if test { m.test.clone() } else { m.validation.clone() })
        .collect();
    let ids: Vec<String> = members.iter().map(|m| m.id.clone()).collect();
    let registry = ModelRegistry::new(ids, (0..k).map(|c| c.to_string()).collect())?;
    group_by_sample(&all, &registry, &corpus.ids())?
        .iter()
        .map(|g| plurality_vote(g, k))
        .collect()
}

/// Loads the data, trains every requested model, scores it on the test split
/// and writes reports, predictions and a run manifest under `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, data_root: &Path, out_dir: &Path) -> Result<ExperimentResult> {
    let label = format!("experiment {} / {}", spec.task, spec.scenario);
    run_inner(spec, data_root, out_dir).map_err(|e| e.context(label))
}

fn run_inner(spec: &ExperimentSpec, data_root: &Path, out_dir: &Path) -> Result<ExperimentResult> {
    spec.validate()?;
    let with_tweets = spec.scenario == Scenario::CrossGenreTweets;
    let bundle = CorpusBundle::load(data_root, with_tweets)?;
    let ds = build_scenario(&bundle, spec.scenario, spec.task)?;
    for (name, c) in [("train", &ds.train), ("validation", &ds.validation), ("test", &ds.test)] {
        if c.is_empty() {
            return Err(Error::Validation(format!("{name} split of the scenario is empty")));
        }
    }
    let d = Data {
        train_y: ds.labels(&ds.train)?,
        validation_y: ds.labels(&ds.validation)?,
        test_y: ds.labels(&ds.test)?,
        train: ds.train,
        validation: ds.validation,
        test: ds.test,
    };
    let k = spec.task.num_classes();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut inputs = Vec::new();
    let mut sources = vec![Source::Moroco];
    if with_tweets {
        sources.push(Source::MorocoTweets);
    }
    for source in sources {
        inputs.push(source_manifest(data_root, source)?);
        for &split in source.splits() {
            let path = corpus_path(data_root, source, split);
            inputs.push(InputFile {
                sha256: file_sha256(&path)?,
                path,
            });
        }
    }
    let mut external_sums = Vec::new();
    for path in &spec.external {
        let sha256 = file_sha256(path)?;
        external_sums.push(sha256.clone());
        inputs.push(InputFile {
            path: path.clone(),
            sha256,
        });
    }
    let fingerprint = {
        let json = serde_json::to_string(&(spec, spec.effective_cnn(), &external_sums))
            .map_err(|e| Error::Format(e.to_string()))?;
        hex::encode(Sha256::digest(json.as_bytes()))
    };

    let needs_kernel = spec.models.iter().any(|m| matches!(m, ModelSpec::Krr | ModelSpec::Svm));
    let kern = if needs_kernel {
        Some(kernels(spec, &d).map_err(|e| e.context("computing string kernels"))?)
    } else {
        None
    };
    let mut level_zero: Vec<LevelZero> = Vec::new();
    for m in &spec.models {
        let id = m.id();
        let trained = match m {
            ModelSpec::Krr => kernel_model(spec, &d, kern.as_ref().unwrap(), BaseModel::Krr, &id),
            ModelSpec::Svm => kernel_model(spec, &d, kern.as_ref().unwrap(), BaseModel::Svm, &id),
            ModelSpec::Cnn => cnn_model(spec, &d),
            ModelSpec::Constant(class) => constant_model(spec, &d, class, &id),
            ModelSpec::Vote | ModelSpec::Stacking => continue,
        };
        level_zero.push(trained.map_err(|e| e.context(format!("model {id}")))?);
    }
    let existing: Vec<String> = level_zero.iter().map(|m| m.id.clone()).collect();
    level_zero.extend(external_models(spec, &d, &existing)?);

    let hardware = hardware_description();
    let finish = |mut r: EvalReport| {
        r.seed = spec.seed;
        r.config_fingerprint = fingerprint.clone();
        r.hardware = hardware.clone();
        r
    };
    let mut reports = Vec::new();
    for m in &level_zero {
        let mut r = EvalReport::from_predictions(
            spec.task,
            spec.scenario,
            &m.id,
            vec![m.id.clone()],
            &hard_labels(&m.test),
            &d.test_y,
        )?;
        r.validation_macro_f1 = Some(macro_f1(&hard_labels(&m.validation), &d.validation_y, k)?);
        r.validation_source = "validation split".into();
        r.train_seconds = m.train_seconds;
        r.inference_seconds_per_sample = m.inference_seconds_per_sample;
        r.notes = m.notes.clone();
        r.environment = m.environment.clone();
        reports.push(finish(r));
    }

    let members: Vec<&LevelZero> = level_zero.iter().collect();
    let member_ids: Vec<String> = members.iter().map(|m| m.id.clone()).collect();
    for m in spec.models.iter().filter(|m| m.is_ensemble()) {
        let r = match m {
            ModelSpec::Vote => {
                let t = Instant::now();
                let preds = vote(&members, &d.test, true, k)?;
                let infer = t.elapsed().as_secs_f64();
                let mut r = EvalReport::from_predictions(
                    spec.task,
                    spec.scenario,
                    "vote",
                    member_ids.clone(),
                    &preds,
                    &d.test_y,
                )?;
                r.validation_macro_f1 =
                    Some(macro_f1(&vote(&members, &d.validation, false, k)?, &d.validation_y, k)?);
                r.validation_source = "validation split".into();
                r.train_seconds = members.iter().map(|m| m.train_seconds).sum();
                r.inference_seconds_per_sample =
                    members.iter().map(|m| m.inference_seconds_per_sample).sum::<f64>() + infer / d.test.len() as f64;
                r
            }
            _ => stacking(spec, &d, &members, &member_ids, out_dir).map_err(|e| e.context("model stacking"))?,
        };
        reports.push(finish(r));
    }

    let val_all: Vec<LevelZeroPrediction> = level_zero.iter().flat_map(|m| m.validation.clone()).collect();
    let test_all: Vec<LevelZeroPrediction> = level_zero.iter().flat_map(|m| m.test.clone()).collect();
    let class_names = spec.task.class_names();
    export_predictions(&out_dir.join("predictions-validation.tsv"), &val_all, &class_names)?;
    export_predictions(&out_dir.join("predictions-test.tsv"), &test_all, &class_names)?;
    for r in &reports {
        r.write(out_dir)?;
    }
    let table = out_dir.join("table.txt");
    fs::write(&table, render_table(&reports)).map_err(|e| Error::io(&table, e))?;

    let manifest = RunManifest {
        spec: spec.clone(),
        effective_cnn: spec.effective_cnn(),
        workers: spec.workers,
        cache_dir: spec.cache_dir.clone(),
        data_root: data_root.to_path_buf(),
        inputs,
        corpus_checksums: vec![
            ("train".into(), d.train.checksum()),
            ("validation".into(), d.validation.checksum()),
            ("test".into(), d.test.checksum()),
        ],
        config_fingerprint: fingerprint.clone(),
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(ExperimentResult { reports, manifest })
}

fn source_manifest(root: &Path, source: Source) -> Result<InputFile> {
    let path = root.join(source.as_str()).join(crate::corpus::MANIFEST_FILE);
    Ok(InputFile {
        sha256: file_sha256(&path)?,
        path,
    })
}

fn stacking(
    spec: &ExperimentSpec,
    d: &Data,
    members: &[&LevelZero],
    member_ids: &[String],
    out_dir: &Path,
) -> Result<EvalReport> {
    let registry = ModelRegistry::new(member_ids.to_vec(), spec.task.class_names())?;
    let val_all: Vec<LevelZeroPrediction> = members.iter().flat_map(|m| m.validation.clone()).collect();
    let test_all: Vec<LevelZeroPrediction> = members.iter().flat_map(|m| m.test.clone()).collect();
    let x = meta_feature_matrix(&val_all, &registry, &d.validation.ids())?;
    let opts = StackerOptions::default();
    let t = Instant::now();
    let grid = spec.stacker_c.map_or_else(default_c_grid, |c| vec![c]);
    let selection = select_c(&x, &d.validation_y, &registry, spec.penalty, &grid, STACKER_FOLDS, opts)?;
    let model = train_stacker(&x, &d.validation_y, &registry, spec.penalty, selection.best_c, opts)?;
    let train_seconds = t.elapsed().as_secs_f64() + members.iter().map(|m| m.train_seconds).sum::<f64>();
    model.save(&out_dir.join("stacker.json"))?;

    let t = Instant::now();
    let xt = meta_feature_matrix(&test_all, &registry, &d.test.ids())?;
    let preds = xt
        .iter()
        .map(|row| predict_stacker(&model, row).map(|p| p.1))
        .collect::<Result<Vec<_>>>()?;
    let infer = t.elapsed().as_secs_f64() / d.test.len() as f64;

    let mut r = EvalReport::from_predictions(
        spec.task,
        spec.scenario,
        "stacking",
        member_ids.to_vec(),
        &preds,
        &d.test_y,
    )?;
    let cv = selection.scores.iter().find(|s| s.0 == selection.best_c).map(|s| s.1);
    r.validation_macro_f1 = cv;
    r.validation_source = format!("{STACKER_FOLDS}-fold cross-validation on validation predictions");
    r.train_seconds = train_seconds;
    r.inference_seconds_per_sample = infer + members.iter().map(|m| m.inference_seconds_per_sample).sum::<f64>();
    r.notes = vec![
        ("penalty".into(), format!("{:?}", spec.penalty)),
        ("c".into(), selection.best_c.to_string()),
        ("c_selection".into(), if spec.stacker_c.is_some() { "fixed".into() } else { "cross-validation".into() }),
        ("optimizer_status".into(), format!("{:?}", model.status)),
        ("optimizer_iterations".into(), model.iterations.to_string()),
        ("protocol".into(), STACKER_PROTOCOL.into()),
    ];
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_parse() {
        assert_eq!("krr".parse::<ModelSpec>().unwrap(), ModelSpec::Krr);
        assert_eq!(
            "constant:RO".parse::<ModelSpec>().unwrap(),
            ModelSpec::Constant(Some("RO".into()))
        );
        assert_eq!(ModelSpec::Constant(Some("RO".into())).id(), "constant-RO");
        assert!("lstm".parse::<ModelSpec>().is_err());
        assert!("constant:".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn ensembles_alone_are_rejected() {
        let s = ExperimentSpec::new(Task::Dialect, Scenario::FullArticles, vec![ModelSpec::Vote]);
        assert!(s.validate().is_err());
    }
}

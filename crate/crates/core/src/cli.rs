//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::charcnn::{forward, CnnArtifact, CnnConfig, ConvBlockConfig, Mode, TrainOptions};
use crate::corpus::{
    build_scenario, import_published_layout, CorpusBundle, Dialect, LabeledCorpus, Scenario, ScenarioDataset, Source,
    Split, Task,
};
use crate::ensemble::{
    default_c_grid, export_predictions, from_kernel_prediction, group_by_sample, import_predictions,
    meta_feature_matrix, peek_model_ids, plurality_vote, predict_stacker, select_c, train_stacker,
    LevelZeroPrediction, ModelRegistry, Penalty, StackerModel, StackerOptions,
};
use crate::error::{Error, ErrorKind, Result};
use crate::evalharness::{
    cached_gram, file_sha256, render_table, run_experiment, EvalReport, ExperimentSpec, InputFile, ModelSpec,
    STACKER_FOLDS,
};
use crate::gradcam::{attribute, quantize, render_gallery, render_html, Palette, RenderInfo};
use crate::kernel_models::{
    is_model_file, predict_multiclass, train_multiclass, BaseModel, Hyper, KernelModelArtifact, Scheme,
};
use crate::strkernel::{gram_matrix, GramMode, GramOptions, KernelSpec, TextCollection};

pub const DATA_ENV: &str = "DIALECTID_DATA";

/// Exit status for each error category.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// One-line error report: `dialectid: error[<tag>]: <message>`.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("dialectid: error[{}]: {msg}", e.tag())
}

#[derive(Parser, Debug)]
#[command(name = "dialectid", version, about = "Romanian dialect and topic identification toolkit")]
struct Cli {
    /// Worker threads for kernels and CNN training (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// File of `key = value` settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a corpus in the canonical layout and print split sizes.
    ValidateCorpus(DataArgs),
    /// Convert the published MOROCO / MOROCO-Tweets layout into the canonical one.
    ImportMoroco(ImportArgs),
    /// Compute and cache the train, validation and test kernels of a scenario.
    PrecomputeKernel(KernelCmd),
    /// Train one model (krr, svm or cnn) and save it.
    Train(TrainArgs),
    /// Write interchange predictions of a saved model on a corpus split.
    Predict(PredictArgs),
    /// Fit the stacking meta-classifier on validation predictions.
    TrainStacker(StackerArgs),
    /// Combine prediction files by plurality voting.
    Vote(VoteArgs),
    /// Train, predict and score a list of models end to end.
    Evaluate(EvaluateArgs),
    /// Render Grad-CAM heatmaps of a CNN on a corpus split.
    Gradcam(GradcamArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Corpus root (defaults to $DIALECTID_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    #[command(flatten)]
    data: DataArgs,
    /// dialect, topic_intra_MD, topic_intra_RO, topic_cross_MD_to_RO or topic_cross_RO_to_MD.
    #[arg(long)]
    task: Option<String>,
    /// full_articles, sentences or cross_genre_tweets.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for CNN initialization, dropout and shuffling (default 42).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    /// n-gram length.
    #[arg(long)]
    n: Option<usize>,
    /// true or false.
    #[arg(long)]
    normalized: Option<String>,
    /// hashed or exact n-gram matching.
    #[arg(long)]
    gram_mode: Option<String>,
    /// Kernel cache directory (defaults to <out>/kernel-cache).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// KRR ridge parameter.
    #[arg(long)]
    lambda: Option<f64>,
    /// SVM box constraint.
    #[arg(long = "svm-c")]
    svm_c: Option<f64>,
    /// binary, ovo or ovr.
    #[arg(long)]
    scheme: Option<String>,
    /// CNN override `key=value` (input_len, embed_dim, filters, widths, fc, pool, se_ratio, dropout, lr, epochs, batch, min_count).
    #[arg(long = "cnn")]
    cnn: Vec<String>,
}

#[derive(Args, Debug)]
struct ImportArgs {
    /// Directory holding the published train/validation/test folders.
    #[arg(long)]
    src: PathBuf,
    /// moroco or moroco-tweets.
    #[arg(long)]
    source: String,
    /// Canonical corpus root to write.
    #[arg(long)]
    dst: PathBuf,
}

#[derive(Args, Debug)]
struct KernelCmd {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// krr, svm or cnn.
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Saved model file.
    #[arg(long)]
    model: PathBuf,
    /// Model id written to the interchange file (defaults to krr, svm or cnn).
    #[arg(long)]
    model_id: Option<String>,
    /// validation or test.
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct StackerArgs {
    /// Interchange files with validation predictions.
    #[arg(long = "preds", required = true, num_args = 1..)]
    preds: Vec<PathBuf>,
    /// Interchange files with test predictions to score the fitted stacker on.
    #[arg(long = "test-preds", num_args = 1..)]
    test_preds: Vec<PathBuf>,
    /// l1 or l2.
    #[arg(long)]
    penalty: Option<String>,
    /// Fixed C; chosen by cross-validation over 1e-3..1e3 when absent.
    #[arg(long = "stacker-c")]
    stacker_c: Option<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct VoteArgs {
    /// Interchange files with predictions on the chosen split.
    #[arg(long = "preds", required = true, num_args = 1..)]
    preds: Vec<PathBuf>,
    /// validation or test.
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Models to run, repeatable or comma-separated: krr, svm, cnn, constant[:CLASS], vote, stacking.
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<String>,
    /// Extra level-zero predictions (interchange files covering validation and test).
    #[arg(long = "external")]
    external: Vec<PathBuf>,
    /// l1 or l2 penalty for stacking.
    #[arg(long)]
    penalty: Option<String>,
    /// Fixed stacker C; chosen by cross-validation over 1e-3..1e3 when absent.
    #[arg(long = "stacker-c")]
    stacker_c: Option<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Args, Debug)]
struct GradcamArgs {
    /// Saved CNN model file.
    #[arg(long)]
    model: PathBuf,
    /// validation or test.
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated sample ids; defaults to the first --limit samples.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    /// Number of samples rendered when --ids is absent.
    #[arg(long)]
    limit: Option<usize>,
    /// predicted, gold or a class name.
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

/// Config-file values overlaid by flags. Every key read is remembered so the
/// effective configuration can be written out; unused file keys are errors.
#[derive(Debug, Default)]
struct Settings {
    values: BTreeMap<String, String>,
    from_file: BTreeSet<String>,
    used: BTreeSet<String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut s = Settings::default();
        let Some(path) = path else { return Ok(s) };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&name, i + 1, "expected `key = value`"))?;
            let key = k.trim().replace('-', "_");
            if key.is_empty() {
                return Err(Error::parse(&name, i + 1, "empty key"));
            }
            s.values.insert(key.clone(), v.trim().to_string());
            s.from_file.insert(key);
        }
        Ok(s)
    }

    fn set<T: ToString>(&mut self, key: &str, flag: Option<T>) {
        if let Some(v) = flag {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    fn get_str(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Usage(format!("bad value `{v}` for {key}: {e}"))),
        }
    }

    fn get_or<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key)?.unwrap_or(default);
        self.values.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn check_unused(&self) -> Result<()> {
        let unused: Vec<&String> = self.from_file.iter().filter(|k| !self.used.contains(*k)).collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!("unknown config keys for this command: {unused:?}")))
        }
    }

    fn effective(&self) -> BTreeMap<String, String> {
        self.values.iter().filter(|(k, _)| self.used.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

struct Ctx {
    settings: Settings,
    workers: usize,
    inputs: Vec<PathBuf>,
}

impl Ctx {
    fn data_root(&mut self, args: &DataArgs) -> Result<PathBuf> {
        self.settings.set("data", args.data.as_ref().map(|p| p.display().to_string()));
        if let Some(d) = self.settings.get_str("data") {
            return Ok(PathBuf::from(d));
        }
        match std::env::var_os(DATA_ENV) {
            Some(v) if !v.is_empty() => {
                let p = PathBuf::from(v);
                self.settings.values.insert("data".into(), p.display().to_string());
                Ok(p)
            }
            _ => Err(Error::Usage(format!("no corpus given: pass --data or set {DATA_ENV}"))),
        }
    }

    fn out_dir(&mut self, args: &ScenarioArgs) -> Result<PathBuf> {
        self.settings.set("out", args.out.as_ref().map(|p| p.display().to_string()));
        let out = self
            .settings
            .get_str("out")
            .map(PathBuf::from)
            .ok_or_else(|| Error::Usage("--out is required".into()))?;
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(out)
    }

    fn task_scenario(&mut self, args: &ScenarioArgs) -> Result<(Task, Scenario, u64)> {
        self.settings.set("task", args.task.clone());
        self.settings.set("scenario", args.scenario.clone());
        self.settings.set("seed", args.seed);
        let task = self.settings.get_or("task", Task::Dialect)?;
        let scenario = self.settings.get_or("scenario", Scenario::FullArticles)?;
        let seed = self.settings.get_or("seed", 42u64)?;
        Ok((task, scenario, seed))
    }

    fn dataset(&mut self, args: &ScenarioArgs) -> Result<(ScenarioDataset, PathBuf)> {
        let root = self.data_root(&args.data)?;
        let (task, scenario, _) = self.task_scenario(args)?;
        let bundle = CorpusBundle::load(&root, scenario == Scenario::CrossGenreTweets)?;
        self.inputs.push(root.clone());
        Ok((build_scenario(&bundle, scenario, task)?, root))
    }

    fn kernel(&mut self, args: &KernelArgs, out: &Path) -> Result<(KernelSpec, GramOptions, PathBuf)> {
        self.settings.set("n", args.n);
        self.settings.set("normalized", args.normalized.clone());
        self.settings.set("gram_mode", args.gram_mode.clone());
        self.settings.set("cache_dir", args.cache_dir.as_ref().map(|p| p.display().to_string()));
        let d = KernelSpec::default();
        let spec = KernelSpec::new(self.settings.get_or("n", d.n)?, self.settings.get_or("normalized", d.normalized)?)
            .map_err(|e| Error::Usage(e.to_string()))?;
        let mode = match self.settings.get_or("gram_mode", "hashed".to_string())?.as_str() {
            "hashed" => GramMode::Hashed,
            "exact" => GramMode::Exact,
            other => return Err(Error::Usage(format!("unknown gram mode `{other}` (hashed or exact)"))),
        };
        let cache = self
            .settings
            .get_str("cache_dir")
            .map_or_else(|| out.join("kernel-cache"), PathBuf::from);
        let opts = GramOptions {
            mode,
            ..GramOptions::with_workers(self.workers)
        };
        Ok((spec, opts, cache))
    }

    fn hyper(&mut self, args: &ModelArgs) -> Result<(Hyper, Option<Scheme>)> {
        self.settings.set("lambda", args.lambda);
        self.settings.set("svm_c", args.svm_c);
        self.settings.set("scheme", args.scheme.clone());
        let mut hyper = Hyper::default();
        hyper.lambda = self.settings.get_or("lambda", hyper.lambda)?;
        hyper.svm.c = self.settings.get_or("svm_c", hyper.svm.c)?;
        let scheme = match self.settings.get_str("scheme").as_deref() {
            None | Some("auto") => None,
            Some("binary") => Some(Scheme::Binary),
            Some("ovo") => Some(Scheme::OneVsOne),
            Some("ovr") => Some(Scheme::OneVsRest),
            Some(other) => return Err(Error::Usage(format!("unknown scheme `{other}` (binary, ovo or ovr)"))),
        };
        Ok((hyper, scheme))
    }

    /// CNN settings for the scenario with `cnn.<key>` overrides applied.
    fn cnn(&mut self, args: &ModelArgs, task: Task, scenario: Scenario, seed: u64) -> Result<CnnConfig> {
        for kv in &args.cnn {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--cnn expects key=value, got `{kv}`")))?;
            self.settings.values.insert(format!("cnn.{}", k.trim()), v.trim().to_string());
        }
        let classes = task.num_classes();
        let mut cfg = match scenario {
            Scenario::FullArticles => CnnConfig::articles(classes),
            _ => CnnConfig::sentences(classes),
        };
        let keys: Vec<String> = self.settings.values.keys().filter(|k| k.starts_with("cnn.")).cloned().collect();
        for key in keys {
            let field = &key[4..];
            let list = |v: &str| -> Result<Vec<usize>> {
                v.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| Error::Usage(format!("bad list `{v}` for {key}"))))
                    .collect()
            };
            match field {
                "input_len" => cfg.input_len = self.settings.get(&key)?.unwrap(),
                "embed_dim" => cfg.embed_dim = self.settings.get(&key)?.unwrap(),
                "pool" => cfg.pool_width = self.settings.get(&key)?.unwrap(),
                "se_ratio" => cfg.se_ratio = self.settings.get(&key)?.unwrap(),
                "dropout" => cfg.dropout = self.settings.get(&key)?.unwrap(),
                "lr" => cfg.lr = self.settings.get(&key)?.unwrap(),
                "epochs" => cfg.epochs = self.settings.get(&key)?.unwrap(),
                "batch" => cfg.batch = self.settings.get(&key)?.unwrap(),
                "min_count" => cfg.vocab_min_count = self.settings.get(&key)?.unwrap(),
                "fc" => cfg.fc_dims = list(&self.settings.get_str(&key).unwrap())?,
                "filters" => {
                    let f: usize = self.settings.get(&key)?.unwrap();
                    cfg.blocks.iter_mut().for_each(|b| b.filters = f);
                }
                "widths" => {
                    let widths = list(&self.settings.get_str(&key).unwrap())?;
                    let filters = cfg.blocks.first().map_or(128, |b| b.filters);
                    cfg.blocks = widths.into_iter().map(|width| ConvBlockConfig { filters, width }).collect();
                }
                other => return Err(Error::Usage(format!("unknown CNN setting `{other}`"))),
            }
        }
        cfg.seed = seed;
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn split(&mut self, flag: &Option<String>, default: Split) -> Result<Split> {
        self.settings.set("split", flag.clone());
        let split = self.settings.get_or("split", default)?;
        if split == Split::Train {
            return Err(Error::Usage("predictions are made on the validation or test split".into()));
        }
        Ok(split)
    }

    /// Writes `run-<command>.json` with the effective settings and input checksums.
    fn finish(&self, command: &str, out: Option<&Path>, extra: serde_json::Value) -> Result<()> {
        self.settings.check_unused()?;
        let Some(out) = out else { return Ok(()) };
        let mut inputs = Vec::new();
        for path in &self.inputs {
            for file in input_files(path)? {
                inputs.push(InputFile {
                    sha256: file_sha256(&file)?,
                    path: file,
                });
            }
        }
        #[derive(Serialize)]
        struct RunRecord<'a> {
            command: &'a str,
            version: &'a str,
            workers: usize,
            settings: BTreeMap<String, String>,
            inputs: Vec<InputFile>,
            details: serde_json::Value,
        }
        let record = RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            workers: self.workers,
            settings: self.settings.effective(),
            inputs,
            details: extra,
        };
        let path = out.join(format!("run-{command}.json"));
        let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Regular files under `path` (or `path` itself), sorted.
fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(e.kind())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    settings.set("workers", cli.workers);
    let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = settings.get_or("workers", default_workers)?;
    if workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let mut ctx = Ctx {
        settings,
        workers,
        inputs: Vec::new(),
    };
    if let Some(cfg) = &cli.config {
        ctx.inputs.push(cfg.clone());
    }
    match cli.command {
        Command::ValidateCorpus(a) => validate_corpus(&mut ctx, &a),
        Command::ImportMoroco(a) => import_moroco(&mut ctx, &a),
        Command::PrecomputeKernel(a) => precompute_kernel(&mut ctx, &a),
        Command::Train(a) => train(&mut ctx, &a),
        Command::Predict(a) => predict(&mut ctx, &a),
        Command::TrainStacker(a) => train_stacker_cmd(&mut ctx, &a),
        Command::Vote(a) => vote(&mut ctx, &a),
        Command::Evaluate(a) => evaluate(&mut ctx, &a),
        Command::Gradcam(a) => gradcam(&mut ctx, &a),
    }
}

fn validate_corpus(ctx: &mut Ctx, a: &DataArgs) -> Result<()> {
    let root = ctx.data_root(a)?;
    let tweets = root.join(Source::MorocoTweets.as_str()).is_dir();
    let bundle = CorpusBundle::load(&root, tweets)?;
    let mut corpora: Vec<&LabeledCorpus> = vec![&bundle.news_train, &bundle.news_validation, &bundle.news_test];
    if let Some(t) = &bundle.tweets {
        corpora.push(&t.validation);
        corpora.push(&t.test);
    }
    for c in corpora {
        c.validate()?;
        let md = c.documents.iter().filter(|d| d.dialect == Dialect::Md).count();
        say(&format!(
            "{}\t{}\t{} documents\tMD {md}\tRO {}\tsha256 {}",
            c.source,
            c.split,
            c.len(),
            c.len() - md,
            c.checksum()
        ));
    }
    ctx.finish("validate-corpus", None, serde_json::Value::Null)
}

fn import_moroco(ctx: &mut Ctx, a: &ImportArgs) -> Result<()> {
    let source: Source = a.source.parse().map_err(|e: Error| Error::Usage(e.to_string()))?;
    let sizes = import_published_layout(&a.src, source, &a.dst)?;
    for (split, n) in source.splits().iter().zip(&sizes) {
        say(&format!("{source}\t{split}\t{n} documents"));
    }
    ctx.inputs.push(a.src.clone());
    ctx.finish(
        "import-moroco",
        Some(&a.dst),
        serde_json::json!({ "source": source.as_str(), "sizes": sizes }),
    )
}

fn precompute_kernel(ctx: &mut Ctx, a: &KernelCmd) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (spec, opts, cache) = ctx.kernel(&a.kernel, &out)?;
    let mut status = Vec::new();
    for (name, rows) in [("train", &ds.train), ("validation", &ds.validation), ("test", &ds.test)] {
        let (k, s) = cached_gram(Some(&cache), rows, &ds.train, spec, &opts)?;
        say(&format!("{name}\t{}x{}\t{}", k.rows, k.cols, s.as_str()));
        status.push(s.as_str());
    }
    ctx.finish(
        "precompute-kernel",
        Some(&out),
        serde_json::json!({ "cache_dir": cache, "status": status }),
    )
}

fn train(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    ctx.settings.set("model", a.model.clone());
    let model = ctx.settings.get_str("model").ok_or_else(|| Error::Usage("--model is required".into()))?;
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (task, scenario, seed) = ctx.task_scenario(&a.scenario)?;
    let train_y = ds.labels(&ds.train)?;
    let class_names = task.class_names();
    if model == "cnn" {
        let cfg = ctx.cnn(&a.params, task, scenario, seed)?;
        let val_y = ds.labels(&ds.validation)?;
        let (artifact, history) = CnnArtifact::fit(
            &cfg,
            class_names,
            &ds.train.texts(),
            &train_y,
            &ds.validation.texts(),
            &val_y,
            TrainOptions { workers: ctx.workers },
        )
        .map_err(|e| e.context("training cnn"))?;
        let path = out.join("cnn.model");
        artifact.save(&path)?;
        let log = out.join("cnn-train-log.tsv");
        fs::write(&log, history.to_log()).map_err(|e| Error::io(&log, e))?;
        say(&format!("saved {} (best epoch {})", path.display(), history.best_epoch));
        return ctx.finish("train", Some(&out), serde_json::json!({ "model": path, "cnn": cfg }));
    }
    let base: BaseModel = model.parse()?;
    let (spec, opts, cache) = ctx.kernel(&a.kernel, &out)?;
    let (hyper, scheme) = ctx.hyper(&a.params)?;
    let scheme = scheme.unwrap_or_else(|| Scheme::default_for(base, task.num_classes()));
    let (k, status) = cached_gram(Some(&cache), &ds.train, &ds.train, spec, &opts)?;
    let trained = train_multiclass(&k, &train_y, task.num_classes(), base, scheme, hyper)
        .map_err(|e| e.context(format!("training {model}")))?;
    let artifact = KernelModelArtifact {
        model: trained,
        class_names,
        train_texts: Some(ds.train.texts().into_iter().map(str::to_string).collect()),
    };
    let path = out.join(format!("{model}.model"));
    artifact.save(&path)?;
    say(&format!("saved {} (kernel cache {})", path.display(), status.as_str()));
    ctx.finish(
        "train",
        Some(&out),
        serde_json::json!({ "model": path, "kernel": spec, "scheme": scheme, "hyper": hyper }),
    )
}

fn check_classes(model: &[String], task: Task) -> Result<()> {
    if model != task.class_names() {
        return Err(Error::Validation(format!(
            "model classes {model:?} do not match task {task} ({:?})",
            task.class_names()
        )));
    }
    Ok(())
}

/// Level-zero predictions of a saved model on a corpus.
fn model_predictions(path: &Path, id: Option<&str>, corpus: &LabeledCorpus, task: Task, workers: usize) -> Result<Vec<LevelZeroPrediction>> {
    let ids = corpus.ids();
    if is_model_file(path) {
        let art = KernelModelArtifact::load(path)?;
        check_classes(&art.class_names, task)?;
        let texts = art.train_texts.as_ref().ok_or_else(|| {
            Error::Validation(format!("{} was saved without its training texts", path.display()))
        })?;
        let cols = TextCollection::new(art.model.train_ids.clone(), texts.iter().map(String::as_str).collect())?;
        let k = gram_matrix(&TextCollection::from_corpus(corpus), &cols, art.model.kernel, &GramOptions::with_workers(workers))?;
        let pred = predict_multiclass(&art.model, &k)?;
        let default_id = match art.model.base {
            BaseModel::Krr => "krr",
            BaseModel::Svm => "svm",
        };
        from_kernel_prediction(id.unwrap_or(default_id), &ids, &pred, art.model.scheme)
    } else {
        let art = CnnArtifact::load(path)?;
        check_classes(&art.class_names, task)?;
        let encoded: Vec<Vec<u32>> = corpus.texts().iter().map(|t| art.encode(t)).collect();
        let probs = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?
            .install(|| forward(&art.params, &art.config, &encoded, Mode::Eval));
        Ok(ids
            .into_iter()
            .zip(probs)
            .map(|(s, p)| {
                let mut probs: Vec<f64> = p.iter().map(|&v| v as f64).collect();
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|v| *v /= total);
                LevelZeroPrediction {
                    sample_id: s,
                    model_id: id.unwrap_or("cnn").to_string(),
                    hard_label: crate::ensemble::argmax(&probs),
                    probs,
                }
            })
            .collect())
    }
}

fn predict(ctx: &mut Ctx, a: &PredictArgs) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (task, _, _) = ctx.task_scenario(&a.scenario)?;
    let split = ctx.split(&a.split, Split::Test)?;
    ctx.inputs.push(a.model.clone());
    let preds = model_predictions(&a.model, a.model_id.as_deref(), ds.split(split), task, ctx.workers)?;
    let id = preds.first().map_or_else(String::new, |p| p.model_id.clone());
    let path = out.join(format!("predictions-{id}-{split}.tsv"));
    export_predictions(&path, &preds, &task.class_names())?;
    say(&format!("wrote {} predictions to {}", preds.len(), path.display()));
    ctx.finish("predict", Some(&out), serde_json::json!({ "predictions": path }))
}

/// Predictions from several interchange files, with model ids in file order.
fn load_prediction_files(paths: &[PathBuf], task: Task, known: &BTreeSet<String>) -> Result<(ModelRegistry, Vec<LevelZeroPrediction>)> {
    let mut ids = Vec::new();
    let mut all = Vec::new();
    for path in paths {
        let file_ids = peek_model_ids(path)?;
        let reg = ModelRegistry::new(file_ids.clone(), task.class_names())?;
        all.extend(import_predictions(path, &reg, Some(known))?);
        ids.extend(file_ids);
    }
    Ok((ModelRegistry::new(ids, task.class_names())?, all))
}

fn train_stacker_cmd(ctx: &mut Ctx, a: &StackerArgs) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (task, scenario, _) = ctx.task_scenario(&a.scenario)?;
    ctx.settings.set("penalty", a.penalty.clone());
    ctx.settings.set("stacker_c", a.stacker_c);
    let penalty: Penalty = ctx.settings.get_or("penalty", "l2".to_string())?.parse()?;
    let fixed_c: Option<f64> = ctx.settings.get("stacker_c")?;
    ctx.inputs.extend(a.preds.iter().cloned());
    ctx.inputs.extend(a.test_preds.iter().cloned());

    let val_ids = ds.validation.ids();
    let known: BTreeSet<String> = val_ids.iter().cloned().collect();
    let (registry, preds) = load_prediction_files(&a.preds, task, &known)?;
    let x = meta_feature_matrix(&preds, &registry, &val_ids)?;
    let y = ds.labels(&ds.validation)?;
    let grid = fixed_c.map_or_else(default_c_grid, |c| vec![c]);
    let opts = StackerOptions::default();
    let selection = select_c(&x, &y, &registry, penalty, &grid, STACKER_FOLDS, opts)?;
    let model = train_stacker(&x, &y, &registry, penalty, selection.best_c, opts)?;
    let path = out.join("stacker.json");
    model.save(&path)?;
    say(&format!(
        "saved {} (C = {}, {:?} after {} iterations)",
        path.display(),
        selection.best_c,
        model.status,
        model.iterations
    ));
    if !a.test_preds.is_empty() {
        let report = score_stacker(&model, &a.test_preds, &ds, task, scenario)?;
        report.write(&out)?;
        say(&render_table(std::slice::from_ref(&report)));
    }
    ctx.finish(
        "train-stacker",
        Some(&out),
        serde_json::json!({ "stacker": path, "c_scores": selection.scores, "models": registry.model_ids }),
    )
}

fn score_stacker(model: &StackerModel, files: &[PathBuf], ds: &ScenarioDataset, task: Task, scenario: Scenario) -> Result<EvalReport> {
    let ids = ds.test.ids();
    let known: BTreeSet<String> = ids.iter().cloned().collect();
    let (_, preds) = load_prediction_files(files, task, &known)?;
    let x = meta_feature_matrix(&preds, &model.registry, &ids)?;
    let labels = x
        .iter()
        .map(|row| predict_stacker(model, row).map(|p| p.1))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(task, scenario, "stacking", model.registry.model_ids.clone(), &labels, &ds.labels(&ds.test)?)
}

fn vote(ctx: &mut Ctx, a: &VoteArgs) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (task, scenario, _) = ctx.task_scenario(&a.scenario)?;
    let split = ctx.split(&a.split, Split::Test)?;
    ctx.inputs.extend(a.preds.iter().cloned());
    let corpus = ds.split(split);
    let ids = corpus.ids();
    let known: BTreeSet<String> = ids.iter().cloned().collect();
    let (registry, preds) = load_prediction_files(&a.preds, task, &known)?;
    let labels = group_by_sample(&preds, &registry, &ids)?
        .iter()
        .map(|g| plurality_vote(g, registry.classes()))
        .collect::<Result<Vec<_>>>()?;
    let names = task.class_names();
    let mut body = String::from("sample_id\tlabel\n");
    for (id, &l) in ids.iter().zip(&labels) {
        body.push_str(&format!("{id}\t{}\n", names[l]));
    }
    let path = out.join(format!("vote-{split}.tsv"));
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    let report = EvalReport::from_predictions(task, scenario, "vote", registry.model_ids.clone(), &labels, &ds.labels(corpus)?)?;
    report.write(&out)?;
    say(&render_table(std::slice::from_ref(&report)));
    ctx.finish("vote", Some(&out), serde_json::json!({ "labels": path, "models": registry.model_ids }))
}

fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let root = ctx.data_root(&a.scenario.data)?;
    let (task, scenario, seed) = ctx.task_scenario(&a.scenario)?;
    if !a.models.is_empty() {
        ctx.settings.values.insert("model".into(), a.models.join(","));
    }
    let models: Vec<ModelSpec> = ctx
        .settings
        .get_str("model")
        .ok_or_else(|| Error::Usage("--model is required".into()))?
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<Result<_>>()?;
    let mut spec = ExperimentSpec::new(task, scenario, models);
    let (kernel, opts, cache) = ctx.kernel(&a.kernel, &out)?;
    let (hyper, scheme) = ctx.hyper(&a.params)?;
    spec.kernel = kernel;
    spec.gram_mode = opts.mode;
    spec.hyper = hyper;
    spec.scheme = scheme;
    spec.seed = seed;
    spec.cnn = Some(ctx.cnn(&a.params, task, scenario, seed)?);
    ctx.settings.set("penalty", a.penalty.clone());
    ctx.settings.set("stacker_c", a.stacker_c);
    spec.penalty = ctx.settings.get_or("penalty", "l2".to_string())?.parse()?;
    spec.stacker_c = ctx.settings.get("stacker_c")?;
    spec.external = a.external.clone();
    spec.workers = ctx.workers;
    spec.cache_dir = Some(cache);
    ctx.inputs.extend(a.external.iter().cloned());
    let result = run_experiment(&spec, &root, &out)?;
    say(&render_table(&result.reports));
    ctx.inputs.push(root);
    ctx.finish(
        "evaluate",
        Some(&out),
        serde_json::json!({ "config_fingerprint": result.manifest.config_fingerprint }),
    )
}

fn gradcam(ctx: &mut Ctx, a: &GradcamArgs) -> Result<()> {
    let out = ctx.out_dir(&a.scenario)?;
    let (ds, _) = ctx.dataset(&a.scenario)?;
    let (task, _, _) = ctx.task_scenario(&a.scenario)?;
    let split = ctx.split(&a.split, Split::Test)?;
    ctx.settings.set("limit", a.limit);
    ctx.settings.set("target", a.target.clone());
    let limit = ctx.settings.get_or("limit", 10usize)?;
    let target = ctx.settings.get_or("target", "predicted".to_string())?;
    ctx.inputs.push(a.model.clone());
    let art = CnnArtifact::load(&a.model)?;
    check_classes(&art.class_names, task)?;
    let corpus = ds.split(split);
    let docs: Vec<_> = if a.ids.is_empty() {
        corpus.documents.iter().take(limit).collect()
    } else {
        a.ids
            .iter()
            .map(|id| {
                corpus
                    .documents
                    .iter()
                    .find(|d| &d.id == id)
                    .ok_or_else(|| Error::Validation(format!("sample {id} is not in the {split} split")))
            })
            .collect::<Result<_>>()?
    };
    let mut gallery = Vec::new();
    for doc in docs {
        let ids = art.encode(&doc.text);
        let probs = forward(&art.params, &art.config, std::slice::from_ref(&ids), Mode::Eval).remove(0);
        let predicted = crate::charcnn::argmax(&probs);
        let class = match target.as_str() {
            "predicted" => predicted,
            "gold" => task.label_of(doc)?,
            name => art
                .class_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Usage(format!("unknown target `{name}` (predicted, gold or a class name)")))?,
        };
        let attr = attribute(&art.params, &art.config, &ids, class, &doc.id)?;
        let palette = if task.is_topic() {
            Palette::for_dialect(doc.dialect)
        } else {
            Palette::for_dialect(Dialect::ALL[class])
        };
        let info = RenderInfo {
            sample_id: doc.id.clone(),
            predicted_label: art.class_names[predicted].clone(),
            class_scores: art.class_names.iter().cloned().zip(probs.iter().copied()).collect(),
        };
        let file = format!("{}.html", sanitize(&doc.id));
        render_html(&doc.text, &quantize(&attr, palette), &info, &out.join(&file))?;
        gallery.push((file, doc.id.clone(), info.predicted_label));
    }
    render_gallery(&gallery, &out.join("index.html"))?;
    say(&format!("rendered {} samples into {}", gallery.len(), out.display()));
    ctx.finish("gradcam", Some(&out), serde_json::json!({ "samples": gallery.len() }))
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

//! Plurality voting and stacked generalization over level-zero predictions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalharness::macro_f1;
use crate::kernel_models::{KernelPrediction, Scheme};

const PROB_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Calibration {
    /// One raw margin `s`: `p(class 0) = 1 / (1 + exp(-s))`.
    Logistic,
    /// Softmax over one score per class.
    SoftmaxOverOvr,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Turns raw decision values into a probability vector.
pub fn calibrate_scores(raw: &[f64], method: Calibration) -> Result<Vec<f64>> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite decision value in {raw:?}")));
    }
    match method {
        Calibration::Logistic => match raw {
            [s] => {
                let p = sigmoid(*s);
                Ok(vec![p, 1.0 - p])
            }
            _ => Err(Error::Validation(format!(
                "logistic calibration takes one margin, got {}",
                raw.len()
            ))),
        },
        Calibration::SoftmaxOverOvr if raw.is_empty() => {
            Err(Error::Validation("softmax calibration needs at least one score".into()))
        }
        Calibration::SoftmaxOverOvr => Ok(softmax(raw)),
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelZeroPrediction {
    pub sample_id: String,
    pub model_id: String,
    pub hard_label: usize,
    pub probs: Vec<f64>,
}

impl LevelZeroPrediction {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("{}/{}: {m}", self.model_id, self.sample_id)));
        if self.probs.len() != classes {
            return bad(format!("{} probabilities for {classes} classes", self.probs.len()));
        }
        if self.hard_label >= classes {
            return bad(format!("hard label {} outside {classes} classes", self.hard_label));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad(format!("probability outside [0, 1] in {:?}", self.probs));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return bad(format!("probabilities sum to {sum}"));
        }
        Ok(())
    }
}

/// Ordered level-zero model ids and the class set they predict over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRegistry {
    pub model_ids: Vec<String>,
    pub class_names: Vec<String>,
}

impl ModelRegistry {
    pub fn new(model_ids: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = model_ids.iter().collect();
        if model_ids.is_empty() || unique.len() != model_ids.len() {
            return Err(Error::Validation(format!(
                "model registry needs distinct ids, got {model_ids:?}"
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::Validation("model registry needs at least two classes".into()));
        }
        Ok(ModelRegistry {
            model_ids,
            class_names,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.classes() * self.model_ids.len()
    }
}

/// `[one-hot(hard label), probs]` for each registered model, in registry order.
pub fn to_meta_features(preds: &[&LevelZeroPrediction], registry: &ModelRegistry) -> Result<Vec<f64>> {
    let k = registry.classes();
    let mut out = Vec::with_capacity(registry.feature_dim());
    for id in &registry.model_ids {
        let p = preds
            .iter()
            .find(|p| &p.model_id == id)
            .ok_or_else(|| Error::Validation(format!("no prediction from model {id}")))?;
        if p.probs.len() != k {
            return Err(Error::Validation(format!(
                "model {id} gives {} probabilities, registry has {k} classes",
                p.probs.len()
            )));
        }
        if p.hard_label >= k {
            return Err(Error::Validation(format!("model {id}: hard label {} outside {k} classes", p.hard_label)));
        }
        out.extend((0..k).map(|c| if c == p.hard_label { 1.0 } else { 0.0 }));
        out.extend_from_slice(&p.probs);
    }
    Ok(out)
}

/// Predictions of every registered model for each sample, in the given
/// sample order.
pub fn group_by_sample<'a>(
    preds: &'a [LevelZeroPrediction],
    registry: &ModelRegistry,
    sample_ids: &[String],
) -> Result<Vec<Vec<&'a LevelZeroPrediction>>> {
    let mut by_sample: HashMap<&str, Vec<&LevelZeroPrediction>> = HashMap::new();
    for p in preds {
        if registry.model_ids.contains(&p.model_id) {
            by_sample.entry(p.sample_id.as_str()).or_default().push(p);
        }
    }
    sample_ids
        .iter()
        .map(|id| {
            let group = by_sample.remove(id.as_str()).unwrap_or_default();
            for m in &registry.model_ids {
                if !group.iter().any(|p| &p.model_id == m) {
                    return Err(Error::Validation(format!("model {m} has no prediction for sample {id}")));
                }
            }
            Ok(group)
        })
        .collect()
}

/// Meta-feature matrix for the given samples.
pub fn meta_feature_matrix(
    preds: &[LevelZeroPrediction],
    registry: &ModelRegistry,
    sample_ids: &[String],
) -> Result<Vec<Vec<f64>>> {
    group_by_sample(preds, registry, sample_ids)?
        .iter()
        .map(|g| to_meta_features(g, registry))
        .collect()
}

/// Most frequent hard label; ties go to the highest mean probability among the
/// tied classes, then to the lowest class index.
pub fn plurality_vote(votes: &[&LevelZeroPrediction], classes: usize) -> Result<usize> {
    if votes.is_empty() {
        return Err(Error::Validation("plurality vote needs at least one vote".into()));
    }
    let mut counts = vec![0usize; classes];
    let mut prob_sums = vec![0.0f64; classes];
    for v in votes {
        if v.hard_label >= classes || v.probs.len() != classes {
            return Err(Error::Validation(format!(
                "vote from {} does not fit {classes} classes",
                v.model_id
            )));
        }
        counts[v.hard_label] += 1;
        for (s, p) in prob_sums.iter_mut().zip(&v.probs) {
            *s += p;
        }
    }
    let top = *counts.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for c in (0..classes).filter(|&c| counts[c] == top) {
        match best {
            Some(b) if prob_sums[c] <= prob_sums[b] => {}
            _ => best = Some(c),
        }
    }
    Ok(best.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(Error::Usage(format!("unknown penalty {s:?} (expected l1 or l2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
    /// The line search could not decrease the objective any further in
    /// floating point.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackerOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for StackerOptions {
    fn default() -> Self {
        StackerOptions {
            grad_tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Multinomial logistic regression over meta-features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackerModel {
    /// `classes × features`, row-major.
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub penalty: Penalty,
    pub c: f64,
    pub registry: ModelRegistry,
    pub status: OptimizerStatus,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Objective value after each iteration, starting with the initial point.
    pub loss_history: Vec<f64>,
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    d: usize,
    c: f64,
    penalty: Penalty,
}

impl Problem<'_> {
    fn logits(&self, theta: &[f64], row: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.k * self.d);
        (0..self.k)
            .map(|c| b[c] + w[c * self.d..(c + 1) * self.d].iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    /// Summed cross-entropy and its gradient.
    fn data_term(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        let wlen = self.k * self.d;
        for (row, &y) in self.x.iter().zip(self.y) {
            let z = self.logits(theta, row);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - z[y];
            for c in 0..self.k {
                let g = (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                grad[wlen + c] += g;
                for (gw, &xv) in grad[c * self.d..(c + 1) * self.d].iter_mut().zip(row) {
                    *gw += g * xv;
                }
            }
        }
        (loss, grad)
    }

    fn penalty_value(&self, theta: &[f64]) -> f64 {
        let w = &theta[..self.k * self.d];
        match self.penalty {
            Penalty::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>() / self.c,
            Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>() / self.c,
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.data_term(theta).0 + self.penalty_value(theta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Fit {
    theta: Vec<f64>,
    status: OptimizerStatus,
    iterations: usize,
    grad_norm: f64,
    history: Vec<f64>,
}

/// L-BFGS with Armijo backtracking on the smooth L2 objective.
fn fit_l2(p: &Problem, opts: StackerOptions) -> Fit {
    const MEMORY: usize = 10;
    let wlen = p.k * p.d;
    let eval = |theta: &[f64]| {
        let (mut f, mut g) = p.data_term(theta);
        f += p.penalty_value(theta);
        for (gi, wi) in g[..wlen].iter_mut().zip(&theta[..wlen]) {
            *gi += wi / p.c;
        }
        (f, g)
    };
    let mut theta = vec![0.0; wlen + p.k];
    let (mut f, mut g) = eval(&theta);
    let mut history = vec![f];
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for iter in 0..opts.max_iter {
        let gn = norm_inf(&g);
        if gn <= opts.grad_tol {
            return Fit { theta, status: OptimizerStatus::Converged, iterations: iter, grad_norm: gn, history };
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / norm_inf(&g).max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            pairs.clear();
            dir = g.iter().map(|v| -v / norm_inf(&g)).collect();
            slope = dot(&g, &dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let (fc, gc) = eval(&cand);
            if fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            return Fit { theta, status: OptimizerStatus::Stalled, iterations: iter, grad_norm: gn, history };
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if pairs.len() == MEMORY {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / sy));
        }
        theta = cand;
        f = fc;
        g = gc;
        history.push(f);
    }
    let gn = norm_inf(&g);
    let status = if gn <= opts.grad_tol { OptimizerStatus::Converged } else { OptimizerStatus::MaxIterations };
    Fit { theta, status, iterations: opts.max_iter, grad_norm: gn, history }
}

/// Proximal gradient with backtracking on the L1 objective; intercepts are
/// not penalized.
fn fit_l1(p: &Problem, opts: StackerOptions) -> Fit {
    let wlen = p.k * p.d;
    let mut theta = vec![0.0; wlen + p.k];
    let (mut smooth, mut g) = p.data_term(&theta);
    let mut history = vec![smooth + p.penalty_value(&theta)];
    let mut step = 1.0f64;
    let prox = |theta: &[f64], g: &[f64], t: f64| -> Vec<f64> {
        theta
            .iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&v, &gi))| {
                let z = v - t * gi;
                if i < wlen {
                    z.signum() * (z.abs() - t / p.c).max(0.0)
                } else {
                    z
                }
            })
            .collect()
    };
    for iter in 0..opts.max_iter {
        let mapped = prox(&theta, &g, 1.0);
        let gm: Vec<f64> = theta.iter().zip(&mapped).map(|(a, b)| a - b).collect();
        let gn = norm_inf(&gm);
        if gn <= opts.grad_tol {
            return Fit { theta, status: OptimizerStatus::Converged, iterations: iter, grad_norm: gn, history };
        }
        step = (step * 2.0).min(1.0);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = prox(&theta, &g, step);
            let diff: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let (fc, gc) = p.data_term(&cand);
            if fc <= smooth + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * step) {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            return Fit { theta, status: OptimizerStatus::Stalled, iterations: iter, grad_norm: gn, history };
        };
        theta = cand;
        smooth = fc;
        g = gc;
        history.push(smooth + p.penalty_value(&theta));
    }
    let mapped = prox(&theta, &g, 1.0);
    let gn = norm_inf(&theta.iter().zip(&mapped).map(|(a, b)| a - b).collect::<Vec<_>>());
    let status = if gn <= opts.grad_tol { OptimizerStatus::Converged } else { OptimizerStatus::MaxIterations };
    Fit { theta, status, iterations: opts.max_iter, grad_norm: gn, history }
}

/// Fits the meta-learner by minimizing summed cross-entropy plus `R(W) / C`,
/// with `R = ||W||^2 / 2` (L2) or `||W||_1` (L1).
pub fn train_stacker(
    features: &[Vec<f64>],
    labels: &[usize],
    registry: &ModelRegistry,
    penalty: Penalty,
    c: f64,
    opts: StackerOptions,
) -> Result<StackerModel> {
    let k = registry.classes();
    let d = registry.feature_dim();
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::Alignment(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(row) = features.iter().find(|r| r.len() != d) {
        return Err(Error::Validation(format!(
            "meta-feature dimension {} does not match the registry's {d}",
            row.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Validation(format!("label {y} outside {k} classes")));
    }
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::Validation(format!(
            "stacker needs at least two classes in its fitting labels, found {present:?}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Validation(format!("C must be positive and finite, got {c}")));
    }
    let problem = Problem {
        x: features,
        y: labels,
        k,
        d,
        c,
        penalty,
    };
    let fit = match penalty {
        Penalty::L2 => fit_l2(&problem, opts),
        Penalty::L1 => fit_l1(&problem, opts),
    };
    if fit.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("stacker weights became non-finite".into()));
    }
    debug_assert!((problem.objective(&fit.theta) - fit.history.last().unwrap()).abs() < 1e-6 * (1.0 + fit.history[0]));
    let (w, b) = fit.theta.split_at(k * d);
    Ok(StackerModel {
        weights: w.to_vec(),
        intercepts: b.to_vec(),
        penalty,
        c,
        registry: registry.clone(),
        status: fit.status,
        iterations: fit.iterations,
        final_grad_norm: fit.grad_norm,
        loss_history: fit.history,
    })
}

impl StackerModel {
    pub fn feature_dim(&self) -> usize {
        self.registry.feature_dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: StackerModel =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let k = m.registry.classes();
        if m.weights.len() != k * m.feature_dim() || m.intercepts.len() != k {
            return Err(Error::Format(format!("{}: stacker shapes are inconsistent", path.display())));
        }
        Ok(m)
    }
}

/// `softmax(W x + b)` and its argmax (lowest index on ties).
pub fn predict_stacker(model: &StackerModel, features: &[f64]) -> Result<(Vec<f64>, usize)> {
    let d = model.feature_dim();
    if features.len() != d {
        return Err(Error::Validation(format!(
            "meta-feature dimension {} does not match the model's {d}",
            features.len()
        )));
    }
    let logits: Vec<f64> = model
        .intercepts
        .iter()
        .enumerate()
        .map(|(c, b)| b + dot(&model.weights[c * d..(c + 1) * d], features))
        .collect();
    let probs = softmax(&logits);
    let label = argmax(&probs);
    Ok((probs, label))
}

/// `10^-3 .. 10^3`, step ×10.
pub fn default_c_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSelection {
    pub best_c: f64,
    /// Mean cross-validated macro F1 per grid value.
    pub scores: Vec<(f64, f64)>,
}

/// Picks C by deterministic k-fold cross-validation (sample `i` goes to fold
/// `i mod folds`) on macro F1; ties go to the smaller C.
pub fn select_c(
    features: &[Vec<f64>],
    labels: &[usize],
    registry: &ModelRegistry,
    penalty: Penalty,
    grid: &[f64],
    folds: usize,
    opts: StackerOptions,
) -> Result<CSelection> {
    if grid.is_empty() || folds < 2 {
        return Err(Error::Validation("C selection needs a grid and at least two folds".into()));
    }
    let k = registry.classes();
    let mut scores = Vec::with_capacity(grid.len());
    for &c in grid {
        let mut total = 0.0;
        let mut used = 0;
        for f in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, (x, &y)) in features.iter().zip(labels).enumerate() {
                if i % folds == f {
                    vx.push(x.clone());
                    vy.push(y);
                } else {
                    tx.push(x.clone());
                    ty.push(y);
                }
            }
            if vx.is_empty() || ty.iter().collect::<BTreeSet<_>>().len() < 2 {
                continue;
            }
            let model = train_stacker(&tx, &ty, registry, penalty, c, opts)?;
            let preds = vx
                .iter()
                .map(|x| predict_stacker(&model, x).map(|p| p.1))
                .collect::<Result<Vec<_>>>()?;
            total += macro_f1(&preds, &vy, k)?;
            used += 1;
        }
        if used == 0 {
            return Err(Error::Validation("too few fitting samples for cross-validation".into()));
        }
        scores.push((c, total / used as f64));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    Ok(CSelection {
        best_c: best.0,
        scores,
    })
}

fn checksum_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes predictions as TSV (`sample_id, model_id, hard_label, <class names>`)
/// followed by a `#checksum` line over everything above it.
pub fn export_predictions(path: &Path, preds: &[LevelZeroPrediction], class_names: &[String]) -> Result<()> {
    let mut body = format!("sample_id\tmodel_id\thard_label\t{}\n", class_names.join("\t"));
    for p in preds {
        p.validate(class_names.len())?;
        let _ = write!(body, "{}\t{}\t{}", p.sample_id, p.model_id, p.hard_label);
        for v in &p.probs {
            let _ = write!(body, "\t{v}");
        }
        body.push('\n');
    }
    let sum = checksum_hex(body.as_bytes());
    let _ = writeln!(body, "#checksum\t{sum}");
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Reads an interchange file. Models must be in the registry and, when given,
/// samples must be in `known_samples`. The trailing checksum line is optional
/// but verified when present.
pub fn import_predictions(
    path: &Path,
    registry: &ModelRegistry,
    known_samples: Option<&BTreeSet<String>>,
) -> Result<Vec<LevelZeroPrediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let k = registry.classes();
    let mut lines = text.split_inclusive('\n').enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::parse(&file, 1, "empty prediction file"));
    };
    let cols: Vec<&str> = header.trim_end_matches(['\n', '\r']).split('\t').collect();
    let expected: Vec<&str> = ["sample_id", "model_id", "hard_label"]
        .into_iter()
        .chain(registry.class_names.iter().map(String::as_str))
        .collect();
    if cols != expected {
        return Err(Error::parse(&file, 1, format!("header {cols:?}, expected {expected:?}")));
    }
    let mut consumed = header.len();
    for (i, raw) in lines.clone() {
        if let Some(sum) = raw.trim_end_matches(['\n', '\r']).strip_prefix("#checksum\t") {
            let actual = checksum_hex(&text.as_bytes()[..consumed]);
            if sum.trim() != actual {
                return Err(Error::parse(&file, i + 1, format!("checksum mismatch (file says {}, content hashes to {actual})", sum.trim())));
            }
            break;
        }
        consumed += raw.len();
    }
    let mut out = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut checked = false;
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim_end_matches(['\n', '\r']);
        if checked {
            if line.is_empty() {
                continue;
            }
            return Err(Error::parse(&file, lineno, "content after the checksum line"));
        }
        if line.starts_with("#checksum\t") {
            checked = true;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + k {
            return Err(Error::parse(&file, lineno, format!("{} columns, expected {}", fields.len(), 3 + k)));
        }
        let hard_label = match fields[2].parse::<usize>() {
            Ok(v) => v,
            Err(_) => registry
                .class_names
                .iter()
                .position(|c| c == fields[2])
                .ok_or_else(|| Error::parse(&file, lineno, format!("unknown hard label {:?}", fields[2])))?,
        };
        let probs = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(&file, lineno, format!("bad probability {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let pred = LevelZeroPrediction {
            sample_id: fields[0].to_string(),
            model_id: fields[1].to_string(),
            hard_label,
            probs,
        };
        let at = |e: Error| e.context(format!("{file}:{lineno}"));
        pred.validate(k).map_err(at)?;
        if !registry.model_ids.contains(&pred.model_id) {
            return Err(at(Error::Validation(format!("model {} is not registered", pred.model_id))));
        }
        if let Some(known) = known_samples {
            if !known.contains(&pred.sample_id) {
                return Err(at(Error::Validation(format!("unknown sample id {}", pred.sample_id))));
            }
        }
        if !seen.insert((pred.sample_id.clone(), pred.model_id.clone())) {
            return Err(at(Error::Validation(format!(
                "duplicate prediction for {} by {}",
                pred.sample_id, pred.model_id
            ))));
        }
        out.push(pred);
    }
    Ok(out)
}

/// Level-zero predictions from a kernel classifier's raw decisions: logistic
/// calibration of the binary margin, softmax over per-class scores otherwise.
pub fn from_kernel_prediction(
    model_id: &str,
    sample_ids: &[String],
    pred: &KernelPrediction,
    scheme: Scheme,
) -> Result<Vec<LevelZeroPrediction>> {
    if sample_ids.len() != pred.labels.len() {
        return Err(Error::Alignment(format!(
            "{} sample ids for {} predictions",
            sample_ids.len(),
            pred.labels.len()
        )));
    }
    let method = match scheme {
        Scheme::Binary => Calibration::Logistic,
        Scheme::OneVsRest | Scheme::OneVsOne => Calibration::SoftmaxOverOvr,
    };
    sample_ids
        .iter()
        .zip(&pred.labels)
        .zip(&pred.scores)
        .map(|((id, &label), raw)| {
            Ok(LevelZeroPrediction {
                sample_id: id.clone(),
                model_id: model_id.to_string(),
                hard_label: label,
                probs: calibrate_scores(raw, method)?,
            })
        })
        .collect()
}

/// Model ids named in an interchange file, in first-seen order, without
/// validating the rows.
pub fn peek_model_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids: Vec<String> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line
            .split('\t')
            .nth(1)
            .ok_or_else(|| Error::parse(path.display().to_string(), i + 1, "missing model_id column"))?;
        if !ids.iter().any(|m| m == id) {
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        return Err(Error::Validation(format!("{} holds no predictions", path.display())));
    }
    Ok(ids)
}

/// Model ids appearing in a prediction file, in first-seen order.
pub fn model_ids_in(preds: &[LevelZeroPrediction]) -> Vec<String> {
    let mut seen = BTreeMap::new();
    for p in preds {
        let n = seen.len();
        seen.entry(p.model_id.clone()).or_insert(n);
    }
    let mut ids: Vec<(usize, String)> = seen.into_iter().map(|(k, v)| (v, k)).collect();
    ids.sort();
    ids.into_iter().map(|(_, k)| k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(model: &str, sample: &str, hard: usize, probs: &[f64]) -> LevelZeroPrediction {
        LevelZeroPrediction {
            sample_id: sample.into(),
            model_id: model.into(),
            hard_label: hard,
            probs: probs.to_vec(),
        }
    }

    fn registry(models: &[&str], k: usize) -> ModelRegistry {
        ModelRegistry::new(
            models.iter().map(|s| s.to_string()).collect(),
            (0..k).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_scores(&[0.0], Calibration::Logistic).unwrap(), vec![0.5, 0.5]);
        assert!(calibrate_scores(&[800.0], Calibration::Logistic).unwrap()[0] > 1.0 - 1e-12);
        let p = calibrate_scores(&[2.0, 1.0, 0.0, -1.0, -2.0, -3.0], Calibration::SoftmaxOverOvr).unwrap();
        let want = [0.633691, 0.233122, 0.085761, 0.031550, 0.011606, 0.004270];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 5e-7, "{a} vs {b}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meta_feature_layout() {
        let r = registry(&["a"], 2);
        let p = pred("a", "s", 0, &[0.8, 0.2]);
        assert_eq!(to_meta_features(&[&p], &r).unwrap(), vec![1.0, 0.0, 0.8, 0.2]);
        let ids: Vec<String> = (0..15).map(|i| format!("m{i}")).collect();
        assert_eq!(ModelRegistry::new(ids, vec!["x".into(), "y".into()]).unwrap().feature_dim(), 60);
        let r2 = registry(&["a", "b"], 2);
        assert!(to_meta_features(&[&p], &r2).unwrap_err().to_string().contains("model b"));
    }

    #[test]
    fn voting_rules() {
        let a = pred("m1", "s", 0, &[0.6, 0.4]);
        let b = pred("m2", "s", 1, &[0.45, 0.55]);
        let a2 = pred("m3", "s", 0, &[0.9, 0.1]);
        assert_eq!(plurality_vote(&[&a, &a2, &b], 2).unwrap(), 0);
        // tie: mean p(0) = 0.525, mean p(1) = 0.475
        assert_eq!(plurality_vote(&[&a, &b], 2).unwrap(), 0);
        let c = pred("m1", "s", 0, &[0.5, 0.5]);
        let d = pred("m2", "s", 1, &[0.5, 0.5]);
        assert_eq!(plurality_vote(&[&d, &c], 2).unwrap(), 0);
        assert!(plurality_vote(&[], 2).is_err());
    }

    #[test]
    fn stacker_zero_model_and_dimension_check() {
        let r = registry(&["a"], 2);
        let m = StackerModel {
            weights: vec![0.0; 8],
            intercepts: vec![0.0; 2],
            penalty: Penalty::L2,
            c: 1.0,
            registry: r,
            status: OptimizerStatus::Converged,
            iterations: 0,
            final_grad_norm: 0.0,
            loss_history: vec![],
        };
        assert_eq!(predict_stacker(&m, &[1.0, 0.0, 0.7, 0.3]).unwrap(), (vec![0.5, 0.5], 0));
        assert!(predict_stacker(&m, &[1.0, 0.0, 0.7]).is_err());
    }

    #[test]
    fn stacker_rejects_single_class() {
        let r = registry(&["a"], 2);
        let x = vec![vec![1.0, 0.0, 0.9, 0.1]; 3];
        assert!(train_stacker(&x, &[0, 0, 0], &r, Penalty::L2, 1.0, StackerOptions::default()).is_err());
    }

    #[test]
    fn strong_regularization_gives_prior_intercepts() {
        let r = registry(&["a"], 2);
        let x = vec![
            vec![1.0, 0.0, 0.9, 0.1],
            vec![0.0, 1.0, 0.2, 0.8],
            vec![1.0, 0.0, 0.7, 0.3],
            vec![1.0, 0.0, 0.6, 0.4],
        ];
        let y = [0, 1, 0, 0];
        for penalty in [Penalty::L1, Penalty::L2] {
            let m = train_stacker(&x, &y, &r, penalty, 1e-6, StackerOptions::default()).unwrap();
            assert!(m.weights.iter().all(|w| w.abs() < 1e-4), "{penalty:?} {:?}", m.weights);
            let (p, _) = predict_stacker(&m, &x[1]).unwrap();
            assert!((p[0] - 0.75).abs() < 1e-3, "{p:?}");
        }
    }
}

//! Dual-form classifiers trained on precomputed kernel matrices.
//!
//! Kernel ridge regression solves `(K + λI) α = y` through a Cholesky
//! factorization. The SVM solves the standard C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  0 ≤ αᵢ ≤ C,  yᵀα = 0,   Q = diag(y) K diag(y)
//! ```
//!
//! by SMO with maximal-violating-pair selection. Binary targets use `+1` for
//! the first class (class index 0, `MD` for dialect identification) and `-1`
//! for the other; scores of exactly zero resolve to `+1`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strkernel::{KernelMatrix, KernelSpec};

pub const MODEL_MAGIC: &[u8; 12] = b"DIALECTKMDL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Default ridge for KRR.
pub const DEFAULT_LAMBDA: f64 = 1e-2;
/// Default SVM box constraint.
pub const DEFAULT_C: f64 = 1e2;

const TAU: f64 = 1e-12;

/// Lower-triangular Cholesky factor stored row by row (row `i` holds `i + 1` values).
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    packed: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[c * 4 + k] * b[c * 4 + k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Cholesky {
    /// Factors `K + shift·I`. On failure returns the offending row and pivot.
    pub fn factor(k: &KernelMatrix, shift: f64) -> std::result::Result<Self, (usize, f64)> {
        let n = k.rows;
        let mut packed = vec![0f64; row_start(n)];
        for i in 0..n {
            let (done, rest) = packed.split_at_mut(row_start(i));
            let row_i = &mut rest[..=i];
            let k_row = k.row(i);
            for j in 0..i {
                let row_j = &done[row_start(j)..row_start(j) + j + 1];
                let s = k_row[j] as f64 - dot(&row_i[..j], &row_j[..j]);
                row_i[j] = s / row_j[j];
            }
            let pivot = k_row[i] as f64 + shift - dot(&row_i[..i], &row_i[..i]);
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err((i, pivot));
            }
            row_i[i] = pivot.sqrt();
        }
        Ok(Cholesky { n, packed })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.packed[row_start(i) + j]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = vec![0f64; n];
        for i in 0..n {
            let row = &self.packed[row_start(i)..row_start(i) + i];
            z[i] = (b[i] - dot(row, &z[..i])) / self.at(i, i);
        }
        let mut x = z;
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.at(j, i) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }
}

fn check_square(k: &KernelMatrix) -> Result<()> {
    if !k.is_square() || k.row_ids != k.col_ids {
        return Err(Error::Validation(format!(
            "training kernel must be a square self-kernel, got {}x{}",
            k.rows, k.cols
        )));
    }
    if k.rows == 0 {
        return Err(Error::Validation("empty training kernel".into()));
    }
    for i in 0..k.rows {
        for j in 0..i {
            if k.get(i, j) != k.get(j, i) {
                return Err(Error::Validation(format!(
                    "training kernel is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn check_targets(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Validation(format!("{} targets for {} samples", y.len(), n)));
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Validation(format!("binary targets must be ±1, found {bad}")));
    }
    Ok(())
}

fn check_alignment(train_ids: &[String], k_cross: &KernelMatrix) -> Result<()> {
    if k_cross.col_ids != train_ids {
        return Err(Error::Alignment(format!(
            "kernel columns ({} ids) do not match the model's training ids ({} ids) in order",
            k_cross.cols,
            train_ids.len()
        )));
    }
    Ok(())
}

/// `+1` for non-negative scores, `-1` otherwise.
pub fn sign_label(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// `+1` for samples of `positive`, `-1` for everything else.
pub fn binary_targets(labels: &[usize], positive: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == positive { 1.0 } else { -1.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub alphas: Vec<f64>,
    pub lambda: f64,
    /// Extra ridge added after a failed factorization (0 when none was needed).
    pub ridge_inflation: f64,
    pub train_ids: Vec<String>,
}

/// Solves several right-hand sides against one factorization of `K + λI`.
fn krr_solve_many(k: &KernelMatrix, targets: &[Vec<f64>], lambda: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    check_square(k)?;
    if !(lambda >= 0.0) {
        return Err(Error::Validation(format!("lambda must be non-negative, got {lambda}")));
    }
    for y in targets {
        check_targets(y, k.rows)?;
    }
    let (factor, inflation) = match Cholesky::factor(k, lambda) {
        Ok(f) => (f, 0.0),
        Err(_) => {
            let trace: f64 = (0..k.rows).map(|i| k.get(i, i) as f64).sum();
            let inflation = 1e-8 * trace / k.rows as f64;
            let f = Cholesky::factor(k, lambda + inflation).map_err(|(row, pivot)| {
                Error::Numerical(format!(
                    "Cholesky factorization of K + λI failed at row {row}: smallest pivot {pivot:e} \
                     (λ = {lambda:e}, retried with inflation {inflation:e})"
                ))
            })?;
            (f, inflation)
        }
    };
    Ok((targets.iter().map(|y| factor.solve(y)).collect(), inflation))
}

pub fn train_krr(k: &KernelMatrix, y: &[f64], lambda: f64) -> Result<KrrModel> {
    let (mut alphas, inflation) = krr_solve_many(k, std::slice::from_ref(&y.to_vec()), lambda)?;
    Ok(KrrModel {
        alphas: alphas.pop().unwrap(),
        lambda,
        ridge_inflation: inflation,
        train_ids: k.row_ids.clone(),
    })
}

/// `‖(K + λI)α − y‖∞`.
pub fn krr_residual(k: &KernelMatrix, lambda: f64, alphas: &[f64], y: &[f64]) -> f64 {
    (0..k.rows)
        .map(|i| {
            let row: f64 = k
                .row(i)
                .iter()
                .zip(alphas)
                .map(|(&kv, &a)| kv as f64 * a)
                .sum();
            (row + lambda * alphas[i] - y[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn cross_scores(k_cross: &KernelMatrix, columns: &[usize], coef: &[f64], bias: f64) -> Vec<f64> {
    (0..k_cross.rows)
        .map(|r| {
            let row = k_cross.row(r);
            columns
                .iter()
                .zip(coef)
                .filter(|(_, c)| **c != 0.0)
                .map(|(&j, &c)| row[j] as f64 * c)
                .sum::<f64>()
                + bias
        })
        .collect()
}

pub fn predict_krr(model: &KrrModel, k_cross: &KernelMatrix) -> Result<(Vec<f64>, Vec<i8>)> {
    check_alignment(&model.train_ids, k_cross)?;
    let columns: Vec<usize> = (0..k_cross.cols).collect();
    let scores = cross_scores(k_cross, &columns, &model.alphas, 0.0);
    let labels = scores.iter().map(|&s| sign_label(s)).collect();
    Ok((scores, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    /// Consecutive sweeps (n pair updates each) without a new best violation
    /// before giving up.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: DEFAULT_C,
            tol: 1e-3,
            max_passes: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    /// Stopped on the pass limit; the model is usable but not certified optimal.
    MaxPasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub labels: Vec<i8>,
    pub train_ids: Vec<String>,
    pub status: SolverStatus,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub violation: f64,
}

impl SvmModel {
    pub fn support_count(&self) -> usize {
        self.alphas.iter().filter(|a| **a > 0.0).count()
    }

    /// Value of the dual objective `eᵀα − ½ αᵀQα` on the training kernel.
    pub fn dual_objective(&self, k: &KernelMatrix) -> f64 {
        let y: Vec<f64> = self.labels.iter().map(|&l| l as f64).collect();
        dual_objective(k, &y, &self.alphas)
    }
}

pub fn dual_objective(k: &KernelMatrix, y: &[f64], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        let row = k.row(i);
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * row[j] as f64;
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Largest violation of the complementarity conditions `αᵢ = 0 ⇒ yᵢf(xᵢ) ≥ 1`,
/// `0 < αᵢ < C ⇒ yᵢf(xᵢ) = 1`, `αᵢ = C ⇒ yᵢf(xᵢ) ≤ 1`.
pub fn kkt_violation(k: &KernelMatrix, y: &[f64], alphas: &[f64], bias: f64, c: f64) -> f64 {
    let n = alphas.len();
    let mut worst = 0f64;
    for i in 0..n {
        let row = k.row(i);
        let f: f64 = (0..n).map(|j| alphas[j] * y[j] * row[j] as f64).sum::<f64>() + bias;
        let margin = y[i] * f;
        let slack = if alphas[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alphas[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(slack);
    }
    worst
}

pub fn train_svm(k: &KernelMatrix, y: &[f64], params: SvmParams) -> Result<SvmModel> {
    check_square(k)?;
    check_targets(y, k.rows)?;
    if !(params.c > 0.0) {
        return Err(Error::Validation(format!("C must be positive, got {}", params.c)));
    }
    let n = k.rows;
    let c = params.c;
    let q = |i: usize, j: usize| y[i] * y[j] * k.get(i, j) as f64;
    let mut alpha = vec![0f64; n];
    let mut grad = vec![-1f64; n];

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    let sweep = n.max(1);
    let hard_cap = sweep.saturating_mul(params.max_passes.max(1)).saturating_mul(20);
    let mut best_gap = f64::INFINITY;
    let mut improved = false;
    let mut stalled = 0usize;
    let mut iterations = 0usize;
    let mut status = SolverStatus::Converged;
    let mut gap;

    loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut up_max = f64::NEG_INFINITY;
        let mut low_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(t, &alpha) && v > up_max {
                up_max = v;
                i = t;
            }
            if in_low(t, &alpha) && v < low_min {
                low_min = v;
                j = t;
            }
        }
        gap = up_max - low_min;
        if i == usize::MAX || j == usize::MAX || gap < params.tol {
            break;
        }
        if gap < best_gap {
            best_gap = gap;
            improved = true;
        }
        if iterations > 0 && iterations.is_multiple_of(sweep) {
            if improved {
                stalled = 0;
            } else {
                stalled += 1;
            }
            improved = false;
            if stalled >= params.max_passes || iterations >= hard_cap {
                status = SolverStatus::MaxPasses;
                break;
            }
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        let (qii, qjj) = (q(i, i), q(j, j));
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (row_i, row_j) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * row_i[t] as f64 * di + y[j] * row_j[t] as f64 * dj);
        }
    }

    // Offset from the free variables, or the midpoint of the feasible interval.
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if upper.is_finite() && lower.is_finite() {
        (upper + lower) / 2.0
    } else if upper.is_finite() {
        upper
    } else if lower.is_finite() {
        lower
    } else {
        0.0
    };

    Ok(SvmModel {
        alphas: alpha,
        bias: -rho,
        c,
        labels: y.iter().map(|&v| v as i8).collect(),
        train_ids: k.row_ids.clone(),
        status,
        iterations,
        violation: gap.max(0.0),
    })
}

fn svm_coefficients(model: &SvmModel) -> Vec<f64> {
    model
        .alphas
        .iter()
        .zip(&model.labels)
        .map(|(&a, &l)| a * l as f64)
        .collect()
}

pub fn predict_svm(model: &SvmModel, k_cross: &KernelMatrix) -> Result<(Vec<f64>, Vec<i8>)> {
    check_alignment(&model.train_ids, k_cross)?;
    let columns: Vec<usize> = (0..k_cross.cols).collect();
    let scores = cross_scores(k_cross, &columns, &svm_coefficients(model), model.bias);
    let labels = scores.iter().map(|&s| sign_label(s)).collect();
    Ok((scores, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseModel {
    Svm,
    Krr,
}

impl std::str::FromStr for BaseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(BaseModel::Svm),
            "krr" => Ok(BaseModel::Krr),
            other => Err(Error::Usage(format!("unknown kernel model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Two classes, one machine; class 0 is the positive side.
    Binary,
    OneVsOne,
    OneVsRest,
}

impl Scheme {
    /// Default scheme for a base model: SVM one-vs-one, KRR one-vs-rest.
    pub fn default_for(base: BaseModel, classes: usize) -> Scheme {
        match (classes, base) {
            (2, _) => Scheme::Binary,
            (_, BaseModel::Svm) => Scheme::OneVsOne,
            (_, BaseModel::Krr) => Scheme::OneVsRest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lambda: f64,
    pub svm: SvmParams,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lambda: DEFAULT_LAMBDA,
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinaryMachine {
    Svm(SvmModel),
    Krr(KrrModel),
}

impl BinaryMachine {
    fn coefficients(&self) -> (Vec<f64>, f64) {
        match self {
            BinaryMachine::Svm(m) => (svm_coefficients(m), m.bias),
            BinaryMachine::Krr(m) => (m.alphas.clone(), 0.0),
        }
    }
}

/// One binary machine and the classes on each side of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub positive: usize,
    /// `None` for one-vs-rest machines.
    pub negative: Option<usize>,
    /// Positions of this machine's training samples in the full training set.
    pub columns: Vec<usize>,
    pub model: BinaryMachine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub base: BaseModel,
    pub scheme: Scheme,
    pub classes: usize,
    pub hyper: Hyper,
    pub kernel: KernelSpec,
    pub train_ids: Vec<String>,
    pub machines: Vec<Machine>,
}

/// Raw decision output of a kernel classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPrediction {
    pub labels: Vec<usize>,
    /// Binary: one margin per sample (positive favours class 0).
    /// One-vs-rest: one score per class. One-vs-one: per-class summed decision values.
    pub scores: Vec<Vec<f64>>,
}

fn train_binary(
    k: &KernelMatrix,
    y: &[f64],
    base: BaseModel,
    hyper: &Hyper,
) -> Result<BinaryMachine> {
    Ok(match base {
        BaseModel::Svm => BinaryMachine::Svm(train_svm(k, y, hyper.svm)?),
        BaseModel::Krr => BinaryMachine::Krr(train_krr(k, y, hyper.lambda)?),
    })
}

pub fn train_multiclass(
    k: &KernelMatrix,
    labels: &[usize],
    classes: usize,
    base: BaseModel,
    scheme: Scheme,
    hyper: Hyper,
) -> Result<MulticlassModel> {
    check_square(k)?;
    if labels.len() != k.rows {
        return Err(Error::Validation(format!(
            "{} labels for {} training samples",
            labels.len(),
            k.rows
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{classes}")));
    }
    let missing: Vec<String> = (0..classes)
        .filter(|c| !labels.contains(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "classes absent from training data: {}",
            missing.join(", ")
        )));
    }
    if scheme == Scheme::Binary && classes != 2 {
        return Err(Error::Validation(format!(
            "binary scheme needs 2 classes, got {classes}"
        )));
    }
    let all: Vec<usize> = (0..k.rows).collect();

    let machines = match scheme {
        Scheme::Binary => {
            let y = binary_targets(labels, 0);
            vec![Machine {
                positive: 0,
                negative: Some(1),
                columns: all,
                model: train_binary(k, &y, base, &hyper)?,
            }]
        }
        Scheme::OneVsRest => {
            let targets: Vec<Vec<f64>> = (0..classes).map(|c| binary_targets(labels, c)).collect();
            let models: Vec<BinaryMachine> = match base {
                BaseModel::Krr => {
                    let (alphas, inflation) = krr_solve_many(k, &targets, hyper.lambda)?;
                    alphas
                        .into_iter()
                        .map(|alphas| {
                            BinaryMachine::Krr(KrrModel {
                                alphas,
                                lambda: hyper.lambda,
                                ridge_inflation: inflation,
                                train_ids: k.row_ids.clone(),
                            })
                        })
                        .collect()
                }
                BaseModel::Svm => targets
                    .par_iter()
                    .map(|y| train_binary(k, y, base, &hyper))
                    .collect::<Result<_>>()?,
            };
            models
                .into_iter()
                .enumerate()
                .map(|(c, model)| Machine {
                    positive: c,
                    negative: None,
                    columns: all.clone(),
                    model,
                })
                .collect()
        }
        Scheme::OneVsOne => {
            let pairs: Vec<(usize, usize)> = (0..classes)
                .flat_map(|a| (a + 1..classes).map(move |b| (a, b)))
                .collect();
            pairs
                .par_iter()
                .map(|&(a, b)| {
                    let columns: Vec<usize> = (0..k.rows)
                        .filter(|&i| labels[i] == a || labels[i] == b)
                        .collect();
                    let sub = k.submatrix(&columns, &columns);
                    let sub_labels: Vec<usize> = columns.iter().map(|&i| labels[i]).collect();
                    let y = binary_targets(&sub_labels, a);
                    Ok(Machine {
                        positive: a,
                        negative: Some(b),
                        columns,
                        model: train_binary(&sub, &y, base, &hyper)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    Ok(MulticlassModel {
        base,
        scheme,
        classes,
        hyper,
        kernel: k.spec,
        train_ids: k.row_ids.clone(),
        machines,
    })
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_multiclass(model: &MulticlassModel, k_cross: &KernelMatrix) -> Result<KernelPrediction> {
    check_alignment(&model.train_ids, k_cross)?;
    let decisions: Vec<Vec<f64>> = model
        .machines
        .iter()
        .map(|m| {
            let (coef, bias) = m.model.coefficients();
            cross_scores(k_cross, &m.columns, &coef, bias)
        })
        .collect();
    let n = k_cross.rows;
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for s in 0..n {
        match model.scheme {
            Scheme::Binary => {
                let margin = decisions[0][s];
                labels.push(if sign_label(margin) > 0 { 0 } else { 1 });
                scores.push(vec![margin]);
            }
            Scheme::OneVsRest => {
                let per_class: Vec<f64> = decisions.iter().map(|d| d[s]).collect();
                labels.push(argmax_lowest(&per_class));
                scores.push(per_class);
            }
            Scheme::OneVsOne => {
                let mut votes = vec![0f64; model.classes];
                let mut summed = vec![0f64; model.classes];
                for (m, d) in model.machines.iter().zip(&decisions) {
                    let neg = m.negative.expect("one-vs-one machine without a negative class");
                    let v = d[s];
                    if sign_label(v) > 0 {
                        votes[m.positive] += 1.0;
                    } else {
                        votes[neg] += 1.0;
                    }
                    summed[m.positive] += v;
                    summed[neg] -= v;
                }
                let top = votes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut best = usize::MAX;
                for c in 0..model.classes {
                    if votes[c] == top && (best == usize::MAX || summed[c] > summed[best]) {
                        best = c;
                    }
                }
                labels.push(best);
                scores.push(summed);
            }
        }
    }
    Ok(KernelPrediction { labels, scores })
}

/// Trained kernel classifier plus (optionally) the training texts needed to
/// score raw text without the original corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModelArtifact {
    pub model: MulticlassModel,
    pub class_names: Vec<String>,
    pub train_texts: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactMeta {
    base: BaseModel,
    scheme: Scheme,
    classes: usize,
    hyper: Hyper,
    kernel: KernelSpec,
    class_names: Vec<String>,
    train_ids: Vec<String>,
    train_texts: Option<Vec<String>>,
    machines: Vec<MachineMeta>,
}

#[derive(Serialize, Deserialize)]
struct MachineMeta {
    positive: usize,
    negative: Option<usize>,
    columns: Vec<usize>,
    kind: BaseModel,
    bias: f64,
    c: f64,
    lambda: f64,
    ridge_inflation: f64,
    labels: Vec<i8>,
    status: Option<SolverStatus>,
    iterations: usize,
    violation: f64,
}

/// Human-readable summary written next to the binary artifact.
pub fn metadata_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

impl KernelModelArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let m = &self.model;
        let mut coefficient_blocks = Vec::with_capacity(m.machines.len());
        let machines = m
            .machines
            .iter()
            .map(|mac| {
                
                match &mac.model {
                    BinaryMachine::Svm(s) => {
                        coefficient_blocks.push(s.alphas.clone());
                        MachineMeta {
                            positive: mac.positive,
                            negative: mac.negative,
                            columns: mac.columns.clone(),
                            kind: BaseModel::Svm,
                            bias: s.bias,
                            c: s.c,
                            lambda: 0.0,
                            ridge_inflation: 0.0,
                            labels: s.labels.clone(),
                            status: Some(s.status),
                            iterations: s.iterations,
                            violation: s.violation,
                        }
                    }
                    BinaryMachine::Krr(r) => {
                        coefficient_blocks.push(r.alphas.clone());
                        MachineMeta {
                            positive: mac.positive,
                            negative: mac.negative,
                            columns: mac.columns.clone(),
                            kind: BaseModel::Krr,
                            bias: 0.0,
                            c: 0.0,
                            lambda: r.lambda,
                            ridge_inflation: r.ridge_inflation,
                            labels: Vec::new(),
                            status: None,
                            iterations: 0,
                            violation: 0.0,
                        }
                    }
                }
            })
            .collect();
        let meta = ArtifactMeta {
            base: m.base,
            scheme: m.scheme,
            classes: m.classes,
            hyper: m.hyper,
            kernel: m.kernel,
            class_names: self.class_names.clone(),
            train_ids: m.train_ids.clone(),
            train_texts: self.train_texts.clone(),
            machines,
        };
        let json = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;

        let mut out = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MODEL_MAGIC)?;
        write(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        write(&(json.len() as u64).to_le_bytes())?;
        write(&json)?;
        for block in &coefficient_blocks {
            write(&(block.len() as u64).to_le_bytes())?;
            let bytes: Vec<u8> = block.iter().flat_map(|v| v.to_le_bytes()).collect();
            write(&bytes)?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;

        let summary = serde_json::json!({
            "format_version": MODEL_FORMAT_VERSION,
            "base_model": m.base,
            "scheme": m.scheme,
            "classes": self.class_names,
            "kernel": m.kernel,
            "lambda": m.hyper.lambda,
            "svm": m.hyper.svm,
            "binary_label_mapping": format!("{} -> +1, rest -> -1", self.class_names.first().map_or("class 0", String::as_str)),
            "training_samples": m.train_ids.len(),
            "machines": m.machines.len(),
            "includes_training_texts": self.train_texts.is_some(),
        });
        let side = metadata_sidecar_path(path);
        fs::write(&side, serde_json::to_string_pretty(&summary).unwrap() + "\n")
            .map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
        let mut cursor = &bytes[..];
        let mut take = |len: usize| -> Result<&[u8]> {
            if cursor.len() < len {
                return Err(bad("truncated model file"));
            }
            let (head, tail) = cursor.split_at(len);
            cursor = tail;
            Ok(head)
        };
        if take(12)? != MODEL_MAGIC {
            return Err(bad("not a kernel model file (bad magic)"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(bad(&format!("unsupported model version {version}")));
        }
        let json_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let meta: ArtifactMeta = serde_json::from_slice(take(json_len)?)
            .map_err(|e| bad(&format!("bad metadata: {e}")))?;
        let mut machines = Vec::with_capacity(meta.machines.len());
        for mm in meta.machines {
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let raw = take(len.checked_mul(8).ok_or_else(|| bad("bad coefficient count"))?)?;
            let coef: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if coef.len() != mm.columns.len() {
                return Err(bad("coefficient count does not match machine columns"));
            }
            let train_ids: Vec<String> = mm.columns.iter().map(|&i| meta.train_ids[i].clone()).collect();
            let model = match mm.kind {
                BaseModel::Svm => BinaryMachine::Svm(SvmModel {
                    alphas: coef,
                    bias: mm.bias,
                    c: mm.c,
                    labels: mm.labels,
                    train_ids,
                    status: mm.status.unwrap_or(SolverStatus::Converged),
                    iterations: mm.iterations,
                    violation: mm.violation,
                }),
                BaseModel::Krr => BinaryMachine::Krr(KrrModel {
                    alphas: coef,
                    lambda: mm.lambda,
                    ridge_inflation: mm.ridge_inflation,
                    train_ids,
                }),
            };
            machines.push(Machine {
                positive: mm.positive,
                negative: mm.negative,
                columns: mm.columns,
                model,
            });
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after coefficients"));
        }
        Ok(KernelModelArtifact {
            model: MulticlassModel {
                base: meta.base,
                scheme: meta.scheme,
                classes: meta.classes,
                hyper: meta.hyper,
                kernel: meta.kernel,
                train_ids: meta.train_ids,
                machines,
            },
            class_names: meta.class_names,
            train_texts: meta.train_texts,
        })
    }
}

/// Reads a model file header only far enough to reject foreign files early.
pub fn is_model_file(path: &Path) -> bool {
    let mut magic = [0u8; 12];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == MODEL_MAGIC)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, values: &[f32]) -> KernelMatrix {
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        KernelMatrix::new(values.to_vec(), ids.clone(), ids, KernelSpec::default()).unwrap()
    }

    fn cross(rows: usize, train: &KernelMatrix, values: &[f32]) -> KernelMatrix {
        let ids: Vec<String> = (0..rows).map(|i| format!("t{i}")).collect();
        KernelMatrix::new(values.to_vec(), ids, train.row_ids.clone(), KernelSpec::default()).unwrap()
    }

    #[test]
    fn krr_identity_example() {
        let k = matrix(2, &[1.0, 0.0, 0.0, 1.0]);
        let m = train_krr(&k, &[1.0, -1.0], 1.0).unwrap();
        assert!((m.alphas[0] - 0.5).abs() < 1e-12 && (m.alphas[1] + 0.5).abs() < 1e-12);
        let (scores, labels) = predict_krr(&m, &cross(1, &k, &[1.0, 0.0])).unwrap();
        assert!((scores[0] - 0.5).abs() < 1e-12);
        assert_eq!(labels, vec![1]);
        let (scores, labels) = predict_krr(&m, &cross(1, &k, &[0.0, 0.0])).unwrap();
        assert_eq!((scores[0], labels[0]), (0.0, 1));
    }

    #[test]
    fn krr_interpolates_as_lambda_vanishes() {
        let k = matrix(3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
        let y = [1.0, -1.0, 1.0];
        let m = train_krr(&k, &y, 0.0).unwrap();
        assert!(krr_residual(&k, 0.0, &m.alphas, &y) <= 1e-8);
    }

    #[test]
    fn krr_inflates_ridge_once_for_singular_kernels() {
        let k = matrix(2, &[1.0, 1.0, 1.0, 1.0]);
        let m = train_krr(&k, &[1.0, 1.0], 0.0).unwrap();
        assert!(m.ridge_inflation > 0.0);
        let k = matrix(2, &[-1.0, 0.0, 0.0, -1.0]);
        let err = train_krr(&k, &[1.0, -1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("pivot"), "{err}");
    }

    #[test]
    fn misaligned_columns_are_rejected() {
        let k = matrix(2, &[1.0, 0.0, 0.0, 1.0]);
        let m = train_krr(&k, &[1.0, -1.0], 1.0).unwrap();
        let mut kc = cross(1, &k, &[1.0, 0.0]);
        kc.col_ids.swap(0, 1);
        assert!(matches!(predict_krr(&m, &kc), Err(Error::Alignment(_))));
    }

    #[test]
    fn svm_two_point_example() {
        let k = matrix(2, &[1.0, 0.0, 0.0, 1.0]);
        let params = SvmParams {
            c: 10.0,
            ..Default::default()
        };
        let m = train_svm(&k, &[1.0, -1.0], params).unwrap();
        assert_eq!(m.alphas, vec![1.0, 1.0]);
        assert_eq!(m.bias, 0.0);
        assert_eq!(m.status, SolverStatus::Converged);
        let (scores, labels) = predict_svm(&m, &k).unwrap();
        assert_eq!(scores, vec![1.0, -1.0]);
        assert_eq!(labels, vec![1, -1]);
        let (scaled, scaled_labels) = predict_svm(
            &m,
            &KernelMatrix::new(vec![3.0, 0.0, 0.0, 3.0], k.row_ids.clone(), k.col_ids.clone(), k.spec)
                .unwrap(),
        )
        .unwrap();
        assert_eq!(scaled, vec![3.0, -3.0]);
        assert_eq!(scaled_labels, labels);
        let (_, zero) = predict_svm(&m, &cross(1, &k, &[0.0, 0.0])).unwrap();
        assert_eq!(zero, vec![1]);
    }

    #[test]
    fn svm_conflicting_duplicates_hit_the_box() {
        let k = matrix(2, &[1.0, 1.0, 1.0, 1.0]);
        let params = SvmParams {
            c: 10.0,
            ..Default::default()
        };
        let m = train_svm(&k, &[1.0, -1.0], params).unwrap();
        assert_eq!(m.alphas, vec![10.0, 10.0]);
    }

    #[test]
    fn scheme_machine_counts() {
        // block-diagonal kernel: 6 classes, 2 samples each
        let n = 12;
        let mut v = vec![0f32; n * n];
        for i in 0..n {
            for j in 0..n {
                if i / 2 == j / 2 {
                    v[i * n + j] = 1.0;
                }
            }
            v[i * n + i] = 1.5;
        }
        let k = matrix(n, &v);
        let labels: Vec<usize> = (0..n).map(|i| i / 2).collect();
        let ovo = train_multiclass(&k, &labels, 6, BaseModel::Svm, Scheme::OneVsOne, Hyper::default()).unwrap();
        assert_eq!(ovo.machines.len(), 15);
        let ovr = train_multiclass(&k, &labels, 6, BaseModel::Krr, Scheme::OneVsRest, Hyper::default()).unwrap();
        assert_eq!(ovr.machines.len(), 6);
        assert_eq!(predict_multiclass(&ovo, &k).unwrap().labels, labels);
        assert_eq!(predict_multiclass(&ovr, &k).unwrap().labels, labels);
    }

    #[test]
    fn absent_class_is_reported() {
        let k = matrix(2, &[1.0, 0.0, 0.0, 1.0]);
        let err = train_multiclass(&k, &[0, 2], 3, BaseModel::Krr, Scheme::OneVsRest, Hyper::default())
            .unwrap_err();
        assert!(err.to_string().contains("absent"), "{err}");
        assert!(err.to_string().contains('1'));
    }

    #[test]
    fn artifact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let k = matrix(4, &[1.0, 0.2, 0.0, 0.1, 0.2, 1.0, 0.3, 0.0, 0.0, 0.3, 1.0, 0.2, 0.1, 0.0, 0.2, 1.0]);
        for (base, scheme) in [(BaseModel::Svm, Scheme::Binary), (BaseModel::Krr, Scheme::OneVsRest)] {
            let model = train_multiclass(&k, &[0, 0, 1, 1], 2, base, scheme, Hyper::default()).unwrap();
            let art = KernelModelArtifact {
                model,
                class_names: vec!["MD".into(), "RO".into()],
                train_texts: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
            };
            art.save(&path).unwrap();
            assert!(is_model_file(&path));
            assert_eq!(KernelModelArtifact::load(&path).unwrap(), art);
        }
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(KernelModelArtifact::load(&path), Err(Error::Format(_))));
    }
}

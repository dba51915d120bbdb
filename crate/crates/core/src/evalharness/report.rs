use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, confusion_matrix, macro_f1, per_class, ClassMetrics};
use crate::corpus::{Scenario, Task};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// How undefined precision, recall or F1 values are scored.
pub const ZERO_DIVISION: &str = "0 when the denominator is 0";

/// Test-set results of one model in one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub scenario: Scenario,
    pub model_id: String,
    /// Level-zero models combined by an ensemble; the model itself otherwise.
    pub members: Vec<String>,
    pub class_names: Vec<String>,
    pub test_samples: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Gold rows, predicted columns.
    pub confusion: Vec<Vec<u64>>,
    pub validation_macro_f1: Option<f64>,
    pub validation_source: String,
    pub train_seconds: f64,
    pub inference_seconds_per_sample: f64,
    pub seed: u64,
    pub config_fingerprint: String,
    pub hardware: String,
    /// Model-specific settings echoed into the report, e.g. the chosen C.
    pub notes: Vec<(String, String)>,
    /// Run circumstances that do not affect results, e.g. kernel cache hits.
    pub environment: Vec<(String, String)>,
}

impl EvalReport {
    /// Computes test metrics for aligned predictions and gold labels.
    pub fn from_predictions(
        task: Task,
        scenario: Scenario,
        model_id: &str,
        members: Vec<String>,
        preds: &[usize],
        golds: &[usize],
    ) -> Result<Self> {
        let class_names = task.class_names();
        let k = class_names.len();
        let confusion = confusion_matrix(preds, golds, k)?;
        let report = EvalReport {
            task,
            scenario,
            model_id: model_id.to_string(),
            members,
            test_samples: golds.len(),
            accuracy: accuracy(preds, golds)?,
            macro_f1: macro_f1(preds, golds, k)?,
            per_class: per_class(&confusion),
            confusion,
            class_names,
            validation_macro_f1: None,
            validation_source: "none".into(),
            train_seconds: 0.0,
            inference_seconds_per_sample: 0.0,
            seed: 0,
            config_fingerprint: String::new(),
            hardware: String::new(),
            notes: Vec::new(),
            environment: Vec::new(),
        };
        report.check_coherence(golds)?;
        Ok(report)
    }

    /// Confusion-matrix row sums match the gold counts and its trace matches
    /// the accuracy.
    pub fn check_coherence(&self, golds: &[usize]) -> Result<()> {
        let total: u64 = self.confusion.iter().flatten().sum();
        let trace: u64 = (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum();
        for (c, row) in self.confusion.iter().enumerate() {
            let gold = golds.iter().filter(|&&g| g == c).count() as u64;
            if row.iter().sum::<u64>() != gold {
                return Err(Error::Numerical(format!("confusion row {c} does not sum to its {gold} gold samples")));
            }
        }
        if total == 0 || (trace as f64 / total as f64 - self.accuracy).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "confusion trace {trace}/{total} disagrees with accuracy {}",
                self.accuracy
            )));
        }
        Ok(())
    }

    /// Flat `key=value` lines. Timing lines start with `time.` and the host
    /// description with `env.`; everything else is deterministic.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("report_version", &REPORT_VERSION);
        kv("task", &self.task);
        kv("scenario", &self.scenario);
        kv("model", &self.model_id);
        kv("members", &self.members.join(","));
        kv("classes", &self.class_names.join(","));
        kv("test_samples", &self.test_samples);
        kv("accuracy", &self.accuracy);
        kv("macro_f1", &self.macro_f1);
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            kv(&format!("class.{name}.precision"), &m.precision);
            kv(&format!("class.{name}.recall"), &m.recall);
            kv(&format!("class.{name}.f1"), &m.f1);
            kv(&format!("class.{name}.support"), &m.support);
        }
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            kv(&format!("confusion.{name}"), &cells.join(","));
        }
        match self.validation_macro_f1 {
            Some(v) => kv("validation_macro_f1", &v),
            None => kv("validation_macro_f1", &"none"),
        }
        kv("validation_source", &self.validation_source);
        kv("zero_division", &ZERO_DIVISION);
        kv("seed", &self.seed);
        kv("config_fingerprint", &self.config_fingerprint);
        for (k, v) in &self.notes {
            kv(&format!("note.{k}"), v);
        }
        kv("env.hardware", &self.hardware);
        for (k, v) in &self.environment {
            kv(&format!("env.{k}"), v);
        }
        kv("time.train_seconds", &format!("{:.6}", self.train_seconds));
        kv("time.inference_seconds_per_sample", &format!("{:.9}", self.inference_seconds_per_sample));
        s
    }

    /// Confusion matrix as CSV with a header of predicted classes.
    pub fn confusion_csv(&self) -> String {
        let mut s = format!("gold\\predicted,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }

    /// Writes `report-<model>.txt` and `confusion-<model>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let report = dir.join(format!("report-{}.txt", self.model_id));
        fs::write(&report, self.to_kv()).map_err(|e| Error::io(&report, e))?;
        let cm = dir.join(format!("confusion-{}.csv", self.model_id));
        fs::write(&cm, self.confusion_csv()).map_err(|e| Error::io(&cm, e))
    }
}

/// Report text with timing and host lines removed, for reproducibility checks.
pub fn deterministic_part(kv: &str) -> String {
    kv.lines()
        .filter(|l| !l.starts_with("time.") && !l.starts_with("env."))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Plain-text table with one row per model.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(s, "task: {}  scenario: {}  test samples: {}", r.task, r.scenario, r.test_samples);
    }
    let _ = writeln!(
        s,
        "{:<12} {:>9} {:>9} {:>9} {:>12} {:>16}",
        "model", "accuracy", "macro_f1", "val_f1", "train_s", "infer_ms/sample"
    );
    for r in reports {
        let val = r.validation_macro_f1.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            s,
            "{:<12} {:>9.3} {:>9.3} {:>9} {:>12.3} {:>16.4}",
            r.model_id,
            r.accuracy,
            r.macro_f1,
            val,
            r.train_seconds,
            r.inference_seconds_per_sample * 1e3
        );
    }
    s
}

/// CPU model (when the OS exposes it), architecture and available threads.
pub fn hardware_description() -> String {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {} {}; {threads} threads", std::env::consts::OS, std::env::consts::ARCH)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_predictor_on_balanced_golds() {
        let golds = [0, 0, 1, 1, 0, 1];
        let r = EvalReport::from_predictions(Task::Dialect, Scenario::FullArticles, "constant", vec![], &[0; 6], &golds)
            .unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![3, 0], vec![3, 0]]);
        let kv = r.to_kv();
        assert!(kv.contains("confusion.MD=3,0\n"));
        assert!(kv.contains("zero_division="));
        assert!(!deterministic_part(&kv).contains("time."));
        assert_eq!(r.confusion_csv(), "gold\\predicted,MD,RO\nMD,3,0\nRO,3,0\n");
    }

    #[test]
    fn incoherent_report_is_rejected() {
        let mut r =
            EvalReport::from_predictions(Task::Dialect, Scenario::FullArticles, "m", vec![], &[0, 1], &[0, 1]).unwrap();
        r.accuracy = 0.5;
        assert!(r.check_coherence(&[0, 1]).is_err());
    }
}

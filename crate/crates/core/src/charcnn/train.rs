use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, forward, loss_and_gradient, mix_seed, Mode};
use super::{CnnConfig, CnnParameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned; 0 means the initial ones.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Tab-separated per-epoch log.
    pub fn to_log(&self) -> String {
        let mut s = String::from("epoch\tloss\tval_accuracy\tseconds\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{:.3}", e.epoch, e.loss, e.val_accuracy, e.seconds);
        }
        let _ = writeln!(s, "#best_epoch\t{}", self.best_epoch);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub workers: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

struct Adam {
    m: CnnParameters<f32>,
    v: CnnParameters<f32>,
    step: i32,
}

impl Adam {
    fn new(params: &CnnParameters<f32>) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut CnnParameters<f32>, grads: &CnnParameters<f32>, cfg: &CnnConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

fn accuracy(probs: &[Vec<f32>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Minibatch Adam on mean cross-entropy, starting from `init`. Returns the
/// parameters of the epoch with the best validation accuracy (the last epoch
/// when there is no validation data).
pub fn train_cnn(
    config: &CnnConfig,
    init: CnnParameters<f32>,
    train: &[Vec<u32>],
    train_labels: &[usize],
    val: &[Vec<u32>],
    val_labels: &[usize],
    opts: TrainOptions,
) -> Result<(CnnParameters<f32>, TrainHistory)> {
    config.validate()?;
    init.check_shapes(config)?;
    if train.is_empty() || train.len() != train_labels.len() || val.len() != val_labels.len() {
        return Err(Error::Validation(format!(
            "CNN training needs aligned non-empty data ({} train texts, {} labels; {} validation texts, {} labels)",
            train.len(),
            train_labels.len(),
            val.len(),
            val_labels.len()
        )));
    }
    if let Some(&bad) = train_labels.iter().chain(val_labels).find(|&&y| y >= config.classes) {
        return Err(Error::Validation(format!("label {bad} outside {} classes", config.classes)));
    }
    if let Some(seq) = train.iter().chain(val).find(|s| s.len() != config.input_len) {
        return Err(Error::Validation(format!(
            "encoded sequence of length {} does not match input_len {}",
            seq.len(),
            config.input_len
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let mut params = init;
        let mut history = TrainHistory::default();
        let mut best = params.clone();
        let mut best_acc = f64::NEG_INFINITY;
        let mut adam = Adam::new(&params);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut step: u64 = 0;

        for epoch in 1..=config.epochs {
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64));
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0f64;
            for (bi, idx) in order.chunks(config.batch).enumerate() {
                let batch: Vec<&[u32]> = idx.iter().map(|&i| train[i].as_slice()).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
                let mode = Mode::Train {
                    dropout_seed: mix_seed(config.seed ^ 0x5eed, step),
                };
                let (loss, grads) = loss_and_gradient(&params, config, &batch, &labels, mode);
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(Error::Numerical(format!(
                        "CNN loss became {loss} at epoch {epoch}, batch {}",
                        bi + 1
                    )));
                }
                loss_sum += loss as f64 * idx.len() as f64;
                adam.update(&mut params, &grads, config);
                step += 1;
            }
            let val_acc = if val.is_empty() {
                0.0
            } else {
                accuracy(&forward(&params, config, val, Mode::Eval), val_labels)
            };
            if val.is_empty() || val_acc > best_acc {
                best_acc = val_acc;
                best = params.clone();
                history.best_epoch = epoch;
            }
            history.epochs.push(EpochRecord {
                epoch,
                loss: loss_sum / train.len() as f64,
                val_accuracy: val_acc,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        Ok((best, history))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charcnn::ConvBlockConfig;

    fn tiny() -> CnnConfig {
        CnnConfig {
            input_len: 12,
            embed_dim: 4,
            blocks: vec![ConvBlockConfig { filters: 4, width: 3 }],
            pool_width: 3,
            se_ratio: 2,
            fc_dims: vec![4],
            dropout: 0.0,
            classes: 2,
            epochs: 0,
            batch: 8,
            lr: 1e-2,
            ..CnnConfig::articles(2)
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let cfg = tiny();
        let init = CnnParameters::<f32>::init(&cfg, 5).unwrap();
        let data = vec![vec![2u32; 12], vec![3u32; 12]];
        let (p, h) = train_cnn(&cfg, init.clone(), &data, &[0, 1], &data, &[0, 1], TrainOptions { workers: 1 }).unwrap();
        assert_eq!(p, init);
        assert!(h.epochs.is_empty());
        assert_eq!(h.best_epoch, 0);
    }

    #[test]
    fn rejects_misaligned_input() {
        let cfg = tiny();
        let init = CnnParameters::<f32>::init(&cfg, 5).unwrap();
        let data = vec![vec![2u32; 11]];
        assert!(train_cnn(&cfg, init, &data, &[0], &[], &[], TrainOptions { workers: 1 }).is_err());
    }
}

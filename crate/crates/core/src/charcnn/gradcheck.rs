use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{example_loss, example_mode, forward_trace, loss_and_gradient, Mode};
use super::{CnnConfig, CnnParameters, ParamGroup, Real, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_group: BTreeMap<ParamGroup, f64>,
    pub checked: usize,
    /// Samples discarded because the perturbation moved a ReLU or max-pool
    /// decision, where the loss is not differentiable.
    pub kinks_skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub per_group: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-3,
            per_group: 100,
            seed: 0,
            mode: Mode::Eval,
        }
    }
}

/// Loss of the batch plus the on/off pattern of every piecewise-linear unit.
fn batch_loss<F: Real>(
    params: &CnnParameters<F>,
    config: &CnnConfig,
    batch: &[Vec<u32>],
    labels: &[usize],
    mode: Mode,
) -> (F, Vec<u32>) {
    let mut pattern = Vec::new();
    let mut total = F::zero();
    for (i, (ids, &y)) in batch.iter().zip(labels).enumerate() {
        let tr = forward_trace(params, config, ids, example_mode(mode, i));
        total += example_loss(&tr.logits, y);
        let on = |v: &F| u32::from(*v > F::zero());
        for b in &tr.blocks {
            pattern.extend(b.pre.iter().map(on));
            pattern.extend(b.argmax.iter().copied());
            pattern.extend(b.hidden_pre.iter().map(on));
        }
        for d in &tr.dense {
            pattern.extend(d.pre.iter().map(on));
        }
    }
    (total / F::from_usize(batch.len()).unwrap(), pattern)
}

/// Compares analytic gradients with central finite differences on up to
/// `per_group` randomly chosen parameters of every group. Embedding entries
/// are drawn only from rows used by the batch.
pub fn gradient_check<F: Real>(
    config: &CnnConfig,
    params: &CnnParameters<F>,
    batch: &[Vec<u32>],
    labels: &[usize],
    opts: GradCheckOptions,
) -> GradCheckReport {
    let (_, grads) = loss_and_gradient(params, config, batch, labels, opts.mode);
    let (_, base_pattern) = batch_loss(params, config, batch, labels, opts.mode);
    let used: BTreeSet<usize> = batch
        .iter()
        .flatten()
        .filter(|&&id| id != PAD)
        .map(|&id| id as usize)
        .collect();
    let d = params.embed_dim;

    let mut candidates: BTreeMap<ParamGroup, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, (group, tensor)) in params.tensors().into_iter().enumerate() {
        let entry = candidates.entry(group).or_default();
        for ei in 0..tensor.len() {
            if group == ParamGroup::Embedding && !used.contains(&(ei / d)) {
                continue;
            }
            entry.push((ti, ei));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let analytic: Vec<&Vec<F>> = grads.tensors().into_iter().map(|(_, t)| t).collect();
    let eps_f = F::from_f64(opts.eps).unwrap();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_group: BTreeMap::new(),
        checked: 0,
        kinks_skipped: 0,
    };
    for (group, mut cands) in candidates {
        cands.shuffle(&mut rng);
        let mut worst = 0.0f64;
        let mut accepted = 0;
        for (ti, ei) in cands {
            if accepted == opts.per_group {
                break;
            }
            let original = probe.tensors()[ti].1[ei];
            probe.tensors_mut()[ti].1[ei] = original + eps_f;
            let (plus, p_plus) = batch_loss(&probe, config, batch, labels, opts.mode);
            probe.tensors_mut()[ti].1[ei] = original - eps_f;
            let (minus, p_minus) = batch_loss(&probe, config, batch, labels, opts.mode);
            probe.tensors_mut()[ti].1[ei] = original;
            if p_plus != base_pattern || p_minus != base_pattern {
                report.kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus).to_f64().unwrap() / (2.0 * opts.eps);
            let a = analytic[ti][ei].to_f64().unwrap();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            accepted += 1;
        }
        if accepted > 0 {
            report.checked += accepted;
            report.per_group.insert(group, worst);
            report.max_rel_error = report.max_rel_error.max(worst);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charcnn::ConvBlockConfig;

    fn tiny(blocks: usize, fc: Vec<usize>) -> CnnConfig {
        CnnConfig {
            input_len: 27,
            embed_dim: 4,
            blocks: vec![ConvBlockConfig { filters: 4, width: 3 }; blocks],
            pool_width: 3,
            se_ratio: 2,
            fc_dims: fc,
            dropout: 0.3,
            classes: 3,
            seed: 7,
            ..CnnConfig::articles(3)
        }
    }

    fn batch() -> (Vec<Vec<u32>>, Vec<usize>) {
        let b = (0..4)
            .map(|s| (0..27).map(|t| if t > 20 + s { 0 } else { ((t * 5 + s * 3) % 7 + 1) as u32 }).collect())
            .collect();
        (b, vec![0, 1, 2, 1])
    }

    fn jitter_biases(p: &mut CnnParameters<f32>, seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, (_, t)) in p.tensors_mut().into_iter().enumerate() {
            if i > 0 && t.len() <= 8 {
                t.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
    }

    fn check(blocks: usize, fc: Vec<usize>) -> GradCheckReport {
        let cfg = tiny(blocks, fc);
        let (b, y) = batch();
        let mut p = CnnParameters::<f32>::init(&cfg, 8).unwrap();
        jitter_biases(&mut p, 11);
        assert!(p.count() <= 10_000);
        let p: CnnParameters<f64> = p.cast();
        let opts = GradCheckOptions {
            mode: Mode::Train { dropout_seed: 1 },
            ..Default::default()
        };
        gradient_check(&cfg, &p, &b, &y, opts)
    }

    #[test]
    fn gradients_match_finite_differences_on_every_layer_type() {
        for blocks in [1, 2] {
            let r = check(blocks, vec![5, 4]);
            assert_eq!(r.per_group.len(), 5, "{r:?}");
            assert!(r.checked >= 100);
            assert!(r.max_rel_error <= 1e-3, "{r:?}");
        }
    }

    #[test]
    fn linear_only_net_is_tighter() {
        let r = check(0, vec![]);
        assert!(r.checked >= 100);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
        assert_eq!(r.kinks_skipped, 0);
    }
}

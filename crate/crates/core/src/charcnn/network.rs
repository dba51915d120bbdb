use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::params::{CnnParameters, ConvLayer, Dense, SeLayer};
use super::{CnnConfig, Real, PAD};

/// Gradients of a batch are summed in fixed chunks so the result does not
/// depend on how many threads ran them.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active; each example derives its masks from this seed and its
    /// position in the batch.
    Train { dropout_seed: u64 },
}

/// Intermediate values of one convolutional block.
#[derive(Debug, Clone)]
pub struct BlockTrace<F> {
    pub len: usize,
    pub pooled_len: usize,
    /// Convolution output before ReLU, `len × filters`.
    pub pre: Vec<F>,
    /// ReLU + max-pool output, `pooled_len × filters`.
    pub pooled: Vec<F>,
    pub argmax: Vec<u32>,
    pub squeeze: Vec<F>,
    pub hidden_pre: Vec<F>,
    pub gate: Vec<F>,
    /// Gated output, `pooled_len × filters`.
    pub out: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct DenseTrace<F> {
    pub pre: Vec<F>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)).
    pub mask: Option<Vec<F>>,
    pub out: Vec<F>,
}

/// Everything the backward pass needs for one example.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub ids: Vec<u32>,
    /// `len × embed_dim`.
    pub embedded: Vec<F>,
    pub blocks: Vec<BlockTrace<F>>,
    pub dense: Vec<DenseTrace<F>>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
}

impl<F: Real> ForwardTrace<F> {
    /// Output of the last block (or the embeddings when there are no blocks),
    /// time-major.
    pub fn features(&self) -> &[F] {
        match self.blocks.last() {
            Some(b) => &b.out,
            None => &self.embedded,
        }
    }

    fn dense_input(&self, layer: usize) -> &[F] {
        if layer == 0 {
            self.features()
        } else {
            &self.dense[layer - 1].out
        }
    }

    fn block_input(&self, block: usize) -> &[F] {
        if block == 0 {
            &self.embedded
        } else {
            &self.blocks[block - 1].out
        }
    }
}

pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn conv_forward<F: Real>(l: &ConvLayer<F>, x: &[F], len: usize) -> Vec<F> {
    let (cin, cout, w) = (l.in_ch, l.out_ch, l.width);
    let pad = (w - 1) / 2;
    let mut out = vec![F::zero(); len * cout];
    for t in 0..len {
        let row = &mut out[t * cout..(t + 1) * cout];
        row.copy_from_slice(&l.bias);
        for k in 0..w {
            let Some(src) = (t + k).checked_sub(pad).filter(|&s| s < len) else {
                continue;
            };
            let xr = &x[src * cin..(src + 1) * cin];
            for (f, r) in row.iter_mut().enumerate() {
                let off = (f * w + k) * cin;
                *r += dot(&l.weight[off..off + cin], xr);
            }
        }
    }
    out
}

fn conv_backward<F: Real>(
    l: &ConvLayer<F>,
    x: &[F],
    len: usize,
    dpre: &[F],
    grad: &mut ConvLayer<F>,
) -> Vec<F> {
    let (cin, cout, w) = (l.in_ch, l.out_ch, l.width);
    let pad = (w - 1) / 2;
    let mut dx = vec![F::zero(); len * cin];
    for t in 0..len {
        let dr = &dpre[t * cout..(t + 1) * cout];
        for (gb, &d) in grad.bias.iter_mut().zip(dr) {
            *gb += d;
        }
        for k in 0..w {
            let Some(src) = (t + k).checked_sub(pad).filter(|&s| s < len) else {
                continue;
            };
            let xr = &x[src * cin..(src + 1) * cin];
            for (f, &d) in dr.iter().enumerate() {
                if d == F::zero() {
                    continue;
                }
                let off = (f * w + k) * cin;
                axpy(d, xr, &mut grad.weight[off..off + cin]);
                axpy(d, &l.weight[off..off + cin], &mut dx[src * cin..(src + 1) * cin]);
            }
        }
    }
    dx
}

fn relu_pool<F: Real>(pre: &[F], len: usize, channels: usize, width: usize) -> (Vec<F>, Vec<u32>) {
    let pooled_len = len / width;
    let mut out = vec![F::zero(); pooled_len * channels];
    let mut argmax = vec![0u32; pooled_len * channels];
    for p in 0..pooled_len {
        for c in 0..channels {
            let mut best_t = p * width;
            let mut best = pre[best_t * channels + c];
            for t in p * width + 1..(p + 1) * width {
                let v = pre[t * channels + c];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            out[p * channels + c] = best.max(F::zero());
            argmax[p * channels + c] = best_t as u32;
        }
    }
    (out, argmax)
}

struct SeOutput<F> {
    squeeze: Vec<F>,
    hidden_pre: Vec<F>,
    gate: Vec<F>,
    out: Vec<F>,
}

fn se_forward<F: Real>(input: &[F], len: usize, se: &SeLayer<F>) -> SeOutput<F> {
    let c = se.channels;
    let mut squeeze = vec![F::zero(); c];
    for row in input.chunks_exact(c) {
        for (s, &v) in squeeze.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = F::from_usize(len.max(1)).unwrap();
    squeeze.iter_mut().for_each(|s| *s = *s / n);
    let hidden_pre: Vec<F> = (0..se.hidden)
        .map(|h| se.b1[h] + dot(&se.w1[h * c..(h + 1) * c], &squeeze))
        .collect();
    let hidden: Vec<F> = hidden_pre.iter().map(|&v| v.max(F::zero())).collect();
    let gate: Vec<F> = (0..c)
        .map(|f| sigmoid(se.b2[f] + dot(&se.w2[f * se.hidden..(f + 1) * se.hidden], &hidden)))
        .collect();
    let out = input
        .chunks_exact(c)
        .flat_map(|row| row.iter().zip(&gate).map(|(&v, &g)| v * g))
        .collect();
    SeOutput {
        squeeze,
        hidden_pre,
        gate,
        out,
    }
}

/// Squeeze-and-excitation on a time-major `len × channels` map: each channel
/// is scaled by `sigmoid(W2 relu(W1 mean_t(x) + b1) + b2)`.
pub fn se_block<F: Real>(input: &[F], len: usize, se: &SeLayer<F>) -> Vec<F> {
    se_forward(input, len, se).out
}

fn dense_forward<F: Real>(l: &Dense<F>, x: &[F]) -> Vec<F> {
    (0..l.out)
        .map(|o| l.bias[o] + dot(&l.weight[o * l.inp..(o + 1) * l.inp], x))
        .collect()
}

fn dense_backward_layer<F: Real>(l: &Dense<F>, x: &[F], d: &[F], grad: Option<&mut Dense<F>>) -> Vec<F> {
    if let Some(g) = grad {
        for (o, &dv) in d.iter().enumerate() {
            g.bias[o] += dv;
            if dv != F::zero() {
                axpy(dv, x, &mut g.weight[o * l.inp..(o + 1) * l.inp]);
            }
        }
    }
    let mut dx = vec![F::zero(); l.inp];
    for (o, &dv) in d.iter().enumerate() {
        if dv != F::zero() {
            axpy(dv, &l.weight[o * l.inp..(o + 1) * l.inp], &mut dx);
        }
    }
    dx
}

/// Forward pass of one id sequence, keeping every intermediate value.
pub fn forward_trace<F: Real>(
    params: &CnnParameters<F>,
    config: &CnnConfig,
    ids: &[u32],
    mode: Mode,
) -> ForwardTrace<F> {
    let d = params.embed_dim;
    let mut embedded = vec![F::zero(); ids.len() * d];
    for (t, &id) in ids.iter().enumerate() {
        let id = id as usize;
        embedded[t * d..(t + 1) * d].copy_from_slice(&params.embedding[id * d..(id + 1) * d]);
    }

    let mut blocks: Vec<BlockTrace<F>> = Vec::with_capacity(params.convs.len());
    let mut len = ids.len();
    for (conv, se) in params.convs.iter().zip(&params.ses) {
        let input = blocks.last().map_or(&embedded, |b| &b.out);
        let pre = conv_forward(conv, input, len);
        let (pooled, argmax) = relu_pool(&pre, len, conv.out_ch, config.pool_width);
        let pooled_len = len / config.pool_width;
        let se_out = se_forward(&pooled, pooled_len, se);
        blocks.push(BlockTrace {
            len,
            pooled_len,
            pre,
            pooled,
            argmax,
            squeeze: se_out.squeeze,
            hidden_pre: se_out.hidden_pre,
            gate: se_out.gate,
            out: se_out.out,
        });
        len = pooled_len;
    }

    let mut trace = ForwardTrace {
        ids: ids.to_vec(),
        embedded,
        blocks,
        dense: Vec::with_capacity(params.hidden.len()),
        logits: Vec::new(),
        probs: Vec::new(),
    };
    assert_eq!(
        trace.features().len(),
        params.hidden.first().unwrap_or(&params.classifier).inp,
        "input length does not match the dense layer width"
    );

    let keep = 1.0 - config.dropout as f64;
    let mut rng = match mode {
        Mode::Train { dropout_seed } if config.dropout > 0.0 => {
            Some(ChaCha8Rng::seed_from_u64(dropout_seed))
        }
        _ => None,
    };
    for (i, layer) in params.hidden.iter().enumerate() {
        let pre = dense_forward(layer, trace.dense_input(i));
        let mut out: Vec<F> = pre.iter().map(|&v| v.max(F::zero())).collect();
        let mask = rng.as_mut().map(|rng| {
            let scale = F::from_f64(1.0 / keep).unwrap();
            let m: Vec<F> = (0..out.len())
                .map(|_| if rng.gen::<f64>() < keep { scale } else { F::zero() })
                .collect();
            out.iter_mut().zip(&m).for_each(|(o, &s)| *o *= s);
            m
        });
        trace.dense.push(DenseTrace { pre, mask, out });
    }
    let n = params.hidden.len();
    trace.logits = dense_forward(&params.classifier, trace.dense_input(n));
    trace.probs = softmax(&trace.logits);
    trace
}

fn dense_backward<F: Real>(
    params: &CnnParameters<F>,
    trace: &ForwardTrace<F>,
    dlogits: &[F],
    mut grads: Option<&mut CnnParameters<F>>,
) -> Vec<F> {
    let n = params.hidden.len();
    let mut d = dense_backward_layer(
        &params.classifier,
        trace.dense_input(n),
        dlogits,
        grads.as_deref_mut().map(|g| &mut g.classifier),
    );
    for i in (0..n).rev() {
        let t = &trace.dense[i];
        if let Some(m) = &t.mask {
            d.iter_mut().zip(m).for_each(|(v, &s)| *v *= s);
        }
        d.iter_mut()
            .zip(&t.pre)
            .for_each(|(v, &p)| if p <= F::zero() { *v = F::zero() });
        d = dense_backward_layer(
            &params.hidden[i],
            trace.dense_input(i),
            &d,
            grads.as_deref_mut().map(|g| &mut g.hidden[i]),
        );
    }
    d
}

/// Gradient of `dlogits · logits` with respect to the last block's gated output.
pub fn features_gradient<F: Real>(
    params: &CnnParameters<F>,
    trace: &ForwardTrace<F>,
    dlogits: &[F],
) -> Vec<F> {
    dense_backward(params, trace, dlogits, None)
}

fn se_backward<F: Real>(se: &SeLayer<F>, b: &BlockTrace<F>, dout: &[F], grad: &mut SeLayer<F>) -> Vec<F> {
    let c = se.channels;
    let h = se.hidden;
    let mut dgate = vec![F::zero(); c];
    let mut dx = vec![F::zero(); dout.len()];
    for (p, (drow, urow)) in dout.chunks_exact(c).zip(b.pooled.chunks_exact(c)).enumerate() {
        for f in 0..c {
            dgate[f] += drow[f] * urow[f];
            dx[p * c + f] = drow[f] * b.gate[f];
        }
    }
    let dgate_pre: Vec<F> = dgate
        .iter()
        .zip(&b.gate)
        .map(|(&dg, &g)| dg * g * (F::one() - g))
        .collect();
    let hidden: Vec<F> = b.hidden_pre.iter().map(|&v| v.max(F::zero())).collect();
    let mut dhidden = vec![F::zero(); h];
    for f in 0..c {
        grad.b2[f] += dgate_pre[f];
        axpy(dgate_pre[f], &hidden, &mut grad.w2[f * h..(f + 1) * h]);
        axpy(dgate_pre[f], &se.w2[f * h..(f + 1) * h], &mut dhidden);
    }
    let mut dsqueeze = vec![F::zero(); c];
    for j in 0..h {
        let dpre = if b.hidden_pre[j] > F::zero() { dhidden[j] } else { F::zero() };
        grad.b1[j] += dpre;
        axpy(dpre, &b.squeeze, &mut grad.w1[j * c..(j + 1) * c]);
        axpy(dpre, &se.w1[j * c..(j + 1) * c], &mut dsqueeze);
    }
    let n = F::from_usize(b.pooled_len.max(1)).unwrap();
    for row in dx.chunks_exact_mut(c) {
        for (v, &ds) in row.iter_mut().zip(&dsqueeze) {
            *v += ds / n;
        }
    }
    dx
}

/// Accumulates the parameter gradients of `dlogits · logits` into `grads`.
pub fn backward<F: Real>(
    params: &CnnParameters<F>,
    trace: &ForwardTrace<F>,
    dlogits: &[F],
    grads: &mut CnnParameters<F>,
) {
    let mut d = dense_backward(params, trace, dlogits, Some(grads));
    for i in (0..trace.blocks.len()).rev() {
        let b = &trace.blocks[i];
        let conv = &params.convs[i];
        let dpooled = se_backward(&params.ses[i], b, &d, &mut grads.ses[i]);
        let c = conv.out_ch;
        let mut dpre = vec![F::zero(); b.len * c];
        for (j, (&dv, &t)) in dpooled.iter().zip(&b.argmax).enumerate() {
            let at = t as usize * c + j % c;
            if b.pre[at] > F::zero() {
                dpre[at] += dv;
            }
        }
        d = conv_backward(conv, trace.block_input(i), b.len, &dpre, &mut grads.convs[i]);
    }
    let dim = params.embed_dim;
    for (t, &id) in trace.ids.iter().enumerate() {
        if id == PAD {
            continue;
        }
        let id = id as usize;
        axpy(F::one(), &d[t * dim..(t + 1) * dim], &mut grads.embedding[id * dim..(id + 1) * dim]);
    }
}

pub(crate) fn example_mode(mode: Mode, index: usize) -> Mode {
    match mode {
        Mode::Eval => Mode::Eval,
        Mode::Train { dropout_seed } => Mode::Train {
            dropout_seed: mix_seed(dropout_seed, index as u64),
        },
    }
}

/// Class probabilities for a batch of id sequences.
pub fn forward<F: Real, S: AsRef<[u32]> + Sync>(
    params: &CnnParameters<F>,
    config: &CnnConfig,
    batch: &[S],
    mode: Mode,
) -> Vec<Vec<F>> {
    batch
        .par_iter()
        .enumerate()
        .map(|(i, ids)| forward_trace(params, config, ids.as_ref(), example_mode(mode, i)).probs)
        .collect()
}

pub(crate) fn example_loss<F: Real>(logits: &[F], label: usize) -> F {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<F>().ln();
    lse - logits[label]
}

/// Mean cross-entropy of a batch and its gradient.
pub fn loss_and_gradient<F: Real, S: AsRef<[u32]> + Sync>(
    params: &CnnParameters<F>,
    config: &CnnConfig,
    batch: &[S],
    labels: &[usize],
    mode: Mode,
) -> (F, CnnParameters<F>) {
    assert_eq!(batch.len(), labels.len());
    let n = F::from_usize(batch.len().max(1)).unwrap();
    let partial: Vec<(F, CnnParameters<F>)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut grads = params.zeros_like();
            let mut loss = F::zero();
            for (j, ids) in chunk.iter().enumerate() {
                let i = ci * GRAD_CHUNK + j;
                let trace = forward_trace(params, config, ids.as_ref(), example_mode(mode, i));
                loss += example_loss(&trace.logits, labels[i]);
                let mut dlogits: Vec<F> = trace.probs.iter().map(|&p| p / n).collect();
                dlogits[labels[i]] -= F::one() / n;
                backward(params, &trace, &dlogits, &mut grads);
            }
            (loss, grads)
        })
        .collect();
    let mut iter = partial.into_iter();
    let Some((mut loss, mut grads)) = iter.next() else {
        return (F::zero(), params.zeros_like());
    };
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    (loss / n, grads)
}

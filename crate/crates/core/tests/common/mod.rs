#![allow(dead_code)]

use dialectid::charcnn::{CnnConfig, ConvBlockConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MARKER: char = 'z';

/// Random strings over `a..h`; class 1 strings contain a run of `run` marker
/// characters.
pub fn marker_fixture(n: usize, len: usize, run: usize, seed: u64) -> (Vec<String>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut texts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut chars: Vec<char> = (0..len).map(|_| rng.gen_range(b'a'..=b'h') as char).collect();
        let label = i % 2;
        if label == 1 {
            let at = rng.gen_range(0..=len - run);
            chars[at..at + run].iter_mut().for_each(|c| *c = MARKER);
        }
        texts.push(chars.into_iter().collect());
        labels.push(label);
    }
    (texts, labels)
}

pub fn tiny_config(input_len: usize) -> CnnConfig {
    CnnConfig {
        input_len,
        embed_dim: 8,
        blocks: vec![ConvBlockConfig { filters: 8, width: 3 }],
        pool_width: 3,
        se_ratio: 4,
        fc_dims: vec![8],
        dropout: 0.0,
        classes: 2,
        lr: 1e-2,
        epochs: 200,
        batch: 8,
        seed: 5,
        vocab_min_count: 1,
        ..CnnConfig::articles(2)
    }
}

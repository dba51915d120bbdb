use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub filters: usize,
    pub width: usize,
}

/// Architecture and optimization settings of the character CNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_len: usize,
    pub embed_dim: usize,
    /// Each block: convolution (stride 1, length-preserving zero padding),
    /// ReLU, max-pooling and a squeeze-and-excitation gate.
    pub blocks: Vec<ConvBlockConfig>,
    pub pool_width: usize,
    /// Squeeze-and-excitation reduction ratio.
    pub se_ratio: usize,
    pub fc_dims: Vec<usize>,
    pub dropout: f32,
    pub classes: usize,
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub vocab_min_count: usize,
}

impl CnnConfig {
    /// Settings for full articles: 5000 input characters.
    pub fn articles(classes: usize) -> Self {
        CnnConfig {
            input_len: 5000,
            embed_dim: 128,
            blocks: vec![
                ConvBlockConfig { filters: 128, width: 7 },
                ConvBlockConfig { filters: 128, width: 7 },
                ConvBlockConfig { filters: 128, width: 3 },
            ],
            pool_width: 3,
            se_ratio: 64,
            fc_dims: vec![128, 128],
            dropout: 0.3,
            classes,
            lr: 2e-4,
            epochs: 50,
            batch: 128,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            vocab_min_count: 2,
        }
    }

    /// Settings for single sentences: 1000 input characters.
    pub fn sentences(classes: usize) -> Self {
        CnnConfig {
            input_len: 1000,
            ..Self::articles(classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("invalid CNN config: {m}")));
        if self.input_len == 0 || self.embed_dim == 0 || self.classes < 2 || self.batch == 0 {
            return bad("input_len, embed_dim, batch must be positive and classes >= 2".into());
        }
        if self.pool_width == 0 || self.se_ratio == 0 {
            return bad("pool_width and se_ratio must be positive".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.filters == 0 || b.width == 0 {
                return bad(format!("block {i} has a zero dimension"));
            }
            if b.filters % self.se_ratio != 0 {
                return bad(format!(
                    "se_ratio {} does not divide the {} filters of block {i}",
                    self.se_ratio, b.filters
                ));
            }
        }
        if self.fc_dims.contains(&0) {
            return bad("dense layers must have positive width".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.pooled_lengths().last().copied().unwrap_or(self.input_len) == 0 {
            return bad("input too short for the pooling stack".into());
        }
        Ok(())
    }

    /// Temporal length after each block.
    pub fn pooled_lengths(&self) -> Vec<usize> {
        let mut len = self.input_len;
        self.blocks
            .iter()
            .map(|_| {
                len /= self.pool_width;
                len
            })
            .collect()
    }

    /// Channels and length of the representation fed to the dense layers.
    pub fn feature_shape(&self) -> (usize, usize) {
        match self.blocks.last() {
            Some(b) => (b.filters, *self.pooled_lengths().last().unwrap()),
            None => (self.embed_dim, self.input_len),
        }
    }

    pub fn classifier_input_dim(&self) -> usize {
        let (c, t) = self.feature_shape();
        self.fc_dims.last().copied().unwrap_or(c * t)
    }
}

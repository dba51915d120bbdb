use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CnnConfig, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<F> {
    /// `out × width × in`, row-major.
    pub weight: Vec<F>,
    pub bias: Vec<F>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub width: usize,
}

/// Squeeze (channels → hidden) and excitation (hidden → channels) layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeLayer<F> {
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
    pub channels: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<F> {
    /// `out × in`, row-major.
    pub weight: Vec<F>,
    pub bias: Vec<F>,
    pub inp: usize,
    pub out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Embedding,
    Conv,
    SqueezeExcite,
    Dense,
    Classifier,
}

/// Every learned tensor of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParameters<F> {
    /// `vocab × embed_dim`; row 0 (PAD) stays zero.
    pub embedding: Vec<F>,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub convs: Vec<ConvLayer<F>>,
    pub ses: Vec<SeLayer<F>>,
    pub hidden: Vec<Dense<F>>,
    pub classifier: Dense<F>,
}

fn uniform<F: Real>(rng: &mut ChaCha8Rng, n: usize, limit: f64) -> Vec<F> {
    (0..n)
        .map(|_| F::from(rng.gen_range(-limit..limit)).unwrap())
        .collect()
}

fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl<F: Real> Dense<F> {
    fn init(rng: &mut ChaCha8Rng, inp: usize, out: usize) -> Self {
        Dense {
            weight: uniform(rng, inp * out, he_limit(inp)),
            bias: vec![F::zero(); out],
            inp,
            out,
        }
    }
}

impl<F: Real> CnnParameters<F> {
    /// Fresh parameters: He-uniform fan-in scaling for convolution and dense
    /// weights, uniform(-0.05, 0.05) embeddings, zero biases.
    pub fn init(config: &CnnConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::Validation("vocabulary must contain PAD and UNK".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.embed_dim;
        let mut embedding = uniform(&mut rng, vocab_size * d, 0.05);
        embedding[..d].iter_mut().for_each(|v| *v = F::zero());

        let mut convs = Vec::new();
        let mut ses = Vec::new();
        let mut in_ch = d;
        for b in &config.blocks {
            convs.push(ConvLayer {
                weight: uniform(&mut rng, b.filters * in_ch * b.width, he_limit(in_ch * b.width)),
                bias: vec![F::zero(); b.filters],
                in_ch,
                out_ch: b.filters,
                width: b.width,
            });
            let hidden = b.filters / config.se_ratio;
            ses.push(SeLayer {
                w1: uniform(&mut rng, hidden * b.filters, he_limit(b.filters)),
                b1: vec![F::zero(); hidden],
                w2: uniform(&mut rng, b.filters * hidden, he_limit(hidden)),
                b2: vec![F::zero(); b.filters],
                channels: b.filters,
                hidden,
            });
            in_ch = b.filters;
        }
        let (c, t) = config.feature_shape();
        let mut inp = c * t;
        let mut hidden = Vec::new();
        for &width in &config.fc_dims {
            hidden.push(Dense::init(&mut rng, inp, width));
            inp = width;
        }
        let classifier = Dense::init(&mut rng, inp, config.classes);
        Ok(CnnParameters {
            embedding,
            vocab_size,
            embed_dim: d,
            convs,
            ses,
            hidden,
            classifier,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        self.map(|_| F::zero())
    }

    fn map<G>(&self, f: impl Fn(F) -> G + Copy) -> CnnParameters<G> {
        let v = |x: &Vec<F>| x.iter().map(|&a| f(a)).collect::<Vec<G>>();
        let dense = |l: &Dense<F>| Dense {
            weight: v(&l.weight),
            bias: v(&l.bias),
            inp: l.inp,
            out: l.out,
        };
        CnnParameters {
            embedding: v(&self.embedding),
            vocab_size: self.vocab_size,
            embed_dim: self.embed_dim,
            convs: self
                .convs
                .iter()
                .map(|l| ConvLayer {
                    weight: v(&l.weight),
                    bias: v(&l.bias),
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    width: l.width,
                })
                .collect(),
            ses: self
                .ses
                .iter()
                .map(|l| SeLayer {
                    w1: v(&l.w1),
                    b1: v(&l.b1),
                    w2: v(&l.w2),
                    b2: v(&l.b2),
                    channels: l.channels,
                    hidden: l.hidden,
                })
                .collect(),
            hidden: self.hidden.iter().map(dense).collect(),
            classifier: dense(&self.classifier),
        }
    }

    pub fn cast<G: Real>(&self) -> CnnParameters<G> {
        self.map(|a| G::from(a).unwrap())
    }

    /// All tensors in a fixed order, tagged with their group.
    pub fn tensors(&self) -> Vec<(ParamGroup, &Vec<F>)> {
        let mut out = vec![(ParamGroup::Embedding, &self.embedding)];
        for c in &self.convs {
            out.push((ParamGroup::Conv, &c.weight));
            out.push((ParamGroup::Conv, &c.bias));
        }
        for s in &self.ses {
            out.extend([
                (ParamGroup::SqueezeExcite, &s.w1),
                (ParamGroup::SqueezeExcite, &s.b1),
                (ParamGroup::SqueezeExcite, &s.w2),
                (ParamGroup::SqueezeExcite, &s.b2),
            ]);
        }
        for d in &self.hidden {
            out.push((ParamGroup::Dense, &d.weight));
            out.push((ParamGroup::Dense, &d.bias));
        }
        out.push((ParamGroup::Classifier, &self.classifier.weight));
        out.push((ParamGroup::Classifier, &self.classifier.bias));
        out
    }

    /// Mutable counterpart of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut Vec<F>)> {
        let mut out = vec![(ParamGroup::Embedding, &mut self.embedding)];
        for c in &mut self.convs {
            out.push((ParamGroup::Conv, &mut c.weight));
            out.push((ParamGroup::Conv, &mut c.bias));
        }
        for s in &mut self.ses {
            out.push((ParamGroup::SqueezeExcite, &mut s.w1));
            out.push((ParamGroup::SqueezeExcite, &mut s.b1));
            out.push((ParamGroup::SqueezeExcite, &mut s.w2));
            out.push((ParamGroup::SqueezeExcite, &mut s.b2));
        }
        for d in &mut self.hidden {
            out.push((ParamGroup::Dense, &mut d.weight));
            out.push((ParamGroup::Dense, &mut d.bias));
        }
        out.push((ParamGroup::Classifier, &mut self.classifier.weight));
        out.push((ParamGroup::Classifier, &mut self.classifier.bias));
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    /// Checks tensor sizes against a configuration.
    pub fn check_shapes(&self, config: &CnnConfig) -> Result<()> {
        let expected = CnnParameters::<F>::init_shapes(config, self.vocab_size);
        let actual: Vec<usize> = self.tensors().iter().map(|(_, t)| t.len()).collect();
        if expected != actual {
            return Err(Error::Validation(format!(
                "parameter shapes {actual:?} do not match the configuration {expected:?}"
            )));
        }
        Ok(())
    }

    fn init_shapes(config: &CnnConfig, vocab: usize) -> Vec<usize> {
        let mut shapes = vec![vocab * config.embed_dim];
        let mut in_ch = config.embed_dim;
        for b in &config.blocks {
            shapes.push(b.filters * in_ch * b.width);
            shapes.push(b.filters);
            in_ch = b.filters;
        }
        for b in &config.blocks {
            let h = b.filters / config.se_ratio.max(1);
            shapes.extend([h * b.filters, h, b.filters * h, b.filters]);
        }
        let (c, t) = config.feature_shape();
        let mut inp = c * t;
        for &w in &config.fc_dims {
            shapes.extend([inp * w, w]);
            inp = w;
        }
        shapes.extend([inp * config.classes, config.classes]);
        shapes
    }
}

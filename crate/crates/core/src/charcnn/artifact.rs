use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{forward, Mode};
use super::train::{train_cnn, TrainHistory, TrainOptions};
use super::{build_vocab, encode, CharVocab, CnnConfig, CnnParameters};
use crate::error::{Error, Result};

pub const CNN_MAGIC: &[u8; 12] = b"DIALECTCNN\0\0";
pub const CNN_FORMAT_VERSION: u32 = 1;

/// Trained network together with everything needed to encode new text.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnArtifact {
    pub config: CnnConfig,
    pub vocab: CharVocab,
    pub class_names: Vec<String>,
    pub params: CnnParameters<f32>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: CnnConfig,
    vocab: CharVocab,
    class_names: Vec<String>,
    tensor_lens: Vec<usize>,
}

impl CnnArtifact {
    /// Builds the vocabulary from the training texts, initializes from the
    /// configured seed and trains.
    pub fn fit<S: AsRef<str>>(
        config: &CnnConfig,
        class_names: Vec<String>,
        train_texts: &[S],
        train_labels: &[usize],
        val_texts: &[S],
        val_labels: &[usize],
        opts: TrainOptions,
    ) -> Result<(Self, TrainHistory)> {
        if class_names.len() != config.classes {
            return Err(Error::Validation(format!(
                "{} class names for a {}-class network",
                class_names.len(),
                config.classes
            )));
        }
        let vocab = build_vocab(train_texts, config.vocab_min_count)?;
        let enc = |texts: &[S]| -> Vec<Vec<u32>> {
            texts.iter().map(|t| encode(t.as_ref(), &vocab, config.input_len)).collect()
        };
        let init = CnnParameters::init(config, vocab.len())?;
        let (params, history) = train_cnn(
            config,
            init,
            &enc(train_texts),
            train_labels,
            &enc(val_texts),
            val_labels,
            opts,
        )?;
        Ok((
            CnnArtifact {
                config: config.clone(),
                vocab,
                class_names,
                params,
            },
            history,
        ))
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        encode(text, &self.vocab, self.config.input_len)
    }

    /// Class probabilities for each text.
    pub fn predict_proba<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<Vec<f32>> {
        let encoded: Vec<Vec<u32>> = texts.iter().map(|t| self.encode(t.as_ref())).collect();
        forward(&self.params, &self.config, &encoded, Mode::Eval)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Meta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            class_names: self.class_names.clone(),
            tensor_lens: self.params.tensors().iter().map(|(_, t)| t.len()).collect(),
        };
        let json = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = |b: &[u8]| out.write_all(b).map_err(|e| Error::io(path, e));
        write(CNN_MAGIC)?;
        write(&CNN_FORMAT_VERSION.to_le_bytes())?;
        write(&(json.len() as u64).to_le_bytes())?;
        write(&json)?;
        for (_, t) in self.params.tensors() {
            let bytes: Vec<u8> = t.iter().flat_map(|v| v.to_le_bytes()).collect();
            write(&bytes)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
        let mut cursor = &bytes[..];
        let mut take = |len: usize| -> Result<&[u8]> {
            if cursor.len() < len {
                return Err(bad("truncated CNN file"));
            }
            let (head, tail) = cursor.split_at(len);
            cursor = tail;
            Ok(head)
        };
        if take(12)? != CNN_MAGIC {
            return Err(bad("not a CNN model file (bad magic)"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CNN_FORMAT_VERSION {
            return Err(bad(&format!("unsupported CNN format version {version}")));
        }
        let json_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut meta: Meta = serde_json::from_slice(take(json_len)?)
            .map_err(|e| bad(&format!("bad metadata: {e}")))?;
        meta.vocab.rebuild_index();
        meta.config.validate()?;
        let mut params = CnnParameters::<f32>::init(&meta.config, meta.vocab.len())?;
        let lens: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        if lens != meta.tensor_lens {
            return Err(bad("tensor sizes do not match the stored configuration"));
        }
        for (_, t) in params.tensors_mut() {
            let raw = take(t.len() * 4)?;
            for (v, c) in t.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap());
            }
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        if !params.all_finite() {
            return Err(bad("non-finite parameter values"));
        }
        if meta.class_names.len() != meta.config.classes {
            return Err(bad("class names do not match the class count"));
        }
        Ok(CnnArtifact {
            config: meta.config,
            vocab: meta.vocab,
            class_names: meta.class_names,
            params,
        })
    }
}

pub fn is_cnn_file(path: &Path) -> bool {
    let mut magic = [0u8; 12];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|_| &magic == CNN_MAGIC)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charcnn::ConvBlockConfig;

    #[test]
    fn round_trip_and_rejects_corruption() {
        let cfg = CnnConfig {
            input_len: 9,
            embed_dim: 3,
            blocks: vec![ConvBlockConfig { filters: 2, width: 3 }],
            se_ratio: 2,
            fc_dims: vec![3],
            epochs: 1,
            batch: 2,
            vocab_min_count: 1,
            ..CnnConfig::articles(2)
        };
        let texts = ["ăla bala", "portocala"];
        let (art, hist) = CnnArtifact::fit(
            &cfg,
            vec!["MD".into(), "RO".into()],
            &texts,
            &[0, 1],
            &texts,
            &[0, 1],
            TrainOptions { workers: 1 },
        )
        .unwrap();
        assert_eq!(hist.epochs.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cnn");
        art.save(&path).unwrap();
        assert!(is_cnn_file(&path));
        let back = CnnArtifact::load(&path).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.predict_proba(&texts), art.predict_proba(&texts));

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(CnnArtifact::load(&path), Err(Error::Format(_))));
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dialectid::charcnn::{CnnArtifact, CnnConfig, ConvBlockConfig, TrainOptions};
use dialectid::corpus::preprocess;
use dialectid::kernel_models::{train_multiclass, BaseModel, Hyper, KernelModelArtifact, Scheme};
use dialectid::strkernel::{gram_matrix, GramOptions, KernelSpec, TextCollection};

/// Class 0 texts mention "ţară", class 1 texts "țară".
pub fn texts() -> (Vec<String>, Vec<usize>) {
    let fillers = ["de la", "pe drum", "în oraș", "la mare", "cu prieteni", "din sat"];
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for (i, f) in fillers.iter().enumerate() {
        texts.push(preprocess(&format!("Ţară {f} ţară număr {i}")));
        labels.push(0);
        texts.push(preprocess(&format!("Casă {f} casă masă {i}")));
        labels.push(1);
    }
    (texts, labels)
}

pub fn kernel_model(dir: &Path, base: BaseModel) -> PathBuf {
    let (texts, labels) = texts();
    let ids: Vec<String> = (0..texts.len()).map(|i| format!("s{i}")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let coll = TextCollection::new(ids.clone(), refs).unwrap();
    let spec = KernelSpec::new(3, true).unwrap();
    let k = gram_matrix(&coll, &coll, spec, &GramOptions::default()).unwrap();
    let model = train_multiclass(&k, &labels, 2, base, Scheme::Binary, Hyper::default()).unwrap();
    let art = KernelModelArtifact {
        model,
        class_names: vec!["MD".into(), "RO".into()],
        train_texts: Some(texts),
    };
    let path = dir.join(format!("{base:?}.model").to_lowercase());
    art.save(&path).unwrap();
    path
}

pub fn cnn_config() -> CnnConfig {
    CnnConfig {
        input_len: 32,
        embed_dim: 8,
        blocks: vec![ConvBlockConfig { filters: 8, width: 3 }],
        pool_width: 2,
        se_ratio: 4,
        fc_dims: vec![8],
        dropout: 0.0,
        lr: 1e-2,
        epochs: 5,
        batch: 4,
        vocab_min_count: 1,
        ..CnnConfig::articles(2)
    }
}

pub fn cnn_model(dir: &Path) -> (PathBuf, CnnArtifact) {
    let (texts, labels) = texts();
    let names = vec!["MD".into(), "RO".into()];
    let (art, _) = CnnArtifact::fit(&cnn_config(), names, &texts, &labels, &texts, &labels, TrainOptions { workers: 1 })
        .unwrap();
    let path = dir.join("cnn.model");
    art.save(&path).unwrap();
    (path, art)
}

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::strkernel::{gram_matrix, load_kernel, save_kernel, GramOptions, KernelMatrix, KernelSpec, TextCollection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Disabled,
    Hit,
    Miss,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheStatus::Disabled => "disabled",
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
        }
    }
}

/// Key over both corpus checksums and every kernel setting that changes values.
pub fn kernel_cache_key(rows: &LabeledCorpus, cols: &LabeledCorpus, spec: KernelSpec, opts: &GramOptions) -> String {
    let mut h = Sha256::new();
    h.update(format!(
        "{}|{}|n={}|normalized={}|mode={:?}",
        rows.checksum(),
        cols.checksum(),
        spec.n,
        spec.normalized,
        opts.mode
    ));
    hex::encode(h.finalize())
}

pub fn kernel_cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.kmat"))
}

/// Kernel between two corpora, read from `cache_dir` when a matching entry
/// exists and stored there otherwise. Entries whose ids or settings disagree
/// are recomputed.
pub fn cached_gram(
    cache_dir: Option<&Path>,
    rows: &LabeledCorpus,
    cols: &LabeledCorpus,
    spec: KernelSpec,
    opts: &GramOptions,
) -> Result<(KernelMatrix, CacheStatus)> {
    let compute = || gram_matrix(&TextCollection::from_corpus(rows), &TextCollection::from_corpus(cols), spec, opts);
    let Some(dir) = cache_dir else {
        return Ok((compute()?, CacheStatus::Disabled));
    };
    let path = kernel_cache_path(dir, &kernel_cache_key(rows, cols, spec, opts));
    if path.exists() {
        if let Ok(k) = load_kernel(&path) {
            if k.spec == spec && k.row_ids == rows.ids() && k.col_ids == cols.ids() {
                return Ok((k, CacheStatus::Hit));
            }
        }
    }
    let k = compute()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_kernel(&k, &path)?;
    Ok((k, CacheStatus::Miss))
}

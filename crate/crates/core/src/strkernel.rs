//! Presence-bits string kernels over character n-grams.
//!
//! `k(x, y)` counts the distinct character n-grams shared by `x` and `y`.
//! The normalized variant divides by `sqrt(k(x, x) * k(y, y))`.
//!
//! [`gram_matrix`] represents every document once as a sorted set of 64-bit
//! n-gram keys and counts shared keys with a per-block inverted index, so the
//! cost is dominated by the number of matching (row, column, n-gram) triples
//! rather than by pairwise set comparisons. Keys are either xxh3 fingerprints
//! of the n-gram bytes ([`GramMode::Hashed`], the default; two distinct
//! n-grams collide with probability about 2^-64 per pair) or exact interned
//! ids ([`GramMode::Exact`]).

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, Xxh3DefaultBuilder};

use crate::error::{Error, Result};

pub const KERNEL_MAGIC: &[u8; 12] = b"DIALECTKMAT\0";
pub const KERNEL_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    /// n-gram length in characters.
    pub n: usize,
    pub normalized: bool,
}

impl KernelSpec {
    pub fn new(n: usize, normalized: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("n-gram length must be at least 1".into()));
        }
        Ok(KernelSpec { n, normalized })
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            n: 6,
            normalized: true,
        }
    }
}

/// The distinct character n-grams of one document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NgramSet {
    grams: BTreeSet<String>,
}

impl NgramSet {
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn contains(&self, gram: &str) -> bool {
        self.grams.contains(gram)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.grams.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &NgramSet) -> usize {
        self.grams.intersection(&other.grams).count()
    }
}

/// Byte ranges of every contiguous n-character window of `text`.
fn ngram_windows(text: &str, n: usize) -> impl Iterator<Item = &str> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let count = bounds.len().saturating_sub(n);
    (0..count).map(move |i| &text[bounds[i]..bounds[i + n]])
}

pub fn distinct_ngrams(text: &str, n: usize) -> NgramSet {
    assert!(n >= 1, "n-gram length must be positive");
    NgramSet {
        grams: ngram_windows(text, n).map(str::to_owned).collect(),
    }
}

/// Kernel value computed directly from exact n-gram sets.
pub fn kernel_value(x: &str, y: &str, spec: KernelSpec) -> f64 {
    let gx = distinct_ngrams(x, spec.n);
    let gy = distinct_ngrams(y, spec.n);
    let shared = gx.intersection_len(&gy) as f64;
    if !spec.normalized {
        return shared;
    }
    normalize(shared, gx.len(), gy.len())
}

fn normalize(shared: f64, kxx: usize, kyy: usize) -> f64 {
    if kxx == 0 || kyy == 0 {
        0.0
    } else {
        shared / ((kxx as f64) * (kyy as f64)).sqrt()
    }
}

/// Ordered documents (ids and texts) forming one side of a Gram matrix.
#[derive(Debug, Clone)]
pub struct TextCollection<'a> {
    pub ids: Vec<String>,
    pub texts: Vec<&'a str>,
}

impl<'a> TextCollection<'a> {
    pub fn new(ids: Vec<String>, texts: Vec<&'a str>) -> Result<Self> {
        if ids.len() != texts.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} texts",
                ids.len(),
                texts.len()
            )));
        }
        Ok(TextCollection { ids, texts })
    }

    /// Collection whose ids are the positions `0..len`.
    pub fn from_texts(texts: &[&'a str]) -> Self {
        TextCollection {
            ids: (0..texts.len()).map(|i| i.to_string()).collect(),
            texts: texts.to_vec(),
        }
    }

    pub fn from_corpus(corpus: &'a crate::corpus::LabeledCorpus) -> Self {
        TextCollection {
            ids: corpus.ids(),
            texts: corpus.texts(),
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GramMode {
    #[default]
    Hashed,
    Exact,
}

#[derive(Debug, Clone, Copy)]
pub struct GramOptions {
    pub workers: usize,
    pub mode: GramMode,
    /// Upper bound on the bytes of output held per row block.
    pub block_bytes: usize,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions {
            workers: 1,
            mode: GramMode::Hashed,
            block_bytes: 256 << 20,
        }
    }
}

impl GramOptions {
    pub fn with_workers(workers: usize) -> Self {
        GramOptions {
            workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f32>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub spec: KernelSpec,
}

impl KernelMatrix {
    pub fn new(
        values: Vec<f32>,
        row_ids: Vec<String>,
        col_ids: Vec<String>,
        spec: KernelSpec,
    ) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(Error::Format(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        Ok(KernelMatrix {
            rows: row_ids.len(),
            cols: col_ids.len(),
            values,
            row_ids,
            col_ids,
            spec,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Restriction to the given row and column positions.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> KernelMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        KernelMatrix {
            rows: rows.len(),
            cols: cols.len(),
            values,
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_ids: cols.iter().map(|&j| self.col_ids[j].clone()).collect(),
            spec: self.spec,
        }
    }
}

/// Sorted, deduplicated n-gram keys of one document.
type KeySet = Vec<u64>;

fn key_sets(sides: &[&TextCollection<'_>], n: usize, mode: GramMode) -> Vec<Vec<KeySet>> {
    match mode {
        GramMode::Hashed => sides
            .iter()
            .map(|side| {
                side.texts
                    .iter()
                    .map(|t| {
                        let mut keys: Vec<u64> =
                            ngram_windows(t, n).map(|g| xxh3_64(g.as_bytes())).collect();
                        keys.sort_unstable();
                        keys.dedup();
                        keys
                    })
                    .collect()
            })
            .collect(),
        GramMode::Exact => {
            let mut interned: HashMap<&str, u64, Xxh3DefaultBuilder> = HashMap::default();
            sides
                .iter()
                .map(|side| {
                    side.texts
                        .iter()
                        .map(|t| {
                            let mut keys: Vec<u64> = ngram_windows(t, n)
                                .map(|g| {
                                    let next = interned.len() as u64;
                                    *interned.entry(g).or_insert(next)
                                })
                                .collect();
                            keys.sort_unstable();
                            keys.dedup();
                            keys
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Computes rows `start..end` of the matrix into `out` (row-major, `cols` wide).
fn fill_block(
    rows: &[KeySet],
    cols: &[KeySet],
    start: usize,
    end: usize,
    normalized: bool,
    out: &mut [f32],
) {
    let width = cols.len();
    let mut index: HashMap<u64, Vec<u32>, Xxh3DefaultBuilder> = HashMap::default();
    for (local, keys) in rows[start..end].iter().enumerate() {
        for &k in keys {
            index.entry(k).or_default().push(local as u32);
        }
    }
    let mut counts = vec![0u32; (end - start) * width];
    for (j, keys) in cols.iter().enumerate() {
        for k in keys {
            if let Some(hits) = index.get(k) {
                for &r in hits {
                    counts[r as usize * width + j] += 1;
                }
            }
        }
    }
    for (local, row_counts) in counts.chunks(width.max(1)).enumerate() {
        let kxx = rows[start + local].len();
        let dst = &mut out[local * width..(local + 1) * width];
        for (j, (&c, v)) in row_counts.iter().zip(dst.iter_mut()).enumerate() {
            *v = if normalized {
                normalize(c as f64, kxx, cols[j].len()) as f32
            } else {
                c as f32
            };
        }
    }
}

fn block_ranges(rows: usize, cols: usize, opts: &GramOptions) -> Vec<(usize, usize)> {
    let budget_rows = (opts.block_bytes / (cols.max(1) * 4)).max(1);
    let per_worker = rows.div_ceil(opts.workers.max(1)).max(1);
    let block = budget_rows.min(per_worker);
    (0..rows)
        .step_by(block)
        .map(|s| (s, (s + block).min(rows)))
        .collect()
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
}

fn check_sides(a: &TextCollection<'_>, b: &TextCollection<'_>) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation(
            "cannot build a kernel matrix over an empty collection".into(),
        ));
    }
    Ok(())
}

/// Dense kernel matrix between two collections. The result does not depend
/// on `opts.workers` or the block size.
pub fn gram_matrix(
    a: &TextCollection<'_>,
    b: &TextCollection<'_>,
    spec: KernelSpec,
    opts: &GramOptions,
) -> Result<KernelMatrix> {
    check_sides(a, b)?;
    let sets = key_sets(&[a, b], spec.n, opts.mode);
    let (rows, cols) = (&sets[0], &sets[1]);
    let ranges = block_ranges(rows.len(), cols.len(), opts);
    let width = cols.len();
    let mut values = vec![0f32; rows.len() * width];

    let mut chunks: Vec<(&(usize, usize), &mut [f32])> = Vec::with_capacity(ranges.len());
    let mut rest = values.as_mut_slice();
    for range in &ranges {
        let (head, tail) = rest.split_at_mut((range.1 - range.0) * width);
        chunks.push((range, head));
        rest = tail;
    }
    thread_pool(opts.workers)?.install(|| {
        chunks.into_par_iter().for_each(|(&(s, e), out)| {
            fill_block(rows, cols, s, e, spec.normalized, out);
        })
    });
    KernelMatrix::new(values, a.ids.clone(), b.ids.clone(), spec)
}

/// Same values as [`gram_matrix`], streamed block by block into a kernel file
/// so that the full matrix never has to be resident.
pub fn gram_matrix_to_file(
    a: &TextCollection<'_>,
    b: &TextCollection<'_>,
    spec: KernelSpec,
    opts: &GramOptions,
    path: &Path,
) -> Result<()> {
    check_sides(a, b)?;
    let sets = key_sets(&[a, b], spec.n, opts.mode);
    let (rows, cols) = (&sets[0], &sets[1]);
    let ranges = block_ranges(rows.len(), cols.len(), opts);
    let width = cols.len();
    let pool = thread_pool(opts.workers)?;

    let mut out = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_header(&mut out, rows.len(), width).map_err(|e| Error::io(path, e))?;
    for wave in ranges.chunks(opts.workers.max(1)) {
        let blocks: Vec<Vec<f32>> = pool.install(|| {
            wave.par_iter()
                .map(|&(s, e)| {
                    let mut buf = vec![0f32; (e - s) * width];
                    fill_block(rows, cols, s, e, spec.normalized, &mut buf);
                    buf
                })
                .collect()
        });
        for block in blocks {
            write_values(&mut out, &block).map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    write_sidecar(path, &a.ids, &b.ids, spec)
}

fn write_header(out: &mut impl Write, rows: usize, cols: usize) -> std::io::Result<()> {
    out.write_all(KERNEL_MAGIC)?;
    out.write_all(&KERNEL_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(rows as u64).to_le_bytes())?;
    out.write_all(&(cols as u64).to_le_bytes())
}

fn write_values(out: &mut impl Write, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Path of the id sidecar belonging to a kernel file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".ids");
    PathBuf::from(name)
}

fn write_sidecar(path: &Path, rows: &[String], cols: &[String], spec: KernelSpec) -> Result<()> {
    let side = sidecar_path(path);
    let mut text = format!(
        "#kernel n={} normalized={}\n#rows {}\n",
        spec.n,
        spec.normalized,
        rows.len()
    );
    for id in rows {
        text.push_str(id);
        text.push('\n');
    }
    text.push_str(&format!("#cols {}\n", cols.len()));
    for id in cols {
        text.push_str(id);
        text.push('\n');
    }
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn save_kernel(k: &KernelMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_header(&mut out, k.rows, k.cols).map_err(|e| Error::io(path, e))?;
    for row in k.values.chunks(k.cols.max(1)) {
        write_values(&mut out, row).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    write_sidecar(path, &k.row_ids, &k.col_ids, k.spec)
}

fn read_sidecar(path: &Path) -> Result<(KernelSpec, Vec<String>, Vec<String>)> {
    let side = sidecar_path(path);
    let file = fs::File::open(&side).map_err(|e| Error::io(&side, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", side.display()));
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(|e| Error::io(&side, e))
    };

    let head = next()?;
    let rest = head.strip_prefix("#kernel ").ok_or_else(|| bad("missing #kernel line"))?;
    let mut n = None;
    let mut normalized = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("normalized", v)) => normalized = v.parse::<bool>().ok(),
            _ => return Err(bad("bad #kernel field")),
        }
    }
    let spec = KernelSpec::new(
        n.ok_or_else(|| bad("missing n"))?,
        normalized.ok_or_else(|| bad("missing normalized"))?,
    )
    .map_err(|_| bad("n must be positive"))?;

    let mut read_ids = |tag: &str| -> Result<Vec<String>> {
        let line = next()?;
        let count: usize = line
            .strip_prefix(tag)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad(&format!("missing {tag} line")))?;
        (0..count).map(|_| next()).collect()
    };
    let rows = read_ids("#rows ")?;
    let cols = read_ids("#cols ")?;
    Ok((spec, rows, cols))
}

pub fn load_kernel(path: &Path) -> Result<KernelMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if file_len < HEADER_LEN {
        return Err(bad(format!("truncated header ({file_len} bytes)")));
    }
    let mut reader = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN as usize];
    reader.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..12] != KERNEL_MAGIC {
        return Err(bad("not a kernel matrix file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(header[12..16].try_into().unwrap());
    if version != KERNEL_FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let rows = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let cols = u64::from_le_bytes(header[24..32].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| bad(format!("implausible dimensions {rows}x{cols}")))?;
    if expected != file_len {
        return Err(bad(format!(
            "header declares {rows}x{cols} ({expected} bytes) but file has {file_len} bytes"
        )));
    }
    let (spec, row_ids, col_ids) = read_sidecar(path)?;
    if row_ids.len() as u64 != rows || col_ids.len() as u64 != cols {
        return Err(bad(format!(
            "id sidecar lists {}x{} ids for a {rows}x{cols} matrix",
            row_ids.len(),
            col_ids.len()
        )));
    }

    let total = (rows * cols) as usize;
    let mut values = Vec::with_capacity(total);
    let mut buf = vec![0u8; 1 << 16];
    while values.len() < total {
        let want = ((total - values.len()) * 4).min(buf.len());
        reader
            .read_exact(&mut buf[..want])
            .map_err(|e| Error::io(path, e))?;
        values.extend(
            buf[..want]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
    }
    KernelMatrix::new(values, row_ids, col_ids, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> NgramSet {
        NgramSet {
            grams: items.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn distinct_ngram_examples() {
        assert_eq!(distinct_ngrams("abab", 2), set(&["ab", "ba"]));
        assert!(distinct_ngrams("", 3).is_empty());
        assert!(distinct_ngrams("abc", 5).is_empty());
        assert_eq!(distinct_ngrams("abc", 3), set(&["abc"]));
        // multi-byte characters count as one
        assert_eq!(distinct_ngrams("ășț", 2), set(&["ăș", "șț"]));
    }

    #[test]
    fn kernel_value_examples() {
        let raw = KernelSpec::new(2, false).unwrap();
        assert_eq!(kernel_value("abab", "abba", raw), 2.0);
        assert_eq!(kernel_value("abc", "xyz", raw), 0.0);
        let norm = KernelSpec::new(2, true).unwrap();
        assert_eq!(kernel_value("salut lume", "salut lume", norm), 1.0);
        assert_eq!(kernel_value("a", "abc", norm), 0.0);
    }

    #[test]
    fn zero_n_is_rejected() {
        assert!(KernelSpec::new(0, true).is_err());
    }

    #[test]
    fn empty_collection_is_an_error() {
        let a = TextCollection::from_texts(&[]);
        let b = TextCollection::from_texts(&["abc"]);
        assert!(gram_matrix(&a, &b, KernelSpec::default(), &GramOptions::default()).is_err());
    }

    #[test]
    fn small_gram_matches_pairwise() {
        let texts = ["abcab", "bcabc", "zzab"];
        let c = TextCollection::from_texts(&texts);
        let spec = KernelSpec::new(2, false).unwrap();
        let k = gram_matrix(&c, &c, spec, &GramOptions::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.get(i, j) as f64, kernel_value(texts[i], texts[j], spec));
                assert_eq!(k.get(i, j), k.get(j, i));
            }
            assert_eq!(k.get(i, i) as usize, distinct_ngrams(texts[i], 2).len());
        }
    }

    #[test]
    fn normalized_self_kernel_has_unit_diagonal() {
        let texts = ["acasă la noi", "la mulți ani", "noi"];
        let c = TextCollection::from_texts(&texts);
        let k = gram_matrix(&c, &c, KernelSpec::new(3, true).unwrap(), &GramOptions::default())
            .unwrap();
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
        }
    }

    #[test]
    fn block_size_does_not_change_values() {
        let texts: Vec<String> = (0..17).map(|i| format!("doc {i} {}", "ab".repeat(i % 5))).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = TextCollection::from_texts(&refs);
        let spec = KernelSpec::new(3, true).unwrap();
        let whole = gram_matrix(&c, &c, spec, &GramOptions::default()).unwrap();
        let tiny = GramOptions {
            block_bytes: 1,
            workers: 3,
            ..Default::default()
        };
        assert_eq!(gram_matrix(&c, &c, spec, &tiny).unwrap(), whole);
    }

    #[test]
    fn kernel_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let k = KernelMatrix::new(
            vec![1.0, 0.5, 0.25, 0.5, 1.0, 0.125, 0.25, 0.125, 1.0],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["a".into(), "b".into(), "c".into()],
            KernelSpec::new(6, true).unwrap(),
        )
        .unwrap();
        save_kernel(&k, &path).unwrap();
        assert_eq!(load_kernel(&path).unwrap(), k);
    }

    #[test]
    fn streamed_file_equals_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let a = TextCollection::from_texts(&["la noi acasă", "acasă", "noi doi"]);
        let b = TextCollection::from_texts(&["noi", "la noi"]);
        let spec = KernelSpec::new(2, true).unwrap();
        let opts = GramOptions {
            block_bytes: 8,
            workers: 2,
            ..Default::default()
        };
        gram_matrix_to_file(&a, &b, spec, &opts, &path).unwrap();
        assert_eq!(
            load_kernel(&path).unwrap(),
            gram_matrix(&a, &b, spec, &GramOptions::default()).unwrap()
        );
    }

    #[test]
    fn truncated_or_foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let k = KernelMatrix::new(
            vec![1.0; 9],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["a".into(), "b".into(), "c".into()],
            KernelSpec::default(),
        )
        .unwrap();
        save_kernel(&k, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_kernel(&path), Err(Error::Format(_))));

        fs::write(&path, &bytes[..10]).unwrap();
        assert!(matches!(load_kernel(&path), Err(Error::Format(_))));

        let mut foreign = bytes.clone();
        foreign[0] = b'X';
        fs::write(&path, &foreign).unwrap();
        assert!(matches!(load_kernel(&path), Err(Error::Format(_))));

        // a header promising 21,719 rows backed by far fewer bytes
        let mut lying = bytes.clone();
        lying[16..24].copy_from_slice(&21_719u64.to_le_bytes());
        lying[24..32].copy_from_slice(&21_719u64.to_le_bytes());
        fs::write(&path, &lying).unwrap();
        assert!(matches!(load_kernel(&path), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_bounded(x in "[abc ]{0,20}", y in "[abc ]{0,20}", n in 1usize..5) {
            let spec = KernelSpec::new(n, false).unwrap();
            let kxy = kernel_value(&x, &y, spec);
            prop_assert_eq!(kxy, kernel_value(&y, &x, spec));
            prop_assert!(kxy <= kernel_value(&x, &x, spec).min(kernel_value(&y, &y, spec)));
            let longer = x.chars().count().max(y.chars().count()) + 1;
            prop_assert_eq!(kernel_value(&x, &y, KernelSpec::new(longer, false).unwrap()), 0.0);
        }
    }
}

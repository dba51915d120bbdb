//! Corpus loading, text normalization and evaluation-scenario slicing.
//!
//! The canonical on-disk layout is one directory per source under a data
//! root:
//!
//! ```text
//! <root>/moroco/{train,validation,test}.tsv
//! <root>/moroco/manifest.tsv
//! <root>/moroco-tweets/{validation,test}.tsv
//! <root>/moroco-tweets/manifest.tsv
//! ```
//!
//! Each corpus file holds one document per line with the tab-separated
//! columns `id, dialect, topic, genre, text`; the topic column is `-` for
//! tweets. The manifest lists `split<TAB>count` for every split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Placeholder that replaces named entities in the distributed corpora.
pub const MASK_TOKEN: &str = "$ne$";

pub const MANIFEST_FILE: &str = "manifest.tsv";

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            /// Position of the label in [`Self::ALL`].
            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Validation(format!(
                        "unknown {} `{}`",
                        stringify!($name).to_lowercase(),
                        other
                    ))),
                }
            }
        }
    };
}

label_enum!(
    /// Dialect label. `Md` is class 0, `Ro` is class 1.
    Dialect { Md => "MD", Ro => "RO" }
);

label_enum!(
    /// Topic categories of the news corpus.
    Topic {
        Culture => "culture",
        Finance => "finance",
        Politics => "politics",
        Science => "science",
        Sports => "sports",
        Tech => "tech",
    }
);

label_enum!(Genre { News => "news", Tweet => "tweet" });

label_enum!(Split { Train => "train", Validation => "validation", Test => "test" });

label_enum!(
    /// Corpus family; also the directory name under the data root.
    Source { Moroco => "moroco", MorocoTweets => "moroco-tweets" }
);

label_enum!(Scenario {
    FullArticles => "full_articles",
    Sentences => "sentences",
    CrossGenreTweets => "cross_genre_tweets",
});

label_enum!(Task {
    Dialect => "dialect",
    TopicIntraMd => "topic_intra_MD",
    TopicIntraRo => "topic_intra_RO",
    TopicCrossMdToRo => "topic_cross_MD_to_RO",
    TopicCrossRoToMd => "topic_cross_RO_to_MD",
});

impl Task {
    pub fn is_topic(self) -> bool {
        self != Task::Dialect
    }

    /// Class names in class-index order.
    pub fn class_names(self) -> Vec<String> {
        if self.is_topic() {
            Topic::ALL.iter().map(|t| t.as_str().to_string()).collect()
        } else {
            Dialect::ALL.iter().map(|d| d.as_str().to_string()).collect()
        }
    }

    pub fn num_classes(self) -> usize {
        if self.is_topic() {
            Topic::ALL.len()
        } else {
            Dialect::ALL.len()
        }
    }

    /// Class index of a document under this task.
    pub fn label_of(self, doc: &Document) -> Result<usize> {
        if self.is_topic() {
            doc.topic.map(Topic::index).ok_or_else(|| {
                Error::Validation(format!("document {} has no topic label", doc.id))
            })
        } else {
            Ok(doc.dialect.index())
        }
    }
}

impl Source {
    pub fn splits(self) -> &'static [Split] {
        match self {
            Source::Moroco => &[Split::Train, Split::Validation, Split::Test],
            Source::MorocoTweets => &[Split::Validation, Split::Test],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub dialect: Dialect,
    pub topic: Option<Topic>,
    pub genre: Genre,
}

impl Document {
    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() || self.id.contains(['\t', '\n', '\r']) {
            return Err(format!("invalid document id `{}`", self.id));
        }
        if self.text.is_empty() {
            return Err(format!("document {} has empty text", self.id));
        }
        if self.text.contains(['\t', '\n', '\r']) {
            return Err(format!("document {} contains a tab or newline", self.id));
        }
        match (self.genre, self.topic) {
            (Genre::News, None) => Err(format!("news document {} has no topic", self.id)),
            (Genre::Tweet, Some(_)) => Err(format!("tweet {} carries a topic", self.id)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub documents: Vec<Document>,
    pub split: Split,
    pub source: Source,
}

impl LabeledCorpus {
    /// Builds a corpus after checking document and corpus invariants.
    pub fn new(documents: Vec<Document>, split: Split, source: Source) -> Result<Self> {
        let corpus = LabeledCorpus {
            documents,
            split,
            source,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|d| d.text.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.documents.len());
        let mut duplicates = Vec::new();
        for doc in &self.documents {
            doc.check().map_err(Error::Validation)?;
            if !seen.insert(doc.id.as_str()) {
                duplicates.push(doc.id.clone());
            }
            if self.source == Source::MorocoTweets && doc.genre != Genre::Tweet {
                return Err(Error::Validation(format!(
                    "MOROCO-Tweets corpus holds non-tweet document {}",
                    doc.id
                )));
            }
        }
        if !duplicates.is_empty() {
            return Err(Error::Validation(format!(
                "duplicate document ids: {}",
                duplicates.join(", ")
            )));
        }
        Ok(())
    }

    /// SHA-256 over ids and texts in order; used as a cache key.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for doc in &self.documents {
            hasher.update(doc.id.as_bytes());
            hasher.update([0u8]);
            hasher.update(doc.text.as_bytes());
            hasher.update([0xffu8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Canonical composed form, lowercase, single spaces, trimmed.
pub fn preprocess(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let normalized: String = lowered.nfc().collect();
    let mut out = String::with_capacity(normalized.len());
    for word in normalized.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Prefix up to the first `.`, `!` or `?` that is followed by a space and a
/// letter; the whole text when no terminator qualifies.
pub fn first_sentence(text: &str) -> &str {
    let chars = text.char_indices().peekable();
    for (i, c) in chars {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let rest = &text[i + c.len_utf8()..];
        let mut after = rest.chars();
        if after.next() == Some(' ') && after.next().is_some_and(char::is_alphabetic) {
            return &text[..i + c.len_utf8()];
        }
    }
    text
}

/// Location of one split in the canonical layout.
pub fn corpus_path(root: &Path, source: Source, split: Split) -> PathBuf {
    root.join(source.as_str()).join(format!("{}.tsv", split.as_str()))
}

fn read_manifest(path: &Path) -> Result<BTreeMap<Split, usize>> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Load(format!("cannot open manifest {}: {}", path.display(), e))
    })?;
    let name = path.display().to_string();
    let mut counts = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (split, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&name, lineno + 1, "expected `split<TAB>count`"))?;
        let split: Split = split
            .parse()
            .map_err(|e: Error| Error::parse(&name, lineno + 1, e.to_string()))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::parse(&name, lineno + 1, format!("bad count `{count}`")))?;
        counts.insert(split, count);
    }
    Ok(counts)
}

fn parse_row(line: &str, file: &str, lineno: usize) -> Result<Document> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            file,
            lineno,
            format!("expected 5 tab-separated columns, found {}", fields.len()),
        ));
    }
    let bad = |e: Error| Error::parse(file, lineno, e.to_string());
    let dialect: Dialect = fields[1].parse().map_err(bad)?;
    let topic = match fields[2] {
        "-" => None,
        t => Some(t.parse::<Topic>().map_err(bad)?),
    };
    let genre: Genre = fields[3].parse().map_err(bad)?;
    Ok(Document {
        id: fields[0].to_string(),
        text: preprocess(fields[4]),
        dialect,
        topic,
        genre,
    })
}

/// Loads and preprocesses one split of a corpus from the canonical layout.
pub fn load_corpus(root: &Path, source: Source, split: Split) -> Result<LabeledCorpus> {
    if !source.splits().contains(&split) {
        return Err(Error::Load(format!("{source} has no {split} split")));
    }
    let manifest_path = root.join(source.as_str()).join(MANIFEST_FILE);
    let manifest = read_manifest(&manifest_path)?;
    let path = corpus_path(root, source, split);
    let file = fs::File::open(&path)
        .map_err(|e| Error::Load(format!("cannot open {}: {}", path.display(), e)))?;
    let name = path.display().to_string();

    let mut documents = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            return Err(Error::parse(&name, i + 1, "empty row"));
        }
        documents.push(parse_row(line, &name, i + 1)?);
    }

    let empty: Vec<&str> = documents
        .iter()
        .filter(|d| d.text.is_empty())
        .map(|d| d.id.as_str())
        .collect();
    if !empty.is_empty() {
        return Err(Error::Validation(format!(
            "{}: documents empty after preprocessing: {}",
            name,
            empty.join(", ")
        )));
    }

    let corpus = LabeledCorpus::new(documents, split, source)
        .map_err(|e| e.context(format!("loading {name}")))?;
    match manifest.get(&split) {
        Some(&expected) if expected != corpus.len() => Err(Error::Validation(format!(
            "{}: manifest declares {} documents, found {}",
            name,
            expected,
            corpus.len()
        ))),
        Some(_) => Ok(corpus),
        None => Err(Error::Validation(format!(
            "{}: split {} missing from manifest",
            manifest_path.display(),
            split
        ))),
    }
}

/// Writes a corpus in the canonical layout and records its size in the manifest.
pub fn write_corpus(corpus: &LabeledCorpus, root: &Path) -> Result<()> {
    corpus.validate()?;
    let dir = root.join(corpus.source.as_str());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = corpus_path(root, corpus.source, corpus.split);
    let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for doc in &corpus.documents {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            doc.id,
            doc.dialect,
            doc.topic.map_or("-", Topic::as_str),
            doc.genre,
            doc.text
        )
        .map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        read_manifest(&manifest_path)?
    } else {
        BTreeMap::new()
    };
    manifest.insert(corpus.split, corpus.len());
    let body: String = manifest
        .iter()
        .map(|(split, n)| format!("{split}\t{n}\n"))
        .collect();
    fs::write(&manifest_path, body).map_err(|e| Error::io(&manifest_path, e))
}

/// All corpora needed to build any scenario.
#[derive(Debug, Clone)]
pub struct CorpusBundle {
    pub news_train: LabeledCorpus,
    pub news_validation: LabeledCorpus,
    pub news_test: LabeledCorpus,
    pub tweets: Option<TweetSplits>,
}

#[derive(Debug, Clone)]
pub struct TweetSplits {
    pub validation: LabeledCorpus,
    pub test: LabeledCorpus,
}

impl CorpusBundle {
    /// Loads MOROCO and, when `with_tweets` is set, MOROCO-Tweets.
    pub fn load(root: &Path, with_tweets: bool) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Load(format!(
                "data root {} is not a directory",
                root.display()
            )));
        }
        let tweets = if with_tweets {
            Some(TweetSplits {
                validation: load_corpus(root, Source::MorocoTweets, Split::Validation)?,
                test: load_corpus(root, Source::MorocoTweets, Split::Test)?,
            })
        } else {
            None
        };
        Ok(CorpusBundle {
            news_train: load_corpus(root, Source::Moroco, Split::Train)?,
            news_validation: load_corpus(root, Source::Moroco, Split::Validation)?,
            news_test: load_corpus(root, Source::Moroco, Split::Test)?,
            tweets,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioDataset {
    pub scenario: Scenario,
    pub task: Task,
    pub train: LabeledCorpus,
    pub validation: LabeledCorpus,
    pub test: LabeledCorpus,
}

impl ScenarioDataset {
    pub fn labels(&self, corpus: &LabeledCorpus) -> Result<Vec<usize>> {
        corpus
            .documents
            .iter()
            .map(|d| self.task.label_of(d))
            .collect()
    }

    pub fn split(&self, split: Split) -> &LabeledCorpus {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

fn derive_corpus(
    corpus: &LabeledCorpus,
    keep: impl Fn(&Document) -> bool,
    sentences: bool,
) -> LabeledCorpus {
    let mut documents: Vec<Document> = corpus
        .documents
        .iter()
        .filter(|d| keep(d))
        .map(|d| {
            let mut d = d.clone();
            if sentences {
                d.text = first_sentence(&d.text).to_string();
            }
            d
        })
        .collect();
    documents.sort_by(|a, b| a.id.cmp(&b.id));
    LabeledCorpus {
        documents,
        split: corpus.split,
        source: corpus.source,
    }
}

/// Slices the loaded corpora into the train/validation/test sets of one
/// scenario and task. Labels are never altered; document order is by id.
pub fn build_scenario(
    bundle: &CorpusBundle,
    scenario: Scenario,
    task: Task,
) -> Result<ScenarioDataset> {
    if task.is_topic() && scenario == Scenario::CrossGenreTweets {
        return Err(Error::Unsupported(format!(
            "task {task} cannot be evaluated on tweets, which carry no topic labels"
        )));
    }
    let sentences = scenario != Scenario::FullArticles;
    let (train_dialect, eval_dialect) = match task {
        Task::Dialect => (None, None),
        Task::TopicIntraMd => (Some(Dialect::Md), Some(Dialect::Md)),
        Task::TopicIntraRo => (Some(Dialect::Ro), Some(Dialect::Ro)),
        Task::TopicCrossMdToRo => (Some(Dialect::Md), Some(Dialect::Ro)),
        Task::TopicCrossRoToMd => (Some(Dialect::Ro), Some(Dialect::Md)),
    };
    let filter = |want: Option<Dialect>| move |d: &Document| want.is_none_or(|w| d.dialect == w);

    let train = derive_corpus(&bundle.news_train, filter(train_dialect), sentences);
    let (validation, test) = if scenario == Scenario::CrossGenreTweets {
        let tweets = bundle.tweets.as_ref().ok_or_else(|| {
            Error::Load("the cross-genre scenario needs the MOROCO-Tweets corpus".into())
        })?;
        (
            derive_corpus(&tweets.validation, |_| true, false),
            derive_corpus(&tweets.test, |_| true, false),
        )
    } else {
        (
            derive_corpus(&bundle.news_validation, filter(eval_dialect), sentences),
            derive_corpus(&bundle.news_test, filter(eval_dialect), sentences),
        )
    };
    for corpus in [&train, &validation, &test] {
        if corpus.is_empty() {
            return Err(Error::Validation(format!(
                "{scenario}/{task}: {} split is empty",
                corpus.split
            )));
        }
    }
    Ok(ScenarioDataset {
        scenario,
        task,
        train,
        validation,
        test,
    })
}

fn read_id_column(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Load(format!("cannot open {}: {}", path.display(), e)))?;
    let name = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&name, i + 1, "expected `id<TAB>value`"))?;
        rows.push((id.trim().to_string(), value.to_string()));
    }
    Ok(rows)
}

fn published_dialect(code: &str) -> Option<Dialect> {
    match code.trim() {
        "1" => Some(Dialect::Md),
        "2" => Some(Dialect::Ro),
        _ => None,
    }
}

fn published_topic(code: &str) -> Option<Topic> {
    let idx: usize = code.trim().parse().ok()?;
    Topic::ALL.get(idx.checked_sub(1)?).copied()
}

fn import_published_split(dir: &Path, split: Split, source: Source) -> Result<LabeledCorpus> {
    let samples = read_id_column(&dir.join("samples.txt"))?;
    let dialect_file = ["dialect_labels.txt", "labels.txt"]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Load(format!("{}: no dialect label file", dir.display())))?;
    let dialects: BTreeMap<String, String> = read_id_column(&dialect_file)?.into_iter().collect();
    let topics: BTreeMap<String, String> = if source == Source::Moroco {
        read_id_column(&dir.join("category_labels.txt"))?
            .into_iter()
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut documents = Vec::with_capacity(samples.len());
    for (id, text) in samples {
        let dialect = dialects
            .get(&id)
            .and_then(|c| published_dialect(c))
            .ok_or_else(|| Error::Validation(format!("sample {id}: missing or bad dialect label")))?;
        let topic = match source {
            Source::Moroco => Some(
                topics
                    .get(&id)
                    .and_then(|c| published_topic(c))
                    .ok_or_else(|| {
                        Error::Validation(format!("sample {id}: missing or bad category label"))
                    })?,
            ),
            Source::MorocoTweets => None,
        };
        documents.push(Document {
            id,
            text: preprocess(&text),
            dialect,
            topic,
            genre: if source == Source::Moroco { Genre::News } else { Genre::Tweet },
        });
    }
    LabeledCorpus::new(documents, split, source)
}

/// Converts the published per-split layout (`samples.txt`,
/// `dialect_labels.txt` with 1 = MD / 2 = RO, `category_labels.txt` with
/// 1..6 in topic order) into the canonical layout under `dst`.
pub fn import_published_layout(src: &Path, source: Source, dst: &Path) -> Result<Vec<usize>> {
    let mut sizes = Vec::new();
    for &split in source.splits() {
        let corpus = import_published_split(&src.join(split.as_str()), split, source)?;
        sizes.push(corpus.len());
        write_corpus(&corpus, dst)?;
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str, dialect: Dialect, topic: Option<Topic>) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            dialect,
            topic,
            genre: if topic.is_some() { Genre::News } else { Genre::Tweet },
        }
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess(""), "");
        assert_eq!(preprocess("A  B\tC"), "a b c");
        let s = "leul moldovenesc se depreciază…";
        assert_eq!(preprocess(s), s);
        assert_eq!(preprocess("  Pe $NE$ \n"), "pe $ne$");
    }

    #[test]
    fn preprocess_composes_diacritics() {
        // a + combining breve -> ă
        assert_eq!(preprocess("a\u{306}"), "\u{103}");
    }

    #[test]
    fn first_sentence_examples() {
        assert_eq!(first_sentence("pe piața online a $ne$."), "pe piața online a $ne$.");
        assert_eq!(first_sentence("a b. c d."), "a b.");
        assert_eq!(first_sentence("no terminator here"), "no terminator here");
        assert_eq!(first_sentence("costa 2.5 lei. apoi"), "costa 2.5 lei.");
        assert_eq!(first_sentence("ce? 5 lei"), "ce? 5 lei");
    }

    #[test]
    fn corpus_rejects_duplicates() {
        let docs = vec![
            doc("1", "a", Dialect::Md, Some(Topic::Tech)),
            doc("1", "b", Dialect::Ro, Some(Topic::Tech)),
        ];
        let err = LabeledCorpus::new(docs, Split::Train, Source::Moroco).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn tweets_corpus_rejects_news() {
        let docs = vec![doc("1", "a", Dialect::Md, Some(Topic::Tech))];
        assert!(LabeledCorpus::new(docs, Split::Test, Source::MorocoTweets).is_err());
    }

    #[test]
    fn empty_directory_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path(), Source::Moroco, Split::Train).unwrap_err();
        assert!(matches!(err, Error::Load(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("moroco");
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(MANIFEST_FILE), "train\t2\n").unwrap();
        fs::write(sub.join("train.tsv"), "1\tMD\ttech\tnews\tok\n2\tXX\ttech\tnews\tbad\n").unwrap();
        match load_corpus(dir.path(), Source::Moroco, Split::Train).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_after_preprocessing_lists_ids() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("moroco");
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(MANIFEST_FILE), "train\t2\n").unwrap();
        fs::write(sub.join("train.tsv"), "a7\tMD\ttech\tnews\t   \nb\tRO\ttech\tnews\tx\n").unwrap();
        let err = load_corpus(dir.path(), Source::Moroco, Split::Train).unwrap_err();
        assert!(err.to_string().contains("a7"), "{err}");
    }

    #[test]
    fn manifest_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("moroco");
        fs::create_dir_all(&sub).unwrap();
        fs::write(sub.join(MANIFEST_FILE), "train\t3\n").unwrap();
        fs::write(sub.join("train.tsv"), "1\tMD\ttech\tnews\tok\n").unwrap();
        assert!(matches!(
            load_corpus(dir.path(), Source::Moroco, Split::Train),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn published_layout_codes() {
        assert_eq!(published_dialect("1"), Some(Dialect::Md));
        assert_eq!(published_dialect("2"), Some(Dialect::Ro));
        assert_eq!(published_topic("1"), Some(Topic::Culture));
        assert_eq!(published_topic("6"), Some(Topic::Tech));
        assert_eq!(published_topic("0"), None);
        assert_eq!(published_topic("7"), None);
    }

    proptest! {
        #[test]
        fn first_sentence_is_idempotent(t in "[a-c .!?]{0,40}") {
            let t = preprocess(&t);
            let once = first_sentence(&t);
            prop_assert_eq!(first_sentence(once), once);
            if !t.is_empty() {
                prop_assert!(!once.is_empty());
            }
        }

        #[test]
        fn preprocess_is_idempotent(t in "\\PC{0,30}") {
            let once = preprocess(&t);
            prop_assert_eq!(preprocess(&once), once);
        }
    }
}

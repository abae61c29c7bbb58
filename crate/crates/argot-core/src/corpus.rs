//! Corpus loading and the token normalization pipeline.
//!
//! Documents come in as raw text (jsonl records or one file per document) and
//! leave as ordered token sequences: whitespace tokenization, lowercasing,
//! boundary punctuation stripping, stopword removal, Snowball stemming, and a
//! minimum-length filter, in that order.
//!
//! The leading underscore is a reserved marker used by the simulation harness
//! to tag pseudo-dark words. Tokens beginning with `_` keep that one character
//! through punctuation stripping and are stemmed on the remainder, so an
//! injected `_strawberry` normalizes to `_strawberri` exactly like its source
//! word. Raw text that happens to contain `_`-prefixed tokens will therefore
//! collide with the marker space; keep injected corpora separate from natural
//! ones.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer as SnowballStemmer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// One source document before preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

/// On-disk corpus layouts understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON object per line with string fields `id` and `text`; unknown
    /// fields are ignored.
    Jsonl,
    /// Directory tree of UTF-8 text files; the relative path is the id.
    PlainDir,
}

impl Default for CorpusFormat {
    fn default() -> Self {
        CorpusFormat::Jsonl
    }
}

/// Where the stopword set comes from. In config files this is either the
/// string `"default"` (builtin 318-word list), `"none"`, a file path, or an
/// inline array of words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopwordSpec {
    Default,
    None,
    File(PathBuf),
    Inline(Vec<String>),
}

impl Default for StopwordSpec {
    fn default() -> Self {
        StopwordSpec::Default
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StopwordRepr {
    Word(String),
    List(Vec<String>),
}

impl Serialize for StopwordSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            StopwordSpec::Default => StopwordRepr::Word("default".into()),
            StopwordSpec::None => StopwordRepr::Word("none".into()),
            StopwordSpec::File(p) => StopwordRepr::Word(p.to_string_lossy().into_owned()),
            StopwordSpec::Inline(words) => StopwordRepr::List(words.clone()),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StopwordSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match StopwordRepr::deserialize(d)? {
            StopwordRepr::Word(w) => match w.as_str() {
                "default" => StopwordSpec::Default,
                "none" => StopwordSpec::None,
                _ => StopwordSpec::File(PathBuf::from(w)),
            },
            StopwordRepr::List(words) => StopwordSpec::Inline(words),
        })
    }
}

/// Stemming algorithm choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemmerChoice {
    None,
    EnglishSnowball,
}

/// Normalization settings. Serializes losslessly to and from the TOML config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopwords: StopwordSpec,
    pub stemmer: StemmerChoice,
    pub min_token_length: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lowercase: true,
            strip_punctuation: true,
            stopwords: StopwordSpec::Default,
            stemmer: StemmerChoice::EnglishSnowball,
            min_token_length: 1,
        }
    }
}

impl PipelineConfig {
    /// Stable hash of the canonical serialization. Corpora preprocessed with
    /// different fingerprints must never be compared.
    pub fn fingerprint(&self) -> String {
        let canonical = toml::to_string(self).expect("pipeline config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex(&h.finalize())
    }

    pub fn compile(&self) -> Result<Pipeline> {
        if self.min_token_length < 1 {
            return Err(Error::InvalidParameter(
                "min_token_length must be >= 1".into(),
            ));
        }
        let stopwords = match &self.stopwords {
            StopwordSpec::Default => builtin_stopwords().clone(),
            StopwordSpec::None => BTreeSet::new(),
            StopwordSpec::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_stopword_lines(&text)
            }
            StopwordSpec::Inline(words) => words.iter().map(|w| w.trim().to_lowercase()).collect(),
        };
        let stemmer = match self.stemmer {
            StemmerChoice::None => None,
            StemmerChoice::EnglishSnowball => Some(SnowballStemmer::create(Algorithm::English)),
        };
        Ok(Pipeline {
            cfg: self.clone(),
            fingerprint: self.fingerprint(),
            stopwords,
            stemmer,
        })
    }
}

fn builtin_stopwords() -> &'static BTreeSet<String> {
    static SET: OnceLock<BTreeSet<String>> = OnceLock::new();
    SET.get_or_init(|| parse_stopword_lines(BUILTIN_STOPWORDS))
}

fn parse_stopword_lines(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// A compiled [`PipelineConfig`]: stopword set resolved, stemmer instantiated.
/// Immutable and safe to share across worker threads.
pub struct Pipeline {
    cfg: PipelineConfig,
    fingerprint: String,
    stopwords: BTreeSet<String>,
    stemmer: Option<SnowballStemmer>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("cfg", &self.cfg)
            .field("stopwords", &self.stopwords.len())
            .finish()
    }
}

impl Pipeline {
    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Runs the full normalization chain over one text.
    pub fn run(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in tokenize(text) {
            if let Some(token) = self.normalize_token(raw) {
                out.push(token);
            }
        }
        out
    }

    fn normalize_token(&self, raw: &str) -> Option<String> {
        let mut token = if self.cfg.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };

        if self.cfg.strip_punctuation {
            token = strip_boundary_punctuation(&token)?;
        }

        if self.stopwords.contains(token.as_str()) {
            return None;
        }

        if let Some(stemmer) = &self.stemmer {
            token = match marker_suffix(&token) {
                Some(suffix) => format!("_{}", stemmer.stem(suffix)),
                None => stemmer.stem(&token).into_owned(),
            };
        }

        if token.chars().count() < self.cfg.min_token_length {
            return None;
        }
        Some(token)
    }
}

/// Splits `token` into the reserved marker and a non-empty remainder, if it
/// carries one.
fn marker_suffix(token: &str) -> Option<&str> {
    match token.strip_prefix('_') {
        Some(rest) if !rest.is_empty() => Some(rest),
        _ => None,
    }
}

/// Strips non-alphanumeric characters from both token boundaries, preserving
/// one leading `_` marker. Returns `None` when nothing survives.
fn strip_boundary_punctuation(token: &str) -> Option<String> {
    let (marker, body) = match marker_suffix(token) {
        Some(rest) => (true, rest),
        None => (false, token),
    };
    let core = body
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .trim_end_matches(|c: char| !c.is_alphanumeric());
    if core.is_empty() {
        return None;
    }
    Some(if marker {
        format!("_{core}")
    } else {
        core.to_string()
    })
}

/// Splits on Unicode whitespace; every maximal non-whitespace run is one raw
/// token.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Applies the pipeline to one raw document.
pub fn preprocess(doc: &RawDocument, pipeline: &Pipeline) -> Document {
    Document {
        id: doc.id.clone(),
        tokens: pipeline.run(&doc.text),
    }
}

/// One preprocessed document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Where a corpus came from and how it was normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: String,
    pub pipeline_fingerprint: String,
}

/// An ordered collection of preprocessed documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Preprocesses raw documents in parallel, preserving document order.
    pub fn from_raw(raw: &[RawDocument], pipeline: &Pipeline, source: &str) -> Corpus {
        let docs = raw
            .par_iter()
            .map(|d| preprocess(d, pipeline))
            .collect::<Vec<_>>();
        Corpus {
            docs,
            provenance: Provenance {
                source: source.to_string(),
                pipeline_fingerprint: pipeline.fingerprint().to_string(),
            },
        }
    }

    /// Loads and preprocesses a corpus from disk.
    pub fn load(path: &Path, format: CorpusFormat, pipeline: &Pipeline) -> Result<Corpus> {
        let raw = load_corpus(path, format)?;
        Ok(Corpus::from_raw(&raw, pipeline, &path.to_string_lossy()))
    }

    /// Derives a corpus with the same pipeline fingerprint but new contents;
    /// used by split/inject stages.
    pub(crate) fn derived(&self, docs: Vec<Document>, source: String) -> Corpus {
        Corpus {
            docs,
            provenance: Provenance {
                source,
                pipeline_fingerprint: self.provenance.pipeline_fingerprint.clone(),
            },
        }
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(|d| d.tokens.len()).sum()
    }
}

/// Reads raw documents in deterministic order: jsonl in line order, plain_dir
/// in lexicographic relative-path order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<RawDocument>> {
    match format {
        CorpusFormat::Jsonl => load_jsonl(path),
        CorpusFormat::PlainDir => load_plain_dir(path),
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    text: String,
}

fn load_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let data = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = std::collections::HashMap::new();
    let mut docs = Vec::new();
    for (idx, line) in data.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if seen.insert(rec.id.clone(), line_no).is_some() {
            return Err(Error::DuplicateDocId {
                path: path.to_path_buf(),
                line: line_no,
                id: rec.id,
            });
        }
        docs.push(RawDocument {
            id: rec.id,
            text: rec.text,
        });
    }
    Ok(docs)
}

fn load_plain_dir(path: &Path) -> Result<Vec<RawDocument>> {
    let mut entries = Vec::new();
    for entry in walkdir::WalkDir::new(path).follow_links(false) {
        let entry = entry.map_err(|e| Error::Artifact {
            path: path.to_path_buf(),
            reason: format!("walk failed: {e}"),
        })?;
        if entry.file_type().is_file() {
            let rel = entry
                .path()
                .strip_prefix(path)
                .unwrap_or(entry.path())
                .to_string_lossy()
                .into_owned();
            entries.push((rel, entry.path().to_path_buf()));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut seen = std::collections::HashSet::new();
    let mut docs = Vec::new();
    for (line_no, (rel, file)) in entries.into_iter().enumerate() {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        if !seen.insert(rel.clone()) {
            return Err(Error::DuplicateDocId {
                path: path.to_path_buf(),
                line: line_no + 1,
                id: rel,
            });
        }
        docs.push(RawDocument { id: rel, text });
    }
    Ok(docs)
}

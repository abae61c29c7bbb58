//! Joint vocabulary construction: the top-N words by frequency over the union
//! of both corpora, plus forced inclusions for simulation markers.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Exact word occurrence counts over one or more corpora.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    /// Builds a table from explicit counts; fixtures and tooling.
    pub fn from_counts(counts: HashMap<String, u64>) -> FrequencyTable {
        let total = counts.values().sum();
        FrequencyTable { counts, total }
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    /// Total token count; equals the sum of all per-word counts.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }
}

/// Sums exact token counts across all documents of all corpora.
///
/// The corpora must share a pipeline fingerprint; comparing tokenizations
/// produced by different configs is meaningless.
pub fn count_frequencies(corpora: &[&Corpus]) -> Result<FrequencyTable> {
    if let Some(first) = corpora.first() {
        let fp = &first.provenance.pipeline_fingerprint;
        for c in &corpora[1..] {
            if &c.provenance.pipeline_fingerprint != fp {
                return Err(Error::PipelineMismatch {
                    left: fp.clone(),
                    right: c.provenance.pipeline_fingerprint.clone(),
                });
            }
        }
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for corpus in corpora {
        for doc in &corpus.docs {
            for token in &doc.tokens {
                *counts.entry(token.clone()).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    Ok(FrequencyTable { counts, total })
}

/// The joint vocabulary: an ordered word list with its inverse index.
///
/// Ordering is by descending joint frequency with ascending lexicographic
/// tie-break; forced words missing from the top-N are appended afterwards in
/// the same order. `forced` is a build-time input and is not persisted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    joint_freq: Vec<u64>,
    index: HashMap<String, u32>,
    n_configured: usize,
    forced: BTreeSet<String>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn n_configured(&self) -> usize {
        self.n_configured
    }

    pub fn forced(&self) -> &BTreeSet<String> {
        &self.forced
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn require_id(&self, word: &str) -> Result<u32> {
        self.id(word).ok_or_else(|| Error::UnknownWord(word.into()))
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Joint frequency of the word at `id`, as counted at build time.
    pub fn joint_freq(&self, id: u32) -> u64 {
        self.joint_freq[id as usize]
    }

    /// SHA-256 of the canonical text serialization; stamped into every binary
    /// artifact built over this vocabulary.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.finalize().into()
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "argot-vocab\tv1\t{}\t{}\n",
            self.n_configured,
            self.words.len()
        ));
        for (w, f) in self.words.iter().zip(&self.joint_freq) {
            out.push_str(&format!("{w}\t{f}\n"));
        }
        out
    }

    /// Writes the versioned text format: a header line with N and the entry
    /// count, then one `word<TAB>frequency` line per entry in rank order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, reason: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty vocabulary file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 4 || fields[0] != "argot-vocab" || fields[1] != "v1" {
            return Err(bad(
                1,
                "expected header: argot-vocab\\tv1\\t<N>\\t<entries>",
            ));
        }
        let n: usize = fields[2].parse().map_err(|_| bad(1, "bad N"))?;
        let entries: usize = fields[3].parse().map_err(|_| bad(1, "bad entry count"))?;

        let mut words = Vec::with_capacity(entries);
        let mut joint_freq = Vec::with_capacity(entries);
        let mut index = HashMap::with_capacity(entries);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let (word, freq) = line
                .split_once('\t')
                .ok_or_else(|| bad(line_no, "expected word\\tfrequency"))?;
            let freq: u64 = freq.parse().map_err(|_| bad(line_no, "bad frequency"))?;
            if index.insert(word.to_string(), words.len() as u32).is_some() {
                return Err(bad(line_no, &format!("duplicate word {word:?}")));
            }
            words.push(word.to_string());
            joint_freq.push(freq);
        }
        if words.len() != entries {
            return Err(bad(
                1,
                &format!("header claims {entries} entries, found {}", words.len()),
            ));
        }
        Ok(Vocabulary {
            words,
            joint_freq,
            index,
            n_configured: n,
            forced: BTreeSet::new(),
        })
    }
}

/// Builds the vocabulary: top-N by frequency (ties broken lexicographically
/// ascending), then any forced words not already present appended in the same
/// order. Forced words absent from `freq` get count 0.
pub fn build_vocab(
    freq: &FrequencyTable,
    n: usize,
    forced: &BTreeSet<String>,
) -> Result<Vocabulary> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "vocabulary size N must be >= 1".into(),
        ));
    }
    if freq.is_empty() && forced.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot build a vocabulary from an empty frequency table with no forced words".into(),
        ));
    }

    let mut ranked: Vec<(&str, u64)> = freq.iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(n);

    let mut words: Vec<String> = ranked.iter().map(|(w, _)| w.to_string()).collect();
    let mut joint_freq: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();

    // `forced` is a set, so the appended words are unique among themselves;
    // only words already ranked into the top-N need filtering out.
    let present: BTreeSet<&str> = words.iter().map(|w| w.as_str()).collect();
    let mut appended: Vec<(String, u64)> = forced
        .iter()
        .filter(|w| !present.contains(w.as_str()))
        .map(|w| (w.clone(), freq.get(w)))
        .collect();
    drop(present);
    appended.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (w, c) in appended {
        words.push(w);
        joint_freq.push(c);
    }

    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        words,
        joint_freq,
        index,
        n_configured: n,
        forced: forced.clone(),
    })
}

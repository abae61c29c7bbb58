//! Seeded synthetic corpus generation.
//!
//! Benchmarks and end-to-end tests need corpora with two properties real
//! downloads cannot guarantee: full determinism and a known context structure.
//! The generator builds a vocabulary of pronounceable pseudo-words that pass
//! the default preprocessing pipeline unchanged, assigns each word a private
//! set of companion words, and emits documents as chains that keep words close
//! to their companions. Every word therefore has a recognizable context
//! signature, which is exactly the regularity the ranking methods exploit.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Pipeline, PipelineConfig, RawDocument};
use crate::error::{Error, Result};

/// Generator settings. Document text is produced by sampling a carrier word
/// from a Zipf-weighted vocabulary and then, with `chain_probability`,
/// stepping to one of the previous word's companions instead of drawing a
/// fresh carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_words: usize,
    pub n_docs: usize,
    /// Inclusive bounds on tokens per document.
    pub doc_len: (usize, usize),
    /// Exponent of the carrier frequency law; 0 makes all words equally
    /// likely, larger values concentrate mass on early words.
    pub zipf_exponent: f64,
    pub companions_per_word: usize,
    pub chain_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_words: 500,
            n_docs: 200,
            doc_len: (30, 80),
            zipf_exponent: 1.0,
            companions_per_word: 3,
            chain_probability: 0.6,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_words < self.companions_per_word + 1 {
            return Err(Error::InvalidParameter(format!(
                "n_words = {} cannot support {} companions per word",
                self.n_words, self.companions_per_word
            )));
        }
        if self.n_docs == 0 {
            return Err(Error::InvalidParameter("n_docs must be >= 1".into()));
        }
        let (lo, hi) = self.doc_len;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "doc_len bounds ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "zipf_exponent must be a finite non-negative number, got {}",
                self.zipf_exponent
            )));
        }
        if !(self.chain_probability >= 0.0 && self.chain_probability < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "chain_probability must lie in [0, 1), got {}",
                self.chain_probability
            )));
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Enumerates consonant-vowel pseudo-words ("badab", "bagop", ...) in a fixed
/// order and keeps those the default pipeline passes through unchanged, so
/// generated text survives lowercasing, stopword removal, and stemming with
/// its vocabulary intact.
pub fn pseudo_words(n: usize) -> Result<Vec<String>> {
    let pipeline = default_pipeline()?;
    let mut out = Vec::with_capacity(n);
    for c1 in CONSONANTS {
        for v1 in VOWELS {
            for c2 in CONSONANTS {
                for v2 in VOWELS {
                    for c3 in CONSONANTS {
                        if out.len() == n {
                            return Ok(out);
                        }
                        let w =
                            String::from_utf8(vec![*c1, *v1, *c2, *v2, *c3]).expect("ascii word");
                        if pipeline.run(&w) == [w.as_str()] {
                            out.push(w);
                        }
                    }
                }
            }
        }
    }
    Err(Error::InvalidParameter(format!(
        "only {} pipeline-stable pseudo-words exist, {n} requested",
        out.len()
    )))
}

fn default_pipeline() -> Result<Pipeline> {
    PipelineConfig::default().compile()
}

/// Generates raw documents. Identical configs produce identical output.
pub fn generate(config: &SynthConfig) -> Result<Vec<RawDocument>> {
    config.validate()?;
    let n = config.n_words;
    let words = pseudo_words(n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let companions: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut set = BTreeSet::new();
            while set.len() < config.companions_per_word {
                let j = rng.random_range(0..n);
                if j != i {
                    set.insert(j);
                }
            }
            set.into_iter().collect()
        })
        .collect();

    let weights: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((i + 1) as f64).powf(config.zipf_exponent))
        .collect();
    let carrier = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidParameter(format!("carrier weights rejected: {e}")))?;

    let (lo, hi) = config.doc_len;
    let mut docs = Vec::with_capacity(config.n_docs);
    for doc_i in 0..config.n_docs {
        let len = rng.random_range(lo..=hi);
        let mut prev: Option<usize> = None;
        let mut text = String::new();
        let mut sentence_left = rng.random_range(6..=14usize);
        for t in 0..len {
            let next = match prev {
                Some(p) if rng.random_bool(config.chain_probability) => {
                    companions[p][rng.random_range(0..companions[p].len())]
                }
                _ => carrier.sample(&mut rng),
            };
            if t > 0 {
                if sentence_left == 0 {
                    text.push_str(". ");
                    sentence_left = rng.random_range(6..=14usize);
                } else {
                    text.push(' ');
                }
            }
            text.push_str(&words[next]);
            sentence_left = sentence_left.saturating_sub(1);
            prev = Some(next);
        }
        text.push('.');
        docs.push(RawDocument {
            id: format!("doc-{doc_i:06}"),
            text,
        });
    }
    Ok(docs)
}

/// Generates and preprocesses in one step with the default pipeline.
pub fn generate_corpus(config: &SynthConfig, source: &str) -> Result<Corpus> {
    let raw = generate(config)?;
    let pipeline = default_pipeline()?;
    Ok(Corpus::from_raw(&raw, &pipeline, source))
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    id: &'a str,
    text: &'a str,
}

/// Writes raw documents in the jsonl layout the corpus loader reads.
pub fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(&JsonlRecord {
            id: &doc.id,
            text: &doc.text,
        })
        .map_err(|e| Error::InvalidParameter(format!("jsonl serialization failed: {e}")))?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

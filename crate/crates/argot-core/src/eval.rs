//! Evaluation harnesses.
//!
//! Two environments. The clean-clean simulation splits one clean corpus in
//! half, rewrites a sample of words in the first half to dash-prefixed
//! pseudo-dark forms ("strawberry" becomes "_strawberry"), and checks how
//! highly each method ranks the known original; quality is summarized as mean
//! reciprocal rank over all queried words and over the dashed ones. The
//! dark-clean report runs candidate detection against a real corpus pair and
//! emits a table of flagged words with their top clean counterparts, leaving
//! the judgment of meaning to a human reader.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{
    build_context_counts, detect_candidates, rank_by_kl, smooth, ContextDistribution, CorpusSide,
    RankedMapping, Smoothing,
};
use crate::corpus::Corpus;
use crate::embedding::{
    build_neighbor_table, factorize, ppmi_transform, rank_by_ccla, CclaScorer, CoocMatrix,
};
use crate::error::{Error, Result};
use crate::vocab::{build_vocab, count_frequencies, FrequencyTable, Vocabulary};

/// Model hyperparameters shared by every pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Joint vocabulary size N.
    pub vocab_size: usize,
    /// Context and co-occurrence window k, in tokens to each side.
    pub window: u32,
    pub smoothing: Smoothing,
    /// Embedding rank d.
    pub dimensions: u32,
    /// Neighborhood size for the cross-context comparison.
    pub neighborhood: usize,
    /// Occurrence floor a clean-side word must meet to be a candidate.
    pub min_clean_freq: u64,
    /// Seed for the randomized factorization.
    pub svd_seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            vocab_size: 10_000,
            window: 10,
            smoothing: Smoothing::default(),
            dimensions: 300,
            neighborhood: 100,
            min_clean_freq: 5,
            svd_seed: 42,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::InvalidParameter("vocab_size must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        self.smoothing.validate()?;
        if self.dimensions == 0 {
            return Err(Error::InvalidParameter("dimensions must be >= 1".into()));
        }
        if self.neighborhood == 0 {
            return Err(Error::InvalidParameter("neighborhood must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ranking method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kl,
    Ccla,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Kl => "kl",
            Method::Ccla => "ccla",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "kl" => Ok(Method::Kl),
            "ccla" => Ok(Method::Ccla),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?}, expected \"kl\" or \"ccla\""
            ))),
        }
    }
}

/// Clean-clean simulation settings. Everything here is echoed verbatim into
/// the report so a run can be reproduced from its output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    /// How many words to rewrite into pseudo-dark forms.
    pub n_dark_words: usize,
    /// Occurrence floor for selecting words and for admitting queries.
    pub min_word_freq: u64,
    /// Share of documents assigned to the pseudo-dark split.
    pub split_fraction: f64,
    pub methods: Vec<Method>,
    /// Duplicates the corpus into both sides instead of splitting it. The
    /// pseudo-dark side then has exactly the clean side's contexts, which
    /// pins down the expected rankings; this exists for validation runs.
    pub mirror: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 0,
            n_dark_words: 500,
            min_word_freq: 5,
            split_fraction: 0.5,
            methods: vec![Method::Kl, Method::Ccla],
            mirror: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split_fraction must lie strictly between 0 and 1, got {}",
                self.split_fraction
            )));
        }
        if self.n_dark_words == 0 {
            return Err(Error::InvalidParameter("n_dark_words must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one method must be selected".into(),
            ));
        }
        let unique: BTreeSet<Method> = self.methods.iter().copied().collect();
        if unique.len() != self.methods.len() {
            return Err(Error::InvalidParameter("methods must not repeat".into()));
        }
        Ok(())
    }
}

/// Assigns each document to split 1 with probability `fraction` via a seeded
/// shuffle: the first round(fraction * n) positions of a shuffled permutation
/// go to split 1. Both splits keep the original relative document order.
pub fn split_corpus(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let n = corpus.docs.len();
    let m = (fraction * n as f64).round() as usize;
    if n == 0 || m == 0 || m == n {
        return Err(Error::EmptySplit { fraction, docs: n });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut first: Vec<usize> = order[..m].to_vec();
    let mut second: Vec<usize> = order[m..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    let pick = |idx: &[usize], tag: &str| {
        corpus.derived(
            idx.iter().map(|i| corpus.docs[*i].clone()).collect(),
            format!("{}#{tag}", corpus.provenance.source),
        )
    };
    Ok((pick(&first, "split1"), pick(&second, "split2")))
}

/// Samples `n` words without replacement from those meeting the frequency
/// floor (dash-prefixed forms are never eligible) and rewrites every
/// occurrence of a selected word to its "_word" form. No other token changes.
pub fn inject_dark_words(
    split1: &Corpus,
    vocab_freq: &FrequencyTable,
    n: usize,
    min_freq: u64,
    seed: u64,
) -> Result<(Corpus, BTreeSet<String>)> {
    let mut eligible: Vec<&str> = vocab_freq
        .iter()
        .filter(|(w, c)| *c >= min_freq && !w.starts_with('_'))
        .map(|(w, _)| w)
        .collect();
    if eligible.len() < n {
        return Err(Error::InsufficientEligible {
            needed: n,
            available: eligible.len(),
            min_freq,
        });
    }
    // Hash-map iteration order must not leak into the sample.
    eligible.sort_unstable();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let selected: BTreeSet<String> = index::sample(&mut rng, eligible.len(), n)
        .iter()
        .map(|i| eligible[i].to_string())
        .collect();
    let docs = split1
        .docs
        .par_iter()
        .map(|d| {
            let mut doc = d.clone();
            for t in &mut doc.tokens {
                if selected.contains(t.as_str()) {
                    *t = format!("_{t}");
                }
            }
            doc
        })
        .collect();
    let injected = split1.derived(docs, format!("{}#injected", split1.provenance.source));
    Ok((injected, selected))
}

/// 1-based rank of `target` in the candidate list, if present.
pub fn target_rank(ranked: &RankedMapping, target: &str) -> Option<usize> {
    ranked
        .candidates
        .iter()
        .position(|(w, _)| w == target)
        .map(|i| i + 1)
}

/// 1/rank of `target`, or 0 when the target is absent from the list.
pub fn reciprocal_rank(ranked: &RankedMapping, target: &str) -> f64 {
    target_rank(ranked, target).map_or(0.0, |r| 1.0 / r as f64)
}

/// Arithmetic mean of per-query reciprocal ranks, in the order given.
pub fn mean_reciprocal_rank(rrs: &[f64]) -> Result<f64> {
    if rrs.is_empty() {
        return Err(Error::InvalidParameter(
            "mean reciprocal rank of an empty query set is undefined".into(),
        ));
    }
    Ok(rrs.iter().sum::<f64>() / rrs.len() as f64)
}

/// One candidate in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    /// The ranking score as stored: KL divergence in nats, or negated phi
    /// for the cross-context method. Smaller is better for both.
    pub score: f64,
}

/// Outcome of a single simulated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: String,
    pub target: String,
    /// 1-based rank of the target, absent when it was not a candidate.
    pub rank: Option<usize>,
    pub reciprocal_rank: f64,
    /// Top five candidates, best first.
    pub top: Vec<ScoredWord>,
}

/// Per-method aggregate of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Mean reciprocal rank over every queried word.
    pub mrr_all: f64,
    /// Mean reciprocal rank over the dash-prefixed queries only.
    pub mrr_dark: f64,
    /// Size of the candidate list each query ranks against.
    pub candidate_count: usize,
    /// One record per query, ordered by query word.
    pub queries: Vec<QueryRecord>,
}

/// Full simulation output: config echo plus per-method results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub params: ModelParams,
    pub methods: Vec<MethodResult>,
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidParameter(format!("report serialization failed: {e}")))
    }

    /// One line per method: method, MRR over all queries, MRR over dashed.
    pub fn tsv_summary(&self) -> String {
        let mut out = String::from("method\tmrr_all\tmrr_dark\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\n",
                m.method, m.mrr_all, m.mrr_dark
            ));
        }
        out
    }

    pub fn method(&self, which: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == which)
    }
}

/// Settings for the dark-clean detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// A word is reported when its own surface form ranks strictly below
    /// this, or not at all.
    pub self_rank_threshold: usize,
    pub max_results: usize,
    /// How many clean candidates to list per reported word.
    pub top_m: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            self_rank_threshold: 10,
            max_results: 100,
            top_m: 3,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_m == 0 {
            return Err(Error::InvalidParameter("top_m must be >= 1".into()));
        }
        Ok(())
    }
}

/// One flagged dark-side word with its best clean counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRow {
    pub dark_word: String,
    /// Up to top_m clean candidates, best first.
    pub clean: Vec<ScoredWord>,
    pub self_rank: Option<usize>,
}

/// Detection report; rows keep the detection order (words missing their own
/// surface form first, then by descending self rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub top_m: usize,
    pub rows: Vec<MappingRow>,
}

impl MappingReport {
    /// Tab-separated table with columns dark_word, clean_word_1..m,
    /// score_1..m, self_rank. Missing values are empty fields.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dark_word");
        for i in 1..=self.top_m {
            out.push_str(&format!("\tclean_word_{i}"));
        }
        for i in 1..=self.top_m {
            out.push_str(&format!("\tscore_{i}"));
        }
        out.push_str("\tself_rank\n");
        for row in &self.rows {
            out.push_str(&row.dark_word);
            for i in 0..self.top_m {
                out.push('\t');
                if let Some(c) = row.clean.get(i) {
                    out.push_str(&c.word);
                }
            }
            for i in 0..self.top_m {
                out.push('\t');
                if let Some(c) = row.clean.get(i) {
                    out.push_str(&format!("{:.6}", c.score));
                }
            }
            out.push('\t');
            if let Some(r) = row.self_rank {
                out.push_str(&r.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn query_record(query: &str, ranked: Option<&RankedMapping>) -> (QueryRecord, usize) {
    let target = query.strip_prefix('_').unwrap_or(query).to_string();
    match ranked {
        Some(r) => {
            let rank = target_rank(r, &target);
            let record = QueryRecord {
                query: query.to_string(),
                target,
                rank,
                reciprocal_rank: reciprocal_rank(r, query.strip_prefix('_').unwrap_or(query)),
                top: r
                    .candidates
                    .iter()
                    .take(5)
                    .map(|(w, s)| ScoredWord {
                        word: w.clone(),
                        score: *s,
                    })
                    .collect(),
            };
            (record, r.candidates.len())
        }
        None => (
            QueryRecord {
                query: query.to_string(),
                target,
                rank: None,
                reciprocal_rank: 0.0,
                top: Vec::new(),
            },
            0,
        ),
    }
}

fn aggregate(
    method: Method,
    records: Vec<QueryRecord>,
    candidate_count: usize,
) -> Result<MethodResult> {
    let all: Vec<f64> = records.iter().map(|r| r.reciprocal_rank).collect();
    let dark: Vec<f64> = records
        .iter()
        .filter(|r| r.query.starts_with('_'))
        .map(|r| r.reciprocal_rank)
        .collect();
    if dark.is_empty() {
        return Err(Error::InvalidParameter(
            "no dash-prefixed query passed the frequency floor".into(),
        )
        .at_stage("aggregate"));
    }
    let mrr_all = mean_reciprocal_rank(&all).map_err(|e| e.at_stage("aggregate"))?;
    let mrr_dark = mean_reciprocal_rank(&dark).map_err(|e| e.at_stage("aggregate"))?;
    Ok(MethodResult {
        method,
        mrr_all,
        mrr_dark,
        candidate_count,
        queries: records,
    })
}

/// Runs the full clean-clean protocol: split (or mirror), inject, build the
/// joint vocabulary with every selected word and its dashed form forced in,
/// build per-method models with the injected half as the pseudo-dark side,
/// then rank one query per vocabulary word passing the dark-side frequency
/// floor. The target of a dashed query is its undashed original; every other
/// query targets itself.
pub fn run_clean_clean(
    config: &SimulationConfig,
    params: &ModelParams,
    clean: &Corpus,
) -> Result<SimulationReport> {
    config.validate()?;
    params.validate()?;

    let (half1, half2) = if config.mirror {
        let dup = |tag: &str| {
            clean.derived(
                clean.docs.clone(),
                format!("{}#{tag}", clean.provenance.source),
            )
        };
        (dup("mirror1"), dup("mirror2"))
    } else {
        split_corpus(clean, config.split_fraction, config.seed).map_err(|e| e.at_stage("split"))?
    };

    let freq1 = count_frequencies(&[&half1]).map_err(|e| e.at_stage("inject"))?;
    let (dark, selected) = inject_dark_words(
        &half1,
        &freq1,
        config.n_dark_words,
        config.min_word_freq,
        config.seed,
    )
    .map_err(|e| e.at_stage("inject"))?;

    let joint = count_frequencies(&[&dark, &half2]).map_err(|e| e.at_stage("vocabulary"))?;
    let mut forced = BTreeSet::new();
    for w in &selected {
        forced.insert(w.clone());
        forced.insert(format!("_{w}"));
    }
    let vocab =
        build_vocab(&joint, params.vocab_size, &forced).map_err(|e| e.at_stage("vocabulary"))?;

    let dark_counts = build_context_counts(&dark, &vocab, params.window)
        .map_err(|e| e.at_stage("context-model"))?;
    let clean_counts = build_context_counts(&half2, &vocab, params.window)
        .map_err(|e| e.at_stage("context-model"))?;
    let v = vocab.len() as u32;
    let clean_occ: Vec<u64> = (0..v).map(|w| clean_counts.occurrences(w)).collect();

    let mut queries: Vec<String> = (0..v)
        .filter(|w| dark_counts.occurrences(*w) >= config.min_word_freq)
        .map(|w| vocab.word(w).to_string())
        .collect();
    queries.sort_unstable();

    let mut methods = Vec::new();
    for method in &config.methods {
        let result = match method {
            Method::Kl => {
                let dark_dist = smooth(&dark_counts, params.smoothing, &vocab, CorpusSide::Dark)
                    .map_err(|e| e.at_stage("context-model"))?;
                let clean_dist = smooth(&clean_counts, params.smoothing, &vocab, CorpusSide::Clean)
                    .map_err(|e| e.at_stage("context-model"))?;
                let candidate_count = clean_occ
                    .iter()
                    .filter(|c| **c >= params.min_clean_freq)
                    .count();
                let records: Vec<QueryRecord> = queries
                    .par_iter()
                    .map(|q| {
                        rank_by_kl(q, &dark_dist, &clean_dist, &vocab, params.min_clean_freq)
                            .map(|r| query_record(q, Some(&r)).0)
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| e.at_stage("query"))?;
                aggregate(Method::Kl, records, candidate_count)?
            }
            Method::Ccla => {
                let build_side = |counts: &crate::context::ContextCounts, side: CorpusSide| {
                    let cooc = CoocMatrix::from_counts(counts.clone());
                    let ppmi = ppmi_transform(&cooc)?;
                    let emb = factorize(
                        &ppmi,
                        params.dimensions,
                        params.svd_seed,
                        side,
                        params.window,
                        &vocab,
                    )?;
                    build_neighbor_table(&emb, params.neighborhood, &vocab)
                };
                let dark_table = build_side(&dark_counts, CorpusSide::Dark)
                    .map_err(|e| e.at_stage("embedding"))?;
                let clean_table = build_side(&clean_counts, CorpusSide::Clean)
                    .map_err(|e| e.at_stage("embedding"))?;
                let scorer = CclaScorer::new(&dark_table, &clean_table, &vocab)
                    .map_err(|e| e.at_stage("embedding"))?;
                let candidate_count = (0..v)
                    .filter(|w| {
                        clean_occ[*w as usize] >= params.min_clean_freq
                            && clean_table.list(*w).is_embeddable()
                    })
                    .count();
                let records: Vec<QueryRecord> = queries
                    .par_iter()
                    .map(|q| {
                        match rank_by_ccla(q, &scorer, &clean_occ, params.min_clean_freq) {
                            Ok(r) => Ok(query_record(q, Some(&r)).0),
                            // A query with no embedding cannot be ranked;
                            // score it like an absent target instead of
                            // aborting the whole run.
                            Err(Error::NotEmbeddable(_)) => Ok(query_record(q, None).0),
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| e.at_stage("query"))?;
                aggregate(Method::Ccla, records, candidate_count)?
            }
        };
        methods.push(result);
    }

    Ok(SimulationReport {
        config: config.clone(),
        params: params.clone(),
        methods,
    })
}

/// Runs detection over a real dark/clean corpus pair and expands each flagged
/// word into a report row with its top clean candidates under KL ranking.
pub fn run_dark_clean(
    dark: &Corpus,
    clean: &Corpus,
    params: &ModelParams,
    detect: &DetectConfig,
) -> Result<MappingReport> {
    params.validate()?;
    detect.validate()?;
    if dark.docs.is_empty() || clean.docs.is_empty() {
        return Err(Error::InvalidParameter(
            "both corpora must contain at least one document".into(),
        ));
    }

    let joint = count_frequencies(&[dark, clean]).map_err(|e| e.at_stage("vocabulary"))?;
    let vocab = build_vocab(&joint, params.vocab_size, &BTreeSet::new())
        .map_err(|e| e.at_stage("vocabulary"))?;

    let dark_counts = build_context_counts(dark, &vocab, params.window)
        .map_err(|e| e.at_stage("context-model"))?;
    let clean_counts = build_context_counts(clean, &vocab, params.window)
        .map_err(|e| e.at_stage("context-model"))?;
    let dark_dist = smooth(&dark_counts, params.smoothing, &vocab, CorpusSide::Dark)
        .map_err(|e| e.at_stage("context-model"))?;
    let clean_dist = smooth(&clean_counts, params.smoothing, &vocab, CorpusSide::Clean)
        .map_err(|e| e.at_stage("context-model"))?;

    mapping_from_models(&dark_dist, &clean_dist, &vocab, params, detect)
}

/// The detection step alone, for callers that already hold built models.
pub fn mapping_from_models(
    dark_dist: &ContextDistribution,
    clean_dist: &ContextDistribution,
    vocab: &Vocabulary,
    params: &ModelParams,
    detect: &DetectConfig,
) -> Result<MappingReport> {
    detect.validate()?;
    let hits = detect_candidates(
        dark_dist,
        clean_dist,
        vocab,
        params.min_clean_freq,
        detect.self_rank_threshold,
        detect.max_results,
    )
    .map_err(|e| e.at_stage("detect"))?;

    let rows: Vec<MappingRow> = hits
        .par_iter()
        .map(|hit| {
            let ranked = rank_by_kl(
                &hit.word,
                dark_dist,
                clean_dist,
                vocab,
                params.min_clean_freq,
            )?;
            Ok(MappingRow {
                dark_word: hit.word.clone(),
                clean: ranked
                    .candidates
                    .iter()
                    .take(detect.top_m)
                    .map(|(w, s)| ScoredWord {
                        word: w.clone(),
                        score: *s,
                    })
                    .collect(),
                self_rank: hit.self_rank,
            })
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.at_stage("detect"))?;

    Ok(MappingReport {
        top_m: detect.top_m,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Provenance};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn corpus_of(tokens_per_doc: &[Vec<&str>]) -> Corpus {
        Corpus {
            docs: tokens_per_doc
                .iter()
                .enumerate()
                .map(|(i, toks)| Document {
                    id: format!("d{i:03}"),
                    tokens: toks.iter().map(|t| t.to_string()).collect(),
                })
                .collect(),
            provenance: Provenance {
                source: "test".into(),
                pipeline_fingerprint: "fp".into(),
            },
        }
    }

    fn numbered_corpus(n: usize) -> Corpus {
        let docs: Vec<Vec<&str>> = (0..n).map(|_| vec!["x"]).collect();
        corpus_of(&docs)
    }

    /// Each carrier word appears only next to its two private companions, so
    /// every word has a recognizable context signature.
    fn collocation_corpus(n_words: usize, docs_per_word: usize) -> Corpus {
        let mut docs: Vec<Vec<String>> = Vec::new();
        for i in 0..n_words {
            let w = format!("w{i:02}");
            let p = format!("p{i:02}");
            let q = format!("q{i:02}");
            for _ in 0..docs_per_word {
                docs.push(vec![
                    w.clone(),
                    p.clone(),
                    w.clone(),
                    q.clone(),
                    w.clone(),
                    p.clone(),
                    q.clone(),
                ]);
            }
        }
        let views: Vec<Vec<&str>> = docs
            .iter()
            .map(|d| d.iter().map(|s| s.as_str()).collect())
            .collect();
        corpus_of(&views)
    }

    #[test]
    fn split_is_deterministic_and_conserving() {
        let corpus = numbered_corpus(10);
        let (a1, b1) = split_corpus(&corpus, 0.5, 7).unwrap();
        let (a2, b2) = split_corpus(&corpus, 0.5, 7).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.docs.len() + b1.docs.len(), 10);
        assert_eq!(a1.docs.len(), 5);
        let mut ids: Vec<&str> = a1
            .docs
            .iter()
            .chain(&b1.docs)
            .map(|d| d.id.as_str())
            .collect();
        ids.sort_unstable();
        let mut want: Vec<String> = (0..10).map(|i| format!("d{i:03}")).collect();
        want.sort_unstable();
        assert_eq!(ids, want.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }

    #[test]
    fn split_preserves_relative_order() {
        let corpus = numbered_corpus(50);
        let (a, b) = split_corpus(&corpus, 0.3, 3).unwrap();
        for side in [&a, &b] {
            for pair in side.docs.windows(2) {
                assert!(pair[0].id < pair[1].id);
            }
        }
    }

    #[test]
    fn split_seeds_differ() {
        let corpus = numbered_corpus(100);
        let (a1, _) = split_corpus(&corpus, 0.5, 1).unwrap();
        let (a2, _) = split_corpus(&corpus, 0.5, 2).unwrap();
        let ids1: Vec<&str> = a1.docs.iter().map(|d| d.id.as_str()).collect();
        let ids2: Vec<&str> = a2.docs.iter().map(|d| d.id.as_str()).collect();
        assert_ne!(ids1, ids2);
    }

    #[test]
    fn split_two_docs_gives_one_each() {
        let corpus = numbered_corpus(2);
        let (a, b) = split_corpus(&corpus, 0.5, 0).unwrap();
        assert_eq!((a.docs.len(), b.docs.len()), (1, 1));
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let corpus = numbered_corpus(3);
        assert!(matches!(
            split_corpus(&corpus, 0.01, 0),
            Err(Error::EmptySplit { .. })
        ));
        assert!(matches!(
            split_corpus(&corpus, 0.99, 0),
            Err(Error::EmptySplit { .. })
        ));
        assert!(split_corpus(&corpus, 0.0, 0).is_err());
        assert!(split_corpus(&corpus, 1.0, 0).is_err());
        assert!(matches!(
            split_corpus(&numbered_corpus(0), 0.5, 0),
            Err(Error::EmptySplit { .. })
        ));
    }

    #[test]
    fn injection_rewrites_only_selected_words() {
        let corpus = corpus_of(&[vec!["john", "loves", "strawberry", "milkshakes"]]);
        // Only "strawberry" meets the floor, so the sample must pick it.
        let mut counts = std::collections::HashMap::new();
        counts.insert("john".to_string(), 1);
        counts.insert("loves".to_string(), 1);
        counts.insert("strawberry".to_string(), 5);
        counts.insert("milkshakes".to_string(), 1);
        let freq = FrequencyTable::from_counts(counts);
        let (injected, selected) = inject_dark_words(&corpus, &freq, 1, 5, 123).unwrap();
        assert_eq!(selected.iter().collect::<Vec<_>>(), ["strawberry"]);
        assert_eq!(
            injected.docs[0].tokens,
            ["john", "loves", "_strawberry", "milkshakes"]
        );
    }

    #[test]
    fn injection_with_zero_words_changes_nothing() {
        let corpus = corpus_of(&[vec!["a", "b"], vec!["c"]]);
        let freq = count_frequencies(&[&corpus]).unwrap();
        let (injected, selected) = inject_dark_words(&corpus, &freq, 0, 1, 9).unwrap();
        assert!(selected.is_empty());
        assert_eq!(injected.docs, corpus.docs);
    }

    #[test]
    fn documents_without_selected_words_are_untouched() {
        let corpus = corpus_of(&[vec!["aa", "aa", "aa"], vec!["bb", "cc"]]);
        let freq = count_frequencies(&[&corpus]).unwrap();
        let (injected, selected) = inject_dark_words(&corpus, &freq, 1, 3, 0).unwrap();
        assert_eq!(selected.iter().collect::<Vec<_>>(), ["aa"]);
        assert_eq!(injected.docs[1], corpus.docs[1]);
        assert_eq!(injected.docs[0].tokens, ["_aa", "_aa", "_aa"]);
    }

    #[test]
    fn insufficient_eligible_words_error_names_counts() {
        let corpus = corpus_of(&[vec!["a", "a", "b"]]);
        let freq = count_frequencies(&[&corpus]).unwrap();
        match inject_dark_words(&corpus, &freq, 3, 2, 0) {
            Err(Error::InsufficientEligible {
                needed,
                available,
                min_freq,
            }) => {
                assert_eq!((needed, available, min_freq), (3, 1, 2));
            }
            other => panic!("expected InsufficientEligible, got {other:?}"),
        }
    }

    #[test]
    fn dashed_words_are_never_eligible() {
        let corpus = corpus_of(&[vec!["_zz", "_zz", "_zz", "aa", "aa", "aa"]]);
        let freq = count_frequencies(&[&corpus]).unwrap();
        let (_, selected) = inject_dark_words(&corpus, &freq, 1, 3, 4).unwrap();
        assert_eq!(selected.iter().collect::<Vec<_>>(), ["aa"]);
    }

    proptest! {
        #[test]
        fn injection_preserves_token_count_and_locality(
            docs in proptest::collection::vec(
                proptest::collection::vec(0u8..8, 1..20),
                1..12,
            ),
            n in 0usize..4,
            seed in 0u64..64,
        ) {
            let named: Vec<Vec<String>> = docs
                .iter()
                .map(|d| d.iter().map(|t| format!("t{t}")).collect())
                .collect();
            let views: Vec<Vec<&str>> = named
                .iter()
                .map(|d| d.iter().map(|s| s.as_str()).collect())
                .collect();
            let corpus = corpus_of(&views);
            let freq = count_frequencies(&[&corpus]).unwrap();
            prop_assume!(freq.len() >= n);
            let (injected, selected) = inject_dark_words(&corpus, &freq, n, 1, seed).unwrap();
            prop_assert_eq!(selected.len(), n);
            prop_assert_eq!(injected.token_count(), corpus.token_count());
            for (before, after) in corpus.docs.iter().zip(&injected.docs) {
                for (t0, t1) in before.tokens.iter().zip(&after.tokens) {
                    if selected.contains(t0.as_str()) {
                        prop_assert_eq!(t1.clone(), format!("_{t0}"));
                    } else {
                        prop_assert_eq!(t1, t0);
                    }
                }
            }
        }
    }

    fn mapping(words: &[(&str, f64)]) -> RankedMapping {
        RankedMapping {
            query: "q".into(),
            candidates: words.iter().map(|(w, s)| (w.to_string(), *s)).collect(),
            self_rank: None,
        }
    }

    #[test]
    fn reciprocal_rank_values() {
        let m = mapping(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4)]);
        assert_eq!(reciprocal_rank(&m, "a"), 1.0);
        assert_eq!(reciprocal_rank(&m, "d"), 0.25);
        assert_eq!(reciprocal_rank(&m, "zz"), 0.0);
        assert_eq!(target_rank(&m, "b"), Some(2));
        assert_eq!(target_rank(&m, "zz"), None);
    }

    #[test]
    fn mrr_matches_hand_computation() {
        let rrs = [1.0, 0.5, 0.25];
        let mrr = mean_reciprocal_rank(&rrs).unwrap();
        assert_eq!(mrr, (1.0 + 0.5 + 0.25) / 3.0);
        assert!((mrr - 0.583333).abs() < 5e-7);
        assert_eq!(mean_reciprocal_rank(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_reciprocal_rank(&[0.1]).unwrap(), 0.1);
        assert!(mean_reciprocal_rank(&[]).is_err());
    }

    #[test]
    fn mrr_strictly_decreases_when_a_rank_worsens() {
        let base = [1.0, 0.5, 1.0 / 3.0];
        let worse = [1.0, 0.25, 1.0 / 3.0];
        assert!(mean_reciprocal_rank(&worse).unwrap() < mean_reciprocal_rank(&base).unwrap());
    }

    fn small_sim_config(methods: Vec<Method>, mirror: bool) -> SimulationConfig {
        SimulationConfig {
            seed: 11,
            n_dark_words: 3,
            min_word_freq: 3,
            split_fraction: 0.5,
            methods,
            mirror,
        }
    }

    fn small_params() -> ModelParams {
        ModelParams {
            vocab_size: 60,
            window: 2,
            smoothing: Smoothing::Laplace { alpha: 1.0 },
            dimensions: 8,
            neighborhood: 10,
            min_clean_freq: 1,
            svd_seed: 5,
        }
    }

    #[test]
    fn mirror_simulation_identifies_dashed_words() {
        let corpus = collocation_corpus(12, 4);
        let config = small_sim_config(vec![Method::Kl], true);
        let report = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        let kl = report.method(Method::Kl).unwrap();
        assert!(kl.mrr_dark >= 0.95, "mirror dashed MRR = {}", kl.mrr_dark);
        // Every dashed query should resolve to its own undashed form.
        for r in kl.queries.iter().filter(|r| r.query.starts_with('_')) {
            assert_eq!(
                r.top.first().map(|c| c.word.as_str()),
                Some(r.target.as_str())
            );
        }
    }

    #[test]
    fn aggregates_equal_mean_of_records_exactly() {
        let corpus = collocation_corpus(10, 4);
        let config = small_sim_config(vec![Method::Kl, Method::Ccla], false);
        let report = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        for m in &report.methods {
            let all: Vec<f64> = m.queries.iter().map(|r| r.reciprocal_rank).collect();
            let dark: Vec<f64> = m
                .queries
                .iter()
                .filter(|r| r.query.starts_with('_'))
                .map(|r| r.reciprocal_rank)
                .collect();
            assert_eq!(m.mrr_all, mean_reciprocal_rank(&all).unwrap());
            assert_eq!(m.mrr_dark, mean_reciprocal_rank(&dark).unwrap());
            assert!(m.mrr_all >= 0.0 && m.mrr_all <= 1.0);
            assert!(m.mrr_dark >= 0.0 && m.mrr_dark <= 1.0);
            assert!(!dark.is_empty());
            // Queries are listed in sorted order and scores in each top
            // list ascend.
            for pair in m.queries.windows(2) {
                assert!(pair[0].query < pair[1].query);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let corpus = collocation_corpus(8, 4);
        let config = small_sim_config(vec![Method::Kl, Method::Ccla], false);
        let r1 = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        let r2 = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());
        let mut other = config.clone();
        other.seed = 12;
        let r3 = run_clean_clean(&other, &small_params(), &corpus).unwrap();
        assert_ne!(r1.to_json().unwrap(), r3.to_json().unwrap());
    }

    #[test]
    fn summary_tsv_has_one_line_per_method() {
        let corpus = collocation_corpus(8, 4);
        let config = small_sim_config(vec![Method::Kl, Method::Ccla], false);
        let report = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        let tsv = report.tsv_summary();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "method\tmrr_all\tmrr_dark");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("kl\t"));
        assert!(lines[2].starts_with("ccla\t"));
        for line in &lines[1..] {
            assert_eq!(line.split('\t').count(), 3);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = SimulationConfig::default();
        c.split_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.n_dark_words = 0;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.methods = vec![];
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::default();
        c.methods = vec![Method::Kl, Method::Kl];
        assert!(c.validate().is_err());
        let mut p = ModelParams::default();
        p.dimensions = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn stage_tags_surface_in_errors() {
        // A corpus too small to split errors at the split stage.
        let corpus = numbered_corpus(1);
        let config = small_sim_config(vec![Method::Kl], false);
        match run_clean_clean(&config, &small_params(), &corpus) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "split"),
            other => panic!("expected stage error, got {other:?}"),
        }
    }

    #[test]
    fn mirror_detection_report_is_empty() {
        let corpus = collocation_corpus(8, 3);
        let report = run_dark_clean(
            &corpus,
            &corpus,
            &small_params(),
            &DetectConfig {
                self_rank_threshold: 1,
                max_results: 50,
                top_m: 3,
            },
        )
        .unwrap();
        assert!(report.rows.is_empty());
        let tsv = report.to_tsv();
        assert_eq!(
            tsv,
            "dark_word\tclean_word_1\tclean_word_2\tclean_word_3\tscore_1\tscore_2\tscore_3\tself_rank\n"
        );
    }

    #[test]
    fn detection_rows_have_at_most_m_candidates() {
        // Swap the companions of w00 and w01 on the dark side so their
        // contexts shift relative to the clean side.
        let clean = collocation_corpus(6, 3);
        let mut dark = clean.clone();
        for d in &mut dark.docs {
            for t in &mut d.tokens {
                if t == "p00" {
                    *t = "p01".to_string();
                } else if t == "p01" {
                    *t = "p00".to_string();
                }
            }
        }
        let report = run_dark_clean(
            &dark,
            &clean,
            &small_params(),
            &DetectConfig {
                self_rank_threshold: 0,
                max_results: 100,
                top_m: 1,
            },
        )
        .unwrap();
        // Threshold 0 reports every scanned word.
        assert!(!report.rows.is_empty());
        for row in &report.rows {
            assert_eq!(row.clean.len(), 1);
        }
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "dark_word\tclean_word_1\tscore_1\tself_rank");
        for line in &lines[1..] {
            assert_eq!(line.split('\t').count(), 4);
        }
    }

    #[test]
    fn detection_report_row_order_follows_detection() {
        let clean = collocation_corpus(5, 3);
        let report = run_dark_clean(
            &clean,
            &clean,
            &small_params(),
            &DetectConfig {
                self_rank_threshold: 0,
                max_results: 100,
                top_m: 2,
            },
        )
        .unwrap();
        // Mirror with threshold 0: every word has self rank 1, so rows are
        // sorted lexicographically by word.
        let words: Vec<&str> = report.rows.iter().map(|r| r.dark_word.as_str()).collect();
        let mut sorted = words.clone();
        sorted.sort_unstable();
        assert_eq!(words, sorted);
        assert!(report.rows.iter().all(|r| r.self_rank == Some(1)));
    }

    #[test]
    fn method_parsing_round_trips() {
        assert_eq!("kl".parse::<Method>().unwrap(), Method::Kl);
        assert_eq!("ccla".parse::<Method>().unwrap(), Method::Ccla);
        assert!("KL".parse::<Method>().is_err());
        assert_eq!(Method::Kl.to_string(), "kl");
        let json = serde_json::to_string(&Method::Ccla).unwrap();
        assert_eq!(json, "\"ccla\"");
    }

    #[test]
    fn config_toml_round_trip() {
        let config = SimulationConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: SimulationConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
        let params: ModelParams = toml::from_str(
            "vocab_size = 2000\nwindow = 5\n[smoothing]\nmethod = \"dirichlet\"\nmu = 2.5\n",
        )
        .unwrap();
        assert_eq!(params.vocab_size, 2000);
        assert_eq!(params.window, 5);
        assert_eq!(params.smoothing, Smoothing::Dirichlet { mu: 2.5 });
        assert_eq!(params.dimensions, 300);
    }

    #[test]
    fn query_population_respects_floor_and_sides() {
        let corpus = collocation_corpus(9, 4);
        let config = small_sim_config(vec![Method::Kl], true);
        let report = run_clean_clean(&config, &small_params(), &corpus).unwrap();
        let kl = report.method(Method::Kl).unwrap();
        let by_query: BTreeMap<&str, &QueryRecord> =
            kl.queries.iter().map(|r| (r.query.as_str(), r)).collect();
        // Selected words vanish from the dark side, so only their dashed
        // forms are queried; unselected words are queried undashed.
        for r in kl.queries.iter() {
            if let Some(orig) = r.query.strip_prefix('_') {
                assert_eq!(r.target, orig);
                assert!(!by_query.contains_key(orig));
            } else {
                assert_eq!(r.target, r.query);
            }
        }
        assert_eq!(
            kl.queries
                .iter()
                .filter(|r| r.query.starts_with('_'))
                .count(),
            3
        );
    }
}

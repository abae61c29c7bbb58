//! Sliding-window context models: co-occurrence counting, smoothing into
//! per-word context distributions, and KL-divergence candidate ranking.
//!
//! A distribution row is stored sparsely: explicit probabilities for the
//! words actually observed in context, plus a closed-form background for
//! everything else, so `P(v|w) = explicit(v)` when `v` was seen and
//! `scale(w) * bg(v)` otherwise. Laplace smoothing has a uniform background;
//! Dirichlet smoothing uses a collection model estimated over all context
//! counts of the corpus. KL divergence between two rows is summed over the
//! union of the explicit supports with an O(1) correction for the
//! background-only region, so the cost per comparison is proportional to the
//! stored entries rather than the vocabulary size.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

const INDEX_MAGIC: &[u8; 8] = b"ARGOTCX\0";
const INDEX_VERSION: u32 = 1;

/// Which corpus a model was estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSide {
    Dark,
    Clean,
}

impl CorpusSide {
    fn tag(self) -> u8 {
        match self {
            CorpusSide::Dark => 0,
            CorpusSide::Clean => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<CorpusSide> {
        match tag {
            0 => Some(CorpusSide::Dark),
            1 => Some(CorpusSide::Clean),
            _ => None,
        }
    }
}

impl fmt::Display for CorpusSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusSide::Dark => "dark",
            CorpusSide::Clean => "clean",
        })
    }
}

/// Smoothing method for context distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum Smoothing {
    /// Add-alpha: P(v|w) = (c(v,w) + alpha) / (total(w) + alpha * |V|).
    Laplace { alpha: f64 },
    /// Collection-model prior: P(v|w) = (c(v,w) + mu * bg(v)) / (total(w) + mu),
    /// where bg is the add-1 smoothed maximum-likelihood collection model over
    /// all context counts of the corpus.
    Dirichlet { mu: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Laplace { alpha: 1.0 }
    }
}

impl Smoothing {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match self {
            Smoothing::Laplace { alpha } => ("alpha", *alpha),
            Smoothing::Dirichlet { mu } => ("mu", *mu),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothing parameter {name} must be a positive finite number, got {v}"
            )));
        }
        Ok(())
    }

    fn tag(&self) -> (u8, f64) {
        match self {
            Smoothing::Laplace { alpha } => (0, *alpha),
            Smoothing::Dirichlet { mu } => (1, *mu),
        }
    }

    fn from_tag(tag: u8, param: f64) -> Option<Smoothing> {
        match tag {
            0 => Some(Smoothing::Laplace { alpha: param }),
            1 => Some(Smoothing::Dirichlet { mu: param }),
            _ => None,
        }
    }
}

/// Symmetric co-occurrence counts within a +/-k token window, stored in
/// compressed sparse row form over vocabulary ids. Rows are sorted by column
/// id. `occurrences` records how often each vocabulary word appears as a
/// token, which downstream frequency filters need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextCounts {
    k: u32,
    vocab_len: u32,
    offsets: Vec<usize>,
    ids: Vec<u32>,
    counts: Vec<u32>,
    totals: Vec<u64>,
    occurrences: Vec<u64>,
}

impl ContextCounts {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len as usize
    }

    /// Sparse row of word `w`: parallel slices of column ids and counts.
    pub fn row(&self, w: u32) -> (&[u32], &[u32]) {
        let (lo, hi) = (self.offsets[w as usize], self.offsets[w as usize + 1]);
        (&self.ids[lo..hi], &self.counts[lo..hi])
    }

    /// Count of `v` within the window of `w`; zero when never co-observed.
    pub fn count(&self, w: u32, v: u32) -> u32 {
        let (ids, counts) = self.row(w);
        match ids.binary_search(&v) {
            Ok(i) => counts[i],
            Err(_) => 0,
        }
    }

    /// Sum of the sparse entries of row `w`.
    pub fn total(&self, w: u32) -> u64 {
        self.totals[w as usize]
    }

    /// Token occurrences of `w` in the corpus the counts were built from.
    pub fn occurrences(&self, w: u32) -> u64 {
        self.occurrences[w as usize]
    }

    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    /// Builds counts from a dense matrix; occurrence counts default to zero.
    /// Used by in-memory fixtures, not by the corpus scan.
    pub(crate) fn from_dense(k: u32, dense: &[Vec<u32>]) -> ContextCounts {
        let v = dense.len();
        let mut offsets = Vec::with_capacity(v + 1);
        offsets.push(0usize);
        let mut ids = Vec::new();
        let mut counts = Vec::new();
        let mut totals = Vec::with_capacity(v);
        for row in dense {
            assert_eq!(row.len(), v, "dense count matrix must be square");
            let mut total = 0u64;
            for (j, c) in row.iter().enumerate() {
                if *c > 0 {
                    ids.push(j as u32);
                    counts.push(*c);
                    total += *c as u64;
                }
            }
            totals.push(total);
            offsets.push(ids.len());
        }
        ContextCounts {
            k,
            vocab_len: v as u32,
            offsets,
            ids,
            counts,
            totals,
            occurrences: vec![0; v],
        }
    }
}

/// Counts, for every in-vocabulary occurrence, the in-vocabulary tokens at
/// the k positions before and after it, clipped to the document. Windows
/// never span documents; out-of-vocabulary tokens occupy positions but add
/// no counts; other occurrences of the same word inside the window count.
pub fn build_context_counts(corpus: &Corpus, vocab: &Vocabulary, k: u32) -> Result<ContextCounts> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "window radius k must be >= 1".into(),
        ));
    }
    let v = vocab.len();

    // Shard by document; the directed pair keys and the occurrence counters
    // both merge associatively.
    let (mut keys, occurrences) = corpus
        .docs
        .par_iter()
        .fold(
            || (Vec::<u64>::new(), vec![0u64; v]),
            |(mut keys, mut occ), doc| {
                let ids: Vec<Option<u32>> = doc.tokens.iter().map(|t| vocab.id(t)).collect();
                for wi in ids.iter().flatten() {
                    occ[*wi as usize] += 1;
                }
                let n = ids.len();
                for i in 0..n {
                    let Some(wi) = ids[i] else { continue };
                    let hi = (i + k as usize).min(n.saturating_sub(1));
                    for wj in ids[i + 1..=hi].iter().flatten() {
                        keys.push(((wi as u64) << 32) | *wj as u64);
                        keys.push(((*wj as u64) << 32) | wi as u64);
                    }
                }
                (keys, occ)
            },
        )
        .reduce(
            || (Vec::new(), vec![0u64; v]),
            |(mut k1, mut o1), (mut k2, o2)| {
                if k1.len() < k2.len() {
                    std::mem::swap(&mut k1, &mut k2);
                }
                k1.append(&mut k2);
                for (a, b) in o1.iter_mut().zip(&o2) {
                    *a += b;
                }
                (k1, o1)
            },
        );

    keys.par_sort_unstable();

    // Run-length encode the sorted directed keys straight into CSR form;
    // rows and columns come out in ascending id order.
    let mut row_sizes = vec![0usize; v];
    let mut ids = Vec::new();
    let mut counts = Vec::new();
    let mut totals = vec![0u64; v];
    let mut i = 0;
    while i < keys.len() {
        let key = keys[i];
        let mut j = i + 1;
        while j < keys.len() && keys[j] == key {
            j += 1;
        }
        let run = (j - i) as u64;
        let (wi, wj) = ((key >> 32) as u32, key as u32);
        row_sizes[wi as usize] += 1;
        ids.push(wj);
        counts.push(u32::try_from(run).map_err(|_| {
            Error::InvalidParameter(format!(
                "co-occurrence count for a single word pair exceeds u32 ({run})"
            ))
        })?);
        totals[wi as usize] += run;
        i = j;
    }
    drop(keys);

    let mut offsets = Vec::with_capacity(v + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for s in &row_sizes {
        acc += s;
        offsets.push(acc);
    }

    Ok(ContextCounts {
        k,
        vocab_len: v as u32,
        offsets,
        ids,
        counts,
        totals,
        occurrences,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Background {
    Uniform { p: f64, ln_p: f64 },
    Collection { probs: Vec<f64>, ln_probs: Vec<f64> },
}

#[derive(Clone, Copy)]
struct BgView<'a> {
    table: Option<(&'a [f64], &'a [f64])>,
    uni: (f64, f64),
}

impl BgView<'_> {
    #[inline]
    fn at(&self, v: usize) -> (f64, f64) {
        match self.table {
            Some((probs, lns)) => (probs[v], lns[v]),
            None => self.uni,
        }
    }
}

/// Smoothed per-word context distributions over the vocabulary.
///
/// Row `w` assigns `probs` to the explicitly stored ids and
/// `scale(w) * bg(v)` to every other word, which keeps all entries strictly
/// positive and each row summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    side: CorpusSide,
    smoothing: Smoothing,
    k: u32,
    vocab_len: u32,
    vocab_fp: [u8; 32],
    offsets: Vec<usize>,
    ids: Vec<u32>,
    probs: Vec<f64>,
    ln_probs: Vec<f64>,
    scales: Vec<f64>,
    ln_scales: Vec<f64>,
    occurrences: Vec<u64>,
    bg: Background,
}

impl ContextDistribution {
    pub fn side(&self) -> CorpusSide {
        self.side
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len as usize
    }

    pub fn vocab_fingerprint(&self) -> [u8; 32] {
        self.vocab_fp
    }

    /// Token occurrences of `w` in the underlying corpus.
    pub fn occurrences(&self, w: u32) -> u64 {
        self.occurrences[w as usize]
    }

    fn row(&self, w: u32) -> (&[u32], &[f64], &[f64]) {
        let (lo, hi) = (self.offsets[w as usize], self.offsets[w as usize + 1]);
        (
            &self.ids[lo..hi],
            &self.probs[lo..hi],
            &self.ln_probs[lo..hi],
        )
    }

    fn bg_view(&self) -> BgView<'_> {
        match &self.bg {
            Background::Uniform { p, ln_p } => BgView {
                table: None,
                uni: (*p, *ln_p),
            },
            Background::Collection { probs, ln_probs } => BgView {
                table: Some((probs, ln_probs)),
                uni: (0.0, 0.0),
            },
        }
    }

    /// P(v | w), including the background mass for unobserved words.
    pub fn prob(&self, w: u32, v: u32) -> f64 {
        let (ids, probs, _) = self.row(w);
        match ids.binary_search(&v) {
            Ok(i) => probs[i],
            Err(_) => self.scales[w as usize] * self.bg_view().at(v as usize).0,
        }
    }

    /// Materializes row `w` as a dense probability vector. Intended for
    /// small-vocabulary diagnostics and cross-checks; cost is O(|V|).
    pub fn dense_row(&self, w: u32) -> Vec<f64> {
        let bg = self.bg_view();
        let scale = self.scales[w as usize];
        let mut out: Vec<f64> = (0..self.vocab_len as usize)
            .map(|v| scale * bg.at(v).0)
            .collect();
        let (ids, probs, _) = self.row(w);
        for (id, p) in ids.iter().zip(probs) {
            out[*id as usize] = *p;
        }
        out
    }
}

/// Smooths raw context counts into strictly positive distributions.
pub fn smooth(
    counts: &ContextCounts,
    method: Smoothing,
    vocab: &Vocabulary,
    side: CorpusSide,
) -> Result<ContextDistribution> {
    method.validate()?;
    let v = vocab.len();
    if counts.vocab_len() != v {
        return Err(Error::InvalidParameter(format!(
            "context counts cover {} words but the vocabulary has {v}",
            counts.vocab_len()
        )));
    }

    let bg = match method {
        Smoothing::Laplace { .. } => {
            let p = 1.0 / v as f64;
            Background::Uniform { p, ln_p: p.ln() }
        }
        Smoothing::Dirichlet { .. } => {
            let mass: u64 = counts.totals.iter().sum();
            let denom = mass as f64 + v as f64;
            let probs: Vec<f64> = counts
                .totals
                .iter()
                .map(|t| (*t as f64 + 1.0) / denom)
                .collect();
            let ln_probs = probs.iter().map(|p| p.ln()).collect();
            Background::Collection { probs, ln_probs }
        }
    };

    let mut probs = Vec::with_capacity(counts.nnz());
    let mut ln_probs = Vec::with_capacity(counts.nnz());
    let mut scales = Vec::with_capacity(v);
    let mut ln_scales = Vec::with_capacity(v);
    for w in 0..v as u32 {
        let total = counts.total(w) as f64;
        let (ids, cs) = counts.row(w);
        match method {
            Smoothing::Laplace { alpha } => {
                let denom = total + alpha * v as f64;
                for c in cs {
                    let p = (*c as f64 + alpha) / denom;
                    probs.push(p);
                    ln_probs.push(p.ln());
                }
                let scale = alpha * v as f64 / denom;
                scales.push(scale);
                ln_scales.push(scale.ln());
            }
            Smoothing::Dirichlet { mu } => {
                let denom = total + mu;
                let Background::Collection {
                    probs: bg_probs, ..
                } = &bg
                else {
                    unreachable!()
                };
                for (id, c) in ids.iter().zip(cs) {
                    let p = (*c as f64 + mu * bg_probs[*id as usize]) / denom;
                    probs.push(p);
                    ln_probs.push(p.ln());
                }
                let scale = mu / denom;
                scales.push(scale);
                ln_scales.push(scale.ln());
            }
        }
    }

    Ok(ContextDistribution {
        side,
        smoothing: method,
        k: counts.k,
        vocab_len: counts.vocab_len,
        vocab_fp: vocab.fingerprint(),
        offsets: counts.offsets.clone(),
        ids: counts.ids.clone(),
        probs,
        ln_probs,
        scales,
        ln_scales,
        occurrences: counts.occurrences.clone(),
        bg,
    })
}

/// KL divergence in nats between two dense probability vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (pv, qv)) in p.iter().zip(q).enumerate() {
        if *pv <= 0.0 || *qv <= 0.0 {
            return Err(Error::ZeroProbability(i));
        }
        acc += pv * (pv.ln() - qv.ln());
    }
    Ok(acc)
}

/// A prepared pair of aligned models; amortizes the background-vs-background
/// relative entropy so each divergence evaluation stays O(nnz).
pub struct KlPair<'a> {
    p: &'a ContextDistribution,
    q: &'a ContextDistribution,
    t_bg: f64,
}

/// Validates that the models share a vocabulary and precomputes the
/// background term for [`KlPair::divergence`].
pub fn kl_prepare<'a>(
    p: &'a ContextDistribution,
    q: &'a ContextDistribution,
) -> Result<KlPair<'a>> {
    if p.vocab_len != q.vocab_len {
        return Err(Error::LengthMismatch {
            left: p.vocab_len(),
            right: q.vocab_len(),
        });
    }
    if p.vocab_fp != q.vocab_fp {
        return Err(Error::InvalidParameter(
            "context models were built over different vocabularies".into(),
        ));
    }
    let t_bg = match (&p.bg, &q.bg) {
        (Background::Uniform { .. }, Background::Uniform { .. }) => 0.0,
        _ => {
            let bp = p.bg_view();
            let bq = q.bg_view();
            (0..p.vocab_len as usize)
                .map(|v| {
                    let (pb, plb) = bp.at(v);
                    let (_, qlb) = bq.at(v);
                    pb * (plb - qlb)
                })
                .sum()
        }
    };
    Ok(KlPair { p, q, t_bg })
}

impl KlPair<'_> {
    /// KL(P(.|wp) || Q(.|wq)) in nats.
    ///
    /// Terms over the union of the explicit supports are summed directly.
    /// For every v outside both supports, p(v) = sp*bp(v) and q(v) = sq*bq(v),
    /// so the leftover mass contributes
    /// sp * ((1 - B) * (ln sp - ln sq) + (T - t)), where B and t accumulate
    /// bp(v) and bp(v)*(ln bp(v) - ln bq(v)) over the union and T is the
    /// precomputed whole-vocabulary background relative entropy.
    pub fn divergence(&self, wp: u32, wq: u32) -> f64 {
        let (pids, pprobs, plns) = self.p.row(wp);
        let (qids, _, qlns) = self.q.row(wq);
        let sp = self.p.scales[wp as usize];
        let lsp = self.p.ln_scales[wp as usize];
        let lsq = self.q.ln_scales[wq as usize];
        let bgp = self.p.bg_view();
        let bgq = self.q.bg_view();

        let mut acc = 0.0;
        let mut b_union = 0.0;
        let mut t_union = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < pids.len() || j < qids.len() {
            let vi = pids.get(i).copied().unwrap_or(u32::MAX);
            let vj = qids.get(j).copied().unwrap_or(u32::MAX);
            let v = vi.min(vj);
            let (bp, lbp) = bgp.at(v as usize);
            let (_, lbq) = bgq.at(v as usize);
            let (pv, lpv) = if vi == v {
                let r = (pprobs[i], plns[i]);
                i += 1;
                r
            } else {
                (sp * bp, lsp + lbp)
            };
            let lqv = if vj == v {
                let r = qlns[j];
                j += 1;
                r
            } else {
                lsq + lbq
            };
            acc += pv * (lpv - lqv);
            b_union += bp;
            t_union += bp * (lbp - lbq);
        }
        acc + sp * ((1.0 - b_union) * (lsp - lsq) + (self.t_bg - t_union))
    }
}

/// A query word's ordered candidate list.
///
/// Scores are non-decreasing along the list; ties are broken
/// lexicographically. For KL the score is the divergence itself; for CCLA the
/// stored score is the negated similarity so the same ordering invariant
/// holds. `self_rank` is the 1-based position of the query's own surface form
/// when it is among the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedMapping {
    pub query: String,
    pub candidates: Vec<(String, f64)>,
    pub self_rank: Option<usize>,
}

impl RankedMapping {
    /// Top candidate word, the interpreted hidden meaning.
    pub fn top(&self) -> Option<&str> {
        self.candidates.first().map(|(w, _)| w.as_str())
    }
}

pub(crate) fn sort_candidates(cands: &mut [(String, f64)]) {
    cands.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
}

pub(crate) fn find_self_rank(cands: &[(String, f64)], query: &str) -> Option<usize> {
    cands.iter().position(|(w, _)| w == query).map(|i| i + 1)
}

/// Ranks clean-side candidates for `query` by ascending KL divergence from
/// the query's dark-side context distribution. Candidates are the vocabulary
/// words whose clean-corpus occurrence count is at least `min_clean_freq`.
pub fn rank_by_kl(
    query: &str,
    dark: &ContextDistribution,
    clean: &ContextDistribution,
    vocab: &Vocabulary,
    min_clean_freq: u64,
) -> Result<RankedMapping> {
    let _ = vocab.require_id(query)?;
    if vocab.len() != dark.vocab_len() {
        return Err(Error::LengthMismatch {
            left: vocab.len(),
            right: dark.vocab_len(),
        });
    }
    let pair = kl_prepare(dark, clean)?;
    let qid = vocab.id(query).expect("checked above");

    let mut candidates: Vec<(String, f64)> = (0..vocab.len() as u32)
        .into_par_iter()
        .filter(|w| clean.occurrences(*w) >= min_clean_freq)
        .map(|w| (vocab.word(w).to_string(), pair.divergence(qid, w)))
        .collect();
    sort_candidates(&mut candidates);
    let self_rank = find_self_rank(&candidates, query);
    Ok(RankedMapping {
        query: query.to_string(),
        candidates,
        self_rank,
    })
}

/// One flagged word from [`detect_candidates`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectHit {
    pub word: String,
    /// 1-based self rank under KL ranking; `None` when the word is not among
    /// its own candidates.
    pub self_rank: Option<usize>,
}

/// Flags dark-side words whose own surface form ranks poorly (or not at all)
/// among their clean candidates.
///
/// The scanned universe is every vocabulary word with at least `min_freq`
/// dark-corpus occurrences; candidate admission uses the same floor on the
/// clean side. Words with absent self rank sort first, then descending self
/// rank, lexicographic within ties, truncated to `max_results`. Only words
/// with self rank absent or greater than `self_rank_threshold` are returned.
pub fn detect_candidates(
    dark: &ContextDistribution,
    clean: &ContextDistribution,
    vocab: &Vocabulary,
    min_freq: u64,
    self_rank_threshold: usize,
    max_results: usize,
) -> Result<Vec<DetectHit>> {
    if vocab.len() != dark.vocab_len() {
        return Err(Error::LengthMismatch {
            left: vocab.len(),
            right: dark.vocab_len(),
        });
    }
    let pair = kl_prepare(dark, clean)?;
    let candidate_ids: Vec<u32> = (0..vocab.len() as u32)
        .filter(|w| clean.occurrences(*w) >= min_freq)
        .collect();

    let mut hits: Vec<DetectHit> = (0..vocab.len() as u32)
        .into_par_iter()
        .filter(|w| dark.occurrences(*w) >= min_freq)
        .filter_map(|w| {
            let word = vocab.word(w);
            // Self rank without sorting: count candidates that order
            // strictly before the word's own (score, word) pair.
            let self_rank = if candidate_ids.binary_search(&w).is_ok() {
                let own = pair.divergence(w, w);
                let before = candidate_ids
                    .iter()
                    .filter(|c| {
                        let s = pair.divergence(w, **c);
                        s < own || (s == own && vocab.word(**c) < word)
                    })
                    .count();
                Some(before + 1)
            } else {
                None
            };
            match self_rank {
                None => Some(DetectHit {
                    word: word.to_string(),
                    self_rank: None,
                }),
                Some(r) if r > self_rank_threshold => Some(DetectHit {
                    word: word.to_string(),
                    self_rank: Some(r),
                }),
                Some(_) => None,
            }
        })
        .collect();

    hits.sort_unstable_by(|a, b| match (a.self_rank, b.self_rank) {
        (None, None) => a.word.cmp(&b.word),
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => y.cmp(&x).then_with(|| a.word.cmp(&b.word)),
    });
    hits.truncate(max_results);
    Ok(hits)
}

/// Writes counts plus smoothing parameters as a versioned binary index. The
/// distribution itself is recomputed on load, which round-trips exactly
/// because smoothing is a deterministic closed form over the counts.
pub fn save_index(
    path: &Path,
    counts: &ContextCounts,
    smoothing: Smoothing,
    side: CorpusSide,
    vocab: &Vocabulary,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer::new(BufWriter::new(file), path);
    w.bytes(INDEX_MAGIC)?;
    w.u32(INDEX_VERSION)?;
    w.bytes(&vocab.fingerprint())?;
    w.u8(side.tag())?;
    w.u32(counts.k)?;
    let (tag, param) = smoothing.tag();
    w.u8(tag)?;
    w.f64(param)?;
    w.u32(counts.vocab_len)?;
    for occ in &counts.occurrences {
        w.u64(*occ)?;
    }
    for word in 0..counts.vocab_len {
        let (ids, cs) = counts.row(word);
        w.u32(word)?;
        w.u64(counts.total(word))?;
        w.u32(ids.len() as u32)?;
        for (id, c) in ids.iter().zip(cs) {
            w.u32(*id)?;
            w.u32(*c)?;
        }
    }
    w.finish()
}

/// Reads an index written by [`save_index`], verifying the magic bytes,
/// format version, and that the vocabulary fingerprint matches `vocab`.
pub fn load_index(
    path: &Path,
    vocab: &Vocabulary,
) -> Result<(ContextCounts, Smoothing, CorpusSide)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.magic(INDEX_MAGIC)?;
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(r.fail(format!(
            "unsupported context index version {version}, expected {INDEX_VERSION}"
        )));
    }
    let fp: [u8; 32] = r.bytes()?;
    if fp != vocab.fingerprint() {
        return Err(r.fail("vocabulary fingerprint mismatch"));
    }
    let side = CorpusSide::from_tag(r.u8()?).ok_or_else(|| r.fail("unknown corpus side tag"))?;
    let k = r.u32()?;
    if k == 0 {
        return Err(r.fail("window radius k must be >= 1"));
    }
    let (tag, param) = (r.u8()?, r.f64()?);
    let smoothing =
        Smoothing::from_tag(tag, param).ok_or_else(|| r.fail("unknown smoothing tag"))?;
    smoothing.validate().map_err(|e| r.fail(e.to_string()))?;
    let vocab_len = r.u32()?;
    if vocab_len as usize != vocab.len() {
        return Err(r.fail(format!(
            "index covers {vocab_len} words but the vocabulary has {}",
            vocab.len()
        )));
    }

    let mut occurrences = Vec::with_capacity(vocab_len as usize);
    for _ in 0..vocab_len {
        occurrences.push(r.u64()?);
    }

    let mut offsets = Vec::with_capacity(vocab_len as usize + 1);
    offsets.push(0usize);
    let mut ids = Vec::new();
    let mut counts = Vec::new();
    let mut totals = Vec::with_capacity(vocab_len as usize);
    for word in 0..vocab_len {
        let got = r.u32()?;
        if got != word {
            return Err(r.fail(format!("expected record for word {word}, found {got}")));
        }
        let total = r.u64()?;
        let entries = r.u32()?;
        let mut sum = 0u64;
        let mut prev: Option<u32> = None;
        for _ in 0..entries {
            let id = r.u32()?;
            let c = r.u32()?;
            if id >= vocab_len {
                return Err(r.fail(format!("column id {id} out of range for word {word}")));
            }
            if prev.is_some_and(|p| p >= id) {
                return Err(r.fail(format!("column ids not strictly ascending for word {word}")));
            }
            prev = Some(id);
            ids.push(id);
            counts.push(c);
            sum += c as u64;
        }
        if sum != total {
            return Err(r.fail(format!(
                "stored total {total} for word {word} does not match entry sum {sum}"
            )));
        }
        totals.push(total);
        offsets.push(ids.len());
    }

    Ok((
        ContextCounts {
            k,
            vocab_len,
            offsets,
            ids,
            counts,
            totals,
            occurrences,
        },
        smoothing,
        side,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, Provenance};
    use crate::vocab::{build_vocab, count_frequencies};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn corpus_of(tokens_per_doc: &[&[&str]]) -> Corpus {
        Corpus {
            docs: tokens_per_doc
                .iter()
                .enumerate()
                .map(|(i, toks)| Document {
                    id: format!("d{i}"),
                    tokens: toks.iter().map(|t| t.to_string()).collect(),
                })
                .collect(),
            provenance: Provenance {
                source: "test".into(),
                pipeline_fingerprint: "fp".into(),
            },
        }
    }

    fn vocab_for(corpus: &Corpus, n: usize) -> Vocabulary {
        let freq = count_frequencies(&[corpus]).unwrap();
        build_vocab(&freq, n, &BTreeSet::new()).unwrap()
    }

    /// Quadratic per-occurrence window scan, the independent reference for
    /// the CSR builder.
    fn brute_force(corpus: &Corpus, vocab: &Vocabulary, k: u32) -> Vec<Vec<u32>> {
        let v = vocab.len();
        let mut m = vec![vec![0u32; v]; v];
        for doc in &corpus.docs {
            let ids: Vec<Option<u32>> = doc.tokens.iter().map(|t| vocab.id(t)).collect();
            for i in 0..ids.len() {
                let Some(wi) = ids[i] else { continue };
                let lo = i.saturating_sub(k as usize);
                let hi = (i + k as usize).min(ids.len().saturating_sub(1));
                for (j, slot) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    if let Some(wj) = slot {
                        m[wi as usize][*wj as usize] += 1;
                    }
                }
            }
        }
        m
    }

    fn assert_matches_oracle(corpus: &Corpus, vocab: &Vocabulary, k: u32) {
        let counts = build_context_counts(corpus, vocab, k).unwrap();
        let oracle = brute_force(corpus, vocab, k);
        for w in 0..vocab.len() as u32 {
            let mut expected_total = 0u64;
            for v in 0..vocab.len() as u32 {
                assert_eq!(
                    counts.count(w, v),
                    oracle[w as usize][v as usize],
                    "mismatch at ({w},{v}) with k={k}"
                );
                expected_total += oracle[w as usize][v as usize] as u64;
            }
            assert_eq!(counts.total(w), expected_total);
        }
    }

    #[test]
    fn window_radius_one() {
        let corpus = corpus_of(&[&["a", "b", "c", "a", "b"]]);
        let vocab = vocab_for(&corpus, 3);
        let counts = build_context_counts(&corpus, &vocab, 1).unwrap();
        let id = |w: &str| vocab.id(w).unwrap();
        assert_eq!(counts.count(id("b"), id("a")), 2);
        assert_eq!(counts.count(id("b"), id("c")), 1);
        assert_eq!(counts.count(id("b"), id("b")), 0);
        assert_eq!(counts.count(id("a"), id("b")), 2);
        assert_eq!(counts.count(id("a"), id("c")), 1);
        assert_eq!(counts.count(id("c"), id("a")), 1);
        assert_eq!(counts.count(id("c"), id("b")), 1);
        assert_eq!(counts.total(id("b")), 3);
    }

    #[test]
    fn window_clips_to_document() {
        let corpus = corpus_of(&[&["a", "b", "c", "a", "b"]]);
        let vocab = vocab_for(&corpus, 3);
        let counts = build_context_counts(&corpus, &vocab, 10).unwrap();
        let id = |w: &str| vocab.id(w).unwrap();
        assert_eq!(counts.count(id("b"), id("a")), 4);
        assert_eq!(counts.count(id("b"), id("b")), 2);
        assert_eq!(counts.count(id("b"), id("c")), 2);
        assert_eq!(counts.total(id("b")), 8);
    }

    #[test]
    fn empty_corpus_gives_zero_counts() {
        let corpus = corpus_of(&[&["a", "b"]]);
        let vocab = vocab_for(&corpus, 2);
        let empty = corpus_of(&[]);
        let counts = build_context_counts(&empty, &vocab, 3).unwrap();
        assert_eq!(counts.nnz(), 0);
        assert_eq!(counts.total(0), 0);
        assert_eq!(counts.occurrences(0), 0);
    }

    #[test]
    fn oov_tokens_occupy_positions() {
        let base = corpus_of(&[&["a", "b"]]);
        let vocab = vocab_for(&base, 2);
        let corpus = corpus_of(&[&["a", "zzz", "b"]]);
        let k1 = build_context_counts(&corpus, &vocab, 1).unwrap();
        assert_eq!(k1.nnz(), 0);
        let k2 = build_context_counts(&corpus, &vocab, 2).unwrap();
        assert_eq!(k2.count(vocab.id("a").unwrap(), vocab.id("b").unwrap()), 1);
    }

    #[test]
    fn windows_do_not_cross_documents() {
        let corpus = corpus_of(&[&["a"], &["b"]]);
        let vocab = vocab_for(&corpus, 2);
        let counts = build_context_counts(&corpus, &vocab, 5).unwrap();
        assert_eq!(counts.nnz(), 0);
        assert_eq!(counts.occurrences(vocab.id("a").unwrap()), 1);
    }

    #[test]
    fn k_zero_is_rejected() {
        let corpus = corpus_of(&[&["a"]]);
        let vocab = vocab_for(&corpus, 1);
        assert!(matches!(
            build_context_counts(&corpus, &vocab, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    proptest! {
        #[test]
        fn csr_builder_matches_brute_force(
            docs in proptest::collection::vec(
                proptest::collection::vec(0u8..24, 0..50),
                0..20,
            ),
            k in prop_oneof![Just(1u32), Just(2), Just(3), Just(10)],
        ) {
            let docs: Vec<Vec<String>> = docs
                .iter()
                .map(|d| d.iter().map(|t| format!("w{t}")).collect())
                .collect();
            let slices: Vec<Vec<&str>> = docs
                .iter()
                .map(|d| d.iter().map(|s| s.as_str()).collect())
                .collect();
            let slice_refs: Vec<&[&str]> = slices.iter().map(|d| d.as_slice()).collect();
            let corpus = corpus_of(&slice_refs);
            // Cap the vocabulary below the alphabet so some tokens are OOV.
            let freq = count_frequencies(&[&corpus]).unwrap();
            if freq.is_empty() {
                return Ok(());
            }
            let vocab = build_vocab(&freq, 20, &BTreeSet::new()).unwrap();
            assert_matches_oracle(&corpus, &vocab, k);
        }
    }

    fn example_dist(method: Smoothing) -> (ContextDistribution, Vocabulary) {
        let corpus = corpus_of(&[&["a", "b", "c", "a", "b"]]);
        let vocab = vocab_for(&corpus, 3);
        let counts = build_context_counts(&corpus, &vocab, 1).unwrap();
        let dist = smooth(&counts, method, &vocab, CorpusSide::Dark).unwrap();
        (dist, vocab)
    }

    #[test]
    fn laplace_smoothing_matches_closed_form() {
        let (dist, vocab) = example_dist(Smoothing::Laplace { alpha: 1.0 });
        let b = vocab.id("b").unwrap();
        let row = dist.dense_row(b);
        let expect = [0.5, 1.0 / 6.0, 1.0 / 3.0];
        let id = |w: &str| vocab.id(w).unwrap() as usize;
        assert!((row[id("a")] - expect[0]).abs() < 1e-12);
        assert!((row[id("b")] - expect[1]).abs() < 1e-12);
        assert!((row[id("c")] - expect[2]).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_smooth_to_uniform() {
        let base = corpus_of(&[&["a", "b", "c"]]);
        let vocab = vocab_for(&base, 3);
        let empty = corpus_of(&[]);
        let counts = build_context_counts(&empty, &vocab, 1).unwrap();
        let dist = smooth(
            &counts,
            Smoothing::Laplace { alpha: 1.0 },
            &vocab,
            CorpusSide::Clean,
        )
        .unwrap();
        for w in 0..3 {
            for p in dist.dense_row(w) {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_smoothing_matches_hand_computation() {
        // Totals for [a b c a b] at k=1 are a:3, b:3, c:2 over mass 8, so the
        // add-1 collection model is (4/11, 4/11, 3/11) and row b with mu=2 is
        // (30/55, 8/55, 17/55).
        let (dist, vocab) = example_dist(Smoothing::Dirichlet { mu: 2.0 });
        let b = vocab.id("b").unwrap();
        let row = dist.dense_row(b);
        let id = |w: &str| vocab.id(w).unwrap() as usize;
        assert!((row[id("a")] - 30.0 / 55.0).abs() < 1e-12);
        assert!((row[id("b")] - 8.0 / 55.0).abs() < 1e-12);
        assert!((row[id("c")] - 17.0 / 55.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_rows_are_normalized_and_positive() {
        for method in [
            Smoothing::Laplace { alpha: 1.0 },
            Smoothing::Laplace { alpha: 0.25 },
            Smoothing::Dirichlet { mu: 1.5 },
        ] {
            let (dist, vocab) = example_dist(method);
            for w in 0..vocab.len() as u32 {
                let row = dist.dense_row(w);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{method:?} row {w} sums to {sum}");
                assert!(row.iter().all(|p| *p > 0.0));
            }
        }
    }

    #[test]
    fn non_positive_smoothing_parameters_are_rejected() {
        let corpus = corpus_of(&[&["a"]]);
        let vocab = vocab_for(&corpus, 1);
        let counts = build_context_counts(&corpus, &vocab, 1).unwrap();
        for method in [
            Smoothing::Laplace { alpha: 0.0 },
            Smoothing::Laplace { alpha: -1.0 },
            Smoothing::Dirichlet { mu: 0.0 },
            Smoothing::Dirichlet { mu: f64::NAN },
        ] {
            assert!(smooth(&counts, method, &vocab, CorpusSide::Dark).is_err());
        }
    }

    #[test]
    fn kl_divergence_frozen_values() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let d1 = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((d1 - 0.143841).abs() < 1e-6, "got {d1}");
        let d2 = kl_divergence(&[0.75, 0.25], &[0.5, 0.5]).unwrap();
        assert!((d2 - 0.130812).abs() < 1e-6, "got {d2}");
    }

    #[test]
    fn kl_divergence_rejects_bad_input() {
        assert!(matches!(
            kl_divergence(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(
            kl_divergence(&[1.0, 0.0], &[0.5, 0.5]),
            Err(Error::ZeroProbability(1))
        ));
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::ZeroProbability(1))
        ));
    }

    fn random_distribution_pair(
        doc_seed: &[Vec<u8>],
        method: Smoothing,
    ) -> (ContextDistribution, ContextDistribution, Vocabulary) {
        let docs: Vec<Vec<String>> = doc_seed
            .iter()
            .map(|d| d.iter().map(|t| format!("w{t}")).collect())
            .collect();
        let half = docs.len() / 2;
        let to_corpus = |part: &[Vec<String>]| {
            let slices: Vec<Vec<&str>> = part
                .iter()
                .map(|d| d.iter().map(|s| s.as_str()).collect())
                .collect();
            let refs: Vec<&[&str]> = slices.iter().map(|d| d.as_slice()).collect();
            corpus_of(&refs)
        };
        let c1 = to_corpus(&docs[..half]);
        let c2 = to_corpus(&docs[half..]);
        let freq = count_frequencies(&[&c1, &c2]).unwrap();
        let vocab = build_vocab(&freq, 16, &BTreeSet::new()).unwrap();
        let d1 = smooth(
            &build_context_counts(&c1, &vocab, 2).unwrap(),
            method,
            &vocab,
            CorpusSide::Dark,
        )
        .unwrap();
        let d2 = smooth(
            &build_context_counts(&c2, &vocab, 2).unwrap(),
            method,
            &vocab,
            CorpusSide::Clean,
        )
        .unwrap();
        (d1, d2, vocab)
    }

    proptest! {
        #[test]
        fn sparse_kl_matches_dense_oracle(
            docs in proptest::collection::vec(
                proptest::collection::vec(0u8..10, 1..30),
                2..8,
            ),
            dirichlet in proptest::bool::ANY,
        ) {
            let method = if dirichlet {
                Smoothing::Dirichlet { mu: 1.5 }
            } else {
                Smoothing::Laplace { alpha: 1.0 }
            };
            let (d1, d2, vocab) = random_distribution_pair(&docs, method);
            let pair = kl_prepare(&d1, &d2).unwrap();
            for wp in 0..vocab.len() as u32 {
                for wq in 0..vocab.len() as u32 {
                    let sparse = pair.divergence(wp, wq);
                    let dense =
                        kl_divergence(&d1.dense_row(wp), &d2.dense_row(wq)).unwrap();
                    prop_assert!(
                        (sparse - dense).abs() < 1e-10,
                        "({wp},{wq}): sparse {sparse} vs dense {dense}"
                    );
                    prop_assert!(sparse >= -1e-12);
                }
            }
            // Identical model on both sides: divergence is exactly zero.
            let self_pair = kl_prepare(&d1, &d1).unwrap();
            for w in 0..vocab.len() as u32 {
                prop_assert_eq!(self_pair.divergence(w, w), 0.0);
            }
        }
    }

    #[test]
    fn rank_orders_are_log_base_invariant() {
        let docs: Vec<Vec<u8>> = vec![
            vec![0, 1, 2, 3, 0, 1, 4, 5, 0, 2],
            vec![5, 4, 3, 2, 1, 0, 1, 2, 3, 4],
            vec![0, 0, 1, 1, 2, 2, 3, 3],
            vec![4, 5, 4, 5, 0, 3],
        ];
        let (d1, d2, vocab) = random_distribution_pair(&docs, Smoothing::Laplace { alpha: 1.0 });
        let pair = kl_prepare(&d1, &d2).unwrap();
        for wp in 0..vocab.len() as u32 {
            let mut nats: Vec<(String, f64)> = (0..vocab.len() as u32)
                .map(|w| (vocab.word(w).to_string(), pair.divergence(wp, w)))
                .collect();
            let mut bits: Vec<(String, f64)> = nats
                .iter()
                .map(|(w, s)| (w.clone(), s / std::f64::consts::LN_2))
                .collect();
            sort_candidates(&mut nats);
            sort_candidates(&mut bits);
            let order_nats: Vec<&String> = nats.iter().map(|(w, _)| w).collect();
            let order_bits: Vec<&String> = bits.iter().map(|(w, _)| w).collect();
            assert_eq!(order_nats, order_bits);
        }
    }

    fn mirror_models(
        tokens_per_doc: &[&[&str]],
        n: usize,
    ) -> (ContextDistribution, ContextDistribution, Vocabulary) {
        let corpus = corpus_of(tokens_per_doc);
        let vocab = vocab_for(&corpus, n);
        let counts = build_context_counts(&corpus, &vocab, 2).unwrap();
        let method = Smoothing::Laplace { alpha: 1.0 };
        let dark = smooth(&counts, method, &vocab, CorpusSide::Dark).unwrap();
        let clean = smooth(&counts, method, &vocab, CorpusSide::Clean).unwrap();
        (dark, clean, vocab)
    }

    const MIRROR_DOCS: &[&[&str]] = &[
        &["a", "b", "c", "d", "a", "b"],
        &["c", "d", "e", "a", "c", "e"],
        &["e", "d", "b", "a", "e", "d", "c"],
        &["b", "e", "a", "d", "b", "c", "e", "d"],
    ];

    #[test]
    fn mirror_ranking_maps_words_to_themselves() {
        let (dark, clean, vocab) = mirror_models(MIRROR_DOCS, 5);
        for w in ["a", "b", "c", "d", "e"] {
            let ranked = rank_by_kl(w, &dark, &clean, &vocab, 1).unwrap();
            assert_eq!(ranked.top(), Some(w));
            assert_eq!(ranked.candidates[0].1, 0.0);
            assert_eq!(ranked.self_rank, Some(1));
            for pair in ranked.candidates.windows(2) {
                assert!(pair[0].1 <= pair[1].1);
            }
        }
    }

    #[test]
    fn unknown_query_is_reported_by_name() {
        let (dark, clean, vocab) = mirror_models(MIRROR_DOCS, 5);
        match rank_by_kl("zzzz", &dark, &clean, &vocab, 1) {
            Err(Error::UnknownWord(w)) => assert_eq!(w, "zzzz"),
            other => panic!("expected UnknownWord, got {other:?}"),
        }
    }

    #[test]
    fn candidate_list_is_exactly_the_admitted_clean_words() {
        let (dark, clean, vocab) = mirror_models(MIRROR_DOCS, 5);
        let floor = 6;
        let ranked = rank_by_kl("a", &dark, &clean, &vocab, floor).unwrap();
        let admitted: BTreeSet<&str> = (0..vocab.len() as u32)
            .filter(|w| clean.occurrences(*w) >= floor)
            .map(|w| vocab.word(w))
            .collect();
        let listed: BTreeSet<&str> = ranked.candidates.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(listed, admitted);
        assert!(!admitted.is_empty());
        assert!(admitted.len() < vocab.len());
    }

    #[test]
    fn mirror_detect_is_empty() {
        let (dark, clean, vocab) = mirror_models(MIRROR_DOCS, 5);
        for threshold in [1, 2, 10] {
            let hits = detect_candidates(&dark, &clean, &vocab, 1, threshold, 100).unwrap();
            assert!(hits.is_empty(), "threshold {threshold}: {hits:?}");
        }
    }

    #[test]
    fn dark_only_word_is_flagged_with_absent_self_rank() {
        let dark_docs = corpus_of(&[
            &["a", "b", "qq", "a", "qq", "b", "qq", "a", "qq", "b", "qq"],
            &["b", "a", "qq", "b"],
        ]);
        let clean_docs = corpus_of(&[&["a", "b", "a", "b", "a", "b", "a", "b", "a", "b"]]);
        let freq = count_frequencies(&[&dark_docs, &clean_docs]).unwrap();
        let vocab = build_vocab(&freq, 3, &BTreeSet::new()).unwrap();
        let method = Smoothing::Laplace { alpha: 1.0 };
        let dark = smooth(
            &build_context_counts(&dark_docs, &vocab, 2).unwrap(),
            method,
            &vocab,
            CorpusSide::Dark,
        )
        .unwrap();
        let clean = smooth(
            &build_context_counts(&clean_docs, &vocab, 2).unwrap(),
            method,
            &vocab,
            CorpusSide::Clean,
        )
        .unwrap();
        let hits = detect_candidates(&dark, &clean, &vocab, 5, 1, 10).unwrap();
        let qq = hits.iter().find(|h| h.word == "qq").expect("qq flagged");
        assert_eq!(qq.self_rank, None);
        // Absent self ranks sort before every present one.
        assert_eq!(hits[0].word, "qq");
    }

    #[test]
    fn threshold_zero_returns_every_scanned_word_capped() {
        let (dark, clean, vocab) = mirror_models(MIRROR_DOCS, 5);
        let all = detect_candidates(&dark, &clean, &vocab, 1, 0, 100).unwrap();
        assert_eq!(all.len(), vocab.len());
        let capped = detect_candidates(&dark, &clean, &vocab, 1, 0, 2).unwrap();
        assert_eq!(capped.len(), 2);
    }

    #[test]
    fn index_roundtrip_is_exact() {
        let corpus = corpus_of(MIRROR_DOCS);
        let vocab = vocab_for(&corpus, 5);
        let counts = build_context_counts(&corpus, &vocab, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clean.ctx");
        let smoothing = Smoothing::Dirichlet { mu: 0.75 };
        save_index(&path, &counts, smoothing, CorpusSide::Clean, &vocab).unwrap();
        let (back, m, side) = load_index(&path, &vocab).unwrap();
        assert_eq!(back, counts);
        assert_eq!(m, smoothing);
        assert_eq!(side, CorpusSide::Clean);
    }

    #[test]
    fn index_load_rejects_wrong_vocabulary() {
        let corpus = corpus_of(MIRROR_DOCS);
        let vocab = vocab_for(&corpus, 5);
        let other = vocab_for(&corpus, 4);
        let counts = build_context_counts(&corpus, &vocab, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dark.ctx");
        save_index(
            &path,
            &counts,
            Smoothing::default(),
            CorpusSide::Dark,
            &vocab,
        )
        .unwrap();
        match load_index(&path, &other) {
            Err(Error::Artifact { reason, .. }) => {
                assert!(reason.contains("fingerprint"), "{reason}");
            }
            other => panic!("expected Artifact error, got {other:?}"),
        }
    }

    #[test]
    fn index_load_rejects_corruption() {
        let corpus = corpus_of(MIRROR_DOCS);
        let vocab = vocab_for(&corpus, 5);
        let counts = build_context_counts(&corpus, &vocab, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dark.ctx");
        save_index(
            &path,
            &counts,
            Smoothing::default(),
            CorpusSide::Dark,
            &vocab,
        )
        .unwrap();

        let bytes = std::fs::read(&path).unwrap();
        // Truncated file.
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            load_index(&path, &vocab),
            Err(Error::Artifact { .. })
        ));
        // Bad magic.
        let mut clobbered = bytes.clone();
        clobbered[0] ^= 0xff;
        std::fs::write(&path, &clobbered).unwrap();
        assert!(matches!(
            load_index(&path, &vocab),
            Err(Error::Artifact { .. })
        ));
    }

    #[test]
    fn smoothing_config_forms_parse() {
        let laplace: Smoothing = toml::from_str("method = \"laplace\"\nalpha = 0.5").unwrap();
        assert_eq!(laplace, Smoothing::Laplace { alpha: 0.5 });
        let dirichlet: Smoothing = toml::from_str("method = \"dirichlet\"\nmu = 2.0").unwrap();
        assert_eq!(dirichlet, Smoothing::Dirichlet { mu: 2.0 });
        assert!(toml::from_str::<Smoothing>("method = \"other\"").is_err());
    }
}

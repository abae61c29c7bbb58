//! Count-based word embeddings and cross-context lexical analysis (CCLA).
//!
//! Each corpus gets its own embedding space: a symmetric windowed
//! co-occurrence matrix, reweighted by positive pointwise mutual information,
//! factorized by a seeded randomized truncated SVD. CCLA compares a word pair
//! across the two spaces through the words their neighborhoods share:
//!
//!   phi = sum over the common neighbors v of cos(v, w_d) * cos(v, w_c),
//!         divided by ||NN(w_d)|| * ||NN(w_c)||
//!
//! where each ||NN(.)|| is the Euclidean norm of that word's full k-vector of
//! neighbor similarities. That denominator is one possible reading of the
//! normalization; it is the one under which comparing a word with itself over
//! identical corpora scores exactly 1, which is why it is used here. Empty
//! intersections and zero norms score 0 so the candidate ordering stays total.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::linalg::{SymmetricEigen, QR};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::context::{
    build_context_counts, find_self_rank, sort_candidates, ContextCounts, CorpusSide, RankedMapping,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

const EMBEDDING_MAGIC: &[u8; 8] = b"ARGOTEM\0";
const EMBEDDING_VERSION: u32 = 1;

/// Extra random directions beyond the requested rank, and the number of
/// power iterations; both are fixed so identical inputs and seed always walk
/// the identical computation.
const OVERSAMPLE: usize = 12;
const POWER_ITERATIONS: usize = 3;

/// Symmetric co-occurrence counts within a +/-window token span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocMatrix(ContextCounts);

impl CoocMatrix {
    pub fn window(&self) -> u32 {
        self.0.k()
    }

    pub fn vocab_len(&self) -> usize {
        self.0.vocab_len()
    }

    pub fn count(&self, u: u32, v: u32) -> u32 {
        self.0.count(u, v)
    }

    /// Row sum of `u`, the margin used for the PPMI probabilities.
    pub fn margin(&self, u: u32) -> u64 {
        self.0.total(u)
    }

    /// Sum of all entries.
    pub fn total(&self) -> u64 {
        (0..self.vocab_len() as u32).map(|u| self.margin(u)).sum()
    }

    pub fn nnz(&self) -> usize {
        self.0.nnz()
    }

    /// How often word `w` occurs as a token in the source corpus.
    pub fn occurrences(&self, w: u32) -> u64 {
        self.0.occurrences(w)
    }

    fn row(&self, u: u32) -> (&[u32], &[u32]) {
        self.0.row(u)
    }

    /// Reuses already-built window counts; they have the same shape.
    pub(crate) fn from_counts(counts: ContextCounts) -> CoocMatrix {
        CoocMatrix(counts)
    }

    /// Wraps a dense symmetric matrix; intended for fixtures and tooling.
    pub fn from_dense(window: u32, dense: &[Vec<u32>]) -> Result<CoocMatrix> {
        let n = dense.len();
        for (i, row) in dense.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(
                    "co-occurrence matrix must be square".into(),
                ));
            }
            for (j, c) in row.iter().enumerate() {
                if *c != dense[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "co-occurrence matrix must be symmetric, differs at ({i},{j})"
                    )));
                }
            }
        }
        Ok(CoocMatrix(ContextCounts::from_dense(window, dense)))
    }
}

/// Counts co-occurrences of vocabulary word pairs within `window` tokens
/// inside each document. The result is symmetric by construction and reuses
/// the sliding-window semantics of the context model.
pub fn build_cooccurrence(corpus: &Corpus, vocab: &Vocabulary, window: u32) -> Result<CoocMatrix> {
    Ok(CoocMatrix(build_context_counts(corpus, vocab, window)?))
}

/// Sparse non-negative PPMI matrix; zero and clipped entries are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmiMatrix {
    vocab_len: u32,
    offsets: Vec<usize>,
    ids: Vec<u32>,
    vals: Vec<f64>,
}

impl PpmiMatrix {
    pub fn vocab_len(&self) -> usize {
        self.vocab_len as usize
    }

    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, u: u32) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.offsets[u as usize], self.offsets[u as usize + 1]);
        (&self.ids[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, u: u32, v: u32) -> f64 {
        let (ids, vals) = self.row(u);
        match ids.binary_search(&v) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// Packs a dense symmetric non-negative matrix; fixtures and tooling.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<PpmiMatrix> {
        let n = dense.len();
        let mut offsets = vec![0usize];
        let mut ids = Vec::new();
        let mut vals = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter("matrix must be square".into()));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i},{j}) = {v} is not a finite non-negative value"
                    )));
                }
                if *v != dense[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "matrix must be symmetric, differs at ({i},{j})"
                    )));
                }
                if *v > 0.0 {
                    ids.push(j as u32);
                    vals.push(*v);
                }
            }
            offsets.push(ids.len());
        }
        Ok(PpmiMatrix {
            vocab_len: n as u32,
            offsets,
            ids,
            vals,
        })
    }
}

/// Positive pointwise mutual information over the matrix margins:
/// max(0, ln(p(u,v) / (p(u) p(v)))) with probabilities estimated from counts.
pub fn ppmi_transform(cooc: &CoocMatrix) -> Result<PpmiMatrix> {
    let total = cooc.total();
    if total == 0 {
        return Err(Error::InvalidParameter(
            "total co-occurrence count is zero; nothing to reweight".into(),
        ));
    }
    let total = total as f64;
    let n = cooc.vocab_len();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    let mut out_ids = Vec::new();
    let mut vals = Vec::new();
    for u in 0..n as u32 {
        let mu = cooc.margin(u) as f64;
        let (ids, counts) = cooc.row(u);
        for (v, c) in ids.iter().zip(counts) {
            let mv = cooc.margin(*v) as f64;
            let pmi = ((*c as f64 * total) / (mu * mv)).ln();
            if pmi > 0.0 {
                out_ids.push(*v);
                vals.push(pmi);
            }
        }
        offsets.push(out_ids.len());
    }
    Ok(PpmiMatrix {
        vocab_len: n as u32,
        offsets,
        ids: out_ids,
        vals,
    })
}

/// Dense rank-d word vectors for one corpus, rows scaled by the square root
/// of the singular values. Words whose PPMI row is empty keep an exactly-zero
/// vector and are flagged not embeddable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    side: CorpusSide,
    window: u32,
    d: u32,
    seed: u64,
    vocab_len: u32,
    vocab_fp: [u8; 32],
    rows: Vec<f64>,
    embeddable: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn side(&self) -> CorpusSide {
        self.side
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len as usize
    }

    pub fn vocab_fingerprint(&self) -> [u8; 32] {
        self.vocab_fp
    }

    pub fn vector(&self, w: u32) -> &[f64] {
        let d = self.d as usize;
        &self.rows[w as usize * d..(w as usize + 1) * d]
    }

    pub fn is_embeddable(&self, w: u32) -> bool {
        self.embeddable[w as usize]
    }

    pub fn embeddable_count(&self) -> usize {
        self.embeddable.iter().filter(|e| **e).count()
    }

    /// Builds a matrix from explicit row vectors; fixtures and tooling.
    /// All-zero rows are flagged not embeddable.
    pub fn from_rows(
        side: CorpusSide,
        window: u32,
        seed: u64,
        vocab: &Vocabulary,
        row_vecs: &[Vec<f64>],
    ) -> Result<EmbeddingMatrix> {
        if row_vecs.len() != vocab.len() {
            return Err(Error::LengthMismatch {
                left: row_vecs.len(),
                right: vocab.len(),
            });
        }
        let d = row_vecs.first().map_or(0, |r| r.len());
        if d == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be >= 1".into(),
            ));
        }
        let mut rows = Vec::with_capacity(row_vecs.len() * d);
        let mut embeddable = Vec::with_capacity(row_vecs.len());
        for (i, r) in row_vecs.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has dimension {}, expected {d}",
                    r.len()
                )));
            }
            embeddable.push(r.iter().any(|x| *x != 0.0));
            rows.extend_from_slice(r);
        }
        Ok(EmbeddingMatrix {
            side,
            window,
            d: d as u32,
            seed,
            vocab_len: vocab.len() as u32,
            vocab_fp: vocab.fingerprint(),
            rows,
            embeddable,
        })
    }
}

/// Sparse-times-dense product A * X for the symmetric PPMI matrix.
fn spmm(a: &PpmiMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.vocab_len();
    let l = x.ncols();
    let mut out = DMatrix::<f64>::zeros(n, l);
    for c in 0..l {
        let xc = x.column(c);
        let mut oc = out.column_mut(c);
        for i in 0..n {
            let (ids, vals) = a.row(i as u32);
            let mut acc = 0.0;
            for (id, v) in ids.iter().zip(vals) {
                acc += v * xc[*id as usize];
            }
            oc[i] = acc;
        }
    }
    out
}

/// Rank-d truncated SVD of the (symmetric) PPMI matrix via seeded randomized
/// subspace iteration; word vectors are U_d scaled by sqrt of the singular
/// values. The computation is single-threaded and branch-free with respect to
/// the data, so identical inputs and seed reproduce bit-identical output.
pub fn factorize(
    ppmi: &PpmiMatrix,
    d: u32,
    seed: u64,
    side: CorpusSide,
    window: u32,
    vocab: &Vocabulary,
) -> Result<EmbeddingMatrix> {
    let n = ppmi.vocab_len();
    if vocab.len() != n {
        return Err(Error::LengthMismatch {
            left: vocab.len(),
            right: n,
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter(
            "embedding dimension d must be >= 1".into(),
        ));
    }
    if d as usize > n {
        return Err(Error::InvalidParameter(format!(
            "embedding dimension d = {d} exceeds the vocabulary size {n}"
        )));
    }
    let d = d as usize;
    let l = (d + OVERSAMPLE).min(n);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let omega = DMatrix::from_iterator(n, l, (0..n * l).map(|_| StandardNormal.sample(&mut rng)));

    let mut q = QR::new(spmm(ppmi, &omega)).q();
    for _ in 0..POWER_ITERATIONS {
        let z = spmm(ppmi, &q);
        q = QR::new(spmm(ppmi, &z)).q();
    }
    let g = spmm(ppmi, &q);
    // With A symmetric, G^T G = (Q^T A)(Q^T A)^T, so its eigenpairs give the
    // singular values of the projected problem and U = Q * E.
    let m = g.tr_mul(&g);
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_unstable_by(|a, b| {
        eig.eigenvalues[*b]
            .total_cmp(&eig.eigenvalues[*a])
            .then(a.cmp(b))
    });
    let e_top = DMatrix::from_fn(l, d, |r, c| eig.eigenvectors[(r, order[c])]);
    let u = &q * e_top;
    let scales: Vec<f64> = (0..d)
        .map(|c| eig.eigenvalues[order[c]].max(0.0).sqrt().sqrt())
        .collect();

    let mut rows = vec![0.0f64; n * d];
    let mut embeddable = vec![false; n];
    for w in 0..n {
        let (ids, _) = ppmi.row(w as u32);
        if ids.is_empty() {
            // An all-zero input row has an exactly-zero U row in the true
            // SVD; the projection basis does not guarantee that, so pin it.
            continue;
        }
        embeddable[w] = true;
        for c in 0..d {
            rows[w * d + c] = u[(w, c)] * scales[c];
        }
    }

    Ok(EmbeddingMatrix {
        side,
        window,
        d: d as u32,
        seed,
        vocab_len: n as u32,
        vocab_fp: vocab.fingerprint(),
        rows,
        embeddable,
    })
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in u.iter().zip(v) {
        s += a * b;
    }
    s
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[inline]
fn finish_cosine(dot_uv: f64, norm_u: f64, norm_v: f64) -> f64 {
    if norm_u == 0.0 || norm_v == 0.0 {
        return 0.0;
    }
    let c = (dot_uv / (norm_u * norm_v)).clamp(-1.0, 1.0);
    // Collapse -0.0 so equal similarities compare equal under total order.
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

/// Cosine similarity, with the zero-vector convention cos(u, 0) = 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(finish_cosine(dot(u, v), norm(u), norm(v)))
}

/// A word's top-k cosine neighborhood within one embedding space.
///
/// Entries are sorted by descending similarity with lexicographic tie-break
/// and never include the query word itself. Only embeddable words appear, so
/// a list is shorter than k only when fewer than k embeddable words exist.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    query: u32,
    entries: Vec<(u32, f64)>,
    by_id: Vec<(u32, f64)>,
    norm: f64,
    embeddable: bool,
}

impl NeighborList {
    pub fn query(&self) -> u32 {
        self.query
    }

    /// (word id, similarity) pairs, best first.
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Euclidean norm of the similarity vector.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// False when the query word has a zero vector; such lists are empty.
    pub fn is_embeddable(&self) -> bool {
        self.embeddable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn empty(query: u32) -> NeighborList {
        NeighborList {
            query,
            entries: Vec::new(),
            by_id: Vec::new(),
            norm: 0.0,
            embeddable: false,
        }
    }

    fn from_entries(query: u32, entries: Vec<(u32, f64)>) -> NeighborList {
        let mut by_id = entries.clone();
        by_id.sort_unstable_by_key(|(id, _)| *id);
        let norm = entries.iter().map(|(_, s)| s * s).sum::<f64>().sqrt();
        NeighborList {
            query,
            entries,
            by_id,
            norm,
            embeddable: true,
        }
    }
}

fn neighbor_list_for(
    emb: &EmbeddingMatrix,
    w: u32,
    k: usize,
    vocab: &Vocabulary,
    norms: &[f64],
    embeddable_ids: &[u32],
) -> NeighborList {
    if !emb.is_embeddable(w) {
        return NeighborList::empty(w);
    }
    let wv = emb.vector(w);
    let wn = norms[w as usize];
    let mut sims: Vec<(u32, f64)> = embeddable_ids
        .iter()
        .filter(|c| **c != w)
        .map(|c| {
            (
                *c,
                finish_cosine(dot(wv, emb.vector(*c)), wn, norms[*c as usize]),
            )
        })
        .collect();
    let cmp = |a: &(u32, f64), b: &(u32, f64)| {
        b.1.total_cmp(&a.1)
            .then_with(|| vocab.word(a.0).cmp(vocab.word(b.0)))
    };
    if k == 0 {
        sims.clear();
    } else if sims.len() > k {
        sims.select_nth_unstable_by(k - 1, cmp);
        sims.truncate(k);
    }
    sims.sort_unstable_by(cmp);
    NeighborList::from_entries(w, sims)
}

/// Top-k cosine neighbors of `w`, excluding `w` itself, over the embeddable
/// words. A zero-vector query yields an empty list flagged not embeddable.
pub fn nearest_neighbors(
    w: &str,
    emb: &EmbeddingMatrix,
    k: usize,
    vocab: &Vocabulary,
) -> Result<NeighborList> {
    let id = vocab.require_id(w)?;
    if vocab.len() != emb.vocab_len() {
        return Err(Error::LengthMismatch {
            left: vocab.len(),
            right: emb.vocab_len(),
        });
    }
    let norms: Vec<f64> = (0..emb.vocab_len() as u32)
        .map(|c| norm(emb.vector(c)))
        .collect();
    let embeddable_ids: Vec<u32> = (0..emb.vocab_len() as u32)
        .filter(|c| emb.is_embeddable(*c))
        .collect();
    Ok(neighbor_list_for(
        emb,
        id,
        k,
        vocab,
        &norms,
        &embeddable_ids,
    ))
}

/// Neighbor lists for every vocabulary word of one embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    side: CorpusSide,
    k: u32,
    vocab_fp: [u8; 32],
    lists: Vec<NeighborList>,
}

impl NeighborTable {
    pub fn side(&self) -> CorpusSide {
        self.side
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn list(&self, w: u32) -> &NeighborList {
        &self.lists[w as usize]
    }

    pub fn vocab_len(&self) -> usize {
        self.lists.len()
    }
}

/// Computes every word's neighborhood once so scoring can run per pair in
/// O(k). Queries are independent and evaluated in parallel.
pub fn build_neighbor_table(
    emb: &EmbeddingMatrix,
    k: usize,
    vocab: &Vocabulary,
) -> Result<NeighborTable> {
    if vocab.len() != emb.vocab_len() {
        return Err(Error::LengthMismatch {
            left: vocab.len(),
            right: emb.vocab_len(),
        });
    }
    let norms: Vec<f64> = (0..emb.vocab_len() as u32)
        .map(|c| norm(emb.vector(c)))
        .collect();
    let embeddable_ids: Vec<u32> = (0..emb.vocab_len() as u32)
        .filter(|c| emb.is_embeddable(*c))
        .collect();
    let lists: Vec<NeighborList> = (0..emb.vocab_len() as u32)
        .into_par_iter()
        .map(|w| neighbor_list_for(emb, w, k, vocab, &norms, &embeddable_ids))
        .collect();
    Ok(NeighborTable {
        side: emb.side,
        k: k as u32,
        vocab_fp: emb.vocab_fp,
        lists,
    })
}

/// Word ids present in both neighborhoods, ascending.
pub fn common_neighbors(a: &NeighborList, b: &NeighborList) -> Vec<u32> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.by_id.len() && j < b.by_id.len() {
        match a.by_id[i].0.cmp(&b.by_id[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a.by_id[i].0);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn phi(dark: &NeighborList, clean: &NeighborList) -> f64 {
    let denom = dark.norm * clean.norm;
    if denom == 0.0 {
        return 0.0;
    }
    let mut num = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < dark.by_id.len() && j < clean.by_id.len() {
        match dark.by_id[i].0.cmp(&clean.by_id[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                num += dark.by_id[i].1 * clean.by_id[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    num / denom
}

/// Scores word pairs across the two neighbor tables.
pub struct CclaScorer<'a> {
    dark: &'a NeighborTable,
    clean: &'a NeighborTable,
    vocab: &'a Vocabulary,
}

impl<'a> CclaScorer<'a> {
    pub fn new(
        dark: &'a NeighborTable,
        clean: &'a NeighborTable,
        vocab: &'a Vocabulary,
    ) -> Result<CclaScorer<'a>> {
        if dark.vocab_len() != vocab.len() || clean.vocab_len() != vocab.len() {
            return Err(Error::LengthMismatch {
                left: dark.vocab_len(),
                right: vocab.len(),
            });
        }
        if dark.vocab_fp != clean.vocab_fp {
            return Err(Error::InvalidParameter(
                "neighbor tables were built over different vocabularies".into(),
            ));
        }
        if dark.k != clean.k {
            return Err(Error::InvalidParameter(format!(
                "neighborhood sizes differ: {} vs {}",
                dark.k, clean.k
            )));
        }
        Ok(CclaScorer { dark, clean, vocab })
    }

    pub fn neighborhood_size(&self) -> usize {
        self.dark.k()
    }

    /// phi for the dark-side word against the clean-side word. Errors when
    /// either word has no embedding, which is distinct from the score-0
    /// conventions for empty intersections and zero norms.
    pub fn score(&self, w_dark: &str, w_clean: &str) -> Result<f64> {
        let d = self.vocab.require_id(w_dark)?;
        let c = self.vocab.require_id(w_clean)?;
        self.score_ids(d, c)
    }

    pub fn score_ids(&self, dark_id: u32, clean_id: u32) -> Result<f64> {
        let nd = self.dark.list(dark_id);
        if !nd.embeddable {
            return Err(Error::NotEmbeddable(self.vocab.word(dark_id).to_string()));
        }
        let nc = self.clean.list(clean_id);
        if !nc.embeddable {
            return Err(Error::NotEmbeddable(self.vocab.word(clean_id).to_string()));
        }
        Ok(phi(nd, nc))
    }
}

/// Ranks clean-side candidates for `query` by descending phi. Scores are
/// stored negated so the shared ascending-score mapping invariant holds.
/// Candidates are the vocabulary words meeting the clean-side occurrence
/// floor that are embeddable on the clean side.
pub fn rank_by_ccla(
    query: &str,
    scorer: &CclaScorer<'_>,
    clean_occurrences: &[u64],
    min_clean_freq: u64,
) -> Result<RankedMapping> {
    let qid = scorer.vocab.require_id(query)?;
    if clean_occurrences.len() != scorer.vocab.len() {
        return Err(Error::LengthMismatch {
            left: clean_occurrences.len(),
            right: scorer.vocab.len(),
        });
    }
    if !scorer.dark.list(qid).embeddable {
        return Err(Error::NotEmbeddable(query.to_string()));
    }
    let qlist = scorer.dark.list(qid);
    let mut candidates: Vec<(String, f64)> = (0..scorer.vocab.len() as u32)
        .into_par_iter()
        .filter(|w| {
            clean_occurrences[*w as usize] >= min_clean_freq && scorer.clean.list(*w).embeddable
        })
        .map(|w| {
            (
                scorer.vocab.word(w).to_string(),
                -phi(qlist, scorer.clean.list(w)),
            )
        })
        .collect();
    sort_candidates(&mut candidates);
    let self_rank = find_self_rank(&candidates, query);
    Ok(RankedMapping {
        query: query.to_string(),
        candidates,
        self_rank,
    })
}

/// Writes the embedding as a versioned binary file: header, then |V| rows of
/// little-endian f64. Exact round trip, since the stored values are the
/// in-memory bit patterns.
pub fn save_embedding(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer::new(BufWriter::new(file), path);
    w.bytes(EMBEDDING_MAGIC)?;
    w.u32(EMBEDDING_VERSION)?;
    w.bytes(&emb.vocab_fp)?;
    w.u8(match emb.side {
        CorpusSide::Dark => 0,
        CorpusSide::Clean => 1,
    })?;
    w.u32(emb.window)?;
    w.u32(emb.d)?;
    w.u64(emb.seed)?;
    w.u32(emb.vocab_len)?;
    for v in &emb.rows {
        w.f64(*v)?;
    }
    w.finish()
}

/// Reads an embedding written by [`save_embedding`], verifying magic,
/// version, and the vocabulary fingerprint.
pub fn load_embedding(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.magic(EMBEDDING_MAGIC)?;
    let version = r.u32()?;
    if version != EMBEDDING_VERSION {
        return Err(r.fail(format!(
            "unsupported embedding version {version}, expected {EMBEDDING_VERSION}"
        )));
    }
    let fp: [u8; 32] = r.bytes()?;
    if fp != vocab.fingerprint() {
        return Err(r.fail("vocabulary fingerprint mismatch"));
    }
    let side = match r.u8()? {
        0 => CorpusSide::Dark,
        1 => CorpusSide::Clean,
        t => return Err(r.fail(format!("unknown corpus side tag {t}"))),
    };
    let window = r.u32()?;
    let d = r.u32()?;
    if d == 0 {
        return Err(r.fail("embedding dimension must be >= 1"));
    }
    let seed = r.u64()?;
    let vocab_len = r.u32()?;
    if vocab_len as usize != vocab.len() {
        return Err(r.fail(format!(
            "embedding covers {vocab_len} words but the vocabulary has {}",
            vocab.len()
        )));
    }
    let n = vocab_len as usize * d as usize;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(r.f64()?);
    }
    let embeddable = rows
        .chunks_exact(d as usize)
        .map(|row| row.iter().any(|x| *x != 0.0))
        .collect();
    Ok(EmbeddingMatrix {
        side,
        window,
        d,
        seed,
        vocab_len,
        vocab_fp: fp,
        rows,
        embeddable,
    })
}

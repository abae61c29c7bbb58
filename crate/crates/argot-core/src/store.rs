//! Run configuration and the persisted-artifact workspace.
//!
//! Building distributions and embeddings is the expensive part of the
//! pipeline, so a build writes them to a workspace directory once and queries
//! load them back. A manifest records the sha256 of every artifact together
//! with a fingerprint of the inputs that produced them (config plus corpus
//! bytes); anything that no longer matches is reported stale rather than
//! silently reused. One build may run per workspace at a time, enforced by a
//! lock file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::context::{
    build_context_counts, load_index, rank_by_kl, save_index, smooth, ContextDistribution,
    CorpusSide, RankedMapping,
};
use crate::corpus::{load_corpus, Corpus, CorpusFormat, PipelineConfig};
use crate::embedding::{
    build_neighbor_table, factorize, load_embedding, ppmi_transform, rank_by_ccla, save_embedding,
    CclaScorer, CoocMatrix, EmbeddingMatrix,
};
use crate::error::{Error, Result};
use crate::eval::{
    mapping_from_models, run_clean_clean, DetectConfig, MappingReport, Method, ModelParams,
    SimulationConfig, SimulationReport,
};
use crate::vocab::{build_vocab, count_frequencies, Vocabulary};

pub const MANIFEST_VERSION: u32 = 1;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const DARK_INDEX: &str = "dark.ctx";
pub const CLEAN_INDEX: &str = "clean.ctx";
pub const DARK_EMBEDDING: &str = "dark.emb";
pub const CLEAN_EMBEDDING: &str = "clean.emb";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = "build.lock";
const REPORT_DIR: &str = "reports";

const ALL_ARTIFACTS: [&str; 5] = [
    VOCAB_FILE,
    DARK_INDEX,
    CLEAN_INDEX,
    DARK_EMBEDDING,
    CLEAN_EMBEDDING,
];

/// Everything one run needs, loadable from a single TOML file. Relative
/// corpus and workspace paths are resolved against the config file location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dark_corpus: PathBuf,
    pub clean_corpus: PathBuf,
    #[serde(default)]
    pub corpus_format: CorpusFormat,
    /// Workspace directory; may instead come from the command line or the
    /// environment.
    #[serde(default)]
    pub workspace: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub detect: DetectConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        rebase(&mut config.dark_corpus);
        rebase(&mut config.clean_corpus);
        if let Some(ws) = &mut config.workspace {
            rebase(ws);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.compile()?;
        self.params.validate()?;
        self.simulation.validate()?;
        self.detect.validate()?;
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            corpus_format: self.corpus_format,
            pipeline: self.pipeline.clone(),
            params: self.params.clone(),
        }
    }
}

/// The semantic part of the config: every field that changes what the
/// artifacts contain. Paths are deliberately excluded, so moving files does
/// not invalidate a workspace as long as the bytes are unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub corpus_format: CorpusFormat,
    pub pipeline: PipelineConfig,
    pub params: ModelParams,
}

/// Identity and location of one corpus at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStamp {
    pub path: String,
    pub sha256: String,
}

/// On-disk record of what a workspace contains and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Hash of the canonical config serialization and both corpus hashes.
    pub input_fingerprint: String,
    pub dark_corpus: CorpusStamp,
    pub clean_corpus: CorpusStamp,
    pub config: ConfigEcho,
    /// Artifact file name to sha256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn input_fingerprint(echo: &ConfigEcho, dark_sha: &str, clean_sha: &str) -> Result<String> {
    let canonical = toml::to_string(echo)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(b"\n");
    h.update(dark_sha.as_bytes());
    h.update(b"\n");
    h.update(clean_sha.as_bytes());
    Ok(hex(&h.finalize()))
}

struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn acquire_lock(dir: &Path) -> Result<LockGuard> {
    let path = dir.join(LOCK_FILE);
    match fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
    {
        Ok(mut f) => {
            let _ = writeln!(f, "pid {}", std::process::id());
            Ok(LockGuard { path })
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            Err(Error::WorkspaceLocked(path))
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Handle to a workspace directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn at(dir: impl Into<PathBuf>) -> Workspace {
        Workspace { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.dir.join(REPORT_DIR).join(name)
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let path = self.manifest_path();
        if !path.exists() {
            return Err(Error::StaleWorkspace(format!(
                "{} has no manifest; run build first",
                self.dir.display()
            )));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Artifact {
            path: path.clone(),
            reason: format!("manifest does not parse: {e}"),
        })?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Artifact {
                path,
                reason: format!(
                    "unsupported manifest version {}, expected {MANIFEST_VERSION}",
                    manifest.format_version
                ),
            });
        }
        Ok(manifest)
    }

    /// Checks that every artifact listed in the manifest exists and still
    /// hashes to its recorded value.
    pub fn verify_artifacts(&self, manifest: &Manifest) -> Result<()> {
        for (name, want) in &manifest.artifacts {
            let path = self.artifact_path(name);
            if !path.exists() {
                return Err(Error::StaleWorkspace(format!("artifact {name} is missing")));
            }
            let got = hash_file(&path)?;
            if got != *want {
                return Err(Error::StaleWorkspace(format!(
                    "artifact {name} does not match the manifest"
                )));
            }
        }
        Ok(())
    }

    /// Checks that the corpora the workspace was built from are unchanged.
    pub fn verify_corpora(&self, manifest: &Manifest) -> Result<()> {
        for stamp in [&manifest.dark_corpus, &manifest.clean_corpus] {
            let path = Path::new(&stamp.path);
            let got = hash_file(path).map_err(|_| {
                Error::StaleWorkspace(format!("corpus {} is no longer readable", stamp.path))
            })?;
            if got != stamp.sha256 {
                return Err(Error::StaleWorkspace(format!(
                    "corpus {} changed since the last build",
                    stamp.path
                )));
            }
        }
        Ok(())
    }

    /// Reads the manifest and verifies artifacts and corpora in one step.
    pub fn open_verified(&self) -> Result<Manifest> {
        let manifest = self.read_manifest()?;
        self.verify_artifacts(&manifest)?;
        self.verify_corpora(&manifest)?;
        Ok(manifest)
    }
}

/// What a build did, per artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub rebuilt: Vec<&'static str>,
    pub reused: Vec<&'static str>,
    pub manifest: Manifest,
}

fn load_side(config: &RunConfig, path: &Path, side: CorpusSide) -> Result<Corpus> {
    let raw = load_corpus(path, config.corpus_format)?;
    let pipeline = config.pipeline.compile()?;
    Ok(Corpus::from_raw(
        &raw,
        &pipeline,
        &format!("{side}:{}", path.display()),
    ))
}

fn canonical_stamp(path: &Path, sha256: String) -> CorpusStamp {
    // Canonicalize so later verification is independent of the working
    // directory the build ran from.
    let canonical = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    CorpusStamp {
        path: canonical.display().to_string(),
        sha256,
    }
}

/// Runs ingest, vocabulary, context models, and embeddings, writing each
/// artifact plus the manifest into `dir`. A workspace whose manifest already
/// matches the current inputs is left untouched and reported as reused.
pub fn build(config: &RunConfig, dir: &Path) -> Result<BuildOutcome> {
    config.validate().map_err(|e| e.at_stage("config"))?;
    let dark_sha = hash_file(&config.dark_corpus).map_err(|e| e.at_stage("ingest"))?;
    let clean_sha = hash_file(&config.clean_corpus).map_err(|e| e.at_stage("ingest"))?;
    let echo = config.echo();
    let fingerprint = input_fingerprint(&echo, &dark_sha, &clean_sha)?;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let _lock = acquire_lock(dir)?;
    let ws = Workspace::at(dir);

    if let Ok(manifest) = ws.read_manifest() {
        if manifest.input_fingerprint == fingerprint && ws.verify_artifacts(&manifest).is_ok() {
            return Ok(BuildOutcome {
                rebuilt: Vec::new(),
                reused: ALL_ARTIFACTS.to_vec(),
                manifest,
            });
        }
    }

    let dark = load_side(config, &config.dark_corpus, CorpusSide::Dark)
        .map_err(|e| e.at_stage("ingest"))?;
    let clean = load_side(config, &config.clean_corpus, CorpusSide::Clean)
        .map_err(|e| e.at_stage("ingest"))?;

    let joint = count_frequencies(&[&dark, &clean]).map_err(|e| e.at_stage("vocabulary"))?;
    let vocab = build_vocab(&joint, config.params.vocab_size, &Default::default())
        .map_err(|e| e.at_stage("vocabulary"))?;
    vocab
        .save(&ws.artifact_path(VOCAB_FILE))
        .map_err(|e| e.at_stage("vocabulary"))?;

    let params = &config.params;
    let side_artifacts =
        |corpus: &Corpus, side: CorpusSide, index_name: &str, emb_name: &str| -> Result<()> {
            let counts = build_context_counts(corpus, &vocab, params.window)
                .map_err(|e| e.at_stage("context-model"))?;
            save_index(
                &ws.artifact_path(index_name),
                &counts,
                params.smoothing,
                side,
                &vocab,
            )
            .map_err(|e| e.at_stage("context-model"))?;
            let cooc = CoocMatrix::from_counts(counts);
            let ppmi = ppmi_transform(&cooc).map_err(|e| e.at_stage("embedding"))?;
            let emb = factorize(
                &ppmi,
                params.dimensions,
                params.svd_seed,
                side,
                params.window,
                &vocab,
            )
            .map_err(|e| e.at_stage("embedding"))?;
            save_embedding(&ws.artifact_path(emb_name), &emb).map_err(|e| e.at_stage("embedding"))
        };
    side_artifacts(&dark, CorpusSide::Dark, DARK_INDEX, DARK_EMBEDDING)?;
    side_artifacts(&clean, CorpusSide::Clean, CLEAN_INDEX, CLEAN_EMBEDDING)?;

    let mut artifacts = BTreeMap::new();
    for name in ALL_ARTIFACTS {
        artifacts.insert(name.to_string(), hash_file(&ws.artifact_path(name))?);
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        input_fingerprint: fingerprint,
        dark_corpus: canonical_stamp(&config.dark_corpus, dark_sha),
        clean_corpus: canonical_stamp(&config.clean_corpus, clean_sha),
        config: echo,
        artifacts,
    };
    write_manifest(&ws, &manifest)?;

    Ok(BuildOutcome {
        rebuilt: ALL_ARTIFACTS.to_vec(),
        reused: Vec::new(),
        manifest,
    })
}

fn write_manifest(ws: &Workspace, manifest: &Manifest) -> Result<()> {
    let path = ws.manifest_path();
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Artifact {
        path: path.clone(),
        reason: format!("manifest serialization failed: {e}"),
    })?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// Vocabulary plus both smoothed context distributions from a verified
/// workspace.
pub fn load_distributions(
    ws: &Workspace,
) -> Result<(
    Manifest,
    Vocabulary,
    ContextDistribution,
    ContextDistribution,
)> {
    let manifest = ws.open_verified()?;
    let vocab = Vocabulary::load(&ws.artifact_path(VOCAB_FILE))?;
    let load = |name: &str, want: CorpusSide| -> Result<ContextDistribution> {
        let (counts, smoothing, side) = load_index(&ws.artifact_path(name), &vocab)?;
        if side != want {
            return Err(Error::Artifact {
                path: ws.artifact_path(name),
                reason: format!("expected the {want} side, found {side}"),
            });
        }
        smooth(&counts, smoothing, &vocab, side)
    };
    let dark = load(DARK_INDEX, CorpusSide::Dark)?;
    let clean = load(CLEAN_INDEX, CorpusSide::Clean)?;
    Ok((manifest, vocab, dark, clean))
}

/// Vocabulary, both embeddings, and clean-side occurrence counts (needed as
/// the candidate floor) from a verified workspace.
pub fn load_embeddings(
    ws: &Workspace,
) -> Result<(
    Manifest,
    Vocabulary,
    EmbeddingMatrix,
    EmbeddingMatrix,
    Vec<u64>,
)> {
    let manifest = ws.open_verified()?;
    let vocab = Vocabulary::load(&ws.artifact_path(VOCAB_FILE))?;
    let dark = load_embedding(&ws.artifact_path(DARK_EMBEDDING), &vocab)?;
    let clean = load_embedding(&ws.artifact_path(CLEAN_EMBEDDING), &vocab)?;
    let (clean_counts, _, _) = load_index(&ws.artifact_path(CLEAN_INDEX), &vocab)?;
    let occ = (0..vocab.len() as u32)
        .map(|w| clean_counts.occurrences(w))
        .collect();
    Ok((manifest, vocab, dark, clean, occ))
}

/// Ranks clean candidates for one dark-side word against a built workspace,
/// truncated to the `top_m` best.
pub fn rank(ws: &Workspace, word: &str, method: Method, top_m: usize) -> Result<RankedMapping> {
    let mut ranked = match method {
        Method::Kl => {
            let (manifest, vocab, dark, clean) = load_distributions(ws)?;
            rank_by_kl(
                word,
                &dark,
                &clean,
                &vocab,
                manifest.config.params.min_clean_freq,
            )?
        }
        Method::Ccla => {
            let (manifest, vocab, dark_emb, clean_emb, clean_occ) = load_embeddings(ws)?;
            let k = manifest.config.params.neighborhood;
            let dark_table = build_neighbor_table(&dark_emb, k, &vocab)?;
            let clean_table = build_neighbor_table(&clean_emb, k, &vocab)?;
            let scorer = CclaScorer::new(&dark_table, &clean_table, &vocab)?;
            rank_by_ccla(
                word,
                &scorer,
                &clean_occ,
                manifest.config.params.min_clean_freq,
            )?
        }
    };
    ranked.candidates.truncate(top_m);
    Ok(ranked)
}

/// Runs the clean-clean simulation configured in `config` and writes the
/// JSON report and TSV summary under the workspace report directory.
pub fn simulate(config: &RunConfig, dir: &Path) -> Result<SimulationReport> {
    config.validate().map_err(|e| e.at_stage("config"))?;
    let clean = load_side(config, &config.clean_corpus, CorpusSide::Clean)
        .map_err(|e| e.at_stage("ingest"))?;
    let report = run_clean_clean(&config.simulation, &config.params, &clean)?;

    let ws = Workspace::at(dir);
    let report_dir = ws.report_path("");
    fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
    let json_path = ws.report_path("simulation.json");
    fs::write(&json_path, report.to_json()?).map_err(|e| Error::io(&json_path, e))?;
    let tsv_path = ws.report_path("simulation_summary.tsv");
    fs::write(&tsv_path, report.tsv_summary()).map_err(|e| Error::io(&tsv_path, e))?;
    Ok(report)
}

/// Runs candidate detection against a built workspace and writes the mapping
/// table under the workspace report directory.
pub fn detect(ws: &Workspace, detect_cfg: &DetectConfig) -> Result<MappingReport> {
    let (manifest, vocab, dark, clean) = load_distributions(ws)?;
    let report = mapping_from_models(&dark, &clean, &vocab, &manifest.config.params, detect_cfg)?;

    let report_dir = ws.report_path("");
    fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
    let tsv_path = ws.report_path("mapping.tsv");
    fs::write(&tsv_path, report.to_tsv()).map_err(|e| Error::io(&tsv_path, e))?;
    Ok(report)
}

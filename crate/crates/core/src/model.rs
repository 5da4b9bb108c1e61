//! Domain types and the on-disk record schemas shared by every other module.
//!
//! All persistence is line-delimited JSON (UTF-8, one record per line).
//! Record identifiers are content hashes so that reruns and caches converge
//! on identical keys.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate question id {0:?}")]
    DuplicateId(String),
    #[error("io failure at {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("manifest references missing file {0}")]
    MissingReference(PathBuf),
}

/// Benchmark provenance of a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    AIME24,
    AIME25,
    MATH500,
    MINERVA,
    OLYMPIAD,
    CUSTOM,
}

impl Benchmark {
    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::AIME24 => "AIME24",
            Benchmark::AIME25 => "AIME25",
            Benchmark::MATH500 => "MATH500",
            Benchmark::MINERVA => "MINERVA",
            Benchmark::OLYMPIAD => "OLYMPIAD",
            Benchmark::CUSTOM => "CUSTOM",
        }
    }

    /// The five standard benchmarks that make up a full evaluation pool.
    pub const STANDARD: [Benchmark; 5] = [
        Benchmark::AIME24,
        Benchmark::AIME25,
        Benchmark::MATH500,
        Benchmark::MINERVA,
        Benchmark::OLYMPIAD,
    ];
}

/// A task instance: question text plus its canonical gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub benchmark: Benchmark,
    pub text: String,
    pub gold_answer: String,
}

impl Question {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.text.trim().is_empty() {
            return Err(StoreError::InvalidField {
                field: "text",
                reason: format!("question {} has empty text", self.id),
            });
        }
        if self.gold_answer.trim().is_empty() {
            return Err(StoreError::InvalidField {
                field: "gold_answer",
                reason: format!("question {} has empty gold answer", self.id),
            });
        }
        Ok(())
    }
}

/// An ordered, duplicate-free collection of questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub name: String,
    pub questions: Vec<Question>,
}

impl QuestionSet {
    pub fn new(name: impl Into<String>, questions: Vec<Question>) -> Result<Self, StoreError> {
        let mut seen = BTreeSet::new();
        for q in &questions {
            q.validate()?;
            if !seen.insert(q.id.clone()) {
                return Err(StoreError::DuplicateId(q.id.clone()));
            }
        }
        Ok(Self { name: name.into(), questions })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

/// How prefix lengths are counted for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenizerMode {
    ENDPOINT,
    WHITESPACE,
}

/// A named model behind an OpenAI-compatible serving endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    pub name: String,
    pub endpoint_url: String,
    pub prompt_template_id: String,
    pub tokenizer_mode: TokenizerMode,
}

impl ModelRef {
    pub fn validate(&self) -> Result<(), StoreError> {
        let parsed = reqwest::Url::parse(&self.endpoint_url).map_err(|e| StoreError::InvalidField {
            field: "endpoint_url",
            reason: format!("{}: {e}", self.endpoint_url),
        })?;
        if !parsed.has_host() {
            return Err(StoreError::InvalidField {
                field: "endpoint_url",
                reason: format!("{} is not an absolute URL", self.endpoint_url),
            });
        }
        Ok(())
    }

    /// Model name made safe for use as a file-name component.
    pub fn file_stem(&self) -> String {
        sanitize_component(&self.name)
    }
}

pub fn sanitize_component(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Sampling hyperparameters shared by every request in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub samples_per_item: u32,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(StoreError::InvalidField {
                field: "temperature",
                reason: format!("{} < 0", self.temperature),
            });
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(StoreError::InvalidField {
                field: "top_p",
                reason: format!("{} outside (0, 1]", self.top_p),
            });
        }
        if self.max_tokens == 0 {
            return Err(StoreError::InvalidField { field: "max_tokens", reason: "0".into() });
        }
        if self.samples_per_item == 0 {
            return Err(StoreError::InvalidField { field: "samples_per_item", reason: "0".into() });
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 0.6, top_p: 0.95, max_tokens: 32_768, samples_per_item: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryVerdict {
    CORRECT,
    WRONG,
    UNVERIFIED,
}

/// One sampled reasoning trace plus its extracted final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    pub model: String,
    pub sample_index: u32,
    pub reasoning: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub verdict: TrajectoryVerdict,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.verdict == TrajectoryVerdict::CORRECT && self.answer.is_none() {
            return Err(StoreError::InvalidField {
                field: "verdict",
                reason: format!(
                    "trajectory {}#{} marked CORRECT without an answer",
                    self.question_id, self.sample_index
                ),
            });
        }
        Ok(())
    }

    /// Stable reference for item records.
    pub fn reference(&self) -> TrajectoryRef {
        TrajectoryRef {
            question_id: self.question_id.clone(),
            model: self.model.clone(),
            sample_index: self.sample_index,
        }
    }
}

/// Identifies a trajectory within a run's solo stores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrajectoryRef {
    pub question_id: String,
    pub model: String,
    pub sample_index: u32,
}

/// Truncation parameters for one steered item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerSpec {
    pub m_fraction: f64,
    pub n_fraction: f64,
    pub preserve_first_paragraph: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    RECOVERABILITY,
    GUIDABILITY,
}

impl TestKind {
    pub fn file_stem(&self) -> &'static str {
        match self {
            TestKind::RECOVERABILITY => "recoverability",
            TestKind::GUIDABILITY => "guidability",
        }
    }
}

/// A test item: question plus a spliced prefix to be force-completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeredItem {
    pub item_id: String,
    pub kind: TestKind,
    pub question_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub og_source: Option<TrajectoryRef>,
    pub steer_source: TrajectoryRef,
    pub steer_origin_question_id: String,
    pub spec: SteerSpec,
    pub prefix_text: String,
    pub steer_contains_answer: bool,
}

impl SteeredItem {
    pub fn validate(&self) -> Result<(), StoreError> {
        match self.kind {
            TestKind::GUIDABILITY => {
                if self.spec.m_fraction != 0.0 || self.og_source.is_some() {
                    return Err(StoreError::InvalidField {
                        field: "kind",
                        reason: format!("guidability item {} carries og content", self.item_id),
                    });
                }
                if self.steer_origin_question_id != self.question_id {
                    return Err(StoreError::InvalidField {
                        field: "steer_origin_question_id",
                        reason: format!(
                            "guidability item {} steer must come from its own question",
                            self.item_id
                        ),
                    });
                }
            }
            TestKind::RECOVERABILITY => {
                if self.steer_origin_question_id == self.question_id {
                    return Err(StoreError::InvalidField {
                        field: "steer_origin_question_id",
                        reason: format!(
                            "recoverability item {} steer must come from a different question",
                            self.item_id
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleVerdict {
    CORRECT,
    WRONG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictSource {
    NORMALIZER,
    JUDGE,
}

/// One off-trajectory completion with its verification verdict.
///
/// The gateway emits samples with `verdict` unset; the scoring pass assigns
/// it exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSample {
    pub item_id: String,
    pub sample_index: u32,
    pub completion_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<SampleVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict_source: Option<VerdictSource>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub main_model: ModelRef,
    pub steer_models: Vec<ModelRef>,
    pub params: SamplingParams,
    pub spec_grid: Vec<SteerSpec>,
    pub question_set: String,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    /// True when the endpoint accepted per-request seeds; false means
    /// sampling was not reproducible server-side.
    #[serde(default)]
    pub seeded_sampling: bool,
    /// Set when ENDPOINT token mode fell back to whitespace segmentation.
    #[serde(default)]
    pub tokenizer_fallback: bool,
}

impl RunManifest {
    /// Hash of the run-determining fields. `created_at` is excluded so two
    /// scratch runs of the same configuration agree on the hash.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            run_id: &'a str,
            main_model: &'a ModelRef,
            steer_models: &'a [ModelRef],
            params: &'a SamplingParams,
            spec_grid: &'a [SteerSpec],
            question_set: &'a str,
            seed: u64,
        }
        let canonical = Canonical {
            run_id: &self.run_id,
            main_model: &self.main_model,
            steer_models: &self.steer_models,
            params: &self.params,
            spec_grid: &self.spec_grid,
            question_set: &self.question_set,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_digest(&hasher.finalize())
    }
}

/// 16-hex-char content id over the given canonical fields.
pub fn content_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hex_digest(&hasher.finalize());
    digest[..16].to_string()
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Full-width content hash (used for cache keys).
pub fn content_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex_digest(&hasher.finalize())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure { path: path.to_path_buf(), source }
}

/// Load and validate a question set from a JSONL file (one question per line).
pub fn load_question_set(path: impl AsRef<Path>) -> Result<QuestionSet, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut questions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line).map_err(|e| StoreError::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        questions.push(q);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "questions".to_string());
    QuestionSet::new(name, questions)
}

/// Append records to a JSONL file, one object per line. Returns the number
/// of records written.
pub fn write_records<T, I>(path: impl AsRef<Path>, records: I) -> Result<usize, StoreError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let path = path.as_ref();
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    let mut count = 0;
    for record in records {
        let line = serde_json::to_string(&record).map_err(|e| StoreError::MalformedRecord {
            line: count + 1,
            message: e.to_string(),
        })?;
        writer.write_all(line.as_bytes()).map_err(io_err(path))?;
        writer.write_all(b"\n").map_err(io_err(path))?;
        count += 1;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(count)
}

/// Replace the file at `path` with exactly these records, atomically
/// (write to a temp sibling, then rename).
pub fn replace_records<T, I>(path: impl AsRef<Path>, records: I) -> Result<usize, StoreError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let path = path.as_ref();
    let tmp = path.with_extension("jsonl.tmp");
    if tmp.exists() {
        fs::remove_file(&tmp).map_err(io_err(&tmp))?;
    }
    let count = write_records(&tmp, records)?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(count)
}

/// Read every record from a JSONL file.
pub fn read_records<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Layout of one run directory:
/// `runs/<run_id>/{manifest.json, solo/*.jsonl, items/*.jsonl, samples/*.jsonl, reports/*, cache/*}`.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(runs_root: impl AsRef<Path>, run_id: &str) -> Self {
        Self { root: runs_root.as_ref().join(sanitize_component(run_id)) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ensure_layout(&self) -> Result<(), StoreError> {
        for sub in ["solo", "items", "samples", "reports", "cache"] {
            let dir = self.root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn solo_trajectories(&self, model: &ModelRef) -> PathBuf {
        self.root.join("solo").join(format!("{}.trajectories.jsonl", model.file_stem()))
    }

    pub fn solo_profiles(&self, model: &ModelRef) -> PathBuf {
        self.root.join("solo").join(format!("{}.profiles.jsonl", model.file_stem()))
    }

    pub fn items(&self, kind: TestKind) -> PathBuf {
        self.root.join("items").join(format!("{}.jsonl", kind.file_stem()))
    }

    /// Marker written when a generation stage finds no eligible questions.
    pub fn items_na_marker(&self, kind: TestKind) -> PathBuf {
        self.root.join("items").join(format!("{}.NA.json", kind.file_stem()))
    }

    pub fn samples(&self, kind: TestKind) -> PathBuf {
        self.root.join("samples").join(format!("{}.jsonl", kind.file_stem()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("reports").join("metrics.json")
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let path = self.manifest_path();
        let json = serde_json::to_string_pretty(manifest).map_err(|e| StoreError::MalformedRecord {
            line: 0,
            message: e.to_string(),
        })?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, json.as_bytes()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }

    pub fn read_manifest(&self) -> Result<RunManifest, StoreError> {
        let path = self.manifest_path();
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| StoreError::MalformedRecord {
                line: 0,
                message: e.to_string(),
            })?;
        Ok(manifest)
    }

    /// Invariant check at load time: every file the manifest references exists.
    pub fn check_references(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let qs = PathBuf::from(&manifest.question_set);
        if !qs.exists() {
            return Err(StoreError::MissingReference(qs));
        }
        Ok(())
    }
}

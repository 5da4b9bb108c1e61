//! Pipeline orchestration behind the CLI subcommands: config, manifests,
//! stage drivers, and resume.
//!
//! Stages are idempotent: every endpoint exchange is cached under the run
//! directory, stores are rewritten in a deterministic order, and a rerun of
//! any stage converges on byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::gateway::{builtin_templates, Gateway, GatewayConfig, GatewayTokenizer, PromptTemplate};
use crate::metrics::{self, MetricReport, ModelMetrics};
use crate::model::{
    load_question_set, read_records, replace_records, Benchmark, CompletionSample, ModelRef,
    Question, QuestionSet, RunDir, RunManifest, SamplingParams, SteerSpec, SteeredItem, TestKind,
    TokenizerMode, Trajectory, TrajectoryVerdict,
};
use crate::reporter;
use crate::segmenter::Segmenter;
use crate::testgen::{
    self, GenReport, GridConfig, SelectionMode, SelectionStrategy, SoloProfile,
};
use crate::verifier::{JudgeConfig, JudgePolicy, Scorer};

pub const API_KEY_ENV: &str = "OFFTRACK_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    pub question_set: PathBuf,
    #[serde(default = "default_runs_root")]
    pub runs_root: PathBuf,
    /// Benchmarks that make up the benchmark average for this question set.
    #[serde(default = "default_benchmarks")]
    pub benchmarks: Vec<Benchmark>,
    #[serde(default)]
    pub params: SamplingParams,
    pub main_model: ModelRef,
    #[serde(default)]
    pub steer_models: Vec<ModelRef>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub judge: JudgeSettings,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
    /// Extra or overriding prompt templates; built-ins are always available.
    #[serde(default)]
    pub templates: BTreeMap<String, PromptTemplateConfig>,
}

fn default_runs_root() -> PathBuf {
    PathBuf::from("runs")
}

fn default_benchmarks() -> Vec<Benchmark> {
    Benchmark::STANDARD.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    pub strategy: SelectionStrategy,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { mode: SelectionMode::Shared, strategy: SelectionStrategy::UniformFullySolved }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub model: Option<ModelRef>,
    #[serde(default = "default_judge_temperature")]
    pub temperature: f64,
    #[serde(default = "default_judge_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_judge_policy")]
    pub on_unavailable: JudgePolicy,
}

fn default_judge_temperature() -> f64 {
    0.0
}

fn default_judge_max_tokens() -> u32 {
    1024
}

fn default_judge_policy() -> JudgePolicy {
    JudgePolicy::Halt
}

impl Default for JudgeSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            model: None,
            temperature: default_judge_temperature(),
            max_tokens: default_judge_max_tokens(),
            on_unavailable: default_judge_policy(),
        }
    }
}

impl JudgeSettings {
    pub fn to_judge_config(&self) -> JudgeConfig {
        JudgeConfig {
            judge_model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            enabled: self.enabled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcurrencyConfig {
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_retry_attempts")]
    pub retry_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_true")]
    pub send_seed: bool,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    /// Allow endpoint token mode to fall back to whitespace segmentation.
    #[serde(default = "default_true")]
    pub tokenizer_fallback: bool,
}

fn default_max_inflight() -> usize {
    16
}
fn default_retry_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_true() -> bool {
    true
}
fn default_timeout() -> u64 {
    600
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        Self {
            max_inflight: default_max_inflight(),
            retry_attempts: default_retry_attempts(),
            backoff_ms: default_backoff_ms(),
            send_seed: true,
            request_timeout_secs: default_timeout(),
            tokenizer_fallback: true,
        }
    }
}

/// Template as written in config files; id comes from the map key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplateConfig {
    pub solo_format: String,
    pub continue_format: String,
    #[serde(default)]
    pub think_open: String,
    #[serde(default = "default_think_close")]
    pub think_close: String,
}

fn default_think_close() -> String {
    "</think>".to_string()
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.main_model.validate()?;
        for model in &self.steer_models {
            model.validate()?;
        }
        if let Some(judge) = &self.judge.model {
            judge.validate()?;
        }
        if self.judge.enabled && self.judge.model.is_none() {
            bail!("judge.enabled requires judge.model");
        }
        Ok(())
    }

    /// Built-in templates overlaid with config-supplied ones.
    pub fn templates(&self) -> BTreeMap<String, PromptTemplate> {
        let mut templates = builtin_templates();
        for (id, t) in &self.templates {
            templates.insert(
                id.clone(),
                PromptTemplate {
                    template_id: id.clone(),
                    solo_format: t.solo_format.clone(),
                    continue_format: t.continue_format.clone(),
                    think_open: t.think_open.clone(),
                    think_close: t.think_close.clone(),
                },
            );
        }
        templates
    }

    fn spec_grid(&self) -> Vec<SteerSpec> {
        let mut grid: Vec<SteerSpec> = self
            .grid
            .m_grid
            .iter()
            .map(|&m| SteerSpec {
                m_fraction: m,
                n_fraction: self.grid.n_default,
                preserve_first_paragraph: self.grid.preserve_first_paragraph,
            })
            .collect();
        grid.extend(self.grid.n_grid.iter().map(|&n| SteerSpec {
            m_fraction: 0.0,
            n_fraction: n,
            preserve_first_paragraph: false,
        }));
        grid
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            run_id: self.run_id.clone(),
            main_model: self.main_model.clone(),
            steer_models: self.steer_models.clone(),
            params: self.params.clone(),
            spec_grid: self.spec_grid(),
            question_set: self.question_set.to_string_lossy().into_owned(),
            created_at: Utc::now(),
            seed: self.seed,
            seeded_sampling: self.concurrency.send_seed,
            tokenizer_fallback: false,
        }
    }
}

/// Everything a stage needs: config, run layout, gateway, templates, pool.
pub struct RunContext {
    pub config: Config,
    pub run_dir: RunDir,
    pub gateway: Arc<Gateway>,
    pub templates: BTreeMap<String, PromptTemplate>,
    pub questions: QuestionSet,
    pub manifest: RunManifest,
}

impl RunContext {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let run_dir = RunDir::new(&config.runs_root, &config.run_id);
        run_dir.ensure_layout()?;
        let questions = load_question_set(&config.question_set)?;
        let templates = config.templates();
        for model in std::iter::once(&config.main_model).chain(&config.steer_models) {
            if !templates.contains_key(&model.prompt_template_id) {
                bail!("model {} names unknown template {}", model.name, model.prompt_template_id);
            }
        }
        let manifest = match run_dir.manifest_path().exists() {
            true => {
                let existing = run_dir.read_manifest()?;
                run_dir.check_references(&existing)?;
                let fresh = config.manifest();
                if existing.config_hash() != fresh.config_hash() {
                    bail!(
                        "run {} already exists with a different configuration; \
                         choose a new run_id or restore the original config",
                        config.run_id
                    );
                }
                existing
            }
            false => {
                let manifest = config.manifest();
                run_dir.check_references(&manifest)?;
                run_dir.write_manifest(&manifest)?;
                manifest
            }
        };
        let gateway_config = GatewayConfig {
            max_inflight: config.concurrency.max_inflight,
            retry_attempts: config.concurrency.retry_attempts,
            backoff_ms: config.concurrency.backoff_ms,
            send_seed: config.concurrency.send_seed,
            request_timeout_secs: config.concurrency.request_timeout_secs,
        };
        let api_key = std::env::var(API_KEY_ENV).ok();
        let gateway = Arc::new(Gateway::new(run_dir.cache_dir(), gateway_config, api_key));
        Ok(Self { config, run_dir, gateway, templates, questions, manifest })
    }

    pub fn template_for(&self, model: &ModelRef) -> Result<&PromptTemplate> {
        self.templates
            .get(&model.prompt_template_id)
            .ok_or_else(|| anyhow!("no template {} for model {}", model.prompt_template_id, model.name))
    }

    pub fn resolve_model(&self, name: Option<&str>) -> Result<ModelRef> {
        match name {
            None => Ok(self.config.main_model.clone()),
            Some(name) => std::iter::once(&self.config.main_model)
                .chain(&self.config.steer_models)
                .find(|m| m.name == name)
                .cloned()
                .ok_or_else(|| anyhow!("model {name} is not in the manifest")),
        }
    }

    /// Segmenter for prefix truncation, honoring the model's token mode.
    pub fn segmenter_for(&self, model: &ModelRef) -> Segmenter {
        match model.tokenizer_mode {
            TokenizerMode::WHITESPACE => Segmenter::whitespace(),
            TokenizerMode::ENDPOINT => Segmenter::endpoint(
                Arc::new(GatewayTokenizer {
                    gateway: self.gateway.clone(),
                    model: model.clone(),
                    handle: tokio::runtime::Handle::current(),
                }),
                self.config.concurrency.tokenizer_fallback,
            ),
        }
    }

    fn record_tokenizer_fallback(&self, segmenter: &Segmenter) -> Result<()> {
        if segmenter.fallback_occurred() && !self.manifest.tokenizer_fallback {
            let mut manifest = self.run_dir.read_manifest()?;
            manifest.tokenizer_fallback = true;
            self.run_dir.write_manifest(&manifest)?;
        }
        Ok(())
    }

    fn question(&self, id: &str) -> Result<&Question> {
        self.questions.get(id).ok_or_else(|| anyhow!("question {id} not in the pool"))
    }
}

/// Per-stage statistics persisted under reports/ (deterministic content only).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub judge_calls: u64,
    pub records: usize,
    #[serde(default)]
    pub judge_degraded: bool,
}

fn write_stage_stats(run: &RunDir, stage: &str, stats: &StageStats) -> Result<()> {
    let path = run.reports_dir().join(format!("run_stats_{stage}.json"));
    let body = serde_json::to_string_pretty(stats)?;
    std::fs::write(path, body)?;
    Ok(())
}

pub fn read_stage_stats(run: &RunDir, stage: &str) -> Option<StageStats> {
    let path = run.reports_dir().join(format!("run_stats_{stage}.json"));
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Sample k solo trajectories per question for one model, verify them, and
/// write the trajectory and profile stores.
pub async fn cmd_solo(ctx: &RunContext, model_name: Option<&str>, resume: bool) -> Result<()> {
    let model = ctx.resolve_model(model_name)?;
    let out_path = ctx.run_dir.solo_trajectories(&model);
    if resume && out_path.exists() {
        log::info!("solo store for {} exists; --resume skips the stage", model.name);
        return Ok(());
    }
    let template = ctx.template_for(&model)?;
    let params = &ctx.config.params;
    let k = params.samples_per_item;
    let judge_config = ctx.config.judge.to_judge_config();
    let scorer = Scorer::new(&judge_config, Some(ctx.gateway.as_ref()), ctx.config.judge.on_unavailable);

    let batches = futures::future::try_join_all(ctx.questions.questions.iter().map(|q| {
        ctx.gateway.sample_solo(&model, template, q, params, k, ctx.config.seed)
    }))
    .await?;

    let mut trajectories = Vec::with_capacity(ctx.questions.len() * k as usize);
    for (question, batch) in ctx.questions.questions.iter().zip(batches) {
        let verdicts = futures::future::try_join_all(batch.iter().map(|t| {
            scorer.verdict(&t.reasoning, &question.text, &question.gold_answer)
        }))
        .await?;
        for (mut trajectory, (extracted, verdict)) in batch.into_iter().zip(verdicts) {
            trajectory.answer = extracted;
            trajectory.verdict = match verdict.label {
                crate::model::SampleVerdict::CORRECT => TrajectoryVerdict::CORRECT,
                crate::model::SampleVerdict::WRONG => TrajectoryVerdict::WRONG,
            };
            trajectories.push(trajectory);
        }
    }
    trajectories.sort_by(|a, b| {
        a.question_id.cmp(&b.question_id).then_with(|| a.sample_index.cmp(&b.sample_index))
    });
    replace_records(&out_path, trajectories.iter())?;
    let profiles = metrics::solve_profiles(&trajectories, k)?;
    replace_records(ctx.run_dir.solo_profiles(&model), profiles.iter())?;
    write_stage_stats(
        &ctx.run_dir,
        &format!("solo_{}", model.file_stem()),
        &StageStats {
            judge_calls: scorer.judge_calls(),
            records: trajectories.len(),
            judge_degraded: scorer.degraded(),
        },
    )?;
    let stats = ctx.gateway.flush_cache_stats(&format!("solo_{}", model.file_stem()))?;
    log::info!(
        "solo[{}]: {} trajectories, cache {}/{} hit/miss, {} judge calls",
        model.name,
        trajectories.len(),
        stats.hits,
        stats.misses,
        scorer.judge_calls()
    );
    Ok(())
}

fn load_profiles(ctx: &RunContext, model: &ModelRef) -> Result<Vec<SoloProfile>> {
    let path = ctx.run_dir.solo_profiles(model);
    if !path.exists() {
        bail!("no solo profiles for model {}; run `offtrack solo --model {}` first", model.name, model.name);
    }
    Ok(read_records(path)?)
}

fn load_solo_store(ctx: &RunContext, model: &ModelRef) -> Result<Vec<Trajectory>> {
    let path = ctx.run_dir.solo_trajectories(model);
    if !path.exists() {
        bail!("no solo store for model {}; run `offtrack solo --model {}` first", model.name, model.name);
    }
    Ok(read_records(path)?)
}

fn gold_lookup(questions: &QuestionSet) -> BTreeMap<String, String> {
    questions.questions.iter().map(|q| (q.id.clone(), q.gold_answer.clone())).collect()
}

fn write_na_marker(ctx: &RunContext, kind: TestKind, reason: &str) -> Result<()> {
    let marker = serde_json::json!({ "kind": kind.file_stem(), "eligible": 0, "reason": reason });
    std::fs::write(ctx.run_dir.items_na_marker(kind), serde_json::to_string_pretty(&marker)?)?;
    Ok(())
}

fn write_gen_report(ctx: &RunContext, kind: TestKind, report: &GenReport) -> Result<()> {
    let path = ctx.run_dir.reports_dir().join(format!("gen_{}.json", kind.file_stem()));
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Build recoverability items from the main model's solo store.
pub async fn cmd_gen_recoverability(ctx: &RunContext, resume: bool) -> Result<()> {
    let kind = TestKind::RECOVERABILITY;
    let out_path = ctx.run_dir.items(kind);
    if resume && out_path.exists() {
        log::info!("recoverability items exist; --resume skips the stage");
        return Ok(());
    }
    let main = &ctx.config.main_model;
    let mut profiles = BTreeMap::new();
    profiles.insert(main.name.clone(), load_profiles(ctx, main)?);
    if ctx.config.selection.mode == SelectionMode::Shared {
        for model in &ctx.config.steer_models {
            profiles.insert(model.name.clone(), load_profiles(ctx, model)?);
        }
    }
    // Shared mode keeps the whole fully-solved intersection; individual mode
    // samples down to the configured og trajectory count.
    let target_count = match ctx.config.selection.mode {
        SelectionMode::Shared => None,
        SelectionMode::Individual => Some(ctx.config.grid.og_count),
    };
    let selected = testgen::select_recoverability_questions(
        &ctx.questions,
        &profiles,
        &main.name,
        ctx.config.selection.mode,
        ctx.config.selection.strategy,
        target_count,
        ctx.config.seed,
    )?;
    if selected.is_empty() {
        write_na_marker(ctx, kind, "no eligible questions for recoverability")?;
        log::warn!("recoverability: empty eligible set; N/A marker written");
        return Ok(());
    }
    let solo = load_solo_store(ctx, main)?;
    let segmenter = ctx.segmenter_for(main);
    let (items, report) = testgen::build_recoverability_items(
        &selected,
        &solo,
        &solo,
        &ctx.config.grid,
        &segmenter,
        &gold_lookup(&ctx.questions),
        ctx.config.seed,
    )?;
    ctx.record_tokenizer_fallback(&segmenter)?;
    replace_records(&out_path, items.iter())?;
    write_gen_report(ctx, kind, &report)?;
    log::info!(
        "recoverability: {} items over {} questions ({} positions)",
        report.items_emitted,
        report.questions,
        ctx.config.grid.m_grid.len()
    );
    Ok(())
}

/// Build guidability items from the steer models' solo stores.
pub async fn cmd_gen_guidability(ctx: &RunContext, resume: bool) -> Result<()> {
    let kind = TestKind::GUIDABILITY;
    let out_path = ctx.run_dir.items(kind);
    if resume && out_path.exists() {
        log::info!("guidability items exist; --resume skips the stage");
        return Ok(());
    }
    let main = &ctx.config.main_model;
    let profiles = load_profiles(ctx, main)?;
    let selected = testgen::select_guidability_questions(&ctx.questions, &profiles);
    if selected.is_empty() {
        write_na_marker(ctx, kind, "model solves too many questions; no solve rate <= 1/k")?;
        log::warn!("guidability: empty eligible set; N/A marker written");
        return Ok(());
    }
    if ctx.config.steer_models.is_empty() {
        bail!("guidability needs at least one steer model in the config");
    }
    let mut guide_stores = BTreeMap::new();
    for guide in &ctx.config.steer_models {
        guide_stores.insert(guide.name.clone(), load_solo_store(ctx, guide)?);
    }
    let segmenter = ctx.segmenter_for(main);
    let (items, report) = testgen::build_guidability_items(
        &selected,
        &guide_stores,
        &ctx.config.grid,
        &segmenter,
        ctx.config.seed,
    )?;
    ctx.record_tokenizer_fallback(&segmenter)?;
    replace_records(&out_path, items.iter())?;
    write_gen_report(ctx, kind, &report)?;
    log::info!(
        "guidability: {} items over {} questions, {} skipped pairings",
        report.items_emitted,
        report.questions,
        report.skipped.len()
    );
    Ok(())
}

/// Force k off-trajectory completions per item and assign verdicts.
pub async fn cmd_run(ctx: &RunContext, kind: TestKind, resume: bool) -> Result<()> {
    let out_path = ctx.run_dir.samples(kind);
    if resume && out_path.exists() {
        log::info!("{} samples exist; --resume skips the stage", kind.file_stem());
        return Ok(());
    }
    let items_path = ctx.run_dir.items(kind);
    if !items_path.exists() {
        if ctx.run_dir.items_na_marker(kind).exists() {
            log::warn!("{}: generation marked N/A; nothing to run", kind.file_stem());
            return Ok(());
        }
        bail!("no items for {}; run `offtrack gen-{}` first", kind.file_stem(), match kind {
            TestKind::RECOVERABILITY => "recov",
            TestKind::GUIDABILITY => "guid",
        });
    }
    let items: Vec<SteeredItem> = read_records(&items_path)?;
    let main = &ctx.config.main_model;
    let template = ctx.template_for(main)?;
    let params = &ctx.config.params;
    let k = params.samples_per_item;
    let judge_config = ctx.config.judge.to_judge_config();
    let scorer = Scorer::new(&judge_config, Some(ctx.gateway.as_ref()), ctx.config.judge.on_unavailable);

    let batches = futures::future::try_join_all(items.iter().map(|item| async move {
        let question = ctx.question(&item.question_id)?;
        let samples = ctx
            .gateway
            .complete_off_trajectory(main, template, question, item, params, k, ctx.config.seed)
            .await?;
        anyhow::Ok((item, question, samples))
    }))
    .await?;

    let mut scored: Vec<CompletionSample> = Vec::with_capacity(items.len() * k as usize);
    for (_, question, samples) in &batches {
        let verdicts = futures::future::try_join_all(samples.iter().map(|s| {
            scorer.verdict(&s.completion_text, &question.text, &question.gold_answer)
        }))
        .await?;
        for (sample, (extracted, verdict)) in samples.iter().zip(verdicts) {
            let mut sample = sample.clone();
            sample.extracted_answer = extracted;
            sample.verdict = Some(verdict.label);
            sample.verdict_source = Some(verdict.source);
            scored.push(sample);
        }
    }
    scored.sort_by(|a, b| a.item_id.cmp(&b.item_id).then_with(|| a.sample_index.cmp(&b.sample_index)));
    replace_records(&out_path, scored.iter())?;
    write_stage_stats(
        &ctx.run_dir,
        kind.file_stem(),
        &StageStats {
            judge_calls: scorer.judge_calls(),
            records: scored.len(),
            judge_degraded: scorer.degraded(),
        },
    )?;
    let stats = ctx.gateway.flush_cache_stats(kind.file_stem())?;
    log::info!(
        "run[{}]: {} samples over {} items, cache {}/{} hit/miss, {} judge calls",
        kind.file_stem(),
        scored.len(),
        items.len(),
        stats.hits,
        stats.misses,
        scorer.judge_calls()
    );
    Ok(())
}

fn subset_label(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::Shared => "shared",
        SelectionMode::Individual => "individual",
    }
}

/// Compute every metric from the stores and write reports/metrics.json.
pub fn cmd_score(ctx: &RunContext) -> Result<MetricReport> {
    let main = &ctx.config.main_model;
    let k = ctx.config.params.samples_per_item;
    let mut model_metrics = ModelMetrics::default();
    let mut any_input = false;

    let solo_path = ctx.run_dir.solo_trajectories(main);
    if solo_path.exists() {
        any_input = true;
        let solo: Vec<Trajectory> = read_records(&solo_path)?;
        let mut by_suite: BTreeMap<Benchmark, (i64, i64)> = BTreeMap::new();
        for t in &solo {
            let question = ctx.question(&t.question_id)?;
            let entry = by_suite.entry(question.benchmark).or_insert((0, 0));
            entry.0 += i64::from(t.verdict == TrajectoryVerdict::CORRECT);
            entry.1 += 1;
        }
        let mut suite_values = BTreeMap::new();
        for (bench, (numer, denom)) in &by_suite {
            let cell = crate::metrics::ScoreCell {
                value: *numer as f64 / *denom as f64,
                numerator: *numer,
                denominator: *denom,
                grouping: crate::metrics::CellGroup {
                    model: main.name.clone(),
                    kind: "benchmark".into(),
                    subset: bench.name().into(),
                    position_or_n: None,
                    guide: None,
                },
            };
            suite_values.insert(*bench, cell.value);
            model_metrics.benchmark_by_suite.insert(bench.name().to_string(), cell);
        }
        model_metrics.benchmark_avg =
            Some(metrics::benchmark_average(&suite_values, &ctx.config.benchmarks)?);
    }

    let subset = subset_label(ctx.config.selection.mode);
    for kind in [TestKind::RECOVERABILITY, TestKind::GUIDABILITY] {
        let items_path = ctx.run_dir.items(kind);
        let samples_path = ctx.run_dir.samples(kind);
        if !items_path.exists() || !samples_path.exists() {
            continue;
        }
        any_input = true;
        let items: Vec<SteeredItem> = read_records(&items_path)?;
        let samples: Vec<CompletionSample> = read_records(&samples_path)?;
        match kind {
            TestKind::RECOVERABILITY => {
                let table = metrics::recoverability_table(&main.name, subset, &items, &samples, k)?;
                model_metrics.recoverability.insert(subset.to_string(), table);
            }
            TestKind::GUIDABILITY => {
                // Guidability's individual subset is per model by definition.
                let table = metrics::guidability_table(&main.name, "individual", &items, &samples, k)?;
                model_metrics.guidability.insert("individual".to_string(), table);
            }
        }
        if let Some(stats) = read_stage_stats(&ctx.run_dir, kind.file_stem()) {
            model_metrics.judge_calls += stats.judge_calls;
        }
    }

    if !any_input {
        bail!("run {} has no solo stores or sample stores to score", ctx.config.run_id);
    }

    let mut report = MetricReport {
        run_id: ctx.config.run_id.clone(),
        manifest_hash: ctx.manifest.config_hash(),
        models: BTreeMap::new(),
    };
    report.models.insert(main.name.clone(), model_metrics);
    let body = serde_json::to_string_pretty(&report)?;
    std::fs::write(ctx.run_dir.metrics_path(), body)?;
    log::info!("metrics written to {}", ctx.run_dir.metrics_path().display());
    Ok(report)
}

/// Render reports from metrics.json (optionally diffing against a base run).
pub fn cmd_report(ctx: &RunContext, ablation_base: Option<&Path>) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(ctx.run_dir.metrics_path())
        .context("metrics.json missing; run `offtrack score` first")?;
    let report: MetricReport = serde_json::from_str(&text)?;
    let base = match ablation_base {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading ablation base {}", path.display()))?;
            Some(serde_json::from_str::<MetricReport>(&text)?)
        }
        None => None,
    };
    let written = reporter::write_reports(&ctx.run_dir, &report, base.as_ref())?;
    for path in &written {
        log::info!("wrote {}", path.display());
    }
    Ok(written)
}

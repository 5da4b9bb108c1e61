//! Shared harness for the integration and acceptance suites: fixture
//! questions, config construction, and full mock pipeline drivers.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use offtrack::cli::{self, Config, ConcurrencyConfig, JudgeSettings, RunContext, SelectionConfig};
use offtrack::metrics::MetricReport;
use offtrack::model::{
    write_records, Benchmark, ModelRef, Question, QuestionSet, SamplingParams, TestKind,
    TokenizerMode,
};
use offtrack::simreasoner::{serve, BehaviorKind, ServerHandle};
use offtrack::testgen::{GridConfig, SelectionMode, SelectionStrategy};
use offtrack::verifier::JudgePolicy;

pub fn fixture_questions(n: usize) -> Vec<Question> {
    (0..n)
        .map(|i| Question {
            id: format!("q{i:02}"),
            benchmark: Benchmark::CUSTOM,
            text: format!("Compute quantity number {i}."),
            gold_answer: format!("{}", 7 * i + 3),
        })
        .collect()
}

pub fn write_question_file(dir: &Path, questions: &[Question]) -> PathBuf {
    let path = dir.join("questions.jsonl");
    write_records(&path, questions.iter()).expect("write questions");
    path
}

pub fn question_set(questions: &[Question]) -> QuestionSet {
    QuestionSet::new("fixture", questions.to_vec()).expect("valid fixture set")
}

pub fn mock_model(name: &str, url: &str) -> ModelRef {
    ModelRef {
        name: name.to_string(),
        endpoint_url: url.to_string(),
        prompt_template_id: "mock".into(),
        tokenizer_mode: TokenizerMode::WHITESPACE,
    }
}

pub struct ConfigSpec<'a> {
    pub run_id: &'a str,
    pub runs_root: PathBuf,
    pub question_file: PathBuf,
    pub main_url: String,
    pub steer: Vec<(&'a str, String)>,
    pub judge_url: Option<String>,
    pub seed: u64,
    pub k: u32,
    pub max_inflight: usize,
}

pub fn build_config(spec: ConfigSpec<'_>) -> Config {
    let steer_models =
        spec.steer.iter().map(|(name, url)| mock_model(name, url)).collect::<Vec<_>>();
    let judge = match &spec.judge_url {
        Some(url) => JudgeSettings {
            enabled: true,
            model: Some(mock_model("mock-judge", url)),
            temperature: 0.0,
            max_tokens: 1024,
            on_unavailable: JudgePolicy::Halt,
        },
        None => JudgeSettings::default(),
    };
    Config {
        run_id: spec.run_id.to_string(),
        seed: spec.seed,
        question_set: spec.question_file,
        runs_root: spec.runs_root,
        benchmarks: vec![Benchmark::CUSTOM],
        params: SamplingParams {
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 32_768,
            samples_per_item: spec.k,
        },
        main_model: mock_model("mock-main", &spec.main_url),
        steer_models,
        grid: GridConfig { og_count: 20, steer_count: 20, ..GridConfig::default() },
        selection: SelectionConfig {
            mode: SelectionMode::Shared,
            strategy: SelectionStrategy::UniformFullySolved,
        },
        judge,
        concurrency: ConcurrencyConfig {
            max_inflight: spec.max_inflight,
            retry_attempts: 3,
            backoff_ms: 10,
            send_seed: true,
            request_timeout_secs: 120,
            tokenizer_fallback: true,
        },
        templates: BTreeMap::new(),
    }
}

pub async fn serve_behavior(questions: &[Question], behavior: BehaviorKind) -> ServerHandle {
    serve(&question_set(questions), behavior, 0, 0).await.expect("mock server binds")
}

/// solo -> gen-recov -> run -> score against whatever the endpoints serve.
pub async fn full_recoverability_pipeline(config: Config) -> anyhow::Result<MetricReport> {
    let ctx = RunContext::new(config)?;
    cli::cmd_solo(&ctx, None, false).await?;
    cli::cmd_gen_recoverability(&ctx, false).await?;
    cli::cmd_run(&ctx, TestKind::RECOVERABILITY, false).await?;
    cli::cmd_score(&ctx)
}

/// main solo -> guide solo -> gen-guid -> run -> score.
pub async fn full_guidability_pipeline(config: Config) -> anyhow::Result<MetricReport> {
    let guide_names: Vec<String> = config.steer_models.iter().map(|m| m.name.clone()).collect();
    let ctx = RunContext::new(config)?;
    cli::cmd_solo(&ctx, None, false).await?;
    for guide in &guide_names {
        cli::cmd_solo(&ctx, Some(guide), false).await?;
    }
    cli::cmd_gen_guidability(&ctx, false).await?;
    cli::cmd_run(&ctx, TestKind::GUIDABILITY, false).await?;
    cli::cmd_score(&ctx)
}

/// Deterministic byte snapshot of every file under reports/ (and optionally
/// the other stores), keyed by relative path.
pub fn snapshot_dir(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

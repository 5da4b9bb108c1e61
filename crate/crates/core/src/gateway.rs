//! Client for OpenAI-compatible serving endpoints: solo sampling and forced
//! off-trajectory completions, with a content-addressed response cache,
//! bounded in-flight concurrency, and retry with exponential backoff.
//!
//! Continuations go through the raw text-completions route. The prefix must
//! land inside the assistant's open thinking span, which chat routes cannot
//! express because they close the assistant turn.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::model::{
    content_hash, CompletionSample, ModelRef, Question, SamplingParams, SteeredItem, TestKind,
    Trajectory, TrajectoryVerdict,
};
use crate::verifier::{self, JudgeBackend, JudgeCallError, JudgeConfig};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint error after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    EndpointError { status: Option<u16>, message: String, attempts: u32 },
    #[error("no prompt template {0:?} configured for this model")]
    TemplateMissing(String),
    #[error("template {id}: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("guidability item {0} has an empty prefix")]
    EmptyPrefix(String),
    #[error("judge model not configured")]
    JudgeModelMissing,
    #[error("cache io at {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A prompt template for one model family. Solo prompts leave the thinking
/// span open after `{question}`; continuation prompts additionally inject
/// `{prefix}` inside that open span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub solo_format: String,
    pub continue_format: String,
    pub think_open: String,
    pub think_close: String,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), GatewayError> {
        for (key, count) in [("{question}", 1), ("{prefix}", 1)] {
            let found = self.continue_format.matches(key).count();
            if found != count {
                return Err(GatewayError::InvalidTemplate {
                    id: self.template_id.clone(),
                    reason: format!("continue_format must contain {key} exactly {count} time(s), found {found}"),
                });
            }
        }
        if self.solo_format.matches("{question}").count() != 1 {
            return Err(GatewayError::InvalidTemplate {
                id: self.template_id.clone(),
                reason: "solo_format must contain {question} exactly once".into(),
            });
        }
        Ok(())
    }

    pub fn render_solo(&self, question: &Question) -> String {
        render(&self.solo_format, &[("{question}", &question.text), ("{question_id}", &question.id)])
    }

    pub fn render_continue(&self, question: &Question, prefix: &str) -> String {
        render(
            &self.continue_format,
            &[("{question}", &question.text), ("{question_id}", &question.id), ("{prefix}", prefix)],
        )
    }
}

/// Single-pass placeholder substitution; placeholder-like text inside
/// substituted values is left untouched.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = vars
            .iter()
            .filter_map(|(key, value)| rest.find(key).map(|pos| (pos, *key, *value)))
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, key, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + key.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

/// Templates for common open-weight families plus the mock convention.
/// These are config data; verify per checkpoint before real runs.
pub fn builtin_templates() -> BTreeMap<String, PromptTemplate> {
    let mut out = BTreeMap::new();
    let deepseek_solo = "<|begin\u{2581}of\u{2581}sentence|><|User|>{question}<|Assistant|><think>\n";
    out.insert(
        "deepseek-r1".to_string(),
        PromptTemplate {
            template_id: "deepseek-r1".into(),
            solo_format: deepseek_solo.into(),
            continue_format: format!("{deepseek_solo}{{prefix}}"),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
        },
    );
    let qwen_solo = "<|im_start|>user\n{question}<|im_end|>\n<|im_start|>assistant\n<think>\n";
    out.insert(
        "qwen3".to_string(),
        PromptTemplate {
            template_id: "qwen3".into(),
            solo_format: qwen_solo.into(),
            continue_format: format!("{qwen_solo}{{prefix}}"),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
        },
    );
    let mock_solo = "%%QID:{question_id}%%\nQuestion: {question}\nAssistant: <think>\n";
    out.insert(
        "mock".to_string(),
        PromptTemplate {
            template_id: "mock".into(),
            solo_format: mock_solo.into(),
            continue_format: format!("{mock_solo}{{prefix}}"),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
        },
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// One cached endpoint exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub cache_key: String,
    pub response_text: String,
    pub finish_reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub max_inflight: usize,
    pub retry_attempts: u32,
    pub backoff_ms: u64,
    pub send_seed: bool,
    pub request_timeout_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            max_inflight: 16,
            retry_attempts: 3,
            backoff_ms: 200,
            send_seed: true,
            request_timeout_secs: 600,
        }
    }
}

pub struct Gateway {
    client: reqwest::Client,
    cache_dir: PathBuf,
    config: GatewayConfig,
    semaphore: Arc<Semaphore>,
    inflight: AtomicUsize,
    peak_inflight: AtomicUsize,
    hits: AtomicU64,
    misses: AtomicU64,
    api_key: Option<String>,
}

impl Gateway {
    pub fn new(cache_dir: impl Into<PathBuf>, config: GatewayConfig, api_key: Option<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .expect("reqwest client");
        let semaphore = Arc::new(Semaphore::new(config.max_inflight.max(1)));
        Self {
            client,
            cache_dir: cache_dir.into(),
            config,
            semaphore,
            inflight: AtomicUsize::new(0),
            peak_inflight: AtomicUsize::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            api_key,
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats { hits: self.hits.load(Ordering::Relaxed), misses: self.misses.load(Ordering::Relaxed) }
    }

    /// Highest number of simultaneous in-flight HTTP requests observed.
    pub fn peak_inflight(&self) -> usize {
        self.peak_inflight.load(Ordering::Relaxed)
    }

    /// Persist the counters next to the cache they describe and return them.
    pub fn flush_cache_stats(&self, stage: &str) -> Result<CacheStats, GatewayError> {
        let stats = self.cache_stats();
        let path = self.cache_dir.join(format!("stats_{stage}.json"));
        let body = serde_json::to_vec_pretty(&stats).expect("stats serialize");
        std::fs::create_dir_all(&self.cache_dir)
            .map_err(|e| GatewayError::CacheIo { path: self.cache_dir.clone(), source: e })?;
        std::fs::write(&path, body).map_err(|e| GatewayError::CacheIo { path, source: e })?;
        Ok(stats)
    }

    fn cache_path(&self, key: &str) -> PathBuf {
        self.cache_dir.join(format!("{key}.json"))
    }

    fn cache_read(&self, key: &str) -> Option<RequestRecord> {
        let path = self.cache_path(key);
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Write-then-rename so concurrent readers never observe a torn entry.
    fn cache_write(&self, record: &RequestRecord) -> Result<(), GatewayError> {
        std::fs::create_dir_all(&self.cache_dir)
            .map_err(|e| GatewayError::CacheIo { path: self.cache_dir.clone(), source: e })?;
        let path = self.cache_path(&record.cache_key);
        let tmp = self.cache_dir.join(format!("{}.tmp", record.cache_key));
        let body = serde_json::to_vec(record).expect("record serialize");
        std::fs::write(&tmp, body).map_err(|e| GatewayError::CacheIo { path: tmp.clone(), source: e })?;
        std::fs::rename(&tmp, &path).map_err(|e| GatewayError::CacheIo { path, source: e })?;
        Ok(())
    }

    fn endpoint_base(model: &ModelRef) -> String {
        model.endpoint_url.trim_end_matches('/').to_string()
    }

    async fn post_with_retry(
        &self,
        url: &str,
        body: serde_json::Value,
    ) -> Result<(serde_json::Value, u32), GatewayError> {
        let _permit = self.semaphore.acquire().await.expect("semaphore open");
        let current = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_inflight.fetch_max(current, Ordering::SeqCst);
        let result = self.post_attempts(url, &body).await;
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    async fn post_attempts(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<(serde_json::Value, u32), GatewayError> {
        let max_attempts = self.config.retry_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut request = self.client.post(url).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let outcome = request.send().await;
            match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value = resp
                            .json::<serde_json::Value>()
                            .await
                            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
                        return Ok((value, attempt));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let message = resp.text().await.unwrap_or_default();
                    if !retryable || attempt >= max_attempts {
                        return Err(GatewayError::EndpointError {
                            status: Some(status.as_u16()),
                            message,
                            attempts: attempt,
                        });
                    }
                }
                Err(err) => {
                    if attempt >= max_attempts {
                        return Err(GatewayError::EndpointError {
                            status: None,
                            message: err.to_string(),
                            attempts: attempt,
                        });
                    }
                }
            }
            let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
            tokio::time::sleep(Duration::from_millis(backoff)).await;
        }
    }

    /// One completion request, cache-first. The caller's `sample_index` and
    /// run seed key the cache entry alongside endpoint, prompt, and params.
    pub async fn completion(
        &self,
        model: &ModelRef,
        prompt: &str,
        params: &SamplingParams,
        sample_index: u32,
        seed: u64,
    ) -> Result<RequestRecord, GatewayError> {
        let params_canon = serde_json::to_string(params).expect("params serialize");
        let cache_key = content_hash(&[
            "completions",
            &model.endpoint_url,
            &model.name,
            prompt,
            &params_canon,
            &sample_index.to_string(),
            &seed.to_string(),
        ]);
        if let Some(record) = self.cache_read(&cache_key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(record);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let mut body = json!({
            "model": model.name,
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": 1,
        });
        if self.config.send_seed {
            body["seed"] = json!(seed.wrapping_add(sample_index as u64));
        }
        let url = format!("{}/v1/completions", Self::endpoint_base(model));
        let (value, attempts) = self.post_with_retry(&url, body).await?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0]".into()))?;
        let response_text = choice
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0].text".into()))?
            .to_string();
        let finish_reason =
            choice.get("finish_reason").and_then(|f| f.as_str()).unwrap_or("stop").to_string();
        if finish_reason == "length" {
            log::warn!("completion truncated at max_tokens (cache key {cache_key})");
        }
        let usage = value.get("usage").and_then(|u| serde_json::from_value(u.clone()).ok());
        let record = RequestRecord { cache_key, response_text, finish_reason, usage, attempts };
        self.cache_write(&record)?;
        Ok(record)
    }

    /// Sample k solo trajectories. Reasoning text is the content generated
    /// inside the thinking delimiters plus the post-thinking answer text.
    pub async fn sample_solo(
        &self,
        model: &ModelRef,
        template: &PromptTemplate,
        question: &Question,
        params: &SamplingParams,
        k: u32,
        seed: u64,
    ) -> Result<Vec<Trajectory>, GatewayError> {
        let prompt = template.render_solo(question);
        let requests = (0..k).map(|i| self.completion(model, &prompt, params, i, seed));
        let records = futures::future::try_join_all(requests).await?;
        Ok(records
            .into_iter()
            .enumerate()
            .map(|(i, record)| {
                let reasoning = strip_think_close(&record.response_text, &template.think_close);
                let answer = verifier::extract_answer(&record.response_text);
                Trajectory {
                    question_id: question.id.clone(),
                    model: model.name.clone(),
                    sample_index: i as u32,
                    reasoning,
                    answer,
                    verdict: TrajectoryVerdict::UNVERIFIED,
                }
            })
            .collect())
    }

    /// Force k off-trajectory completions on one steered item. The rendered
    /// prompt leaves the thinking span open so the model continues mid-thought.
    #[allow(clippy::too_many_arguments)]
    pub async fn complete_off_trajectory(
        &self,
        model: &ModelRef,
        template: &PromptTemplate,
        question: &Question,
        item: &SteeredItem,
        params: &SamplingParams,
        k: u32,
        seed: u64,
    ) -> Result<Vec<CompletionSample>, GatewayError> {
        if item.kind == TestKind::GUIDABILITY && item.prefix_text.is_empty() {
            return Err(GatewayError::EmptyPrefix(item.item_id.clone()));
        }
        let prompt = template.render_continue(question, &item.prefix_text);
        let requests = (0..k).map(|i| self.completion(model, &prompt, params, i, seed));
        let records = futures::future::try_join_all(requests).await?;
        Ok(records
            .into_iter()
            .enumerate()
            .map(|(i, record)| CompletionSample {
                item_id: item.item_id.clone(),
                sample_index: i as u32,
                extracted_answer: verifier::extract_answer(&record.response_text),
                completion_text: record.response_text,
                verdict: None,
                verdict_source: None,
            })
            .collect())
    }

    /// One chat turn (used by the judge), cached like completions.
    pub async fn chat(
        &self,
        model: &ModelRef,
        system: &str,
        user: &str,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<String, GatewayError> {
        let cache_key = content_hash(&[
            "chat",
            &model.endpoint_url,
            &model.name,
            system,
            user,
            &temperature.to_string(),
            &max_tokens.to_string(),
        ]);
        if let Some(record) = self.cache_read(&cache_key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(record.response_text);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let body = json!({
            "model": model.name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        let url = format!("{}/v1/chat/completions", Self::endpoint_base(model));
        let (value, attempts) = self.post_with_retry(&url, body).await?;
        let content = value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|t| t.as_str())
            .ok_or_else(|| GatewayError::BadResponse("missing chat content".into()))?
            .to_string();
        let record = RequestRecord {
            cache_key,
            response_text: content.clone(),
            finish_reason: "stop".into(),
            usage: None,
            attempts,
        };
        self.cache_write(&record)?;
        Ok(content)
    }

    /// Endpoint tokenize route; spans must reassemble the input text.
    pub async fn tokenize(&self, model: &ModelRef, text: &str) -> Result<Vec<String>, GatewayError> {
        let cache_key =
            content_hash(&["tokenize", &model.endpoint_url, &model.name, text]);
        if let Some(record) = self.cache_read(&cache_key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            let spans: Vec<String> = serde_json::from_str(&record.response_text)
                .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
            return Ok(spans);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let url = format!("{}/tokenize", Self::endpoint_base(model));
        let (value, attempts) = self.post_with_retry(&url, json!({ "text": text })).await?;
        let spans: Vec<String> = value
            .get("tokens")
            .and_then(|t| serde_json::from_value(t.clone()).ok())
            .ok_or_else(|| GatewayError::BadResponse("missing tokens".into()))?;
        let record = RequestRecord {
            cache_key,
            response_text: serde_json::to_string(&spans).expect("spans serialize"),
            finish_reason: "stop".into(),
            usage: None,
            attempts,
        };
        self.cache_write(&record)?;
        Ok(spans)
    }
}

/// Drop the first occurrence of the think-close delimiter, keeping the text
/// on both sides of it.
fn strip_think_close(response: &str, think_close: &str) -> String {
    match response.find(think_close) {
        Some(pos) => {
            let mut out = String::with_capacity(response.len());
            out.push_str(&response[..pos]);
            out.push_str(&response[pos + think_close.len()..]);
            out
        }
        None => response.to_string(),
    }
}

impl JudgeBackend for Gateway {
    async fn judge(&self, config: &JudgeConfig, system: &str, user: &str) -> Result<String, JudgeCallError> {
        let model = config.judge_model.as_ref().ok_or_else(|| JudgeCallError("judge model not configured".into()))?;
        self.chat(model, system, user, config.temperature, config.max_tokens)
            .await
            .map_err(|e| JudgeCallError(e.to_string()))
    }
}

/// Bridges the async tokenize route into the synchronous segmenter trait.
/// Requires a multi-thread tokio runtime.
pub struct GatewayTokenizer {
    pub gateway: Arc<Gateway>,
    pub model: ModelRef,
    pub handle: tokio::runtime::Handle,
}

impl crate::segmenter::EndpointTokenizer for GatewayTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>, crate::segmenter::SegmentError> {
        let gateway = self.gateway.clone();
        let model = self.model.clone();
        let text = text.to_string();
        tokio::task::block_in_place(|| {
            self.handle
                .block_on(async move { gateway.tokenize(&model, &text).await })
                .map_err(|e| crate::segmenter::SegmentError::EndpointUnavailable(e.to_string()))
        })
    }
}

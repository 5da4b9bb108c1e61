//! Local HTTP server speaking the completions wire protocol with scripted,
//! fully deterministic behaviors. Lets the whole pipeline run end-to-end on
//! localhost with analytically forced metric values.
//!
//! Mock prompt templates embed each question's id in a marker so behaviors
//! can resolve gold answers; real templates never use the marker.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::{oneshot, RwLock};

use crate::model::{Question, QuestionSet};
use crate::verifier;

pub const MARKER_PREFIX: &str = "%%QID:";
pub const MARKER_SUFFIX: &str = "%%";

/// Answer every behavior is forced to when it has nothing correct to say.
/// Provably non-equivalent to every fixture gold.
pub const WRONG_SENTINEL: &str = "NO_ANSWER_SENTINEL_X";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("port {0} already in use")]
    PortInUse(u16),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Oracle,
    Distracted,
    Recoverer,
    Parrot,
    StubbornWrong,
}

impl std::str::FromStr for BehaviorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Self::Oracle),
            "distracted" => Ok(Self::Distracted),
            "recoverer" => Ok(Self::Recoverer),
            "parrot" => Ok(Self::Parrot),
            "stubborn_wrong" | "stubborn-wrong" => Ok(Self::StubbornWrong),
            other => Err(format!("unknown behavior {other:?}")),
        }
    }
}

/// Marker the mock prompt templates embed so behaviors can resolve golds.
pub fn embed_question_marker(q: &Question) -> String {
    format!("{MARKER_PREFIX}{}{MARKER_SUFFIX}", q.id)
}

fn find_markers(prompt: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = prompt[from..].find(MARKER_PREFIX) {
        let start = from + rel + MARKER_PREFIX.len();
        match prompt[start..].find(MARKER_SUFFIX) {
            Some(end_rel) => {
                out.push(&prompt[start..start + end_rel]);
                from = start + end_rel + MARKER_SUFFIX.len();
            }
            None => break,
        }
    }
    out
}

const FILLER_WORDS: [&str; 6] = ["expand", "simplify", "substitute", "compare", "verify", "regroup"];

fn filler(words: usize) -> String {
    (0..words).map(|i| FILLER_WORDS[i % FILLER_WORDS.len()]).collect::<Vec<_>>().join(" ")
}

/// Deterministic solo response: marker-led restatement paragraph, filler,
/// the boxed answer emerging midway, more filler, then the closed thinking
/// span and a final boxed answer.
pub fn solo_response(question_id: &str, gold: &str) -> String {
    format!(
        "{MARKER_PREFIX}{question_id}{MARKER_SUFFIX} I restate the problem so the goal stays anchored throughout.\n\n\
         {fa} Partway the value \\boxed{{{gold}}} emerges here. {fb}\n\
         </think>\n\nThe final answer is \\boxed{{{gold}}}.",
        fa = filler(30),
        fb = filler(30),
    )
}

#[derive(Debug, Clone, Copy)]
enum BehaviorError {
    MarkerMissing,
}

/// Pure behavior function: the response text for one prompt.
fn respond(
    behavior: BehaviorKind,
    answer_book: &HashMap<String, String>,
    prompt: &str,
) -> Result<String, BehaviorError> {
    let markers = find_markers(prompt);
    let primary = markers.first().copied();
    let steer = primary
        .and_then(|p| markers.iter().rev().find(|m| **m != p).copied());
    let gold_of = |id: Option<&str>| -> Result<&str, BehaviorError> {
        id.and_then(|id| answer_book.get(id))
            .map(String::as_str)
            .ok_or(BehaviorError::MarkerMissing)
    };
    match behavior {
        BehaviorKind::Oracle => {
            let qid = primary.ok_or(BehaviorError::MarkerMissing)?;
            Ok(solo_response(qid, gold_of(primary)?))
        }
        BehaviorKind::Recoverer => {
            let qid = primary.ok_or(BehaviorError::MarkerMissing)?;
            let gold = gold_of(primary)?;
            match steer {
                None => Ok(solo_response(qid, gold)),
                Some(_) => Ok(format!(
                    "Wait, that steered tangent belongs to a different problem, so I return to \
                     the original question and finish it.\n</think>\n\n\
                     The final answer is \\boxed{{{gold}}}."
                )),
            }
        }
        BehaviorKind::Distracted => {
            let qid = primary.ok_or(BehaviorError::MarkerMissing)?;
            match steer {
                None => Ok(solo_response(qid, gold_of(primary)?)),
                Some(s) => {
                    let gold = gold_of(Some(s))?;
                    Ok(format!(
                        "Continuing that line of thought to its conclusion without looking \
                         back.\n</think>\n\nThe final answer is \\boxed{{{gold}}}."
                    ))
                }
            }
        }
        BehaviorKind::Parrot => {
            let parroted = verifier::boxed_candidates(prompt).pop();
            let answer = parroted.unwrap_or_else(|| WRONG_SENTINEL.to_string());
            Ok(format!(
                "Adopting whatever boxed value the trajectory already \
                 offers.\n</think>\n\nThe final answer is \\boxed{{{answer}}}."
            ))
        }
        BehaviorKind::StubbornWrong => Ok(format!(
            "Ignoring everything and refusing to engage with the \
             question.\n</think>\n\nThe final answer is \\boxed{{{WRONG_SENTINEL}}}."
        )),
    }
}

struct MockState {
    behavior: RwLock<BehaviorKind>,
    latency: RwLock<u64>,
    answer_book: HashMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct CompletionRequest {
    #[serde(default)]
    model: String,
    prompt: String,
    #[serde(default)]
    max_tokens: Option<u32>,
    #[serde(default)]
    #[allow(dead_code)]
    temperature: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    top_p: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    seed: Option<u64>,
}

fn error_response(status: StatusCode, code: &str, message: &str) -> Response {
    (
        status,
        Json(json!({
            "error": {"message": format!("{code}: {message}"), "type": "invalid_request_error", "code": code}
        })),
    )
        .into_response()
}

fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

async fn completions(
    State(state): State<Arc<MockState>>,
    Json(req): Json<CompletionRequest>,
) -> Response {
    let latency = *state.latency.read().await;
    if latency > 0 {
        tokio::time::sleep(Duration::from_millis(latency)).await;
    }
    let behavior = *state.behavior.read().await;
    let text = match respond(behavior, &state.answer_book, &req.prompt) {
        Ok(text) => text,
        Err(BehaviorError::MarkerMissing) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                "MARKER_MISSING",
                "prompt carries no resolvable question marker",
            )
        }
    };
    // Honor the token budget: cut at a whitespace boundary and report length.
    let budget = req.max_tokens.unwrap_or(u32::MAX) as usize;
    let (text, finish_reason) = if token_count(&text) > budget {
        let cut: Vec<&str> = text.split_whitespace().take(budget).collect();
        (cut.join(" "), "length")
    } else {
        (text, "stop")
    };
    let usage_prompt = token_count(&req.prompt);
    let usage_completion = token_count(&text);
    Json(json!({
        "id": "cmpl-mock",
        "object": "text_completion",
        "created": 0,
        "model": req.model,
        "choices": [{"index": 0, "text": text, "finish_reason": finish_reason}],
        "usage": {
            "prompt_tokens": usage_prompt,
            "completion_tokens": usage_completion,
            "total_tokens": usage_prompt + usage_completion
        }
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct TokenizeRequest {
    text: String,
}

/// Fixed-width character chunks, so endpoint counts differ visibly from
/// whitespace counts in tests. Spans concatenate back to the input.
async fn tokenize(Json(req): Json<TokenizeRequest>) -> Response {
    let chars: Vec<char> = req.text.chars().collect();
    let tokens: Vec<String> = chars.chunks(4).map(|c| c.iter().collect()).collect();
    Json(json!({ "tokens": tokens, "count": tokens.len() })).into_response()
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    #[serde(default)]
    model: String,
    messages: Vec<ChatMessage>,
}

/// Judge-only chat handler: extracts the standard and student answers from
/// the rendered judge prompt and grades them with the equivalence engine.
async fn chat_completions(
    State(state): State<Arc<MockState>>,
    Json(req): Json<ChatRequest>,
) -> Response {
    let latency = *state.latency.read().await;
    if latency > 0 {
        tokio::time::sleep(Duration::from_millis(latency)).await;
    }
    let Some(user) = req.messages.iter().rev().find(|m| m.role == "user") else {
        return error_response(StatusCode::BAD_REQUEST, "BAD_MESSAGES", "no user message");
    };
    let verdict = judge_user_prompt(&user.content);
    let content = format!(
        "<analysis>mock judge compared the standard and student answers</analysis>\n<judge>{verdict}</judge>"
    );
    Json(json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "created": 0,
        "model": req.model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
    }))
    .into_response()
}

fn judge_user_prompt(user: &str) -> &'static str {
    let standard = user
        .split("Standard Answer: ")
        .nth(1)
        .and_then(|rest| rest.split("\n\nStudent Answer: ").next());
    let student = user.split("Student Answer: ").nth(1);
    match (standard, student) {
        (Some(standard), Some(student))
            if !student.trim().is_empty() && verifier::normalize_equal(student, standard) =>
        {
            "CORRECT"
        }
        _ => "WRONG",
    }
}

#[derive(Debug, Deserialize)]
struct AdminRequest {
    #[serde(default)]
    behavior: Option<BehaviorKind>,
    #[serde(default)]
    latency_ms: Option<u64>,
}

async fn admin_behavior(
    State(state): State<Arc<MockState>>,
    Json(req): Json<AdminRequest>,
) -> Response {
    if let Some(behavior) = req.behavior {
        *state.behavior.write().await = behavior;
    }
    if let Some(latency) = req.latency_ms {
        *state.latency.write().await = latency;
    }
    let behavior = *state.behavior.read().await;
    let latency = *state.latency.read().await;
    Json(json!({ "behavior": behavior, "latency_ms": latency })).into_response()
}

/// Handle to a running mock server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.abort();
    }
}

/// Bind and serve. Port 0 picks an ephemeral port; the bound address is on
/// the returned handle.
pub async fn serve(
    questions: &QuestionSet,
    behavior: BehaviorKind,
    port: u16,
    latency_ms: u64,
) -> Result<ServerHandle, SimError> {
    let answer_book: HashMap<String, String> =
        questions.questions.iter().map(|q| (q.id.clone(), q.gold_answer.clone())).collect();
    let state = Arc::new(MockState {
        behavior: RwLock::new(behavior),
        latency: RwLock::new(latency_ms),
        answer_book,
    });
    let app = Router::new()
        .route("/v1/completions", post(completions))
        .route("/v1/chat/completions", post(chat_completions))
        .route("/tokenize", post(tokenize))
        .route("/admin/behavior", post(admin_behavior))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            SimError::PortInUse(port)
        } else {
            SimError::Io(e)
        }
    })?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(err) = server.await {
            log::error!("mock server exited: {err}");
        }
    });
    Ok(ServerHandle { addr, shutdown: Some(tx), task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Benchmark;
    use crate::segmenter;

    fn book() -> HashMap<String, String> {
        [("q1", "42"), ("q2", "7"), ("q3", "1/2")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn marker_embedding_and_scanning() {
        let q = Question {
            id: "q9".into(),
            benchmark: Benchmark::CUSTOM,
            text: "t".into(),
            gold_answer: "g".into(),
        };
        let marker = embed_question_marker(&q);
        assert_eq!(marker, "%%QID:q9%%");
        assert_eq!(find_markers(&format!("x {marker} y")), vec!["q9"]);
    }

    #[test]
    fn oracle_answers_primary_marker() {
        let text = respond(BehaviorKind::Oracle, &book(), "%%QID:q1%% solve it").unwrap();
        assert!(text.contains("\\boxed{42}"));
    }

    #[test]
    fn oracle_without_marker_is_an_error() {
        assert!(matches!(
            respond(BehaviorKind::Oracle, &book(), "no marker"),
            Err(BehaviorError::MarkerMissing)
        ));
    }

    #[test]
    fn distracted_picks_the_steer_marker() {
        let prompt = "%%QID:q1%% question text <think> %%QID:q1%% own start %%QID:q2%% steer text";
        let text = respond(BehaviorKind::Distracted, &book(), prompt).unwrap();
        assert!(text.contains("\\boxed{7}"), "{text}");
        // Without a steer marker the behavior answers its own question.
        let solo = respond(BehaviorKind::Distracted, &book(), "%%QID:q1%% alone").unwrap();
        assert!(solo.contains("\\boxed{42}"));
    }

    #[test]
    fn recoverer_ignores_steer_marker() {
        let prompt = "%%QID:q1%% question <think> %%QID:q2%% distraction";
        let text = respond(BehaviorKind::Recoverer, &book(), prompt).unwrap();
        assert!(text.contains("\\boxed{42}"));
    }

    #[test]
    fn parrot_echoes_last_boxed_or_sentinel() {
        let text = respond(BehaviorKind::Parrot, &book(), "prefix \\boxed{99} more").unwrap();
        assert!(text.contains("\\boxed{99}"));
        let empty = respond(BehaviorKind::Parrot, &book(), "no boxed content").unwrap();
        assert!(empty.contains(WRONG_SENTINEL));
    }

    #[test]
    fn solo_response_places_midway_answer_in_third_quintile() {
        for (qid, gold) in [("q1", "42"), ("q3", "(3,1)")] {
            let text = solo_response(qid, gold);
            // Reasoning as the gateway stores it: think-close marker removed.
            let reasoning = text.replacen("</think>", "", 1);
            let seq = segmenter::segment_whitespace(&reasoning);
            let needle = format!("\\boxed{{{gold}}}");
            let mid_index = seq
                .units
                .iter()
                .position(|u| u.text.contains(&needle))
                .expect("midway boxed present");
            let fraction = mid_index as f64 / seq.len() as f64;
            assert!(
                (0.45..0.58).contains(&fraction),
                "midway answer at fraction {fraction} for gold {gold}"
            );
            // Truncations at 0.2/0.4 exclude the answer; 0.6/0.8 include it.
            for (n, expect) in [(0.2, false), (0.4, false), (0.6, true), (0.8, true)] {
                let prefix = segmenter::truncate_fraction(&reasoning, n).unwrap();
                assert_eq!(prefix.contains(&needle), expect, "n={n} gold={gold}");
            }
            // The question marker survives even the shortest steer prefix.
            let short = segmenter::truncate_fraction(&reasoning, 0.2).unwrap();
            assert!(short.contains(&format!("%%QID:{qid}%%")));
        }
    }

    #[test]
    fn judge_prompt_parsing_grades_with_normalizer() {
        let (_, user) = crate::verifier::render_judge_prompt("p", "1/2", "0.5");
        assert_eq!(judge_user_prompt(&user), "CORRECT");
        let (_, user) = crate::verifier::render_judge_prompt("p", "1/2", "0.7");
        assert_eq!(judge_user_prompt(&user), "WRONG");
        let (_, user) = crate::verifier::render_judge_prompt("p", "1/2", "");
        assert_eq!(judge_user_prompt(&user), "WRONG");
    }

    #[tokio::test]
    async fn serve_binds_and_answers() {
        let qs = QuestionSet::new(
            "t",
            vec![Question {
                id: "q1".into(),
                benchmark: Benchmark::CUSTOM,
                text: "one".into(),
                gold_answer: "42".into(),
            }],
        )
        .unwrap();
        let handle = serve(&qs, BehaviorKind::Oracle, 0, 0).await.unwrap();
        let client = reqwest::Client::new();
        let body = json!({"model": "mock", "prompt": "%%QID:q1%% go"});
        let url = format!("{}/v1/completions", handle.url());
        let a = client.post(&url).json(&body).send().await.unwrap().text().await.unwrap();
        let b = client.post(&url).json(&body).send().await.unwrap().text().await.unwrap();
        assert_eq!(a, b, "byte-identical responses for byte-identical requests");
        assert!(a.contains("\\\\boxed{42}") || a.contains("\\boxed{42}"));

        // Behavior switch via admin route.
        let admin = format!("{}/admin/behavior", handle.url());
        client
            .post(&admin)
            .json(&json!({"behavior": "stubborn_wrong"}))
            .send()
            .await
            .unwrap();
        let c = client.post(&url).json(&body).send().await.unwrap().text().await.unwrap();
        assert!(c.contains(WRONG_SENTINEL));
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn port_in_use_is_reported() {
        let qs = QuestionSet::new("t", vec![]).unwrap();
        let first = serve(&qs, BehaviorKind::Oracle, 0, 0).await.unwrap();
        let port = first.addr.port();
        match serve(&qs, BehaviorKind::Oracle, port, 0).await {
            Err(SimError::PortInUse(p)) => assert_eq!(p, port),
            other => panic!("expected PortInUse, got {:?}", other.map(|h| h.addr)),
        }
        first.shutdown().await;
    }
}

//! Verdict assignment: answer extraction, equivalence normalization, and the
//! judge fallback for responses the normalizer rejects.

mod normalize;

use std::future::Future;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

pub use normalize::normalize_equal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelRef, SampleVerdict, VerdictSource};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("judge reply carried no well-formed <judge> label")]
    JudgeUnparseable,
    #[error("judge endpoint unavailable: {0}")]
    JudgeUnavailable(String),
}

/// Transport-level failure reported by a judge backend.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct JudgeCallError(pub String);

/// Configuration for the judge fallback.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub judge_model: Option<ModelRef>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub enabled: bool,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self { judge_model: None, temperature: 0.0, max_tokens: 1024, enabled: false }
    }
}

/// What to do when the judge endpoint cannot be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgePolicy {
    Halt,
    Degrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub label: SampleVerdict,
    pub source: VerdictSource,
    pub judge_analysis: Option<String>,
    pub judge_parse_failure: bool,
}

impl Verdict {
    fn normalizer(label: SampleVerdict) -> Self {
        Self { label, source: VerdictSource::NORMALIZER, judge_analysis: None, judge_parse_failure: false }
    }
}

/// Content of the last `\boxed{...}` with balanced braces; otherwise the
/// trailing expression after the last answer cue; otherwise nothing.
pub fn extract_answer(text: &str) -> Option<String> {
    if let Some(inner) = last_boxed(text) {
        return Some(inner);
    }
    last_cued_expression(text)
}

fn last_boxed(text: &str) -> Option<String> {
    boxed_candidates(text).pop()
}

/// Every balanced `\boxed{...}` content in order of appearance.
pub fn boxed_candidates(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find("\\boxed") {
        let start = search_from + rel;
        let after = &text[start + "\\boxed".len()..];
        let trimmed = after.trim_start();
        if let Some(body) = trimmed.strip_prefix('{') {
            if let Some(inner) = balanced_content(body) {
                out.push(inner);
            }
        }
        search_from = start + "\\boxed".len();
    }
    out
}

fn balanced_content(s: &str) -> Option<String> {
    let mut depth = 1usize;
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => {
                out.push(ch);
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            }
            '{' => {
                depth += 1;
                out.push(ch);
            }
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(out);
                }
                out.push(ch);
            }
            _ => out.push(ch),
        }
    }
    None
}

const ANSWER_CUES: [&str; 2] = ["answer is", "final answer:"];

fn last_cued_expression(text: &str) -> Option<String> {
    let lower = text.to_lowercase();
    let mut cut = None;
    for cue in ANSWER_CUES {
        let mut from = 0;
        while let Some(rel) = lower[from..].find(cue) {
            let end = from + rel + cue.len();
            cut = Some(cut.map_or(end, |c: usize| c.max(end)));
            from = end;
        }
    }
    let start = cut?;
    let line = text[start..].lines().next().unwrap_or("");
    let trimmed = line
        .trim_start_matches([':', ',', ' ', '\t'])
        .trim_end()
        .trim_end_matches(['.', ',', '!', '?'])
        .trim();
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_string())
    }
}

pub const JUDGE_SYSTEM_PROMPT: &str = "You are an unbiased examiner who evaluates whether a student's answer to a given question is correct.
Your task is to determine if the student's final answer matches the standard answer provided, based solely on correctness and the question's specific requirements.
Do not perform any additional calculations or reinterpret the question. Simply compare the student's answer to the standard answer to determine if it satisfies the question's requirements.

Focus strictly on:
1. Understanding the exact requirement of the question.
2. Comparing the student's final answer directly and rigorously to the provided standard answer.
3. Your task is not to solve the problem but to determine whether the student's answer is correct based on the question's requirements. Avoid any unnecessary analysis, assumptions, or re-solving the problem.

Note:
- For intervals/ranges: The student's answer must cover the EXACT SAME range as the standard answer, NOT just any single value or subset within that range;
- If the standard answer contains multiple solutions connected by 'or'/'and', all of them must be listed in the student's answer;
- If student's response does not mention any answer, it is considered WRONG;
- You must be deterministic and rigorous - always declare the answer as either CORRECT or WRONG;
- Small rounding differences are permitted if all the derivation steps are correct.

Your response must include:
### Short Analysis
Provide a short and evidence-backed analysis between <analysis> </analysis> tags, in which you should extract the final solution value from the standard answer and the student's answer and judge whether they are the same.

### Correctness
Based on the analysis, you should report a label CORRECT or WRONG between <judge> </judge> tags (e.g., <judge>CORRECT</judge> or <judge>WRONG</judge>).";

pub const JUDGE_USER_TEMPLATE: &str = "Problem: {problem}

Standard Answer: {standard_answer}

Student Answer: {student_answer}";

/// Render the judge prompt pair. Pure substitution: the three placeholders
/// and nothing else.
pub fn render_judge_prompt(problem: &str, standard_answer: &str, student_answer: &str) -> (String, String) {
    let user = JUDGE_USER_TEMPLATE
        .replacen("{problem}", problem, 1)
        .replacen("{standard_answer}", standard_answer, 1)
        .replacen("{student_answer}", student_answer, 1);
    (JUDGE_SYSTEM_PROMPT.to_string(), user)
}

/// Label from the last well-formed `<judge>...</judge>` span.
pub fn parse_judge_reply(text: &str) -> Result<SampleVerdict, VerifierError> {
    let mut result = None;
    let mut from = 0;
    while let Some(rel) = text[from..].find("<judge>") {
        let start = from + rel + "<judge>".len();
        if let Some(end_rel) = text[start..].find("</judge>") {
            let content = text[start..start + end_rel].trim();
            match content {
                "CORRECT" => result = Some(SampleVerdict::CORRECT),
                "WRONG" => result = Some(SampleVerdict::WRONG),
                _ => {}
            }
            from = start + end_rel + "</judge>".len();
        } else {
            break;
        }
    }
    result.ok_or(VerifierError::JudgeUnparseable)
}

fn extract_analysis(text: &str) -> Option<String> {
    let start = text.rfind("<analysis>")? + "<analysis>".len();
    let end = start + text[start..].find("</analysis>")?;
    Some(text[start..end].trim().to_string())
}

/// Backend that can run one judge chat turn.
pub trait JudgeBackend: Send + Sync {
    fn judge(
        &self,
        config: &JudgeConfig,
        system: &str,
        user: &str,
    ) -> impl Future<Output = Result<String, JudgeCallError>> + Send;
}

/// Scoring front-end: normalizer first, judge fallback second. Counts logical
/// judge consultations so callers can audit that normalizer-CORRECT samples
/// never reach the judge.
pub struct Scorer<'a, B> {
    config: &'a JudgeConfig,
    backend: Option<&'a B>,
    policy: JudgePolicy,
    judge_calls: AtomicU64,
    degraded: AtomicBool,
}

/// Scorer without a judge backend (normalizer only).
pub struct NoJudge;

impl JudgeBackend for NoJudge {
    async fn judge(&self, _: &JudgeConfig, _: &str, _: &str) -> Result<String, JudgeCallError> {
        Err(JudgeCallError("no judge backend configured".into()))
    }
}

impl<'a, B: JudgeBackend> Scorer<'a, B> {
    pub fn new(config: &'a JudgeConfig, backend: Option<&'a B>, policy: JudgePolicy) -> Self {
        Self { config, backend, policy, judge_calls: AtomicU64::new(0), degraded: AtomicBool::new(false) }
    }

    pub fn judge_calls(&self) -> u64 {
        self.judge_calls.load(Ordering::Relaxed)
    }

    pub fn degraded(&self) -> bool {
        self.degraded.load(Ordering::Relaxed)
    }

    /// Full pipeline for one completion: extract, normalize, consult the
    /// judge only when the normalizer said WRONG and judging is enabled.
    pub async fn verdict(
        &self,
        completion_text: &str,
        problem: &str,
        gold: &str,
    ) -> Result<(Option<String>, Verdict), VerifierError> {
        let extracted = extract_answer(completion_text);
        if let Some(answer) = &extracted {
            if normalize_equal(answer, gold) {
                return Ok((extracted, Verdict::normalizer(SampleVerdict::CORRECT)));
            }
        }
        let backend = match (self.config.enabled, self.backend) {
            (true, Some(b)) => b,
            _ => return Ok((extracted, Verdict::normalizer(SampleVerdict::WRONG))),
        };
        if self.degraded.load(Ordering::Relaxed) {
            return Ok((extracted, Verdict::normalizer(SampleVerdict::WRONG)));
        }
        self.judge_calls.fetch_add(1, Ordering::Relaxed);
        let student = extracted.clone().unwrap_or_default();
        let (system, user) = render_judge_prompt(problem, gold, &student);
        let mut parse_failure = false;
        let mut reply = match backend.judge(self.config, &system, &user).await {
            Ok(r) => r,
            Err(err) => return self.handle_unavailable(extracted, err),
        };
        let label = match parse_judge_reply(&reply) {
            Ok(label) => label,
            Err(_) => {
                // One retry, then record the parse failure as WRONG.
                reply = match backend.judge(self.config, &system, &user).await {
                    Ok(r) => r,
                    Err(err) => return self.handle_unavailable(extracted, err),
                };
                match parse_judge_reply(&reply) {
                    Ok(label) => label,
                    Err(_) => {
                        parse_failure = true;
                        SampleVerdict::WRONG
                    }
                }
            }
        };
        Ok((
            extracted,
            Verdict {
                label,
                source: VerdictSource::JUDGE,
                judge_analysis: extract_analysis(&reply),
                judge_parse_failure: parse_failure,
            },
        ))
    }

    fn handle_unavailable(
        &self,
        extracted: Option<String>,
        err: JudgeCallError,
    ) -> Result<(Option<String>, Verdict), VerifierError> {
        match self.policy {
            JudgePolicy::Halt => Err(VerifierError::JudgeUnavailable(err.0)),
            JudgePolicy::Degrade => {
                self.degraded.store(true, Ordering::Relaxed);
                Ok((extracted, Verdict::normalizer(SampleVerdict::WRONG)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn extracts_last_boxed() {
        assert_eq!(extract_answer("x \\boxed{1} y \\boxed{\\frac{1}{2}} done"), Some("\\frac{1}{2}".into()));
    }

    #[test]
    fn extracts_nested_braces() {
        assert_eq!(extract_answer("\\boxed{1+\\sqrt{2}}"), Some("1+\\sqrt{2}".into()));
    }

    #[test]
    fn unbalanced_boxed_is_skipped() {
        assert_eq!(extract_answer("\\boxed{1+\\sqrt{2} and \\boxed{3}"), Some("3".into()));
    }

    #[test]
    fn falls_back_to_answer_cue() {
        assert_eq!(extract_answer("So the answer is 42."), Some("42".into()));
        assert_eq!(extract_answer("Final answer: 7\nmore text"), Some("7".into()));
    }

    #[test]
    fn no_final_statement_yields_none() {
        assert_eq!(extract_answer("no final statement"), None);
        assert_eq!(extract_answer("the answer is \n"), None);
    }

    #[test]
    fn judge_prompt_substitutes_placeholders() {
        let (system, user) = render_judge_prompt("P?", "7", "8");
        assert!(system.starts_with("You are an unbiased examiner who evaluates"));
        assert!(user.starts_with("Problem: P?"));
        assert!(user.contains("Standard Answer: 7"));
        assert!(user.ends_with("Student Answer: 8"));
    }

    #[test]
    fn judge_prompt_renders_empty_student_answer() {
        let (_, user) = render_judge_prompt("P?", "7", "");
        assert!(user.ends_with("Student Answer: "));
    }

    #[test]
    fn parse_judge_reply_cases() {
        assert_eq!(parse_judge_reply("<judge>CORRECT</judge>").unwrap(), SampleVerdict::CORRECT);
        assert_eq!(parse_judge_reply("x <judge>WRONG</judge> y").unwrap(), SampleVerdict::WRONG);
        assert_eq!(
            parse_judge_reply("<judge>WRONG</judge> then <judge>CORRECT</judge>").unwrap(),
            SampleVerdict::CORRECT
        );
        assert!(matches!(parse_judge_reply("verdict: correct"), Err(VerifierError::JudgeUnparseable)));
        assert!(matches!(parse_judge_reply("<judge>maybe</judge>"), Err(VerifierError::JudgeUnparseable)));
    }

    struct ScriptedJudge {
        replies: Mutex<Vec<&'static str>>,
        calls: AtomicU64,
    }

    impl ScriptedJudge {
        fn new(replies: Vec<&'static str>) -> Self {
            Self { replies: Mutex::new(replies), calls: AtomicU64::new(0) }
        }
    }

    impl JudgeBackend for ScriptedJudge {
        async fn judge(&self, _: &JudgeConfig, _: &str, _: &str) -> Result<String, JudgeCallError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            let mut replies = self.replies.lock().unwrap();
            if replies.is_empty() {
                Err(JudgeCallError("exhausted".into()))
            } else {
                Ok(replies.remove(0).to_string())
            }
        }
    }

    fn enabled_config() -> JudgeConfig {
        JudgeConfig { enabled: true, ..JudgeConfig::default() }
    }

    #[tokio::test]
    async fn normalizer_match_skips_judge() {
        let judge = ScriptedJudge::new(vec!["<judge>WRONG</judge>"]);
        let cfg = enabled_config();
        let scorer = Scorer::new(&cfg, Some(&judge), JudgePolicy::Halt);
        let (extracted, verdict) = scorer.verdict("\\boxed{1/2}", "p", "0.5").await.unwrap();
        assert_eq!(extracted.as_deref(), Some("1/2"));
        assert_eq!(verdict.label, SampleVerdict::CORRECT);
        assert_eq!(verdict.source, VerdictSource::NORMALIZER);
        assert_eq!(scorer.judge_calls(), 0);
        assert_eq!(judge.calls.load(Ordering::Relaxed), 0);
    }

    #[tokio::test]
    async fn judge_can_flip_wrong_to_correct() {
        let judge = ScriptedJudge::new(vec!["<analysis>same value</analysis><judge>CORRECT</judge>"]);
        let cfg = enabled_config();
        let scorer = Scorer::new(&cfg, Some(&judge), JudgePolicy::Halt);
        let (_, verdict) = scorer.verdict("\\boxed{half}", "p", "1/2").await.unwrap();
        assert_eq!(verdict.label, SampleVerdict::CORRECT);
        assert_eq!(verdict.source, VerdictSource::JUDGE);
        assert_eq!(verdict.judge_analysis.as_deref(), Some("same value"));
        assert_eq!(scorer.judge_calls(), 1);
    }

    #[tokio::test]
    async fn judge_disabled_records_normalizer_wrong() {
        let cfg = JudgeConfig::default();
        let scorer: Scorer<'_, NoJudge> = Scorer::new(&cfg, None, JudgePolicy::Halt);
        let (_, verdict) = scorer.verdict("\\boxed{3}", "p", "4").await.unwrap();
        assert_eq!(verdict.label, SampleVerdict::WRONG);
        assert_eq!(verdict.source, VerdictSource::NORMALIZER);
    }

    #[tokio::test]
    async fn unparseable_reply_retries_once_then_flags() {
        let judge = ScriptedJudge::new(vec!["gibberish", "still gibberish"]);
        let cfg = enabled_config();
        let scorer = Scorer::new(&cfg, Some(&judge), JudgePolicy::Halt);
        let (_, verdict) = scorer.verdict("\\boxed{3}", "p", "4").await.unwrap();
        assert_eq!(verdict.label, SampleVerdict::WRONG);
        assert_eq!(verdict.source, VerdictSource::JUDGE);
        assert!(verdict.judge_parse_failure);
        assert_eq!(judge.calls.load(Ordering::Relaxed), 2);
        assert_eq!(scorer.judge_calls(), 1);
    }

    #[tokio::test]
    async fn unavailable_judge_honors_policy() {
        let judge = ScriptedJudge::new(vec![]);
        let cfg = enabled_config();
        let halt = Scorer::new(&cfg, Some(&judge), JudgePolicy::Halt);
        assert!(matches!(
            halt.verdict("\\boxed{3}", "p", "4").await,
            Err(VerifierError::JudgeUnavailable(_))
        ));

        let judge = ScriptedJudge::new(vec![]);
        let degrade = Scorer::new(&cfg, Some(&judge), JudgePolicy::Degrade);
        let (_, verdict) = degrade.verdict("\\boxed{3}", "p", "4").await.unwrap();
        assert_eq!(verdict.label, SampleVerdict::WRONG);
        assert_eq!(verdict.source, VerdictSource::NORMALIZER);
        assert!(degrade.degraded());
    }

    #[tokio::test]
    async fn judge_monotonicity_on_correct_samples() {
        // A judge that always says WRONG can never flip a normalizer CORRECT.
        let judge = ScriptedJudge::new(vec!["<judge>WRONG</judge>"; 4].into_iter().collect());
        let cfg = enabled_config();
        let scorer = Scorer::new(&cfg, Some(&judge), JudgePolicy::Halt);
        let (_, verdict) = scorer.verdict("\\boxed{0.5}", "p", "1/2").await.unwrap();
        assert_eq!(verdict.label, SampleVerdict::CORRECT);
    }
}

//! C ABI over the deterministic offtrack primitives: segmentation and prefix
//! truncation, answer extraction and equivalence, the judge prompt protocol,
//! and the basic statistics. Lets other languages verify answers and build
//! spliced prefixes with byte-identical semantics.
//!
//! Conventions:
//! - Strings cross the boundary as NUL-terminated UTF-8.
//! - Returned `char*` values are owned by the caller; free them with
//!   [`ot_string_free`]. Getter results on opaque handles stay owned by the
//!   handle and die with it.
//! - Fallible functions report through [`OtStatus`].

use std::ffi::{c_char, CStr, CString};

use offtrack::metrics;
use offtrack::segmenter;
use offtrack::testgen;
use offtrack::verifier;

/// Status codes for fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Degenerate = 4,
}

unsafe fn read_str<'a>(ptr: *const c_char, status: &mut OtStatus) -> Option<&'a str> {
    if ptr.is_null() {
        *status = OtStatus::NullPointer;
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            *status = OtStatus::InvalidUtf8;
            None
        }
    }
}

fn give_string(s: String) -> *mut c_char {
    // Interior NULs cannot round-trip through C strings; replace them.
    let sanitized = s.replace('\0', "\u{fffd}");
    CString::new(sanitized).expect("no interior NUL").into_raw()
}

/// Free a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `ptr` must have been returned by an `ot_*` function from this library and
/// not freed before.
#[no_mangle]
pub unsafe extern "C" fn ot_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Whitespace-mode token count of `text`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ot_token_count(text: *const c_char, status: *mut OtStatus) -> usize {
    let mut st = OtStatus::Ok;
    let result = read_str(text, &mut st).map(|t| segmenter::segment_whitespace(t).len()).unwrap_or(0);
    if !status.is_null() {
        *status = st;
    }
    result
}

/// Prefix covering the first floor(fraction * tokens) whitespace tokens.
/// Returns NULL on error.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ot_truncate_fraction(
    text: *const c_char,
    fraction: f64,
    status: *mut OtStatus,
) -> *mut c_char {
    let mut st = OtStatus::Ok;
    let out = read_str(text, &mut st).and_then(|t| match segmenter::truncate_fraction(t, fraction) {
        Ok(prefix) => Some(give_string(prefix)),
        Err(_) => {
            st = OtStatus::InvalidArgument;
            None
        }
    });
    if !status.is_null() {
        *status = st;
    }
    out.unwrap_or(std::ptr::null_mut())
}

/// Text up to and including the first blank-line separator.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ot_first_paragraph(text: *const c_char, status: *mut OtStatus) -> *mut c_char {
    let mut st = OtStatus::Ok;
    let out = read_str(text, &mut st).map(|t| give_string(segmenter::first_paragraph(t).to_string()));
    if !status.is_null() {
        *status = st;
    }
    out.unwrap_or(std::ptr::null_mut())
}

/// Concatenate an og prefix and a steer prefix with the blank-line rule.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ot_splice(
    og_prefix: *const c_char,
    steer_prefix: *const c_char,
    status: *mut OtStatus,
) -> *mut c_char {
    let mut st = OtStatus::Ok;
    let out = match (read_str(og_prefix, &mut st), read_str(steer_prefix, &mut st)) {
        (Some(og), Some(steer)) => Some(give_string(segmenter::splice(og, steer))),
        _ => None,
    };
    if !status.is_null() {
        *status = st;
    }
    out.unwrap_or(std::ptr::null_mut())
}

/// Extract the final answer from a completion (last boxed expression, else
/// the trailing expression after an answer cue). NULL when absent.
///
/// # Safety
/// `completion` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ot_extract_answer(
    completion: *const c_char,
    status: *mut OtStatus,
) -> *mut c_char {
    let mut st = OtStatus::Ok;
    let out = read_str(completion, &mut st)
        .and_then(verifier::extract_answer)
        .map(give_string)
        .unwrap_or(std::ptr::null_mut());
    if !status.is_null() {
        *status = st;
    }
    out
}

/// True iff candidate and gold are equivalent under the bounded grammar.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ot_normalize_equal(candidate: *const c_char, gold: *const c_char) -> bool {
    let mut st = OtStatus::Ok;
    match (read_str(candidate, &mut st), read_str(gold, &mut st)) {
        (Some(c), Some(g)) => verifier::normalize_equal(c, g),
        _ => false,
    }
}

/// True iff the steer prefix already contains an expression equivalent to gold.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ot_steer_contains_answer(
    steer_prefix: *const c_char,
    gold: *const c_char,
) -> bool {
    let mut st = OtStatus::Ok;
    match (read_str(steer_prefix, &mut st), read_str(gold, &mut st)) {
        (Some(p), Some(g)) => testgen::steer_contains_answer(p, g),
        _ => false,
    }
}

/// Judge reply labels as C-visible integers.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtJudgeLabel {
    Wrong = 0,
    Correct = 1,
    Unparseable = 2,
}

/// Parse the label from the last well-formed `<judge>...</judge>` span.
///
/// # Safety
/// `reply` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ot_parse_judge_reply(reply: *const c_char) -> OtJudgeLabel {
    let mut st = OtStatus::Ok;
    match read_str(reply, &mut st).map(verifier::parse_judge_reply) {
        Some(Ok(offtrack::model::SampleVerdict::CORRECT)) => OtJudgeLabel::Correct,
        Some(Ok(offtrack::model::SampleVerdict::WRONG)) => OtJudgeLabel::Wrong,
        _ => OtJudgeLabel::Unparseable,
    }
}

/// Opaque rendered judge prompt pair.
pub struct OtJudgePrompt {
    system: CString,
    user: CString,
}

/// Render the judge prompt for (problem, standard answer, student answer).
/// Free with [`ot_judge_prompt_free`]. NULL on error.
///
/// # Safety
/// All arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ot_judge_prompt_render(
    problem: *const c_char,
    standard_answer: *const c_char,
    student_answer: *const c_char,
) -> *mut OtJudgePrompt {
    let mut st = OtStatus::Ok;
    let (Some(p), Some(g), Some(s)) = (
        read_str(problem, &mut st),
        read_str(standard_answer, &mut st),
        read_str(student_answer, &mut st),
    ) else {
        return std::ptr::null_mut();
    };
    let (system, user) = verifier::render_judge_prompt(p, g, s);
    let (Ok(system), Ok(user)) = (CString::new(system), CString::new(user)) else {
        return std::ptr::null_mut();
    };
    Box::into_raw(Box::new(OtJudgePrompt { system, user }))
}

/// System half of a rendered prompt. Owned by the handle.
///
/// # Safety
/// `prompt` must be a live handle from [`ot_judge_prompt_render`].
#[no_mangle]
pub unsafe extern "C" fn ot_judge_prompt_system(prompt: *const OtJudgePrompt) -> *const c_char {
    if prompt.is_null() {
        return std::ptr::null();
    }
    (*prompt).system.as_ptr()
}

/// User half of a rendered prompt. Owned by the handle.
///
/// # Safety
/// `prompt` must be a live handle from [`ot_judge_prompt_render`].
#[no_mangle]
pub unsafe extern "C" fn ot_judge_prompt_user(prompt: *const OtJudgePrompt) -> *const c_char {
    if prompt.is_null() {
        return std::ptr::null();
    }
    (*prompt).user.as_ptr()
}

/// Free a judge prompt handle. NULL is a no-op.
///
/// # Safety
/// `prompt` must come from [`ot_judge_prompt_render`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ot_judge_prompt_free(prompt: *mut OtJudgePrompt) {
    if !prompt.is_null() {
        drop(Box::from_raw(prompt));
    }
}

/// Welch t-test result.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OtWelchResult {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_two_sided: f64,
    /// Non-zero when both groups had zero variance.
    pub degenerate: i32,
}

/// Welch's two-sample t-test. Requires at least two observations per group.
///
/// # Safety
/// `group_a`/`group_b` must point to `a_len`/`b_len` readable doubles and
/// `out` to a writable result struct.
#[no_mangle]
pub unsafe extern "C" fn ot_welch_t_test(
    group_a: *const f64,
    a_len: usize,
    group_b: *const f64,
    b_len: usize,
    out: *mut OtWelchResult,
) -> OtStatus {
    if group_a.is_null() || group_b.is_null() || out.is_null() {
        return OtStatus::NullPointer;
    }
    let a = std::slice::from_raw_parts(group_a, a_len);
    let b = std::slice::from_raw_parts(group_b, b_len);
    match metrics::welch_t_test(a, b) {
        Ok(result) => {
            *out = OtWelchResult {
                t: result.t,
                degrees_of_freedom: result.degrees_of_freedom,
                p_two_sided: result.p_two_sided,
                degenerate: i32::from(result.degenerate),
            };
            OtStatus::Ok
        }
        Err(_) => OtStatus::InvalidArgument,
    }
}

/// Mean of indicator values: pass@1 over one item's verdicts (non-zero bytes
/// count as correct).
///
/// # Safety
/// `verdicts` must point to `len` readable bytes and `out` to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn ot_pass_at_1(
    verdicts: *const u8,
    len: usize,
    out: *mut f64,
) -> OtStatus {
    if verdicts.is_null() || out.is_null() {
        return OtStatus::NullPointer;
    }
    let flags: Vec<bool> = std::slice::from_raw_parts(verdicts, len).iter().map(|v| *v != 0).collect();
    match metrics::pass_at_1(&flags) {
        Ok(value) => {
            *out = value;
            OtStatus::Ok
        }
        Err(_) => OtStatus::InvalidArgument,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take(ptr: *mut c_char) -> String {
        assert!(!ptr.is_null());
        let s = CStr::from_ptr(ptr).to_str().unwrap().to_string();
        ot_string_free(ptr);
        s
    }

    #[test]
    fn truncate_and_count_round_trip() {
        unsafe {
            let text = c("a b c d e");
            let mut status = OtStatus::Ok;
            assert_eq!(ot_token_count(text.as_ptr(), &mut status), 5);
            assert_eq!(status, OtStatus::Ok);
            let prefix = take(ot_truncate_fraction(text.as_ptr(), 0.6, &mut status));
            assert_eq!(prefix, "a b c");
            let bad = ot_truncate_fraction(text.as_ptr(), 2.0, &mut status);
            assert!(bad.is_null());
            assert_eq!(status, OtStatus::InvalidArgument);
        }
    }

    #[test]
    fn splice_and_first_paragraph() {
        unsafe {
            let mut status = OtStatus::Ok;
            let joined = take(ot_splice(c("A").as_ptr(), c("B").as_ptr(), &mut status));
            assert_eq!(joined, "A\n\nB");
            let para = take(ot_first_paragraph(c("P1\n\nP2").as_ptr(), &mut status));
            assert_eq!(para, "P1\n\n");
        }
    }

    #[test]
    fn extraction_and_equivalence() {
        unsafe {
            let mut status = OtStatus::Ok;
            let answer = take(ot_extract_answer(c("so \\boxed{1/2} done").as_ptr(), &mut status));
            assert_eq!(answer, "1/2");
            assert!(ot_normalize_equal(c("0.5").as_ptr(), c("1/2").as_ptr()));
            assert!(!ot_normalize_equal(c("(3,1)").as_ptr(), c("(1,3)").as_ptr()));
            assert!(ot_steer_contains_answer(c("mid \\boxed{42} text").as_ptr(), c("42").as_ptr()));
            let none = ot_extract_answer(c("nothing here").as_ptr(), &mut status);
            assert!(none.is_null());
            assert_eq!(status, OtStatus::Ok);
        }
    }

    #[test]
    fn judge_prompt_handle_lifecycle() {
        unsafe {
            let prompt = ot_judge_prompt_render(c("P?").as_ptr(), c("7").as_ptr(), c("8").as_ptr());
            assert!(!prompt.is_null());
            let system = CStr::from_ptr(ot_judge_prompt_system(prompt)).to_str().unwrap();
            assert!(system.starts_with("You are an unbiased examiner"));
            let user = CStr::from_ptr(ot_judge_prompt_user(prompt)).to_str().unwrap();
            assert!(user.contains("Standard Answer: 7"));
            ot_judge_prompt_free(prompt);
            assert_eq!(
                ot_parse_judge_reply(c("<judge>CORRECT</judge>").as_ptr()),
                OtJudgeLabel::Correct
            );
            assert_eq!(ot_parse_judge_reply(c("nope").as_ptr()), OtJudgeLabel::Unparseable);
        }
    }

    #[test]
    fn welch_and_pass_at_1() {
        unsafe {
            let a = [0.1, 0.2, 0.15, 0.18];
            let b = [0.8, 0.9, 0.85, 0.88];
            let mut out = OtWelchResult { t: 0.0, degrees_of_freedom: 0.0, p_two_sided: 1.0, degenerate: 0 };
            let status = ot_welch_t_test(a.as_ptr(), a.len(), b.as_ptr(), b.len(), &mut out);
            assert_eq!(status, OtStatus::Ok);
            assert!(out.p_two_sided < 0.005);
            assert_eq!(
                ot_welch_t_test(a.as_ptr(), 1, b.as_ptr(), b.len(), &mut out),
                OtStatus::InvalidArgument
            );

            let verdicts = [1u8, 1, 1, 1, 1, 1, 0, 0];
            let mut p = 0.0f64;
            assert_eq!(ot_pass_at_1(verdicts.as_ptr(), verdicts.len(), &mut p), OtStatus::Ok);
            assert_eq!(p, 0.75);
        }
    }

    #[test]
    fn generated_header_exists_after_build() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/offtrack.h");
        assert!(header.exists(), "cbindgen header missing at {}", header.display());
        let text = std::fs::read_to_string(header).unwrap();
        for symbol in ["ot_normalize_equal", "ot_welch_t_test", "OtJudgePrompt", "OtStatus"] {
            assert!(text.contains(symbol), "header missing {symbol}");
        }
    }
}

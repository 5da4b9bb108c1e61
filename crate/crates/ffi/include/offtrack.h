#ifndef OFFTRACK_FFI_H
#define OFFTRACK_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Judge reply labels as C-visible integers.
 */
typedef enum OtJudgeLabel {
  Wrong = 0,
  Correct = 1,
  Unparseable = 2,
} OtJudgeLabel;

/**
 * Status codes for fallible calls.
 */
typedef enum OtStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidUtf8 = 2,
  InvalidArgument = 3,
  Degenerate = 4,
} OtStatus;

/**
 * Opaque rendered judge prompt pair.
 */
typedef struct OtJudgePrompt OtJudgePrompt;

/**
 * Welch t-test result.
 */
typedef struct OtWelchResult {
  double t;
  double degrees_of_freedom;
  double p_two_sided;
  /**
   * Non-zero when both groups had zero variance.
   */
  int32_t degenerate;
} OtWelchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Free a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `ptr` must have been returned by an `ot_*` function from this library and
 * not freed before.
 */
void ot_string_free(char *ptr);

/**
 * Whitespace-mode token count of `text`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
uintptr_t ot_token_count(const char *text, enum OtStatus *status);

/**
 * Prefix covering the first floor(fraction * tokens) whitespace tokens.
 * Returns NULL on error.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
char *ot_truncate_fraction(const char *text, double fraction, enum OtStatus *status);

/**
 * Text up to and including the first blank-line separator.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
char *ot_first_paragraph(const char *text, enum OtStatus *status);

/**
 * Concatenate an og prefix and a steer prefix with the blank-line rule.
 *
 * # Safety
 * Both arguments must be valid NUL-terminated strings.
 */
char *ot_splice(const char *og_prefix, const char *steer_prefix, enum OtStatus *status);

/**
 * Extract the final answer from a completion (last boxed expression, else
 * the trailing expression after an answer cue). NULL when absent.
 *
 * # Safety
 * `completion` must be a valid NUL-terminated string.
 */
char *ot_extract_answer(const char *completion, enum OtStatus *status);

/**
 * True iff candidate and gold are equivalent under the bounded grammar.
 *
 * # Safety
 * Both arguments must be valid NUL-terminated strings.
 */
bool ot_normalize_equal(const char *candidate, const char *gold);

/**
 * True iff the steer prefix already contains an expression equivalent to gold.
 *
 * # Safety
 * Both arguments must be valid NUL-terminated strings.
 */
bool ot_steer_contains_answer(const char *steer_prefix, const char *gold);

/**
 * Parse the label from the last well-formed `<judge>...</judge>` span.
 *
 * # Safety
 * `reply` must be a valid NUL-terminated string.
 */
enum OtJudgeLabel ot_parse_judge_reply(const char *reply);

/**
 * Render the judge prompt for (problem, standard answer, student answer).
 * Free with [`ot_judge_prompt_free`]. NULL on error.
 *
 * # Safety
 * All arguments must be valid NUL-terminated strings.
 */
struct OtJudgePrompt *ot_judge_prompt_render(const char *problem,
                                             const char *standard_answer,
                                             const char *student_answer);

/**
 * System half of a rendered prompt. Owned by the handle.
 *
 * # Safety
 * `prompt` must be a live handle from [`ot_judge_prompt_render`].
 */
const char *ot_judge_prompt_system(const struct OtJudgePrompt *prompt);

/**
 * User half of a rendered prompt. Owned by the handle.
 *
 * # Safety
 * `prompt` must be a live handle from [`ot_judge_prompt_render`].
 */
const char *ot_judge_prompt_user(const struct OtJudgePrompt *prompt);

/**
 * Free a judge prompt handle. NULL is a no-op.
 *
 * # Safety
 * `prompt` must come from [`ot_judge_prompt_render`] and not be freed twice.
 */
void ot_judge_prompt_free(struct OtJudgePrompt *prompt);

/**
 * Welch's two-sample t-test. Requires at least two observations per group.
 *
 * # Safety
 * `group_a`/`group_b` must point to `a_len`/`b_len` readable doubles and
 * `out` to a writable result struct.
 */
enum OtStatus ot_welch_t_test(const double *group_a,
                              uintptr_t a_len,
                              const double *group_b,
                              uintptr_t b_len,
                              struct OtWelchResult *out);

/**
 * Mean of indicator values: pass@1 over one item's verdicts (non-zero bytes
 * count as correct).
 *
 * # Safety
 * `verdicts` must point to `len` readable bytes and `out` to a writable
 * double.
 */
enum OtStatus ot_pass_at_1(const uint8_t *verdicts, uintptr_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OFFTRACK_FFI_H */

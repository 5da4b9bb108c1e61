//! Bounded mathematical-equivalence engine.
//!
//! Supported grammar: exact rationals/decimals (including scientific notation
//! and `\frac` forms), LaTeX wrapper stripping (`$`, `\left`, `\right`,
//! `\text{}`, `\mathrm{}`, `\boxed{}`), ordered tuples `(a,b)` vs unordered
//! set braces `{a,b}`, cosmetic percent/degree suffixes, and case-folded
//! trailing units. Anything outside the grammar falls back to string equality
//! after whitespace stripping; richer judgements (intervals, multi-solution
//! lists) are the judge's job.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// True iff `candidate` and `gold` are equivalent under the supported grammar.
pub fn normalize_equal(candidate: &str, gold: &str) -> bool {
    let a = clean(candidate);
    let b = clean(gold);
    equal_cleaned(&a, &b)
}

fn equal_cleaned(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    if a.is_empty() || b.is_empty() {
        return false;
    }
    match (parse_list(a), parse_list(b)) {
        (Some((ka, ea)), Some((kb, eb))) => {
            if ka != kb || ea.len() != eb.len() {
                return false;
            }
            match ka {
                ListKind::Tuple => ea.iter().zip(eb.iter()).all(|(x, y)| equal_cleaned(x, y)),
                ListKind::Set => set_match(&ea, &eb),
            }
        }
        (None, None) => scalar_equal(a, b),
        // A list on one side only cannot equal a scalar.
        _ => false,
    }
}

/// Strip wrappers and whitespace. Idempotent.
fn clean(s: &str) -> String {
    let mut t = s.trim().to_string();
    t = t.replace("\\left", "").replace("\\right", "");
    t = t.replace("\\{", "{").replace("\\}", "}");
    t = unwrap_macro(&t, "\\text");
    t = unwrap_macro(&t, "\\mathrm");
    t = unwrap_macro(&t, "\\boxed");
    t.retain(|c| c != '$' && !c.is_whitespace());
    t
}

/// Replace every `\name{inner}` with `inner` (balanced braces).
fn unwrap_macro(s: &str, name: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find(name) {
        let after = &rest[pos + name.len()..];
        let trimmed = after.trim_start();
        if let Some(stripped) = trimmed.strip_prefix('{') {
            if let Some(inner_len) = balanced_prefix(stripped) {
                out.push_str(&rest[..pos]);
                out.push_str(&stripped[..inner_len]);
                rest = &stripped[inner_len + 1..];
                continue;
            }
        }
        out.push_str(&rest[..pos + name.len()]);
        rest = after;
    }
    out.push_str(rest);
    out
}

/// Length of the content before the brace that closes an already-open group.
fn balanced_prefix(s: &str) -> Option<usize> {
    let mut depth = 1usize;
    let mut chars = s.char_indices();
    while let Some((idx, ch)) = chars.next() {
        match ch {
            '\\' => {
                chars.next();
            }
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(idx);
                }
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ListKind {
    Tuple,
    Set,
}

/// Parse `(a,b,...)` or `{a,b,...}`. Parens need at least one top-level
/// comma to count as a tuple (otherwise they are grouping); braces are set
/// notation even around a single element.
fn parse_list(s: &str) -> Option<(ListKind, Vec<String>)> {
    let (kind, open, close) = match s.chars().next()? {
        '(' => (ListKind::Tuple, '(', ')'),
        '{' => (ListKind::Set, '{', '}'),
        _ => return None,
    };
    if !s.ends_with(close) || s.len() < 2 {
        return None;
    }
    let inner = &s[open.len_utf8()..s.len() - close.len_utf8()];
    let mut elements = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    for (idx, ch) in inner.char_indices() {
        match ch {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ',' if depth == 0 => {
                elements.push(inner[start..idx].to_string());
                start = idx + 1;
            }
            _ => {}
        }
    }
    if depth != 0 || (kind == ListKind::Tuple && elements.is_empty()) {
        return None;
    }
    elements.push(inner[start..].to_string());
    if elements.iter().any(|e| e.is_empty()) {
        return None;
    }
    Some((kind, elements))
}

/// Order-insensitive match between two equal-length element lists.
fn set_match(a: &[String], b: &[String]) -> bool {
    let mut used = vec![false; b.len()];
    set_match_rec(a, b, &mut used, 0)
}

fn set_match_rec(a: &[String], b: &[String], used: &mut [bool], idx: usize) -> bool {
    if idx == a.len() {
        return true;
    }
    for j in 0..b.len() {
        if !used[j] && equal_cleaned(&a[idx], &b[j]) {
            used[j] = true;
            if set_match_rec(a, b, used, idx + 1) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

fn scalar_equal(a: &str, b: &str) -> bool {
    let (ca, _) = strip_suffix_marker(a);
    let (cb, _) = strip_suffix_marker(b);
    match (parse_measure(ca), parse_measure(cb)) {
        (Some((ra, ua)), Some((rb, ub))) => ra == rb && ua == ub,
        _ => false,
    }
}

/// Remove one trailing percent or degree marker; its presence is cosmetic.
fn strip_suffix_marker(s: &str) -> (&str, bool) {
    for suffix in ["\\%", "%", "^{\\circ}", "^\\circ", "\u{00b0}", "\\degree"] {
        if let Some(stripped) = s.strip_suffix(suffix) {
            return (stripped, true);
        }
    }
    (s, false)
}

/// Parse a number with an optional trailing alphabetic unit (case-folded).
fn parse_measure(s: &str) -> Option<(BigRational, String)> {
    if let Some(r) = parse_rational(s) {
        return Some((r, String::new()));
    }
    // Longest alphabetic suffix; the rest must parse as a number.
    let boundary = s.char_indices().rev().take_while(|(_, c)| c.is_alphabetic()).last()?.0;
    if boundary == 0 {
        return None;
    }
    let r = parse_rational(&s[..boundary])?;
    Some((r, s[boundary..].to_lowercase()))
}

fn parse_rational(s: &str) -> Option<BigRational> {
    if s.is_empty() {
        return None;
    }
    if let Some(r) = parse_frac_macro(s) {
        return Some(r);
    }
    if let Some(idx) = top_level_slash(s) {
        let num = parse_decimal(&s[..idx])?;
        let den = parse_decimal(&s[idx + 1..])?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    parse_decimal(s)
}

fn top_level_slash(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (idx, ch) in s.char_indices() {
        match ch {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            '/' if depth == 0 => return Some(idx),
            _ => {}
        }
    }
    None
}

/// `\frac{a}{b}`, `\dfrac{a}{b}`, `\tfrac{a}{b}` with plain numeric arguments.
fn parse_frac_macro(s: &str) -> Option<BigRational> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = ["\\frac", "\\dfrac", "\\tfrac"]
        .iter()
        .find_map(|m| body.strip_prefix(m))?;
    let rest = rest.strip_prefix('{')?;
    let close = balanced_prefix(rest)?;
    let num = parse_decimal(&rest[..close])?;
    let rest = rest[close + 1..].strip_prefix('{')?;
    let close2 = balanced_prefix(rest)?;
    if close2 + 1 != rest.len() {
        return None;
    }
    let den = parse_decimal(&rest[..close2])?;
    if den.is_zero() {
        return None;
    }
    let value = num / den;
    Some(if sign < 0 { -value } else { value })
}

/// Exact decimal: optional sign, digits with optional point, optional
/// e/E exponent.
fn parse_decimal(s: &str) -> Option<BigRational> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1i32, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return None;
    }
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(idx) => {
            let exp: i64 = body[idx + 1..].parse().ok()?;
            (&body[..idx], exp)
        }
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(idx) => (&mantissa[..idx], &mantissa[idx + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let mut value = BigRational::new(numer, BigInt::one());
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10);
    if scale > 0 {
        value *= BigRational::new(ten.pow(scale as u32), BigInt::one());
    } else if scale < 0 {
        value /= BigRational::new(ten.pow((-scale) as u32), BigInt::one());
    }
    Some(if sign < 0 { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    include!("../../tests/fixtures/normalize_oracle.rs");

    #[test]
    fn agrees_with_hand_enumerated_oracle() {
        let mut failures = Vec::new();
        for (candidate, gold, expected) in NORMALIZE_ORACLE {
            let got = normalize_equal(candidate, gold);
            if got != *expected {
                failures.push(format!("({candidate:?}, {gold:?}): got {got}, want {expected}"));
            }
        }
        assert!(failures.is_empty(), "oracle disagreements:\n{}", failures.join("\n"));
    }

    #[test]
    fn tuple_vs_set_distinction() {
        assert!(!normalize_equal("(3,1)", "(1,3)"));
        assert!(normalize_equal("{3,1}", "{1,3}"));
    }

    #[test]
    fn rational_decimal_equivalence_is_exact() {
        assert!(normalize_equal("0.5", "1/2"));
        assert!(!normalize_equal("0.5000001", "1/2"));
    }

    #[test]
    fn clean_is_idempotent() {
        for (candidate, gold, _) in NORMALIZE_ORACLE {
            for s in [candidate, gold] {
                let once = clean(s);
                assert_eq!(clean(&once), once, "clean not idempotent on {s:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn reflexive_on_arbitrary_strings(s in ".{1,40}") {
            prop_assert!(normalize_equal(&s, &s));
        }

        #[test]
        fn symmetric_on_oracle_domain(i in 0..NORMALIZE_ORACLE.len(), j in 0..NORMALIZE_ORACLE.len()) {
            let a = NORMALIZE_ORACLE[i].0;
            let b = NORMALIZE_ORACLE[j].1;
            prop_assert_eq!(normalize_equal(a, b), normalize_equal(b, a));
        }

        #[test]
        fn equivalent_rationals_always_match(n in -999i64..999, d in 1i64..99) {
            let frac = format!("{n}/{d}");
            let double = format!("{}/{}", 2 * n, 2 * d);
            prop_assert!(normalize_equal(&frac, &double));
        }
    }
}

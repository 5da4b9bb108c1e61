//! Token and paragraph segmentation plus the prefix-truncation semantics used
//! to build spliced trajectories.
//!
//! The whitespace mode is the default unit of counting: prefixes are fractions
//! of the trajectory, so metric shapes depend on relative position rather than
//! any particular subword vocabulary. Endpoint mode delegates to a serving
//! endpoint's tokenize route when one is available.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::model::TokenizerMode;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("endpoint tokenizer unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("endpoint tokenizer returned spans that do not reassemble the input")]
    SpanMismatch,
}

/// One token unit: its text span and byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenUnit {
    pub text: String,
    pub byte_offset: usize,
}

impl TokenUnit {
    pub fn end(&self) -> usize {
        self.byte_offset + self.text.len()
    }
}

/// A segmentation of one source text. Concatenating the unit spans with the
/// original separators reproduces the source exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub units: Vec<TokenUnit>,
    pub mode: TokenizerMode,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Provider of endpoint-backed token spans. Implementations must return spans
/// whose concatenation equals the input text byte-for-byte.
pub trait EndpointTokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<String>, SegmentError>;
}

/// Segmentation front-end carrying the token mode and, for endpoint mode, the
/// tokenizer handle and fallback policy.
#[derive(Clone)]
pub struct Segmenter {
    mode: TokenizerMode,
    endpoint: Option<Arc<dyn EndpointTokenizer>>,
    allow_fallback: bool,
    fell_back: Arc<AtomicBool>,
}

impl Segmenter {
    pub fn whitespace() -> Self {
        Self {
            mode: TokenizerMode::WHITESPACE,
            endpoint: None,
            allow_fallback: true,
            fell_back: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn endpoint(tokenizer: Arc<dyn EndpointTokenizer>, allow_fallback: bool) -> Self {
        Self {
            mode: TokenizerMode::ENDPOINT,
            endpoint: Some(tokenizer),
            allow_fallback,
            fell_back: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    /// True once any endpoint segmentation has fallen back to whitespace;
    /// recorded in the run manifest.
    pub fn fallback_occurred(&self) -> bool {
        self.fell_back.load(Ordering::Relaxed)
    }

    pub fn segment(&self, text: &str) -> Result<TokenSeq, SegmentError> {
        match self.mode {
            TokenizerMode::WHITESPACE => Ok(segment_whitespace(text)),
            TokenizerMode::ENDPOINT => {
                let tokenizer = self.endpoint.as_ref().expect("endpoint mode carries tokenizer");
                match tokenizer.tokenize(text) {
                    Ok(spans) => assemble(text, spans),
                    Err(err) => {
                        if self.allow_fallback {
                            self.fell_back.store(true, Ordering::Relaxed);
                            Ok(segment_whitespace(text))
                        } else {
                            Err(err)
                        }
                    }
                }
            }
        }
    }

    /// Prefix covering the first `floor(fraction * token_count)` tokens, cut
    /// at a token boundary with original inter-token whitespace preserved.
    /// Fraction 0 yields the empty string; fraction 1 the full text.
    pub fn truncate_fraction(&self, text: &str, fraction: f64) -> Result<String, SegmentError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SegmentError::InvalidFraction(fraction));
        }
        if fraction == 0.0 {
            return Ok(String::new());
        }
        if fraction >= 1.0 {
            return Ok(text.to_string());
        }
        let seq = self.segment(text)?;
        Ok(truncate_at(text, &seq, fraction))
    }
}

/// Split on maximal whitespace runs; spans are the non-whitespace stretches.
pub fn segment_whitespace(text: &str) -> TokenSeq {
    let mut units = Vec::new();
    let mut start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                units.push(TokenUnit { text: text[s..idx].to_string(), byte_offset: s });
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        units.push(TokenUnit { text: text[s..].to_string(), byte_offset: s });
    }
    TokenSeq { units, mode: TokenizerMode::WHITESPACE }
}

fn assemble(text: &str, spans: Vec<String>) -> Result<TokenSeq, SegmentError> {
    let mut units = Vec::with_capacity(spans.len());
    let mut offset = 0usize;
    for span in spans {
        let end = offset + span.len();
        if end > text.len() || text[offset..end] != *span {
            return Err(SegmentError::SpanMismatch);
        }
        units.push(TokenUnit { text: span, byte_offset: offset });
        offset = end;
    }
    if offset != text.len() {
        return Err(SegmentError::SpanMismatch);
    }
    Ok(TokenSeq { units, mode: TokenizerMode::ENDPOINT })
}

// Guard against binary-float shortfall on exact decimal grids (0.6 * 5 must
// count as 3 tokens, not 2).
const FRACTION_EPS: f64 = 1e-9;

fn truncate_at(text: &str, seq: &TokenSeq, fraction: f64) -> String {
    let count = ((fraction * seq.len() as f64) + FRACTION_EPS).floor() as usize;
    if count == 0 {
        return String::new();
    }
    let last = &seq.units[count.min(seq.len()) - 1];
    text[..last.end()].to_string()
}

/// Convenience wrapper for the default whitespace mode.
pub fn truncate_fraction(text: &str, fraction: f64) -> Result<String, SegmentError> {
    Segmenter::whitespace().truncate_fraction(text, fraction)
}

/// Text up to and including the first blank-line separator (two newlines,
/// tolerating intervening spaces or tabs); the whole text if none.
pub fn first_paragraph(text: &str) -> &str {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                return &text[..j + 1];
            }
        }
        i += 1;
    }
    text
}

fn ends_with_blank_line(text: &str) -> bool {
    let trimmed = text.trim_end_matches([' ', '\t']);
    if !trimmed.ends_with('\n') {
        return false;
    }
    let inner = trimmed[..trimmed.len() - 1].trim_end_matches([' ', '\t']);
    inner.ends_with('\n')
}

/// Concatenate an og prefix and a steer prefix. A single blank-line separator
/// is inserted when the og prefix is non-empty and does not already end with
/// one; an empty og prefix returns the steer unchanged.
pub fn splice(og_prefix: &str, steer_prefix: &str) -> String {
    if og_prefix.is_empty() {
        return steer_prefix.to_string();
    }
    if ends_with_blank_line(og_prefix) {
        format!("{og_prefix}{steer_prefix}")
    } else {
        format!("{og_prefix}\n\n{steer_prefix}")
    }
}

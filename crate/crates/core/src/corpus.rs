//! Streaming corpus preparation: per-line language filtering, hash-based
//! deduplication and tokenization.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::hash::java_string_hash;
use crate::langid::{LangIdModel, Prediction};

/// One input line, without its line terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLine {
    text: String,
    source_offset: u64,
}

impl RawLine {
    pub fn new(text: impl Into<String>, source_offset: u64) -> Result<Self> {
        let text = text.into();
        if text.contains(['\n', '\r']) {
            return Err(Error::Config("a raw line cannot contain a line break".into()));
        }
        Ok(RawLine {
            text,
            source_offset,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Byte position of the line in its input stream.
    pub fn source_offset(&self) -> u64 {
        self.source_offset
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Lines must have strictly more characters than this.
    pub min_chars: usize,
    pub min_confidence: f64,
    pub target_language: String,
}

impl FilterConfig {
    pub fn new(target_language: impl Into<String>) -> Self {
        FilterConfig {
            min_chars: 100,
            min_confidence: 0.8,
            target_language: target_language.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "minimum confidence must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        Ok(())
    }
}

/// Why a line was dropped by the language/length filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Length,
    Language,
    Confidence,
}

/// First failing filter condition, checked in the order length, language,
/// confidence. `None` means the line is kept.
pub fn drop_reason(line: &str, prediction: &Prediction, cfg: &FilterConfig) -> Option<DropReason> {
    if line.chars().count() <= cfg.min_chars {
        Some(DropReason::Length)
    } else if prediction.label != cfg.target_language {
        Some(DropReason::Language)
    } else if prediction.confidence < cfg.min_confidence {
        Some(DropReason::Confidence)
    } else {
        None
    }
}

/// Keep iff the line has more than `min_chars` characters, is predicted as
/// the target language, and with confidence at least `min_confidence`.
pub fn filter_line(line: &RawLine, prediction: &Prediction, cfg: &FilterConfig) -> bool {
    drop_reason(line.text(), prediction, cfg).is_none()
}

/// Drops every line whose Java string hash was already seen. Distinct lines
/// that collide are dropped too.
#[derive(Debug, Default, Clone)]
pub struct Deduplicator {
    seen: HashSet<i32>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `true` the first time a hash is seen.
    pub fn admit(&mut self, text: &str) -> bool {
        self.seen.insert(java_string_hash(text))
    }

    pub fn distinct_hashes(&self) -> usize {
        self.seen.len()
    }
}

pub fn deduplicate<I>(lines: I) -> impl Iterator<Item = RawLine>
where
    I: IntoIterator<Item = RawLine>,
{
    let mut dedup = Deduplicator::new();
    lines.into_iter().filter(move |l| dedup.admit(l.text()))
}

fn token_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    // '<' and '>' are reserved as subword boundary markers and act as
    // separators.
    PATTERN.get_or_init(|| {
        Regex::new(r"[\p{P}\p{S}&&[^<>]]|[^\s\p{P}\p{S}]+").expect("valid token pattern")
    })
}

/// Splits on Unicode whitespace and emits every punctuation or symbol
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<&str> {
    token_pattern().find_iter(text).map(|m| m.as_str()).collect()
}

/// Line accounting of a pipeline run. Every line read lands in exactly one
/// of `kept` or a `dropped_*` bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    pub lines_seen: u64,
    pub kept: u64,
    pub dropped_language: u64,
    pub dropped_length: u64,
    pub dropped_confidence: u64,
    pub dropped_dedup: u64,
    /// Lines with no tokens left after tokenization.
    pub dropped_empty: u64,
    pub tokens_emitted: u64,
}

impl PipelineStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_language
            + self.dropped_length
            + self.dropped_confidence
            + self.dropped_dedup
            + self.dropped_empty
    }

    pub fn is_consistent(&self) -> bool {
        self.lines_seen == self.kept + self.dropped()
    }
}

/// A pipeline that stopped early, with the accounting up to the failure.
#[derive(Debug, Error)]
#[error("pipeline aborted after {} lines: {source}", partial.lines_seen)]
pub struct PipelineFailure {
    #[source]
    pub source: Error,
    pub partial: PipelineStats,
}

const BATCH_LINES: usize = 4096;

/// Reads lines from `input`, keeps confident target-language lines longer
/// than `cfg.min_chars`, drops repeated lines by hash, and writes each
/// survivor tokenized (space-separated) on its own line.
///
/// Language prediction runs in parallel per batch; deduplication and output
/// are sequential, so output order follows input order.
pub fn run_pipeline<R: BufRead, W: Write>(
    mut input: R,
    mut output: W,
    cfg: &FilterConfig,
    model: &LangIdModel,
) -> std::result::Result<PipelineStats, PipelineFailure> {
    let mut stats = PipelineStats::default();
    if let Err(e) = cfg.validate() {
        return Err(PipelineFailure {
            source: e,
            partial: stats,
        });
    }
    let mut dedup = Deduplicator::new();
    let mut offset = 0u64;
    let mut buf = Vec::new();
    let mut eof = false;

    while !eof {
        let mut batch: Vec<RawLine> = Vec::with_capacity(BATCH_LINES);
        while batch.len() < BATCH_LINES {
            buf.clear();
            let n = match input.read_until(b'\n', &mut buf) {
                Ok(n) => n,
                Err(e) => {
                    return Err(PipelineFailure {
                        source: e.into(),
                        partial: stats,
                    })
                }
            };
            if n == 0 {
                eof = true;
                break;
            }
            let text = String::from_utf8_lossy(&buf);
            let text = text.trim_end_matches(['\n', '\r']).replace('\r', " ");
            batch.push(RawLine {
                text,
                source_offset: offset,
            });
            offset += n as u64;
        }

        let candidates: Vec<&str> = batch
            .iter()
            .filter(|l| l.text.chars().count() > cfg.min_chars)
            .map(|l| l.text.as_str())
            .collect();
        let mut predictions = model.predict_batch(&candidates).into_iter();

        for line in &batch {
            stats.lines_seen += 1;
            if line.text.chars().count() <= cfg.min_chars {
                stats.dropped_length += 1;
                continue;
            }
            let prediction = match predictions.next().expect("one prediction per candidate") {
                Ok(p) => p,
                Err(_) => {
                    stats.dropped_language += 1;
                    continue;
                }
            };
            match drop_reason(&line.text, &prediction, cfg) {
                Some(DropReason::Length) => stats.dropped_length += 1,
                Some(DropReason::Language) => stats.dropped_language += 1,
                Some(DropReason::Confidence) => stats.dropped_confidence += 1,
                None if !dedup.admit(&line.text) => stats.dropped_dedup += 1,
                None => {
                    let tokens = tokenize(&line.text);
                    if tokens.is_empty() {
                        stats.dropped_empty += 1;
                        continue;
                    }
                    if let Err(e) = writeln!(output, "{}", tokens.join(" ")) {
                        return Err(PipelineFailure {
                            source: e.into(),
                            partial: stats,
                        });
                    }
                    stats.kept += 1;
                    stats.tokens_emitted += tokens.len() as u64;
                }
            }
        }
    }
    if let Err(e) = output.flush() {
        return Err(PipelineFailure {
            source: e.into(),
            partial: stats,
        });
    }
    Ok(stats)
}

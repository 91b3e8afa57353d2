//! Clinical report preprocessing: extract the main section, clean and split
//! into sentences, fold short fragments, and pair sentences into short units.
//!
//! Rules, in order:
//! 1. Content starts after the first case-insensitive whole-word match of any
//!    keyword, skipping a following separator (`:`, `-` and whitespace). With
//!    no keyword the whole text is kept and the report is flagged.
//! 2. Noise removed: banners (an underscore or dash run, text without
//!    lowercase letters or terminators, another run), remaining runs of two
//!    or more underscores or dashes, bracketed tags `[...]`; whitespace is
//!    collapsed. Sentences end at `.`, `!` or `?` followed by whitespace and
//!    an uppercase letter or digit, unless the word before the terminator is
//!    a listed abbreviation. Decimals never split since no whitespace follows
//!    their point.
//! 3. A sentence with fewer than [`MIN_TOKENS`] whitespace tokens is appended
//!    to the previous sentence, or dropped (and logged) when none exists.
//! 4. Consecutive sentences are joined in pairs; an odd count leaves a final
//!    single-sentence unit.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_KEYWORDS: [&str; 2] = ["FINDINGS", "REPORT"];
pub const MIN_TOKENS: usize = 3;
/// Compared case-insensitively against the word carrying the terminator.
pub const ABBREVIATIONS: [&str; 10] = ["dr.", "e.g.", "i.e.", "no.", "vs.", "mr.", "mrs.", "ms.", "approx.", "st."];

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("report {0:?} is empty")]
    Empty(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortReport {
    pub id: String,
    pub sentences: Vec<String>,
    pub short_units: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFlag {
    NoKeyword,
    EmptyContent,
    DroppedFragment,
    NoSentences,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub keyword: Option<String>,
    pub flags: Vec<AuditFlag>,
    pub dropped: Vec<String>,
}

impl AuditRecord {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub content: String,
    /// The keyword as it appeared in the text.
    pub keyword: Option<String>,
}

static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[\s:\-]*").unwrap());
static BANNER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:_{2,}|-{2,})[^a-z.!?_\n-]*(?:_{2,}|-{2,})").unwrap());
static RULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"_{2,}|-{2,}").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\]]*\]").unwrap());
static SPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

pub fn extract_main_content(text: &str, keywords: &[&str]) -> Extracted {
    let first = keywords
        .iter()
        .filter(|k| !k.is_empty())
        .filter_map(|k| {
            let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(k))).expect("escaped keyword");
            re.find(text).map(|m| (m.start(), m.end()))
        })
        .min();
    match first {
        Some((start, end)) => {
            let rest = &text[end..];
            let skip = SEPARATOR.find(rest).map_or(0, |m| m.end());
            Extracted { content: rest[skip..].trim().to_string(), keyword: Some(text[start..end].to_string()) }
        }
        None => Extracted { content: text.trim().to_string(), keyword: None },
    }
}

pub fn clean(content: &str) -> String {
    let s = BANNER.replace_all(content, " ");
    let s = RULE.replace_all(&s, " ");
    let s = TAG.replace_all(&s, " ");
    SPACE.replace_all(&s, " ").trim().to_string()
}

fn is_abbreviation(text: &str, dot: usize) -> bool {
    let word_start = text[..dot].rfind(char::is_whitespace).map_or(0, |i| i + 1);
    let word = text[word_start..=dot].to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

pub fn clean_and_segment(content: &str) -> Vec<String> {
    let text = clean(content);
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let (Some(&(_, ws)), Some(&(_, next))) = (chars.get(k + 1), chars.get(k + 2)) else {
            continue;
        };
        if !ws.is_whitespace() || !(next.is_uppercase() || next.is_ascii_digit()) {
            continue;
        }
        if c == '.' && is_abbreviation(&text, i) {
            continue;
        }
        sentences.push(text[start..=i].trim().to_string());
        start = i + 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// Returns the kept sentences and the dropped leading fragments.
pub fn filter_and_merge(sentences: &[String]) -> (Vec<String>, Vec<String>) {
    let mut kept: Vec<String> = Vec::new();
    let mut dropped = Vec::new();
    for s in sentences {
        if s.split_whitespace().count() >= MIN_TOKENS {
            kept.push(s.clone());
        } else if let Some(last) = kept.last_mut() {
            last.push(' ');
            last.push_str(s);
        } else {
            log::debug!("dropping leading fragment {s:?}");
            dropped.push(s.clone());
        }
    }
    (kept, dropped)
}

pub fn make_short_reports(sentences: &[String]) -> Vec<String> {
    sentences.chunks(2).map(|pair| pair.join(" ")).collect()
}

/// Runs all four steps on one report.
pub fn process_report(raw: &RawReport, keywords: &[&str]) -> Result<(ShortReport, AuditRecord), ReportError> {
    if raw.text.trim().is_empty() {
        return Err(ReportError::Empty(raw.id.clone()));
    }
    let mut flags = Vec::new();
    let extracted = extract_main_content(&raw.text, keywords);
    if extracted.keyword.is_none() {
        flags.push(AuditFlag::NoKeyword);
    }
    if extracted.content.is_empty() {
        flags.push(AuditFlag::EmptyContent);
    }
    let (sentences, dropped) = filter_and_merge(&clean_and_segment(&extracted.content));
    if !dropped.is_empty() {
        flags.push(AuditFlag::DroppedFragment);
    }
    if sentences.is_empty() {
        flags.push(AuditFlag::NoSentences);
    }
    let short_units = make_short_reports(&sentences);
    Ok((
        ShortReport { id: raw.id.clone(), sentences, short_units },
        AuditRecord { id: raw.id.clone(), keyword: extracted.keyword, flags, dropped },
    ))
}

pub fn parse_raw_jsonl(text: &str) -> Result<Vec<RawReport>, ReportError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ReportError::Parse { line: i + 1, reason: e.to_string() }))
        .collect()
}

/// One JSON object per line, each line newline-terminated.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

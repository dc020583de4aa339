use std::collections::BTreeSet;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::questionnaire::{QuestionKind, QuestionnaireItem};
use super::EvalError;

static PHRASE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bthe\s+answers?\s+(?:is|are)\b\s*:?\s*").expect("valid regex"));
static LETTERS_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^[\s"'“‘(\[]*(?:(?i:options?)\s+)?([A-Z])\b((?:\s*(?:,\s*and|,|&|\band\b)\s*(?:(?i:option)\s+)?[A-Z]\b)*)"#)
        .expect("valid regex")
});
static LETTER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[A-Z]\b").expect("valid regex"));
static ISO_DATE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{4})[-/.](\d{1,2})[-/.](\d{1,2})\b").expect("valid regex"));
static MONTH_FIRST_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b([a-z]{3,9})\.?\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})\b").expect("valid regex")
});
static DAY_FIRST_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d{1,2})(?:st|nd|rd|th)?\s+(?:of\s+)?([a-z]{3,9})\.?,?\s+(\d{4})\b").expect("valid regex")
});

/// What a reply was understood to say.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum ParsedAnswer {
    Text(String),
    Choice(String),
    Choices(BTreeSet<String>),
}

impl std::fmt::Display for ParsedAnswer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Text(t) | Self::Choice(t) => f.write_str(t),
            Self::Choices(set) => f.write_str(&set.iter().cloned().collect::<Vec<_>>().join(",")),
        }
    }
}

/// Text following each "the answer is" in the reply, in order.
fn answer_segments(text: &str) -> Vec<&str> {
    PHRASE_RE.find_iter(text).map(|m| &text[m.end()..]).collect()
}

/// Up to the end of the first sentence or line.
fn first_phrase(segment: &str) -> &str {
    let bytes: Vec<(usize, char)> = segment.char_indices().collect();
    for (n, &(i, c)) in bytes.iter().enumerate() {
        if c == '\n' {
            return &segment[..i];
        }
        if matches!(c, '.' | '!' | '?') {
            let next = bytes.get(n + 1).map(|&(_, c)| c);
            if next.is_none_or(|c| c.is_whitespace() || c == '"' || c == '\'' || c == '”') {
                return &segment[..i];
            }
        }
    }
    segment
}

fn letter_list(segment: &str, labels: &BTreeSet<String>) -> Option<BTreeSet<String>> {
    let caps = LETTERS_RE.captures(segment)?;
    let mut set = BTreeSet::new();
    set.insert(caps[1].to_string());
    if let Some(rest) = caps.get(2) {
        set.extend(LETTER_RE.find_iter(rest.as_str()).map(|m| m.as_str().to_string()));
    }
    set.iter().all(|l| labels.contains(l)).then_some(set)
}

/// Extracts the answer from a reply to `item`.
pub fn parse_answer(text: &str, item: &QuestionnaireItem) -> Result<ParsedAnswer, EvalError> {
    let unparseable = || EvalError::Unparseable(text.to_string());
    match item.kind {
        QuestionKind::Cloze => answer_segments(text)
            .into_iter()
            .map(|s| first_phrase(s).trim().trim_matches(|c: char| "\"'“”‘’".contains(c)).trim())
            .find(|s| !s.is_empty())
            .map(|s| ParsedAnswer::Text(s.to_string()))
            .ok_or_else(unparseable),
        kind => {
            let labels = item.option_labels();
            let mut segments = answer_segments(text);
            // A bare list such as "D, E and F." counts too.
            if segments.is_empty() {
                let bare = text.trim().trim_end_matches(['.', '!']);
                if LETTERS_RE.find(bare).is_some_and(|m| m.end() == bare.len()) {
                    segments.push(bare);
                }
            }
            let set = segments
                .into_iter()
                .find_map(|s| letter_list(s, &labels))
                .ok_or_else(unparseable)?;
            match kind {
                QuestionKind::SingleChoice if set.len() == 1 => {
                    Ok(ParsedAnswer::Choice(set.into_iter().next().expect("one element")))
                }
                QuestionKind::SingleChoice => Err(unparseable()),
                _ => Ok(ParsedAnswer::Choices(set)),
            }
        }
    }
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize_cloze(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn month_number(name: &str) -> Option<u32> {
    const MONTHS: [&str; 12] = [
        "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
        "december",
    ];
    let n = name.to_lowercase();
    if n.len() < 3 {
        return None;
    }
    MONTHS.iter().position(|m| m.starts_with(&n) || n == *m).map(|i| i as u32 + 1)
}

/// The first calendar date written in any common form.
pub fn extract_date(s: &str) -> Option<NaiveDate> {
    if let Some(c) = ISO_DATE_RE.captures(s) {
        return NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?);
    }
    if let Some(c) = MONTH_FIRST_RE.captures(s) {
        if let Some(m) = month_number(&c[1]) {
            return NaiveDate::from_ymd_opt(c[3].parse().ok()?, m, c[2].parse().ok()?);
        }
    }
    if let Some(c) = DAY_FIRST_RE.captures(s) {
        if let Some(m) = month_number(&c[2]) {
            return NaiveDate::from_ymd_opt(c[3].parse().ok()?, m, c[1].parse().ok()?);
        }
    }
    None
}

/// Exact match after normalization; date keys compare as dates.
pub fn cloze_matches(answer: &str, key: &str) -> bool {
    if let Ok(date) = NaiveDate::parse_from_str(key.trim(), "%Y-%m-%d") {
        return extract_date(answer) == Some(date);
    }
    let a = normalize_cloze(answer);
    !a.is_empty() && a == normalize_cloze(key)
}

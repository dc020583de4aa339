use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MacmError;

pub const CONTENT_CAP: usize = 100;
pub const THINKING_CAP: usize = 50;
pub const EMOTION_CAP: usize = 100;
pub const ANALYSIS_CAP: usize = 30;
pub const MAX_RECORDS: usize = 1000;

/// Zero-padded three-digit index.
pub fn format_index(i: usize) -> String {
    format!("{i:03}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CapViolation {
    pub facet: String,
    pub words: usize,
    pub cap: usize,
}

/// Text cut to `cap` words, with a violation when it was longer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CappedText {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<CapViolation>,
}

pub fn enforce_cap(facet: &str, text: &str, cap: usize) -> CappedText {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= cap {
        return CappedText {
            text: text.trim().to_string(),
            violation: None,
        };
    }
    tracing::warn!(facet, words = words.len(), cap, "output over word cap, truncated");
    CappedText {
        text: words[..cap].join(" "),
        violation: Some(CapViolation {
            facet: facet.to_string(),
            words: words.len(),
            cap,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MemorySource {
    #[serde(rename_all = "camelCase")]
    Chunk {
        chunk_index: usize,
        paragraph_start: usize,
        paragraph_end: usize,
    },
    #[serde(rename_all = "camelCase")]
    Rehearsal { item_id: u64, turn: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryRecord {
    pub index: String,
    pub summary: String,
    pub content: String,
    pub thinking: String,
    pub emotion: String,
    pub source: MemorySource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<CapViolation>,
}

impl MemoryRecord {
    /// The text bound into `{memory}` for this record.
    pub fn render(&self) -> String {
        format!(
            "[{}] {}\nThoughts: {}\nFeelings: {}",
            self.index, self.content, self.thinking, self.emotion
        )
    }
}

/// Facets of a record before it receives an index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordDraft {
    pub summary: String,
    pub content: CappedText,
    pub thinking: CappedText,
    pub emotion: CappedText,
    pub source: MemorySource,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LongTermStore {
    pub character: String,
    pub records: Vec<MemoryRecord>,
}

impl LongTermStore {
    pub fn new(character: &str) -> Self {
        Self {
            character: character.to_string(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: &str) -> Option<&MemoryRecord> {
        let i: usize = index.parse().ok()?;
        self.records.get(i).filter(|r| r.index == index)
    }

    /// Appends with the next dense index.
    pub fn push(&mut self, draft: RecordDraft) -> Result<&MemoryRecord, MacmError> {
        if self.records.len() >= MAX_RECORDS {
            return Err(MacmError::StoreFull);
        }
        for facet in [&draft.content.text, &draft.thinking.text, &draft.emotion.text, &draft.summary] {
            if facet.trim().is_empty() {
                return Err(MacmError::GenerationFailed("memory facet is empty".into()));
            }
        }
        let violations = [&draft.content, &draft.thinking, &draft.emotion]
            .into_iter()
            .filter_map(|c| c.violation.clone())
            .collect();
        self.records.push(MemoryRecord {
            index: format_index(self.records.len()),
            summary: draft.summary,
            content: draft.content.text,
            thinking: draft.thinking.text,
            emotion: draft.emotion.text,
            source: draft.source,
            violations,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn summary_index(&self) -> BTreeMap<String, String> {
        self.records.iter().map(|r| (r.index.clone(), r.summary.clone())).collect()
    }

    /// The `{content}` string of the retrieval prompt: a JSON object from
    /// index to summary.
    pub fn summary_index_json(&self) -> String {
        serde_json::to_string(&self.summary_index()).expect("string map serializes")
    }

    pub fn validate(&self) -> Result<(), MacmError> {
        for (i, r) in self.records.iter().enumerate() {
            if r.index != format_index(i) {
                return Err(MacmError::Corrupt(format!("record {i} has index {:?}", r.index)));
            }
            if r.content.split_whitespace().count() > CONTENT_CAP
                || r.thinking.split_whitespace().count() > THINKING_CAP
                || r.emotion.split_whitespace().count() > EMOTION_CAP
            {
                return Err(MacmError::Corrupt(format!("record {} exceeds a word cap", r.index)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(t: &str) -> RecordDraft {
        RecordDraft {
            summary: format!("summary {t}"),
            content: enforce_cap("content", t, CONTENT_CAP),
            thinking: enforce_cap("thinking", t, THINKING_CAP),
            emotion: enforce_cap("emotion", t, EMOTION_CAP),
            source: MemorySource::Chunk {
                chunk_index: 0,
                paragraph_start: 0,
                paragraph_end: 2,
            },
        }
    }

    #[test]
    fn dense_indices_and_index_json() {
        let mut s = LongTermStore::new("x");
        s.push(draft("a")).unwrap();
        s.push(draft("b")).unwrap();
        assert_eq!(s.records[1].index, "001");
        assert_eq!(s.get("001").unwrap().content, "b");
        assert!(s.get("002").is_none());
        assert!(s.get("1").is_none());
        assert_eq!(s.summary_index_json(), r#"{"000":"summary a","001":"summary b"}"#);
        s.validate().unwrap();
    }

    #[test]
    fn truncate_and_flag() {
        let long = "w ".repeat(60);
        let c = enforce_cap("thinking", &long, THINKING_CAP);
        assert_eq!(c.text.split_whitespace().count(), 50);
        assert_eq!(c.violation.unwrap().words, 60);
        let mut s = LongTermStore::new("x");
        s.push(draft(&long)).unwrap();
        assert_eq!(s.records[0].violations.len(), 1);
    }

    #[test]
    fn source_wire_format() {
        let v = serde_json::to_value(MemorySource::Rehearsal { item_id: 3, turn: 2 }).unwrap();
        assert_eq!(v["kind"], "rehearsal");
        assert_eq!(v["itemId"], 3);
    }
}

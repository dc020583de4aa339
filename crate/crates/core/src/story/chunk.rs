use serde::{Deserialize, Serialize};

use super::StoryError;
use crate::llm::EmbeddingVector;

/// Separator between paragraphs in a normalized story.
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

/// Paragraphs of `text`: runs of lines separated by blank lines, trimmed.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out.into_iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

/// Rewrites `text` with exactly one blank line between paragraphs.
pub fn normalize_story(text: &str) -> String {
    paragraphs(text).join(PARAGRAPH_SEPARATOR)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoryChunk {
    pub index: usize,
    pub text: String,
    /// First paragraph (inclusive) and last paragraph (exclusive) covered.
    pub paragraph_start: usize,
    pub paragraph_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// Groups paragraphs `granularity` at a time. A remainder of fewer than
/// `granularity` paragraphs forms the final chunk, so a story of `p`
/// paragraphs yields `ceil(p / granularity)` chunks.
pub fn chunk_story(text: &str, granularity: usize) -> Result<Vec<StoryChunk>, StoryError> {
    if granularity == 0 {
        return Err(StoryError::InvalidGranularity);
    }
    let paras = paragraphs(text);
    if paras.is_empty() {
        return Err(StoryError::EmptyStory);
    }
    Ok(paras
        .chunks(granularity)
        .enumerate()
        .map(|(index, group)| StoryChunk {
            index,
            text: group.join(PARAGRAPH_SEPARATOR),
            paragraph_start: index * granularity,
            paragraph_end: index * granularity + group.len(),
            embedding: None,
            summary: None,
        })
        .collect())
}

/// Joins chunk texts back into a story.
pub fn join_chunks<S: AsRef<str>>(texts: &[S]) -> String {
    texts.iter().map(|t| normalize_story(t.as_ref())).filter(|t| !t.is_empty()).collect::<Vec<_>>().join(PARAGRAPH_SEPARATOR)
}

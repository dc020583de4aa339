use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// A prompt with `{name}` placeholders in its system and user texts. `{{` and
/// `}}` render as literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    #[serde(default)]
    pub caption: String,
    /// Declared placeholder names.
    pub placeholders: Vec<String>,
    #[serde(default)]
    pub system: String,
    #[serde(default)]
    pub user: String,
}

/// Output of [`render_template`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: String,
    pub system: String,
    pub user: String,
    /// Bindings that were supplied but not referenced by the template.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unused_bindings: Vec<String>,
    /// The values the prompt was rendered with.
    #[serde(skip)]
    pub bindings: Bindings,
}

pub type Bindings = BTreeMap<String, String>;

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Text(&'a str),
    Brace(char),
    Placeholder { name: &'a str, filter: Option<&'a str> },
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

/// Splits a template text into literal and placeholder segments. Braces that
/// do not enclose a valid placeholder name are kept literally.
fn parse(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Segment::Text(&text[start..i]));
                out.push(Segment::Brace('{'));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Segment::Text(&text[start..i]));
                out.push(Segment::Brace('}'));
                i += 2;
                start = i;
            }
            b'{' => {
                if let Some(len) = text[i + 1..].find('}') {
                    let inner = &text[i + 1..i + 1 + len];
                    let (name, filter) = match inner.split_once('|') {
                        Some((n, f)) => (n, Some(f)),
                        None => (inner, None),
                    };
                    if !name.is_empty() && name.chars().all(is_name_char) {
                        out.push(Segment::Text(&text[start..i]));
                        out.push(Segment::Placeholder { name, filter });
                        i += len + 2;
                        start = i;
                        continue;
                    }
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    out.push(Segment::Text(&text[start..]));
    out.retain(|s| !matches!(s, Segment::Text("")));
    out
}

/// Placeholder names referenced by a text, in order of first use.
pub fn placeholders_in(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    parse(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Placeholder { name, .. } if seen.insert(name) => Some(name.to_string()),
            _ => None,
        })
        .collect()
}

fn apply_filter(value: &str, filter: Option<&str>) -> Result<String, String> {
    let Some(filter) = filter else {
        return Ok(value.to_string());
    };
    if let Some(n) = filter.strip_prefix("words:") {
        let n: usize = n.parse().map_err(|_| format!("bad word count in filter {filter:?}"))?;
        return Ok(value.split_whitespace().take(n).collect::<Vec<_>>().join(" "));
    }
    match filter {
        "first_sentence" => {
            let trimmed = value.trim();
            let end = trimmed
                .char_indices()
                .find(|&(i, c)| {
                    matches!(c, '.' | '!' | '?')
                        && trimmed[i + c.len_utf8()..].chars().next().is_none_or(char::is_whitespace)
                })
                .map(|(i, c)| i + c.len_utf8())
                .unwrap_or(trimmed.len());
            Ok(trimmed[..end].to_string())
        }
        "lower" => Ok(value.to_lowercase()),
        other => Err(format!("unknown filter {other:?}")),
    }
}

fn render_text(template_id: &str, text: &str, values: &Bindings, allow_filters: bool) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(text.len());
    for seg in parse(text) {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Brace(c) => out.push(c),
            Segment::Placeholder { name, filter } => {
                let value = values.get(name).ok_or_else(|| GatewayError::MissingBinding {
                    template: template_id.to_string(),
                    placeholder: name.to_string(),
                })?;
                if filter.is_some() && !allow_filters {
                    return Err(GatewayError::InvalidTemplate {
                        template: template_id.to_string(),
                        reason: format!("filters are not allowed in prompt templates ({{{name}|...}})"),
                    });
                }
                let rendered = apply_filter(value, filter).map_err(|reason| GatewayError::InvalidTemplate {
                    template: template_id.to_string(),
                    reason,
                })?;
                out.push_str(&rendered);
            }
        }
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn new(id: &str, system: &str, user: &str) -> Self {
        let mut placeholders = placeholders_in(system);
        for p in placeholders_in(user) {
            if !placeholders.contains(&p) {
                placeholders.push(p);
            }
        }
        Self {
            id: id.to_string(),
            caption: String::new(),
            placeholders,
            system: system.to_string(),
            user: user.to_string(),
        }
    }

    /// Placeholders are unique in the manifest and every used placeholder is
    /// declared.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut seen = BTreeSet::new();
        for p in &self.placeholders {
            if !seen.insert(p.as_str()) {
                return Err(GatewayError::InvalidTemplate {
                    template: self.id.clone(),
                    reason: format!("placeholder {p:?} declared twice"),
                });
            }
        }
        for text in [&self.system, &self.user] {
            for seg in parse(text) {
                if let Segment::Placeholder { name, filter } = seg {
                    if filter.is_some() {
                        return Err(GatewayError::InvalidTemplate {
                            template: self.id.clone(),
                            reason: format!("placeholder {name:?} uses a filter"),
                        });
                    }
                    if !seen.contains(name) {
                        return Err(GatewayError::InvalidTemplate {
                            template: self.id.clone(),
                            reason: format!("placeholder {name:?} is not declared"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Substitutes every placeholder of `t`. Substituted values are not scanned
/// again, so a value containing `{x}` is inserted literally.
pub fn render_template(t: &PromptTemplate, values: &Bindings) -> Result<RenderedPrompt, GatewayError> {
    t.validate()?;
    let system = render_text(&t.id, &t.system, values, false)?;
    let user = render_text(&t.id, &t.user, values, false)?;
    let unused_bindings: Vec<String> = values
        .keys()
        .filter(|k| !t.placeholders.contains(k))
        .cloned()
        .collect();
    if !unused_bindings.is_empty() {
        tracing::warn!(template = %t.id, unused = ?unused_bindings, "bindings not used by template");
    }
    Ok(RenderedPrompt {
        template_id: t.id.clone(),
        system,
        user,
        unused_bindings,
        bindings: values.clone(),
    })
}

/// Renders a mock fixture body. Fixtures may use `{name|words:N}`,
/// `{name|first_sentence}` and `{name|lower}`.
pub fn render_fixture(fixture_id: &str, body: &str, values: &Bindings) -> Result<String, GatewayError> {
    render_text(fixture_id, body, values, true)
}

/// Ids of the bundled templates.
pub mod ids {
    pub const BIOGRAPHY: &str = "biography_generation";
    pub const LIFE_STORY: &str = "life_story_generation";
    pub const NAIVE_SIMULACRA: &str = "naive_simulacra";
    pub const RAG_SIMULACRA: &str = "rag_simulacra";
    pub const MEMORY_AGENT: &str = "memory_agent";
    pub const MEMORY_CONTENT: &str = "memory_content_construction";
    pub const THINKING_MEMORY: &str = "thinking_memory_construction";
    pub const LOGICAL_ANALYSIS: &str = "logical_analysis";
    pub const EMOTION_MEMORY: &str = "emotional_memory_construction";
    pub const EMOTIONAL_ANALYSIS: &str = "emotional_analysis";
    pub const COLLABORATIVE_COGNITION: &str = "collaborative_cognition";
    pub const BANDWAGON: &str = "bandwagon_replication";
    pub const BANDWAGON_CONTROL: &str = "controlled_bandwagon_replication";
    pub const SUMMARY: &str = "summary";
    pub const PROFILE_RANKING: &str = "profile_ranking";
    pub const REFLECTION: &str = "reflection";
}

const BUNDLED: &[&str] = &[
    include_str!("../../data/templates/biography_generation.toml"),
    include_str!("../../data/templates/life_story_generation.toml"),
    include_str!("../../data/templates/naive_simulacra.toml"),
    include_str!("../../data/templates/rag_simulacra.toml"),
    include_str!("../../data/templates/memory_agent.toml"),
    include_str!("../../data/templates/memory_content_construction.toml"),
    include_str!("../../data/templates/thinking_memory_construction.toml"),
    include_str!("../../data/templates/logical_analysis.toml"),
    include_str!("../../data/templates/emotional_memory_construction.toml"),
    include_str!("../../data/templates/emotional_analysis.toml"),
    include_str!("../../data/templates/collaborative_cognition.toml"),
    include_str!("../../data/templates/bandwagon_replication.toml"),
    include_str!("../../data/templates/controlled_bandwagon_replication.toml"),
    include_str!("../../data/templates/summary.toml"),
    include_str!("../../data/templates/profile_ranking.toml"),
    include_str!("../../data/templates/reflection.toml"),
];

/// Templates by id.
#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateLibrary {
    pub fn bundled() -> Self {
        let mut lib = Self::default();
        for raw in BUNDLED {
            let t: PromptTemplate = toml::from_str(raw).expect("bundled template parses");
            lib.insert(t).expect("bundled template is valid");
        }
        lib
    }

    /// Loads every `*.toml` in `dir` on top of the bundled set.
    pub fn with_overrides(dir: &Path) -> Result<Self, GatewayError> {
        let mut lib = Self::bundled();
        let entries = fs::read_dir(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let raw = fs::read_to_string(&path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
            let t: PromptTemplate =
                toml::from_str(&raw).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
            lib.insert(t)?;
        }
        Ok(lib)
    }

    pub fn insert(&mut self, t: PromptTemplate) -> Result<(), GatewayError> {
        t.validate()?;
        self.templates.insert(t.id.clone(), t);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(id)
            .ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, id: &str, values: &Bindings) -> Result<RenderedPrompt, GatewayError> {
        render_template(self.get(id)?, values)
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::embed::{hashed_bag_of_words, EmbeddingVector, MOCK_EMBEDDING_DIM};
use super::template::render_fixture;
use super::{CompletionRequest, GatewayError, ProviderKind, Provider};

const BUNDLED_FIXTURES: &str = include_str!("../../data/fixtures/default.toml");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateFixtures {
    #[serde(default)]
    pub default: Vec<String>,
    #[serde(default)]
    pub scenarios: BTreeMap<String, Vec<String>>,
}

/// Fixture bodies per template id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureSet(pub BTreeMap<String, TemplateFixtures>);

impl FixtureSet {
    pub fn bundled() -> Self {
        toml::from_str(BUNDLED_FIXTURES).expect("bundled fixtures parse")
    }

    pub fn parse(raw: &str) -> Result<Self, GatewayError> {
        toml::from_str(raw).map_err(|e| GatewayError::Io(format!("fixtures: {e}")))
    }

    /// Merges every `*.toml` file in `dir`; later files override earlier
    /// variants for the same key.
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut set = Self::default();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let raw = fs::read_to_string(&p).map_err(|e| GatewayError::Io(format!("{}: {e}", p.display())))?;
            set.merge(Self::parse(&raw)?);
        }
        Ok(set)
    }

    pub fn merge(&mut self, other: FixtureSet) {
        for (id, f) in other.0 {
            let entry = self.0.entry(id).or_default();
            if !f.default.is_empty() {
                entry.default = f.default;
            }
            entry.scenarios.extend(f.scenarios);
        }
    }

    /// Exact scenario, then the template default, then an error.
    pub fn resolve(&self, template: &str, scenario: Option<&str>) -> Result<&[String], GatewayError> {
        let missing = || GatewayError::FixtureMissing {
            template: template.to_string(),
            scenario: scenario.map(str::to_string),
        };
        let f = self.0.get(template).ok_or_else(missing)?;
        if let Some(v) = scenario.and_then(|s| f.scenarios.get(s)).filter(|v| !v.is_empty()) {
            return Ok(v);
        }
        if !f.default.is_empty() {
            return Ok(&f.default);
        }
        Err(missing())
    }
}

/// Offline provider. Completions are fixture bodies rendered against the
/// request bindings; embeddings are hashed bags of words.
#[derive(Debug)]
pub struct MockProvider {
    fixtures: FixtureSet,
    dim: usize,
    record: bool,
    calls: Mutex<Vec<CompletionRequest>>,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    /// A mock with no fixtures.
    pub fn new() -> Self {
        Self::with_fixtures(FixtureSet::default())
    }

    pub fn bundled() -> Self {
        Self::with_fixtures(FixtureSet::bundled())
    }

    pub fn with_fixtures(fixtures: FixtureSet) -> Self {
        Self {
            fixtures,
            dim: MOCK_EMBEDDING_DIM,
            record: false,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Adds variants for `template` under `scenario` (or as the default).
    pub fn with_fixture<S: Into<String>>(
        mut self,
        template: &str,
        scenario: Option<&str>,
        bodies: impl IntoIterator<Item = S>,
    ) -> Self {
        let bodies: Vec<String> = bodies.into_iter().map(Into::into).collect();
        let entry = self.fixtures.0.entry(template.to_string()).or_default();
        match scenario {
            Some(s) => {
                entry.scenarios.insert(s.to_string(), bodies);
            }
            None => entry.default = bodies,
        }
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Keeps a log of every request, readable through [`MockProvider::calls`].
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn fixtures(&self) -> &FixtureSet {
        &self.fixtures
    }

    pub fn calls(&self) -> Vec<CompletionRequest> {
        self.calls.lock().unwrap().clone()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().unwrap().clear();
    }
}

impl Provider for MockProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Mock
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        if self.record {
            self.calls.lock().unwrap().push(request.clone());
        }
        let variants = self.fixtures.resolve(&request.template_id, request.scenario.as_deref())?;
        let body = &variants[(request.seed % variants.len() as u64) as usize];
        let fixture_id = format!("fixture:{}", request.template_id);
        render_fixture(&fixture_id, body, &request.bindings)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        hashed_bag_of_words(text, self.dim)
    }
}

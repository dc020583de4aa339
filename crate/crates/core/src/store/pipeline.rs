use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{read_json, validate_id, write_json, ArtifactKind, ProjectStore, StoreError};
use crate::character::CharacterProfile;
use crate::llm::Gateway;
use crate::story::{Biography, Forge, ForgeConfig, ForgeProgress, LifeStory, ReviewGate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    ForgeProfile,
    ForgeStory,
    BuildMemory,
    SelfReport,
    ObserverExport,
    Conformity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Running,
    Parked,
    Completed,
    Failed,
}

/// One entry of the run ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub id: String,
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character: Option<String>,
    pub seed: u64,
    pub state: RunState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Review task the run is waiting on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_review: Option<String>,
    #[serde(default)]
    pub iterations_done: usize,
    pub started_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl RunRecord {
    pub fn start(id: &str, kind: RunKind, character: Option<String>, seed: u64) -> Self {
        let now = Utc::now();
        Self {
            id: id.to_string(),
            kind,
            character,
            seed,
            state: RunState::Running,
            detail: None,
            pending_review: None,
            iterations_done: 0,
            started_at: now,
            updated_at: now,
        }
    }

    pub fn finish(&mut self, state: RunState, detail: Option<String>) {
        self.state = state;
        self.detail = detail;
        self.updated_at = Utc::now();
    }
}

impl ProjectStore {
    pub fn save_run(&self, run: &RunRecord) -> Result<(), StoreError> {
        validate_id(&run.id)?;
        write_json(&self.root.join("runs").join(format!("{}.json", run.id)), run)
    }

    pub fn load_run(&self, id: &str) -> Result<RunRecord, StoreError> {
        validate_id(id)?;
        read_json(&self.root.join("runs").join(format!("{id}.json")))?.ok_or_else(|| StoreError::UnknownId(id.to_string()))
    }

    pub fn list_runs(&self) -> Result<Vec<RunRecord>, StoreError> {
        let dir = self.root.join("runs");
        let mut out = Vec::new();
        for e in std::fs::read_dir(&dir)
            .map_err(|source| StoreError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok())
        {
            if e.path().extension().is_some_and(|x| x == "json") {
                if let Some(r) = read_json::<RunRecord>(&e.path())? {
                    out.push(r);
                }
            }
        }
        out.sort_by(|a, b| a.started_at.cmp(&b.started_at).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    /// A run id unique within the ledger.
    pub fn new_run_id(&self, kind: RunKind) -> String {
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3f");
        let kind = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let base = format!("{kind}-{stamp}").replace('.', "-");
        let mut id = base.clone();
        let mut n = 1;
        while self.load_run(&id).is_ok() {
            n += 1;
            id = format!("{base}-{n}");
        }
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForgeRunOutcome {
    Complete(LifeStory),
    Parked { task_id: String, iterations_done: usize },
}

/// Forges (or continues forging) a character's story under its run lock.
/// The biography and each finished iteration are persisted as they happen,
/// so a crashed or parked run resumes from the journal without redoing or
/// duplicating iterations.
#[allow(clippy::too_many_arguments)]
pub fn run_forge(
    store: &ProjectStore,
    gateway: &Gateway,
    profile: &CharacterProfile,
    config: &ForgeConfig,
    seed: u64,
    gate: &mut dyn ReviewGate,
    scenario: Option<String>,
    run_id: &str,
) -> Result<ForgeRunOutcome, StoreError> {
    let slug = profile.slug();
    let _lock = store.lock_character(&slug, run_id)?;
    if store.load_artifact::<CharacterProfile>(&slug, ArtifactKind::Profile)?.is_none() {
        store.save_artifact(&slug, ArtifactKind::Profile, seed, profile)?;
    }
    let mut forge = Forge::new(gateway, config.clone())?.with_scenario(scenario);
    let biography = match store.load_artifact::<Biography>(&slug, ArtifactKind::Biography)? {
        Some(a) if a.seed == seed => a.data,
        Some(a) => {
            return Err(StoreError::Invalid(format!(
                "stored biography was made with seed {}, not {seed}",
                a.seed
            )))
        }
        None => {
            let b = forge.generate_biography(profile, seed)?;
            store.save_artifact(&slug, ArtifactKind::Biography, seed, &b)?;
            b
        }
    };
    let done = store.load_journal(&slug)?;
    if done.len() > config.iterations {
        return Err(StoreError::Invalid(format!(
            "journal already holds {} iterations, more than the {} requested",
            done.len(),
            config.iterations
        )));
    }
    let progress = forge.resume(profile, biography, done, gate, seed, &mut |r| {
        store
            .append_journal(&slug, r)
            .map_err(|e| crate::story::StoryError::Replay(format!("could not journal iteration {}: {e}", r.iteration)))
    })?;
    match progress {
        ForgeProgress::Complete(story) => {
            store.save_artifact(&slug, ArtifactKind::Story, seed, &story)?;
            Ok(ForgeRunOutcome::Complete(story))
        }
        ForgeProgress::Parked { story, request } => Ok(ForgeRunOutcome::Parked {
            task_id: request.task_id(),
            iterations_done: story.iterations.len(),
        }),
    }
}

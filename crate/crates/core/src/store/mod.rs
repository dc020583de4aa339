//! Plain-file project store: per-character artifacts, the append-only
//! iteration journal, review and judging queues, and the run ledger.
//!
//! ```text
//! <root>/characters/<slug>/{profile,biography,story,memory,...}.json
//! <root>/characters/<slug>/journal.jsonl
//! <root>/reviews/<task-id>.json
//! <root>/judging/{assignment.json,cases/<case-id>.json,submissions.jsonl}
//! <root>/reports/observer.json
//! <root>/runs/<run-id>.json
//! ```

mod judging;
mod lock;
mod pipeline;
mod reviews;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use judging::{JudgingTask, JudgmentOutcome, ObserverReportFile, SlotState};
pub use lock::RunLock;
pub use pipeline::{run_forge, ForgeRunOutcome, RunKind, RunRecord, RunState};
pub use reviews::{QueueGate, ReviewTask, TaskState};

use crate::character::CharacterError;
use crate::conformity::ConformityError;
use crate::eval::EvalError;
use crate::macm::MacmError;
use crate::story::{IterationRecord, StoryError};

/// Recorded on every artifact.
pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("task {0} is already decided")]
    AlreadyDecided(String),
    #[error("task {id} is claimed by {holder}")]
    ClaimConflict { id: String, holder: String },
    #[error("character {character} is locked by run {holder}")]
    Locked { character: String, holder: String },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Story(#[from] StoryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Macm(#[from] MacmError),
    #[error(transparent)]
    Conformity(#[from] ConformityError),
    #[error(transparent)]
    Character(#[from] CharacterError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A stored value with the version and seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Artifact<T> {
    pub pipeline_version: String,
    pub seed: u64,
    pub data: T,
}

impl<T> Artifact<T> {
    pub fn new(seed: u64, data: T) -> Self {
        Self {
            pipeline_version: PIPELINE_VERSION.to_string(),
            seed,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Profile,
    Biography,
    Story,
    Memory,
    Questionnaire,
    SelfReport,
    Conformity,
}

impl ArtifactKind {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Profile => "profile.json",
            Self::Biography => "biography.json",
            Self::Story => "story.json",
            Self::Memory => "memory.json",
            Self::Questionnaire => "questionnaire.json",
            Self::SelfReport => "self-report.json",
            Self::Conformity => "conformity.json",
        }
    }
}

/// Ids end up in file names, so only a safe alphabet is accepted.
pub fn validate_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 200
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::Invalid(format!("malformed id {id:?}")))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes through a temporary sibling and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| StoreError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, StoreError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Appends one JSON line, first terminating a torn line left by a crash.
fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let needs_newline = fs::read(path).map(|b| b.last().is_some_and(|c| *c != b'\n')).unwrap_or(false);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut line = if needs_newline { b"\n".to_vec() } else { Vec::new() };
    line.extend(serde_json::to_vec(value).map_err(|e| StoreError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?);
    line.push(b'\n');
    f.write_all(&line).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

/// Reads JSON lines, skipping ones a crash left unreadable.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let raw = match fs::read_to_string(path) {
        Ok(r) => r,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (n, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) => tracing::warn!(path = %path.display(), line = n + 1, error = %e, "skipping unreadable journal line"),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
    /// Serializes queue read-modify-write cycles within the process.
    queue: Arc<Mutex<()>>,
}

impl ProjectStore {
    /// Opens (creating if needed) a project rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["characters", "reviews", "judging/cases", "reports", "runs"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(Self {
            root,
            queue: Arc::new(Mutex::new(())),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn queue_guard(&self) -> MutexGuard<'_, ()> {
        self.queue.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn character_dir(&self, character: &str) -> Result<PathBuf, StoreError> {
        validate_id(character)?;
        Ok(self.root.join("characters").join(character))
    }

    pub fn characters(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("characters");
        let mut out: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn save_artifact<T: Serialize>(
        &self,
        character: &str,
        kind: ArtifactKind,
        seed: u64,
        data: &T,
    ) -> Result<(), StoreError> {
        let path = self.character_dir(character)?.join(kind.file_name());
        let artifact = Artifact {
            pipeline_version: PIPELINE_VERSION.to_string(),
            seed,
            data,
        };
        write_json(&path, &artifact)
    }

    pub fn load_artifact<T: DeserializeOwned>(
        &self,
        character: &str,
        kind: ArtifactKind,
    ) -> Result<Option<Artifact<T>>, StoreError> {
        read_json(&self.character_dir(character)?.join(kind.file_name()))
    }

    /// Like [`load_artifact`](Self::load_artifact) but missing is an error.
    pub fn require_artifact<T: DeserializeOwned>(&self, character: &str, kind: ArtifactKind) -> Result<Artifact<T>, StoreError> {
        self.load_artifact(character, kind)?
            .ok_or_else(|| StoreError::UnknownId(format!("{character}/{}", kind.file_name())))
    }

    fn journal_path(&self, character: &str) -> Result<PathBuf, StoreError> {
        Ok(self.character_dir(character)?.join("journal.jsonl"))
    }

    pub fn append_journal(&self, character: &str, record: &IterationRecord) -> Result<(), StoreError> {
        append_line(&self.journal_path(character)?, record)
    }

    /// Journal records in order. A record written twice (a crash between
    /// append and acknowledgement) is kept once; any other gap or
    /// disagreement is corruption.
    pub fn load_journal(&self, character: &str) -> Result<Vec<IterationRecord>, StoreError> {
        let path = self.journal_path(character)?;
        let lines: Vec<IterationRecord> = read_lines(&path)?;
        let mut out: Vec<IterationRecord> = Vec::with_capacity(lines.len());
        for r in lines {
            match r.iteration.cmp(&(out.len() + 1)) {
                std::cmp::Ordering::Equal => out.push(r),
                std::cmp::Ordering::Less if out[r.iteration - 1] == r => {}
                _ => {
                    return Err(StoreError::Parse {
                        path: path.display().to_string(),
                        reason: format!("journal entry for iteration {} after {}", r.iteration, out.len()),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn lock_character(&self, character: &str, run_id: &str) -> Result<RunLock, StoreError> {
        RunLock::acquire(&self.character_dir(character)?.join("run.lock"), character, run_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_filename_safe() {
        validate_id("ada-lovelace-it001-c002-a0").unwrap();
        for bad in ["", "../x", "a/b", ".hidden", "a b"] {
            assert!(validate_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn atomic_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/y.json");
        write_json(&p, &vec![1.5f64, 0.1 + 0.2]).unwrap();
        let back: Vec<f64> = read_json(&p).unwrap().unwrap();
        assert_eq!(back, vec![1.5, 0.1 + 0.2]);
        assert!(read_json::<Vec<f64>>(&dir.path().join("none.json")).unwrap().is_none());
        let leftovers = fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn torn_lines_are_skipped_and_terminated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        append_line(&p, &1u32).unwrap();
        fs::OpenOptions::new().append(true).open(&p).unwrap().write_all(b"{\"trunc").unwrap();
        append_line(&p, &2u32).unwrap();
        assert_eq!(read_lines::<u32>(&p).unwrap(), vec![1, 2]);
    }
}

use std::path::PathBuf;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{read_json, validate_id, write_json, ProjectStore, StoreError};
use crate::story::{GateOutcome, ReviewDecision, ReviewGate, ReviewKind, ReviewRequest, StoryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Pending,
    Decided,
}

impl std::str::FromStr for TaskState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Self::Pending),
            "decided" => Ok(Self::Decided),
            other => Err(format!("unknown task state {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewTask {
    pub id: String,
    pub kind: ReviewKind,
    pub state: TaskState,
    pub request: ReviewRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ReviewDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_by: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl ProjectStore {
    fn review_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        validate_id(id)?;
        Ok(self.root.join("reviews").join(format!("{id}.json")))
    }

    fn read_review(&self, id: &str) -> Result<ReviewTask, StoreError> {
        read_json(&self.review_path(id)?)?.ok_or_else(|| StoreError::UnknownId(id.to_string()))
    }

    /// Queues a request; re-enqueueing an existing id returns it untouched so
    /// the candidate a reviewer may already be reading never changes.
    pub fn enqueue_review(&self, request: &ReviewRequest) -> Result<String, StoreError> {
        let _g = self.queue_guard();
        let id = request.task_id();
        let path = self.review_path(&id)?;
        if read_json::<ReviewTask>(&path)?.is_none() {
            let task = ReviewTask {
                id: id.clone(),
                kind: request.kind,
                state: TaskState::Pending,
                request: request.clone(),
                decision: None,
                claimed_by: None,
                created_at: Utc::now(),
            };
            write_json(&path, &task)?;
        }
        Ok(id)
    }

    pub fn review_task(&self, id: &str) -> Result<ReviewTask, StoreError> {
        self.read_review(id)
    }

    /// Tasks sorted by id, optionally only those in `state`.
    pub fn list_reviews(&self, state: Option<TaskState>) -> Result<Vec<ReviewTask>, StoreError> {
        let dir = self.root.join("reviews");
        let mut out = Vec::new();
        let entries = std::fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for e in entries.filter_map(|e| e.ok()) {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "json") {
                if let Some(t) = read_json::<ReviewTask>(&p)? {
                    if state.is_none_or(|s| s == t.state) {
                        out.push(t);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Gives one reviewer exclusive rights to decide a pending task.
    pub fn claim_review(&self, id: &str, reviewer: &str) -> Result<ReviewTask, StoreError> {
        if reviewer.trim().is_empty() {
            return Err(StoreError::Invalid("reviewer id is empty".into()));
        }
        let _g = self.queue_guard();
        let mut task = self.read_review(id)?;
        if task.state == TaskState::Decided {
            return Err(StoreError::AlreadyDecided(id.to_string()));
        }
        match &task.claimed_by {
            Some(holder) if holder != reviewer => {
                return Err(StoreError::ClaimConflict {
                    id: id.to_string(),
                    holder: holder.clone(),
                })
            }
            Some(_) => return Ok(task),
            None => task.claimed_by = Some(reviewer.to_string()),
        }
        write_json(&self.review_path(id)?, &task)?;
        Ok(task)
    }

    /// The only transition: pending to decided, once.
    pub fn submit_review(&self, id: &str, decision: ReviewDecision) -> Result<ReviewTask, StoreError> {
        decision.validate()?;
        let _g = self.queue_guard();
        let mut task = self.read_review(id)?;
        if task.state == TaskState::Decided {
            return Err(StoreError::AlreadyDecided(id.to_string()));
        }
        if let Some(holder) = task.claimed_by.as_ref().filter(|h| **h != decision.reviewer) {
            return Err(StoreError::ClaimConflict {
                id: id.to_string(),
                holder: holder.clone(),
            });
        }
        let decision = match decision.timestamp {
            Some(_) => decision,
            None => decision.stamped(Utc::now()),
        };
        task.decision = Some(decision);
        task.state = TaskState::Decided;
        write_json(&self.review_path(id)?, &task)?;
        Ok(task)
    }
}

/// Review gate backed by the store's queue. Without a wait it parks the
/// pipeline on the first undecided task; with one it polls until decided.
#[derive(Debug, Clone)]
pub struct QueueGate {
    store: ProjectStore,
    /// Age after which a pending task fails the run.
    timeout: Option<Duration>,
    wait: Option<(Duration, Duration)>,
}

impl QueueGate {
    pub fn parking(store: ProjectStore, timeout: Option<Duration>) -> Self {
        Self {
            store,
            timeout,
            wait: None,
        }
    }

    /// Blocks up to `max_wait`, checking every `poll`.
    pub fn blocking(store: ProjectStore, max_wait: Duration, poll: Duration) -> Self {
        Self {
            store,
            timeout: Some(max_wait),
            wait: Some((max_wait, poll)),
        }
    }

    fn to_story(e: StoreError) -> StoryError {
        match e {
            StoreError::Story(s) => s,
            other => StoryError::InvalidDecision(other.to_string()),
        }
    }

    fn expired(&self, task: &ReviewTask) -> bool {
        let Some(t) = self.timeout else { return false };
        let age = Utc::now().signed_duration_since(task.created_at);
        age.to_std().is_ok_and(|a| a > t)
    }
}

impl ReviewGate for QueueGate {
    fn review(&mut self, request: &ReviewRequest) -> Result<GateOutcome, StoryError> {
        let id = self.store.enqueue_review(request).map_err(Self::to_story)?;
        let started = Instant::now();
        loop {
            let task = self.store.review_task(&id).map_err(Self::to_story)?;
            if let Some(d) = task.decision {
                return Ok(GateOutcome::Decided(d));
            }
            if self.expired(&task) {
                return Err(StoryError::ReviewTimeout(id));
            }
            match self.wait {
                None => return Ok(GateOutcome::Parked),
                Some((max, _)) if started.elapsed() >= max => return Err(StoryError::ReviewTimeout(id)),
                Some((_, poll)) => std::thread::sleep(poll),
            }
        }
    }

    fn prior_candidate(&self, task_id: &str) -> Option<String> {
        self.store.review_task(task_id).ok().map(|t| t.request.candidate)
    }
}

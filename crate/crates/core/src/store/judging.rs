use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{append_line, read_json, validate_id, write_json, ArtifactKind, ProjectStore, StoreError};
use crate::eval::{
    aggregate_observer, AggregationConfig, EvalError, JudgeAssignment, JudgingKind, ObserverCase, ObserverReport,
    Submission, TaskPayload, TaskSlot,
};
use crate::story::{Biography, LifeStory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotState {
    /// Waiting on another task (e.g. descriptions before they can be scored).
    Blocked,
    Pending,
    Submitted,
}

/// A judging task as served to judges. Carries no method label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgingTask {
    pub id: String,
    pub case_id: String,
    pub kind: JudgingKind,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub state: SlotState,
    pub payload: TaskPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObserverReportFile {
    pub report: ObserverReport,
    pub complete_cases: usize,
    pub pending_cases: usize,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgmentOutcome {
    pub task_id: String,
    pub case_complete: bool,
    /// Recomputed when this submission completed its case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ObserverReportFile>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SubmissionLog<'a> {
    task_id: &'a str,
    judge: &'a str,
    submission: &'a Submission,
    at: DateTime<Utc>,
}

impl ProjectStore {
    fn case_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        validate_id(id)?;
        Ok(self.root.join("judging/cases").join(format!("{id}.json")))
    }

    pub fn judging_assignment(&self) -> Result<JudgeAssignment, StoreError> {
        Ok(read_json(&self.root.join("judging/assignment.json"))?.unwrap_or_default())
    }

    pub fn set_judging_assignment(&self, a: &JudgeAssignment) -> Result<(), StoreError> {
        a.validate()?;
        write_json(&self.root.join("judging/assignment.json"), a)
    }

    /// Adds cases; an id already present is left alone.
    pub fn add_cases(&self, cases: &[ObserverCase]) -> Result<usize, StoreError> {
        let _g = self.queue_guard();
        let mut added = 0;
        for c in cases {
            let p = self.case_path(&c.id)?;
            if read_json::<ObserverCase>(&p)?.is_none() {
                write_json(&p, c)?;
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn cases(&self) -> Result<Vec<ObserverCase>, StoreError> {
        let dir = self.root.join("judging/cases");
        let mut out = Vec::new();
        for e in std::fs::read_dir(&dir)
            .map_err(|source| StoreError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok())
        {
            if e.path().extension().is_some_and(|x| x == "json") {
                if let Some(c) = read_json::<ObserverCase>(&e.path())? {
                    out.push(c);
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// What judges read about the target character: the story, else the
    /// biography.
    fn target_text(&self, character: &str) -> Result<Option<String>, StoreError> {
        if let Some(s) = self.load_artifact::<LifeStory>(character, ArtifactKind::Story)? {
            return Ok(Some(format!("{}\n\n{}", s.data.biography.text, s.data.text)));
        }
        Ok(self
            .load_artifact::<Biography>(character, ArtifactKind::Biography)?
            .map(|b| b.data.text))
    }

    fn task_view(&self, case: &ObserverCase, slot: &TaskSlot, a: &JudgeAssignment) -> Result<JudgingTask, StoreError> {
        let state = if case.is_submitted(slot) {
            SlotState::Submitted
        } else if case.ready_slots(a).contains(slot) {
            SlotState::Pending
        } else {
            SlotState::Blocked
        };
        let target = match slot.kind {
            JudgingKind::DescriptionScoring | JudgingKind::ReactionDescribing => self.target_text(&case.character)?,
            _ => None,
        };
        Ok(JudgingTask {
            id: slot.task_id(),
            case_id: case.id.clone(),
            kind: slot.kind,
            judge: slot.judge.clone(),
            subject: slot.subject.clone(),
            state,
            payload: case.payload(slot, target.as_deref()),
        })
    }

    /// Tasks, optionally for one judge and one state.
    pub fn judging_tasks(&self, judge: Option<&str>, state: Option<SlotState>) -> Result<Vec<JudgingTask>, StoreError> {
        let a = self.judging_assignment()?;
        let mut out = Vec::new();
        for case in self.cases()? {
            for slot in case.all_slots(&a) {
                if judge.is_some_and(|j| j != slot.judge) {
                    continue;
                }
                let t = self.task_view(&case, &slot, &a)?;
                if state.is_none_or(|s| s == t.state) {
                    out.push(t);
                }
            }
        }
        Ok(out)
    }

    pub fn judging_task(&self, task_id: &str) -> Result<JudgingTask, StoreError> {
        let a = self.judging_assignment()?;
        let (case, slot) = self.find_slot(task_id, &a)?;
        self.task_view(&case, &slot, &a)
    }

    fn find_slot(&self, task_id: &str, a: &JudgeAssignment) -> Result<(ObserverCase, TaskSlot), StoreError> {
        validate_id(task_id)?;
        for case in self.cases()? {
            if !task_id.starts_with(&case.id) {
                continue;
            }
            if let Some(slot) = case.all_slots(a).into_iter().find(|s| s.task_id() == task_id) {
                return Ok((case, slot));
            }
        }
        Err(StoreError::UnknownId(task_id.to_string()))
    }

    /// Records a judgment. When it completes its case, the observer report is
    /// recomputed over every complete case.
    pub fn submit_judgment(&self, task_id: &str, judge: &str, submission: &Submission) -> Result<JudgmentOutcome, StoreError> {
        let _g = self.queue_guard();
        let a = self.judging_assignment()?;
        let (mut case, slot) = self.find_slot(task_id, &a)?;
        if slot.judge != judge {
            return Err(StoreError::ClaimConflict {
                id: task_id.to_string(),
                holder: slot.judge.clone(),
            });
        }
        if case.is_submitted(&slot) {
            return Err(StoreError::AlreadyDecided(task_id.to_string()));
        }
        case.apply(&slot, &a, submission)?;
        write_json(&self.case_path(&case.id)?, &case)?;
        append_line(
            &self.root.join("judging/submissions.jsonl"),
            &SubmissionLog {
                task_id,
                judge,
                submission,
                at: Utc::now(),
            },
        )?;
        let case_complete = case.is_complete(&a);
        let report = if case_complete {
            Some(self.recompute_observer_report(&a)?)
        } else {
            None
        };
        Ok(JudgmentOutcome {
            task_id: task_id.to_string(),
            case_complete,
            report,
        })
    }

    fn recompute_observer_report(&self, a: &JudgeAssignment) -> Result<ObserverReportFile, StoreError> {
        let cases = self.cases()?;
        let (done, open): (Vec<ObserverCase>, Vec<ObserverCase>) = cases.into_iter().partition(|c| c.is_complete(a));
        let config: AggregationConfig = read_json(&self.root.join("judging/aggregation.json"))?.unwrap_or_default();
        let report = aggregate_observer(&done, a, &config)?;
        let file = ObserverReportFile {
            report,
            complete_cases: done.len(),
            pending_cases: open.len(),
            updated_at: Utc::now(),
        };
        write_json(&self.root.join("reports/observer.json"), &file)?;
        Ok(file)
    }

    pub fn observer_report(&self) -> Result<Option<ObserverReportFile>, StoreError> {
        read_json(&self.root.join("reports/observer.json"))
    }

    pub fn set_aggregation_config(&self, c: &AggregationConfig) -> Result<(), StoreError> {
        write_json(&self.root.join("judging/aggregation.json"), c)
    }
}

impl From<StoreError> for EvalError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Eval(inner) => inner,
            other => EvalError::Io(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Grade, MatchVerdict};
    use crate::simulacrum::Method;

    fn submission(kind: JudgingKind) -> Submission {
        match kind {
            JudgingKind::PersonalityDescribing => Submission::PersonalityDescribing {
                descriptions: (0..5).map(|i| format!("trait {i}")).collect(),
            },
            JudgingKind::DescriptionScoring => Submission::DescriptionScoring {
                verdicts: vec![MatchVerdict::Partial; 5],
            },
            JudgingKind::ReactionDescribing => Submission::ReactionDescribing {
                reaction: "I would feel it deeply. ".repeat(25),
            },
            JudgingKind::SimilarityScoring => Submission::SimilarityScoring { grade: Grade::B },
        }
    }

    #[test]
    fn queue_flow_and_trigger() {
        let dir = tempfile::tempdir().unwrap();
        let s = ProjectStore::open(dir.path()).unwrap();
        let case = ObserverCase::new("ada", Method::Macm, "sjt-01", "A scenario.", "A response.", 0);
        assert_eq!(s.add_cases(std::slice::from_ref(&case)).unwrap(), 1);
        assert_eq!(s.add_cases(std::slice::from_ref(&case)).unwrap(), 0);
        let pending = s.judging_tasks(None, Some(SlotState::Pending)).unwrap();
        assert_eq!(pending.len(), 4);
        let blocked = s.judging_tasks(None, Some(SlotState::Blocked)).unwrap();
        assert_eq!(blocked.len(), 8);
        let bad = Submission::PersonalityDescribing {
            descriptions: vec!["x".into(); 4],
        };
        let t = &pending[0];
        assert!(matches!(
            s.submit_judgment(&t.id, &t.judge, &bad),
            Err(StoreError::Eval(EvalError::ShapeMismatch(_)))
        ));
        assert!(matches!(
            s.submit_judgment(&t.id, "judge-9", &submission(t.kind)),
            Err(StoreError::ClaimConflict { .. })
        ));
        let mut last = None;
        loop {
            let open = s.judging_tasks(None, Some(SlotState::Pending)).unwrap();
            let Some(t) = open.first() else { break };
            last = Some(s.submit_judgment(&t.id, &t.judge, &submission(t.kind)).unwrap());
        }
        let last = last.unwrap();
        assert!(last.case_complete);
        let report = last.report.unwrap();
        assert_eq!(report.complete_cases, 1);
        let m = report.report.method(Method::Macm).unwrap();
        assert_eq!(m.dms.average, 5.0);
        assert_eq!(m.rss.average, 1.5);
        assert_eq!(s.observer_report().unwrap().unwrap().report, report.report);
        assert!(matches!(
            s.submit_judgment(&pending[0].id, &pending[0].judge, &submission(pending[0].kind)),
            Err(StoreError::AlreadyDecided(_))
        ));
        assert!(matches!(s.judging_task("case-nope-pd-judge-1"), Err(StoreError::UnknownId(_))));
        for t in s.judging_tasks(None, None).unwrap() {
            let wire = serde_json::to_string(&t).unwrap();
            assert!(!wire.to_lowercase().contains("macm"));
        }
    }
}

use std::fs::OpenOptions;
use std::io::Write;

use simulacra_core::character::{sample_profile, AttributePools, CharacterProfile, TraitPool};
use simulacra_core::llm::Gateway;
use simulacra_core::store::{run_forge, ForgeRunOutcome, ProjectStore, QueueGate, StoreError, TaskState};
use simulacra_core::story::{
    forge_story, AutoApprove, ForgeConfig, GateOutcome, ReviewDecision, ReviewGate, ReviewRequest, StoryError,
};

const SEED: u64 = 21;

fn profile() -> CharacterProfile {
    sample_profile(&AttributePools::bundled(), &TraitPool::bundled(), SEED).unwrap()
}

fn config() -> ForgeConfig {
    ForgeConfig::default().with_iterations(5)
}

/// Approves `budget` requests, then fails as if the process died.
struct Crashing {
    budget: usize,
}

impl ReviewGate for Crashing {
    fn review(&mut self, _: &ReviewRequest) -> Result<GateOutcome, StoryError> {
        if self.budget == 0 {
            return Err(StoryError::Replay("simulated crash".into()));
        }
        self.budget -= 1;
        Ok(GateOutcome::Decided(ReviewDecision::approve("auto")))
    }
}

fn journal_iterations(store: &ProjectStore, slug: &str) -> Vec<usize> {
    store.load_journal(slug).unwrap().iter().map(|r| r.iteration).collect()
}

#[test]
fn resume_after_crash_matches_uninterrupted_run() {
    let p = profile();
    let reference = forge_story(&p, &config(), &Gateway::mock(), &mut AutoApprove, SEED).unwrap();

    for crash_after in [0, 2, 4] {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let run = |gate: &mut dyn ReviewGate| run_forge(&store, &Gateway::mock(), &p, &config(), SEED, gate, None, "run-1");

        assert!(run(&mut Crashing { budget: crash_after }).is_err());
        assert_eq!(journal_iterations(&store, &p.slug()).len(), crash_after);

        let ForgeRunOutcome::Complete(story) = run(&mut AutoApprove).unwrap() else {
            panic!("auto-approve run parked");
        };
        assert_eq!(story.text, reference.text, "crash after {crash_after}");
        assert_eq!(journal_iterations(&store, &p.slug()), vec![1, 2, 3, 4, 5]);
        assert_eq!(story.replay().unwrap(), story.text);
    }
}

#[test]
fn torn_journal_tail_is_recovered() {
    let p = profile();
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let _ = run_forge(&store, &Gateway::mock(), &p, &config(), SEED, &mut Crashing { budget: 2 }, None, "r");

    let journal = dir.path().join("characters").join(p.slug()).join("journal.jsonl");
    let mut f = OpenOptions::new().append(true).open(&journal).unwrap();
    f.write_all(br#"{"iteration":3,"seed":"#).unwrap();
    drop(f);

    let out = run_forge(&store, &Gateway::mock(), &p, &config(), SEED, &mut AutoApprove, None, "r").unwrap();
    assert!(matches!(out, ForgeRunOutcome::Complete(_)));
    assert_eq!(journal_iterations(&store, &p.slug()), vec![1, 2, 3, 4, 5]);
}

#[test]
fn finished_journal_longer_than_request_is_refused() {
    let p = profile();
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    run_forge(&store, &Gateway::mock(), &p, &config(), SEED, &mut AutoApprove, None, "r").unwrap();
    let shorter = ForgeConfig::default().with_iterations(3);
    let err = run_forge(&store, &Gateway::mock(), &p, &shorter, SEED, &mut AutoApprove, None, "r").unwrap_err();
    assert!(matches!(err, StoreError::Invalid(_)));
}

#[test]
fn parked_run_advances_with_each_decision() {
    let p = profile();
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let mut gate = QueueGate::parking(store.clone(), None);
    let edit_text = "A reviewer replaced this part of the story with a single plain sentence.";

    let mut decisions = 0usize;
    let story = loop {
        match run_forge(&store, &Gateway::mock(), &p, &config(), SEED, &mut gate, None, "queued").unwrap() {
            ForgeRunOutcome::Complete(s) => break s,
            ForgeRunOutcome::Parked { task_id, iterations_done } => {
                let pending = store.list_reviews(Some(TaskState::Pending)).unwrap();
                assert_eq!(pending.len(), 1);
                assert_eq!(pending[0].id, task_id);
                store.claim_review(&task_id, "alice").unwrap();
                assert!(store.claim_review(&task_id, "bob").is_err());
                let d = match decisions {
                    0 => ReviewDecision::regenerate("alice"),
                    1 => ReviewDecision::edit("alice", edit_text),
                    _ => ReviewDecision::approve("alice"),
                };
                // A regenerate retries the same iteration.
                assert_eq!(iterations_done, decisions.saturating_sub(1));
                store.submit_review(&task_id, d).unwrap();
                assert!(matches!(
                    store.submit_review(&task_id, ReviewDecision::approve("alice")),
                    Err(StoreError::AlreadyDecided(_))
                ));
                decisions += 1;
            }
        }
        assert!(decisions < 20, "run never completed");
    };
    assert_eq!(story.iterations.len(), 5);
    // One extra decision for the regenerated attempt.
    assert_eq!(decisions, 6);
    assert!(story.text.contains(edit_text));
    assert_eq!(story.replay().unwrap(), story.text);
    assert!(store.list_reviews(Some(TaskState::Pending)).unwrap().is_empty());
}

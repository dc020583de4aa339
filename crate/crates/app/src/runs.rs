//! Pipeline runs shared by the CLI and the service.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use simulacra_core::character::{AttributePools, CharacterProfile, TraitPool};
use simulacra_core::conformity::{run_experiment, Condition, ExperimentReport, TrialSuite};
use simulacra_core::eval::{
    average_runs, collect_cases, generate_questionnaire, run_self_report, score_self_report, PointScheme,
    Questionnaire, ScoreBreakdown, SelfReportScore, SjtSuite,
};
use simulacra_core::llm::Gateway;
use simulacra_core::macm::{build_long_term_memory, BuildConfig, LongTermStore, MacmConfig, MacmSession};
use simulacra_core::simulacrum::{MacmSimulacrum, Method, PromptSimulacrum, RagSimulacrum, Simulacrum};
use simulacra_core::store::{
    read_json, run_forge, write_json, ArtifactKind, ForgeRunOutcome, ProjectStore, QueueGate, RunKind, RunRecord,
    RunState,
};
use simulacra_core::story::{
    draft_profiles, rank_profiles, recheck_profiles, select_top, AutoApprove, Biography, ForgeConfig, LifeStory,
    RankedProfile, ReviewGate, ReviewKind, ReviewMode, ReviewRequest,
};

use crate::gate::InteractiveGate;

/// Parameters of a run. Stored next to the run record so a parked run can
/// resume with the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RunRequest {
    pub kind: RunKind,
    /// Target character; for observer export and conformity, empty means all.
    pub characters: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub review_mode: ReviewMode,
    pub method: Method,
    /// Methods for observer export; empty means all three.
    pub methods: Vec<Method>,
    /// Mock fixture scenario.
    pub scenario: Option<String>,
    pub condition: Condition,
    pub interview: bool,
    pub drafts: usize,
    pub keep: usize,
    pub runs: usize,
}

impl Default for RunRequest {
    fn default() -> Self {
        Self {
            kind: RunKind::ForgeStory,
            characters: Vec::new(),
            seed: 0,
            iterations: 50,
            review_mode: ReviewMode::AutoApprove,
            method: Method::Macm,
            methods: Vec::new(),
            scenario: None,
            condition: Condition::Group,
            interview: false,
            drafts: 5,
            keep: 1,
            runs: 1,
        }
    }
}

impl RunRequest {
    fn character(&self) -> Result<&str> {
        match self.characters.as_slice() {
            [one] => Ok(one),
            [] => bail!("this run needs a character"),
            _ => bail!("this run takes exactly one character"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(String),
    Parked { task_id: String, iterations_done: usize },
}

/// Self-report results of one character, by method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelfReportResults {
    pub methods: BTreeMap<Method, MethodSelfReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodSelfReport {
    pub runs: Vec<SelfReportScore>,
    pub average: ScoreBreakdown,
}

/// Everything a run needs besides its request.
#[derive(Clone)]
pub struct Pipeline {
    pub store: ProjectStore,
    pub gateway: Gateway,
}

impl Pipeline {
    pub fn new(store: ProjectStore, gateway: Gateway) -> Self {
        Self { store, gateway }
    }

    fn request_path(&self, run_id: &str) -> PathBuf {
        self.store.root().join("run-requests").join(format!("{run_id}.json"))
    }

    pub fn save_request(&self, run_id: &str, req: &RunRequest) -> Result<()> {
        write_json(&self.request_path(run_id), req)?;
        Ok(())
    }

    pub fn load_request(&self, run_id: &str) -> Result<RunRequest> {
        read_json(&self.request_path(run_id))?.ok_or_else(|| anyhow!("run {run_id} has no stored request"))
    }

    /// Registers a new run in the ledger.
    pub fn start(&self, req: &RunRequest) -> Result<RunRecord> {
        let id = self.store.new_run_id(req.kind);
        let run = RunRecord::start(&id, req.kind, req.characters.first().cloned(), req.seed);
        self.save_request(&id, req)?;
        self.store.save_run(&run)?;
        Ok(run)
    }

    /// Executes (or resumes) a run and records its final state.
    pub fn execute(&self, run: &mut RunRecord, req: &RunRequest) -> Result<RunOutcome> {
        run.state = RunState::Running;
        run.pending_review = None;
        self.store.save_run(run)?;
        let mut gate = self.gate(req);
        let outcome = self.dispatch(run, req, gate.as_mut());
        match &outcome {
            Ok(RunOutcome::Completed(summary)) => run.finish(RunState::Completed, Some(summary.clone())),
            Ok(RunOutcome::Parked { task_id, iterations_done }) => {
                run.iterations_done = *iterations_done;
                run.pending_review = Some(task_id.clone());
                run.finish(RunState::Parked, Some(format!("waiting for review {task_id}")));
            }
            Err(e) => run.finish(RunState::Failed, Some(format!("{e:#}"))),
        }
        self.store.save_run(run)?;
        outcome
    }

    fn gate(&self, req: &RunRequest) -> Box<dyn ReviewGate> {
        match req.review_mode {
            ReviewMode::AutoApprove => Box::new(AutoApprove),
            ReviewMode::Interactive => Box::new(InteractiveGate::stdio()),
            ReviewMode::Queued => {
                let timeout = ForgeConfig {
                    review_mode: ReviewMode::Queued,
                    ..ForgeConfig::default()
                }
                .effective_review_timeout()
                .map(Duration::from_secs);
                Box::new(QueueGate::parking(self.store.clone(), timeout))
            }
        }
    }

    fn dispatch(&self, run: &mut RunRecord, req: &RunRequest, gate: &mut dyn ReviewGate) -> Result<RunOutcome> {
        match req.kind {
            RunKind::ForgeProfile => self.forge_profile(run, req, gate),
            RunKind::ForgeStory => self.forge_story(run, req, gate),
            RunKind::BuildMemory => self.build_memory(req),
            RunKind::SelfReport => self.self_report(req),
            RunKind::ObserverExport => self.observer_export(req),
            RunKind::Conformity => self.conformity(req).map(|(summary, _)| RunOutcome::Completed(summary)),
        }
    }

    fn profile(&self, slug: &str) -> Result<CharacterProfile> {
        Ok(self
            .store
            .require_artifact::<CharacterProfile>(slug, ArtifactKind::Profile)
            .with_context(|| format!("no profile for {slug:?}; run forge-profile first"))?
            .data)
    }

    fn forge_profile(&self, run: &RunRecord, req: &RunRequest, gate: &mut dyn ReviewGate) -> Result<RunOutcome> {
        let (pools, traits) = (AttributePools::bundled(), TraitPool::bundled());
        // The selection is stored so a resumed run rechecks the same drafts
        // even when a remote ranker would answer differently the second time.
        let selection_path = self.store.root().join("run-requests").join(format!("{}.selection.json", run.id));
        let selected: Vec<RankedProfile> = match read_json(&selection_path)? {
            Some(s) => s,
            None => {
                let drafts = draft_profiles(&pools, &traits, req.drafts.max(1), req.seed)?;
                let ranked = rank_profiles(&drafts, &self.gateway, req.seed)?;
                let top = select_top(&ranked, req.keep.max(1));
                write_json(&selection_path, &top)?;
                top
            }
        };
        let out = recheck_profiles(&selected, &pools, &traits, gate)?;
        let mut slugs = Vec::new();
        for p in &out.accepted {
            self.store.save_artifact(&p.slug(), ArtifactKind::Profile, req.seed, p)?;
            slugs.push(p.slug());
        }
        if let Some(first) = out.pending.first() {
            let r = selected.iter().find(|r| r.draft_index == *first).expect("pending draft was selected");
            let request = ReviewRequest {
                kind: ReviewKind::ProfileRecheck,
                character: r.profile.slug(),
                iteration: 0,
                attempt: 0,
                chunk_index: None,
                original: String::new(),
                candidate: String::new(),
                context: String::new(),
            };
            return Ok(RunOutcome::Parked {
                task_id: request.task_id(),
                iterations_done: 0,
            });
        }
        Ok(RunOutcome::Completed(format!(
            "accepted {} profile(s): {}; rejected {}",
            slugs.len(),
            slugs.join(", "),
            out.rejected.len()
        )))
    }

    fn forge_story(&self, run: &mut RunRecord, req: &RunRequest, gate: &mut dyn ReviewGate) -> Result<RunOutcome> {
        let profile = self.profile(req.character()?)?;
        let config = ForgeConfig {
            review_mode: req.review_mode,
            ..ForgeConfig::default().with_iterations(req.iterations)
        };
        let outcome = run_forge(&self.store, &self.gateway, &profile, &config, req.seed, gate, req.scenario.clone(), &run.id)?;
        Ok(match outcome {
            ForgeRunOutcome::Complete(story) => {
                run.iterations_done = story.iterations.len();
                RunOutcome::Completed(format!(
                    "{} iterations, {} words",
                    story.iterations.len(),
                    story.word_count()
                ))
            }
            ForgeRunOutcome::Parked { task_id, iterations_done } => RunOutcome::Parked { task_id, iterations_done },
        })
    }

    fn build_memory(&self, req: &RunRequest) -> Result<RunOutcome> {
        let slug = req.character()?;
        let profile = self.profile(slug)?;
        let story = self
            .store
            .require_artifact::<LifeStory>(slug, ArtifactKind::Story)
            .with_context(|| format!("no story for {slug:?}; run forge-story first"))?
            .data;
        let config = BuildConfig {
            seed: req.seed,
            scenario: req.scenario.clone(),
            ..BuildConfig::default()
        };
        let memory = build_long_term_memory(&story.text, &profile, &self.gateway, &config)?;
        self.store.save_artifact(slug, ArtifactKind::Memory, req.seed, &memory)?;
        Ok(RunOutcome::Completed(format!("{} memory records", memory.len())))
    }

    /// A simulacrum of `slug` backed by `method`, from stored artifacts.
    pub fn simulacrum(&self, slug: &str, method: Method, scenario: Option<String>, seed: u64) -> Result<Box<dyn Simulacrum>> {
        let profile = self.profile(slug)?;
        let biography = self
            .store
            .require_artifact::<Biography>(slug, ArtifactKind::Biography)
            .with_context(|| format!("no biography for {slug:?}; run forge-story first"))?
            .data
            .text;
        let gw = self.gateway.clone();
        Ok(match method {
            Method::Prompt => Box::new(PromptSimulacrum::new(gw, profile, &biography).with_scenario(scenario).with_seed(seed)),
            Method::Rag => {
                let story = self
                    .store
                    .require_artifact::<LifeStory>(slug, ArtifactKind::Story)
                    .with_context(|| format!("no story for {slug:?}; run forge-story first"))?
                    .data;
                let granularity = story.iterations.first().map_or(2, |r| r.granularity);
                Box::new(
                    RagSimulacrum::new(gw, profile, &biography, &story.text, granularity)?
                        .with_scenario(scenario)
                        .with_seed(seed),
                )
            }
            Method::Macm => {
                let memory = self
                    .store
                    .require_artifact::<LongTermStore>(slug, ArtifactKind::Memory)
                    .with_context(|| format!("no long-term memory for {slug:?}; run build-memory first"))?
                    .data;
                let session = MacmSession::new(profile, &biography, memory, MacmConfig::default())?
                    .with_scenario(scenario)
                    .with_seed(seed);
                Box::new(MacmSimulacrum::new(gw, session))
            }
        })
    }

    fn self_report(&self, req: &RunRequest) -> Result<RunOutcome> {
        let slug = req.character()?;
        let questionnaire = match self.store.load_artifact::<Questionnaire>(slug, ArtifactKind::Questionnaire)? {
            Some(q) => q.data,
            None => {
                let q = generate_questionnaire(
                    &self.profile(slug)?,
                    &AttributePools::bundled(),
                    &TraitPool::bundled(),
                    &PointScheme::default(),
                    req.seed,
                )?;
                self.store.save_artifact(slug, ArtifactKind::Questionnaire, req.seed, &q)?;
                q
            }
        };
        let mut runs = Vec::new();
        for r in 0..req.runs.max(1) {
            let mut sim = self.simulacrum(slug, req.method, req.scenario.clone(), req.seed.wrapping_add(r as u64))?;
            let replies = run_self_report(sim.as_mut(), &questionnaire)?;
            runs.push(score_self_report(&replies, &questionnaire)?);
        }
        let average = average_runs(&runs.iter().map(|s| s.breakdown).collect::<Vec<_>>())?;
        let mut results = self
            .store
            .load_artifact::<SelfReportResults>(slug, ArtifactKind::SelfReport)?
            .map(|a| a.data)
            .unwrap_or_default();
        results.methods.insert(req.method, MethodSelfReport { runs, average });
        self.store.save_artifact(slug, ArtifactKind::SelfReport, req.seed, &results)?;
        Ok(RunOutcome::Completed(format!(
            "{} {}: {:.2} (cloze {:.2}, sc {:.2}, mc {:.2})",
            slug,
            req.method.label(),
            average.sum,
            average.cloze,
            average.single_choice,
            average.multiple_choice
        )))
    }

    fn targets(&self, req: &RunRequest) -> Result<Vec<String>> {
        let list = if req.characters.is_empty() {
            self.store.characters()?
        } else {
            req.characters.clone()
        };
        if list.is_empty() {
            bail!("no characters in the project");
        }
        Ok(list)
    }

    fn observer_export(&self, req: &RunRequest) -> Result<RunOutcome> {
        let methods = if req.methods.is_empty() { Method::ALL.to_vec() } else { req.methods.clone() };
        let suite = SjtSuite::bundled();
        let mut cases = Vec::new();
        for slug in self.targets(req)? {
            for &m in &methods {
                let mut sim = self.simulacrum(&slug, m, req.scenario.clone(), req.seed)?;
                cases.extend(collect_cases(sim.as_mut(), &suite, req.seed)?);
            }
        }
        let added = self.store.add_cases(&cases)?;
        Ok(RunOutcome::Completed(format!(
            "{added} new observer case(s) of {} collected",
            cases.len()
        )))
    }

    pub fn conformity_report_path(&self, method: Method, condition: Condition) -> PathBuf {
        let cond = match condition {
            Condition::Group => "group",
            Condition::Control => "control",
        };
        self.store
            .root()
            .join("reports")
            .join(format!("conformity-{}-{cond}.json", method.label().to_ascii_lowercase()))
    }

    pub fn conformity(&self, req: &RunRequest) -> Result<(String, ExperimentReport)> {
        let targets = self.targets(req)?;
        let mut participants = targets
            .iter()
            .map(|slug| self.simulacrum(slug, req.method, req.scenario.clone(), req.seed))
            .collect::<Result<Vec<_>>>()?;
        let report = run_experiment(
            &mut participants,
            &TrialSuite::bundled(),
            self.gateway.templates(),
            req.condition,
            req.interview,
        )?;
        for p in &report.participants {
            self.store.save_artifact(&p.character, ArtifactKind::Conformity, req.seed, p)?;
        }
        write_json(&self.conformity_report_path(req.method, req.condition), &report)?;
        let summary = format!(
            "{} participant(s), {} critical-trial correct rate {:.2}%{}",
            report.participants.len(),
            req.method.label(),
            report.overall_rate * 100.0,
            if report.partial { " (partial)" } else { "" }
        );
        Ok((summary, report))
    }
}

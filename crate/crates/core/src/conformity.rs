//! Line-judgement experiments under scripted group pressure.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{bindings, ids, Bindings, TemplateLibrary};
use crate::macm::MacmError;
use crate::simulacrum::{Method, Simulacrum, Stimulus};

#[derive(Debug, thiserror::Error)]
pub enum ConformityError {
    #[error("invalid trial {ordinal}: {rule}")]
    InvalidTrial { ordinal: usize, rule: String },
    #[error("invalid trial suite: {0}")]
    InvalidSuite(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Simulacrum(#[from] MacmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    #[default]
    Group,
    Control,
}

impl Condition {
    /// Suffix of the mock scenario key.
    fn phase(self) -> Option<&'static str> {
        match self {
            Self::Group => None,
            Self::Control => Some("control"),
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "group" => Ok(Self::Group),
            "control" => Ok(Self::Control),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialConfig {
    pub ordinal: usize,
    pub standard_length: f64,
    pub comparison_lengths: [f64; 3],
    /// 1-based line number.
    pub correct_response: u8,
    /// What the six others announce; `None` means they answer correctly.
    #[serde(default)]
    pub group_response: Option<u8>,
    #[serde(default)]
    pub critical: bool,
}

impl TrialConfig {
    /// The answer the group announces in the group condition.
    pub fn announced(&self) -> u8 {
        self.group_response.unwrap_or(self.correct_response)
    }

    pub fn validate(&self) -> Result<(), ConformityError> {
        let bad = |rule: String| {
            Err(ConformityError::InvalidTrial {
                ordinal: self.ordinal,
                rule,
            })
        };
        let lengths = std::iter::once(self.standard_length).chain(self.comparison_lengths);
        if lengths.clone().any(|l| !l.is_finite() || l <= 0.0) {
            return bad("line lengths must be positive".into());
        }
        let equal: Vec<usize> = (0..3)
            .filter(|&i| self.comparison_lengths[i] == self.standard_length)
            .collect();
        if equal.len() != 1 {
            return bad(format!("{} comparison lines equal the standard, expected exactly one", equal.len()));
        }
        if !(1..=3).contains(&self.correct_response) || equal[0] + 1 != self.correct_response as usize {
            return bad(format!(
                "correct response {} is not the line equal to the standard ({})",
                self.correct_response,
                equal[0] + 1
            ));
        }
        if let Some(g) = self.group_response {
            if !(1..=3).contains(&g) {
                return bad(format!("group response {g} is not a line number"));
            }
        }
        if self.critical != (self.announced() != self.correct_response) {
            return bad("critical must hold exactly when the group answer is wrong".into());
        }
        Ok(())
    }

    fn prompt_bindings(&self, condition: Condition) -> Bindings {
        let mut b = bindings([
            ("standard_len", fmt_len(self.standard_length)),
            ("len_1", fmt_len(self.comparison_lengths[0])),
            ("len_2", fmt_len(self.comparison_lengths[1])),
            ("len_3", fmt_len(self.comparison_lengths[2])),
        ]);
        if condition == Condition::Group {
            b.insert("group_response".into(), self.announced().to_string());
        }
        b
    }
}

fn fmt_len(l: f64) -> String {
    format!("{l}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReferenceSeries {
    pub label: String,
    pub correct_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewConfig {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuiteFile {
    interview: Option<InterviewConfig>,
    reference: Option<ReferenceSeries>,
    #[serde(rename = "trial")]
    trials: Vec<RawTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTrial {
    ordinal: usize,
    standard_length: f64,
    comparison_lengths: [f64; 3],
    correct_response: u8,
    group_response: Option<u8>,
    critical: Option<bool>,
}

const BUNDLED: &str = include_str!("../data/conformity/trials.toml");

/// Parses and validates a trial suite. `critical` may be omitted per trial;
/// when given it must agree with the group answer.
pub fn load_trials(raw: &str) -> Result<Vec<TrialConfig>, ConformityError> {
    Ok(parse_suite(raw)?.trials)
}

/// A trial suite with its interview question and plotting reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialSuite {
    pub trials: Vec<TrialConfig>,
    pub interview_question: String,
    pub reference: Option<ReferenceSeries>,
}

impl TrialSuite {
    pub fn bundled() -> Self {
        parse_suite(BUNDLED).expect("bundled suite is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConformityError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ConformityError::Io(format!("{}: {e}", path.display())))?;
        parse_suite(&raw)
    }

    pub fn critical(&self) -> impl Iterator<Item = &TrialConfig> {
        self.trials.iter().filter(|t| t.critical)
    }

    pub fn critical_ordinals(&self) -> Vec<usize> {
        self.critical().map(|t| t.ordinal).collect()
    }
}

fn parse_suite(raw: &str) -> Result<TrialSuite, ConformityError> {
    let file: SuiteFile = toml::from_str(raw).map_err(|e| ConformityError::Parse(e.to_string()))?;
    if file.trials.is_empty() {
        return Err(ConformityError::InvalidSuite("no trials".into()));
    }
    let mut trials = Vec::with_capacity(file.trials.len());
    for (i, r) in file.trials.into_iter().enumerate() {
        if r.ordinal != i + 1 {
            return Err(ConformityError::InvalidTrial {
                ordinal: r.ordinal,
                rule: format!("ordinals must run 1..n in order, expected {}", i + 1),
            });
        }
        let critical_derived = r.group_response.is_some_and(|g| g != r.correct_response);
        let t = TrialConfig {
            ordinal: r.ordinal,
            standard_length: r.standard_length,
            comparison_lengths: r.comparison_lengths,
            correct_response: r.correct_response,
            group_response: r.group_response,
            critical: r.critical.unwrap_or(critical_derived),
        };
        t.validate()?;
        trials.push(t);
    }
    let interview_question = file
        .interview
        .map(|i| i.question)
        .unwrap_or_else(|| parse_suite(BUNDLED).expect("bundled suite is valid").interview_question);
    if interview_question.trim().is_empty() {
        return Err(ConformityError::InvalidSuite("interview question is empty".into()));
    }
    Ok(TrialSuite {
        trials,
        interview_question,
        reference: file.reference,
    })
}

static LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bline\s+number(?:ed)?\s+(\d+)\b").expect("valid regex"));
static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"));
static LENGTH_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)[\s-]*inch").expect("valid regex"));

/// One distinct value decides; several disagreeing values make the reply
/// unreadable rather than falling through to a weaker reading.
fn single(values: BTreeSet<u8>) -> Option<Option<u8>> {
    match values.len() {
        0 => None,
        1 => Some(values.into_iter().next()),
        _ => Some(None),
    }
}

/// The line number a reply picks. Tries "line numbered N", then a bare digit
/// 1-3, then a restated comparison length.
pub fn parse_choice(text: &str, trial: &TrialConfig) -> Option<u8> {
    let named: BTreeSet<u8> = LINE_RE
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<u8>().ok())
        .filter(|n| (1..=3).contains(n))
        .collect();
    if let Some(v) = single(named) {
        return v;
    }
    let digits: BTreeSet<u8> = NUMBER_RE
        .find_iter(text)
        .filter_map(|m| match m.as_str() {
            "1" => Some(1),
            "2" => Some(2),
            "3" => Some(3),
            _ => None,
        })
        .collect();
    if let Some(v) = single(digits) {
        return v;
    }
    let by_length: BTreeSet<u8> = LENGTH_RE
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<f64>().ok())
        .filter_map(|l| trial.comparison_lengths.iter().position(|c| *c == l))
        .map(|i| i as u8 + 1)
        .collect();
    single(by_length).flatten()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialResult {
    pub ordinal: usize,
    pub condition: Condition,
    pub raw_response: String,
    pub parsed_choice: Option<u8>,
    pub correct: bool,
    /// Whether the group's wrong answer was adopted; only on critical trials
    /// under group pressure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformed: Option<bool>,
}

/// The text put to a participant for one trial. The first trial carries the
/// full setup, later ones only the new cards.
pub fn trial_prompt(
    templates: &TemplateLibrary,
    trial: &TrialConfig,
    condition: Condition,
    first: bool,
) -> Result<String, ConformityError> {
    let id = match condition {
        Condition::Group => ids::BANDWAGON,
        Condition::Control => ids::BANDWAGON_CONTROL,
    };
    let p = templates
        .render(id, &trial.prompt_bindings(condition))
        .map_err(MacmError::from)?;
    Ok(if first { p.system } else { p.user })
}

/// Scores a reply to one trial.
pub fn score_trial(trial: &TrialConfig, condition: Condition, reply: &str) -> TrialResult {
    let parsed = parse_choice(reply, trial);
    if parsed.is_none() {
        tracing::warn!(trial = trial.ordinal, reply, "unparseable line choice");
    }
    TrialResult {
        ordinal: trial.ordinal,
        condition,
        raw_response: reply.to_string(),
        parsed_choice: parsed,
        correct: parsed == Some(trial.correct_response),
        conformed: (trial.critical && condition == Condition::Group)
            .then(|| parsed.is_some() && parsed == trial.group_response),
    }
}

/// Puts one trial to a participant within its running session.
pub fn run_trial(
    sim: &mut dyn Simulacrum,
    templates: &TemplateLibrary,
    trial: &TrialConfig,
    condition: Condition,
    first: bool,
) -> Result<TrialResult, ConformityError> {
    let text = trial_prompt(templates, trial, condition, first)?;
    let mut stimulus = Stimulus::new(&text).with_context("correct_response", trial.correct_response.to_string());
    if condition == Condition::Group {
        stimulus = stimulus.with_context("group_response", trial.announced().to_string());
    }
    if let Some(p) = condition.phase() {
        stimulus = stimulus.with_phase(p);
    }
    let reply = sim.respond(&stimulus)?;
    Ok(score_trial(trial, condition, &reply))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Interview {
    pub question: String,
    pub answer: String,
}

/// Asks the follow-up question after the last trial, in the same session.
pub fn interview(
    sim: &mut dyn Simulacrum,
    suite: &TrialSuite,
    results: &[TrialResult],
) -> Result<Interview, ConformityError> {
    if results.len() != suite.trials.len() || sim.transcript().is_empty() {
        return Err(ConformityError::Precondition(
            "the interview follows a completed experiment in the same session".into(),
        ));
    }
    let answer = sim.respond(&Stimulus::new(&suite.interview_question).with_phase("interview"))?;
    if answer.trim().is_empty() {
        return Err(MacmError::GenerationFailed("empty interview answer".into()).into());
    }
    Ok(Interview {
        question: suite.interview_question.clone(),
        answer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParticipantReport {
    pub character: String,
    pub method: Method,
    pub results: Vec<TrialResult>,
    pub critical_correct: usize,
    pub critical_total: usize,
    pub conformed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interview: Option<Interview>,
    /// Set when the run stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ParticipantReport {
    pub fn conformity_rate(&self) -> f64 {
        if self.critical_total == 0 {
            0.0
        } else {
            self.conformed as f64 / self.critical_total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialRate {
    pub ordinal: usize,
    pub correct: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(usize, f64)>,
    #[serde(default)]
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub condition: Condition,
    pub trial_rates: Vec<TrialRate>,
    /// The critical-trial subset of `trial_rates`.
    pub critical_rates: Vec<TrialRate>,
    /// Mean of the critical-trial rates.
    pub overall_rate: f64,
    pub participants: Vec<ParticipantReport>,
    pub series: Vec<PlotSeries>,
    /// Some participant stopped early; rates cover what was completed.
    pub partial: bool,
}

impl ExperimentReport {
    pub fn table(&self) -> String {
        let mut out = String::from("Trial | Correct | Total | Rate\n");
        for r in &self.critical_rates {
            out.push_str(&format!("{} | {} | {} | {:.2}%\n", r.ordinal, r.correct, r.total, r.rate * 100.0));
        }
        out.push_str(&format!("Overall | | | {:.2}%\n", self.overall_rate * 100.0));
        out
    }
}

fn run_participant(
    sim: &mut dyn Simulacrum,
    suite: &TrialSuite,
    templates: &TemplateLibrary,
    condition: Condition,
    with_interview: bool,
) -> ParticipantReport {
    sim.reset();
    let mut results = Vec::with_capacity(suite.trials.len());
    let mut error = None;
    for (i, t) in suite.trials.iter().enumerate() {
        match run_trial(sim, templates, t, condition, i == 0) {
            Ok(r) => results.push(r),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let mut interview_answer = None;
    if error.is_none() && with_interview {
        match interview(sim, suite, &results) {
            Ok(iv) => interview_answer = Some(iv),
            Err(e) => error = Some(e.to_string()),
        }
    }
    let critical: Vec<&TrialResult> = results
        .iter()
        .filter(|r| suite.trials[r.ordinal - 1].critical)
        .collect();
    ParticipantReport {
        character: sim.character().slug(),
        method: sim.method(),
        critical_correct: critical.iter().filter(|r| r.correct).count(),
        critical_total: critical.len(),
        conformed: critical.iter().filter(|r| r.conformed == Some(true)).count(),
        results,
        interview: interview_answer,
        error,
    }
}

/// Runs every participant through the whole suite in one session each,
/// in parallel across participants, then interviews them.
pub fn run_experiment(
    participants: &mut [Box<dyn Simulacrum>],
    suite: &TrialSuite,
    templates: &TemplateLibrary,
    condition: Condition,
    with_interview: bool,
) -> Result<ExperimentReport, ConformityError> {
    if participants.is_empty() {
        return Err(ConformityError::Precondition("at least one participant is required".into()));
    }
    let reports: Vec<ParticipantReport> = std::thread::scope(|s| {
        let handles: Vec<_> = participants
            .iter_mut()
            .map(|p| s.spawn(|| run_participant(p.as_mut(), suite, templates, condition, with_interview)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("participant thread panicked"))
            .collect()
    });
    if reports.iter().all(|r| r.results.is_empty()) {
        let detail = reports.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(ConformityError::Precondition(format!("no participant completed a trial: {detail}")));
    }
    Ok(build_report(condition, suite, reports))
}

fn build_report(condition: Condition, suite: &TrialSuite, participants: Vec<ParticipantReport>) -> ExperimentReport {
    let trial_rates: Vec<TrialRate> = suite
        .trials
        .iter()
        .map(|t| {
            let answered: Vec<&TrialResult> = participants
                .iter()
                .filter_map(|p| p.results.iter().find(|r| r.ordinal == t.ordinal))
                .collect();
            let correct = answered.iter().filter(|r| r.correct).count();
            TrialRate {
                ordinal: t.ordinal,
                correct,
                total: answered.len(),
                rate: if answered.is_empty() {
                    0.0
                } else {
                    correct as f64 / answered.len() as f64
                },
            }
        })
        .collect();
    let critical_rates: Vec<TrialRate> = trial_rates
        .iter()
        .filter(|r| suite.trials[r.ordinal - 1].critical)
        .cloned()
        .collect();
    let overall_rate = if critical_rates.is_empty() {
        0.0
    } else {
        critical_rates.iter().map(|r| r.rate).sum::<f64>() / critical_rates.len() as f64
    };
    let mut series = vec![PlotSeries {
        label: "simulacra".into(),
        points: critical_rates.iter().map(|r| (r.ordinal, r.rate)).collect(),
        approximate: false,
    }];
    if let Some(reference) = &suite.reference {
        series.push(PlotSeries {
            label: reference.label.clone(),
            points: critical_rates.iter().map(|r| (r.ordinal, reference.correct_rate)).collect(),
            approximate: true,
        });
    }
    ExperimentReport {
        condition,
        partial: participants.iter().any(|p| p.error.is_some()),
        trial_rates,
        critical_rates,
        overall_rate,
        participants,
        series,
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use super::icc::{compute_icc_with, IccForm, RatingsMatrix};
use super::EvalError;
use crate::seed::fnv1a;
use crate::simulacrum::{Method, Simulacrum, Stimulus};

pub type JudgeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
    E,
}

impl std::str::FromStr for Grade {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            "E" => Ok(Self::E),
            other => Err(EvalError::ShapeMismatch(format!("grade {other:?} is not on the A-E scale"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchVerdict {
    Correct,
    Partial,
    Incorrect,
}

/// Numeric value of each similarity grade, times `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradeMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub scale: f64,
}

impl Default for GradeMap {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.75,
            c: 0.5,
            d: 0.25,
            e: 0.0,
            scale: 1.0,
        }
    }
}

impl GradeMap {
    pub fn with_scale(scale: f64) -> Self {
        Self {
            scale,
            ..Self::default()
        }
    }

    pub fn value(&self, g: Grade) -> f64 {
        self.scale
            * match g {
                Grade::A => self.a,
                Grade::B => self.b,
                Grade::C => self.c,
                Grade::D => self.d,
                Grade::E => self.e,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictMap {
    pub correct: f64,
    pub partial: f64,
    pub incorrect: f64,
}

impl Default for VerdictMap {
    fn default() -> Self {
        Self {
            correct: 1.0,
            partial: 0.5,
            incorrect: 0.0,
        }
    }
}

impl VerdictMap {
    pub fn value(&self, v: MatchVerdict) -> f64 {
        match v {
            MatchVerdict::Correct => self.correct,
            MatchVerdict::Partial => self.partial,
            MatchVerdict::Incorrect => self.incorrect,
        }
    }
}

/// Who does which task. Describers' descriptions are scored by matchers;
/// reactors' answers are compared with the simulacrum's by raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct JudgeAssignment {
    pub describers: Vec<JudgeId>,
    pub matchers: Vec<JudgeId>,
    pub reactors: Vec<JudgeId>,
    pub raters: Vec<JudgeId>,
    pub descriptions_per_pass: usize,
    pub min_reaction_words: usize,
}

impl Default for JudgeAssignment {
    fn default() -> Self {
        let ids = |v: [&str; 2]| v.map(String::from).to_vec();
        Self {
            describers: ids(["judge-1", "judge-2"]),
            matchers: ids(["judge-3", "judge-4"]),
            reactors: ids(["judge-3", "judge-4"]),
            raters: ids(["judge-1", "judge-2"]),
            descriptions_per_pass: 5,
            min_reaction_words: 100,
        }
    }
}

impl JudgeAssignment {
    pub fn validate(&self) -> Result<(), EvalError> {
        let groups = [
            ("describers", &self.describers),
            ("matchers", &self.matchers),
            ("reactors", &self.reactors),
            ("raters", &self.raters),
        ];
        for (name, g) in groups {
            let distinct: BTreeSet<&JudgeId> = g.iter().collect();
            if g.is_empty() || distinct.len() != g.len() {
                return Err(EvalError::InvalidInput(format!("{name} must be a non-empty list of distinct judges")));
            }
        }
        let overlap = |a: &[JudgeId], b: &[JudgeId]| a.iter().any(|j| b.contains(j));
        if overlap(&self.describers, &self.matchers) {
            return Err(EvalError::InvalidInput("a judge may not score their own descriptions".into()));
        }
        if overlap(&self.reactors, &self.raters) {
            return Err(EvalError::InvalidInput("a judge may not rate their own reaction".into()));
        }
        if self.descriptions_per_pass == 0 {
            return Err(EvalError::InvalidInput("descriptions per pass must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgingKind {
    PersonalityDescribing,
    DescriptionScoring,
    ReactionDescribing,
    SimilarityScoring,
}

impl JudgingKind {
    pub const ALL: [JudgingKind; 4] = [
        Self::PersonalityDescribing,
        Self::DescriptionScoring,
        Self::ReactionDescribing,
        Self::SimilarityScoring,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PersonalityDescribing => "personality-describing",
            Self::DescriptionScoring => "description-scoring",
            Self::ReactionDescribing => "reaction-describing",
            Self::SimilarityScoring => "similarity-scoring",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Self::PersonalityDescribing => "pd",
            Self::DescriptionScoring => "ds",
            Self::ReactionDescribing => "rd",
            Self::SimilarityScoring => "ss",
        }
    }

    pub fn guideline(self) -> &'static str {
        GUIDELINES.get(self.as_str()).map(String::as_str).unwrap_or_default()
    }
}

static GUIDELINES: LazyLock<BTreeMap<String, String>> = LazyLock::new(|| {
    toml::from_str(include_str!("../../data/judging/guidelines.toml")).expect("bundled guidelines parse")
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Submission {
    PersonalityDescribing { descriptions: Vec<String> },
    DescriptionScoring { verdicts: Vec<MatchVerdict> },
    ReactionDescribing { reaction: String },
    SimilarityScoring { grade: Grade },
}

impl Submission {
    pub fn kind(&self) -> JudgingKind {
        match self {
            Self::PersonalityDescribing { .. } => JudgingKind::PersonalityDescribing,
            Self::DescriptionScoring { .. } => JudgingKind::DescriptionScoring,
            Self::ReactionDescribing { .. } => JudgingKind::ReactionDescribing,
            Self::SimilarityScoring { .. } => JudgingKind::SimilarityScoring,
        }
    }

    /// Parses a wire submission, reporting any problem as a shape mismatch.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, EvalError> {
        serde_json::from_value(value.clone()).map_err(|e| EvalError::ShapeMismatch(e.to_string()))
    }
}

/// Shape rules shared by the service and its clients.
pub fn validate_submission(
    expected: JudgingKind,
    submission: &Submission,
    assignment: &JudgeAssignment,
) -> Result<(), EvalError> {
    let bad = |m: String| Err(EvalError::ShapeMismatch(m));
    if submission.kind() != expected {
        return bad(format!("expected a {} submission, got {}", expected.as_str(), submission.kind().as_str()));
    }
    match submission {
        Submission::PersonalityDescribing { descriptions } => {
            if descriptions.len() != assignment.descriptions_per_pass {
                return bad(format!(
                    "{} descriptions required, got {}",
                    assignment.descriptions_per_pass,
                    descriptions.len()
                ));
            }
            if descriptions.iter().any(|d| d.trim().is_empty()) {
                return bad("descriptions must not be empty".into());
            }
        }
        Submission::DescriptionScoring { verdicts } => {
            if verdicts.len() != assignment.descriptions_per_pass {
                return bad(format!(
                    "one verdict per description required ({}), got {}",
                    assignment.descriptions_per_pass,
                    verdicts.len()
                ));
            }
        }
        Submission::ReactionDescribing { reaction } => {
            let words = reaction.split_whitespace().count();
            if words < assignment.min_reaction_words {
                return bad(format!("reaction needs at least {} words, got {words}", assignment.min_reaction_words));
            }
        }
        Submission::SimilarityScoring { .. } => {}
    }
    Ok(())
}

/// One unit of judging work.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSlot {
    pub case_id: String,
    pub kind: JudgingKind,
    pub judge: JudgeId,
    /// Whose descriptions are scored, or whose reaction is compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<JudgeId>,
}

impl TaskSlot {
    pub fn task_id(&self) -> String {
        let mut id = format!("{}-{}-{}", self.case_id, self.kind.short(), self.judge);
        if let Some(r) = &self.subject {
            id.push_str("-vs-");
            id.push_str(r);
        }
        id
    }
}

/// What a judge sees. Carries no method label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskPayload {
    pub kind: JudgingKind,
    pub guideline: String,
    pub scenario: String,
    /// The simulacrum's answer, where the task shows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub descriptions: Vec<String>,
    /// A human reaction to compare against, for similarity scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<String>,
    /// Profile and biography of the target, for tasks that need them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// A scenario answered by one simulacrum, plus everything judges said about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObserverCase {
    pub id: String,
    pub character: String,
    pub method: Method,
    pub scenario_id: String,
    pub scenario: String,
    pub response: String,
    #[serde(default)]
    pub descriptions: BTreeMap<JudgeId, Vec<String>>,
    /// Matcher to describer to one verdict per description.
    #[serde(default)]
    pub verdicts: BTreeMap<JudgeId, BTreeMap<JudgeId, Vec<MatchVerdict>>>,
    #[serde(default)]
    pub reactions: BTreeMap<JudgeId, String>,
    /// Rater to reactor to grade.
    #[serde(default)]
    pub grades: BTreeMap<JudgeId, BTreeMap<JudgeId, Grade>>,
}

/// Opaque id that does not reveal the method.
pub fn blind_case_id(character: &str, method: Method, scenario_id: &str, salt: u64) -> String {
    let key = format!("{character}\u{1f}{}\u{1f}{scenario_id}\u{1f}{salt}", method.label());
    format!("case-{:016x}", fnv1a(key.as_bytes()))
}

impl ObserverCase {
    pub fn new(character: &str, method: Method, scenario_id: &str, scenario: &str, response: &str, salt: u64) -> Self {
        Self {
            id: blind_case_id(character, method, scenario_id, salt),
            character: character.to_string(),
            method,
            scenario_id: scenario_id.to_string(),
            scenario: scenario.to_string(),
            response: response.to_string(),
            descriptions: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            reactions: BTreeMap::new(),
            grades: BTreeMap::new(),
        }
    }

    fn done(map: &BTreeMap<JudgeId, BTreeMap<JudgeId, impl Sized>>, judge: &str, subject: &str) -> bool {
        map.get(judge).is_some_and(|m| m.contains_key(subject))
    }

    /// Every task the case will ever have, in queue order.
    pub fn all_slots(&self, a: &JudgeAssignment) -> Vec<TaskSlot> {
        let slot = |kind, judge: &JudgeId, subject: Option<&JudgeId>| TaskSlot {
            case_id: self.id.clone(),
            kind,
            judge: judge.clone(),
            subject: subject.cloned(),
        };
        let mut out: Vec<TaskSlot> = a
            .describers
            .iter()
            .map(|d| slot(JudgingKind::PersonalityDescribing, d, None))
            .collect();
        for m in &a.matchers {
            out.extend(a.describers.iter().map(|d| slot(JudgingKind::DescriptionScoring, m, Some(d))));
        }
        out.extend(a.reactors.iter().map(|r| slot(JudgingKind::ReactionDescribing, r, None)));
        for rater in &a.raters {
            out.extend(a.reactors.iter().map(|r| slot(JudgingKind::SimilarityScoring, rater, Some(r))));
        }
        out
    }

    pub fn is_submitted(&self, slot: &TaskSlot) -> bool {
        let subject = slot.subject.as_deref().unwrap_or_default();
        match slot.kind {
            JudgingKind::PersonalityDescribing => self.descriptions.contains_key(&slot.judge),
            JudgingKind::DescriptionScoring => Self::done(&self.verdicts, &slot.judge, subject),
            JudgingKind::ReactionDescribing => self.reactions.contains_key(&slot.judge),
            JudgingKind::SimilarityScoring => Self::done(&self.grades, &slot.judge, subject),
        }
    }

    /// Tasks that can be worked on now and have not been submitted.
    pub fn ready_slots(&self, a: &JudgeAssignment) -> Vec<TaskSlot> {
        let slot = |kind, judge: &JudgeId, subject: Option<&JudgeId>| TaskSlot {
            case_id: self.id.clone(),
            kind,
            judge: judge.clone(),
            subject: subject.cloned(),
        };
        let mut out = Vec::new();
        for d in a.describers.iter().filter(|d| !self.descriptions.contains_key(*d)) {
            out.push(slot(JudgingKind::PersonalityDescribing, d, None));
        }
        for m in &a.matchers {
            for d in a.describers.iter().filter(|d| self.descriptions.contains_key(*d)) {
                if !Self::done(&self.verdicts, m, d) {
                    out.push(slot(JudgingKind::DescriptionScoring, m, Some(d)));
                }
            }
        }
        for r in a.reactors.iter().filter(|r| !self.reactions.contains_key(*r)) {
            out.push(slot(JudgingKind::ReactionDescribing, r, None));
        }
        for rater in &a.raters {
            for reactor in a.reactors.iter().filter(|r| self.reactions.contains_key(*r)) {
                if !Self::done(&self.grades, rater, reactor) {
                    out.push(slot(JudgingKind::SimilarityScoring, rater, Some(reactor)));
                }
            }
        }
        out
    }

    pub fn is_complete(&self, a: &JudgeAssignment) -> bool {
        a.matchers
            .iter()
            .all(|m| a.describers.iter().all(|d| Self::done(&self.verdicts, m, d)))
            && a
                .raters
                .iter()
                .all(|rt| a.reactors.iter().all(|r| Self::done(&self.grades, rt, r)))
    }

    /// What the judge of `slot` is shown. `target` is the character's
    /// biography and story, for tasks that need it.
    pub fn payload(&self, slot: &TaskSlot, target: Option<&str>) -> TaskPayload {
        let mut p = TaskPayload {
            kind: slot.kind,
            guideline: slot.kind.guideline().to_string(),
            scenario: self.scenario.clone(),
            response: None,
            descriptions: Vec::new(),
            reaction: None,
            target: None,
        };
        let subject = slot.subject.as_ref();
        match slot.kind {
            JudgingKind::PersonalityDescribing => p.response = Some(self.response.clone()),
            JudgingKind::DescriptionScoring => {
                p.descriptions = subject.and_then(|d| self.descriptions.get(d)).cloned().unwrap_or_default();
                p.target = target.map(str::to_string);
            }
            JudgingKind::ReactionDescribing => p.target = target.map(str::to_string),
            JudgingKind::SimilarityScoring => {
                p.response = Some(self.response.clone());
                p.reaction = subject.and_then(|r| self.reactions.get(r)).cloned();
            }
        }
        p
    }

    /// Records a submission for a ready slot.
    pub fn apply(&mut self, slot: &TaskSlot, a: &JudgeAssignment, submission: &Submission) -> Result<(), EvalError> {
        if slot.case_id != self.id {
            return Err(EvalError::InvalidInput(format!("slot belongs to case {}", slot.case_id)));
        }
        if !self.ready_slots(a).contains(slot) {
            return Err(EvalError::NotReady(slot.task_id()));
        }
        validate_submission(slot.kind, submission, a)?;
        let subject = || {
            slot.subject
                .clone()
                .ok_or_else(|| EvalError::InvalidInput("slot names no subject judge".into()))
        };
        match submission.clone() {
            Submission::PersonalityDescribing { descriptions } => {
                self.descriptions.insert(slot.judge.clone(), descriptions);
            }
            Submission::DescriptionScoring { verdicts } => {
                self.verdicts.entry(slot.judge.clone()).or_default().insert(subject()?, verdicts);
            }
            Submission::ReactionDescribing { reaction } => {
                self.reactions.insert(slot.judge.clone(), reaction);
            }
            Submission::SimilarityScoring { grade } => {
                self.grades.entry(slot.judge.clone()).or_default().insert(subject()?, grade);
            }
        }
        Ok(())
    }

    /// A matcher's description-matching points for this case.
    pub fn dms_points(&self, judge: &str, map: &VerdictMap) -> f64 {
        self.verdicts
            .get(judge)
            .map_or(0.0, |by| by.values().flatten().map(|x| map.value(*x)).sum())
    }

    /// A rater's similarity points for this case.
    pub fn rss_points(&self, judge: &str, map: &GradeMap) -> f64 {
        self.grades.get(judge).map_or(0.0, |g| g.values().map(|x| map.value(*x)).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgeTotal {
    pub judge: JudgeId,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubScore {
    pub judges: Vec<JudgeTotal>,
    pub average: f64,
    /// Agreement between the judges over cases; absent below two cases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObserverScore {
    pub dms_average: f64,
    pub rss_average: f64,
    pub final_score: f64,
}

/// The per-method score from raw judge totals: each sub-score is the mean
/// over its judges and the final score is their sum.
pub fn score_from_totals(dms_totals: &[f64], rss_totals: &[f64]) -> Result<ObserverScore, EvalError> {
    if dms_totals.is_empty() || rss_totals.is_empty() {
        return Err(EvalError::InvalidInput("each sub-score needs at least one judge".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let dms = mean(dms_totals);
    let rss = mean(rss_totals);
    Ok(ObserverScore {
        dms_average: dms,
        rss_average: rss,
        final_score: dms + rss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodScore {
    pub method: Method,
    pub cases: usize,
    pub dms: SubScore,
    pub rss: SubScore,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObserverReport {
    pub methods: Vec<MethodScore>,
}

impl ObserverReport {
    pub fn method(&self, m: Method) -> Option<&MethodScore> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Plain-text table, one row per method.
    pub fn table(&self) -> String {
        let Some(first) = self.methods.first() else {
            return String::new();
        };
        let icc = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let mut header = vec!["Method".to_string()];
        header.extend(first.dms.judges.iter().map(|j| format!("DMS {}", j.judge)));
        header.extend(["DMS avg".into(), "DMS ICC".into()]);
        header.extend(first.rss.judges.iter().map(|j| format!("RSS {}", j.judge)));
        header.extend(["RSS avg".into(), "RSS ICC".into(), "Final".into()]);
        let mut lines = vec![header.join(" | ")];
        for m in &self.methods {
            let mut row = vec![m.method.label().to_string()];
            row.extend(m.dms.judges.iter().map(|j| format!("{:.2}", j.total)));
            row.extend([format!("{:.2}", m.dms.average), icc(m.dms.icc)]);
            row.extend(m.rss.judges.iter().map(|j| format!("{:.2}", j.total)));
            row.extend([format!("{:.2}", m.rss.average), icc(m.rss.icc), format!("{:.2}", m.final_score)]);
            lines.push(row.join(" | "));
        }
        lines.join("\n") + "\n"
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AggregationConfig {
    pub grades: GradeMap,
    pub verdicts: VerdictMap,
    pub icc_form: IccForm,
}

fn sub_score(cases: &[&ObserverCase], judges: &[JudgeId], points: impl Fn(&ObserverCase, &str) -> f64, form: IccForm) -> SubScore {
    let columns: Vec<Vec<f64>> = judges
        .iter()
        .map(|j| cases.iter().map(|c| points(c, j)).collect())
        .collect();
    let totals: Vec<JudgeTotal> = judges
        .iter()
        .zip(&columns)
        .map(|(j, col)| JudgeTotal {
            judge: j.clone(),
            total: col.iter().sum(),
        })
        .collect();
    let average = totals.iter().map(|t| t.total).sum::<f64>() / totals.len() as f64;
    let icc = RatingsMatrix::from_columns(&columns)
        .ok()
        .and_then(|m| compute_icc_with(&m, form).ok());
    SubScore {
        judges: totals,
        average,
        icc,
    }
}

/// Per-method judge totals, averages, agreement and final score. Every case
/// must be fully judged.
pub fn aggregate_observer(
    cases: &[ObserverCase],
    assignment: &JudgeAssignment,
    config: &AggregationConfig,
) -> Result<ObserverReport, EvalError> {
    assignment.validate()?;
    let pending: Vec<String> = cases
        .iter()
        .filter(|c| !c.is_complete(assignment))
        .map(|c| c.id.clone())
        .collect();
    if !pending.is_empty() {
        return Err(EvalError::IncompleteJudging { pending });
    }
    let mut by_method: BTreeMap<Method, Vec<&ObserverCase>> = BTreeMap::new();
    for c in cases {
        by_method.entry(c.method).or_default().push(c);
    }
    let methods = by_method
        .into_iter()
        .map(|(method, cs)| {
            let dms = sub_score(&cs, &assignment.matchers, |c, j| c.dms_points(j, &config.verdicts), config.icc_form);
            let rss = sub_score(&cs, &assignment.raters, |c, j| c.rss_points(j, &config.grades), config.icc_form);
            MethodScore {
                method,
                cases: cs.len(),
                final_score: dms.average + rss.average,
                dms,
                rss,
            }
        })
        .collect();
    Ok(ObserverReport { methods })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SjtScenario {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SjtSuite {
    pub preamble: String,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<SjtScenario>,
}

impl SjtSuite {
    pub fn bundled() -> Self {
        toml::from_str(include_str!("../../data/sjt/placeholder.toml")).expect("bundled scenarios parse")
    }

    pub fn parse(raw: &str) -> Result<Self, EvalError> {
        let s: Self = toml::from_str(raw).map_err(|e| EvalError::Parse(e.to_string()))?;
        if s.scenarios.is_empty() {
            return Err(EvalError::InvalidInput("scenario suite is empty".into()));
        }
        Ok(s)
    }
}

/// Puts every scenario to a simulacrum, each in a fresh session, and opens a
/// case per answer.
pub fn collect_cases(sim: &mut dyn Simulacrum, suite: &SjtSuite, salt: u64) -> Result<Vec<ObserverCase>, EvalError> {
    let character = sim.character().slug();
    let method = sim.method();
    suite
        .scenarios
        .iter()
        .map(|s| {
            sim.reset();
            let text = format!("{}\n{}", suite.preamble, s.text);
            let response = sim.respond(&Stimulus::new(&text).with_phase("sjt"))?;
            Ok(ObserverCase::new(&character, method, &s.id, &s.text, &response, salt))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reaction() -> String {
        "word ".repeat(120)
    }

    fn judged_case(method: Method, idx: usize, grade: Grade) -> ObserverCase {
        let a = JudgeAssignment::default();
        let mut c = ObserverCase::new("x", method, &format!("s{idx}"), "scenario", "response", 0);
        for s in c.ready_slots(&a) {
            let sub = match s.kind {
                JudgingKind::PersonalityDescribing => Submission::PersonalityDescribing {
                    descriptions: (0..5).map(|i| format!("d{i}")).collect(),
                },
                JudgingKind::ReactionDescribing => Submission::ReactionDescribing { reaction: reaction() },
                _ => unreachable!("only initial tasks are ready"),
            };
            c.apply(&s, &a, &sub).unwrap();
        }
        for s in c.ready_slots(&a) {
            let sub = match s.kind {
                JudgingKind::DescriptionScoring => Submission::DescriptionScoring {
                    verdicts: vec![MatchVerdict::Correct; 5],
                },
                JudgingKind::SimilarityScoring => Submission::SimilarityScoring { grade },
                _ => unreachable!(),
            };
            c.apply(&s, &a, &sub).unwrap();
        }
        assert!(c.is_complete(&a));
        c
    }

    #[test]
    fn table_rows_from_totals() {
        let rows = [([32.0, 33.0], [39.0, 34.0], 69.0), ([39.0, 36.0], [28.0, 28.0], 65.5), ([35.0, 36.0], [41.0, 43.0], 77.5)];
        for (dms, rss, fin) in rows {
            assert_eq!(score_from_totals(&dms, &rss).unwrap().final_score, fin);
        }
        let s = score_from_totals(&[32.0, 33.0], &[39.0, 34.0]).unwrap();
        assert_eq!((s.dms_average, s.rss_average), (32.5, 36.5));
        assert_eq!(score_from_totals(&[0.0, 0.0], &[0.0, 0.0]).unwrap().final_score, 0.0);
    }

    #[test]
    fn task_flow_and_shapes() {
        let a = JudgeAssignment::default();
        let mut c = ObserverCase::new("x", Method::Macm, "s1", "scenario", "response", 0);
        let kinds: Vec<_> = c.ready_slots(&a).iter().map(|s| s.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == JudgingKind::PersonalityDescribing).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == JudgingKind::ReactionDescribing).count(), 2);
        let pd = c.ready_slots(&a)[0].clone();
        let four = Submission::PersonalityDescribing {
            descriptions: vec!["a".into(); 4],
        };
        assert!(matches!(c.apply(&pd, &a, &four), Err(EvalError::ShapeMismatch(_))));
        let wrong = Submission::SimilarityScoring { grade: Grade::A };
        assert!(matches!(c.apply(&pd, &a, &wrong), Err(EvalError::ShapeMismatch(_))));
        let five = Submission::PersonalityDescribing {
            descriptions: vec!["a".into(); 5],
        };
        c.apply(&pd, &a, &five).unwrap();
        assert!(matches!(c.apply(&pd, &a, &five), Err(EvalError::NotReady(_))));
        let short = Submission::ReactionDescribing { reaction: "too short".into() };
        let rd = c.ready_slots(&a).into_iter().find(|s| s.kind == JudgingKind::ReactionDescribing).unwrap();
        assert!(c.apply(&rd, &a, &short).is_err());
        assert!(Submission::from_json(&serde_json::json!({"kind": "similarity-scoring", "grade": "F"})).is_err());
        let ok = Submission::from_json(&serde_json::json!({"kind": "similarity-scoring", "grade": "B"})).unwrap();
        assert_eq!(ok, Submission::SimilarityScoring { grade: Grade::B });
    }

    #[test]
    fn payloads_are_blind() {
        let a = JudgeAssignment::default();
        let c = ObserverCase::new("x", Method::Rag, "s1", "scenario", "response", 0);
        for s in c.ready_slots(&a) {
            let v = serde_json::to_string(&c.payload(&s, Some("target"))).unwrap();
            assert!(!v.contains("RAG") && !v.contains("rag"));
            assert!(!s.task_id().contains("rag"));
        }
    }

    #[test]
    fn aggregation() {
        let a = JudgeAssignment::default();
        let cases = vec![
            judged_case(Method::Prompt, 0, Grade::B),
            judged_case(Method::Prompt, 1, Grade::C),
            judged_case(Method::Macm, 0, Grade::A),
        ];
        let r = aggregate_observer(&cases, &a, &AggregationConfig::default()).unwrap();
        let p = r.method(Method::Prompt).unwrap();
        assert_eq!(p.dms.average, 20.0);
        // Two reactions graded per rater per case.
        assert_eq!(p.rss.judges[0].total, 2.0 * 0.75 + 2.0 * 0.5);
        assert_eq!(p.final_score, p.dms.average + p.rss.average);
        assert!(r.table().contains("MACM"));

        let mut open = cases.clone();
        open.push(ObserverCase::new("x", Method::Rag, "s9", "q", "r", 0));
        match aggregate_observer(&open, &a, &AggregationConfig::default()) {
            Err(EvalError::IncompleteJudging { pending }) => assert_eq!(pending, vec![open[3].id.clone()]),
            other => panic!("expected incomplete judging, got {other:?}"),
        }
    }
}

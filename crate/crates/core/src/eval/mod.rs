//! Scoring of simulacra: the self-report questionnaire, observer judging
//! with inter-rater agreement, and the scenario suite behind it.

mod answer;
mod icc;
mod observer;
mod questionnaire;
mod selfreport;

pub use answer::{cloze_matches, extract_date, normalize_cloze, parse_answer, ParsedAnswer};
pub use icc::{compute_icc, compute_icc_with, mean_squares, IccForm, MeanSquares, RatingsMatrix};
pub use observer::{
    aggregate_observer, blind_case_id, collect_cases, score_from_totals, validate_submission, AggregationConfig, Grade,
    GradeMap, JudgeAssignment, JudgeId, JudgeTotal, JudgingKind, MatchVerdict, MethodScore, ObserverCase,
    ObserverReport, ObserverScore, SjtScenario, SjtSuite, SubScore, Submission, TaskPayload, TaskSlot, VerdictMap,
};
pub use questionnaire::{
    generate_questionnaire, item_stimulus, wording, AnswerKey, PointScheme, QuestionKind, QuestionOption,
    Questionnaire, QuestionnaireItem, Wording,
};
pub use selfreport::{average_runs, run_self_report, score_self_report, ItemOutcome, ScoreBreakdown, SelfReportScore};

use crate::macm::MacmError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unparseable answer {0:?}")]
    Unparseable(String),
    #[error("expected {expected} responses, got {got}")]
    ItemCountMismatch { expected: usize, got: usize },
    #[error("invalid item {id}: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("judging incomplete for {} case(s)", pending.len())]
    IncompleteJudging { pending: Vec<String> },
    #[error("task {0} is not open")]
    NotReady(String),
    #[error("degenerate ratings: {0}")]
    DegenerateMatrix(String),
    #[error("invalid ratings matrix: {0}")]
    InvalidMatrix(String),
    #[error("submission shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Simulacrum(#[from] MacmError),
}

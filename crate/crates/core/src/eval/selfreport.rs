use serde::{Deserialize, Serialize};

use super::answer::{cloze_matches, parse_answer, ParsedAnswer};
use super::questionnaire::{item_stimulus, AnswerKey, QuestionKind, Questionnaire};
use super::EvalError;
use crate::simulacrum::{Simulacrum, Stimulus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub cloze: f64,
    #[serde(rename = "sc")]
    pub single_choice: f64,
    #[serde(rename = "mc")]
    pub multiple_choice: f64,
    pub sum: f64,
}

impl ScoreBreakdown {
    fn add(&mut self, kind: QuestionKind, points: f64) {
        match kind {
            QuestionKind::Cloze => self.cloze += points,
            QuestionKind::SingleChoice => self.single_choice += points,
            QuestionKind::MultipleChoice => self.multiple_choice += points,
        }
        self.sum = self.cloze + self.single_choice + self.multiple_choice;
    }

    /// Two-decimal rendering in column order.
    pub fn columns(&self) -> [String; 4] {
        [self.cloze, self.single_choice, self.multiple_choice, self.sum].map(|v| format!("{v:.2}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemOutcome {
    pub id: String,
    pub kind: QuestionKind,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedAnswer>,
    pub correct: bool,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelfReportScore {
    pub breakdown: ScoreBreakdown,
    pub items: Vec<ItemOutcome>,
}

/// Exact-match scoring, one response per item in questionnaire order.
/// Unparseable replies score zero.
pub fn score_self_report(responses: &[String], questionnaire: &Questionnaire) -> Result<SelfReportScore, EvalError> {
    if responses.len() != questionnaire.items.len() {
        return Err(EvalError::ItemCountMismatch {
            expected: questionnaire.items.len(),
            got: responses.len(),
        });
    }
    let mut breakdown = ScoreBreakdown::default();
    let mut items = Vec::with_capacity(responses.len());
    for (item, response) in questionnaire.items.iter().zip(responses) {
        let parsed = parse_answer(response, item).ok();
        let correct = match (&parsed, &item.answer_key) {
            (Some(ParsedAnswer::Text(a)), AnswerKey::One(k)) => cloze_matches(a, k),
            (Some(ParsedAnswer::Choice(a)), AnswerKey::One(k)) => a == k,
            (Some(ParsedAnswer::Choices(a)), AnswerKey::Many(k)) => a == k,
            _ => false,
        };
        let points = if correct { item.points } else { 0.0 };
        breakdown.add(item.kind, points);
        items.push(ItemOutcome {
            id: item.id.clone(),
            kind: item.kind,
            response: response.clone(),
            parsed,
            correct,
            points,
        });
    }
    Ok(SelfReportScore { breakdown, items })
}

/// Column-wise mean of several runs.
pub fn average_runs(runs: &[ScoreBreakdown]) -> Result<ScoreBreakdown, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::InvalidInput("no runs to average".into()));
    }
    let n = runs.len() as f64;
    let mean = |f: fn(&ScoreBreakdown) -> f64| runs.iter().map(f).sum::<f64>() / n;
    Ok(ScoreBreakdown {
        cloze: mean(|r| r.cloze),
        single_choice: mean(|r| r.single_choice),
        multiple_choice: mean(|r| r.multiple_choice),
        sum: mean(|r| r.sum),
    })
}

/// Asks every item, each in a fresh session so earlier answers cannot leak
/// into later ones. The spoken key travels as `answer_key` context for mock
/// fixtures only.
pub fn run_self_report(sim: &mut dyn Simulacrum, questionnaire: &Questionnaire) -> Result<Vec<String>, EvalError> {
    questionnaire
        .items
        .iter()
        .map(|item| {
            sim.reset();
            let stimulus = Stimulus::new(&item_stimulus(item)).with_context("answer_key", item.answer_key.spoken());
            Ok(sim.respond(&stimulus)?)
        })
        .collect()
}

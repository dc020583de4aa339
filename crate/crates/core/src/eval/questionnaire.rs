use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::character::{AttributePools, CharacterProfile, TraitPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionKind {
    Cloze,
    SingleChoice,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOption {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerKey {
    One(String),
    Many(BTreeSet<String>),
}

impl AnswerKey {
    /// The key as a respondent would state it.
    pub fn spoken(&self) -> String {
        match self {
            Self::One(s) => s.clone(),
            Self::Many(set) => {
                let v: Vec<&str> = set.iter().map(String::as_str).collect();
                match v.as_slice() {
                    [] => String::new(),
                    [one] => one.to_string(),
                    [init @ .., last] => format!("{} and {}", init.join(", "), last),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionnaireItem {
    pub id: String,
    pub kind: QuestionKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<QuestionOption>,
    pub answer_key: AnswerKey,
    pub points: f64,
}

impl QuestionnaireItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: &str| EvalError::InvalidItem {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if !(self.points > 0.0 && self.points.is_finite()) {
            return Err(bad("points must be positive"));
        }
        if self.prompt.trim().is_empty() {
            return Err(bad("prompt is empty"));
        }
        let labels: BTreeSet<&str> = self.options.iter().map(|o| o.label.as_str()).collect();
        if labels.len() != self.options.len() {
            return Err(bad("option labels repeat"));
        }
        if self.options.iter().any(|o| o.label.len() != 1 || !o.label.chars().all(|c| c.is_ascii_uppercase())) {
            return Err(bad("option labels must be single capital letters"));
        }
        match (self.kind, &self.answer_key) {
            (QuestionKind::Cloze, AnswerKey::One(k)) if !k.trim().is_empty() && self.options.is_empty() => Ok(()),
            (QuestionKind::Cloze, _) => Err(bad("cloze items need a text key and no options")),
            (QuestionKind::SingleChoice, AnswerKey::One(k)) if labels.contains(k.as_str()) => Ok(()),
            (QuestionKind::SingleChoice, _) => Err(bad("single-choice key must be one of the options")),
            (QuestionKind::MultipleChoice, AnswerKey::Many(ks))
                if !ks.is_empty() && ks.iter().all(|k| labels.contains(k.as_str())) =>
            {
                Ok(())
            }
            (QuestionKind::MultipleChoice, _) => Err(bad("multiple-choice key must be a non-empty subset of the options")),
        }
    }

    pub fn option_labels(&self) -> BTreeSet<String> {
        self.options.iter().map(|o| o.label.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Questionnaire {
    pub character: String,
    pub items: Vec<QuestionnaireItem>,
}

impl Questionnaire {
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut ids = BTreeSet::new();
        for item in &self.items {
            if !ids.insert(item.id.as_str()) {
                return Err(EvalError::InvalidItem {
                    id: item.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            item.validate()?;
        }
        Ok(())
    }

    pub fn max_points(&self, kind: QuestionKind) -> f64 {
        self.items.iter().filter(|i| i.kind == kind).map(|i| i.points).sum()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let raw = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
        let q: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&raw).map_err(|e| EvalError::Parse(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&raw).map_err(|e| EvalError::Parse(format!("{}: {e}", path.display())))?
        };
        q.validate()?;
        Ok(q)
    }
}

/// Points per item of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointScheme {
    pub cloze: f64,
    pub single_choice: f64,
    pub multiple_choice: f64,
}

impl Default for PointScheme {
    fn default() -> Self {
        Self {
            cloze: 4.0,
            single_choice: 4.0,
            multiple_choice: 12.0,
        }
    }
}

impl PointScheme {
    pub fn for_kind(&self, kind: QuestionKind) -> f64 {
        match kind {
            QuestionKind::Cloze => self.cloze,
            QuestionKind::SingleChoice => self.single_choice,
            QuestionKind::MultipleChoice => self.multiple_choice,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Wording {
    pub instructions: BTreeMap<String, String>,
    pub cloze: BTreeMap<String, String>,
    pub single_choice: BTreeMap<String, String>,
    pub multiple_choice: BTreeMap<String, String>,
    pub statements: BTreeMap<String, String>,
}

static WORDING: LazyLock<Wording> = LazyLock::new(|| {
    toml::from_str(include_str!("../../data/questionnaire/default.toml")).expect("bundled questionnaire wording parses")
});

pub fn wording() -> &'static Wording {
    &WORDING
}

fn word(map: &BTreeMap<String, String>, key: &str) -> String {
    map.get(key).cloned().unwrap_or_else(|| panic!("bundled wording lacks {key:?}"))
}

/// The stimulus text a simulacrum sees for `item`.
pub fn item_stimulus(item: &QuestionnaireItem) -> String {
    let key = match item.kind {
        QuestionKind::Cloze => "cloze",
        QuestionKind::SingleChoice => "single_choice",
        QuestionKind::MultipleChoice => "multiple_choice",
    };
    let mut s = format!("{}\n{}", word(&WORDING.instructions, key), item.prompt);
    if !item.options.is_empty() {
        let opts: Vec<String> = item.options.iter().map(|o| format!("{}. {}", o.label, o.text)).collect();
        s.push_str("\nOptions: ");
        s.push_str(&opts.join(" "));
    }
    s
}

const LABELS: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

fn choice_item(
    id: &str,
    kind: QuestionKind,
    prompt: String,
    truths: Vec<String>,
    distractors: Vec<String>,
    points: f64,
    rng: &mut ChaCha8Rng,
) -> QuestionnaireItem {
    let mut opts: Vec<(String, bool)> = truths
        .into_iter()
        .map(|t| (t, true))
        .chain(distractors.into_iter().map(|d| (d, false)))
        .collect();
    opts.shuffle(rng);
    let options: Vec<QuestionOption> = opts
        .iter()
        .zip(LABELS)
        .map(|((text, _), l)| QuestionOption {
            label: l.to_string(),
            text: text.clone(),
        })
        .collect();
    let keys: BTreeSet<String> = opts
        .iter()
        .zip(LABELS)
        .filter(|((_, t), _)| *t)
        .map(|(_, l)| l.to_string())
        .collect();
    let answer_key = match kind {
        QuestionKind::SingleChoice => AnswerKey::One(keys.into_iter().next().expect("one true option")),
        _ => AnswerKey::Many(keys),
    };
    QuestionnaireItem {
        id: id.to_string(),
        kind,
        prompt,
        options,
        answer_key,
        points,
    }
}

fn distractors(pool: &[String], exclude: &[String], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>, EvalError> {
    let candidates: Vec<&String> = pool.iter().filter(|p| !exclude.contains(p)).collect();
    if candidates.len() < n {
        return Err(EvalError::InvalidItem {
            id: "generator".into(),
            reason: format!("pool offers {} distractors, {n} needed", candidates.len()),
        });
    }
    Ok(candidates.choose_multiple(rng, n).map(|s| (*s).clone()).collect())
}

fn statement(key: &str, value: &str) -> String {
    word(&WORDING.statements, key).replace("{value}", value)
}

/// A 5 cloze / 5 single-choice / 5 multiple-choice questionnaire built from
/// the character's attributes, with distractors drawn from the pools.
pub fn generate_questionnaire(
    profile: &CharacterProfile,
    pools: &AttributePools,
    traits: &TraitPool,
    scheme: &PointScheme,
    seed: u64,
) -> Result<Questionnaire, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &*WORDING;
    let mut items = Vec::new();

    let cloze = [
        ("name", profile.name.clone()),
        ("gender", profile.gender.to_string()),
        ("age", profile.age.to_string()),
        ("birthday", profile.date_of_birth.format("%Y-%m-%d").to_string()),
        ("occupation", profile.occupation.clone()),
    ];
    for (key, answer) in cloze {
        items.push(QuestionnaireItem {
            id: format!("cloze-{key}"),
            kind: QuestionKind::Cloze,
            prompt: word(&w.cloze, key),
            options: Vec::new(),
            answer_key: AnswerKey::One(answer),
            points: scheme.cloze,
        });
    }

    let sc = QuestionKind::SingleChoice;
    let one = |v: &String| vec![v.clone()];
    let hobby = profile.hobbies.choose(&mut rng).cloned().unwrap_or_default();
    let specs: [(&str, String, &[String], Vec<String>); 5] = [
        ("family", profile.family.clone(), &pools.families, one(&profile.family)),
        ("education", profile.education.clone(), &pools.educations, one(&profile.education)),
        ("long_term_goal", profile.long_term_goal.clone(), &pools.long_term_goals, one(&profile.long_term_goal)),
        ("occupation", profile.occupation.clone(), &pools.occupations, one(&profile.occupation)),
        ("hobby", hobby, &pools.hobbies, profile.hobbies.clone()),
    ];
    for (key, truth, pool, exclude) in specs {
        let d = distractors(pool, &exclude, 3, &mut rng)?;
        items.push(choice_item(
            &format!("sc-{key}"),
            sc,
            word(&w.single_choice, key),
            vec![truth],
            d,
            scheme.single_choice,
            &mut rng,
        ));
    }

    let mc = QuestionKind::MultipleChoice;
    let d = distractors(&pools.hobbies, &profile.hobbies, 3, &mut rng)?;
    items.push(choice_item("mc-hobbies", mc, word(&w.multiple_choice, "hobbies"), profile.hobbies.clone(), d, scheme.multiple_choice, &mut rng));

    let d = distractors(&pools.short_term_goals, &profile.short_term_goals, 3, &mut rng)?;
    items.push(choice_item(
        "mc-short_term_goals",
        mc,
        word(&w.multiple_choice, "short_term_goals"),
        profile.short_term_goals.clone(),
        d,
        scheme.multiple_choice,
        &mut rng,
    ));

    // True: traits of the dominant tendency. False: what the dominant cell
    // would say about the weakest tendency.
    let ranking = &profile.personality.ranking;
    let top: Vec<String> = profile
        .personality
        .selected_descriptions
        .get(&1)
        .map(|v| v.choose_multiple(&mut rng, 3).cloned().collect())
        .unwrap_or_default();
    let weakest = traits.cell(ranking.at_rank(8), 1).to_vec();
    let d = distractors(&weakest, &top, 3, &mut rng)?;
    items.push(choice_item("mc-traits", mc, word(&w.multiple_choice, "traits"), top, d, scheme.multiple_choice, &mut rng));

    let mut false_bg: Vec<String> = distractors(&pools.families, std::slice::from_ref(&profile.family), 2, &mut rng)?
        .into_iter()
        .map(|f| statement("family", &f))
        .collect();
    false_bg.extend(
        distractors(&pools.educations, std::slice::from_ref(&profile.education), 2, &mut rng)?
            .into_iter()
            .map(|e| statement("education", &e)),
    );
    items.push(choice_item(
        "mc-background",
        mc,
        word(&w.multiple_choice, "background"),
        vec![statement("family", &profile.family), statement("education", &profile.education)],
        false_bg,
        scheme.multiple_choice,
        &mut rng,
    ));

    let mut false_now: Vec<String> = distractors(&pools.occupations, std::slice::from_ref(&profile.occupation), 2, &mut rng)?
        .into_iter()
        .map(|o| statement("occupation", &o))
        .collect();
    false_now.extend(
        distractors(&pools.long_term_goals, std::slice::from_ref(&profile.long_term_goal), 2, &mut rng)?
            .into_iter()
            .map(|g| statement("long_term_goal", &g)),
    );
    items.push(choice_item(
        "mc-present",
        mc,
        word(&w.multiple_choice, "present"),
        vec![
            statement("occupation", &profile.occupation),
            statement("long_term_goal", &profile.long_term_goal),
        ],
        false_now,
        scheme.multiple_choice,
        &mut rng,
    ));

    let q = Questionnaire {
        character: profile.slug(),
        items,
    };
    q.validate()?;
    Ok(q)
}

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{Datelike, Duration, Months, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::personality::{select_traits_with, PersonalityAssignment, Ranking, TraitPool, RANK_COUNTS, TRAIT_TOTAL};
use super::pools::{AttributePools, NameList};
use super::CharacterError;

pub const HOBBY_COUNT: usize = 3;
pub const SHORT_TERM_GOAL_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

/// Date against which ages are computed unless a caller supplies another.
pub fn default_reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CharacterProfile {
    pub name: String,
    pub gender: Gender,
    pub age: u32,
    pub date_of_birth: NaiveDate,
    /// The date `age` is measured at.
    pub reference_date: NaiveDate,
    pub occupation: String,
    pub hobbies: Vec<String>,
    pub family: String,
    pub education: String,
    pub short_term_goals: Vec<String>,
    pub long_term_goal: String,
    pub personality: PersonalityAssignment,
}

impl CharacterProfile {
    /// Filesystem-safe identifier derived from the name.
    pub fn slug(&self) -> String {
        slugify(&self.name)
    }

    /// The attribute block bound as `{basic_information}` in prompts.
    pub fn basic_information(&self) -> String {
        let traits: Vec<&str> = self.personality.all_descriptions().collect();
        format!(
            "Gender: {}\nName: {}\nAge: {}\nDate of Birth: {}\nOccupation: {}\nTraits: {}\nHobbies: {}\nFamily: {}\nEducation: {}\nShort-term Goals: {}\nLong-term Goal: {}",
            self.gender,
            self.name,
            self.age,
            self.date_of_birth.format("%Y-%m-%d"),
            self.occupation,
            traits.join(" "),
            self.hobbies.join(", "),
            self.family,
            self.education,
            self.short_term_goals.join(", "),
            self.long_term_goal,
        )
    }

    /// Individual attribute values keyed by name, for fixtures and custom
    /// templates that need more than `{basic_information}`.
    pub fn attribute_bindings(&self) -> BTreeMap<String, String> {
        let (pronoun, possessive) = match self.gender {
            Gender::Female => ("she", "her"),
            Gender::Male => ("he", "his"),
        };
        let first = self.name.split_whitespace().next().unwrap_or(&self.name);
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("name", self.name.clone());
        put("first_name", first.to_string());
        put("pronoun", pronoun.to_string());
        put("possessive", possessive.to_string());
        put("gender", self.gender.to_string());
        put("age", self.age.to_string());
        put("date_of_birth", self.date_of_birth.format("%Y-%m-%d").to_string());
        put("birth_year", self.date_of_birth.year().to_string());
        put("occupation", self.occupation.clone());
        put("hobbies", self.hobbies.join(", "));
        for (i, h) in self.hobbies.iter().enumerate() {
            put(&format!("hobby_{}", i + 1), h.clone());
        }
        put("family", self.family.clone());
        put("education", self.education.clone());
        put("short_term_goals", self.short_term_goals.join(", "));
        for (i, g) in self.short_term_goals.iter().enumerate() {
            put(&format!("short_term_goal_{}", i + 1), g.clone());
        }
        put("long_term_goal", self.long_term_goal.clone());
        m
    }
}

pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

/// Age in whole years on `at` for someone born on `dob`.
pub fn age_on(dob: NaiveDate, at: NaiveDate) -> i64 {
    let mut years = at.year() as i64 - dob.year() as i64;
    if (at.month(), at.day()) < (dob.month(), dob.day()) {
        years -= 1;
    }
    years
}

/// Samples a draft profile with the bundled name list and the default
/// reference date.
pub fn sample_profile(
    pools: &AttributePools,
    traits: &TraitPool,
    seed: u64,
) -> Result<CharacterProfile, CharacterError> {
    sample_profile_at(pools, traits, &NameList::bundled(), seed, default_reference_date())
}

pub fn sample_profile_at(
    pools: &AttributePools,
    traits: &TraitPool,
    names: &NameList,
    seed: u64,
    reference_date: NaiveDate,
) -> Result<CharacterProfile, CharacterError> {
    pools.validate()?;
    traits.validate()?;
    require(pools.hobbies.len(), HOBBY_COUNT, "hobbies")?;
    require(pools.short_term_goals.len(), SHORT_TERM_GOAL_COUNT, "shortTermGoals")?;
    require(pools.occupations.len(), 1, "occupations")?;
    require(pools.families.len(), 1, "families")?;
    require(pools.educations.len(), 1, "educations")?;
    require(pools.long_term_goals.len(), 1, "longTermGoals")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
    let first_names = match gender {
        Gender::Female => &names.female,
        Gender::Male => &names.male,
    };
    require(first_names.len(), 1, "names")?;
    require(names.surnames.len(), 1, "surnames")?;
    let name = format!(
        "{} {}",
        first_names.choose(&mut rng).expect("non-empty"),
        names.surnames.choose(&mut rng).expect("non-empty")
    );
    let age = rng.random_range(pools.age_range.min..=pools.age_range.max);
    let date_of_birth = sample_birth_date(age, reference_date, &mut rng);
    let pick = |rng: &mut ChaCha8Rng, pool: &[String]| pool.choose(rng).expect("non-empty").clone();
    let occupation = pick(&mut rng, &pools.occupations);
    let hobbies = pools.hobbies.choose_multiple(&mut rng, HOBBY_COUNT).cloned().collect();
    let family = pick(&mut rng, &pools.families);
    let education = pick(&mut rng, &pools.educations);
    let short_term_goals = pools
        .short_term_goals
        .choose_multiple(&mut rng, SHORT_TERM_GOAL_COUNT)
        .cloned()
        .collect();
    let long_term_goal = pick(&mut rng, &pools.long_term_goals);
    let ranking = Ranking::random(&mut rng);
    let personality = select_traits_with(&ranking, traits, &mut rng)?;

    Ok(CharacterProfile {
        name,
        gender,
        age,
        date_of_birth,
        reference_date,
        occupation,
        hobbies,
        family,
        education,
        short_term_goals,
        long_term_goal,
        personality,
    })
}

fn require(available: usize, needed: usize, pool: &str) -> Result<(), CharacterError> {
    if available < needed {
        return Err(CharacterError::PoolTooSmall {
            pool: pool.to_string(),
            needed,
            available,
        });
    }
    Ok(())
}

/// Uniform over the days on which a person turns `age` relative to
/// `reference` (born after `reference - (age + 1)` years, on or before
/// `reference - age` years).
fn sample_birth_date(age: u32, reference: NaiveDate, rng: &mut ChaCha8Rng) -> NaiveDate {
    let latest = reference
        .checked_sub_months(Months::new(12 * age))
        .expect("date in range");
    let earliest = reference
        .checked_sub_months(Months::new(12 * (age + 1)))
        .expect("date in range")
        + Duration::days(1);
    let span = (latest - earliest).num_days();
    let dob = earliest + Duration::days(rng.random_range(0..=span));
    debug_assert_eq!(age_on(dob, reference), age as i64);
    dob
}

/// One broken profile rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(field: &str, rule: &str, detail: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.field, self.rule, self.detail)
    }
}

pub fn validate_profile(p: &CharacterProfile, pools: &AttributePools, traits: &TraitPool) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.name.trim().is_empty() {
        out.push(Violation::new("name", "non-empty", "name is blank"));
    }
    if !pools.age_range.contains(p.age) {
        out.push(Violation::new(
            "age",
            "age-range",
            format!("{} outside [{}, {}]", p.age, pools.age_range.min, pools.age_range.max),
        ));
    }
    let actual = age_on(p.date_of_birth, p.reference_date);
    if actual != p.age as i64 {
        out.push(Violation::new(
            "dateOfBirth",
            "dob-age",
            format!("born {} is {actual} on {}, profile says {}", p.date_of_birth, p.reference_date, p.age),
        ));
    }
    member(&mut out, "occupation", &p.occupation, &pools.occupations);
    member(&mut out, "family", &p.family, &pools.families);
    member(&mut out, "education", &p.education, &pools.educations);
    member(&mut out, "longTermGoal", &p.long_term_goal, &pools.long_term_goals);
    multi(&mut out, "hobbies", &p.hobbies, HOBBY_COUNT, &pools.hobbies);
    multi(&mut out, "shortTermGoals", &p.short_term_goals, SHORT_TERM_GOAL_COUNT, &pools.short_term_goals);

    let personality = &p.personality;
    let counts = personality.count_vector();
    if counts != RANK_COUNTS {
        out.push(Violation::new(
            "personality.selectedDescriptions",
            "rank-counts",
            format!("count vector {counts:?}, expected {RANK_COUNTS:?}"),
        ));
    }
    let total = personality.all_descriptions().count();
    if total != TRAIT_TOTAL {
        out.push(Violation::new(
            "personality.selectedDescriptions",
            "trait-count",
            format!("{total} descriptions, expected {TRAIT_TOTAL}"),
        ));
    }
    if let Some(bad) = personality.selected_descriptions.keys().find(|r| !(1..=8).contains(*r)) {
        out.push(Violation::new(
            "personality.selectedDescriptions",
            "rank-range",
            format!("rank {bad} outside 1..=8"),
        ));
    }
    let mut seen = HashSet::new();
    for (rank, descs) in &personality.selected_descriptions {
        if !(1..=8).contains(rank) {
            continue;
        }
        let tendency = personality.ranking.at_rank(*rank);
        let cell = traits.cell(tendency, *rank);
        for d in descs {
            if !cell.contains(d) {
                out.push(Violation::new(
                    "personality.selectedDescriptions",
                    "cell-membership",
                    format!("{d:?} is not in cell ({tendency}, {rank})"),
                ));
            }
            if !seen.insert(d.as_str()) {
                out.push(Violation::new(
                    "personality.selectedDescriptions",
                    "duplicate",
                    format!("{d:?} selected twice"),
                ));
            }
        }
    }
    out
}

fn member(out: &mut Vec<Violation>, field: &str, value: &str, pool: &[String]) {
    if !pool.iter().any(|v| v == value) {
        out.push(Violation::new(field, "pool-membership", format!("{value:?} is not in the pool")));
    }
}

fn multi(out: &mut Vec<Violation>, field: &str, values: &[String], count: usize, pool: &[String]) {
    if values.len() != count {
        out.push(Violation::new(
            field,
            "multiplicity",
            format!("{} values, expected {count}", values.len()),
        ));
    }
    let distinct: HashSet<&String> = values.iter().collect();
    if distinct.len() != values.len() {
        out.push(Violation::new(field, "duplicate", "repeated value"));
    }
    for v in values {
        member(out, field, v, pool);
    }
}

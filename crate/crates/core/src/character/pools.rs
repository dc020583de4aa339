use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CharacterError;

/// Inclusive age interval a character may be sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRange {
    pub min: u32,
    pub max: u32,
}

impl AgeRange {
    pub fn span(&self) -> u32 {
        self.max - self.min
    }

    pub fn contains(&self, age: u32) -> bool {
        (self.min..=self.max).contains(&age)
    }
}

/// Candidate values for every pool-drawn attribute of a character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributePools {
    pub occupations: Vec<String>,
    pub hobbies: Vec<String>,
    pub families: Vec<String>,
    pub educations: Vec<String>,
    pub short_term_goals: Vec<String>,
    pub long_term_goals: Vec<String>,
    pub age_range: AgeRange,
}

/// On-disk file name of each list pool, in a pool directory.
const POOL_FILES: [&str; 6] = [
    "occupations",
    "hobbies",
    "families",
    "educations",
    "short_term_goals",
    "long_term_goals",
];
const AGE_RANGE_FILE: &str = "age_range.json";

impl AttributePools {
    /// The pools shipped with the crate (76 occupations, 50 hobbies, 12
    /// families, 9 educations, 30 short-term and 30 long-term goals).
    pub fn bundled() -> Self {
        fn list(raw: &str) -> Vec<String> {
            serde_json::from_str(raw).expect("bundled pool is valid JSON")
        }
        Self {
            occupations: list(include_str!("../../data/pools/occupations.json")),
            hobbies: list(include_str!("../../data/pools/hobbies.json")),
            families: list(include_str!("../../data/pools/families.json")),
            educations: list(include_str!("../../data/pools/educations.json")),
            short_term_goals: list(include_str!("../../data/pools/short_term_goals.json")),
            long_term_goals: list(include_str!("../../data/pools/long_term_goals.json")),
            age_range: serde_json::from_str(include_str!("../../data/pools/age_range.json"))
                .expect("bundled age range is valid JSON"),
        }
    }

    /// Loads a pool directory: one JSON array file per pool plus
    /// `age_range.json`.
    pub fn load_dir(dir: &Path) -> Result<Self, CharacterError> {
        let read_list = |name: &str| -> Result<Vec<String>, CharacterError> {
            let path = dir.join(format!("{name}.json"));
            let raw = fs::read_to_string(&path).map_err(|e| CharacterError::io(&path, e))?;
            serde_json::from_str(&raw).map_err(|e| CharacterError::parse(&path, e))
        };
        let age_path = dir.join(AGE_RANGE_FILE);
        let age_raw = fs::read_to_string(&age_path).map_err(|e| CharacterError::io(&age_path, e))?;
        let pools = Self {
            occupations: read_list(POOL_FILES[0])?,
            hobbies: read_list(POOL_FILES[1])?,
            families: read_list(POOL_FILES[2])?,
            educations: read_list(POOL_FILES[3])?,
            short_term_goals: read_list(POOL_FILES[4])?,
            long_term_goals: read_list(POOL_FILES[5])?,
            age_range: serde_json::from_str(&age_raw).map_err(|e| CharacterError::parse(&age_path, e))?,
        };
        pools.validate()?;
        Ok(pools)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CharacterError> {
        fs::create_dir_all(dir).map_err(|e| CharacterError::io(dir, e))?;
        for (name, list) in POOL_FILES.iter().zip(self.lists()) {
            let path = dir.join(format!("{name}.json"));
            let body = serde_json::to_string_pretty(list).expect("string list serializes");
            fs::write(&path, body + "\n").map_err(|e| CharacterError::io(&path, e))?;
        }
        let path = dir.join(AGE_RANGE_FILE);
        let body = serde_json::to_string(&self.age_range).expect("age range serializes");
        fs::write(&path, body).map_err(|e| CharacterError::io(&path, e))
    }

    fn lists(&self) -> [&Vec<String>; 6] {
        [
            &self.occupations,
            &self.hobbies,
            &self.families,
            &self.educations,
            &self.short_term_goals,
            &self.long_term_goals,
        ]
    }

    /// Checks the pool invariants: non-empty, duplicate-free, ordered age range.
    pub fn validate(&self) -> Result<(), CharacterError> {
        for (name, list) in POOL_FILES.iter().zip(self.lists()) {
            if list.is_empty() {
                return Err(CharacterError::InvalidPool {
                    pool: name.to_string(),
                    reason: "pool is empty".into(),
                });
            }
            let mut seen = HashSet::new();
            if let Some(dup) = list.iter().find(|v| !seen.insert(v.as_str())) {
                return Err(CharacterError::InvalidPool {
                    pool: name.to_string(),
                    reason: format!("duplicate entry {dup:?}"),
                });
            }
        }
        if self.age_range.min > self.age_range.max {
            return Err(CharacterError::InvalidPool {
                pool: "age_range".into(),
                reason: format!("min {} > max {}", self.age_range.min, self.age_range.max),
            });
        }
        Ok(())
    }
}

/// Bundled first names by gender and a surname list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NameList {
    pub female: Vec<String>,
    pub male: Vec<String>,
    pub surnames: Vec<String>,
}

impl NameList {
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../../data/names.json")).expect("bundled names are valid JSON")
    }
}

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CharacterError;

/// One of the eight Jungian tendencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tendency {
    Te,
    Ti,
    Fe,
    Fi,
    Se,
    Si,
    Ne,
    Ni,
}

impl Tendency {
    pub const ALL: [Tendency; 8] = [
        Tendency::Te,
        Tendency::Ti,
        Tendency::Fe,
        Tendency::Fi,
        Tendency::Se,
        Tendency::Si,
        Tendency::Ne,
        Tendency::Ni,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Tendency::Te => "extraverted thinking",
            Tendency::Ti => "introverted thinking",
            Tendency::Fe => "extraverted feeling",
            Tendency::Fi => "introverted feeling",
            Tendency::Se => "extraverted sensing",
            Tendency::Si => "introverted sensing",
            Tendency::Ne => "extraverted intuition",
            Tendency::Ni => "introverted intuition",
        }
    }
}

impl fmt::Display for Tendency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Number of descriptions drawn for ranks 1..=8. The extremes of the ranking
/// are the most pronounced tendencies and get the most descriptions.
pub const RANK_COUNTS: [usize; 8] = [4, 3, 2, 1, 1, 2, 3, 4];

/// Total descriptions per character (sum of [`RANK_COUNTS`]).
pub const TRAIT_TOTAL: usize = 20;

/// A total order over the eight tendencies, strongest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tendency>", into = "Vec<Tendency>")]
pub struct Ranking(Vec<Tendency>);

impl Ranking {
    pub fn new(order: Vec<Tendency>) -> Result<Self, CharacterError> {
        if order.len() != Tendency::ALL.len() {
            return Err(CharacterError::NotAPermutation(format!(
                "expected 8 tendencies, got {}",
                order.len()
            )));
        }
        let distinct: HashSet<_> = order.iter().collect();
        if distinct.len() != order.len() {
            return Err(CharacterError::NotAPermutation("repeated tendency".into()));
        }
        Ok(Self(order))
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut order = Tendency::ALL.to_vec();
        order.shuffle(rng);
        Self(order)
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn order(&self) -> &[Tendency] {
        &self.0
    }

    /// 1-based rank of a tendency.
    pub fn rank_of(&self, t: Tendency) -> u8 {
        self.0.iter().position(|&x| x == t).expect("ranking is a permutation") as u8 + 1
    }

    pub fn at_rank(&self, rank: u8) -> Tendency {
        self.0[rank as usize - 1]
    }
}

impl TryFrom<Vec<Tendency>> for Ranking {
    type Error = CharacterError;

    fn try_from(v: Vec<Tendency>) -> Result<Self, Self::Error> {
        Ranking::new(v)
    }
}

impl From<Ranking> for Vec<Tendency> {
    fn from(r: Ranking) -> Self {
        r.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraitCell {
    tendency: Tendency,
    rank: u8,
    descriptions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraitPoolFile {
    cells: Vec<TraitCell>,
}

/// Trait descriptions indexed by (tendency, rank position).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TraitPoolFile", into = "TraitPoolFile")]
pub struct TraitPool {
    cells: BTreeMap<(Tendency, u8), Vec<String>>,
}

impl TryFrom<TraitPoolFile> for TraitPool {
    type Error = CharacterError;

    fn try_from(file: TraitPoolFile) -> Result<Self, Self::Error> {
        let mut cells = BTreeMap::new();
        for cell in file.cells {
            if !(1..=8).contains(&cell.rank) {
                return Err(CharacterError::InvalidPool {
                    pool: "traits".into(),
                    reason: format!("rank {} out of 1..=8", cell.rank),
                });
            }
            cells
                .entry((cell.tendency, cell.rank))
                .or_insert_with(Vec::new)
                .extend(cell.descriptions);
        }
        let pool = TraitPool { cells };
        pool.validate()?;
        Ok(pool)
    }
}

impl From<TraitPool> for TraitPoolFile {
    fn from(p: TraitPool) -> Self {
        TraitPoolFile {
            cells: p
                .cells
                .into_iter()
                .map(|((tendency, rank), descriptions)| TraitCell {
                    tendency,
                    rank,
                    descriptions,
                })
                .collect(),
        }
    }
}

impl TraitPool {
    /// Builds a pool from explicit cells; missing cells are empty.
    pub fn from_cells(
        cells: impl IntoIterator<Item = ((Tendency, u8), Vec<String>)>,
    ) -> Result<Self, CharacterError> {
        let pool = TraitPool {
            cells: cells.into_iter().collect(),
        };
        pool.validate()?;
        Ok(pool)
    }

    /// The synthetic seed pool shipped with the crate: 10 descriptions for
    /// every (tendency, rank) cell. Curated pools can be loaded with
    /// [`TraitPool::load`].
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../../data/trait_pool.json")).expect("bundled trait pool is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CharacterError> {
        let raw = fs::read_to_string(path).map_err(|e| CharacterError::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| CharacterError::parse(path, e))
    }

    pub fn cell(&self, tendency: Tendency, rank: u8) -> &[String] {
        self.cells.get(&(tendency, rank)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-cell uniqueness. Cells may be under-filled; that is only an error
    /// once a selection needs more than the cell holds.
    pub fn validate(&self) -> Result<(), CharacterError> {
        for ((t, r), descs) in &self.cells {
            let mut seen = HashSet::new();
            if let Some(dup) = descs.iter().find(|d| !seen.insert(d.as_str())) {
                return Err(CharacterError::InvalidPool {
                    pool: "traits".into(),
                    reason: format!("duplicate description {dup:?} in cell ({t}, {r})"),
                });
            }
        }
        Ok(())
    }
}

/// A ranking plus the descriptions drawn for each rank position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PersonalityAssignment {
    pub ranking: Ranking,
    /// Rank position (1..=8) to the descriptions drawn from the cell of the
    /// tendency at that position.
    pub selected_descriptions: BTreeMap<u8, Vec<String>>,
}

impl PersonalityAssignment {
    pub fn count_vector(&self) -> [usize; 8] {
        let mut counts = [0; 8];
        for (rank, descs) in &self.selected_descriptions {
            if (1..=8).contains(rank) {
                counts[*rank as usize - 1] = descs.len();
            }
        }
        counts
    }

    pub fn all_descriptions(&self) -> impl Iterator<Item = &str> {
        self.selected_descriptions.values().flatten().map(String::as_str)
    }
}

/// Draws 4,3,2,1,1,2,3,4 descriptions for ranks 1..8 from the cells of the
/// ranked tendencies.
pub fn select_traits(
    ranking: &Ranking,
    traits: &TraitPool,
    seed: u64,
) -> Result<PersonalityAssignment, CharacterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    select_traits_with(ranking, traits, &mut rng)
}

pub(crate) fn select_traits_with(
    ranking: &Ranking,
    traits: &TraitPool,
    rng: &mut ChaCha8Rng,
) -> Result<PersonalityAssignment, CharacterError> {
    let mut selected = BTreeMap::new();
    for (i, &needed) in RANK_COUNTS.iter().enumerate() {
        let rank = i as u8 + 1;
        let tendency = ranking.at_rank(rank);
        let cell = traits.cell(tendency, rank);
        if cell.len() < needed {
            return Err(CharacterError::CellUnderfull {
                tendency,
                rank,
                needed,
                available: cell.len(),
            });
        }
        let chosen: Vec<String> = cell.choose_multiple(rng, needed).cloned().collect();
        selected.insert(rank, chosen);
    }
    Ok(PersonalityAssignment {
        ranking: ranking.clone(),
        selected_descriptions: selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_pool_has_640_entries() {
        let pool = TraitPool::bundled();
        assert_eq!(pool.len(), 640);
        for t in Tendency::ALL {
            for r in 1..=8 {
                assert_eq!(pool.cell(t, r).len(), 10);
            }
        }
    }

    #[test]
    fn ranking_rejects_repeats_and_short_orders() {
        assert!(Ranking::new(vec![Tendency::Te; 8]).is_err());
        assert!(Ranking::new(Tendency::ALL[..7].to_vec()).is_err());
        let json = r#"["Te","Te","Fe","Fi","Se","Si","Ne","Ni"]"#;
        assert!(serde_json::from_str::<Ranking>(json).is_err());
    }

    #[test]
    fn underfull_cell_is_reported() {
        let ranking = Ranking::new(Tendency::ALL.to_vec()).unwrap();
        let mut cells: Vec<((Tendency, u8), Vec<String>)> = Vec::new();
        for t in Tendency::ALL {
            for r in 1..=8u8 {
                let n = if (t, r) == (Tendency::Te, 1) { 3 } else { 4 };
                cells.push(((t, r), (0..n).map(|i| format!("{t}-{r}-{i}")).collect()));
            }
        }
        let pool = TraitPool::from_cells(cells).unwrap();
        let err = select_traits(&ranking, &pool, 1).unwrap_err();
        assert!(matches!(
            err,
            CharacterError::CellUnderfull { tendency: Tendency::Te, rank: 1, needed: 4, available: 3 }
        ));
    }

    #[test]
    fn same_seed_same_assignment() {
        let pool = TraitPool::bundled();
        let ranking = Ranking::new(Tendency::ALL.to_vec()).unwrap();
        assert_eq!(
            select_traits(&ranking, &pool, 9).unwrap(),
            select_traits(&ranking, &pool, 9).unwrap()
        );
    }

    proptest! {
        #[test]
        fn counts_follow_rank_rule(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
            let pool = TraitPool::bundled();
            let ranking = Ranking::random(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            let a = select_traits(&ranking, &pool, seed).unwrap();
            prop_assert_eq!(a.count_vector(), RANK_COUNTS);
            let all: Vec<&str> = a.all_descriptions().collect();
            prop_assert_eq!(all.len(), TRAIT_TOTAL);
            let distinct: HashSet<&str> = all.iter().copied().collect();
            prop_assert_eq!(distinct.len(), TRAIT_TOTAL);
            for (rank, descs) in &a.selected_descriptions {
                let cell = pool.cell(ranking.at_rank(*rank), *rank);
                for d in descs {
                    prop_assert!(cell.contains(d));
                }
            }
        }
    }
}

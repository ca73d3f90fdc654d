use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RuleError, SoundRule};
use crate::corpus::{CognateSet, Symbol, Word};

/// Longest Latin form usable as a building block.
const MAX_UNIT_LEN: usize = 3;
const MAX_UNITS: usize = 3;

/// A Latin form with one fixed reflex per daughter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticUnit {
    pub latin: Vec<Symbol>,
    pub reflexes: [Vec<Symbol>; 5],
}

/// Rules usable as building blocks: short gold form, a reflex in every
/// daughter, and a reflex tuple that no other Latin form shares.
pub fn synthetic_units(rules: &[SoundRule]) -> Vec<SyntheticUnit> {
    let candidates: Vec<SyntheticUnit> = rules
        .iter()
        .filter(|r| r.gold.len() <= MAX_UNIT_LEN && r.reflexes.iter().all(Option::is_some))
        .map(|r| SyntheticUnit {
            latin: r.gold.symbols().to_vec(),
            reflexes: r
                .reflexes
                .clone()
                .map(|w| w.expect("all present").symbols().to_vec()),
        })
        .collect();
    let mut units: Vec<SyntheticUnit> = Vec::new();
    for c in &candidates {
        let ambiguous = candidates
            .iter()
            .any(|o| (o.reflexes == c.reflexes) != (o.latin == c.latin));
        if !ambiguous && !units.contains(c) {
            units.push(c.clone());
        }
    }
    units
}

/// `n` distinct cognate sets, each made of 1 to 3 units. Latin forms and
/// daughter tuples are both unique across the corpus, so the mapping in
/// either direction is a function. Deterministic under `seed`.
pub fn generate_synthetic_corpus(rules: &[SoundRule], n: usize, seed: u64) -> Result<Vec<CognateSet>, RuleError> {
    if n == 0 {
        return Err(RuleError::Synthetic("n must be at least 1".into()));
    }
    let units = synthetic_units(rules);
    let u = units.len();
    if u == 0 {
        return Err(RuleError::Synthetic("no rule qualifies as a unit".into()));
    }
    let combinations: usize = (1..=MAX_UNITS).map(|k| u.pow(k as u32)).sum();
    if n > combinations {
        return Err(RuleError::Synthetic(format!(
            "{n} sets requested but only {combinations} unit combinations exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen_latin = HashSet::new();
    let mut seen_daughters = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let budget = 1000 * n + 100_000;
    for _ in 0..budget {
        if out.len() == n {
            break;
        }
        let k = rng.random_range(1..=MAX_UNITS);
        let picked: Vec<&SyntheticUnit> = (0..k).map(|_| &units[rng.random_range(0..u)]).collect();
        let latin: Vec<Symbol> = picked.iter().flat_map(|p| p.latin.iter().copied()).collect();
        let daughters: [Vec<Symbol>; 5] =
            std::array::from_fn(|d| picked.iter().flat_map(|p| p.reflexes[d].iter().copied()).collect());
        if seen_latin.contains(&latin) || seen_daughters.contains(&daughters) {
            continue;
        }
        seen_latin.insert(latin.clone());
        seen_daughters.insert(daughters.clone());
        let words = daughters.map(|d| Some(Word::new(d).expect("reflexes are non-empty")));
        let latin = Word::new(latin).expect("units are non-empty");
        out.push(CognateSet::new(words, latin).expect("all daughters present"));
    }
    if out.len() < n {
        return Err(RuleError::Synthetic(format!(
            "only {} distinct sets found for {n} requested",
            out.len()
        )));
    }
    Ok(out)
}

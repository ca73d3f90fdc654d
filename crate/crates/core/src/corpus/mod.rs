//! Cognate datasets: parsing, dataset variants, splitting and encoding.
//!
//! A dataset file is UTF-8 TSV with one cognate set per line and six columns
//! in the order Romanian, French, Italian, Spanish, Portuguese, Latin. A cell
//! holding a single `-` marks a missing cognate. Words are tokenized one
//! Unicode scalar per symbol, in both the orthographic and the phonetic mode.

mod language;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use language::Language;
pub use vocab::{EncodedExample, SpecialToken, Vocabulary, VOCAB_FORMAT};

/// Cell content marking an absent cognate.
pub const MISSING_CELL: &str = "-";

/// Canonical vowel length mark. `:` is accepted as an ASCII spelling of it.
pub const LENGTH_MARK: char = 'ː';
pub const ASCII_LENGTH_MARK: char = ':';

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected 6 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("invalid word {0:?}: {1}")]
    InvalidWord(String, &'static str),
    #[error("cognate set has no daughter words")]
    NoDaughters,
    #[error("variant {variant} cannot be applied to a {mode} dataset")]
    VariantMismatch { variant: DatasetVariant, mode: Mode },
    #[error("unknown dataset variant {0:?}")]
    UnknownVariant(String),
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("symbol {0:?} is not in the vocabulary")]
    OutOfVocabulary(Symbol),
    #[error("vocabulary file: {0}")]
    VocabFormat(String),
}

/// One token of a word: a single Unicode scalar value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub char);

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty sequence of symbols.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Result<Word, CorpusError> {
        let text: String = symbols.iter().map(|s| s.0).collect();
        if symbols.is_empty() {
            return Err(CorpusError::InvalidWord(text, "empty word"));
        }
        if symbols.iter().any(|s| s.0.is_whitespace() || s.0.is_control()) {
            return Err(CorpusError::InvalidWord(
                text,
                "whitespace or control characters",
            ));
        }
        Ok(Word(symbols))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn map_symbols(&self, f: impl Fn(Symbol) -> Option<Symbol>) -> Option<Word> {
        let mapped: Vec<Symbol> = self.0.iter().filter_map(|&s| f(s)).collect();
        if mapped.is_empty() {
            None
        } else {
            Some(Word(mapped))
        }
    }
}

impl FromStr for Word {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Word::new(s.chars().map(Symbol).collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.0)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Orthographic,
    Phonetic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Orthographic => "orthographic",
            Mode::Phonetic => "phonetic",
        })
    }
}

impl FromStr for Mode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "orth" | "orthographic" => Ok(Mode::Orthographic),
            "ipa" | "phonetic" => Ok(Mode::Phonetic),
            other => Err(CorpusError::UnknownMode(other.to_string())),
        }
    }
}

/// The five dataset variations the toolkit can derive from a prepared file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetVariant {
    Orthographic,
    Phonetic,
    OrthographicVowelLength,
    PhoneticVowelLength,
    PhoneticNoContrast,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 5] = [
        DatasetVariant::Orthographic,
        DatasetVariant::Phonetic,
        DatasetVariant::OrthographicVowelLength,
        DatasetVariant::PhoneticVowelLength,
        DatasetVariant::PhoneticNoContrast,
    ];

    pub fn mode(self) -> Mode {
        match self {
            DatasetVariant::Orthographic | DatasetVariant::OrthographicVowelLength => {
                Mode::Orthographic
            }
            _ => Mode::Phonetic,
        }
    }

    pub fn keeps_length(self) -> bool {
        matches!(
            self,
            DatasetVariant::OrthographicVowelLength | DatasetVariant::PhoneticVowelLength
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVariant::Orthographic => "orthographic",
            DatasetVariant::Phonetic => "phonetic",
            DatasetVariant::OrthographicVowelLength => "orthographic_vowel_length",
            DatasetVariant::PhoneticVowelLength => "phonetic_vowel_length",
            DatasetVariant::PhoneticNoContrast => "phonetic_no_contrast",
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVariant {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = match s {
            "orth" | "orthographic" => DatasetVariant::Orthographic,
            "ipa" | "phonetic" => DatasetVariant::Phonetic,
            "orth_length" | "orthographic_vowel_length" => DatasetVariant::OrthographicVowelLength,
            "ipa_length" | "phonetic_vowel_length" => DatasetVariant::PhoneticVowelLength,
            "no_contrast" | "phonetic_no_contrast" => DatasetVariant::PhoneticNoContrast,
            other => return Err(CorpusError::UnknownVariant(other.to_string())),
        };
        Ok(v)
    }
}

/// One comparative entry: the daughter cognates (any of which may be absent)
/// and the gold Latin proto-word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CognateSet {
    daughters: [Option<Word>; 5],
    latin: Word,
}

impl CognateSet {
    /// `daughters` is indexed in canonical order (see [`Language::DAUGHTERS`]).
    pub fn new(daughters: [Option<Word>; 5], latin: Word) -> Result<CognateSet, CorpusError> {
        if daughters.iter().all(Option::is_none) {
            return Err(CorpusError::NoDaughters);
        }
        Ok(CognateSet { daughters, latin })
    }

    pub fn daughter(&self, lang: Language) -> Option<&Word> {
        if lang.is_daughter() {
            self.daughters[lang.index()].as_ref()
        } else {
            None
        }
    }

    /// Daughters in canonical order.
    pub fn daughters(&self) -> impl Iterator<Item = (Language, Option<&Word>)> {
        Language::DAUGHTERS
            .into_iter()
            .zip(self.daughters.iter().map(Option::as_ref))
    }

    pub fn latin(&self) -> &Word {
        &self.latin
    }

    pub fn present_count(&self) -> usize {
        self.daughters.iter().flatten().count()
    }
}

/// A parsed dataset together with the transcription mode it was parsed in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub mode: Mode,
    pub sets: Vec<CognateSet>,
}

impl Dataset {
    pub fn new(mode: Mode, sets: Vec<CognateSet>) -> Dataset {
        Dataset { mode, sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<Word>, CorpusError> {
    let cell = cell.trim_matches(|c| c == ' ' || c == '\r');
    if cell == MISSING_CELL {
        return Ok(None);
    }
    cell.parse::<Word>()
        .map(Some)
        .map_err(|e| CorpusError::Invalid {
            line,
            message: e.to_string(),
        })
}

/// Parses one TSV row. `line` is only used for error messages.
pub fn parse_row(row: &str, line: usize) -> Result<CognateSet, CorpusError> {
    let cells: Vec<&str> = row.split('\t').collect();
    if cells.len() != 6 {
        return Err(CorpusError::ColumnCount {
            line,
            found: cells.len(),
        });
    }
    let mut daughters: [Option<Word>; 5] = Default::default();
    for (slot, cell) in daughters.iter_mut().zip(&cells[..5]) {
        *slot = parse_cell(cell, line)?;
    }
    let latin = parse_cell(cells[5], line)?.ok_or_else(|| CorpusError::Invalid {
        line,
        message: "Latin cell is empty".to_string(),
    })?;
    CognateSet::new(daughters, latin).map_err(|e| CorpusError::Invalid {
        line,
        message: e.to_string(),
    })
}

/// Parses a whole dataset file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_dataset(text: &str, mode: Mode) -> Result<Dataset, CorpusError> {
    let mut sets = Vec::new();
    for (i, row) in text.lines().enumerate() {
        if row.trim().is_empty() {
            continue;
        }
        sets.push(parse_row(row, i + 1)?);
    }
    Ok(Dataset::new(mode, sets))
}

pub fn serialize_row(set: &CognateSet) -> String {
    let mut cells: Vec<String> = set
        .daughters()
        .map(|(_, w)| w.map_or_else(|| MISSING_CELL.to_string(), Word::to_string))
        .collect();
    cells.push(set.latin.to_string());
    cells.join("\t")
}

pub fn serialize_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    for set in &ds.sets {
        out.push_str(&serialize_row(set));
        out.push('\n');
    }
    out
}

fn neutralize_tense_lax(s: Symbol) -> Symbol {
    match s.0 {
        'U' => Symbol('u'),
        'O' => Symbol('o'),
        'I' => Symbol('i'),
        'E' => Symbol('e'),
        _ => s,
    }
}

fn is_length_mark(s: Symbol) -> bool {
    s.0 == LENGTH_MARK || s.0 == ASCII_LENGTH_MARK
}

/// Derives one of the dataset variants. Only Latin words change: length marks
/// are normalized to `ː` when kept and removed otherwise, and the no-contrast
/// variant additionally maps the lax vowels U, O, I, E to u, o, i, e.
pub fn apply_variant(ds: &Dataset, variant: DatasetVariant) -> Result<Dataset, CorpusError> {
    if variant.mode() != ds.mode {
        return Err(CorpusError::VariantMismatch {
            variant,
            mode: ds.mode,
        });
    }
    let mut sets = Vec::with_capacity(ds.sets.len());
    for (i, set) in ds.sets.iter().enumerate() {
        let latin = set
            .latin
            .map_symbols(|s| {
                if is_length_mark(s) {
                    variant.keeps_length().then_some(Symbol(LENGTH_MARK))
                } else if variant == DatasetVariant::PhoneticNoContrast {
                    Some(neutralize_tense_lax(s))
                } else {
                    Some(s)
                }
            })
            .ok_or_else(|| CorpusError::Invalid {
                line: i + 1,
                message: format!("Latin word {} is empty after applying {variant}", set.latin),
            })?;
        sets.push(CognateSet {
            daughters: set.daughters.clone(),
            latin,
        });
    }
    Ok(Dataset::new(ds.mode, sets))
}

/// Train/dev/test partition of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Partition sizes for `n` items: dev and test get the floor of their share,
/// train takes the remainder.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize), CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    // n * r can land just below an integer (0.29 * 100 = 28.999...).
    let share = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let dev = share(ratios[1]);
    let test = share(ratios[2]);
    Ok((n - dev - test, dev, test))
}

/// Shuffles deterministically under `seed` and cuts into train/dev/test.
pub fn split(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Split, CorpusError> {
    if ds.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let (n_train, n_dev, _) = split_sizes(ds.len(), ratios)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |idx: &[usize]| Dataset::new(ds.mode, idx.iter().map(|&i| ds.sets[i].clone()).collect());
    Ok(Split {
        train: take(&order[..n_train]),
        dev: take(&order[n_train..n_train + n_dev]),
        test: take(&order[n_train + n_dev..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn word(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn toy(n: usize) -> Dataset {
        let sets = (0..n)
            .map(|i| {
                let w = word(&format!("w{i}"));
                CognateSet::new(
                    [Some(w.clone()), None, Some(w.clone()), None, None],
                    word(&format!("l{i}")),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(Mode::Orthographic, sets)
    }

    #[test]
    fn parses_complete_row() {
        let ds = parse_dataset("lapte\tlait\tlatte\tleche\tleite\tlactem\n", Mode::Orthographic).unwrap();
        assert_eq!(ds.len(), 1);
        let set = &ds.sets[0];
        assert_eq!(set.present_count(), 5);
        let latin: Vec<char> = set.latin().symbols().iter().map(|s| s.0).collect();
        assert_eq!(latin, vec!['l', 'a', 'c', 't', 'e', 'm']);
        assert_eq!(set.daughter(Language::French), Some(&word("lait")));
    }

    #[test]
    fn dash_cells_are_missing() {
        let ds = parse_dataset("-\ttKavaj\t-\ttRabaxo\ttR5BaLu\ttrIpalEm", Mode::Phonetic).unwrap();
        let set = &ds.sets[0];
        assert!(set.daughter(Language::Romanian).is_none());
        assert!(set.daughter(Language::Italian).is_none());
        assert_eq!(set.daughter(Language::Portuguese), Some(&word("tR5BaLu")));
        assert_eq!(set.present_count(), 3);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "a\tb\tc\td\te\tf\n\na\tb\tc\td\te\n";
        match parse_dataset(text, Mode::Orthographic) {
            Err(CorpusError::ColumnCount { line: 3, found: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_latin_is_rejected() {
        assert!(matches!(
            parse_dataset("a\tb\tc\td\te\t-", Mode::Orthographic),
            Err(CorpusError::Invalid { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("a\tb\tc\td\te\t", Mode::Orthographic),
            Err(CorpusError::Invalid { line: 1, .. })
        ));
        assert!(matches!(
            parse_dataset("-\t-\t-\t-\t-\tx", Mode::Orthographic),
            Err(CorpusError::Invalid { line: 1, .. })
        ));
    }

    #[test]
    fn multi_codepoint_ipa_is_split_per_scalar() {
        let w = word("tʃaː");
        assert_eq!(w.len(), 4);
    }

    fn latin_after(latin: &str, mode: Mode, v: DatasetVariant) -> String {
        let set = CognateSet::new([Some(word("x")), None, None, None, None], word(latin)).unwrap();
        apply_variant(&Dataset::new(mode, vec![set]), v).unwrap().sets[0]
            .latin()
            .to_string()
    }

    #[test]
    fn no_contrast_maps_lax_vowels() {
        assert_eq!(latin_after("laktEm", Mode::Phonetic, DatasetVariant::PhoneticNoContrast), "laktem");
        assert_eq!(latin_after("pIp", Mode::Phonetic, DatasetVariant::PhoneticNoContrast), "pip");
        assert_eq!(latin_after("pUOI", Mode::Phonetic, DatasetVariant::PhoneticNoContrast), "puoi");
    }

    #[test]
    fn length_marks_kept_or_stripped() {
        assert_eq!(latin_after("laktem", Mode::Phonetic, DatasetVariant::Phonetic), "laktem");
        assert_eq!(latin_after("roːsa", Mode::Phonetic, DatasetVariant::Phonetic), "rosa");
        assert_eq!(latin_after("ro:sa", Mode::Orthographic, DatasetVariant::Orthographic), "rosa");
        assert_eq!(
            latin_after("ro:sa", Mode::Orthographic, DatasetVariant::OrthographicVowelLength),
            "roːsa"
        );
        assert_eq!(
            latin_after("roːsa", Mode::Phonetic, DatasetVariant::PhoneticVowelLength),
            "roːsa"
        );
    }

    #[test]
    fn daughters_untouched_by_variant() {
        let set = CognateSet::new([Some(word("pEː")), None, None, None, None], word("pEː")).unwrap();
        let out = apply_variant(&Dataset::new(Mode::Phonetic, vec![set]), DatasetVariant::PhoneticNoContrast).unwrap();
        assert_eq!(out.sets[0].daughter(Language::Romanian), Some(&word("pEː")));
        assert_eq!(out.sets[0].latin(), &word("pe"));
    }

    #[test]
    fn variant_mode_mismatch() {
        let ds = toy(2);
        assert!(matches!(
            apply_variant(&ds, DatasetVariant::PhoneticNoContrast),
            Err(CorpusError::VariantMismatch { .. })
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let r = [0.80, 0.08, 0.12];
        assert_eq!(split_sizes(100, r).unwrap(), (80, 8, 12));
        assert_eq!(split_sizes(10, r).unwrap(), (9, 0, 1));
        assert_eq!(split_sizes(8796, r).unwrap(), (7038, 703, 1055));
        assert!(split_sizes(10, [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(100);
        let a = split(&ds, [0.8, 0.08, 0.12], 0).unwrap();
        let b = split(&ds, [0.8, 0.08, 0.12], 0).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (80, 8, 12));
        let c = split(&ds, [0.8, 0.08, 0.12], 1).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_empty_is_error() {
        assert!(matches!(
            split(&Dataset::new(Mode::Phonetic, vec![]), [0.8, 0.08, 0.12], 0),
            Err(CorpusError::EmptyDataset)
        ));
    }

    fn arb_word() -> impl Strategy<Value = Word> {
        proptest::collection::vec(
            prop_oneof![prop::char::range('a', 'z'), Just('ʃ'), Just('ː'), Just('E'), Just('-')],
            1..8,
        )
        .prop_map(|cs| Word::new(cs.into_iter().map(Symbol).collect()).unwrap())
    }

    fn arb_set() -> impl Strategy<Value = CognateSet> {
        (proptest::collection::vec(proptest::option::of(arb_word()), 5), arb_word())
            .prop_filter_map("needs a daughter", |(d, l)| {
                // a lone "-" would read back as a missing cell
                let d: Vec<Option<Word>> = d
                    .into_iter()
                    .map(|w| w.filter(|w| w.to_string() != MISSING_CELL))
                    .collect();
                if l.to_string() == MISSING_CELL {
                    return None;
                }
                CognateSet::new(d.try_into().unwrap(), l).ok()
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(sets in proptest::collection::vec(arb_set(), 0..20)) {
            let ds = Dataset::new(Mode::Phonetic, sets);
            let back = parse_dataset(&serialize_dataset(&ds), Mode::Phonetic).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn variants_are_idempotent(sets in proptest::collection::vec(arb_set(), 1..10)) {
            let ds = Dataset::new(Mode::Phonetic, sets);
            for v in [DatasetVariant::Phonetic, DatasetVariant::PhoneticNoContrast, DatasetVariant::PhoneticVowelLength] {
                if let Ok(once) = apply_variant(&ds, v) {
                    let twice = apply_variant(&once, v).unwrap();
                    prop_assert_eq!(twice, once);
                }
            }
        }

        #[test]
        fn split_partitions_input(n in 1usize..200, seed in any::<u64>()) {
            let ds = toy(n);
            let s = split(&ds, [0.8, 0.08, 0.12], seed).unwrap();
            let mut all: Vec<CognateSet> = s.train.sets.iter().chain(&s.dev.sets).chain(&s.test.sets).cloned().collect();
            prop_assert_eq!(all.len(), n);
            all.sort_by_key(|c| c.latin().to_string());
            let mut orig = ds.sets.clone();
            orig.sort_by_key(|c| c.latin().to_string());
            prop_assert_eq!(all, orig);
        }
    }
}

//! The sound-change test set: 33 Latin-to-Romance correspondences written as
//! minimal cognate sets, a scorer that checks whether a reconstruction keeps
//! the Latin segment under test, and a generator of synthetic corpora built
//! from the same correspondences.

mod synthetic;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{CognateSet, Language, Symbol, Word, MISSING_CELL};
use crate::metrics::{align, EditOp};

pub use synthetic::{generate_synthetic_corpus, synthetic_units, SyntheticUnit};

pub const RULES_FORMAT: &str = "protolens-rules/1";

const BUILTIN: &str = include_str!("table.tsv");

const COLUMNS: [&str; 11] = [
    "id",
    "focus",
    "environment",
    "romanian",
    "french",
    "italian",
    "spanish",
    "portuguese",
    "latin",
    "reported_prediction",
    "expected_correct",
];

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("rule table must start with the line `# {RULES_FORMAT}`")]
    Format,
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("synthetic corpus: {0}")]
    Synthetic(String),
}

/// One row of the test set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoundRule {
    pub id: String,
    /// The Latin segment the row tests.
    pub focus: Vec<Symbol>,
    /// Conditioning environment, if the row names one.
    pub environment: Option<String>,
    /// Daughter forms in canonical order; `None` where the table has a dash.
    pub reflexes: [Option<Word>; 5],
    pub gold: Word,
    /// Reconstruction reported for the original model, kept for comparison.
    pub reported_prediction: Option<Word>,
    pub expected_correct: bool,
}

impl SoundRule {
    /// Index of the first occurrence of the focus in the gold form.
    pub fn focus_start(&self) -> usize {
        self.gold
            .symbols()
            .windows(self.focus.len())
            .position(|w| w == self.focus.as_slice())
            .expect("validated on construction")
    }

    pub fn reflex(&self, lang: Language) -> Option<&Word> {
        if lang.is_daughter() {
            self.reflexes[lang.index()].as_ref()
        } else {
            None
        }
    }
}

impl fmt::Display for SoundRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let focus: String = self.focus.iter().map(|s| s.0).collect();
        write!(f, "/{focus}/")?;
        if let Some(env) = &self.environment {
            write!(f, " {env}")?;
        }
        Ok(())
    }
}

/// Parses a rule table. The first non-empty line is the format tag, the
/// second the column header.
pub fn parse_rules(text: &str) -> Result<Vec<SoundRule>, RuleError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# {RULES_FORMAT}") => {}
        _ => return Err(RuleError::Format),
    }
    let (hline, header) = lines.next().ok_or(RuleError::Format)?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    if cols != COLUMNS {
        return Err(RuleError::Invalid {
            line: hline + 1,
            message: format!("expected columns {}", COLUMNS.join(",")),
        });
    }
    lines.map(|(i, l)| parse_rule(l.trim_end_matches('\r'), i + 1)).collect()
}

fn parse_rule(row: &str, line: usize) -> Result<SoundRule, RuleError> {
    let bad = |message: String| RuleError::Invalid { line, message };
    let f: Vec<&str> = row.split('\t').collect();
    if f.len() != COLUMNS.len() {
        return Err(bad(format!("expected {} columns, found {}", COLUMNS.len(), f.len())));
    }
    let word = |s: &str| s.parse::<Word>().map_err(|e| bad(e.to_string()));
    let optional = |s: &str| {
        if s == MISSING_CELL {
            Ok(None)
        } else {
            word(s).map(Some)
        }
    };
    let mut reflexes: [Option<Word>; 5] = Default::default();
    for (slot, cell) in reflexes.iter_mut().zip(&f[3..8]) {
        *slot = optional(cell)?;
    }
    if reflexes.iter().all(Option::is_none) {
        return Err(bad("rule has no reflexes".into()));
    }
    let focus: Vec<Symbol> = f[1].chars().map(Symbol).collect();
    let gold = word(f[8])?;
    if focus.is_empty() || !gold.symbols().windows(focus.len()).any(|w| w == focus.as_slice()) {
        return Err(bad(format!("focus {:?} does not occur in {gold}", f[1])));
    }
    let expected_correct = match f[10] {
        "yes" => true,
        "no" => false,
        other => return Err(bad(format!("expected yes or no, found {other:?}"))),
    };
    Ok(SoundRule {
        id: f[0].to_string(),
        focus,
        environment: (f[2] != MISSING_CELL).then(|| f[2].to_string()),
        reflexes,
        gold,
        reported_prediction: optional(f[9])?,
        expected_correct,
    })
}

/// The 33 built-in rules.
pub fn builtin_rules() -> Vec<SoundRule> {
    parse_rules(BUILTIN).expect("built-in rule table is valid")
}

/// One cognate set per rule: reflexes as daughters, gold as Latin.
pub fn make_rule_testset(rules: &[SoundRule]) -> Vec<CognateSet> {
    rules
        .iter()
        .map(|r| CognateSet::new(r.reflexes.clone(), r.gold.clone()).expect("rules have a reflex"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleOutcome {
    pub id: String,
    pub rule: String,
    pub prediction: String,
    pub passed: bool,
    /// Position in the prediction where the focus was found.
    pub focus_found_at: Option<usize>,
}

/// A prediction passes when every focus symbol of the gold form aligns to
/// an identical symbol in the prediction. Material inserted around the focus
/// is ignored.
pub fn score_rule_prediction(rule: &SoundRule, prediction: &[Symbol]) -> RuleOutcome {
    let start = rule.focus_start();
    let focus = start..start + rule.focus.len();
    let (mut gi, mut pi) = (0, 0);
    let mut found = None;
    let mut kept = 0;
    for op in align(rule.gold.symbols(), prediction) {
        match op {
            EditOp::Match(_) => {
                if focus.contains(&gi) {
                    if gi == start {
                        found = Some(pi);
                    }
                    kept += 1;
                }
                gi += 1;
                pi += 1;
            }
            EditOp::Substitute(..) => {
                gi += 1;
                pi += 1;
            }
            EditOp::Delete(_) => gi += 1,
            EditOp::Insert(_) => pi += 1,
        }
    }
    let passed = kept == rule.focus.len();
    RuleOutcome {
        id: rule.id.clone(),
        rule: rule.to_string(),
        prediction: prediction.iter().map(|s| s.0).collect(),
        passed,
        focus_found_at: if passed { found } else { None },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleReport {
    pub passed: usize,
    pub total: usize,
    /// Rows whose pass/fail agrees with the stored expectation.
    pub agree_with_expected: usize,
    pub outcomes: Vec<RuleOutcome>,
}

impl RuleReport {
    pub fn new(rules: &[SoundRule], outcomes: Vec<RuleOutcome>) -> RuleReport {
        RuleReport {
            passed: outcomes.iter().filter(|o| o.passed).count(),
            total: outcomes.len(),
            agree_with_expected: rules
                .iter()
                .zip(&outcomes)
                .filter(|(r, o)| r.expected_correct == o.passed)
                .count(),
            outcomes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn syms(s: &str) -> Vec<Symbol> {
        s.chars().map(Symbol).collect()
    }

    fn find<'a>(rules: &'a [SoundRule], name: &str) -> &'a SoundRule {
        rules.iter().find(|r| r.to_string() == name).unwrap()
    }

    #[test]
    fn builtin_table_shape() {
        let rules = builtin_rules();
        assert_eq!(rules.len(), 33);
        assert_eq!(rules.iter().filter(|r| r.expected_correct).count(), 22);
        let j = find(&rules, "/j/ word initial");
        let forms: Vec<String> = j.reflexes.iter().map(|w| w.as_ref().unwrap().to_string()).collect();
        assert_eq!(forms, ["Za", "Za", "dZa", "xa", "Za"]);
        assert_eq!(j.gold.to_string(), "ja");
        let kt = find(&rules, "/kt/ medially, before nasals");
        assert!(kt.reflex(Language::Romanian).is_none());
        assert!(kt.reflex(Language::French).is_some());
    }

    #[test]
    fn testset_mirrors_rules() {
        let rules = builtin_rules();
        let sets = make_rule_testset(&rules);
        assert_eq!(sets.len(), 33);
        let kt = rules.iter().position(|r| r.to_string() == "/kt/ medially, before nasals").unwrap();
        assert!(sets[kt].daughter(Language::Romanian).is_none());
        let vocab = crate::corpus::Vocabulary::from_sets(&sets);
        for s in &sets {
            let ex = vocab.encode(s).unwrap();
            let latin = &ex.target_ids[..ex.target_ids.len() - 1];
            assert_eq!(&vocab.decode(latin).unwrap(), s.latin());
        }
    }

    #[test]
    fn literal_table_rows() {
        let rules = builtin_rules();
        assert!(score_rule_prediction(find(&rules, "/w/"), &syms("wam")).passed);
        assert!(!score_rule_prediction(find(&rules, "/aI/"), &syms("pEm")).passed);
        let o = score_rule_prediction(find(&rules, "/l/ before front vowels"), &syms("gIlUm"));
        assert!(o.passed);
        assert_eq!(o.focus_found_at, Some(2));
    }

    #[test]
    fn reported_predictions_reproduce_expected_column() {
        for r in builtin_rules() {
            let pred = r.reported_prediction.as_ref().unwrap();
            let o = score_rule_prediction(&r, pred.symbols());
            assert_eq!(o.passed, r.expected_correct, "rule {r} with {pred}");
        }
    }

    #[test]
    fn gold_echo_passes_everything() {
        let rules = builtin_rules();
        let outcomes: Vec<_> = rules.iter().map(|r| score_rule_prediction(r, r.gold.symbols())).collect();
        let report = RuleReport::new(&rules, outcomes);
        assert_eq!(report.passed, 33);
        assert_eq!(report.agree_with_expected, 22);
        assert!(report.outcomes.iter().all(|o| o.focus_found_at.is_some()));
    }

    #[test]
    fn empty_prediction_fails() {
        for r in builtin_rules() {
            assert!(!score_rule_prediction(&r, &[]).passed);
        }
    }

    #[test]
    fn malformed_tables_rejected() {
        assert_eq!(parse_rules("id\tfocus\n"), Err(RuleError::Format));
        let head = format!("# {RULES_FORMAT}\n{}\n", COLUMNS.join("\t"));
        let bad_focus = format!("{head}01\tz\t-\tpa\tpa\tpa\tpa\tpa\tpa\t-\tyes\n");
        assert!(matches!(parse_rules(&bad_focus), Err(RuleError::Invalid { line: 3, .. })));
        let no_reflex = format!("{head}01\ta\t-\t-\t-\t-\t-\t-\tpa\t-\tyes\n");
        assert!(parse_rules(&no_reflex).is_err());
        let ok = format!("{head}01\ta\t-\tpa\t-\tpa\tpa\tpa\tpa\t-\tno\n");
        let r = parse_rules(&ok).unwrap();
        assert_eq!(r[0].environment, None);
        assert_eq!(r[0].reported_prediction, None);
    }

    proptest! {
        #[test]
        fn trailing_insertions_are_ignored(idx in 0usize..33, suffix in prop::collection::vec(prop::sample::select(vec!['m', 'z', 'q', 'r', 'v']), 0..5)) {
            let rules = builtin_rules();
            let rule = &rules[idx];
            // suffix symbols absent from the gold form can only align as insertions
            let mut pred = rule.gold.symbols().to_vec();
            pred.extend(suffix.into_iter().map(Symbol).filter(|s| !rule.gold.symbols().contains(s)));
            let o = score_rule_prediction(rule, &pred);
            prop_assert!(o.passed);
            prop_assert_eq!(o.focus_found_at, Some(rule.focus_start()));
        }
    }
}

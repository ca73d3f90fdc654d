use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::{EncodedExample, Language, SpecialToken, Vocabulary};
use crate::metrics::csv_field;
use crate::model::AttentionTrace;

const LANGS: usize = 5;

/// How raw most-attended counts become row distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    /// Divide by each language's share of input symbols, then make rows sum to one.
    #[default]
    LanguageFrequency,
    /// Only make rows sum to one.
    RowOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Steps whose most-attended position belonged to each daughter.
    pub raw: [usize; LANGS],
    /// Steps whose most-attended position was a separator or missing marker.
    pub special: usize,
    /// Normalized daughter weights; all zero when `raw` is all zero.
    pub normalized: [f64; LANGS],
    pub empty: bool,
}

impl SummaryRow {
    pub fn total(&self) -> usize {
        self.raw.iter().sum::<usize>() + self.special
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub normalize: Normalize,
    /// Input symbols per daughter in the corpus the traces came from.
    pub language_frequency: [usize; LANGS],
    /// Indexed by decoding step.
    pub by_position: Vec<SummaryRow>,
    /// Keyed by the emitted token.
    pub by_symbol: BTreeMap<String, SummaryRow>,
}

/// Counts of non-special input positions per daughter.
pub fn language_frequencies(examples: &[EncodedExample]) -> [usize; LANGS] {
    let mut f = [0; LANGS];
    for ex in examples {
        for (&id, lang) in ex.input_ids.iter().zip(&ex.input_langs) {
            if !is_marker(id) && lang.is_daughter() {
                f[lang.index()] += 1;
            }
        }
    }
    f
}

fn is_marker(id: usize) -> bool {
    id == SpecialToken::Sep.id() || id == SpecialToken::Missing.id()
}

/// Earliest position holding the largest weight.
fn most_attended(weights: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &w) in weights.iter().enumerate() {
        if best.is_none_or(|(_, b)| w > b) {
            best = Some((i, w));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Default)]
struct Counts {
    raw: [usize; LANGS],
    special: usize,
}

/// Tallies the language of the most-attended input position at every
/// decoding step, by step index and by emitted token.
pub fn attention_summary(
    traces: &[AttentionTrace],
    vocab: &Vocabulary,
    language_frequency: [usize; LANGS],
    normalize: Normalize,
) -> Result<AttentionSummary, AnalysisError> {
    if traces.is_empty() {
        return Err(AnalysisError::NoTraces);
    }
    let mut by_position: Vec<Counts> = Vec::new();
    let mut by_symbol: BTreeMap<String, Counts> = BTreeMap::new();
    for trace in traces {
        for (t, step) in trace.steps.iter().enumerate() {
            let Some(pos) = most_attended(&step.weights) else {
                continue;
            };
            if by_position.len() <= t {
                by_position.resize_with(t + 1, Counts::default);
            }
            let sym = by_symbol.entry(vocab.token(step.emitted)).or_default();
            let lang = trace.input_langs[pos];
            if is_marker(trace.input_ids[pos]) || !lang.is_daughter() {
                by_position[t].special += 1;
                sym.special += 1;
            } else {
                by_position[t].raw[lang.index()] += 1;
                sym.raw[lang.index()] += 1;
            }
        }
    }
    let finish = |c: Counts| {
        let scaled: Vec<f64> = c
            .raw
            .iter()
            .zip(language_frequency)
            .map(|(&r, f)| match normalize {
                Normalize::RowOnly => r as f64,
                Normalize::LanguageFrequency if f == 0 => 0.0,
                Normalize::LanguageFrequency => r as f64 / f as f64,
            })
            .collect();
        let sum: f64 = scaled.iter().sum();
        let empty = sum == 0.0;
        let normalized = std::array::from_fn(|i| if empty { 0.0 } else { scaled[i] / sum });
        SummaryRow {
            raw: c.raw,
            special: c.special,
            normalized,
            empty,
        }
    };
    Ok(AttentionSummary {
        normalize,
        language_frequency,
        by_position: by_position.into_iter().map(finish).collect(),
        by_symbol: by_symbol.into_iter().map(|(k, c)| (k, finish(c))).collect(),
    })
}

impl AttentionSummary {
    pub fn raw_total(&self) -> usize {
        self.by_position.iter().map(SummaryRow::total).sum()
    }

    pub fn position_csv(&self) -> String {
        let rows = self.by_position.iter().enumerate().map(|(i, r)| (i.to_string(), r));
        table("step", rows)
    }

    pub fn symbol_csv(&self) -> String {
        table("symbol", self.by_symbol.iter().map(|(k, r)| (k.clone(), r)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn table<'a>(key: &str, rows: impl Iterator<Item = (String, &'a SummaryRow)>) -> String {
    let mut s = String::from(key);
    for l in Language::DAUGHTERS {
        let _ = write!(s, ",{}", l.code());
    }
    for l in Language::DAUGHTERS {
        let _ = write!(s, ",raw_{}", l.code());
    }
    s.push_str(",raw_special,empty\n");
    for (k, r) in rows {
        s.push_str(&csv_field(&k));
        for x in r.normalized {
            let _ = write!(s, ",{x}");
        }
        for x in r.raw {
            let _ = write!(s, ",{x}");
        }
        let _ = writeln!(s, ",{},{}", r.special, r.empty);
    }
    s
}

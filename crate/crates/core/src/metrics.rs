//! Edit distance, Table-style aggregate reports and substitution counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Symbol;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot normalize by an empty word")]
    EmptyReference,
    #[error("report needs at least one pair")]
    NoPairs,
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Which length divides the distance in [`normalized_edit_distance`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Gold,
    Prediction,
}

/// Distance divided by the gold length.
pub fn normalized_edit_distance(pred: &[Symbol], gold: &[Symbol]) -> Result<f64, MetricsError> {
    normalized_by(pred, gold, Normalization::Gold)
}

pub fn normalized_by(pred: &[Symbol], gold: &[Symbol], by: Normalization) -> Result<f64, MetricsError> {
    let len = match by {
        Normalization::Gold => gold.len(),
        Normalization::Prediction => pred.len(),
    };
    if len == 0 {
        return Err(MetricsError::EmptyReference);
    }
    Ok(edit_distance(pred, gold) as f64 / len as f64)
}

/// Largest distance with its own cumulative bucket.
pub const BUCKETS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditDistanceReport {
    /// Fraction of pairs with distance ≤ k, for k = 0..=4.
    pub buckets: [f64; BUCKETS],
    pub average: f64,
    pub average_normalized: f64,
    pub normalization: Normalization,
    pub n: usize,
}

impl EditDistanceReport {
    pub fn exact_rate(&self) -> f64 {
        self.buckets[0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table with one header row and one value row.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6} {:>6} {:>6} {:>6} {:>6} {:>8} {:>10} {:>6}", "0", "<=1", "<=2", "<=3", "<=4", "Average", "Avg, norm", "n");
        let pct = |x: f64| format!("{:.1}%", 100.0 * x);
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>6} {:>6} {:>6} {:>8.3} {:>10.3} {:>6}",
            pct(self.buckets[0]),
            pct(self.buckets[1]),
            pct(self.buckets[2]),
            pct(self.buckets[3]),
            pct(self.buckets[4]),
            self.average,
            self.average_normalized,
            self.n
        );
        s
    }
}

/// Aggregates `(prediction, gold)` pairs.
pub fn report(pairs: &[(Vec<Symbol>, Vec<Symbol>)]) -> Result<EditDistanceReport, MetricsError> {
    report_with(pairs, Normalization::Gold)
}

pub fn report_with(pairs: &[(Vec<Symbol>, Vec<Symbol>)], by: Normalization) -> Result<EditDistanceReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let mut within = [0usize; BUCKETS];
    let mut total = 0usize;
    let mut total_norm = 0.0;
    for (pred, gold) in pairs {
        let d = edit_distance(pred, gold);
        for (k, slot) in within.iter_mut().enumerate() {
            if d <= k {
                *slot += 1;
            }
        }
        total += d;
        total_norm += normalized_by(pred, gold, by)?;
    }
    let n = pairs.len() as f64;
    Ok(EditDistanceReport {
        buckets: within.map(|c| c as f64 / n),
        average: total as f64 / n,
        average_normalized: total_norm / n,
        normalization: by,
        n: pairs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EditOp<S> {
    Match(S),
    /// Source symbol replaced by target symbol.
    Substitute(S, S),
    /// Target symbol absent from the source.
    Insert(S),
    /// Source symbol absent from the target.
    Delete(S),
}

impl<S> EditOp<S> {
    pub fn cost(&self) -> usize {
        usize::from(!matches!(self, EditOp::Match(_)))
    }
}

pub type EditScript<S> = Vec<EditOp<S>>;

/// A minimal-cost script turning `source` into `target`. Traceback from the
/// end prefers match, then substitution, then deletion, then insertion.
pub fn align<S: PartialEq + Copy>(source: &[S], target: &[S]) -> EditScript<S> {
    let (n, m) = (source.len(), target.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(source[i - 1] != target[j - 1]);
            dp[i * w + j] = sub.min(dp[(i - 1) * w + j] + 1).min(dp[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * w + j - 1];
            if source[i - 1] == target[j - 1] && here == diag {
                ops.push(EditOp::Match(source[i - 1]));
                i -= 1;
                j -= 1;
                continue;
            }
            if source[i - 1] != target[j - 1] && here == diag + 1 {
                ops.push(EditOp::Substitute(source[i - 1], target[j - 1]));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * w + j] + 1 {
            ops.push(EditOp::Delete(source[i - 1]));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(target[j - 1]));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Replays a script on its source.
pub fn apply_script<S: Copy>(script: &[EditOp<S>]) -> (Vec<S>, Vec<S>) {
    let mut source = Vec::new();
    let mut target = Vec::new();
    for op in script {
        match *op {
            EditOp::Match(s) => {
                source.push(s);
                target.push(s);
            }
            EditOp::Substitute(a, b) => {
                source.push(a);
                target.push(b);
            }
            EditOp::Insert(b) => target.push(b),
            EditOp::Delete(a) => source.push(a),
        }
    }
    (source, target)
}

/// Substitution counts keyed by `(gold, predicted)`.
pub type SubstitutionMatrix = BTreeMap<(Symbol, Symbol), usize>;

/// Counts substitutions in the alignments of `(prediction, gold)` pairs.
/// Only cells where both symbols pass `keep` are counted; with
/// `exclude_singletons`, cells seen once are dropped.
pub fn substitution_matrix(
    pairs: &[(Vec<Symbol>, Vec<Symbol>)],
    keep: impl Fn(Symbol) -> bool,
    exclude_singletons: bool,
) -> SubstitutionMatrix {
    let mut m = SubstitutionMatrix::new();
    for (pred, gold) in pairs {
        for op in align(gold, pred) {
            if let EditOp::Substitute(g, p) = op {
                if keep(g) && keep(p) {
                    *m.entry((g, p)).or_default() += 1;
                }
            }
        }
    }
    if exclude_singletons {
        m.retain(|_, c| *c > 1);
    }
    m
}

pub fn substitution_csv(m: &SubstitutionMatrix) -> String {
    let mut s = String::from("gold,pred,count\n");
    for ((g, p), c) in m {
        let _ = writeln!(s, "{},{},{c}", csv_field(&g.to_string()), csv_field(&p.to_string()));
    }
    s
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const DENDROGRAM_FORMAT: &str = "protolens-dendrogram/1";

/// One agglomeration step. Leaves are clusters `0..n`; the cluster formed at
/// step `i` gets id `n + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

#[derive(Serialize, Deserialize)]
struct DendrogramFile {
    format: String,
    labels: Vec<String>,
    merges: Vec<Merge>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_points(points: &[Vec<f64>]) -> Result<(), AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(AnalysisError::Ragged);
    }
    Ok(())
}

/// Ward agglomerative clustering with the Lance–Williams update. Merge
/// heights follow the usual convention where two singletons merge at their
/// Euclidean distance. Among equal distances the pair with the smallest
/// cluster ids wins.
pub fn ward_clustering(points: &[Vec<f64>], labels: Vec<String>) -> Result<Dendrogram, AnalysisError> {
    check_points(points)?;
    if labels.len() != points.len() {
        return Err(AnalysisError::Labels {
            labels: labels.len(),
            points: points.len(),
        });
    }
    let n = points.len();
    let total = 2 * n - 1;
    let mut dist = vec![f64::INFINITY; total * total];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&points[i], &points[j]);
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let d = dist[i * total + j];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, a, b) = best.expect("at least two active clusters");
        let new = n + step;
        size[new] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &k in &active {
            let nk = size[k] as f64;
            let dak = dist[a * total + k];
            let dbk = dist[b * total + k];
            let t = nk + na + nb;
            let sq = ((nk + na) * dak * dak + (nk + nb) * dbk * dbk - nk * d * d) / t;
            let v = sq.max(0.0).sqrt();
            dist[new * total + k] = v;
            dist[k * total + new] = v;
        }
        active.push(new);
        merges.push(Merge {
            a,
            b,
            distance: d,
            size: size[new],
        });
    }
    Ok(Dendrogram { labels, merges })
}

impl Dendrogram {
    /// Height of every node, leaves first.
    fn heights(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.labels.len()];
        h.extend(self.merges.iter().map(|m| m.distance));
        h
    }

    /// Newick with branch lengths equal to the height difference between a
    /// node and its parent.
    pub fn to_newick(&self) -> String {
        let n = self.labels.len();
        let heights = self.heights();
        let mut text: Vec<Option<String>> = self.labels.iter().map(|l| Some(newick_label(l))).collect();
        for (i, m) in self.merges.iter().enumerate() {
            let node = n + i;
            let mut part = |c: usize| {
                let t = text[c].take().expect("each cluster merged once");
                format!("{t}:{}", heights[node] - heights[c])
            };
            let (a, b) = (part(m.a), part(m.b));
            text.push(Some(format!("({a},{b})")));
        }
        let root = text.pop().flatten().unwrap_or_else(|| newick_label(&self.labels[0]));
        format!("{root};")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DendrogramFile {
            format: DENDROGRAM_FORMAT.to_string(),
            labels: self.labels.clone(),
            merges: self.merges.clone(),
        })
        .expect("dendrogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Dendrogram, AnalysisError> {
        let f: DendrogramFile = serde_json::from_str(text).map_err(|e| AnalysisError::Format(e.to_string()))?;
        if f.format != DENDROGRAM_FORMAT {
            return Err(AnalysisError::Format(format!("unsupported format {:?}", f.format)));
        }
        if f.labels.is_empty() || f.merges.len() + 1 != f.labels.len() {
            return Err(AnalysisError::Format("merge count must be one less than leaf count".into()));
        }
        Ok(Dendrogram {
            labels: f.labels,
            merges: f.merges,
        })
    }

    /// Indented text listing of the merges.
    pub fn to_table(&self) -> String {
        let mut s = String::from("step\ta\tb\tdistance\tsize\n");
        for (i, m) in self.merges.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{}\t{}\t{}\t{}", m.a, m.b, m.distance, m.size);
        }
        s
    }
}

fn newick_label(l: &str) -> String {
    if l.is_empty() || l.contains(|c: char| "()[]':;,".contains(c) || c.is_whitespace()) {
        format!("'{}'", l.replace('\'', "''"))
    } else {
        l.to_string()
    }
}

/// Exhaustive Ward reference: recomputes every cluster pair's Ward distance
/// from centroids at every step.
pub fn ward_brute_force(points: &[Vec<f64>]) -> Result<Vec<Merge>, AnalysisError> {
    check_points(points)?;
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| {
        let mut c = vec![0.0; points[0].len()];
        for &m in members {
            for (x, p) in c.iter_mut().zip(&points[m]) {
                *x += p;
            }
        }
        c.iter_mut().for_each(|x| *x /= members.len() as f64);
        c
    };
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (ia, ma) = &clusters[x];
                let (ib, mb) = &clusters[y];
                let (na, nb) = (ma.len() as f64, mb.len() as f64);
                let d = (2.0 * na * nb / (na + nb)).sqrt() * euclidean(&centroid(ma), &centroid(mb));
                let (lo, hi) = if ia < ib { (*ia, *ib) } else { (*ib, *ia) };
                let better = match best {
                    None => true,
                    Some((bd, bl, bh, _, _)) => d < bd || (d == bd && (lo, hi) < (bl, bh)),
                };
                if better {
                    best = Some((d, lo, hi, x, y));
                }
            }
        }
        let (d, lo, hi, x, y) = best.expect("two clusters");
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        clusters.remove(y);
        clusters.remove(x);
        merges.push(Merge {
            a: lo,
            b: hi,
            distance: d,
            size: members.len(),
        });
        clusters.push((n + step, members));
    }
    Ok(merges)
}

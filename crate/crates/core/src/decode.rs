//! From arc scores to dependency trees.
//!
//! Scores are laid out dependent-major: row `i - 1` holds the scores of
//! every candidate head `0..=n` (0 is the root) for word `i`. Self-attachment
//! entries are ignored whatever their value.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::biaffine::Biaffine;
use crate::{Error, Result, Tensor};

/// Largest sentence [`brute_force_decode`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Arc score matrix of shape `(n, n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcScores {
    n: usize,
    data: Vec<f64>,
}

impl ArcScores {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * (n + 1) {
            return Err(Error::Dimension {
                op: "arc_scores",
                lhs: vec![n, n + 1],
                rhs: vec![data.len()],
            });
        }
        Ok(ArcScores { n, data })
    }

    /// Builds scores from per-dependent rows of length `n + 1`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * (n + 1));
        for r in rows {
            if r.len() != n + 1 {
                return Err(Error::Dimension {
                    op: "arc_scores",
                    lhs: vec![n, n + 1],
                    rhs: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Ok(ArcScores { n, data })
    }

    pub fn from_tensor(scores: &Tensor) -> Result<Self> {
        match *scores.shape() {
            [n, m] if m == n + 1 => Ok(ArcScores { n, data: scores.to_vec() }),
            _ => Err(Error::Dimension {
                op: "arc_scores",
                lhs: scores.shape().to_vec(),
                rhs: vec![],
            }),
        }
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Row-major `(n, n + 1)` values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Score of attaching word `dep` (1-based) to `head` (0 = root).
    pub fn get(&self, dep: usize, head: usize) -> f64 {
        self.data[(dep - 1) * (self.n + 1) + head]
    }

    /// Sum of the arc scores of a head assignment.
    pub fn total(&self, heads: &[usize]) -> f64 {
        heads
            .iter()
            .enumerate()
            .map(|(i, &h)| self.get(i + 1, h))
            .sum()
    }
}

/// Per-word argmax over candidate heads, ties to the lowest index. The
/// result need not be a tree.
pub fn greedy_decode(scores: &ArcScores) -> Vec<usize> {
    (1..=scores.n)
        .map(|dep| {
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for head in (0..=scores.n).filter(|&h| h != dep) {
                let s = scores.get(dep, head);
                if best == usize::MAX || s > best_score {
                    best = head;
                    best_score = s;
                }
            }
            best
        })
        .collect()
}

/// Whether `heads` is a tree rooted at 0 with exactly one root attachment.
pub fn is_single_root_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    if heads.iter().enumerate().any(|(i, &h)| h > n || h == i + 1) {
        return false;
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return false;
        }
        for p in path {
            state[p] = 2;
        }
    }
    true
}

/// Dense directed graph for Chu-Liu/Edmonds; `w[h][d]` scores `h -> d`.
struct Graph {
    w: Vec<Vec<f64>>,
}

fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let m = parent.len();
    let mut color = vec![0u8; m];
    color[0] = 2;
    for start in 1..m {
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            color[p] = 2;
        }
    }
    None
}

/// Maximum spanning arborescence rooted at node 0. Returns `parent[v]` for
/// every node (`parent[0]` is unused).
fn chu_liu_edmonds(g: &Graph) -> Vec<usize> {
    let m = g.w.len();
    let mut parent = vec![0usize; m];
    for d in 1..m {
        let mut best = usize::MAX;
        for h in (0..m).filter(|&h| h != d) {
            if best == usize::MAX || g.w[h][d] > g.w[best][d] {
                best = h;
            }
        }
        parent[d] = best;
    }
    let Some(cycle) = find_cycle(&parent) else {
        return parent;
    };

    let mut in_cycle = vec![false; m];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    // Contracted graph: cycle-free nodes keep their order (root stays 0),
    // the cycle becomes the last node.
    let outside: Vec<usize> = (0..m).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let mut new_index = vec![usize::MAX; m];
    for (i, &v) in outside.iter().enumerate() {
        new_index[v] = i;
    }
    let size = c + 1;
    let mut w = vec![vec![f64::NEG_INFINITY; size]; size];
    let mut enter_via = vec![usize::MAX; size];
    let mut leave_via = vec![usize::MAX; size];
    for (iu, &u) in outside.iter().enumerate() {
        for (iv, &v) in outside.iter().enumerate() {
            if u != v {
                w[iu][iv] = g.w[u][v];
            }
        }
        let mut best_in = f64::NEG_INFINITY;
        let mut best_out = f64::NEG_INFINITY;
        for &v in &cycle {
            let gain = g.w[u][v] - g.w[parent[v]][v];
            if enter_via[iu] == usize::MAX || gain > best_in {
                best_in = gain;
                enter_via[iu] = v;
            }
            if leave_via[iu] == usize::MAX || g.w[v][u] > best_out {
                best_out = g.w[v][u];
                leave_via[iu] = v;
            }
        }
        w[iu][c] = best_in;
        w[c][iu] = best_out;
    }
    let sub = chu_liu_edmonds(&Graph { w });

    let mut result = parent.clone();
    for (iv, &v) in outside.iter().enumerate().skip(1) {
        let p = sub[iv];
        result[v] = if p == c { leave_via[iv] } else { outside[p] };
    }
    let from = sub[c];
    let entry = enter_via[from];
    result[entry] = outside[from];
    result
}

fn graph_from_scores(scores: &ArcScores) -> Graph {
    let m = scores.n + 1;
    let mut w = vec![vec![f64::NEG_INFINITY; m]; m];
    for d in 1..m {
        for h in (0..m).filter(|&h| h != d) {
            w[h][d] = scores.get(d, h);
        }
    }
    Graph { w }
}

/// Highest-scoring tree with exactly one word attached to the root
/// (Chu-Liu/Edmonds; when the unconstrained optimum has several root
/// children every root child is tried in turn).
pub fn mst_decode(scores: &ArcScores) -> Vec<usize> {
    let n = scores.n;
    if n == 0 {
        return Vec::new();
    }
    let graph = graph_from_scores(scores);
    let parents = chu_liu_edmonds(&graph);
    if parents[1..].iter().filter(|&&p| p == 0).count() == 1 {
        return parents[1..].to_vec();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for root_child in 1..=n {
        let mut g = Graph { w: graph.w.clone() };
        for d in (1..=n).filter(|&d| d != root_child) {
            g.w[0][d] = f64::NEG_INFINITY;
        }
        let heads = chu_liu_edmonds(&g)[1..].to_vec();
        let total = scores.total(&heads);
        if best.as_ref().is_none_or(|(s, _)| total > *s) {
            best = Some((total, heads));
        }
    }
    best.expect("n >= 1").1
}

/// Exhaustive search over all single-root trees; ties go to the
/// lexicographically smallest head vector. For testing only.
pub fn brute_force_decode(scores: &ArcScores) -> Result<Vec<usize>> {
    let n = scores.n;
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Size(format!(
            "brute-force decoding is limited to {BRUTE_FORCE_LIMIT} words, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut heads = vec![usize::MAX; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate(scores, 0, false, &mut heads, &mut best);
    Ok(best.expect("a tree always exists").1)
}

fn closes_cycle(heads: &[usize], dep: usize) -> bool {
    // Follow assigned heads from `dep`; unassigned or root ends the walk.
    let mut v = heads[dep - 1];
    for _ in 0..heads.len() {
        if v == 0 || heads[v - 1] == usize::MAX {
            return false;
        }
        if v == dep {
            return true;
        }
        v = heads[v - 1];
    }
    true
}

fn enumerate(
    scores: &ArcScores,
    i: usize,
    has_root: bool,
    heads: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let n = scores.n;
    if i == n {
        if !has_root || !is_single_root_tree(heads) {
            return;
        }
        let total = scores.total(heads);
        if best.as_ref().is_none_or(|(s, _)| total > *s) {
            *best = Some((total, heads.clone()));
        }
        return;
    }
    for h in 0..=n {
        if h == i + 1 || (h == 0 && has_root) {
            continue;
        }
        heads[i] = h;
        if h == 0 || !closes_cycle(heads, i + 1) {
            enumerate(scores, i + 1, has_root || h == 0, heads, best);
        }
        heads[i] = usize::MAX;
    }
}

/// Index of the largest value in every row, ties to the lowest index.
pub fn argmax_rows(values: &[f64], width: usize) -> Vec<usize> {
    values
        .chunks(width)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Labels for a predicted tree: argmax of the label scorer at each chosen
/// head.
pub fn assign_labels(scorer: &Biaffine, encoded: &Tensor, heads: &[usize]) -> Result<Vec<usize>> {
    let scores = scorer.label_scores(encoded, heads)?;
    let labels = argmax_rows(&scores.data(), scorer.n_labels());
    Ok(labels)
}

//! Turning head outputs into task-level predictions.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Pairwise precedence probabilities, `get(i, j)` = P(sentence i precedes j).
///
/// Construction symmetrizes the input so that `get(i, j) + get(j, i) == 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMatrix {
    n: usize,
    p: Vec<f64>,
}

fn sanitize(p: f64) -> f64 {
    if p.is_nan() {
        0.5
    } else {
        p.clamp(0.0, 1.0)
    }
}

impl PairwiseMatrix {
    /// Builds from a full `n x n` matrix; the diagonal is ignored.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("pairwise matrix must be square".into()));
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    /// Builds from a function giving the raw (possibly asymmetric) score for
    /// every ordered pair `i != j`.
    pub fn from_fn(n: usize, mut raw: impl FnMut(usize, usize) -> f64) -> Self {
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    r[i * n + j] = sanitize(raw(i, j));
                }
            }
        }
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (a, b) = (r[i * n + j], r[j * n + i]);
                p[i * n + j] = if a + b > 0.0 { a / (a + b) } else { 0.5 };
            }
        }
        PairwiseMatrix { n, p }
    }

    /// Builds from one probability per unordered pair `i < j`; the reverse
    /// direction is its complement.
    pub fn from_upper(n: usize, mut before: impl FnMut(usize, usize) -> f64) -> Self {
        let mut upper = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                upper[i * n + j] = sanitize(before(i, j));
            }
        }
        Self::from_fn(n, |i, j| {
            if i < j {
                upper[i * n + j]
            } else {
                1.0 - upper[j * n + i]
            }
        })
    }

    /// Noise-free matrix for a known order (`order[k]` is the k-th item).
    pub fn from_order(order: &[usize]) -> Self {
        let n = order.len();
        let mut rank = vec![0; n];
        for (k, &item) in order.iter().enumerate() {
            rank[item] = k;
        }
        Self::from_fn(n, |i, j| if rank[i] < rank[j] { 1.0 } else { 0.0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    /// `sum_j get(i, j)` over `j != i`.
    pub fn outgoing_mass(&self, i: usize) -> f64 {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum()
    }
}

/// Result of [`topological_order`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderDecoding {
    /// `order[k]` is the index of the item placed k-th.
    pub order: Vec<usize>,
    /// Set when the precedence graph had a cycle and the mass ranking was used.
    pub used_fallback: bool,
}

fn by_mass_then_index(mass: &[f64], a: usize, b: usize) -> Ordering {
    mass[b]
        .partial_cmp(&mass[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Orders items from pairwise precedence probabilities.
///
/// Edges `i -> j` exist where `get(i, j) > 0.5`. Kahn's algorithm runs over
/// that graph, choosing among ready nodes the one with the highest outgoing
/// mass (then the lowest index). If the graph is cyclic, all items are
/// ranked by descending outgoing mass instead, so a permutation is always
/// returned.
pub fn topological_order(pairs: &PairwiseMatrix) -> OrderDecoding {
    let n = pairs.len();
    let mass: Vec<f64> = (0..n).map(|i| pairs.outgoing_mass(i)).collect();
    let edge = |i: usize, j: usize| i != j && pairs.get(i, j) > 0.5;

    let mut in_degree: Vec<usize> = (0..n).map(|j| (0..n).filter(|&i| edge(i, j)).count()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while !ready.is_empty() {
        let pick = (0..ready.len())
            .min_by(|&a, &b| by_mass_then_index(&mass, ready[a], ready[b]))
            .expect("non-empty");
        let node = ready.swap_remove(pick);
        order.push(node);
        for m in 0..n {
            if edge(node, m) {
                in_degree[m] -= 1;
                if in_degree[m] == 0 {
                    ready.push(m);
                }
            }
        }
    }
    if order.len() == n {
        return OrderDecoding {
            order,
            used_fallback: false,
        };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| by_mass_then_index(&mass, a, b));
    OrderDecoding {
        order,
        used_fallback: true,
    }
}

/// Picks the irrelevant sentence: the row with the lowest summed
/// (symmetrized) relevance to all other sentences, lowest index on ties.
pub fn isr_select(relevance: &[Vec<f64>]) -> Result<usize> {
    let n = relevance.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "irrelevant-sentence selection needs at least 2 sentences, got {n}"
        )));
    }
    if relevance.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("relevance matrix must be square".into()));
    }
    let score = |i: usize| -> f64 {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| (sanitize(relevance[i][j]) + sanitize(relevance[j][i])) / 2.0)
            .sum()
    };
    let mut best = 0;
    let mut best_score = score(0);
    for i in 1..n {
        let s = score(i);
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Staged DRR output: connective, then L1 sense, then L2 sense.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CotTriple {
    pub connector: String,
    pub l1: String,
    pub l2: String,
}

impl CotTriple {
    pub fn new(connector: impl Into<String>, l1: impl Into<String>, l2: impl Into<String>) -> Self {
        CotTriple {
            connector: connector.into(),
            l1: l1.into(),
            l2: l2.into(),
        }
    }
}

impl fmt::Display for CotTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} -> {}", self.connector, self.l1, self.l2)
    }
}

/// Parses `connector -> l1 -> l2`. Whitespace around arrows is ignored and
/// `→` is accepted in place of `->`.
pub fn parse_cot(text: &str) -> Result<CotTriple> {
    let normalized = text.replace('→', "->");
    let fields: Vec<&str> = normalized.split("->").map(str::trim).collect();
    match fields.as_slice() {
        [c, l1, l2] if !c.is_empty() && !l1.is_empty() && !l2.is_empty() => Ok(CotTriple::new(*c, *l1, *l2)),
        _ => Err(Error::CotParse { raw: text.to_string() }),
    }
}

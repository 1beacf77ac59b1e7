//! Fully connected cosine graphs over a pivot language's vocabulary, the
//! distance between two such graphs, and the pivot-averaged distance
//! between languages.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::distance_matrix::{fmt_sig9, DistanceMatrix, MatrixError};
use crate::embedding_store::EmbeddingSpace;
use crate::linalg::Matrix;
use crate::scalar::{dot, norm, Real};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("need at least {needed} spaces, got {found}")]
    TooFewSpaces { needed: usize, found: usize },
    #[error("the pivot vocabularies share no word")]
    EmptyIntersection,
    #[error("word `{0}` is missing from the pivot side")]
    MissingWord(String),
    #[error("word `{0}` has a zero vector")]
    ZeroVector(String),
    #[error("graphs have different pivots or node orders")]
    NodeSetMismatch,
    #[error("no graph for pivot {pivot} with second language {second}")]
    MissingGraph { pivot: String, second: String },
    #[error("no pivot left to compare {0} and {1}")]
    NoPivot(String, String),
    #[error("need at least 3 languages, got {0}")]
    TooFewLanguages(usize),
    #[error("language {0} listed twice")]
    DuplicateLanguage(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Cosine graph of the pivot words inside one bilingual space. Only the
/// strict upper triangle is stored; the diagonal is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotGraph<T> {
    pivot: String,
    second: String,
    nodes: Vec<String>,
    upper: Vec<T>,
}

fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl<T: Real> PivotGraph<T> {
    /// Builds a graph from a full weight matrix. Only the strict upper
    /// triangle is read.
    pub fn from_weights(pivot: &str, second: &str, nodes: Vec<String>, weights: &Matrix<T>) -> Self {
        let n = nodes.len();
        assert_eq!((weights.rows(), weights.cols()), (n, n), "weight matrix must be |V|x|V|");
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(weights.get(i, j));
            }
        }
        PivotGraph { pivot: pivot.to_string(), second: second.to_string(), nodes, upper }
    }

    pub fn pivot(&self) -> &str {
        &self.pivot
    }

    pub fn second(&self) -> &str {
        &self.second
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Less => self.upper[packed_index(self.len(), i, j)],
            std::cmp::Ordering::Greater => self.upper[packed_index(self.len(), j, i)],
        }
    }

    /// Weights from node `u` to every other node, in node order.
    pub fn node_repr(&self, u: usize) -> Vec<T> {
        (0..self.len()).filter(|&v| v != u).map(|v| self.weight(u, v)).collect()
    }

    pub fn weights(&self) -> Matrix<T> {
        Matrix::from_fn(self.len(), self.len(), |i, j| self.weight(i, j))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# pivot={} second={}", self.pivot, self.second).unwrap();
        out.push_str("word");
        for w in &self.nodes {
            write!(out, ",{w}").unwrap();
        }
        out.push('\n');
        for (i, w) in self.nodes.iter().enumerate() {
            out.push_str(w);
            for j in 0..self.len() {
                write!(out, ",{}", fmt_sig9(self.weight(i, j))).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Words present in every space, in the first space's order, truncated to
/// `cap` words. Spaces produced by the trainer list words by descending
/// frequency, so the truncation keeps the most frequent words.
pub fn shared_pivot_vocab<T: Real>(spaces: &[&EmbeddingSpace<T>], cap: Option<usize>) -> Result<Vec<String>> {
    if spaces.len() < 2 {
        return Err(GraphError::TooFewSpaces { needed: 2, found: spaces.len() });
    }
    let others: Vec<HashSet<&str>> = spaces[1..].iter().map(|s| s.vocab().iter().map(String::as_str).collect()).collect();
    let words: Vec<String> = spaces[0]
        .vocab()
        .iter()
        .filter(|w| others.iter().all(|set| set.contains(w.as_str())))
        .take(cap.unwrap_or(usize::MAX))
        .cloned()
        .collect();
    if words.is_empty() {
        return Err(GraphError::EmptyIntersection);
    }
    Ok(words)
}

/// Cosine graph over `vocab` using the vectors of `pivot_side`.
pub fn build_graph<T: Real>(pivot_side: &EmbeddingSpace<T>, second: &str, vocab: &[String]) -> Result<PivotGraph<T>> {
    let n = vocab.len();
    let mut unit = Vec::with_capacity(n);
    for w in vocab {
        let v = pivot_side.vector(w).ok_or_else(|| GraphError::MissingWord(w.clone()))?;
        let len = norm(v);
        if len == T::zero() {
            return Err(GraphError::ZeroVector(w.clone()));
        }
        unit.push(v.iter().map(|&x| x / len).collect::<Vec<T>>());
    }
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(dot(&unit[i], &unit[j]).max(-T::one()).min(T::one()));
        }
    }
    Ok(PivotGraph {
        pivot: pivot_side.language().to_string(),
        second: second.to_string(),
        nodes: vocab.to_vec(),
        upper,
    })
}

/// Mean over nodes of the Euclidean distance between matching node
/// representations.
pub fn graph_distance<T: Real>(g1: &PivotGraph<T>, g2: &PivotGraph<T>) -> Result<T> {
    if g1.pivot != g2.pivot || g1.nodes != g2.nodes {
        return Err(GraphError::NodeSetMismatch);
    }
    let n = g1.len();
    if n == 0 {
        return Ok(T::zero());
    }
    let mut sq = vec![T::zero(); n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let d = g1.upper[k] - g2.upper[k];
            let d2 = d * d;
            sq[i] = sq[i] + d2;
            sq[j] = sq[j] + d2;
            k += 1;
        }
    }
    Ok(sq.into_iter().map(|s| s.sqrt()).sum::<T>() / T::of_usize(n))
}

/// Graphs keyed by (pivot, second language).
pub type GraphSet<T> = BTreeMap<(String, String), PivotGraph<T>>;

fn lookup<'a, T>(graphs: &'a GraphSet<T>, pivot: &str, second: &str) -> Result<&'a PivotGraph<T>> {
    graphs.get(&(pivot.to_string(), second.to_string())).ok_or_else(|| GraphError::MissingGraph {
        pivot: pivot.to_string(),
        second: second.to_string(),
    })
}

fn check_languages(languages: &[String]) -> Result<()> {
    if languages.len() < 3 {
        return Err(GraphError::TooFewLanguages(languages.len()));
    }
    let mut seen = HashSet::new();
    for l in languages {
        if !seen.insert(l) {
            return Err(GraphError::DuplicateLanguage(l.clone()));
        }
    }
    Ok(())
}

/// Accumulates graph distances one pivot at a time so only that pivot's
/// graphs need to be in memory.
#[derive(Debug, Clone)]
pub struct DistanceAccumulator<T> {
    languages: Vec<String>,
    sums: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Real> DistanceAccumulator<T> {
    pub fn new(languages: &[String]) -> Result<Self> {
        check_languages(languages)?;
        let n = languages.len();
        Ok(DistanceAccumulator { languages: languages.to_vec(), sums: vec![T::zero(); n * n], counts: vec![0; n * n] })
    }

    /// Adds `d(G_a^(pivot), G_b^(pivot))` to every pair `(a, b)` of
    /// languages other than `pivot`. `graphs` maps second language to graph.
    pub fn add_pivot(&mut self, pivot: &str, graphs: &BTreeMap<String, PivotGraph<T>>) -> Result<()> {
        let n = self.languages.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.languages[i] != pivot && self.languages[j] != pivot)
            .collect();
        let get = |l: &String| {
            graphs.get(l).ok_or_else(|| GraphError::MissingGraph { pivot: pivot.to_string(), second: l.clone() })
        };
        let dists: Vec<T> = pairs
            .par_iter()
            .map(|&(i, j)| graph_distance(get(&self.languages[i])?, get(&self.languages[j])?))
            .collect::<Result<_>>()?;
        for (&(i, j), d) in pairs.iter().zip(dists) {
            self.sums[i * n + j] = self.sums[i * n + j] + d;
            self.counts[i * n + j] += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<DistanceMatrix<T>> {
        let n = self.languages.len();
        let mut values = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let c = self.counts[i * n + j];
                if c == 0 {
                    return Err(GraphError::NoPivot(self.languages[i].clone(), self.languages[j].clone()));
                }
                let v = self.sums[i * n + j] / T::of_usize(c);
                values.set(i, j, v);
                values.set(j, i, v);
            }
        }
        Ok(DistanceMatrix::new(self.languages, values)?)
    }
}

fn by_second<T: Real>(graphs: &GraphSet<T>, pivot: &str, languages: &[String]) -> Result<BTreeMap<String, PivotGraph<T>>> {
    languages
        .iter()
        .filter(|l| l.as_str() != pivot)
        .map(|l| Ok((l.clone(), lookup(graphs, pivot, l)?.clone())))
        .collect()
}

/// Distance between every pair of languages, averaged over every other
/// language of the run acting as pivot.
pub fn language_distance_matrix<T: Real>(graphs: &GraphSet<T>, languages: &[String]) -> Result<DistanceMatrix<T>> {
    language_distance_matrix_with_pivots(graphs, languages, languages)
}

/// As [`language_distance_matrix`] but averaging only over `pivots`
/// (still excluding the two languages compared).
pub fn language_distance_matrix_with_pivots<T: Real>(
    graphs: &GraphSet<T>,
    languages: &[String],
    pivots: &[String],
) -> Result<DistanceMatrix<T>> {
    let mut acc = DistanceAccumulator::new(languages)?;
    for p in pivots {
        acc.add_pivot(p, &by_second(graphs, p, languages)?)?;
    }
    acc.finish()
}

/// `D(pivot, l)` for each target `l`, in target order.
pub fn pivot_distance_row<T: Real>(
    graphs: &GraphSet<T>,
    languages: &[String],
    pivot: &str,
    targets: &[String],
) -> Result<Vec<(String, T)>> {
    check_languages(languages)?;
    targets
        .iter()
        .map(|l| {
            let mut sum = T::zero();
            let mut count = 0;
            for q in languages.iter().filter(|q| q.as_str() != pivot && *q != l) {
                sum = sum + graph_distance(lookup(graphs, q, pivot)?, lookup(graphs, q, l)?)?;
                count += 1;
            }
            if count == 0 {
                return Err(GraphError::NoPivot(pivot.to_string(), l.clone()));
            }
            Ok((l.clone(), sum / T::of_usize(count)))
        })
        .collect()
}

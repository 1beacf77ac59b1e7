//! Word-similarity scoring of bilingual spaces and rank correlation of
//! those scores against language distances.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::corpus_io::SimilarityDataset;
use crate::embedding_store::{cosine, BilingualSpace, EmbeddingSpace, Method};
use crate::scalar::Real;
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("lists have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("input is constant or contains non-finite values")]
    DegenerateInput,
    #[error("only {used} of {total} pairs are in vocabulary")]
    TooFewUsablePairs { used: usize, total: usize },
    #[error("dataset language {dataset} differs from pivot language {pivot}")]
    LanguageMismatch { dataset: String, pivot: String },
    #[error("key sets differ; unmatched: {0:?}")]
    KeyMismatch(Vec<String>),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort { needed: 2, found: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput);
    }
    Ok(())
}

/// Twice the average (1-based) rank of each value; ties share a rank.
/// Doubling keeps every rank an integer.
fn doubled_ranks(x: &[f64]) -> Vec<i64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0i64; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && x[order[end + 1]] == x[order[start]] {
            end += 1;
        }
        let r = (start + 1 + end + 1) as i64;
        for &i in &order[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}

/// Spearman's rank correlation: the Pearson correlation of average ranks.
/// Sums are taken in integer arithmetic so the only rounding is in the
/// final square root and division.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let rx = doubled_ranks(x);
    let ry = doubled_ranks(y);
    let n = x.len() as i128;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&a, &b) in rx.iter().zip(&ry) {
        let (a, b) = (a as i128, b as i128);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx == 0 || vy == 0 {
        return Err(EvalError::DegenerateInput);
    }
    let r = if vx == vy { cov as f64 / vx as f64 } else { cov as f64 / ((vx as f64) * (vy as f64)).sqrt() };
    Ok(r.clamp(-1.0, 1.0))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let mut x_ties = 0u64;
    let mut joint_ties = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                joint_ties += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            x_ties += run_x * (run_x - 1) / 2;
            joint_ties += run_xy * (run_xy - 1) / 2;
            run_x = 1;
            run_xy = 1;
        }
    }
    x_ties += run_x * (run_x - 1) / 2;
    joint_ties += run_xy * (run_xy - 1) / 2;

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = tied_pairs(&ys);

    let pairs = n * (n - 1) / 2;
    let num = pairs as i128 - x_ties as i128 - y_ties as i128 + joint_ties as i128 - 2 * swaps as i128;
    let dx = pairs - x_ties;
    let dy = pairs - y_ties;
    if dx == 0 || dy == 0 {
        return Err(EvalError::DegenerateInput);
    }
    let tau = if dx == dy { num as f64 / dx as f64 } else { num as f64 / ((dx as f64) * (dy as f64)).sqrt() };
    Ok(tau.clamp(-1.0, 1.0))
}

/// Score of one bilingual space on one similarity dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub dataset: String,
    pub pivot: String,
    pub second: String,
    pub method: Method,
    pub delta: f64,
    pub pairs_used: usize,
    pub pairs_total: usize,
}

/// Spearman correlation between cosine predictions on the pivot side and
/// the gold scores. Pairs with an out-of-vocabulary word are skipped.
pub fn evaluate_dataset<T: Real>(space: &BilingualSpace<T>, dataset: &SimilarityDataset) -> Result<EvalResult> {
    let (delta, used) = score_space(space.pivot(), dataset)?;
    Ok(EvalResult {
        dataset: dataset.name.clone(),
        pivot: space.pivot().language().to_string(),
        second: space.second().language().to_string(),
        method: space.method(),
        delta,
        pairs_used: used,
        pairs_total: dataset.pairs.len(),
    })
}

/// Spearman δ and the number of pairs used, for a single monolingual side.
pub fn score_space<T: Real>(space: &EmbeddingSpace<T>, dataset: &SimilarityDataset) -> Result<(f64, usize)> {
    if dataset.language != space.language() {
        return Err(EvalError::LanguageMismatch {
            dataset: dataset.language.clone(),
            pivot: space.language().to_string(),
        });
    }
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for p in &dataset.pairs {
        if let (Some(a), Some(b)) = (space.vector(&p.first), space.vector(&p.second)) {
            let c = cosine(a, b).map_err(|_| EvalError::DegenerateInput)?;
            predicted.push(c.as_f64());
            gold.push(p.gold);
        }
    }
    let used = predicted.len();
    if used < 2 {
        return Err(EvalError::TooFewUsablePairs { used, total: dataset.pairs.len() });
    }
    Ok((spearman(&predicted, &gold)?, used))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RankVariant {
    Spearman,
    Kendall,
}

impl RankVariant {
    pub const ALL: [RankVariant; 2] = [RankVariant::Spearman, RankVariant::Kendall];

    pub fn apply(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            RankVariant::Spearman => spearman(x, y),
            RankVariant::Kendall => kendall_tau(x, y),
        }
    }
}

impl fmt::Display for RankVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankVariant::Spearman => "spearman",
            RankVariant::Kendall => "kendall",
        })
    }
}

/// Largest sample for which the permutation distribution is enumerated.
pub const EXACT_LIMIT: usize = 8;

/// Slack when comparing permuted statistics with the observed one, so
/// equal values computed through different tie patterns count as equal.
const STAT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationScheme {
    /// All n! orderings.
    Exact,
    /// `permutations` random orderings plus the observed one.
    Random { permutations: usize, seed: u64 },
}

impl fmt::Display for PermutationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PermutationScheme::Exact => f.write_str("exact permutation, two-sided"),
            PermutationScheme::Random { permutations, seed } => {
                write!(f, "{permutations} random permutations (seed {seed}), two-sided")
            }
        }
    }
}

/// Rank correlation between performance and language similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub variant: RankVariant,
    pub tau: f64,
    pub p_value: f64,
    pub n: usize,
    pub scheme: PermutationScheme,
}

/// Advances `v` to the next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("successor exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Two-sided permutation test of a rank correlation: exact when
/// `x.len() <= EXACT_LIMIT`, otherwise `permutations` seeded shuffles.
pub fn permutation_test(
    variant: RankVariant,
    x: &[f64],
    y: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let observed = variant.apply(x, y)?;
    let threshold = observed.abs() - STAT_EPS;
    let n = x.len();
    let mut shuffled = y.to_vec();
    let (p_value, scheme) = if n <= EXACT_LIMIT {
        let mut idx: Vec<usize> = (0..n).collect();
        let (mut hits, mut total) = (0u64, 0u64);
        loop {
            for (s, &i) in shuffled.iter_mut().zip(&idx) {
                *s = y[i];
            }
            if variant.apply(x, &shuffled)?.abs() >= threshold {
                hits += 1;
            }
            total += 1;
            if !next_permutation(&mut idx) {
                break;
            }
        }
        (hits as f64 / total as f64, PermutationScheme::Exact)
    } else {
        let mut rng = rng_for(seed, "rank-permutation");
        let mut hits = 0usize;
        for _ in 0..permutations {
            shuffled.shuffle(&mut rng);
            if variant.apply(x, &shuffled)?.abs() >= threshold {
                hits += 1;
            }
        }
        ((1 + hits) as f64 / (permutations + 1) as f64, PermutationScheme::Random { permutations, seed })
    };
    Ok(CorrelationReport { variant, tau: observed, p_value: p_value.min(1.0), n, scheme })
}

/// Correlates δ with similarity `-D(p, l)` over the shared second languages,
/// so a positive value means closer languages score higher.
pub fn correlate_performance(
    deltas: &BTreeMap<String, f64>,
    distances: &BTreeMap<String, f64>,
    variant: RankVariant,
    permutations: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let unmatched: Vec<String> = deltas
        .keys()
        .filter(|k| !distances.contains_key(*k))
        .chain(distances.keys().filter(|k| !deltas.contains_key(*k)))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::KeyMismatch(unmatched));
    }
    if deltas.len() < 3 {
        return Err(EvalError::TooShort { needed: 3, found: deltas.len() });
    }
    let d: Vec<f64> = deltas.values().copied().collect();
    let sim: Vec<f64> = distances.values().map(|&v| -v).collect();
    permutation_test(variant, &d, &sim, permutations, seed)
}

/// Significance marker: `***` below 0.001, `**` below 0.01, `*` below 0.05,
/// `†` below 0.10.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.10 {
        "†"
    } else {
        ""
    }
}

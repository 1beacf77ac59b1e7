//! Distance-matrix statistics: averaging, Mantel tests, 2-D projection and
//! k-means clustering.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::distance_matrix::{DistanceMatrix, MatrixError};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_for, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("lists have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("input is constant or contains non-finite values")]
    DegenerateInput,
    #[error("matrix is degenerate (constant off-diagonal or zero mean)")]
    DegenerateMatrix,
    #[error(transparent)]
    LabelMismatch(#[from] MatrixError),
    #[error("no matrices to average")]
    NoMatrices,
    #[error("at least 99 permutations required, got {0}")]
    TooFewPermutations(usize),
    #[error("k = {k} but only {points} points")]
    KTooLarge { k: usize, points: usize },
    #[error("k and the restart count must be positive")]
    BadConfig,
    #[error("point {0} has a different dimension")]
    DimMismatch(String),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

/// Product-moment correlation.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort { needed: 2, found: x.len() });
    }
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    let den = (sxx * syy).sqrt();
    if !(den > T::zero()) || !den.is_finite() {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / den).max(-T::one()).min(T::one()))
}

/// Entrywise mean of matrices with identical labels. With `rescale`, each
/// input is first divided by its mean off-diagonal entry.
pub fn average_matrices<T: Real>(ms: &[DistanceMatrix<T>], rescale: bool) -> Result<DistanceMatrix<T>> {
    let first = ms.first().ok_or(StatsError::NoMatrices)?;
    for m in &ms[1..] {
        first.ensure_same_labels(m)?;
    }
    let n = first.len();
    let mut sum = Matrix::<T>::zeros(n, n);
    for m in ms {
        let factor = if rescale {
            let mean = m.off_diagonal_mean();
            if !(mean > T::zero()) {
                return Err(StatsError::DegenerateMatrix);
            }
            T::one() / mean
        } else {
            T::one()
        };
        for i in 0..n {
            for j in 0..n {
                sum.set(i, j, sum.get(i, j) + m.get(i, j) * factor);
            }
        }
    }
    let count = T::of_usize(ms.len());
    let values = Matrix::from_fn(n, n, |i, j| sum.get(i, j) / count);
    Ok(DistanceMatrix::new(first.labels().to_vec(), values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sides {
    /// Tests for positive association.
    #[default]
    Greater,
    TwoSided,
}

impl fmt::Display for Sides {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sides::Greater => "one-sided",
            Sides::TwoSided => "two-sided",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MantelResult<T> {
    pub r: T,
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
    pub sides: Sides,
}

fn permuted_triangle<T: Real>(m: &DistanceMatrix<T>, perm: &[usize]) -> Vec<T> {
    let n = perm.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(m.get(perm[i], perm[j]));
        }
    }
    out
}

/// Slack for counting permuted statistics that tie the observed one.
const TIE_EPS: f64 = 1e-12;

fn p_from_counts(ge: usize, le: usize, total: usize, sides: Sides) -> f64 {
    let upper = ge as f64 / total as f64;
    match sides {
        Sides::Greater => upper,
        Sides::TwoSided => (2.0 * upper.min(le as f64 / total as f64)).min(1.0),
    }
}

/// Mantel test: Pearson correlation of the upper triangles, with a
/// p-value from `permutations` simultaneous row/column relabelings of `b`.
/// The observed arrangement is counted once in both numerator and
/// denominator.
pub fn mantel_test<T: Real>(
    a: &DistanceMatrix<T>,
    b: &DistanceMatrix<T>,
    permutations: usize,
    sides: Sides,
    seed: u64,
) -> Result<MantelResult<T>> {
    a.ensure_same_labels(b)?;
    if permutations < 99 {
        return Err(StatsError::TooFewPermutations(permutations));
    }
    let ta = a.upper_triangle();
    let r = pearson(&ta, &b.upper_triangle()).map_err(|_| StatsError::DegenerateMatrix)?;
    let threshold = r.as_f64();
    let n = a.len();
    let stats: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_seed(seed, &format!("mantel/{i}")));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            pearson(&ta, &permuted_triangle(b, &perm)).map(|v| v.as_f64())
        })
        .collect::<Result<_>>()?;
    let ge = 1 + stats.iter().filter(|&&s| s >= threshold - TIE_EPS).count();
    let le = 1 + stats.iter().filter(|&&s| s <= threshold + TIE_EPS).count();
    Ok(MantelResult { r, p_value: p_from_counts(ge, le, permutations + 1, sides), permutations, seed, sides })
}

/// Mantel p-value over every relabeling of `b`. Feasible for small
/// matrices only.
pub fn mantel_exact<T: Real>(a: &DistanceMatrix<T>, b: &DistanceMatrix<T>, sides: Sides) -> Result<f64> {
    a.ensure_same_labels(b)?;
    let ta = a.upper_triangle();
    let threshold = pearson(&ta, &b.upper_triangle()).map_err(|_| StatsError::DegenerateMatrix)?.as_f64();
    let mut perm: Vec<usize> = (0..a.len()).collect();
    let (mut ge, mut le, mut total) = (0, 0, 0);
    loop {
        let s = pearson(&ta, &permuted_triangle(b, &perm))?.as_f64();
        ge += usize::from(s >= threshold - TIE_EPS);
        le += usize::from(s <= threshold + TIE_EPS);
        total += 1;
        let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
        let j = (i..perm.len()).rev().find(|&j| perm[j] > perm[i - 1]).expect("successor exists");
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    Ok(p_from_counts(ge, le, total, sides))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionKind {
    /// Principal components of the matrix rows.
    #[default]
    Pca,
    /// Classical multidimensional scaling of the distances.
    Mds,
}

/// Two-dimensional coordinates, one per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub labels: Vec<String>,
    pub coords: Vec<[T; 2]>,
    /// Share of total variance carried by the two kept components.
    pub explained: T,
    /// All eigenvalues of the decomposed matrix, descending.
    pub eigenvalues: Vec<T>,
}

fn orient<T: Real>(vectors: &Matrix<T>, j: usize) -> T {
    let lead = vectors.col(j).into_iter().fold(T::zero(), |b, v| if v.abs() > b.abs() { v } else { b });
    if lead < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

/// Projects each row of the matrix, treated as a feature vector, onto the
/// top two principal directions. Each direction's largest-magnitude
/// loading is made positive.
pub fn pca_2d<T: Real>(m: &DistanceMatrix<T>) -> Result<Projection<T>> {
    pca_rows(m.labels(), m.values())
}

/// PCA of arbitrary row vectors, as used by [`pca_2d`].
pub fn pca_rows<T: Real>(labels: &[String], rows: &Matrix<T>) -> Result<Projection<T>> {
    let (n, f) = (rows.rows(), rows.cols());
    if n < 3 || f < 2 {
        return Err(StatsError::TooShort { needed: 3, found: n });
    }
    let (xc, _) = rows.center_columns();
    let denom = T::of_usize(n - 1);
    let cov = xc.t_matmul(&xc);
    let cov = Matrix::from_fn(f, f, |i, j| cov.get(i, j) / denom);
    let eig = symmetric_eigen(&cov);
    let total: T = eig.values.iter().map(|&l| l.max(T::zero())).sum();
    if !(total > T::zero()) {
        return Err(StatsError::DegenerateMatrix);
    }
    let signs = [orient(&eig.vectors, 0), orient(&eig.vectors, 1)];
    let coords = (0..n)
        .map(|i| {
            let row = xc.row(i);
            [0, 1].map(|k| signs[k] * (0..f).map(|c| row[c] * eig.vectors.get(c, k)).sum::<T>())
        })
        .collect();
    let explained = (eig.values[0].max(T::zero()) + eig.values[1].max(T::zero())) / total;
    Ok(Projection { labels: labels.to_vec(), coords, explained, eigenvalues: eig.values })
}

/// Classical MDS: embeds the double-centered squared distances with the top
/// two eigenpairs.
pub fn mds_2d<T: Real>(m: &DistanceMatrix<T>) -> Result<Projection<T>> {
    let n = m.len();
    if n < 3 {
        return Err(StatsError::TooShort { needed: 3, found: n });
    }
    let half = T::of(0.5);
    let sq = Matrix::from_fn(n, n, |i, j| m.get(i, j) * m.get(i, j));
    let nn = T::of_usize(n);
    let row_mean: Vec<T> = (0..n).map(|i| sq.row(i).iter().copied().sum::<T>() / nn).collect();
    let grand = row_mean.iter().copied().sum::<T>() / nn;
    let b = Matrix::from_fn(n, n, |i, j| -half * (sq.get(i, j) - row_mean[i] - row_mean[j] + grand));
    let eig = symmetric_eigen(&b);
    let total: T = eig.values.iter().map(|&l| l.max(T::zero())).sum();
    if !(total > T::zero()) {
        return Err(StatsError::DegenerateMatrix);
    }
    let scale = [eig.values[0].max(T::zero()).sqrt(), eig.values[1].max(T::zero()).sqrt()];
    let signs = [orient(&eig.vectors, 0), orient(&eig.vectors, 1)];
    let coords = (0..n)
        .map(|i| [0, 1].map(|k| signs[k] * scale[k] * eig.vectors.get(i, k)))
        .collect();
    let explained = (eig.values[0].max(T::zero()) + eig.values[1].max(T::zero())) / total;
    Ok(Projection { labels: m.labels().to_vec(), coords, explained, eigenvalues: eig.values })
}

pub fn project_2d<T: Real>(m: &DistanceMatrix<T>, kind: ProjectionKind) -> Result<Projection<T>> {
    match kind {
        ProjectionKind::Pca => pca_2d(m),
        ProjectionKind::Mds => mds_2d(m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansConfig { k, restarts: 10, max_iter: 100, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub k: usize,
    pub labels: Vec<String>,
    /// Cluster ids numbered by first appearance in label order.
    pub assignment: Vec<usize>,
    pub inertia: T,
    pub seed: u64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<T>,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Real>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(p, &centroids[0]));
    for (c, cen) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<T: Real>(points: &[&[T]], k: usize, rng: &mut impl Rng) -> Vec<Vec<T>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    while centroids.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1.as_f64()).collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[next].to_vec());
    }
    centroids
}

fn lloyd<T: Real>(points: &[&[T]], mut centroids: Vec<Vec<T>>, max_iter: usize) -> (Vec<usize>, Vec<T>) {
    let dim = points[0].len();
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let (next, dists): (Vec<usize>, Vec<T>) = points.iter().map(|p| nearest(p, &centroids)).unzip();
        history.push(dists.into_iter().sum());
        if next == assignment {
            break;
        }
        assignment = next;
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<&[T]> = points.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            if members.is_empty() {
                continue;
            }
            let count = T::of_usize(members.len());
            for (d, slot) in cen.iter_mut().enumerate().take(dim) {
                *slot = members.iter().map(|m| m[d]).sum::<T>() / count;
            }
        }
    }
    if assignment.is_empty() {
        assignment = points.iter().map(|p| nearest(p, &centroids).0).collect();
    }
    (assignment, history)
}

/// k-means with k-means++ seeding; the restart with the lowest inertia
/// wins (earliest on ties).
pub fn kmeans<T: Real>(points: &[(String, Vec<T>)], config: KmeansConfig) -> Result<Clustering<T>> {
    let KmeansConfig { k, restarts, max_iter, seed } = config;
    if k == 0 || restarts == 0 || max_iter == 0 {
        return Err(StatsError::BadConfig);
    }
    if k > points.len() {
        return Err(StatsError::KTooLarge { k, points: points.len() });
    }
    let dim = points[0].1.len();
    if let Some((l, _)) = points.iter().find(|(_, v)| v.len() != dim) {
        return Err(StatsError::DimMismatch(l.clone()));
    }
    let vs: Vec<&[T]> = points.iter().map(|(_, v)| v.as_slice()).collect();
    let mut best: Option<(Vec<usize>, Vec<T>)> = None;
    for r in 0..restarts {
        let mut rng = rng_for(seed, &format!("kmeans/{r}"));
        let (assignment, history) = lloyd(&vs, plus_plus(&vs, k, &mut rng), max_iter);
        let inertia = *history.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|(_, h)| inertia < *h.last().unwrap()) {
            best = Some((assignment, history));
        }
    }
    let (raw, history) = best.expect("at least one restart");
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    let assignment = raw
        .iter()
        .map(|&c| {
            if relabel[c] == usize::MAX {
                relabel[c] = next;
                next += 1;
            }
            relabel[c]
        })
        .collect();
    Ok(Clustering {
        k,
        labels: points.iter().map(|(l, _)| l.clone()).collect(),
        assignment,
        inertia: *history.last().unwrap(),
        seed,
        history,
    })
}

//! Canonical correlation projection of two independently trained spaces,
//! using 1-best translation pairs extracted from word alignments.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus_io::{AlignedCorpus, AlignmentLinks, CorpusError};
use crate::embedding_store::{EmbeddingError, EmbeddingSpace};
use crate::linalg::{inverse_sqrt, svd, Matrix};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum CcaError {
    #[error("no source word reaches the minimum pair count")]
    EmptyLexicon,
    #[error("{found} usable translation pairs, need at least {needed}")]
    TooFewPairs { found: usize, needed: usize },
    #[error("{0} covariance is singular; use a positive ridge")]
    SingularCovariance(&'static str),
    #[error("space has dimension {found}, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cannot keep {keep} components from spaces of dimension {src} and {tgt}")]
    BadComponentCount { keep: usize, src: usize, tgt: usize },
    #[error("ridge must be non-negative and finite")]
    BadRidge,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = CcaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub source: String,
    pub target: String,
    pub count: u64,
}

/// 1-best translation pairs, one per source word, sorted by source word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationLexicon {
    entries: Vec<LexiconEntry>,
}

impl TranslationLexicon {
    pub fn new(mut entries: Vec<LexiconEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(CcaError::EmptyLexicon);
        }
        entries.sort_by(|a, b| a.source.cmp(&b.source));
        if let Some(w) = entries.windows(2).find(|w| w[0].source == w[1].source) {
            return Err(CcaError::Malformed {
                line: 0,
                reason: format!("source word `{}` appears twice", w[0].source),
            });
        }
        Ok(TranslationLexicon { entries })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, source: &str) -> Option<&LexiconEntry> {
        self.entries
            .binary_search_by(|e| e.source.as_str().cmp(source))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// `source\ttarget\tcount` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.source, e.target, e.count).unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            let count = cells.get(2).and_then(|c| c.trim().parse().ok());
            match (cells.len(), count) {
                (3, Some(count)) => entries.push(LexiconEntry {
                    source: cells[0].to_string(),
                    target: cells[1].to_string(),
                    count,
                }),
                _ => {
                    return Err(CcaError::Malformed {
                        line: idx + 1,
                        reason: "expected source\\ttarget\\tcount".into(),
                    })
                }
            }
        }
        Self::new(entries)
    }
}

/// Counts aligned token pairs and keeps, for each source word, its most
/// frequent target (ties go to the lexicographically smallest target).
/// Source words whose best count is below `min_pair_count` are dropped.
pub fn extract_lexicon(corpus: &AlignedCorpus, links: &AlignmentLinks, min_pair_count: u64) -> Result<TranslationLexicon> {
    let mut counts: HashMap<&str, HashMap<&str, u64>> = HashMap::new();
    for (pair, set) in corpus.pairs().iter().zip(links.per_pair()) {
        for &(i, j) in set {
            *counts.entry(pair.a[i].as_str()).or_default().entry(pair.b[j].as_str()).or_default() += 1;
        }
    }
    let mut entries = Vec::new();
    for (source, targets) in counts {
        let (target, count) = targets
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .expect("at least one target per source");
        if count >= min_pair_count {
            entries.push(LexiconEntry { source: source.to_string(), target: target.to_string(), count });
        }
    }
    TranslationLexicon::new(entries)
}

/// Ridge added to both covariance diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-8 · trace(Σ) / d`, computed per side.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

/// Fitted projections. Column `j` of `src_proj`/`tgt_proj` maps centered
/// vectors onto the `j`-th canonical pair, whose correlation is
/// `correlations[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel<T> {
    pub src_mean: Vec<T>,
    pub tgt_mean: Vec<T>,
    pub src_proj: Matrix<T>,
    pub tgt_proj: Matrix<T>,
    pub correlations: Vec<T>,
}

impl<T: Real> CcaModel<T> {
    pub fn components(&self) -> usize {
        self.correlations.len()
    }

    /// Human-readable dump for auditing.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "cca src_dim={} tgt_dim={} components={}",
            self.src_proj.rows(),
            self.tgt_proj.rows(),
            self.components()
        )
        .unwrap();
        let line = |out: &mut String, name: &str, xs: &[T]| {
            out.push_str(name);
            for x in xs {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        };
        line(&mut out, "correlations", &self.correlations);
        line(&mut out, "src_mean", &self.src_mean);
        line(&mut out, "tgt_mean", &self.tgt_mean);
        for (name, m) in [("src_proj", &self.src_proj), ("tgt_proj", &self.tgt_proj)] {
            writeln!(out, "{name} {}x{}", m.rows(), m.cols()).unwrap();
            for i in 0..m.rows() {
                line(&mut out, " ", m.row(i));
            }
        }
        out
    }
}

fn ridge_value<T: Real>(ridge: Ridge, cov: &Matrix<T>) -> Result<T> {
    let g = match ridge {
        Ridge::Auto => cov.trace().as_f64() * 1e-8 / cov.rows() as f64,
        Ridge::Fixed(g) => g,
    };
    if !(g >= 0.0 && g.is_finite()) {
        return Err(CcaError::BadRidge);
    }
    Ok(T::of(g))
}

/// CCA on paired rows of `x` (n × dx) and `y` (n × dy), keeping `keep`
/// components (default: `min(dx, dy)`).
pub fn fit_cca_paired<T: Real>(x: &Matrix<T>, y: &Matrix<T>, ridge: Ridge, keep: Option<usize>) -> Result<CcaModel<T>> {
    assert_eq!(x.rows(), y.rows(), "paired matrices need equal row counts");
    let (n, dx, dy) = (x.rows(), x.cols(), y.cols());
    let k = keep.unwrap_or(dx.min(dy));
    if k == 0 || k > dx.min(dy) {
        return Err(CcaError::BadComponentCount { keep: k, src: dx, tgt: dy });
    }
    let needed = k.max(2);
    if n < needed {
        return Err(CcaError::TooFewPairs { found: n, needed });
    }

    let (xc, src_mean) = x.center_columns();
    let (yc, tgt_mean) = y.center_columns();
    let denom = T::of_usize(n - 1);
    let scale = |m: Matrix<T>| Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) / denom);
    let mut sxx = scale(xc.t_matmul(&xc));
    let mut syy = scale(yc.t_matmul(&yc));
    let sxy = scale(xc.t_matmul(&yc));
    let gx = ridge_value(ridge, &sxx)?;
    let gy = ridge_value(ridge, &syy)?;
    for i in 0..dx {
        sxx.set(i, i, sxx.get(i, i) + gx);
    }
    for i in 0..dy {
        syy.set(i, i, syy.get(i, i) + gy);
    }

    let (wx, _) = inverse_sqrt(&sxx).ok_or(CcaError::SingularCovariance("source"))?;
    let (wy, _) = inverse_sqrt(&syy).ok_or(CcaError::SingularCovariance("target"))?;
    let m = wx.matmul(&sxy).matmul(&wy);
    let dec = svd(&m);

    let mut a = wx.matmul(&Matrix::from_fn(dx, k, |i, j| dec.u.get(i, j)));
    let mut b = wy.matmul(&Matrix::from_fn(dy, k, |i, j| dec.v.get(i, j)));
    for j in 0..k {
        let col = a.col(j);
        let lead = col.iter().copied().fold(T::zero(), |best, v| if v.abs() > best.abs() { v } else { best });
        if lead < T::zero() {
            for i in 0..dx {
                a.set(i, j, -a.get(i, j));
            }
            for i in 0..dy {
                b.set(i, j, -b.get(i, j));
            }
        }
    }
    let correlations = dec.singular[..k].iter().map(|&s| s.max(T::zero()).min(T::one())).collect();
    Ok(CcaModel { src_mean, tgt_mean, src_proj: a, tgt_proj: b, correlations })
}

/// Rows of `src` and `tgt` for lexicon entries with both words in
/// vocabulary, in lexicon order.
pub fn paired_rows<T: Real>(
    src: &EmbeddingSpace<T>,
    tgt: &EmbeddingSpace<T>,
    lexicon: &TranslationLexicon,
) -> (Matrix<T>, Matrix<T>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for e in lexicon.entries() {
        if let (Some(x), Some(y)) = (src.vector(&e.source), tgt.vector(&e.target)) {
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
            n += 1;
        }
    }
    (Matrix::new(n, src.dim(), xs), Matrix::new(n, tgt.dim(), ys))
}

pub fn fit_cca<T: Real>(
    src: &EmbeddingSpace<T>,
    tgt: &EmbeddingSpace<T>,
    lexicon: &TranslationLexicon,
    ridge: Ridge,
    keep: Option<usize>,
) -> Result<CcaModel<T>> {
    let (x, y) = paired_rows(src, tgt, lexicon);
    fit_cca_paired(&x, &y, ridge, keep)
}

/// Centers with the side's mean and applies the side's projection. The
/// vocabulary is unchanged; output dimension is the component count.
pub fn project<T: Real>(space: &EmbeddingSpace<T>, model: &CcaModel<T>, side: Side) -> Result<EmbeddingSpace<T>> {
    let (mean, proj) = match side {
        Side::Source => (&model.src_mean, &model.src_proj),
        Side::Target => (&model.tgt_mean, &model.tgt_proj),
    };
    if space.dim() != proj.rows() {
        return Err(CcaError::DimMismatch { expected: proj.rows(), found: space.dim() });
    }
    let k = proj.cols();
    let mut data = Vec::with_capacity(space.len() * k);
    let mut centered = vec![T::zero(); space.dim()];
    for i in 0..space.len() {
        for ((c, &x), &m) in centered.iter_mut().zip(space.row(i)).zip(mean) {
            *c = x - m;
        }
        for j in 0..k {
            data.push((0..proj.rows()).map(|r| centered[r] * proj.get(r, j)).sum());
        }
    }
    Ok(EmbeddingSpace::new(space.language(), space.vocab().to_vec(), k, data)?)
}

/// Components to keep when truncating to a fraction of the dimension.
pub fn components_for_ratio(dim: usize, ratio: f64) -> usize {
    ((dim as f64 * ratio).round() as usize).clamp(1, dim)
}

/// Per-component Pearson correlation between two projected samples.
pub fn component_correlations<T: Real>(x: &Matrix<T>, y: &Matrix<T>) -> Vec<T> {
    let (xc, _) = x.center_columns();
    let (yc, _) = y.center_columns();
    (0..x.cols())
        .map(|j| {
            let (a, b) = (xc.col(j), yc.col(j));
            let sab: T = a.iter().zip(&b).map(|(&p, &q)| p * q).sum();
            let saa: T = a.iter().map(|&p| p * p).sum();
            let sbb: T = b.iter().map(|&q| q * q).sum();
            sab / (saa * sbb).sqrt()
        })
        .collect()
}

/// Counts of each (source, target) link, for diagnostics.
pub fn link_counts(corpus: &AlignedCorpus, links: &AlignmentLinks) -> BTreeMap<(String, String), u64> {
    let mut out = BTreeMap::new();
    for (pair, set) in corpus.pairs().iter().zip(links.per_pair()) {
        for &(i, j) in set {
            *out.entry((pair.a[i].clone(), pair.b[j].clone())).or_default() += 1;
        }
    }
    out
}

//! Vocabularies, dense embedding matrices and the plain-text interchange
//! format (`count dim` header, then `word v1 ... v_dim` per line).

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus_io::{read_file, write_file, CorpusError};
use crate::scalar::{dot, norm, Real};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Io(#[from] CorpusError),
    #[error("line {line}: {reason}")]
    HeaderMismatch { line: usize, reason: String },
    #[error("line {line}: duplicate word `{word}`")]
    DuplicateWord { line: usize, word: String },
    #[error("line {line}: non-finite value in vector for `{word}`")]
    NonFiniteValue { line: usize, word: String },
    #[error("line {line}: cannot parse `{token}`")]
    Malformed { line: usize, token: String },
    #[error("vector for `{0}` is zero")]
    ZeroVector(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("`{0}` is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("k = {k} must be in 1..{vocab}")]
    InvalidK { k: usize, vocab: usize },
    #[error("refusing to save an empty vocabulary")]
    EmptyVocabulary,
    #[error("both sides are `{0}`")]
    SameLanguage(String),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Bilingual embedding construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Joint monolingual + cross-lingual training.
    Joint,
    /// Canonical correlation projection of two monolingual spaces.
    Cca,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Joint, Method::Cca];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Joint => "JOINT",
            Method::Cca => "CCA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "JOINT" | "BBA" => Ok(Method::Joint),
            "CCA" => Ok(Method::Cca),
            _ => Err(format!("unknown method `{s}` (expected JOINT or CCA)")),
        }
    }
}

/// Vocabulary plus a `|vocab| × dim` row-major matrix. Immutable once built;
/// vocabulary order is the canonical order used everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace<T> {
    language: String,
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
}

impl<T: Real> EmbeddingSpace<T> {
    pub fn new(language: &str, vocab: Vec<String>, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        if data.len() != vocab.len() * dim {
            return Err(EmbeddingError::HeaderMismatch {
                line: 0,
                reason: format!("{} values for {} words of dimension {dim}", data.len(), vocab.len()),
            });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateWord { line: i + 2, word: w.clone() });
            }
            let row = &data[i * dim..(i + 1) * dim];
            if row.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFiniteValue { line: i + 2, word: w.clone() });
            }
            if row.iter().all(|x| *x == T::zero()) {
                return Err(EmbeddingError::ZeroVector(w.clone()));
            }
        }
        Ok(EmbeddingSpace { language: language.to_string(), dim, vocab, index, data })
    }

    pub fn from_rows(language: &str, vocab: Vec<String>, rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(EmbeddingError::DimMismatch(dim, r.len()));
        }
        Self::new(language, vocab, dim, rows.concat())
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[T]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Same space with a different language tag.
    pub fn with_language(mut self, language: &str) -> Self {
        self.language = language.to_string();
        self
    }

    /// Every vector multiplied by `factor` (must be non-zero).
    pub fn scaled(&self, factor: T) -> Result<Self> {
        let data = self.data.iter().map(|&x| x * factor).collect();
        Self::new(&self.language, self.vocab.clone(), self.dim, data)
    }

    pub fn to_text(&self) -> Result<String> {
        if self.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        let mut out = String::with_capacity(self.data.len() * 12);
        writeln!(out, "{} {}", self.len(), self.dim).unwrap();
        for (i, w) in self.vocab.iter().enumerate() {
            out.push_str(w);
            for x in self.row(i) {
                // `Display` prints the shortest string that parses back exactly.
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn load_space<T: Real>(path: &Path, language: &str) -> Result<EmbeddingSpace<T>> {
    parse_space(&read_file(path)?, language)
}

pub fn parse_space<T: Real>(text: &str, language: &str) -> Result<EmbeddingSpace<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or(EmbeddingError::HeaderMismatch { line: 1, reason: "missing header".into() })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| EmbeddingError::HeaderMismatch { line: 1, reason: format!("bad header `{header}`") })
    };
    if fields.len() != 2 {
        return Err(EmbeddingError::HeaderMismatch { line: 1, reason: format!("bad header `{header}`") });
    }
    let count = parse_usize(fields[0])?;
    let dim = parse_usize(fields[1])?;
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }

    let mut vocab = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut seen = HashMap::with_capacity(count);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line").to_string();
        let before = data.len();
        for token in parts {
            let v: T = token
                .parse()
                .map_err(|_| EmbeddingError::Malformed { line: line_no, token: token.to_string() })?;
            if !v.is_finite() {
                return Err(EmbeddingError::NonFiniteValue { line: line_no, word });
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(EmbeddingError::HeaderMismatch {
                line: line_no,
                reason: format!("expected {dim} values, found {}", data.len() - before),
            });
        }
        if seen.insert(word.clone(), line_no).is_some() {
            return Err(EmbeddingError::DuplicateWord { line: line_no, word });
        }
        vocab.push(word);
    }
    if vocab.len() != count {
        return Err(EmbeddingError::HeaderMismatch {
            line: 1,
            reason: format!("header declares {count} rows, found {}", vocab.len()),
        });
    }
    EmbeddingSpace::new(language, vocab, dim, data)
}

pub fn save_space<T: Real>(space: &EmbeddingSpace<T>, path: &Path) -> Result<()> {
    write_file(path, &space.to_text()?)?;
    Ok(())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimMismatch(u.len(), v.len()));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == T::zero() || nv == T::zero() {
        return Err(EmbeddingError::ZeroVector(String::new()));
    }
    Ok((dot(u, v) / (nu * nv)).max(-T::one()).min(T::one()))
}

/// Word frequencies in canonical order: descending count, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VocabCounts {
    entries: Vec<(String, u64)>,
}

impl VocabCounts {
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (w, c) in counts {
            *merged.entry(w).or_default() += c;
        }
        let mut entries: Vec<(String, u64)> = merged.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        VocabCounts { entries }
    }

    pub fn from_sentences<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for s in sentences {
            for w in s.as_ref() {
                if let Some(c) = counts.get_mut(w.as_str()) {
                    *c += 1;
                } else {
                    counts.insert(w.clone(), 1);
                }
            }
        }
        Self::from_counts(counts)
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|(w, _)| w.clone()).collect()
    }
}

/// Keeps the words occurring at least `threshold` times (inclusive), in
/// canonical order.
pub fn filter_min_count(counts: &VocabCounts, threshold: u64) -> VocabCounts {
    VocabCounts { entries: counts.entries.iter().filter(|(_, c)| *c >= threshold).cloned().collect() }
}

/// The `k` words most similar to `word`, by descending cosine. Ties keep
/// vocabulary order.
pub fn nearest_neighbors<T: Real>(space: &EmbeddingSpace<T>, word: &str, k: usize) -> Result<Vec<(String, T)>> {
    let q = space.index_of(word).ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))?;
    if k == 0 || k >= space.len() {
        return Err(EmbeddingError::InvalidK { k, vocab: space.len() });
    }
    let query = space.row(q);
    let mut scored: Vec<(usize, T)> = (0..space.len())
        .filter(|&i| i != q)
        .map(|i| Ok((i, cosine(query, space.row(i))?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite cosine").then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(i, c)| (space.vocab[i].clone(), c)).collect())
}

/// Two embedding spaces sharing one coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualSpace<T> {
    pivot: EmbeddingSpace<T>,
    second: EmbeddingSpace<T>,
    method: Method,
}

impl<T: Real> BilingualSpace<T> {
    pub fn new(pivot: EmbeddingSpace<T>, second: EmbeddingSpace<T>, method: Method) -> Result<Self> {
        if pivot.dim() != second.dim() {
            return Err(EmbeddingError::DimMismatch(pivot.dim(), second.dim()));
        }
        if pivot.language() == second.language() {
            return Err(EmbeddingError::SameLanguage(pivot.language().to_string()));
        }
        Ok(BilingualSpace { pivot, second, method })
    }

    pub fn pivot(&self) -> &EmbeddingSpace<T> {
        &self.pivot
    }

    pub fn second(&self) -> &EmbeddingSpace<T> {
        &self.second
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn into_sides(self) -> (EmbeddingSpace<T>, EmbeddingSpace<T>) {
        (self.pivot, self.second)
    }
}

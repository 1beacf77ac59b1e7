use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("{labels} labels but a {rows}x{cols} matrix")]
    Shape { labels: usize, rows: usize, cols: usize },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("entry ({0}, {1}) is not finite")]
    NonFinite(String, String),
    #[error("entry ({0}, {1}) is negative")]
    Negative(String, String),
    #[error("diagonal entry for `{0}` is not zero")]
    NonZeroDiagonal(String),
    #[error("entries ({0}, {1}) and ({1}, {0}) differ")]
    Asymmetric(String, String),
    #[error("label sets differ: {0:?} vs {1:?}")]
    LabelMismatch(Vec<String>, Vec<String>),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Symmetric, non-negative matrix with an exactly zero diagonal, indexed by
/// language labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    labels: Vec<String>,
    values: Matrix<T>,
}

impl<T: Real> DistanceMatrix<T> {
    pub fn new(labels: Vec<String>, values: Matrix<T>) -> Result<Self, MatrixError> {
        let n = labels.len();
        if values.rows() != n || values.cols() != n {
            return Err(MatrixError::Shape { labels: n, rows: values.rows(), cols: values.cols() });
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(MatrixError::DuplicateLabel(l.clone()));
            }
        }
        for i in 0..n {
            if values.get(i, i) != T::zero() {
                return Err(MatrixError::NonZeroDiagonal(labels[i].clone()));
            }
            for j in 0..n {
                let v = values.get(i, j);
                if !v.is_finite() {
                    return Err(MatrixError::NonFinite(labels[i].clone(), labels[j].clone()));
                }
                if v < T::zero() {
                    return Err(MatrixError::Negative(labels[i].clone(), labels[j].clone()));
                }
                if v != values.get(j, i) {
                    return Err(MatrixError::Asymmetric(labels[i].clone(), labels[j].clone()));
                }
            }
        }
        Ok(DistanceMatrix { labels, values })
    }

    /// Builds a matrix from a pairwise function evaluated on the upper
    /// triangle and mirrored.
    pub fn from_pairwise<E>(
        labels: Vec<String>,
        mut f: impl FnMut(usize, usize) -> Result<T, E>,
    ) -> Result<Self, E>
    where
        E: From<MatrixError>,
    {
        let n = labels.len();
        let mut values = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j)?;
                values.set(i, j, v);
                values.set(j, i, v);
            }
        }
        Ok(Self::new(labels, values)?)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values.get(i, j)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get_by_label(&self, a: &str, b: &str) -> Option<T> {
        Some(self.get(self.index_of(a)?, self.index_of(b)?))
    }

    /// Off-diagonal upper-triangle entries, row by row.
    pub fn upper_triangle(&self) -> Vec<T> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Mean of the off-diagonal entries.
    pub fn off_diagonal_mean(&self) -> T {
        let upper = self.upper_triangle();
        if upper.is_empty() {
            return T::zero();
        }
        crate::scalar::mean(&upper)
    }

    pub fn scaled(&self, factor: T) -> Self {
        let n = self.len();
        let values = Matrix::from_fn(n, n, |i, j| self.get(i, j) * factor);
        DistanceMatrix { labels: self.labels.clone(), values }
    }

    /// Restricts (and reorders) the matrix to `labels`.
    pub fn select(&self, labels: &[String]) -> Result<Self, MatrixError> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Option<_>>()
            .ok_or_else(|| MatrixError::LabelMismatch(labels.to_vec(), self.labels.clone()))?;
        let values = Matrix::from_fn(idx.len(), idx.len(), |i, j| self.get(idx[i], idx[j]));
        Self::new(labels.to_vec(), values)
    }

    pub fn ensure_same_labels(&self, other: &Self) -> Result<(), MatrixError> {
        if self.labels != other.labels {
            return Err(MatrixError::LabelMismatch(self.labels.clone(), other.labels.clone()));
        }
        Ok(())
    }

    /// CSV with a `lang` header row of labels and one labeled row per
    /// language. `comments` are emitted first as `# ` lines. Values are
    /// printed with 9 significant digits.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            writeln!(out, "# {c}").unwrap();
        }
        out.push_str("lang");
        for l in &self.labels {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.len() {
                write!(out, ",{}", fmt_sig9(self.get(i, j))).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or(MatrixError::Parse { line: 0, reason: "missing header row".into() })?;
        let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let n = labels.len();
        let mut values = Matrix::zeros(n, n);
        let mut seen = 0;
        for (line, row) in lines {
            let cells: Vec<&str> = row.split(',').map(str::trim).collect();
            if cells.len() != n + 1 {
                return Err(MatrixError::Parse {
                    line,
                    reason: format!("expected {} cells, found {}", n + 1, cells.len()),
                });
            }
            if seen >= n || cells[0] != labels[seen] {
                return Err(MatrixError::Parse {
                    line,
                    reason: format!("row label `{}` out of order", cells[0]),
                });
            }
            for (j, cell) in cells[1..].iter().enumerate() {
                let v: T = cell.parse().map_err(|_| MatrixError::Parse {
                    line,
                    reason: format!("`{cell}` is not a number"),
                })?;
                values.set(seen, j, v);
            }
            seen += 1;
        }
        if seen != n {
            return Err(MatrixError::Parse {
                line: hline,
                reason: format!("{n} labels but {seen} rows"),
            });
        }
        Self::new(labels, values)
    }
}

/// Fixed 9-significant-digit scientific formatting used by every CSV
/// writer, so reruns are byte-identical.
pub fn fmt_sig9<T: Real>(x: T) -> String {
    format!("{:.8e}", x)
}

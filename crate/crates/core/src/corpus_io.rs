//! Readers and writers for the external data files: sentence-aligned
//! corpora, word-alignment links, word-similarity datasets, structural
//! feature tables and geographic distance tables.
//!
//! Every parser reports failures with the 1-based line number that caused
//! them. Tokenization is whitespace splitting followed by lower-casing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::distance_matrix::{DistanceMatrix, MatrixError};
use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("aligned files have {a} and {b} lines")]
    LineCountMismatch { a: usize, b: usize },
    #[error("line {line}: empty sentence")]
    EmptyLine { line: usize },
    #[error("corpus contains no sentence pairs")]
    EmptyCorpus,
    #[error("both sides of an aligned corpus are `{0}`")]
    SameLanguage(String),
    #[error("{found} alignment lines for {expected} sentence pairs")]
    LinkCountMismatch { expected: usize, found: usize },
    #[error("line {line}: malformed link `{token}`")]
    MalformedLink { line: usize, token: String },
    #[error("line {line}: link {i}-{j} outside sentences of length {len_a} and {len_b}")]
    IndexOutOfBounds { line: usize, i: usize, j: usize, len_a: usize, len_b: usize },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: duplicate pair ({first}, {second})")]
    DuplicatePair { line: usize, first: String, second: String },
    #[error("line {line}: score is not finite")]
    NonFiniteScore { line: usize },
    #[error("dataset needs at least 2 pairs, found {0}")]
    TooFewPairs(usize),
    #[error("line {line}: language `{lang}` has no features")]
    NoFeatures { line: usize, lang: String },
    #[error("line {line}: duplicate language `{lang}`")]
    DuplicateLanguage { line: usize, lang: String },
    #[error("languages not covered by the table: {0:?}")]
    MissingLanguages(Vec<String>),
    #[error("`{0}` and `{1}` share no features")]
    NoSharedFeatures(String, String),
    #[error("line {line}: distance must be finite and non-negative")]
    BadDistance { line: usize },
    #[error("line {line}: conflicting distances for ({a}, {b})")]
    AsymmetricDistance { line: usize, a: String, b: String },
    #[error("line {line}: non-zero self distance for `{lang}`")]
    NonZeroDiagonal { line: usize, lang: String },
    #[error("no distance for pair ({0}, {1})")]
    MissingPair(String, String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Whitespace split and lower-case.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

/// Reads a monolingual corpus, one sentence per line. Blank lines are
/// skipped.
pub fn read_monolingual(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(parse_monolingual(&read_file(path)?))
}

pub fn parse_monolingual(text: &str) -> Vec<Vec<String>> {
    text.lines().map(tokenize).filter(|s| !s.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub a: Vec<String>,
    pub b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedCorpus {
    lang_a: String,
    lang_b: String,
    pairs: Vec<SentencePair>,
}

impl AlignedCorpus {
    pub fn new(lang_a: &str, lang_b: &str, pairs: Vec<SentencePair>) -> Result<Self> {
        if lang_a == lang_b {
            return Err(CorpusError::SameLanguage(lang_a.to_string()));
        }
        if pairs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        if let Some(i) = pairs.iter().position(|p| p.a.is_empty() || p.b.is_empty()) {
            return Err(CorpusError::EmptyLine { line: i + 1 });
        }
        Ok(AlignedCorpus { lang_a: lang_a.to_string(), lang_b: lang_b.to_string(), pairs })
    }

    pub fn lang_a(&self) -> &str {
        &self.lang_a
    }

    pub fn lang_b(&self) -> &str {
        &self.lang_b
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same corpus with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        AlignedCorpus {
            lang_a: self.lang_b.clone(),
            lang_b: self.lang_a.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| SentencePair { a: p.b.clone(), b: p.a.clone() })
                .collect(),
        }
    }

    /// The two sides as separate texts, one sentence per line.
    pub fn to_texts(&self) -> (String, String) {
        let mut a = String::new();
        let mut b = String::new();
        for p in &self.pairs {
            a.push_str(&p.a.join(" "));
            a.push('\n');
            b.push_str(&p.b.join(" "));
            b.push('\n');
        }
        (a, b)
    }
}

pub fn parse_aligned_corpus(path_a: &Path, path_b: &Path, lang_a: &str, lang_b: &str) -> Result<AlignedCorpus> {
    parse_aligned_corpus_str(&read_file(path_a)?, &read_file(path_b)?, lang_a, lang_b)
}

pub fn parse_aligned_corpus_str(text_a: &str, text_b: &str, lang_a: &str, lang_b: &str) -> Result<AlignedCorpus> {
    let lines_a: Vec<&str> = text_a.lines().collect();
    let lines_b: Vec<&str> = text_b.lines().collect();
    if lines_a.len() != lines_b.len() {
        return Err(CorpusError::LineCountMismatch { a: lines_a.len(), b: lines_b.len() });
    }
    let mut pairs = Vec::with_capacity(lines_a.len());
    for (i, (la, lb)) in lines_a.iter().zip(&lines_b).enumerate() {
        let a = tokenize(la);
        let b = tokenize(lb);
        if a.is_empty() || b.is_empty() {
            return Err(CorpusError::EmptyLine { line: i + 1 });
        }
        pairs.push(SentencePair { a, b });
    }
    AlignedCorpus::new(lang_a, lang_b, pairs)
}

/// Word-alignment links, one sorted, de-duplicated set per sentence pair.
/// A link `(i, j)` connects token `i` of side a with token `j` of side b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentLinks {
    links: Vec<Vec<(usize, usize)>>,
}

impl AlignmentLinks {
    pub fn new(corpus: &AlignedCorpus, links: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        if links.len() != corpus.len() {
            return Err(CorpusError::LinkCountMismatch { expected: corpus.len(), found: links.len() });
        }
        let mut out = Vec::with_capacity(links.len());
        for (line, (set, pair)) in links.into_iter().zip(corpus.pairs()).enumerate() {
            let set: BTreeSet<(usize, usize)> = set.into_iter().collect();
            for &(i, j) in &set {
                if i >= pair.a.len() || j >= pair.b.len() {
                    return Err(CorpusError::IndexOutOfBounds {
                        line: line + 1,
                        i,
                        j,
                        len_a: pair.a.len(),
                        len_b: pair.b.len(),
                    });
                }
            }
            out.push(set.into_iter().collect());
        }
        Ok(AlignmentLinks { links: out })
    }

    pub fn per_pair(&self) -> &[Vec<(usize, usize)>] {
        &self.links
    }

    /// Links for the side-swapped corpus.
    pub fn transposed(&self) -> Self {
        AlignmentLinks {
            links: self
                .links
                .iter()
                .map(|set| {
                    let mut t: Vec<_> = set.iter().map(|&(i, j)| (j, i)).collect();
                    t.sort_unstable();
                    t
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for set in &self.links {
            let line: Vec<String> = set.iter().map(|(i, j)| format!("{i}-{j}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn parse_alignment_links(path: &Path, corpus: &AlignedCorpus) -> Result<AlignmentLinks> {
    parse_alignment_links_str(&read_file(path)?, corpus)
}

pub fn parse_alignment_links_str(text: &str, corpus: &AlignedCorpus) -> Result<AlignmentLinks> {
    let mut links = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let mut set = Vec::new();
        for token in line.split_whitespace() {
            let parsed = token
                .split_once('-')
                .and_then(|(i, j)| Some((i.parse::<usize>().ok()?, j.parse::<usize>().ok()?)));
            match parsed {
                Some(link) => set.push(link),
                None => {
                    return Err(CorpusError::MalformedLink { line: idx + 1, token: token.to_string() })
                }
            }
        }
        links.push(set);
    }
    AlignmentLinks::new(corpus, links)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordPair {
    pub first: String,
    pub second: String,
    pub gold: f64,
}

/// Word pairs with human similarity judgements.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDataset {
    pub name: String,
    pub language: String,
    pub pairs: Vec<WordPair>,
}

impl SimilarityDataset {
    pub fn new(name: &str, language: &str, pairs: Vec<WordPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, p) in pairs.iter().enumerate() {
            if !p.gold.is_finite() {
                return Err(CorpusError::NonFiniteScore { line: i + 1 });
            }
            if !seen.insert((p.first.to_lowercase(), p.second.to_lowercase())) {
                return Err(CorpusError::DuplicatePair {
                    line: i + 1,
                    first: p.first.clone(),
                    second: p.second.clone(),
                });
            }
        }
        if pairs.len() < 2 {
            return Err(CorpusError::TooFewPairs(pairs.len()));
        }
        Ok(SimilarityDataset { name: name.to_string(), language: language.to_string(), pairs })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            writeln!(out, "{}\t{}\t{}", p.first, p.second, p.gold).unwrap();
        }
        out
    }
}

pub fn parse_similarity_dataset(path: &Path, name: &str, language: &str) -> Result<SimilarityDataset> {
    parse_similarity_dataset_str(&read_file(path)?, name, language)
}

/// Rows are `word1 word2 score`, separated by tabs or commas. Lines
/// starting with `#` are comments.
pub fn parse_similarity_dataset_str(text: &str, name: &str, language: &str) -> Result<SimilarityDataset> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let cells: Vec<&str> = line.split(sep).map(str::trim).collect();
        if cells.len() != 3 || cells[0].is_empty() || cells[1].is_empty() {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                reason: format!("expected 3 columns, found {}", cells.len()),
            });
        }
        let gold: f64 = cells[2].parse().map_err(|_| CorpusError::MalformedRow {
            line: line_no,
            reason: format!("`{}` is not a number", cells[2]),
        })?;
        if !gold.is_finite() {
            return Err(CorpusError::NonFiniteScore { line: line_no });
        }
        let first = cells[0].to_lowercase();
        let second = cells[1].to_lowercase();
        if !seen.insert((first.clone(), second.clone())) {
            return Err(CorpusError::DuplicatePair { line: line_no, first, second });
        }
        pairs.push(WordPair { first, second, gold });
    }
    SimilarityDataset::new(name, language, pairs)
}

/// Categorical structural features per language. Absent values are simply
/// missing from a language's map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTable {
    feature_ids: Vec<String>,
    languages: Vec<String>,
    values: BTreeMap<String, BTreeMap<String, String>>,
}

impl FeatureTable {
    pub fn new(
        feature_ids: Vec<String>,
        rows: Vec<(String, BTreeMap<String, String>)>,
    ) -> Result<Self> {
        let mut languages = Vec::with_capacity(rows.len());
        let mut values = BTreeMap::new();
        for (i, (lang, feats)) in rows.into_iter().enumerate() {
            if feats.is_empty() {
                return Err(CorpusError::NoFeatures { line: i + 2, lang });
            }
            if values.contains_key(&lang) {
                return Err(CorpusError::DuplicateLanguage { line: i + 2, lang });
            }
            languages.push(lang.clone());
            values.insert(lang, feats);
        }
        Ok(FeatureTable { feature_ids, languages, values })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn features(&self, lang: &str) -> Option<&BTreeMap<String, String>> {
        self.values.get(lang)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lang");
        for f in &self.feature_ids {
            write!(out, ",{f}").unwrap();
        }
        out.push('\n');
        for lang in &self.languages {
            out.push_str(lang);
            let feats = &self.values[lang];
            for f in &self.feature_ids {
                write!(out, ",{}", feats.get(f).map_or("", String::as_str)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Structural distance for every pair of `langs`.
    pub fn distance_matrix(&self, langs: &[String]) -> Result<DistanceMatrix<f64>> {
        let missing: Vec<String> = langs.iter().filter(|l| !self.values.contains_key(*l)).cloned().collect();
        if !missing.is_empty() {
            return Err(CorpusError::MissingLanguages(missing));
        }
        DistanceMatrix::from_pairwise(langs.to_vec(), |i, j| structural_distance(self, &langs[i], &langs[j]))
    }
}

pub fn parse_feature_table(path: &Path) -> Result<FeatureTable> {
    parse_feature_table_str(&read_file(path)?)
}

/// CSV with a header row (`lang,feature1,feature2,...`); an empty cell
/// marks an absent value.
pub fn parse_feature_table_str(text: &str) -> Result<FeatureTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or(CorpusError::MalformedRow { line: 1, reason: "missing header row".into() })?;
    let feature_ids: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != feature_ids.len() + 1 || cells[0].is_empty() {
            return Err(CorpusError::MalformedRow {
                line,
                reason: format!("expected {} cells, found {}", feature_ids.len() + 1, cells.len()),
            });
        }
        let lang = cells[0].to_string();
        if !seen.insert(lang.clone()) {
            return Err(CorpusError::DuplicateLanguage { line, lang });
        }
        let feats: BTreeMap<String, String> = feature_ids
            .iter()
            .zip(&cells[1..])
            .filter(|(_, v)| !v.is_empty())
            .map(|(f, v)| (f.clone(), v.to_string()))
            .collect();
        if feats.is_empty() {
            return Err(CorpusError::NoFeatures { line, lang });
        }
        rows.push((lang, feats));
    }
    FeatureTable::new(feature_ids, rows)
}

/// `1 − agreeing / shared`, counting only features present for both
/// languages.
pub fn structural_distance(table: &FeatureTable, l1: &str, l2: &str) -> Result<f64> {
    let missing: Vec<String> =
        [l1, l2].iter().filter(|l| table.features(l).is_none()).map(|l| l.to_string()).collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingLanguages(missing));
    }
    let (f1, f2) = (&table.values[l1], &table.values[l2]);
    let mut shared = 0usize;
    let mut agree = 0usize;
    for (feature, v1) in f1 {
        if let Some(v2) = f2.get(feature) {
            shared += 1;
            if v1 == v2 {
                agree += 1;
            }
        }
    }
    if shared == 0 {
        return Err(CorpusError::NoSharedFeatures(l1.to_string(), l2.to_string()));
    }
    Ok(1.0 - agree as f64 / shared as f64)
}

/// Symmetric geographic distances in kilometres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeoTable {
    distances: BTreeMap<(String, String), f64>,
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl GeoTable {
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        self.distances.get(&ordered(a, b)).copied()
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.distances.keys().flat_map(|(a, b)| [a.clone(), b.clone()]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for ((a, b), km) in &self.distances {
            writeln!(out, "{a},{b},{km}").unwrap();
        }
        out
    }

    pub fn distance_matrix(&self, langs: &[String]) -> Result<DistanceMatrix<f64>> {
        let known = self.languages();
        let missing: Vec<String> = langs.iter().filter(|l| !known.contains(*l)).cloned().collect();
        if !missing.is_empty() {
            return Err(CorpusError::MissingLanguages(missing));
        }
        let n = langs.len();
        let mut values = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let km = self
                    .distance(&langs[i], &langs[j])
                    .ok_or_else(|| CorpusError::MissingPair(langs[i].clone(), langs[j].clone()))?;
                values.set(i, j, km);
                values.set(j, i, km);
            }
        }
        Ok(DistanceMatrix::new(langs.to_vec(), values)?)
    }
}

pub fn parse_geo_table(path: &Path) -> Result<GeoTable> {
    parse_geo_table_str(&read_file(path)?)
}

/// Rows `lang1,lang2,km`. Either orientation may be given; if both are,
/// they must agree.
pub fn parse_geo_table_str(text: &str) -> Result<GeoTable> {
    let mut distances = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != 3 || cells[0].is_empty() || cells[1].is_empty() {
            return Err(CorpusError::MalformedRow { line, reason: "expected lang1,lang2,km".into() });
        }
        let km: f64 = match cells[2].parse() {
            Ok(v) => v,
            // Tolerate a header row.
            Err(_) if line == 1 => continue,
            Err(_) => {
                return Err(CorpusError::MalformedRow {
                    line,
                    reason: format!("`{}` is not a number", cells[2]),
                })
            }
        };
        if !km.is_finite() || km < 0.0 {
            return Err(CorpusError::BadDistance { line });
        }
        if cells[0] == cells[1] {
            if km != 0.0 {
                return Err(CorpusError::NonZeroDiagonal { line, lang: cells[0].to_string() });
            }
            continue;
        }
        let key = ordered(cells[0], cells[1]);
        if let Some(&prev) = distances.get(&key) {
            if prev != km {
                return Err(CorpusError::AsymmetricDistance { line, a: key.0, b: key.1 });
            }
        }
        distances.insert(key, km);
    }
    Ok(GeoTable { distances })
}

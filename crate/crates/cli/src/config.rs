//! Run configuration: a TOML file naming languages, inputs and every
//! hyperparameter of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semdist_core::cca::Ridge;
use semdist_core::corpus_io::{parse_feature_table, parse_geo_table};
use semdist_core::embedding_store::Method;
use semdist_core::stats::{ProjectionKind, Sides};
use semdist_core::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub languages: Vec<String>,
    /// Empty means every language.
    #[serde(default)]
    pub pivots: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub precision: Precision,
    /// Maximum pivot vocabulary per graph; 0 disables the cap.
    #[serde(default = "default_vocab_cap")]
    pub vocab_cap: usize,
    #[serde(default)]
    pub dump_graphs: bool,
    pub wals: Option<PathBuf>,
    pub geo: Option<PathBuf>,
    pub corpora: Corpora,
    #[serde(default)]
    pub parallel: Vec<ParallelEntry>,
    #[serde(default, rename = "dataset")]
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cca: CcaSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_methods() -> Vec<String> {
    vec!["JOINT".into(), "CCA".into()]
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_vocab_cap() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpora {
    /// Monolingual training text per language, one sentence per line.
    pub mono: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelEntry {
    pub a: String,
    pub b: String,
    pub path_a: PathBuf,
    pub path_b: PathBuf,
    /// `i-j` word alignment links, one line per sentence pair.
    pub links: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub language: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    pub lambda: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            dim: t.dim,
            window: t.window,
            negatives: t.negatives,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            min_count: t.min_count,
            lambda: t.lambda,
            batch_size: t.batch_size,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            min_count: self.min_count,
            lambda: self.lambda,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RidgeSetting {
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaSection {
    /// `"auto"` or a fixed non-negative value.
    pub ridge: RidgeSetting,
    /// Fraction of the smaller dimension kept as canonical components.
    pub keep_ratio: f64,
    pub min_pair_count: u64,
}

impl Default for CcaSection {
    fn default() -> Self {
        CcaSection { ridge: RidgeSetting::Named("auto".into()), keep_ratio: 1.0, min_pair_count: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub permutations: usize,
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// `"one-sided"` or `"two-sided"`.
    pub sides: String,
    pub rescale: bool,
    /// `"pca"` or `"mds"`.
    pub projection: String,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            permutations: 9999,
            k: 6,
            restarts: 10,
            max_iter: 100,
            sides: "one-sided".into(),
            rescale: true,
            projection: "pca".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub permutations: usize,
    /// Which distance matrix orders the tables: `"avg"`, `"joint"` or `"cca"`.
    pub distance: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { permutations: 10_000, distance: "avg".into() }
    }
}

/// Problems found before any work starts.
#[derive(Debug, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ValidationError(pub Vec<String>);

/// A validated configuration with paths resolved against the config
/// file's directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub pivots: Vec<String>,
    pub methods: Vec<Method>,
    pub ridge: Ridge,
    pub sides: Sides,
    pub projection: ProjectionKind,
    pub eval_distance: String,
    pub hash: String,
}

impl Run {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn mono_path(&self, lang: &str) -> PathBuf {
        self.resolve(&self.config.corpora.mono[lang])
    }

    /// The parallel entry covering `{x, y}` in either orientation.
    pub fn parallel(&self, x: &str, y: &str) -> &ParallelEntry {
        self.config
            .parallel
            .iter()
            .find(|e| (e.a == x && e.b == y) || (e.a == y && e.b == x))
            .expect("validated: every needed pair has parallel data")
    }

    pub fn vocab_cap(&self) -> Option<usize> {
        (self.config.vocab_cap > 0).then_some(self.config.vocab_cap)
    }

    /// Ordered (pivot, second) cells.
    pub fn cells(&self) -> Vec<(String, String)> {
        self.pivots
            .iter()
            .flat_map(|p| self.config.languages.iter().filter(move |l| *l != p).map(move |l| (p.clone(), l.clone())))
            .collect()
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn load(path: &Path) -> Result<Run, ValidationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ValidationError(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| ValidationError(vec![format!("{}: {e}", path.display())]))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate(config, base_dir)
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn validate(config: RunConfig, base_dir: PathBuf) -> Result<Run, ValidationError> {
    let mut errs = Vec::new();
    let langs = &config.languages;
    let lang_set: BTreeSet<&String> = langs.iter().collect();
    if langs.len() < 3 {
        errs.push(format!("need at least 3 languages, got {}", langs.len()));
    }
    if lang_set.len() != langs.len() {
        errs.push("languages contain duplicates".into());
    }
    for l in langs {
        if !is_safe_name(l) {
            errs.push(format!("language code `{l}` must be alphanumeric, `_` or `-`"));
        }
    }

    let pivots = if config.pivots.is_empty() { langs.clone() } else { config.pivots.clone() };
    for p in &pivots {
        if !lang_set.contains(p) {
            errs.push(format!("pivot `{p}` is not a listed language"));
        }
    }
    if pivots.iter().collect::<BTreeSet<_>>().len() != pivots.len() {
        errs.push("pivots contain duplicates".into());
    }
    for (i, a) in langs.iter().enumerate() {
        for b in &langs[i + 1..] {
            if !pivots.iter().any(|p| p != a && p != b) {
                errs.push(format!("no pivot other than {a} and {b} to compare them"));
            }
        }
    }

    let mut methods = Vec::new();
    for m in &config.methods {
        match m.parse::<Method>() {
            Ok(m) if !methods.contains(&m) => methods.push(m),
            Ok(m) => errs.push(format!("method {m} listed twice")),
            Err(e) => errs.push(e.to_string()),
        }
    }
    if methods.is_empty() {
        errs.push("no method selected".into());
    }
    methods.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));

    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    let require = |errs: &mut Vec<String>, what: &str, p: &Path| {
        let full = resolve(p);
        if !full.is_file() {
            errs.push(format!("{what}: file not found: {}", full.display()));
        }
    };

    for l in langs {
        match config.corpora.mono.get(l) {
            Some(p) => require(&mut errs, &format!("monolingual corpus for {l}"), p),
            None => errs.push(format!("no monolingual corpus for {l}")),
        }
    }
    for l in config.corpora.mono.keys() {
        if !lang_set.contains(l) {
            errs.push(format!("monolingual corpus given for unlisted language {l}"));
        }
    }

    let mut seen_pairs = BTreeSet::new();
    for e in &config.parallel {
        if e.a == e.b {
            errs.push(format!("parallel entry pairs {} with itself", e.a));
        }
        for l in [&e.a, &e.b] {
            if !lang_set.contains(l) {
                errs.push(format!("parallel entry names unlisted language {l}"));
            }
        }
        let key = if e.a < e.b { (e.a.clone(), e.b.clone()) } else { (e.b.clone(), e.a.clone()) };
        if !seen_pairs.insert(key) {
            errs.push(format!("parallel data for {}-{} given twice", e.a, e.b));
        }
        let tag = format!("parallel {}-{}", e.a, e.b);
        require(&mut errs, &tag, &e.path_a);
        require(&mut errs, &tag, &e.path_b);
        match &e.links {
            Some(p) => require(&mut errs, &format!("{tag} links"), p),
            None if methods.contains(&Method::Cca) => errs.push(format!("{tag}: CCA needs alignment links")),
            None => {}
        }
    }
    for p in &pivots {
        for l in langs.iter().filter(|l| *l != p) {
            let key = if p < l { (p.clone(), l.clone()) } else { (l.clone(), p.clone()) };
            if !seen_pairs.contains(&key) {
                errs.push(format!("no parallel data for pivot {p} with {l}"));
            }
        }
    }

    let mut names = BTreeSet::new();
    for d in &config.datasets {
        if !is_safe_name(&d.name) {
            errs.push(format!("dataset name `{}` must be alphanumeric, `_` or `-`", d.name));
        }
        if !names.insert(&d.name) {
            errs.push(format!("dataset `{}` listed twice", d.name));
        }
        if !pivots.contains(&d.language) {
            errs.push(format!("dataset `{}` is in {}, which is not a pivot", d.name, d.language));
        }
        require(&mut errs, &format!("dataset {}", d.name), &d.path);
    }

    if let Some(p) = &config.wals {
        let full = resolve(p);
        match parse_feature_table(&full) {
            Ok(t) => {
                if let Err(e) = t.distance_matrix(langs) {
                    errs.push(format!("feature table {}: {e}", full.display()));
                }
            }
            Err(e) => errs.push(format!("feature table {}: {e}", full.display())),
        }
    }
    if let Some(p) = &config.geo {
        let full = resolve(p);
        match parse_geo_table(&full) {
            Ok(t) => {
                if let Err(e) = t.distance_matrix(langs) {
                    errs.push(format!("geo table {}: {e}", full.display()));
                }
            }
            Err(e) => errs.push(format!("geo table {}: {e}", full.display())),
        }
    }

    if let Err(e) = config.train.with_seed(0).validate() {
        errs.push(e.to_string());
    }
    let ridge = match &config.cca.ridge {
        RidgeSetting::Named(s) if s == "auto" => Ridge::Auto,
        RidgeSetting::Value(v) if *v >= 0.0 && v.is_finite() => Ridge::Fixed(*v),
        other => {
            errs.push(format!("cca.ridge must be \"auto\" or a non-negative number, got {other:?}"));
            Ridge::Auto
        }
    };
    if !(config.cca.keep_ratio > 0.0 && config.cca.keep_ratio <= 1.0) {
        errs.push("cca.keep_ratio must be in (0, 1]".into());
    }
    if config.cca.min_pair_count == 0 {
        errs.push("cca.min_pair_count must be at least 1".into());
    }

    let s = &config.stats;
    if s.permutations < 99 {
        errs.push("stats.permutations must be at least 99".into());
    }
    if s.k == 0 || s.k > langs.len() {
        errs.push(format!("stats.k = {} must be between 1 and the number of languages", s.k));
    }
    if s.restarts == 0 || s.max_iter == 0 {
        errs.push("stats.restarts and stats.max_iter must be positive".into());
    }
    let sides = match s.sides.as_str() {
        "one-sided" => Sides::Greater,
        "two-sided" => Sides::TwoSided,
        other => {
            errs.push(format!("stats.sides must be one-sided or two-sided, got {other}"));
            Sides::Greater
        }
    };
    let projection = match s.projection.as_str() {
        "pca" => ProjectionKind::Pca,
        "mds" => ProjectionKind::Mds,
        other => {
            errs.push(format!("stats.projection must be pca or mds, got {other}"));
            ProjectionKind::Pca
        }
    };

    if config.eval.permutations == 0 {
        errs.push("eval.permutations must be positive".into());
    }
    let eval_distance = match config.eval.distance.as_str() {
        "avg" => "AVG".to_string(),
        "joint" | "cca" => {
            let m: Method = config.eval.distance.parse().expect("known method");
            if !methods.contains(&m) {
                errs.push(format!("eval.distance = {} but that method is not run", config.eval.distance));
            }
            m.to_string()
        }
        other => {
            errs.push(format!("eval.distance must be avg, joint or cca, got {other}"));
            "AVG".to_string()
        }
    };

    if !errs.is_empty() {
        return Err(ValidationError(errs));
    }
    let hash = config_hash(&config);
    Ok(Run { config, base_dir, pivots, methods, ridge, sides, projection, eval_distance, hash })
}

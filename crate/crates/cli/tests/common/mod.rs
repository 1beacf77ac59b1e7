//! Synthetic corpora and run configurations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use semdist_core::embedding_store::Method;
use semdist_core::seed::{rng_for, rng_from};

/// Concepts linked to a few random associates; sentences are random walks
/// over these links, so co-occurrence reflects the association structure.
pub struct ConceptGraph {
    pub assoc: Vec<Vec<usize>>,
}

impl ConceptGraph {
    pub fn random(concepts: usize, associates: usize, rng: &mut ChaCha8Rng) -> Self {
        let assoc = (0..concepts)
            .map(|c| {
                let mut out = Vec::with_capacity(associates);
                while out.len() < associates {
                    let a = rng.random_range(0..concepts);
                    if a != c && !out.contains(&a) {
                        out.push(a);
                    }
                }
                out
            })
            .collect();
        ConceptGraph { assoc }
    }

    pub fn len(&self) -> usize {
        self.assoc.len()
    }

    pub fn walk(&self, min_len: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let len = rng.random_range(min_len..=max_len);
        let mut c = rng.random_range(0..self.len());
        let mut out = vec![c];
        while out.len() < len {
            c = if rng.random_bool(0.9) { *self.assoc[c].choose(rng).unwrap() } else { rng.random_range(0..self.len()) };
            out.push(c);
        }
        out
    }
}

pub fn word(lang: &str, concept: usize) -> String {
    format!("{lang}{concept}")
}

pub fn render(lang: &str, walk: &[usize]) -> String {
    walk.iter().map(|&c| word(lang, c)).collect::<Vec<_>>().join(" ")
}

/// Knobs for the toy project written by [`write_toy_project`].
pub struct Toy {
    pub languages: Vec<&'static str>,
    pub methods: Vec<&'static str>,
    pub concepts: usize,
    pub mono_sentences: usize,
    pub parallel_sentences: usize,
    pub seed: u64,
    pub with_tables: bool,
    pub geo_languages: Option<Vec<&'static str>>,
    pub dataset: bool,
}

impl Default for Toy {
    fn default() -> Self {
        Toy {
            languages: vec!["en", "fr", "de", "it"],
            methods: vec!["JOINT", "CCA"],
            concepts: 40,
            mono_sentences: 300,
            parallel_sentences: 300,
            seed: 7,
            with_tables: true,
            geo_languages: None,
            dataset: true,
        }
    }
}

/// Writes corpora, alignments, tables and a config under `dir`; returns the
/// config path. Each language renders the shared walks with its own
/// probability of substituting an associate, so languages differ.
pub fn write_toy_project(dir: &Path, toy: &Toy) -> PathBuf {
    let mut rng = rng_from(toy.seed);
    let graph = ConceptGraph::random(toy.concepts, 4, &mut rng);
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    let drift: Vec<f64> = (0..toy.languages.len()).map(|i| 0.05 * i as f64).collect();

    let mut cfg = String::new();
    let quoted = |xs: &[&str]| xs.iter().map(|x| format!("\"{x}\"")).collect::<Vec<_>>().join(", ");
    writeln!(cfg, "languages = [{}]", quoted(&toy.languages)).unwrap();
    writeln!(cfg, "methods = [{}]", quoted(&toy.methods)).unwrap();
    writeln!(cfg, "seed = 3\noutput_dir = \"out\"\nvocab_cap = 30").unwrap();

    if toy.with_tables {
        let feats = ["order", "case", "gender", "article"];
        let mut wals = String::from("lang");
        for f in feats {
            write!(wals, ",{f}").unwrap();
        }
        wals.push('\n');
        for (i, l) in toy.languages.iter().enumerate() {
            write!(wals, "{l}").unwrap();
            for (j, _) in feats.iter().enumerate() {
                write!(wals, ",{}", (i * (j + 1) / 2) % 3).unwrap();
            }
            wals.push('\n');
        }
        fs::write(data.join("wals.csv"), wals).unwrap();
        let geo_langs = toy.geo_languages.clone().unwrap_or_else(|| toy.languages.clone());
        let mut geo = String::from("lang_a,lang_b,km\n");
        for (i, a) in geo_langs.iter().enumerate() {
            for (j, b) in geo_langs.iter().enumerate().skip(i + 1) {
                writeln!(geo, "{a},{b},{}", 100.0 * ((j - i) as f64) + 10.0 * i as f64).unwrap();
            }
        }
        fs::write(data.join("geo.csv"), geo).unwrap();
        writeln!(cfg, "wals = \"data/wals.csv\"\ngeo = \"data/geo.csv\"").unwrap();
    }

    let drifted = |walk: &[usize], d: f64, rng: &mut ChaCha8Rng| -> Vec<usize> {
        walk.iter().map(|&c| if rng.random_bool(d) { graph.assoc[c][0] } else { c }).collect()
    };

    writeln!(cfg, "\n[corpora.mono]").unwrap();
    for (i, l) in toy.languages.iter().enumerate() {
        let mut text = String::new();
        for _ in 0..toy.mono_sentences {
            let w = graph.walk(6, 10, &mut rng);
            writeln!(text, "{}", render(l, &drifted(&w, drift[i], &mut rng))).unwrap();
        }
        fs::write(data.join(format!("mono.{l}")), text).unwrap();
        writeln!(cfg, "{l} = \"data/mono.{l}\"").unwrap();
    }

    for (i, a) in toy.languages.iter().enumerate() {
        for (j, b) in toy.languages.iter().enumerate().skip(i + 1) {
            let (mut ta, mut tb, mut links) = (String::new(), String::new(), String::new());
            for _ in 0..toy.parallel_sentences {
                let w = graph.walk(6, 10, &mut rng);
                writeln!(ta, "{}", render(a, &drifted(&w, drift[i], &mut rng))).unwrap();
                writeln!(tb, "{}", render(b, &drifted(&w, drift[j], &mut rng))).unwrap();
                let l: Vec<String> = (0..w.len()).map(|k| format!("{k}-{k}")).collect();
                writeln!(links, "{}", l.join(" ")).unwrap();
            }
            let stem = format!("par.{a}-{b}");
            fs::write(data.join(format!("{stem}.{a}")), ta).unwrap();
            fs::write(data.join(format!("{stem}.{b}")), tb).unwrap();
            fs::write(data.join(format!("{stem}.links")), links).unwrap();
            writeln!(
                cfg,
                "\n[[parallel]]\na = \"{a}\"\nb = \"{b}\"\npath_a = \"data/{stem}.{a}\"\npath_b = \"data/{stem}.{b}\"\nlinks = \"data/{stem}.links\""
            )
            .unwrap();
        }
    }

    if toy.dataset {
        let p = toy.languages[0];
        let mut ds = String::from("# word1\tword2\tscore\n");
        for c in 0..toy.concepts.min(25) {
            let a = graph.assoc[c][0];
            let mut far = (c + toy.concepts / 2) % toy.concepts;
            if far == a {
                far = (far + 1) % toy.concepts;
            }
            writeln!(ds, "{}\t{}\t{}", word(p, c), word(p, a), 8.0 + (c % 3) as f64 * 0.5).unwrap();
            writeln!(ds, "{}\t{}\t{}", word(p, c), word(p, far), 1.0 + (c % 4) as f64 * 0.5).unwrap();
        }
        fs::write(data.join("sim.tsv"), ds).unwrap();
        writeln!(cfg, "\n[[dataset]]\nname = \"toysim\"\nlanguage = \"{p}\"\npath = \"data/sim.tsv\"").unwrap();
    }

    writeln!(
        cfg,
        "\n[train]\ndim = 8\nwindow = 3\nnegatives = 3\nlearning_rate = 0.05\nepochs = 2\nmin_count = 2\nlambda = 1.0\nbatch_size = 32"
    )
    .unwrap();
    writeln!(cfg, "\n[cca]\nridge = \"auto\"\nkeep_ratio = 0.5\nmin_pair_count = 2").unwrap();
    writeln!(cfg, "\n[stats]\npermutations = 199\nk = 2\nrestarts = 4").unwrap();
    writeln!(cfg, "\n[eval]\npermutations = 999").unwrap();

    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

/// Runs the CLI in-process and returns its exit code.
pub fn cli(command: &str, config: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["semdist".to_string(), command.to_string(), "--config".into(), config.display().to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    semdist_cli::run_cli(args)
}

/// Synthetic parallel corpus: side `f` is the word-for-word rendering of
/// side `e`, so concept `c` translates `e{c}` to `f{c}`.
pub struct ParallelWorld {
    pub e: Vec<Vec<String>>,
    pub f: Vec<Vec<String>>,
}

pub fn parallel_world(concepts: usize, associates: usize, sentences: usize, seed: u64) -> ParallelWorld {
    let mut rng = rng_from(seed);
    let graph = ConceptGraph::random(concepts, associates, &mut rng);
    let mut e = Vec::with_capacity(sentences);
    let mut f = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let w = graph.walk(8, 12, &mut rng);
        e.push(w.iter().map(|&c| word("e", c)).collect());
        f.push(w.iter().map(|&c| word("f", c)).collect());
    }
    ParallelWorld { e, f }
}

/// Word vectors of one pivot side, keyed by word.
pub type SideVectors = BTreeMap<String, Vec<f64>>;

fn oracle_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for k in 0..u.len() {
        uv += u[k] * v[k];
        uu += u[k] * u[k];
        vv += v[k] * v[k];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// Language distances by direct loops over the definition: for every pivot
/// outside the pair, the mean over shared pivot words of the Euclidean
/// distance between the words' similarity profiles (self excluded), then the
/// mean over pivots. `cap` keeps the first shared words in the order of the
/// first second language's side, as the library does.
pub fn oracle_distances_capped(
    langs: &[String],
    sides: &BTreeMap<(String, String), SideVectors>,
    order: Option<&BTreeMap<String, Vec<String>>>,
    cap: Option<usize>,
) -> Vec<Vec<f64>> {
    let n = langs.len();
    let mut shared_words: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in langs {
        let mut shared: Option<BTreeSet<String>> = None;
        for l in langs.iter().filter(|l| *l != p) {
            let words: BTreeSet<String> = sides[&(p.clone(), l.clone())].keys().cloned().collect();
            shared = Some(match shared {
                None => words,
                Some(s) => s.intersection(&words).cloned().collect(),
            });
        }
        let shared = shared.unwrap();
        let mut words: Vec<String> = match order.and_then(|o| o.get(p)) {
            Some(o) => o.iter().filter(|w| shared.contains(*w)).cloned().collect(),
            None => shared.into_iter().collect(),
        };
        if let Some(c) = cap {
            words.truncate(c);
        }
        shared_words.insert(p.clone(), words);
    }
    let mut out = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mut total = 0.0;
            let mut pivots = 0;
            for p in langs {
                if p == &langs[a] || p == &langs[b] {
                    continue;
                }
                let words = &shared_words[p];
                let sa = &sides[&(p.clone(), langs[a].clone())];
                let sb = &sides[&(p.clone(), langs[b].clone())];
                let mut node_sum = 0.0;
                for u in words {
                    let mut sq = 0.0;
                    for v in words {
                        if u == v {
                            continue;
                        }
                        let diff = oracle_cos(&sa[u], &sa[v]) - oracle_cos(&sb[u], &sb[v]);
                        sq += diff * diff;
                    }
                    node_sum += sq.sqrt();
                }
                total += node_sum / words.len() as f64;
                pivots += 1;
            }
            out[a][b] = total / pivots as f64;
        }
    }
    out
}

pub fn oracle_distances(langs: &[String], sides: &BTreeMap<(String, String), SideVectors>) -> Vec<Vec<f64>> {
    oracle_distances_capped(langs, sides, None, None)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Per-language word spaces: a shared latent space, perturbed once per
/// family and again per language. Row `w` of every space is concept `w`.
pub struct FamilyWorld {
    pub spaces: Vec<Vec<Vec<f64>>>,
}

pub fn family_world(seed: u64, words: usize, dim: usize, family_noise: f64, family: &[usize], noise: &[f64]) -> FamilyWorld {
    let mut rng = rng_for(seed, "families");
    let latent: Vec<Vec<f64>> = (0..words).map(|_| (0..dim).map(|_| normal(&mut rng)).collect()).collect();
    let perturb = |base: &[Vec<f64>], sigma: f64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        base.iter().map(|r| r.iter().map(|&x| x + sigma * normal(rng)).collect()).collect()
    };
    let families = family.iter().copied().max().map_or(0, |m| m + 1);
    let bases: Vec<Vec<Vec<f64>>> = (0..families).map(|_| perturb(&latent, family_noise, &mut rng)).collect();
    let spaces = family.iter().zip(noise).map(|(&f, &s)| perturb(&bases[f], s, &mut rng)).collect();
    FamilyWorld { spaces }
}

impl FamilyWorld {
    /// Pivot side of the `(p, l)` space: the midpoint of both languages'
    /// vectors, under the pivot's word names.
    pub fn pivot_side(&self, p: usize, l: usize, pivot_name: &str) -> SideVectors {
        self.spaces[p]
            .iter()
            .zip(&self.spaces[l])
            .enumerate()
            .map(|(w, (a, b))| (format!("{pivot_name}w{w}"), a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()))
            .collect()
    }
}

pub fn side_text(vectors: &SideVectors) -> String {
    let dim = vectors.values().next().map_or(0, Vec::len);
    let mut out = format!("{} {dim}\n", vectors.len());
    for (w, v) in vectors {
        let cells: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        writeln!(out, "{w} {}", cells.join(" ")).unwrap();
    }
    out
}

/// A JOINT-only project whose bilingual spaces are written straight into
/// the output store, so `distances`, `eval` and `classify` run on known
/// vectors. Corpora are placeholders that only satisfy validation.
pub struct Injected<'a> {
    pub languages: Vec<String>,
    pub pivot_sides: &'a BTreeMap<(String, String), SideVectors>,
    /// (name, language, TSV body)
    pub datasets: Vec<(String, String, String)>,
    pub k: usize,
    pub extra_config: String,
}

pub fn write_injected_project(dir: &Path, project: &Injected) -> PathBuf {
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    let langs = &project.languages;
    let mut cfg = String::new();
    let quoted: Vec<String> = langs.iter().map(|l| format!("\"{l}\"")).collect();
    writeln!(cfg, "languages = [{}]\nmethods = [\"JOINT\"]\nseed = 9\nvocab_cap = 0", quoted.join(", ")).unwrap();
    cfg.push_str(&project.extra_config);
    writeln!(cfg, "\n[corpora.mono]").unwrap();
    for l in langs {
        fs::write(data.join(format!("mono.{l}")), format!("{l}w0 {l}w1\n")).unwrap();
        writeln!(cfg, "{l} = \"data/mono.{l}\"").unwrap();
    }
    for (i, a) in langs.iter().enumerate() {
        for b in &langs[i + 1..] {
            fs::write(data.join(format!("par.{a}-{b}.{a}")), format!("{a}w0\n")).unwrap();
            fs::write(data.join(format!("par.{a}-{b}.{b}")), format!("{b}w0\n")).unwrap();
            writeln!(
                cfg,
                "\n[[parallel]]\na = \"{a}\"\nb = \"{b}\"\npath_a = \"data/par.{a}-{b}.{a}\"\npath_b = \"data/par.{a}-{b}.{b}\""
            )
            .unwrap();
        }
    }
    for (name, lang, body) in &project.datasets {
        fs::write(data.join(format!("{name}.tsv")), body).unwrap();
        writeln!(cfg, "\n[[dataset]]\nname = \"{name}\"\nlanguage = \"{lang}\"\npath = \"data/{name}.tsv\"").unwrap();
    }
    writeln!(cfg, "\n[stats]\npermutations = 999\nk = {}\nrestarts = 10", project.k).unwrap();
    writeln!(cfg, "\n[eval]\npermutations = 9999").unwrap();
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();

    let run = semdist_cli::config::load(&path).unwrap();
    let mut store = semdist_cli::manifest::Store::open(&run.output_dir(), &run.hash).unwrap();
    for ((p, l), vectors) in project.pivot_sides {
        let rel = semdist_cli::pipeline::bilingual_space(Method::Joint, p, l, p);
        store.write(&rel, side_text(vectors).as_bytes(), "train", &[]).unwrap();
    }
    store.save().unwrap();
    path
}

/// Non-comment CSV rows, header included.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

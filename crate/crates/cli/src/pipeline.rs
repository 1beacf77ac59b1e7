//! The pipeline commands. Each one reads its inputs through the manifest
//! and records everything it writes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, Context};
use clap::ValueEnum;
use log::{info, warn};
use rayon::prelude::*;

use semdist_core::cca::{components_for_ratio, extract_lexicon, fit_cca, project, Side};
use semdist_core::corpus_io::{
    parse_aligned_corpus, parse_alignment_links, parse_feature_table, parse_geo_table, parse_similarity_dataset,
    read_monolingual, AlignedCorpus,
};
use semdist_core::distance_matrix::{fmt_sig9, DistanceMatrix};
use semdist_core::embedding_store::{parse_space, EmbeddingSpace, Method};
use semdist_core::evaluation::{correlate_performance, score_space, stars, EvalError, RankVariant};
use semdist_core::pivot_graphs::{build_graph, shared_pivot_vocab, DistanceAccumulator, PivotGraph};
use semdist_core::seed::derive_seed;
use semdist_core::stats::{average_matrices, kmeans, mantel_test, project_2d, KmeansConfig, StatsError};
use semdist_core::trainer::{train_joint, train_monolingual};
use semdist_core::Real;

use crate::config::{Precision, Run};
use crate::manifest::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Train,
    Distances,
    Eval,
    Classify,
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Distances => "distances",
            Command::Eval => "eval",
            Command::Classify => "classify",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Recompute outputs even when the manifest says they are current.
    pub force: bool,
}

pub fn mono_space(lang: &str) -> String {
    format!("spaces/mono/{lang}.vec")
}

pub fn bilingual_space(method: Method, pivot: &str, second: &str, side: &str) -> String {
    format!("spaces/{method}/{pivot}-{second}/{side}.vec")
}

pub fn matrix_file(name: &str) -> String {
    format!("D_{name}.csv")
}

pub fn execute(command: Command, run: &Run, options: Options) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs.unwrap_or(0)).build()?;
    pool.install(|| match run.config.precision {
        Precision::F32 => dispatch::<f32>(command, run, options),
        Precision::F64 => dispatch::<f64>(command, run, options),
    })
}

fn dispatch<T: Real>(command: Command, run: &Run, options: Options) -> anyhow::Result<()> {
    let mut store = Store::open(&run.output_dir(), &run.hash)?;
    let steps: &[Command] = match command {
        Command::All => &[Command::Train, Command::Distances, Command::Eval, Command::Classify],
        _ => std::slice::from_ref(&command),
    };
    for &step in steps {
        info!("{}", step.name());
        match step {
            Command::Train => train::<T>(run, &mut store, options)?,
            Command::Distances => distances::<T>(run, &mut store, options)?,
            Command::Eval => eval::<T>(run, &mut store, options)?,
            Command::Classify => classify(run, &mut store, options)?,
            Command::All => unreachable!(),
        }
        store.save()?;
    }
    Ok(())
}

struct Output {
    rel: String,
    bytes: Vec<u8>,
    inputs: Vec<String>,
}

impl Output {
    fn new(rel: String, text: String, inputs: &[String]) -> Self {
        Output { rel, bytes: text.into_bytes(), inputs: inputs.to_vec() }
    }
}

fn record(store: &mut Store, command: &str, outputs: Vec<Output>) -> anyhow::Result<()> {
    for o in outputs {
        let inputs: Vec<&str> = o.inputs.iter().map(String::as_str).collect();
        store.write(&o.rel, &o.bytes, command, &inputs)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Unit {
    Mono(String),
    Joint(String, String),
    Cca(String, String),
}

impl Unit {
    fn outputs(&self) -> Vec<String> {
        match self {
            Unit::Mono(l) => vec![mono_space(l)],
            Unit::Joint(p, l) => vec![
                bilingual_space(Method::Joint, p, l, p),
                bilingual_space(Method::Joint, p, l, l),
            ],
            Unit::Cca(p, l) => vec![
                format!("spaces/CCA/{p}-{l}/lexicon.tsv"),
                format!("spaces/CCA/{p}-{l}/model.txt"),
                bilingual_space(Method::Cca, p, l, p),
                bilingual_space(Method::Cca, p, l, l),
            ],
        }
    }

    fn describe(&self) -> String {
        match self {
            Unit::Mono(l) => format!("monolingual {l}"),
            Unit::Joint(p, l) => format!("JOINT pivot {p} with {l}"),
            Unit::Cca(p, l) => format!("CCA pivot {p} with {l}"),
        }
    }

    fn compute<T: Real>(&self, run: &Run, store: &Store) -> anyhow::Result<Vec<Output>> {
        let seed = run.config.seed;
        let outs = self.outputs();
        match self {
            Unit::Mono(l) => {
                let corpus = read_monolingual(&run.mono_path(l))?;
                let cfg = run.config.train.with_seed(derive_seed(seed, &format!("mono/{l}")));
                let space = train_monolingual::<T>(&corpus, l, &cfg)?;
                Ok(vec![Output::new(outs[0].clone(), space.to_text()?, &[])])
            }
            Unit::Joint(p, l) => {
                let aligned = oriented_corpus(run, p, l)?;
                let corpus_p = read_monolingual(&run.mono_path(p))?;
                let corpus_l = read_monolingual(&run.mono_path(l))?;
                let cfg = run.config.train.with_seed(derive_seed(seed, &format!("joint/{p}-{l}")));
                let (sp, sl) = train_joint::<T>(&corpus_p, &corpus_l, &aligned, &cfg)?.into_sides();
                Ok(vec![
                    Output::new(outs[0].clone(), sp.to_text()?, &[]),
                    Output::new(outs[1].clone(), sl.to_text()?, &[]),
                ])
            }
            Unit::Cca(p, l) => {
                let inputs = [mono_space(p), mono_space(l)];
                let src = parse_space::<T>(&store.read(&inputs[0])?, p)?;
                let tgt = parse_space::<T>(&store.read(&inputs[1])?, l)?;
                let entry = run.parallel(p, l);
                let links_path = run.resolve(entry.links.as_ref().expect("validated: CCA has links"));
                let corpus = parse_aligned_corpus(&run.resolve(&entry.path_a), &run.resolve(&entry.path_b), &entry.a, &entry.b)?;
                let mut links = parse_alignment_links(&links_path, &corpus)?;
                let mut corpus = corpus;
                if entry.a != *p {
                    corpus = corpus.swapped();
                    links = links.transposed();
                }
                let lexicon = extract_lexicon(&corpus, &links, run.config.cca.min_pair_count)?;
                let keep = components_for_ratio(src.dim().min(tgt.dim()), run.config.cca.keep_ratio);
                let model = fit_cca(&src, &tgt, &lexicon, run.ridge, Some(keep))?;
                let ps = project(&src, &model, Side::Source)?;
                let pl = project(&tgt, &model, Side::Target)?;
                Ok(vec![
                    Output::new(outs[0].clone(), lexicon.to_tsv(), &inputs),
                    Output::new(outs[1].clone(), model.to_text(), &inputs),
                    Output::new(outs[2].clone(), ps.to_text()?, &inputs),
                    Output::new(outs[3].clone(), pl.to_text()?, &inputs),
                ])
            }
        }
    }
}

/// The parallel corpus for `{p, l}` with `p` on side a.
fn oriented_corpus(run: &Run, p: &str, l: &str) -> anyhow::Result<AlignedCorpus> {
    let e = run.parallel(p, l);
    let corpus = parse_aligned_corpus(&run.resolve(&e.path_a), &run.resolve(&e.path_b), &e.a, &e.b)?;
    Ok(if e.a == p { corpus } else { corpus.swapped() })
}

fn train<T: Real>(run: &Run, store: &mut Store, options: Options) -> anyhow::Result<()> {
    let mut stages: Vec<Vec<Unit>> = Vec::new();
    if run.has(Method::Cca) {
        stages.push(run.config.languages.iter().map(|l| Unit::Mono(l.clone())).collect());
    }
    let mut cells = Vec::new();
    for (p, l) in run.cells() {
        if run.has(Method::Joint) {
            cells.push(Unit::Joint(p.clone(), l.clone()));
        }
        if run.has(Method::Cca) {
            cells.push(Unit::Cca(p, l));
        }
    }
    stages.push(cells);

    for stage in stages {
        let pending: Vec<Unit> = stage.into_iter().filter(|u| options.force || !store.fresh(&u.outputs())).collect();
        let width = rayon::current_num_threads().max(1);
        for chunk in pending.chunks(width) {
            let results: Vec<Vec<Output>> = chunk
                .par_iter()
                .map(|u| {
                    info!("training {}", u.describe());
                    u.compute::<T>(run, store).with_context(|| u.describe())
                })
                .collect::<anyhow::Result<_>>()?;
            for outputs in results {
                record(store, "train", outputs)?;
            }
            store.save()?;
        }
    }
    Ok(())
}

fn header(run: &Run, command: &str, extra: &[(&str, String)]) -> Vec<String> {
    let mut line = format!("command={command} seed={} vocab_cap={}", run.config.seed, run.config.vocab_cap);
    for (k, v) in extra {
        write!(line, " {k}={v}").unwrap();
    }
    write!(line, " config_hash={}", run.hash).unwrap();
    vec![line]
}

fn distances<T: Real>(run: &Run, store: &mut Store, options: Options) -> anyhow::Result<()> {
    let langs = &run.config.languages;
    let mut outputs_expected: Vec<String> = run.methods.iter().map(|m| matrix_file(m.as_str())).collect();
    outputs_expected.push(matrix_file("AVG"));
    outputs_expected.push("report.txt".into());
    if !options.force && store.fresh(&outputs_expected) {
        info!("distances are current");
        return Ok(());
    }

    let mut matrices = Vec::new();
    for &method in &run.methods {
        let mut acc = DistanceAccumulator::<T>::new(langs)?;
        let mut inputs = Vec::new();
        for p in &run.pivots {
            let seconds: Vec<&String> = langs.iter().filter(|l| *l != p).collect();
            let spaces: Vec<EmbeddingSpace<T>> = seconds
                .iter()
                .map(|l| {
                    let rel = bilingual_space(method, p, l, p);
                    inputs.push(rel.clone());
                    Ok(parse_space::<T>(&store.read(&rel)?, p)?)
                })
                .collect::<anyhow::Result<_>>()?;
            let refs: Vec<&EmbeddingSpace<T>> = spaces.iter().collect();
            let vocab = shared_pivot_vocab(&refs, run.vocab_cap()).with_context(|| format!("{method} pivot {p}"))?;
            info!("{method} pivot {p}: {} shared words", vocab.len());
            let graphs: BTreeMap<String, PivotGraph<T>> = seconds
                .par_iter()
                .zip(spaces.par_iter())
                .map(|(l, s)| Ok(((*l).clone(), build_graph(s, l, &vocab).with_context(|| format!("{method} ({p}, {l})"))?)))
                .collect::<anyhow::Result<_>>()?;
            if run.config.dump_graphs {
                for (l, g) in &graphs {
                    store.write(&format!("graphs/{method}/{p}-{l}.csv"), g.to_csv().as_bytes(), "distances", &[])?;
                }
            }
            acc.add_pivot(p, &graphs).with_context(|| format!("{method} pivot {p}"))?;
        }
        let d = acc.finish()?;
        let comments = header(run, "distances", &[("method", method.to_string()), ("pivots", run.pivots.join(":"))]);
        let input_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        store.write(&matrix_file(method.as_str()), d.to_csv(&comments).as_bytes(), "distances", &input_refs)?;
        matrices.push(d);
    }

    let avg = average_matrices(&matrices, run.config.stats.rescale)?;
    let comments = header(
        run,
        "distances",
        &[
            ("method", "AVG".into()),
            ("of", run.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(":")),
            ("rescale", run.config.stats.rescale.to_string()),
        ],
    );
    let method_files: Vec<String> = run.methods.iter().map(|m| matrix_file(m.as_str())).collect();
    let method_refs: Vec<&str> = method_files.iter().map(String::as_str).collect();
    store.write(&matrix_file("AVG"), avg.to_csv(&comments).as_bytes(), "distances", &method_refs)?;

    let mut report = String::new();
    for c in header(run, "distances", &[]) {
        writeln!(report, "# {c}").unwrap();
    }
    if let [a, b] = matrices.as_slice() {
        let seed = derive_seed(run.config.seed, "mantel/JOINT-CCA");
        match mantel_test(a, b, run.config.stats.permutations, run.sides, seed) {
            Ok(m) => writeln!(
                report,
                "mantel JOINT-CCA r={} p={} permutations={} sides={} seed={}",
                fmt_sig9(m.r),
                fmt_sig9(m.p_value),
                m.permutations,
                m.sides,
                m.seed
            )
            .unwrap(),
            Err(e) => writeln!(report, "mantel JOINT-CCA not computed: {e}").unwrap(),
        }
    } else {
        writeln!(report, "mantel JOINT-CCA not computed: one method").unwrap();
    }
    store.write("report.txt", report.as_bytes(), "distances", &method_refs)?;
    Ok(())
}

struct EvalRow {
    lang: String,
    method: Method,
    distance: f64,
    delta: Option<f64>,
    used: usize,
    total: usize,
}

fn eval<T: Real>(run: &Run, store: &mut Store, options: Options) -> anyhow::Result<()> {
    if run.config.datasets.is_empty() {
        warn!("no datasets configured; skipping eval");
        return Ok(());
    }
    let dist_file = matrix_file(&run.eval_distance);
    let mut expected: Vec<String> = run.config.datasets.iter().map(|d| format!("eval_{}.csv", d.name)).collect();
    expected.push("correlation.csv".into());
    if !options.force && store.fresh(&expected) {
        info!("evaluation is current");
        return Ok(());
    }
    let d = DistanceMatrix::<f64>::from_csv(&store.read(&dist_file)?)?;

    let mut corr = String::new();
    for c in header(
        run,
        "eval",
        &[
            ("distance", format!("D_{}", run.eval_distance)),
            ("permutations", run.config.eval.permutations.to_string()),
        ],
    ) {
        writeln!(corr, "# {c}").unwrap();
    }
    writeln!(corr, "# tau correlates delta with similarity = -D(pivot, lang); positive favours similar languages").unwrap();
    writeln!(corr, "# stars: *** p<0.001, ** p<0.01, * p<0.05, † p<0.10").unwrap();
    corr.push_str("dataset,pivot,method,variant,tau,p_value,stars,n,test\n");
    let mut corr_inputs = vec![dist_file.clone()];

    for entry in &run.config.datasets {
        let ds = parse_similarity_dataset(&run.resolve(&entry.path), &entry.name, &entry.language)?;
        let p = &ds.language;
        let mut rows = Vec::new();
        let mut inputs = vec![dist_file.clone()];
        for &method in &run.methods {
            for l in run.config.languages.iter().filter(|l| *l != p) {
                let rel = bilingual_space(method, p, l, p);
                let space = parse_space::<T>(&store.read(&rel)?, p)?;
                inputs.push(rel);
                let distance = d.get_by_label(p, l).ok_or_else(|| anyhow!("{dist_file} lacks {p}/{l}"))?;
                let (delta, used) = match score_space(&space, &ds) {
                    Ok((delta, used)) => (Some(delta), used),
                    Err(EvalError::TooFewUsablePairs { used, .. }) => {
                        warn!("{} {method} ({p}, {l}): only {used} usable pairs", ds.name);
                        (None, used)
                    }
                    Err(e) => return Err(e).with_context(|| format!("{} {method} ({p}, {l})", ds.name)),
                };
                rows.push(EvalRow { lang: l.clone(), method, distance, delta, used, total: ds.pairs.len() });
            }
        }
        rows.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.lang.cmp(&b.lang)).then(a.method.cmp(&b.method)));

        let mut out = String::new();
        for c in header(
            run,
            "eval",
            &[("dataset", ds.name.clone()), ("pivot", p.clone()), ("distance", format!("D_{}", run.eval_distance))],
        ) {
            writeln!(out, "# {c}").unwrap();
        }
        writeln!(out, "# rows ordered by distance to the pivot, closest first; delta = Spearman(cosine, gold); OOV pairs skipped").unwrap();
        out.push_str("dataset,pivot,lang,method,distance,delta,pairs_used,pairs_total\n");
        for r in &rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                ds.name,
                p,
                r.lang,
                r.method,
                fmt_sig9(r.distance),
                r.delta.map_or("NA".to_string(), fmt_sig9),
                r.used,
                r.total
            )
            .unwrap();
        }
        let name = format!("eval_{}.csv", ds.name);
        let input_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        store.write(&name, out.as_bytes(), "eval", &input_refs)?;
        corr_inputs.push(name);

        for &method in &run.methods {
            let deltas: BTreeMap<String, f64> = rows
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.delta.map(|v| (r.lang.clone(), v)))
                .collect();
            let dists: BTreeMap<String, f64> = rows
                .iter()
                .filter(|r| r.method == method && deltas.contains_key(&r.lang))
                .map(|r| (r.lang.clone(), r.distance))
                .collect();
            for variant in RankVariant::ALL {
                let seed = derive_seed(run.config.seed, &format!("tau/{}/{method}/{variant}", ds.name));
                match correlate_performance(&deltas, &dists, variant, run.config.eval.permutations, seed) {
                    Ok(r) => writeln!(
                        corr,
                        "{},{},{},{},{},{},{},{},{}",
                        ds.name,
                        p,
                        method,
                        variant,
                        fmt_sig9(r.tau),
                        fmt_sig9(r.p_value),
                        stars(r.p_value),
                        r.n,
                        r.scheme
                    )
                    .unwrap(),
                    Err(e) => {
                        warn!("{} {method} {variant}: {e}", ds.name);
                        writeln!(corr, "{},{},{},{},NA,NA,,{},{e}", ds.name, p, method, variant, deltas.len()).unwrap();
                    }
                }
            }
        }
    }
    let refs: Vec<&str> = corr_inputs.iter().map(String::as_str).collect();
    store.write("correlation.csv", corr.as_bytes(), "eval", &refs)?;
    Ok(())
}

fn classify(run: &Run, store: &mut Store, options: Options) -> anyhow::Result<()> {
    let k = run.config.stats.k;
    let pca_file = format!("pca_k{k}.csv");
    if !options.force && store.fresh(&[pca_file.clone(), "mantel.csv".into()]) {
        info!("classification is current");
        return Ok(());
    }
    let sem_file = matrix_file("AVG");
    let sem = DistanceMatrix::<f64>::from_csv(&store.read(&sem_file)?)?;
    let langs = &run.config.languages;

    let proj = project_2d(&sem, run.projection)?;
    let points: Vec<(String, Vec<f64>)> =
        sem.labels().iter().enumerate().map(|(i, l)| (l.clone(), sem.values().row(i).to_vec())).collect();
    let kcfg = KmeansConfig {
        k,
        restarts: run.config.stats.restarts,
        max_iter: run.config.stats.max_iter,
        seed: derive_seed(run.config.seed, "kmeans"),
    };
    let clusters = kmeans(&points, kcfg)?;
    let mut out = String::new();
    for c in header(
        run,
        "classify",
        &[
            ("matrix", "D_AVG".into()),
            ("projection", run.config.stats.projection.clone()),
            ("explained", fmt_sig9(proj.explained)),
            ("k", k.to_string()),
            ("restarts", kcfg.restarts.to_string()),
            ("kmeans_seed", kcfg.seed.to_string()),
            ("inertia", fmt_sig9(clusters.inertia)),
        ],
    ) {
        writeln!(out, "# {c}").unwrap();
    }
    writeln!(out, "# clusters computed on the distance-matrix rows").unwrap();
    out.push_str("lang,x,y,cluster\n");
    for (i, l) in proj.labels.iter().enumerate() {
        let [x, y] = proj.coords[i];
        writeln!(out, "{l},{},{},{}", fmt_sig9(x), fmt_sig9(y), clusters.assignment[i]).unwrap();
    }
    store.write(&pca_file, out.as_bytes(), "classify", &[&sem_file])?;

    let geo = match &run.config.geo {
        Some(p) => Some(parse_geo_table(&run.resolve(p))?.distance_matrix(langs)?),
        None => None,
    };
    let wals = match &run.config.wals {
        Some(p) => Some(parse_feature_table(&run.resolve(p))?.distance_matrix(langs)?),
        None => None,
    };
    let pairs: Vec<(&str, Option<&DistanceMatrix<f64>>, Option<&DistanceMatrix<f64>>)> = vec![
        ("Geo-WALS", geo.as_ref(), wals.as_ref()),
        ("Geo-Sem", geo.as_ref(), Some(&sem)),
        ("WALS-Sem", wals.as_ref(), Some(&sem)),
        ("Sem-Sem", Some(&sem), Some(&sem)),
    ];
    let mut csv = String::new();
    for c in header(
        run,
        "classify",
        &[
            ("sem", "D_AVG".into()),
            ("test", format!("mantel {}", run.sides)),
            ("permutations", run.config.stats.permutations.to_string()),
        ],
    ) {
        writeln!(csv, "# {c}").unwrap();
    }
    csv.push_str("pair,r,p_value,stars,permutations,sides,seed\n");
    for (name, a, b) in pairs {
        let (Some(a), Some(b)) = (a, b) else {
            writeln!(csv, "# {name} skipped: table not configured").unwrap();
            continue;
        };
        let seed = derive_seed(run.config.seed, &format!("mantel/{name}"));
        match mantel_test(a, b, run.config.stats.permutations, run.sides, seed) {
            Ok(m) => writeln!(
                csv,
                "{name},{},{},{},{},{},{}",
                fmt_sig9(m.r),
                fmt_sig9(m.p_value),
                stars(m.p_value),
                m.permutations,
                m.sides,
                m.seed
            )
            .unwrap(),
            Err(StatsError::DegenerateMatrix) => {
                warn!("{name}: a matrix has constant off-diagonal entries");
                writeln!(csv, "{name},NA,NA,,{},{},{seed}", run.config.stats.permutations, run.sides).unwrap();
            }
            Err(e) => return Err(e).with_context(|| name.to_string()),
        }
    }
    store.write("mantel.csv", csv.as_bytes(), "classify", &[&sem_file])?;
    Ok(())
}

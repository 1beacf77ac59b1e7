mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{cli, csv_rows, write_injected_project, write_toy_project, Injected, SideVectors, Toy};
use rand::Rng;
use semdist_cli::manifest::{Manifest, MANIFEST_FILE};
use semdist_cli::{config, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
use semdist_core::distance_matrix::DistanceMatrix;
use semdist_core::embedding_store::{cosine, parse_space, Method};
use semdist_core::seed::rng_from;

fn manifest(out: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn matrix(path: &Path) -> DistanceMatrix<f64> {
    DistanceMatrix::from_csv(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_symmetric_zero_diagonal(d: &DistanceMatrix<f64>) {
    for i in 0..d.len() {
        assert_eq!(d.get(i, i), 0.0);
        for j in 0..d.len() {
            assert_eq!(d.get(i, j), d.get(j, i));
        }
    }
}

fn three_languages() -> Toy {
    Toy { languages: vec!["en", "fr", "de"], ..Toy::default() }
}

#[test]
fn train_writes_one_space_per_language_and_ordered_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    assert_eq!(cli("train", &cfg, &[]), EXIT_OK);
    let m = manifest(&dir.path().join("out"));
    let count = |prefix: &str, suffix: &str| {
        m.artifacts.keys().filter(|k| k.starts_with(prefix) && k.ends_with(suffix)).count()
    };
    assert_eq!(count("spaces/mono/", ".vec"), 3);
    // Six ordered cells per method, each with a pivot and a second side.
    assert_eq!(count("spaces/JOINT/", ".vec"), 12);
    assert_eq!(count("spaces/CCA/", ".vec"), 12);
    assert_eq!(count("spaces/CCA/", "model.txt"), 6);
    for p in ["en", "fr", "de"] {
        for l in ["en", "fr", "de"].iter().filter(|l| **l != p) {
            assert!(m.artifacts.contains_key(&format!("spaces/JOINT/{p}-{l}/{p}.vec")));
        }
    }

    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    for name in ["D_JOINT.csv", "D_CCA.csv", "D_AVG.csv"] {
        let d = matrix(&dir.path().join("out").join(name));
        assert_eq!(d.labels(), ["en", "fr", "de"]);
        assert_symmetric_zero_diagonal(&d);
    }
}

#[test]
fn rerun_reproduces_manifest_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    assert_eq!(cli("train", &cfg, &[]), EXIT_OK);
    let first = manifest(&dir.path().join("out"));
    assert_eq!(cli("train", &cfg, &["--force", "--jobs", "2"]), EXIT_OK);
    assert_eq!(first, manifest(&dir.path().join("out")));
}

#[test]
fn current_outputs_are_not_rewritten() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    assert_eq!(cli("all", &cfg, &[]), EXIT_OK);
    let d = dir.path().join("out/D_JOINT.csv");
    let stamp = fs::metadata(&d).unwrap().modified().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(20));
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    assert_eq!(fs::metadata(&d).unwrap().modified().unwrap(), stamp);
    assert_eq!(cli("distances", &cfg, &["--force"]), EXIT_OK);
    assert_ne!(fs::metadata(&d).unwrap().modified().unwrap(), stamp);
}

#[test]
fn missing_corpus_is_a_validation_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    fs::remove_file(dir.path().join("data/mono.fr")).unwrap();
    let err = config::load(&cfg).unwrap_err().to_string();
    assert!(err.contains("mono.fr"), "{err}");
    assert_eq!(cli("train", &cfg, &[]), EXIT_VALIDATION);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn geo_table_missing_languages_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let toy = Toy { geo_languages: Some(vec!["en", "fr"]), ..Toy::default() };
    let cfg = write_toy_project(dir.path(), &toy);
    let err = config::load(&cfg).unwrap_err().to_string();
    assert!(err.contains("de") && err.contains("it"), "{err}");
    assert_eq!(cli("classify", &cfg, &[]), EXIT_VALIDATION);
}

#[test]
fn argument_errors_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    assert_eq!(semdist_cli::run_cli(["semdist", "--help"]), EXIT_OK);
    assert_eq!(semdist_cli::run_cli(["semdist", "plot", "--config", "x.toml"]), EXIT_VALIDATION);
    assert_eq!(cli("train", &cfg, &["--jobs", "0"]), EXIT_VALIDATION);
    assert_eq!(cli("train", &dir.path().join("absent.toml"), &[]), EXIT_VALIDATION);
    // Reading distances before anything was trained is a runtime failure.
    assert_eq!(cli("distances", &cfg, &[]), EXIT_RUNTIME);
}

#[test]
fn tampered_artifact_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    assert_eq!(cli("train", &cfg, &[]), EXIT_OK);
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    let d = dir.path().join("out/D_AVG.csv");
    let mut text = fs::read_to_string(&d).unwrap();
    text.push_str("# edited\n");
    fs::write(&d, text).unwrap();
    assert_eq!(cli("classify", &cfg, &[]), EXIT_RUNTIME);
}

#[test]
fn cca_only_average_is_rescaled_cca() {
    let dir = tempfile::tempdir().unwrap();
    let toy = Toy { methods: vec!["CCA"], dataset: false, ..Toy::default() };
    let cfg = write_toy_project(dir.path(), &toy);
    assert_eq!(cli("train", &cfg, &[]), EXIT_OK);
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    let cca = matrix(&dir.path().join("out/D_CCA.csv"));
    let avg = matrix(&dir.path().join("out/D_AVG.csv"));
    let scale = cca.off_diagonal_mean();
    for i in 0..cca.len() {
        for j in 0..cca.len() {
            let expected = cca.get(i, j) / scale;
            assert!((avg.get(i, j) - expected).abs() <= 1e-8 * expected.abs().max(1e-300), "{i},{j}");
        }
    }
    let report = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.contains("not computed: one method"));
}

/// Every emitted matrix equals a direct-loop recomputation from the pivot
/// sides the run stored.
#[test]
fn toy_matrices_match_direct_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let toy = Toy::default();
    let cfg = write_toy_project(dir.path(), &toy);
    assert_eq!(cli("all", &cfg, &[]), EXIT_OK);
    let out = dir.path().join("out");
    let langs: Vec<String> = toy.languages.iter().map(|s| s.to_string()).collect();
    for method in [Method::Joint, Method::Cca] {
        let mut sides: BTreeMap<(String, String), SideVectors> = BTreeMap::new();
        let mut order: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for p in &langs {
            for l in langs.iter().filter(|l| *l != p) {
                let rel = semdist_cli::pipeline::bilingual_space(method, p, l, p);
                let space = parse_space::<f64>(&fs::read_to_string(out.join(rel)).unwrap(), p).unwrap();
                order.entry(p.clone()).or_insert_with(|| space.vocab().to_vec());
                let vectors = space.vocab().iter().enumerate().map(|(i, w)| (w.clone(), space.row(i).to_vec())).collect();
                sides.insert((p.clone(), l.clone()), vectors);
            }
        }
        let oracle = common::oracle_distances_capped(&langs, &sides, Some(&order), Some(30));
        let d = matrix(&out.join(format!("D_{method}.csv")));
        assert_symmetric_zero_diagonal(&d);
        for i in 0..langs.len() {
            for j in 0..langs.len() {
                let (got, want) = (d.get(i, j), oracle[i][j]);
                assert!((got - want).abs() <= 1e-8 * want.abs() + 1e-12, "{method} {i},{j}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn mantel_table_has_every_pair_and_a_perfect_self_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &Toy::default());
    assert_eq!(cli("all", &cfg, &[]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("out/mantel.csv"));
    assert_eq!(rows[0].join(","), "pair,r,p_value,stars,permutations,sides,seed");
    let pairs: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(pairs, ["Geo-WALS", "Geo-Sem", "WALS-Sem", "Sem-Sem"]);
    let sem = &rows[4];
    assert_eq!(sem[1].parse::<f64>().unwrap(), 1.0);
    assert!(sem[2].parse::<f64>().unwrap() >= 1.0 / 200.0);
    let header = fs::read_to_string(dir.path().join("out/mantel.csv")).unwrap();
    assert!(header.starts_with("# command=classify seed=3 vocab_cap=30"));
    assert!(header.lines().next().unwrap().contains("config_hash="));
}

#[test]
fn single_precision_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy_project(dir.path(), &three_languages());
    let text = fs::read_to_string(&cfg).unwrap().replacen("seed = 3", "seed = 3\nprecision = \"f32\"", 1);
    fs::write(&cfg, text).unwrap();
    assert_eq!(cli("all", &cfg, &[]), EXIT_OK);
    assert_symmetric_zero_diagonal(&matrix(&dir.path().join("out/D_AVG.csv")));
}

/// Pivot sides share the dataset words' vectors exactly and differ
/// elsewhere, so every bilingual space ranks the dataset pairs like the gold
/// scores do.
#[test]
fn self_consistent_dataset_scores_one_everywhere() {
    let mut rng = rng_from(31);
    let langs: Vec<String> = ["la", "lb", "lc", "ld"].iter().map(|s| s.to_string()).collect();
    let base: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut sides = BTreeMap::new();
    for p in &langs {
        for l in langs.iter().filter(|l| *l != p) {
            let vectors: SideVectors = base
                .iter()
                .enumerate()
                .map(|(w, v)| {
                    let moved = v.iter().map(|x| if w < 20 { *x } else { x + rng.random_range(-0.5..0.5) }).collect();
                    (format!("{p}w{w}"), moved)
                })
                .collect();
            sides.insert((p.clone(), l.clone()), vectors);
        }
    }
    let mut tsv = String::new();
    for i in 0..20 {
        for j in (i + 1..20).step_by(3) {
            tsv.push_str(&format!("law{i}\tlaw{j}\t{}\n", cosine(&base[i], &base[j]).unwrap()));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let project = Injected {
        languages: langs.clone(),
        pivot_sides: &sides,
        datasets: vec![("consistent".into(), "la".into(), tsv)],
        k: 2,
        extra_config: String::new(),
    };
    let cfg = write_injected_project(dir.path(), &project);
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    assert_eq!(cli("eval", &cfg, &[]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("out/eval_consistent.csv"));
    assert_eq!(rows.len(), 4);
    let mut last = f64::NEG_INFINITY;
    for r in &rows[1..] {
        assert_eq!(r[5].parse::<f64>().unwrap(), 1.0, "{r:?}");
        let dist: f64 = r[4].parse().unwrap();
        assert!(dist >= last);
        last = dist;
    }
}

const FAMILY: [usize; 8] = [0, 0, 0, 0, 1, 1, 1, 1];
const NOISE: [f64; 8] = [0.05, 0.2, 0.4, 0.6, 0.1, 0.3, 0.5, 0.7];

fn family_project(dir: &Path, seed: u64) -> Vec<String> {
    let world = common::family_world(seed, 60, 12, 0.6, &FAMILY, &NOISE);
    let langs: Vec<String> = (0..8).map(|i| format!("l{}", (b'a' + i as u8) as char)).collect();
    let mut sides = BTreeMap::new();
    for (p, lp) in langs.iter().enumerate() {
        for (l, ll) in langs.iter().enumerate().filter(|(l, _)| *l != p) {
            sides.insert((lp.clone(), ll.clone()), world.pivot_side(p, l, lp));
        }
    }
    // Gold similarities come from the pivot's own space.
    let pivot = &world.spaces[0];
    let mut rng = rng_from(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut tsv = String::new();
    while seen.len() < 200 {
        let (i, j) = (rng.random_range(0..60), rng.random_range(0..60));
        if i < j && seen.insert((i, j)) {
            tsv.push_str(&format!("law{i}\tlaw{j}\t{}\n", cosine(&pivot[i], &pivot[j]).unwrap()));
        }
    }
    let project = Injected {
        languages: langs.clone(),
        pivot_sides: &sides,
        datasets: vec![("family".into(), "la".into(), tsv)],
        k: 2,
        extra_config: String::new(),
    };
    write_injected_project(dir, &project);
    langs
}

#[test]
fn tau_on_family_data_is_positive_and_significant() {
    let dir = tempfile::tempdir().unwrap();
    family_project(dir.path(), 5);
    let cfg = dir.path().join("run.toml");
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    assert_eq!(cli("eval", &cfg, &[]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("out/correlation.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        let (tau, p): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!(tau > 0.0 && p < 0.05, "{r:?}");
        assert_eq!(r[7], "7");
        assert!(r[8].starts_with("exact"), "{r:?}");
    }
}

#[test]
fn two_family_clustering_matches_families() {
    let dir = tempfile::tempdir().unwrap();
    let langs = family_project(dir.path(), 6);
    let cfg = dir.path().join("run.toml");
    assert_eq!(cli("distances", &cfg, &[]), EXIT_OK);
    assert_eq!(cli("classify", &cfg, &[]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("out/pca_k2.csv"));
    assert_eq!(rows[0].join(","), "lang,x,y,cluster");
    let cluster: BTreeMap<&str, &str> = rows[1..].iter().map(|r| (r[0].as_str(), r[3].as_str())).collect();
    for (i, a) in langs.iter().enumerate() {
        for (j, b) in langs.iter().enumerate() {
            assert_eq!(cluster[a.as_str()] == cluster[b.as_str()], FAMILY[i] == FAMILY[j], "{a} {b}");
        }
    }
}

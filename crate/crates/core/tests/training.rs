use proptest::prelude::*;
use rand::Rng;
use semdist_core::corpus_io::{AlignedCorpus, SentencePair};
use semdist_core::embedding_store::{cosine, VocabCounts};
use semdist_core::seed::rng_from;
use semdist_core::trainer::{
    crosslingual_gradient, crosslingual_loss_ids, sgns_gradient, sgns_loss, train_monolingual, JointTrainer, SkipGramState,
    TrainConfig,
};

const EPS: f64 = 1e-5;

fn random_state(seed: u64, lang: &str, words: usize, dim: usize) -> SkipGramState<f64> {
    let mut rng = rng_from(seed);
    let counts = VocabCounts::from_counts((0..words).map(|i| (format!("{lang}{i}"), 1 + i as u64)));
    let mut s = SkipGramState::initialize(lang, counts, dim, &mut rng).unwrap();
    for i in 0..words {
        s.input_row_mut(i).iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
        s.output_row_mut(i).iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
    }
    s
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 { diff } else { diff / scale }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sgns_gradient_matches_central_differences(seed in any::<u64>(), center in 0usize..12, context in 0usize..12,
                                                 negatives in proptest::collection::vec(0usize..12, 0..6)) {
        let mut s = random_state(seed, "e", 12, 10);
        let g = sgns_gradient(&s, center, context, &negatives);
        let (mut analytic, mut numeric) = (g.input.1.clone(), Vec::new());
        for k in 0..10 {
            let orig = s.input_row(center)[k];
            s.input_row_mut(center)[k] = orig + EPS;
            let up = sgns_loss(&s, center, context, &negatives);
            s.input_row_mut(center)[k] = orig - EPS;
            let down = sgns_loss(&s, center, context, &negatives);
            s.input_row_mut(center)[k] = orig;
            numeric.push((up - down) / (2.0 * EPS));
        }
        for row in 0..12 {
            for k in 0..10 {
                analytic.push(g.output.get(&row).map_or(0.0, |v| v[k]));
                let orig = s.output_row(row)[k];
                s.output_row_mut(row)[k] = orig + EPS;
                let up = sgns_loss(&s, center, context, &negatives);
                s.output_row_mut(row)[k] = orig - EPS;
                let down = sgns_loss(&s, center, context, &negatives);
                s.output_row_mut(row)[k] = orig;
                numeric.push((up - down) / (2.0 * EPS));
            }
        }
        prop_assert!(rel_err(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn cross_gradient_matches_central_differences(seed in any::<u64>(),
                                                  ids_e in proptest::collection::vec(0u32..8, 1..10),
                                                  ids_f in proptest::collection::vec(0u32..9, 1..10)) {
        let mut e = random_state(seed, "e", 8, 10);
        let mut f = random_state(seed.wrapping_add(1), "f", 9, 10);
        let g = crosslingual_gradient(&e, &f, &ids_e, &ids_f);
        let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
        for row in 0..8 {
            for k in 0..10 {
                analytic.push(g.e.get(&row).map_or(0.0, |v| v[k]));
                let orig = e.input_row(row)[k];
                e.input_row_mut(row)[k] = orig + EPS;
                let up = crosslingual_loss_ids(&e, &f, &ids_e, &ids_f);
                e.input_row_mut(row)[k] = orig - EPS;
                let down = crosslingual_loss_ids(&e, &f, &ids_e, &ids_f);
                e.input_row_mut(row)[k] = orig;
                numeric.push((up - down) / (2.0 * EPS));
            }
        }
        for row in 0..9 {
            for k in 0..10 {
                analytic.push(g.f.get(&row).map_or(0.0, |v| v[k]));
                let orig = f.input_row(row)[k];
                f.input_row_mut(row)[k] = orig + EPS;
                let up = crosslingual_loss_ids(&e, &f, &ids_e, &ids_f);
                f.input_row_mut(row)[k] = orig - EPS;
                let down = crosslingual_loss_ids(&e, &f, &ids_e, &ids_f);
                f.input_row_mut(row)[k] = orig;
                numeric.push((up - down) / (2.0 * EPS));
            }
        }
        prop_assert!(rel_err(&analytic, &numeric) < 1e-4);
    }
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 12,
        window: 3,
        negatives: 4,
        learning_rate: 0.05,
        epochs: 4,
        min_count: 1,
        lambda: 1.0,
        batch_size: 16,
        seed,
    }
}

#[test]
fn disjoint_topics_separate_in_the_trained_space() {
    let mut rng = rng_from(61);
    let corpus: Vec<Vec<String>> = (0..1500)
        .map(|s| {
            let topic = if s % 2 == 0 { "a" } else { "b" };
            (0..8).map(|_| format!("{topic}{}", rng.random_range(0..15))).collect()
        })
        .collect();
    let space = train_monolingual::<f64>(&corpus, "xx", &small_config(3)).unwrap();
    let (mut within, mut across) = (Vec::new(), Vec::new());
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let c = cosine(space.row(i), space.row(j)).unwrap();
            let same = space.vocab()[i].as_bytes()[0] == space.vocab()[j].as_bytes()[0];
            if same { within.push(c) } else { across.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&across), "{} vs {}", mean(&within), mean(&across));
}

fn parallel_corpus(seed: u64) -> (Vec<Vec<String>>, Vec<Vec<String>>, AlignedCorpus) {
    let mut rng = rng_from(seed);
    let mut e = Vec::new();
    let mut f = Vec::new();
    for _ in 0..1500 {
        let start = rng.random_range(0..40);
        let walk: Vec<usize> = (0..8).map(|k| (start + k * rng.random_range(1..3)) % 40).collect();
        e.push(walk.iter().map(|c| format!("e{c}")).collect::<Vec<_>>());
        f.push(walk.iter().map(|c| format!("f{c}")).collect::<Vec<_>>());
    }
    let pairs = e.iter().zip(&f).map(|(a, b)| SentencePair { a: a.clone(), b: b.clone() }).collect();
    let aligned = AlignedCorpus::new("e", "f", pairs).unwrap();
    (e, f, aligned)
}

#[test]
fn cross_lingual_weight_lowers_the_final_cross_loss() {
    let (e, f, aligned) = parallel_corpus(62);
    let final_loss = |lambda: f64| {
        let mut t = JointTrainer::<f64>::new(&e, &f, &aligned, &TrainConfig { lambda, ..small_config(9) }).unwrap();
        t.run().unwrap();
        assert!(t.e().is_finite() && t.f().is_finite());
        t.mean_crosslingual_loss()
    };
    let (with, without) = (final_loss(1.0), final_loss(0.0));
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn joint_training_is_seed_deterministic() {
    let (e, f, aligned) = parallel_corpus(63);
    let run = |seed| {
        let mut t = JointTrainer::<f64>::new(&e, &f, &aligned, &small_config(seed)).unwrap();
        t.run().unwrap();
        (t.e().inputs().to_vec(), t.f().inputs().to_vec())
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

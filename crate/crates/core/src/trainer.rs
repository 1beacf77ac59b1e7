//! Skip-gram with negative sampling, and joint bilingual training that adds
//! a λ-weighted cross-lingual term over sentence-aligned data:
//!
//! `L = Σ_lang Σ_(w,h) L_sgns(w, h) + λ · Σ_pairs ‖mean(e-side) − mean(f-side)‖²`
//!
//! The reference trainer is single-threaded and fully deterministic given
//! the seed. Each language draws from its own random stream, so joint
//! training with λ = 0 reproduces two independent monolingual runs.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, weighted::WeightedAliasIndex};
use thiserror::Error;

use crate::corpus_io::{AlignedCorpus, SentencePair};
use crate::embedding_store::{filter_min_count, BilingualSpace, EmbeddingError, EmbeddingSpace, Method, VocabCounts};
use crate::scalar::{axpy, dot, Real};
use crate::seed::rng_for;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no word of the `{0}` corpus survives min-count filtering")]
    EmptyVocabulary(String),
    #[error("no aligned sentence pair has in-vocabulary tokens on both sides")]
    NoUsableAlignedPairs,
    #[error("sentence side `{0}` has no in-vocabulary token")]
    EmptyAfterFiltering(String),
    #[error("parameters became non-finite in epoch {epoch} ({language})")]
    NonFinite { language: String, epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Maximum context radius; the effective radius is drawn per center
    /// word from `1..=window`.
    pub window: usize,
    pub negatives: usize,
    /// Initial learning rate, decayed linearly to 1/100 of its value.
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    /// Weight of the cross-lingual term.
    pub lambda: f64,
    /// Positive (center, context) pairs per monolingual minibatch; one
    /// cross-lingual step follows each minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            window: 5,
            negatives: 5,
            learning_rate: 0.025,
            epochs: 5,
            min_count: 100,
            lambda: 1.0,
            batch_size: 128,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// `log σ(x)`, with `x` clamped to `[-30, 30]` before exponentiation.
#[inline]
pub fn log_sigmoid<T: Real>(x: T) -> T {
    let x = clamp30(x);
    // log σ(x) = -softplus(-x)
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    let x = clamp30(x);
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn clamp30<T: Real>(x: T) -> T {
    let lim = T::of(30.0);
    x.max(-lim).min(lim)
}

/// Parameters of one language: input (embedding) and output (context)
/// matrices over a filtered vocabulary, plus the unigram^0.75 noise
/// distribution.
#[derive(Debug, Clone)]
pub struct SkipGramState<T> {
    language: String,
    vocab: VocabCounts,
    index: HashMap<String, u32>,
    dim: usize,
    input: Vec<T>,
    output: Vec<T>,
    noise_probs: Vec<f64>,
    noise: WeightedAliasIndex<f64>,
}

impl<T: Real> SkipGramState<T> {
    /// Seeded initialization: inputs uniform in `[-0.5/d, 0.5/d]`, outputs
    /// zero.
    pub fn initialize(language: &str, vocab: VocabCounts, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if vocab.is_empty() {
            return Err(TrainError::EmptyVocabulary(language.to_string()));
        }
        let n = vocab.len();
        let half = 0.5 / dim as f64;
        let input = (0..n * dim).map(|_| T::of(rng.random_range(-half..half))).collect();
        let output = vec![T::zero(); n * dim];
        let weights: Vec<f64> = vocab.entries().iter().map(|(_, c)| (*c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let noise_probs = weights.iter().map(|w| w / total).collect();
        let noise = WeightedAliasIndex::new(weights).expect("positive noise weights");
        let index = vocab.entries().iter().enumerate().map(|(i, (w, _))| (w.clone(), i as u32)).collect();
        Ok(SkipGramState { language: language.to_string(), vocab, index, dim, input, output, noise_probs, noise })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &VocabCounts {
        &self.vocab
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).map(|&i| i as usize)
    }

    pub fn noise_distribution(&self) -> &[f64] {
        &self.noise_probs
    }

    pub fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        self.noise.sample(rng)
    }

    #[inline]
    pub fn input_row(&self, i: usize) -> &[T] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn input_row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.input[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn output_row(&self, i: usize) -> &[T] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn output_row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[T] {
        &self.input
    }

    pub fn outputs(&self) -> &[T] {
        &self.output
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    /// In-vocabulary ids of `tokens`, in order.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.index.get(t.as_str()).copied()).collect()
    }

    /// The input matrix as an embedding space over the filtered vocabulary.
    pub fn to_space(&self) -> Result<EmbeddingSpace<T>> {
        Ok(EmbeddingSpace::new(&self.language, self.vocab.words(), self.dim, self.input.clone())?)
    }
}

/// `−log σ(u_c·v_o) − Σ_n log σ(−u_c·v_n)`.
pub fn sgns_loss<T: Real>(state: &SkipGramState<T>, center: usize, context: usize, negatives: &[usize]) -> T {
    let u = state.input_row(center);
    let mut loss = -log_sigmoid(dot(u, state.output_row(context)));
    for &n in negatives {
        loss = loss - log_sigmoid(-dot(u, state.output_row(n)));
    }
    loss
}

/// Gradient of [`sgns_loss`] with respect to every row it touches. Rows
/// that appear several times (repeated negatives) are accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient<T> {
    pub input: (usize, Vec<T>),
    pub output: BTreeMap<usize, Vec<T>>,
}

pub fn sgns_gradient<T: Real>(
    state: &SkipGramState<T>,
    center: usize,
    context: usize,
    negatives: &[usize],
) -> SgnsGradient<T> {
    let d = state.dim;
    let u = state.input_row(center);
    let mut grad_u = vec![T::zero(); d];
    let mut output: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    let targets = std::iter::once((context, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (row, positive) in targets {
        let v = state.output_row(row);
        let s = sigmoid(dot(u, v));
        let g = if positive { s - T::one() } else { s };
        axpy(g, v, &mut grad_u);
        let entry = output.entry(row).or_insert_with(|| vec![T::zero(); d]);
        axpy(g, u, entry);
    }
    SgnsGradient { input: (center, grad_u), output }
}

/// One exact gradient-descent step on a single (center, context,
/// negatives) example. `scratch` must hold `dim` elements. Returns the
/// loss before the step.
pub fn sgns_update<T: Real>(
    state: &mut SkipGramState<T>,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: T,
    scratch: &mut [T],
    coeffs: &mut Vec<T>,
) -> T {
    let d = state.dim;
    scratch.iter_mut().for_each(|x| *x = T::zero());
    coeffs.clear();
    let mut loss = T::zero();
    {
        let u = &state.input[center * d..(center + 1) * d];
        for (k, &row) in std::iter::once(&context).chain(negatives).enumerate() {
            let v = &state.output[row * d..(row + 1) * d];
            let score = dot(u, v);
            let g = if k == 0 {
                loss = loss - log_sigmoid(score);
                sigmoid(score) - T::one()
            } else {
                loss = loss - log_sigmoid(-score);
                sigmoid(score)
            };
            axpy(g, v, scratch);
            coeffs.push(g);
        }
    }
    let (input, output) = (&mut state.input, &mut state.output);
    let u = &input[center * d..(center + 1) * d];
    for (&g, &row) in coeffs.iter().zip(std::iter::once(&context).chain(negatives)) {
        axpy(-lr * g, u, &mut output[row * d..(row + 1) * d]);
    }
    axpy(-lr, scratch, &mut input[center * d..(center + 1) * d]);
    loss
}

fn side_mean<T: Real>(state: &SkipGramState<T>, ids: &[u32]) -> Vec<T> {
    let mut m = vec![T::zero(); state.dim];
    for &id in ids {
        axpy(T::one(), state.input_row(id as usize), &mut m);
    }
    let n = T::of_usize(ids.len());
    m.iter_mut().for_each(|x| *x = *x / n);
    m
}

/// `‖mean(e inputs) − mean(f inputs)‖²` over in-vocabulary token ids.
pub fn crosslingual_loss_ids<T: Real>(e: &SkipGramState<T>, f: &SkipGramState<T>, ids_e: &[u32], ids_f: &[u32]) -> T {
    let me = side_mean(e, ids_e);
    let mf = side_mean(f, ids_f);
    me.iter().zip(&mf).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// Cross-lingual loss of one aligned sentence pair (side a belongs to `e`).
pub fn crosslingual_loss<T: Real>(e: &SkipGramState<T>, f: &SkipGramState<T>, pair: &SentencePair) -> Result<T> {
    let (ids_e, ids_f) = encode_pair(e, f, pair)?;
    Ok(crosslingual_loss_ids(e, f, &ids_e, &ids_f))
}

fn encode_pair<T: Real>(e: &SkipGramState<T>, f: &SkipGramState<T>, pair: &SentencePair) -> Result<(Vec<u32>, Vec<u32>)> {
    let ids_e = e.encode(&pair.a);
    if ids_e.is_empty() {
        return Err(TrainError::EmptyAfterFiltering(e.language.clone()));
    }
    let ids_f = f.encode(&pair.b);
    if ids_f.is_empty() {
        return Err(TrainError::EmptyAfterFiltering(f.language.clone()));
    }
    Ok((ids_e, ids_f))
}

/// Gradient of [`crosslingual_loss_ids`] per touched input row of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGradient<T> {
    pub e: BTreeMap<usize, Vec<T>>,
    pub f: BTreeMap<usize, Vec<T>>,
}

pub fn crosslingual_gradient<T: Real>(
    e: &SkipGramState<T>,
    f: &SkipGramState<T>,
    ids_e: &[u32],
    ids_f: &[u32],
) -> CrossGradient<T> {
    let me = side_mean(e, ids_e);
    let mf = side_mean(f, ids_f);
    let diff: Vec<T> = me.iter().zip(&mf).map(|(&a, &b)| a - b).collect();
    let two = T::of(2.0);
    let accumulate = |ids: &[u32], sign: T| {
        let scale = sign * two / T::of_usize(ids.len());
        let mut out: BTreeMap<usize, Vec<T>> = BTreeMap::new();
        for &id in ids {
            let entry = out.entry(id as usize).or_insert_with(|| vec![T::zero(); diff.len()]);
            axpy(scale, &diff, entry);
        }
        out
    };
    CrossGradient { e: accumulate(ids_e, T::one()), f: accumulate(ids_f, -T::one()) }
}

/// Gradient step on the cross-lingual term with step size `step`
/// (learning rate times λ).
pub fn crosslingual_update<T: Real>(
    e: &mut SkipGramState<T>,
    f: &mut SkipGramState<T>,
    ids_e: &[u32],
    ids_f: &[u32],
    step: T,
) {
    let me = side_mean(e, ids_e);
    let mf = side_mean(f, ids_f);
    let diff: Vec<T> = me.iter().zip(&mf).map(|(&a, &b)| a - b).collect();
    let two = T::of(2.0);
    let scale_e = -step * two / T::of_usize(ids_e.len());
    for &id in ids_e {
        axpy(scale_e, &diff, e.input_row_mut(id as usize));
    }
    let scale_f = step * two / T::of_usize(ids_f.len());
    for &id in ids_f {
        axpy(scale_f, &diff, f.input_row_mut(id as usize));
    }
}

/// Resumable pass over an encoded corpus, producing SGD updates one
/// minibatch of positive pairs at a time.
struct SgnsRunner<T> {
    sentences: Vec<Vec<u32>>,
    rng: ChaCha8Rng,
    window: usize,
    negatives: usize,
    lr0: f64,
    epochs: usize,
    total_tokens: u64,
    processed_tokens: u64,
    epoch: usize,
    sentence: usize,
    position: usize,
    // Context offsets left for the current center word.
    pending: Vec<usize>,
    negs: Vec<usize>,
    scratch: Vec<T>,
    coeffs: Vec<T>,
}

impl<T: Real> SgnsRunner<T> {
    fn new(state: &SkipGramState<T>, corpus: &[Vec<String>], config: &TrainConfig, rng: ChaCha8Rng) -> Self {
        let sentences: Vec<Vec<u32>> =
            corpus.iter().map(|s| state.encode(s)).filter(|s| !s.is_empty()).collect();
        let tokens: u64 = sentences.iter().map(|s| s.len() as u64).sum();
        SgnsRunner {
            sentences,
            rng,
            window: config.window,
            negatives: config.negatives,
            lr0: config.learning_rate,
            epochs: config.epochs,
            total_tokens: tokens * config.epochs as u64,
            processed_tokens: 0,
            epoch: 0,
            sentence: 0,
            position: 0,
            pending: Vec::new(),
            negs: Vec::with_capacity(config.negatives),
            scratch: vec![T::zero(); config.dim],
            coeffs: Vec::with_capacity(config.negatives + 1),
        }
    }

    fn finished(&self) -> bool {
        self.epoch >= self.epochs || self.total_tokens == 0
    }

    fn progress(&self) -> f64 {
        if self.total_tokens == 0 {
            1.0
        } else {
            self.processed_tokens as f64 / self.total_tokens as f64
        }
    }

    fn learning_rate(&self) -> f64 {
        self.lr0 * (1.0 - 0.99 * self.progress().min(1.0))
    }

    /// Moves to the next center word, filling `pending`. Returns `false`
    /// when the corpus is exhausted.
    fn advance(&mut self, state: &SkipGramState<T>) -> Result<bool> {
        loop {
            if self.finished() {
                return Ok(false);
            }
            if self.sentence >= self.sentences.len() {
                self.epoch += 1;
                self.sentence = 0;
                self.position = 0;
                if !state.is_finite() {
                    return Err(TrainError::NonFinite { language: state.language.clone(), epoch: self.epoch });
                }
                continue;
            }
            let len = self.sentences[self.sentence].len();
            if self.position >= len {
                self.sentence += 1;
                self.position = 0;
                continue;
            }
            let radius = self.rng.random_range(1..=self.window);
            let lo = self.position.saturating_sub(radius);
            let hi = (self.position + radius).min(len - 1);
            // Reverse so `pop` yields contexts left to right.
            self.pending.clear();
            self.pending.extend((lo..=hi).rev().filter(|&j| j != self.position));
            self.processed_tokens += 1;
            if self.pending.is_empty() {
                self.position += 1;
                continue;
            }
            return Ok(true);
        }
    }

    /// Runs up to `batch` positive pairs. Returns `false` once the corpus
    /// has been fully consumed.
    fn run_batch(&mut self, state: &mut SkipGramState<T>, batch: usize) -> Result<bool> {
        let mut done = 0;
        while done < batch {
            if self.pending.is_empty() && !self.advance(state)? {
                return Ok(false);
            }
            let lr = T::of(self.learning_rate());
            let sentence = &self.sentences[self.sentence];
            let center = sentence[self.position] as usize;
            while let Some(j) = self.pending.pop() {
                let context = sentence[j] as usize;
                self.negs.clear();
                for _ in 0..self.negatives {
                    let n = state.sample_noise(&mut self.rng);
                    if n != context {
                        self.negs.push(n);
                    }
                }
                sgns_update(state, center, context, &self.negs, lr, &mut self.scratch, &mut self.coeffs);
                done += 1;
                if done == batch {
                    break;
                }
            }
            if self.pending.is_empty() {
                self.position += 1;
            }
        }
        Ok(!self.finished() || !self.pending.is_empty())
    }
}

fn build_state<T: Real>(corpus: &[Vec<String>], language: &str, config: &TrainConfig) -> Result<SkipGramState<T>> {
    let counts = filter_min_count(&VocabCounts::from_sentences(corpus), config.min_count.max(1));
    let mut rng = rng_for(config.seed, &format!("init/{language}"));
    SkipGramState::initialize(language, counts, config.dim, &mut rng)
}

fn sgns_rng(config: &TrainConfig, language: &str) -> ChaCha8Rng {
    rng_for(config.seed, &format!("sgns/{language}"))
}

/// Monolingual skip-gram training.
pub struct MonolingualTrainer<T> {
    state: SkipGramState<T>,
    runner: SgnsRunner<T>,
    batch_size: usize,
}

impl<T: Real> MonolingualTrainer<T> {
    pub fn new(corpus: &[Vec<String>], language: &str, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = build_state(corpus, language, config)?;
        let runner = SgnsRunner::new(&state, corpus, config, sgns_rng(config, language));
        Ok(MonolingualTrainer { state, runner, batch_size: config.batch_size })
    }

    pub fn state(&self) -> &SkipGramState<T> {
        &self.state
    }

    pub fn run(&mut self) -> Result<()> {
        while self.runner.run_batch(&mut self.state, self.batch_size)? {}
        Ok(())
    }

    pub fn into_state(self) -> SkipGramState<T> {
        self.state
    }
}

pub fn train_monolingual<T: Real>(corpus: &[Vec<String>], language: &str, config: &TrainConfig) -> Result<EmbeddingSpace<T>> {
    let mut trainer = MonolingualTrainer::new(corpus, language, config)?;
    trainer.run()?;
    trainer.state.to_space()
}

/// Joint bilingual training: SGNS minibatches on each monolingual corpus,
/// each followed by one cross-lingual step on the next usable aligned pair.
pub struct JointTrainer<T> {
    e: SkipGramState<T>,
    f: SkipGramState<T>,
    runner_e: SgnsRunner<T>,
    runner_f: SgnsRunner<T>,
    aligned: Vec<(Vec<u32>, Vec<u32>)>,
    cursor: usize,
    config: TrainConfig,
}

impl<T: Real> JointTrainer<T> {
    /// `aligned` side a must be the language of `corpus_e`.
    pub fn new(
        corpus_e: &[Vec<String>],
        corpus_f: &[Vec<String>],
        aligned: &AlignedCorpus,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (lang_e, lang_f) = (aligned.lang_a(), aligned.lang_b());
        let e = build_state(corpus_e, lang_e, config)?;
        let f = build_state(corpus_f, lang_f, config)?;
        let pairs: Vec<(Vec<u32>, Vec<u32>)> =
            aligned.pairs().iter().filter_map(|p| encode_pair(&e, &f, p).ok()).collect();
        if pairs.is_empty() {
            return Err(TrainError::NoUsableAlignedPairs);
        }
        let runner_e = SgnsRunner::new(&e, corpus_e, config, sgns_rng(config, lang_e));
        let runner_f = SgnsRunner::new(&f, corpus_f, config, sgns_rng(config, lang_f));
        Ok(JointTrainer { e, f, runner_e, runner_f, aligned: pairs, cursor: 0, config: config.clone() })
    }

    pub fn e(&self) -> &SkipGramState<T> {
        &self.e
    }

    pub fn f(&self) -> &SkipGramState<T> {
        &self.f
    }

    /// Number of aligned pairs with in-vocabulary tokens on both sides.
    pub fn usable_pairs(&self) -> usize {
        self.aligned.len()
    }

    /// Mean cross-lingual loss over all usable aligned pairs.
    pub fn mean_crosslingual_loss(&self) -> T {
        let total: T = self.aligned.iter().map(|(a, b)| crosslingual_loss_ids(&self.e, &self.f, a, b)).sum();
        total / T::of_usize(self.aligned.len())
    }

    fn cross_step(&mut self) {
        if self.config.lambda == 0.0 {
            return;
        }
        let done = self.runner_e.processed_tokens + self.runner_f.processed_tokens;
        let total = self.runner_e.total_tokens + self.runner_f.total_tokens;
        let progress = if total == 0 { 1.0 } else { done as f64 / total as f64 };
        let lr = self.config.learning_rate * (1.0 - 0.99 * progress.min(1.0));
        let (ids_e, ids_f) = &self.aligned[self.cursor];
        crosslingual_update(&mut self.e, &mut self.f, ids_e, ids_f, T::of(lr * self.config.lambda));
        self.cursor = (self.cursor + 1) % self.aligned.len();
    }

    pub fn run(&mut self) -> Result<()> {
        let batch = self.config.batch_size;
        let mut e_live = !self.runner_e.finished();
        let mut f_live = !self.runner_f.finished();
        while e_live || f_live {
            if e_live {
                e_live = self.runner_e.run_batch(&mut self.e, batch)?;
                self.cross_step();
            }
            if f_live {
                f_live = self.runner_f.run_batch(&mut self.f, batch)?;
                self.cross_step();
            }
        }
        for s in [&self.e, &self.f] {
            if !s.is_finite() {
                return Err(TrainError::NonFinite { language: s.language.clone(), epoch: self.config.epochs });
            }
        }
        Ok(())
    }

    /// The trained input matrices, side e as pivot.
    pub fn into_space(self) -> Result<BilingualSpace<T>> {
        Ok(BilingualSpace::new(self.e.to_space()?, self.f.to_space()?, Method::Joint)?)
    }
}

pub fn train_joint<T: Real>(
    corpus_e: &[Vec<String>],
    corpus_f: &[Vec<String>],
    aligned: &AlignedCorpus,
    config: &TrainConfig,
) -> Result<BilingualSpace<T>> {
    let mut trainer = JointTrainer::new(corpus_e, corpus_f, aligned, config)?;
    trainer.run()?;
    trainer.into_space()
}

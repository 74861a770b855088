//! Training configuration, the parameter store with Adagrad state, and the
//! seeded epoch loop over the joint objective.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, RngState};
use crate::composer::{corrupt_event, CorruptionTarget};
use crate::data::{extend_vocabulary, AnnotatedExample, EmbeddingTable, EventTuple, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{active_terms, joint_backward, LossWeights, Model, ModelDims, Negatives, Parameters};
use crate::params::Parameterized;
use crate::scalar::Scalar;

/// Stabiliser in the Adagrad denominator.
pub const ADAGRAD_EPS: f64 = 1e-8;

/// Ablation presets setting `(α, β, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ntn,
    NtnIntent,
    NtnSentiment,
    NtnIntentSentiment,
}

impl Preset {
    pub fn weights(self) -> LossWeights {
        match self {
            Preset::Ntn => LossWeights::NTN,
            Preset::NtnIntent => LossWeights::NTN_INTENT,
            Preset::NtnSentiment => LossWeights::NTN_SENTIMENT,
            Preset::NtnIntentSentiment => LossWeights::JOINT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ntn => "ntn",
            Preset::NtnIntent => "ntn+int",
            Preset::NtnSentiment => "ntn+senti",
            Preset::NtnIntentSentiment => "ntn+int+senti",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ntn" => Ok(Preset::Ntn),
            "ntn+int" | "+int" => Ok(Preset::NtnIntent),
            "ntn+senti" | "+senti" => Ok(Preset::NtnSentiment),
            "ntn+int+senti" | "+int+senti" => Ok(Preset::NtnIntentSentiment),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected ntn, ntn+int, ntn+senti, ntn+int+senti)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda_l2: f64,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub epochs: usize,
    pub seed: u64,
    pub corruption_target: CorruptionTarget,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            learning_rate: 0.001,
            batch_size: 128,
            lambda_l2: 0.0001,
            d: 100,
            k: 100,
            n: 10,
            epochs: 10,
            seed: 1,
            corruption_target: CorruptionTarget::Actor,
        }
    }
}

const CONFIG_KEYS: [&str; 12] = [
    "alpha",
    "beta",
    "gamma",
    "learning_rate",
    "batch_size",
    "lambda_l2",
    "d",
    "k",
    "n",
    "epochs",
    "seed",
    "corruption_target",
];

impl TrainingConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            word_dim: self.d,
            event_dim: self.k,
            rank: self.n,
        }
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let w = preset.weights();
        self.alpha = w.alpha;
        self.beta = w.beta;
        self.gamma = w.gamma;
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        self.dims().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_l2 must be non-negative, got {}",
                self.lambda_l2
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lambda_l2" => self.lambda_l2 = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "corruption_target" => self.corruption_target = value.parse()?,
            "preset" => self.apply_preset(value.parse()?),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines (`#` comments allowed) over the defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = TrainingConfig::default();
        cfg.update_from_text(text, path)?;
        Ok(cfg)
    }

    pub fn update_from_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Canonical `key = value` text, one line per field in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match key {
                "alpha" => self.alpha.to_string(),
                "beta" => self.beta.to_string(),
                "gamma" => self.gamma.to_string(),
                "learning_rate" => self.learning_rate.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "lambda_l2" => self.lambda_l2.to_string(),
                "d" => self.d.to_string(),
                "k" => self.k.to_string(),
                "n" => self.n.to_string(),
                "epochs" => self.epochs.to_string(),
                "seed" => self.seed.to_string(),
                "corruption_target" => self.corruption_target.to_string(),
                _ => unreachable!(),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

/// Parameters with their gradient buffers and Adagrad accumulators, all of
/// identical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<S> {
    pub params: Parameters<S>,
    pub grads: Parameters<S>,
    pub accumulators: Parameters<S>,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new(params: Parameters<S>) -> Self {
        let grads = params.zeros_like();
        let accumulators = params.zeros_like();
        ParameterStore {
            params,
            grads,
            accumulators,
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill_zero();
    }
}

/// `acc += g²; θ −= lr·g/(√acc + ε)` per coordinate, then zeroes the gradients.
/// Nothing is modified if any gradient is non-finite.
pub fn adagrad_step<S: Scalar>(store: &mut ParameterStore<S>, learning_rate: S) -> Result<()> {
    for g in store.grads.arrays() {
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{}`", g.name)));
        }
    }
    let eps = S::lit(ADAGRAD_EPS);
    let params = store.params.arrays_mut();
    let grads = store.grads.arrays_mut();
    let accs = store.accumulators.arrays_mut();
    for ((p, g), a) in params.into_iter().zip(grads).zip(accs) {
        for ((theta, grad), acc) in p.data.iter_mut().zip(g.data.iter_mut()).zip(a.data.iter_mut()) {
            let gv = *grad;
            *acc += gv * gv;
            *theta -= learning_rate * gv / (acc.sqrt() + eps);
            *grad = S::zero();
        }
    }
    Ok(())
}

/// Mean per-term losses over one epoch. A term no example contributed to is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub event: Option<f64>,
    pub intent: Option<f64>,
    pub sentiment: Option<f64>,
    pub total: f64,
}

impl fmt::Display for EpochMetrics {
    /// `epoch  L_E  L_I  L_S  L_total`, tab separated; `-` for inactive terms.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
        write!(
            f,
            "{}\t{}\t{}\t{}\t{:.6}",
            self.epoch,
            cell(self.event),
            cell(self.intent),
            cell(self.sentiment),
            self.total
        )
    }
}

#[derive(Default)]
struct RunningMean {
    sum: f64,
    count: usize,
}

impl RunningMean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Seeded, single-threaded trainer over the joint objective.
#[derive(Debug, Clone)]
pub struct Trainer<S> {
    config: TrainingConfig,
    vocab: Vocabulary,
    store: ParameterStore<S>,
    rng: ChaCha8Rng,
    epoch: usize,
    examples: Vec<AnnotatedExample>,
    intent_pool: Vec<usize>,
}

impl<S: Scalar> Trainer<S> {
    /// Builds the vocabulary over pretrained words and every training token,
    /// initialises parameters and validates the data against the config.
    pub fn new(
        config: TrainingConfig,
        mut vocab: Vocabulary,
        mut table: EmbeddingTable<S>,
        corpus: Vec<EventTuple>,
        annotations: Vec<AnnotatedExample>,
    ) -> Result<Self> {
        config.validate()?;
        if table.dim() != config.d {
            return Err(Error::Config(format!(
                "word vectors have dimension {}, config expects d = {}",
                table.dim(),
                config.d
            )));
        }
        let weights = config.weights();
        let examples: Vec<AnnotatedExample> = corpus
            .into_iter()
            .map(AnnotatedExample::bare)
            .chain(annotations)
            .filter(|ex| active_terms(ex, &weights).any())
            .collect();
        if examples.is_empty() {
            return Err(Error::Empty(
                "training set (no example has a usable loss term under the configured weights)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        extend_vocabulary(&mut vocab, &mut table, &examples, &mut rng);
        let params = Parameters::random(table, config.dims(), &mut rng)?;
        let trainer = Trainer {
            intent_pool: intent_pool(&examples, &weights)?,
            config,
            vocab,
            store: ParameterStore::new(params),
            rng,
            epoch: 0,
            examples,
        };
        trainer.check_corruption_possible()?;
        Ok(trainer)
    }

    /// Continues from a checkpoint on the same data.
    pub fn resume(
        checkpoint: Checkpoint<S>,
        corpus: Vec<EventTuple>,
        annotations: Vec<AnnotatedExample>,
    ) -> Result<Self> {
        let weights = checkpoint.config.weights();
        let examples: Vec<AnnotatedExample> = corpus
            .into_iter()
            .map(AnnotatedExample::bare)
            .chain(annotations)
            .filter(|ex| active_terms(ex, &weights).any())
            .collect();
        if examples.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let trainer = Trainer {
            intent_pool: intent_pool(&examples, &weights)?,
            rng: checkpoint.rng.to_rng(),
            epoch: checkpoint.epoch as usize,
            store: ParameterStore {
                grads: checkpoint.params.zeros_like(),
                params: checkpoint.params,
                accumulators: checkpoint.accumulators,
            },
            vocab: checkpoint.vocab,
            config: checkpoint.config,
            examples,
        };
        trainer.check_corruption_possible()?;
        Ok(trainer)
    }

    fn check_corruption_possible(&self) -> Result<()> {
        if self.config.alpha > 0.0 && self.vocab.len() < 3 {
            return Err(Error::VocabularyTooSmall {
                needed: 2,
                found: self.vocab.len().saturating_sub(1),
            });
        }
        Ok(())
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn examples(&self) -> &[AnnotatedExample] {
        &self.examples
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn store(&self) -> &ParameterStore<S> {
        &self.store
    }

    /// Frozen copy of the current model.
    pub fn model(&self) -> Model<S> {
        Model {
            vocab: self.vocab.clone(),
            params: self.store.params.clone(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint<S> {
        Checkpoint {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.store.params.clone(),
            accumulators: self.store.accumulators.clone(),
            rng: RngState::capture(&self.rng),
            epoch: self.epoch as u64,
        }
    }

    fn sample_negatives(&mut self, index: usize) -> Result<Negatives> {
        let ex = &self.examples[index];
        let corrupted = if self.config.alpha > 0.0 {
            corrupt_event(&ex.event, &self.vocab, self.config.corruption_target, &mut self.rng)?
        } else {
            ex.event.clone()
        };
        let intent = match (&ex.intent, self.config.beta > 0.0) {
            (Some(own), true) => loop {
                let j = self.intent_pool[self.rng.gen_range(0..self.intent_pool.len())];
                let candidate = self.examples[j].intent.as_ref().expect("pool holds intents");
                if j != index && candidate != own {
                    break Some(candidate.clone());
                }
            },
            _ => None,
        };
        Ok(Negatives { corrupted, intent })
    }

    /// One pass over the shuffled training set with fresh negatives.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let weights = self.config.weights();
        let lambda = S::lit(self.config.lambda_l2);
        let lr = S::lit(self.config.learning_rate);
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut le, mut li, mut ls, mut lt) = (
            RunningMean::default(),
            RunningMean::default(),
            RunningMean::default(),
            RunningMean::default(),
        );
        let batch_size = self.config.batch_size.min(order.len());
        for batch in order.chunks(batch_size) {
            let negatives = batch
                .iter()
                .map(|&i| self.sample_negatives(i))
                .collect::<Result<Vec<_>>>()?;
            let scale = S::one() / S::lit(batch.len() as f64);
            for (&i, neg) in batch.iter().zip(&negatives) {
                let loss = joint_backward(
                    &self.vocab,
                    &self.store.params,
                    &self.examples[i],
                    neg,
                    &weights,
                    lambda,
                    scale,
                    &mut self.store.grads,
                )?;
                if let Some(e) = loss.event {
                    le.add(e.total().to_f64_lossy());
                }
                if let Some(v) = loss.intent {
                    li.add(v.to_f64_lossy());
                }
                if let Some(v) = loss.sentiment {
                    ls.add(v.to_f64_lossy());
                }
                lt.add(loss.total.to_f64_lossy());
            }
            adagrad_step(&mut self.store, lr)?;
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            event: le.mean(),
            intent: li.mean(),
            sentiment: ls.mean(),
            total: lt.mean().unwrap_or(0.0),
        })
    }
}

/// Indices of examples whose intent can serve as a negative. Fails when the
/// intent term is active but fewer than two distinct intents exist.
fn intent_pool(examples: &[AnnotatedExample], weights: &LossWeights) -> Result<Vec<usize>> {
    let pool: Vec<usize> = examples
        .iter()
        .enumerate()
        .filter(|(_, ex)| ex.intent.is_some())
        .map(|(i, _)| i)
        .collect();
    if weights.beta > 0.0 && !pool.is_empty() {
        let distinct: HashSet<&Vec<String>> = pool
            .iter()
            .map(|&i| examples[i].intent.as_ref().expect("filtered"))
            .collect();
        if distinct.len() < 2 {
            return Err(Error::Config(
                "intent loss needs at least two distinct intents to sample negatives".into(),
            ));
        }
    }
    Ok(pool)
}

/// Trains for `config.epochs` epochs, calling `on_epoch` after each one.
/// Returns the final checkpoint and the per-epoch metrics.
pub fn train<S: Scalar>(
    config: TrainingConfig,
    vocab: Vocabulary,
    table: EmbeddingTable<S>,
    corpus: Vec<EventTuple>,
    annotations: Vec<AnnotatedExample>,
    mut on_epoch: impl FnMut(&Trainer<S>, &EpochMetrics) -> Result<()>,
) -> Result<(Checkpoint<S>, Vec<EpochMetrics>)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(config, vocab, table, corpus, annotations)?;
    let mut log = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let m = trainer.run_epoch()?;
        on_epoch(&trainer, &m)?;
        log.push(m);
    }
    Ok((trainer.checkpoint(), log))
}

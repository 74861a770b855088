//! The joint model: shared word vectors, event composer, intent encoder and
//! sentiment classifier, with the weighted joint objective and its gradient.

use rand::Rng;

use crate::composer::{margin_loss_backward, EventComposer, MarginLoss};
use crate::data::{AnnotatedExample, EmbeddingTable, EventTuple, Vocabulary};
use crate::error::{Error, Result};
use crate::intent::{intent_loss, intent_loss_backward, BiLstmEncoder};
use crate::params::{mat_mut, mat_ref, ParamMut, ParamRef, Parameterized};
use crate::scalar::Scalar;
use crate::sentiment::SentimentClassifier;
use crate::tensor::{Matrix, Vector};

/// Structural sizes: word dimension `d`, event dimension `k`, rank `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub word_dim: usize,
    pub event_dim: usize,
    pub rank: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.event_dim == 0 {
            return Err(Error::Config("d and k must be positive".into()));
        }
        if self.rank == 0 || self.rank > self.word_dim {
            return Err(Error::Config(format!(
                "rank n must satisfy 1 <= n <= d, got n={} d={}",
                self.rank, self.word_dim
            )));
        }
        if !self.event_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "k must be even so the intent encoder's hidden size k/2 matches, got k={}",
                self.event_dim
            )));
        }
        Ok(())
    }

    /// Hidden size of each intent LSTM direction.
    pub fn intent_hidden(&self) -> usize {
        self.event_dim / 2
    }
}

/// Every trainable array. Gradient and optimiser buffers share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<S> {
    pub embeddings: EmbeddingTable<S>,
    pub composer: EventComposer<S>,
    pub intent: BiLstmEncoder<S>,
    pub sentiment: SentimentClassifier<S>,
}

impl<S: Scalar> Parameters<S> {
    pub fn zeros(vocab_size: usize, dims: ModelDims) -> Self {
        Parameters {
            embeddings: EmbeddingTable::new(Matrix::zeros(vocab_size, dims.word_dim)),
            composer: EventComposer::zeros(dims.word_dim, dims.event_dim, dims.rank),
            intent: BiLstmEncoder::zeros(dims.word_dim, dims.intent_hidden()),
            sentiment: SentimentClassifier::zeros(dims.event_dim),
        }
    }

    /// Fresh random parameters around the given word vectors.
    pub fn random<R: Rng + ?Sized>(embeddings: EmbeddingTable<S>, dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        if embeddings.dim() != dims.word_dim {
            return Err(Error::dim("word vector dimension (d)", dims.word_dim, embeddings.dim()));
        }
        let composer = EventComposer::random(dims.word_dim, dims.event_dim, dims.rank, rng);
        let intent = BiLstmEncoder::random(dims.word_dim, dims.intent_hidden(), rng);
        let sentiment = SentimentClassifier::random(dims.event_dim, rng);
        Ok(Parameters {
            embeddings,
            composer,
            intent,
            sentiment,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Parameters::zeros(self.embeddings.len(), self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            word_dim: self.embeddings.dim(),
            event_dim: self.composer.event_dim(),
            rank: self.composer.actor_predicate.slices.first().map_or(0, |s| s.rank()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.composer.validate()?;
        self.intent.validate()?;
        self.sentiment.validate()?;
        let d = self.embeddings.dim();
        let k = self.composer.event_dim();
        crate::error::check_dim("composer word dimension (d)", d, self.composer.word_dim())?;
        crate::error::check_dim("intent encoder input (d)", d, self.intent.forward.input_dim())?;
        crate::error::check_dim("intent encoding width (2h = k)", k, self.intent.output_dim())?;
        crate::error::check_dim("sentiment classifier input (k)", k, self.sentiment.weight.cols())
    }
}

impl<S: Scalar> Parameterized<S> for Parameters<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = vec![mat_ref("embeddings".into(), &self.embeddings.vectors)];
        out.extend(self.composer.arrays());
        out.extend(self.intent.arrays());
        out.extend(self.sentiment.arrays());
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = vec![mat_mut("embeddings".into(), &mut self.embeddings.vectors)];
        out.extend(self.composer.arrays_mut());
        out.extend(self.intent.arrays_mut());
        out.extend(self.sentiment.arrays_mut());
        out
    }
}

/// `(α, β, γ)` of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub const NTN: LossWeights = LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 };
    pub const NTN_INTENT: LossWeights = LossWeights { alpha: 1.0, beta: 1.0, gamma: 0.0 };
    pub const NTN_SENTIMENT: LossWeights = LossWeights { alpha: 1.0, beta: 0.0, gamma: 1.0 };
    pub const JOINT: LossWeights = LossWeights { alpha: 1.0, beta: 1.0, gamma: 1.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }
}

/// Sampled negatives for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negatives {
    pub corrupted: EventTuple,
    pub intent: Option<Vec<String>>,
}

/// Per-term values of one joint-loss evaluation (unweighted), plus the
/// weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss<S> {
    pub event: Option<MarginLoss<S>>,
    pub intent: Option<S>,
    pub sentiment: Option<S>,
    pub total: S,
}

/// Which terms an example contributes under `weights`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub event: bool,
    pub intent: bool,
    pub sentiment: bool,
}

impl ActiveTerms {
    pub fn any(&self) -> bool {
        self.event || self.intent || self.sentiment
    }
}

pub fn active_terms(example: &AnnotatedExample, weights: &LossWeights) -> ActiveTerms {
    ActiveTerms {
        event: weights.alpha > 0.0,
        intent: weights.beta > 0.0 && example.intent.is_some(),
        sentiment: weights.gamma > 0.0 && example.polarity.is_some(),
    }
}

/// A vocabulary together with the parameters it indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub vocab: Vocabulary,
    pub params: Parameters<S>,
}

fn ids(vocab: &Vocabulary, words: &[String]) -> Vec<usize> {
    words.iter().map(|w| vocab.lookup(w)).collect()
}

impl<S: Scalar> Model<S> {
    pub fn new(vocab: Vocabulary, params: Parameters<S>) -> Result<Self> {
        params.validate()?;
        crate::error::check_dim("embedding rows vs vocabulary size", vocab.len(), params.embeddings.len())?;
        Ok(Model { vocab, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn embed_event(&self, event: &EventTuple) -> Result<Vector<S>> {
        self.params
            .composer
            .embed_event(event, &self.params.embeddings, &self.vocab)
    }

    pub fn score_event(&self, event: &EventTuple) -> Result<S> {
        self.params
            .composer
            .score_event(event, &self.params.embeddings, &self.vocab)
    }

    pub fn encode_intent(&self, words: &[String]) -> Result<Vector<S>> {
        Ok(self
            .params
            .intent
            .trace_ids(&self.params.embeddings, ids(&self.vocab, words))?
            .encoding)
    }

    pub fn joint_loss(
        &self,
        example: &AnnotatedExample,
        negatives: &Negatives,
        weights: &LossWeights,
        lambda: S,
    ) -> Result<JointLoss<S>> {
        joint_loss(&self.vocab, &self.params, example, negatives, weights, lambda)
    }

    pub fn joint_backward(
        &self,
        example: &AnnotatedExample,
        negatives: &Negatives,
        weights: &LossWeights,
        lambda: S,
        scale: S,
        grad: &mut Parameters<S>,
    ) -> Result<JointLoss<S>> {
        joint_backward(&self.vocab, &self.params, example, negatives, weights, lambda, scale, grad)
    }
}

/// `α·L_E + β·L_I + γ·L_S` with terms lacking annotations (or with zero
/// weight) left out.
pub fn joint_loss<S: Scalar>(
    vocab: &Vocabulary,
    params: &Parameters<S>,
    example: &AnnotatedExample,
    negatives: &Negatives,
    weights: &LossWeights,
    lambda: S,
) -> Result<JointLoss<S>> {
    let active = require_terms(example, negatives, weights)?;
    let p = params;
    let pos = p.composer.trace_event(&example.event, &p.embeddings, vocab)?;
    let mut total = S::zero();
    let mut out = JointLoss {
        event: None,
        intent: None,
        sentiment: None,
        total,
    };
    if active.event {
        let neg = p.composer.trace_event(&negatives.corrupted, &p.embeddings, vocab)?;
        let hinge = crate::composer::margin_hinge(
            p.composer.score_trace(&pos)?,
            p.composer.score_trace(&neg)?,
        );
        let ml = MarginLoss {
            hinge,
            regularizer: lambda * p.composer.l2_norm_sq(),
        };
        total += S::lit(weights.alpha) * ml.total();
        out.event = Some(ml);
    }
    if active.intent {
        let vi = p.intent.trace_ids(&p.embeddings, ids(vocab, example.intent.as_deref().expect("active")))?.encoding;
        let vn = p.intent.trace_ids(&p.embeddings, ids(vocab, negatives.intent.as_deref().expect("checked")))?.encoding;
        let li = intent_loss(pos.embedding.as_slice(), vi.as_slice(), vn.as_slice())?;
        total += S::lit(weights.beta) * li;
        out.intent = Some(li);
    }
    if active.sentiment {
        let ls = p
            .sentiment
            .loss(pos.embedding.as_slice(), example.polarity.expect("active"))?;
        total += S::lit(weights.gamma) * ls;
        out.sentiment = Some(ls);
    }
    out.total = total;
    Ok(out)
}

/// Same value as [`joint_loss`]; accumulates `scale · ∂L` into `grad`.
#[allow(clippy::too_many_arguments)]
pub fn joint_backward<S: Scalar>(
    vocab: &Vocabulary,
    params: &Parameters<S>,
    example: &AnnotatedExample,
    negatives: &Negatives,
    weights: &LossWeights,
    lambda: S,
    scale: S,
    grad: &mut Parameters<S>,
) -> Result<JointLoss<S>> {
    let active = require_terms(example, negatives, weights)?;
    let p = params;
    let pos = p.composer.trace_event(&example.event, &p.embeddings, vocab)?;
    let k = p.composer.event_dim();
    let mut grad_embedding = vec![S::zero(); k];
    let mut total = S::zero();
    let mut out = JointLoss {
        event: None,
        intent: None,
        sentiment: None,
        total,
    };
    if active.event {
        let neg = p.composer.trace_event(&negatives.corrupted, &p.embeddings, vocab)?;
        let w = S::lit(weights.alpha);
        let ml = margin_loss_backward(
            &p.composer,
            &pos,
            &neg,
            lambda,
            scale * w,
            &mut grad.composer,
            &mut grad.embeddings,
        )?;
        total += w * ml.total();
        out.event = Some(ml);
    }
    if active.intent {
        let w = S::lit(weights.beta);
        let ti = p.intent.trace_ids(
            &p.embeddings,
            ids(vocab, example.intent.as_deref().expect("active")),
        )?;
        let tn = p.intent.trace_ids(
            &p.embeddings,
            ids(vocab, negatives.intent.as_deref().expect("checked")),
        )?;
        let g = intent_loss_backward(
            pos.embedding.as_slice(),
            ti.encoding.as_slice(),
            tn.encoding.as_slice(),
            scale * w,
        )?;
        for (a, &b) in grad_embedding.iter_mut().zip(&g.event) {
            *a += b;
        }
        p.intent.backward_ids(&ti, &g.intent, &mut grad.intent, &mut grad.embeddings)?;
        p.intent.backward_ids(&tn, &g.negative, &mut grad.intent, &mut grad.embeddings)?;
        total += w * g.loss;
        out.intent = Some(g.loss);
    }
    if active.sentiment {
        let w = S::lit(weights.gamma);
        let (ls, d_event) = p.sentiment.backward(
            pos.embedding.as_slice(),
            example.polarity.expect("active"),
            scale * w,
            &mut grad.sentiment,
        )?;
        for (a, &b) in grad_embedding.iter_mut().zip(&d_event) {
            *a += b;
        }
        total += w * ls;
        out.sentiment = Some(ls);
    }
    if active.intent || active.sentiment {
        p.composer
            .backward_event(&pos, &grad_embedding, &mut grad.composer, &mut grad.embeddings)?;
    }
    out.total = total;
    Ok(out)
}

fn require_terms(
    example: &AnnotatedExample,
    negatives: &Negatives,
    weights: &LossWeights,
) -> Result<ActiveTerms> {
    let active = active_terms(example, weights);
    if !active.any() {
        return Err(Error::NoUsableTerm(format!(
            "event `{}` (alpha={}, beta={}, gamma={})",
            example.event, weights.alpha, weights.beta, weights.gamma
        )));
    }
    if active.intent && negatives.intent.is_none() {
        return Err(Error::Config(format!(
            "event `{}` has an intent but no negative intent was sampled",
            example.event
        )));
    }
    Ok(active)
}

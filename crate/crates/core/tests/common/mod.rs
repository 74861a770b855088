//! Differentiable wrappers shared by the gradient and acceptance tests.
//!
//! Each op packs its inputs and parameters into one flat point and projects
//! vector outputs onto a fixed random direction so the result is a scalar.

#![allow(dead_code)]

use std::path::Path;

use eventembed::composer::{
    event_margin_loss, margin_hinge, margin_loss_backward, EventComposer, LowRankCompositionLayer,
};
use eventembed::data::{parse_word_vectors, AnnotatedExample, EmbeddingTable, EventTuple, Polarity, Vocabulary};
use eventembed::intent::{intent_loss, intent_loss_backward, BiLstmEncoder, LstmCell};
use eventembed::model::{joint_backward, joint_loss, LossWeights, ModelDims, Negatives, Parameters};
use eventembed::params::Parameterized;
use eventembed::sentiment::SentimentClassifier;
use eventembed::tensor::{bilinear_lowrank, bilinear_lowrank_backward, DifferentiableOp, LowRankSlice, Matrix};
use eventembed::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const D: usize = 6;
pub const K: usize = 4;
pub const N: usize = 2;
pub const H: usize = 2;
pub const SEQ: usize = 3;

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, r: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-r..r)).collect()
}

/// Splits `point` into a copy of `template` with the leading values loaded
/// and whatever follows.
fn load<'a, P: Parameterized<f64> + Clone>(template: &P, point: &'a [f64]) -> (P, &'a [f64]) {
    let n = template.num_parameters();
    let mut p = template.clone();
    p.set_flat(&point[..n]);
    (p, &point[n..])
}

fn table_from(rows: usize, dim: usize, data: &[f64]) -> EmbeddingTable<f64> {
    EmbeddingTable::new(Matrix::from_vec(rows, dim, data.to_vec()).expect("table shape"))
}

fn project(r: &[f64], v: &[f64]) -> f64 {
    r.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn random_slice(rng: &mut ChaCha8Rng, d: usize, n: usize) -> LowRankSlice<f64> {
    let mut s = LowRankSlice::zeros(d, n);
    let flat = uniform_vec(rng, s.num_parameters(), 1.0);
    s.set_flat(&flat);
    s
}

/// `r · [aᵀ(T_j)p]_j` over `k` slices; point is `[a; p; slices…]`.
pub struct BilinearOp {
    pub slices: Vec<LowRankSlice<f64>>,
    pub r: Vec<f64>,
}

impl BilinearOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let slices: Vec<_> = (0..K).map(|_| random_slice(rng, D, N)).collect();
        let mut point = uniform_vec(rng, 2 * D, 1.0);
        for s in &slices {
            point.extend(s.to_flat());
        }
        let r = uniform_vec(rng, K, 1.0);
        (BilinearOp { slices, r }, point)
    }

    fn unpack(&self, point: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<LowRankSlice<f64>>) {
        let a = point[..D].to_vec();
        let p = point[D..2 * D].to_vec();
        let mut rest = &point[2 * D..];
        let mut slices = Vec::new();
        for t in &self.slices {
            let (s, tail) = load(t, rest);
            slices.push(s);
            rest = tail;
        }
        (a, p, slices)
    }
}

impl DifferentiableOp<f64> for BilinearOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let (a, p, slices) = self.unpack(point);
        let mut total = 0.0;
        for (s, r) in slices.iter().zip(&self.r) {
            total += r * bilinear_lowrank(&a, &p, s)?;
        }
        Ok(total)
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let (a, p, slices) = self.unpack(point);
        let mut ga = vec![0.0; D];
        let mut gp = vec![0.0; D];
        let mut gs = Vec::new();
        for (s, &r) in slices.iter().zip(&self.r) {
            let mut g = LowRankSlice::zeros(D, N);
            bilinear_lowrank_backward(&a, &p, s, r, &mut ga, &mut gp, &mut g)?;
            gs.push(g);
        }
        let mut out = ga;
        out.extend(gp);
        for g in gs {
            out.extend(g.to_flat());
        }
        Ok(out)
    }
}

/// Wraps an op and reports twice its true gradient.
pub struct DoubledGradient<O>(pub O);

impl<O: DifferentiableOp<f64>> DifferentiableOp<f64> for DoubledGradient<O> {
    fn value(&self, point: &[f64]) -> Result<f64> {
        self.0.value(point)
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.gradient(point)?.into_iter().map(|g| 2.0 * g).collect())
    }
}

/// `r · tanh(xᵀT y + W[x; y] + b)`; point is `[x; y; layer]`.
pub struct ComposeOp {
    pub layer: LowRankCompositionLayer<f64>,
    pub r: Vec<f64>,
}

impl ComposeOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let mut layer = LowRankCompositionLayer::zeros(D, K, N);
        let flat = uniform_vec(rng, layer.num_parameters(), 0.5);
        layer.set_flat(&flat);
        let mut point = uniform_vec(rng, 2 * D, 1.0);
        point.extend(flat);
        let r = uniform_vec(rng, K, 1.0);
        (ComposeOp { layer, r }, point)
    }
}

impl DifferentiableOp<f64> for ComposeOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let (layer, _) = load(&self.layer, &point[2 * D..]);
        let out = layer.compose_pair(&point[..D], &point[D..2 * D])?;
        Ok(project(&self.r, out.as_slice()))
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let (layer, _) = load(&self.layer, &point[2 * D..]);
        let (x, y) = (&point[..D], &point[D..2 * D]);
        let out = layer.compose_pair(x, y)?;
        let mut grad = LowRankCompositionLayer::zeros(D, K, N);
        let (gx, gy) = layer.backward(x, y, out.as_slice(), &self.r, &mut grad)?;
        let mut g = gx;
        g.extend(gy);
        g.extend(grad.to_flat());
        Ok(g)
    }
}

/// `r · C` for an event of word ids; point is `[table; composer]`.
pub struct EventEmbeddingOp {
    pub rows: usize,
    pub composer: EventComposer<f64>,
    pub ids: [Vec<usize>; 3],
    pub r: Vec<f64>,
}

impl EventEmbeddingOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let rows = 5;
        let composer = EventComposer::random(D, K, N, rng);
        let mut point = uniform_vec(rng, rows * D, 1.0);
        point.extend(composer.to_flat());
        // multi-word arguments and a shared word exercise the averaging
        let ids = [vec![0, 1], vec![2], vec![3, 4, 1]];
        let r = uniform_vec(rng, K, 1.0);
        (EventEmbeddingOp { rows, composer, ids, r }, point)
    }
}

impl DifferentiableOp<f64> for EventEmbeddingOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let split = self.rows * D;
        let table = table_from(self.rows, D, &point[..split]);
        let (composer, _) = load(&self.composer, &point[split..]);
        let [a, p, o] = self.ids.clone();
        let t = composer.trace_ids(&table, a, p, o)?;
        Ok(project(&self.r, t.embedding.as_slice()))
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let split = self.rows * D;
        let table = table_from(self.rows, D, &point[..split]);
        let (composer, _) = load(&self.composer, &point[split..]);
        let [a, p, o] = self.ids.clone();
        let t = composer.trace_ids(&table, a, p, o)?;
        let mut grad = EventComposer::zeros(D, K, N);
        let mut grad_table = table_from(self.rows, D, &vec![0.0; split]);
        composer.backward_event(&t, &self.r, &mut grad, &mut grad_table)?;
        let mut g = grad_table.vectors.as_slice().to_vec();
        g.extend(grad.to_flat());
        Ok(g)
    }
}

/// `r_h · h + r_c · c` after one LSTM step; point is `[x; h_prev; c_prev; cell]`.
pub struct LstmStepOp {
    pub cell: LstmCell<f64>,
    pub r_h: Vec<f64>,
    pub r_c: Vec<f64>,
}

impl LstmStepOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let mut cell = LstmCell::zeros(D, H);
        let flat = uniform_vec(rng, cell.num_parameters(), 0.8);
        cell.set_flat(&flat);
        let mut point = uniform_vec(rng, D + 2 * H, 1.0);
        point.extend(flat);
        let r_h = uniform_vec(rng, H, 1.0);
        let r_c = uniform_vec(rng, H, 1.0);
        (LstmStepOp { cell, r_h, r_c }, point)
    }
}

impl DifferentiableOp<f64> for LstmStepOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let (cell, _) = load(&self.cell, &point[D + 2 * H..]);
        let t = cell.step_trace(&point[..D], &point[D..D + H], &point[D + H..D + 2 * H])?;
        Ok(project(&self.r_h, &t.h) + project(&self.r_c, &t.c))
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let (cell, _) = load(&self.cell, &point[D + 2 * H..]);
        let t = cell.step_trace(&point[..D], &point[D..D + H], &point[D + H..D + 2 * H])?;
        let mut grad = LstmCell::zeros(D, H);
        let (dx, dh, dc) = cell.step_backward(&t, &self.r_h, &self.r_c, &mut grad)?;
        let mut g = dx;
        g.extend(dh);
        g.extend(dc);
        g.extend(grad.to_flat());
        Ok(g)
    }
}

/// `r · BiLSTM(words)`; point is `[table; encoder]`.
pub struct BiLstmOp {
    pub rows: usize,
    pub encoder: BiLstmEncoder<f64>,
    pub ids: Vec<usize>,
    pub r: Vec<f64>,
}

impl BiLstmOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let rows = 3;
        let mut encoder = BiLstmEncoder::zeros(D, H);
        let flat = uniform_vec(rng, encoder.num_parameters(), 0.8);
        encoder.set_flat(&flat);
        let mut point = uniform_vec(rng, rows * D, 1.0);
        point.extend(flat);
        let ids = (0..SEQ).map(|_| rng.gen_range(0..rows)).collect();
        let r = uniform_vec(rng, 2 * H, 1.0);
        (BiLstmOp { rows, encoder, ids, r }, point)
    }
}

impl DifferentiableOp<f64> for BiLstmOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let split = self.rows * D;
        let table = table_from(self.rows, D, &point[..split]);
        let (enc, _) = load(&self.encoder, &point[split..]);
        let t = enc.trace_ids(&table, self.ids.clone())?;
        Ok(project(&self.r, t.encoding.as_slice()))
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let split = self.rows * D;
        let table = table_from(self.rows, D, &point[..split]);
        let (enc, _) = load(&self.encoder, &point[split..]);
        let t = enc.trace_ids(&table, self.ids.clone())?;
        let mut grad = BiLstmEncoder::zeros(D, H);
        let mut grad_table = table_from(self.rows, D, &vec![0.0; split]);
        enc.backward_ids(&t, &self.r, &mut grad, &mut grad_table)?;
        let mut g = grad_table.vectors.as_slice().to_vec();
        g.extend(grad.to_flat());
        Ok(g)
    }
}

/// Cosine hinge on `[event; intent; negative]`, drawn away from the kink.
pub struct IntentLossOp;

impl IntentLossOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        loop {
            let point = uniform_vec(rng, 3 * K, 1.0);
            let l = intent_loss(&point[..K], &point[K..2 * K], &point[2 * K..]).unwrap();
            if l > 1e-2 {
                return (IntentLossOp, point);
            }
        }
    }
}

impl DifferentiableOp<f64> for IntentLossOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        intent_loss(&point[..K], &point[K..2 * K], &point[2 * K..])
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let g = intent_loss_backward(&point[..K], &point[K..2 * K], &point[2 * K..], 1.0)?;
        let mut out = g.event;
        out.extend(g.intent);
        out.extend(g.negative);
        Ok(out)
    }
}

/// Cross-entropy on `[event; classifier]`.
pub struct SentimentOp {
    pub classifier: SentimentClassifier<f64>,
    pub polarity: Polarity,
}

impl SentimentOp {
    pub fn random(rng: &mut ChaCha8Rng) -> (Self, Vec<f64>) {
        let mut classifier = SentimentClassifier::zeros(K);
        let flat = uniform_vec(rng, classifier.num_parameters(), 1.0);
        classifier.set_flat(&flat);
        let mut point = uniform_vec(rng, K, 1.0);
        point.extend(flat);
        let polarity = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        (SentimentOp { classifier, polarity }, point)
    }
}

impl DifferentiableOp<f64> for SentimentOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let (c, _) = load(&self.classifier, &point[K..]);
        c.loss(&point[..K], self.polarity)
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let (c, _) = load(&self.classifier, &point[K..]);
        let mut grad = SentimentClassifier::zeros(K);
        let (_, d_event) = c.backward(&point[..K], self.polarity, 1.0, &mut grad)?;
        let mut out = d_event;
        out.extend(grad.to_flat());
        Ok(out)
    }
}

pub const TOY_WORDS: [&str; 8] = ["he", "she", "ate", "drank", "an", "apple", "some", "tea"];

/// A small vocabulary with random `D`-dimensional vectors.
pub fn toy_vocab(rng: &mut ChaCha8Rng) -> (Vocabulary, EmbeddingTable<f64>) {
    let mut text = String::new();
    for w in TOY_WORDS {
        let v = uniform_vec(rng, D, 0.5);
        let cols: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{w} {}\n", cols.join(" ")));
    }
    parse_word_vectors(&text, Path::new("toy")).expect("toy vectors")
}

fn ev(s: &str) -> EventTuple {
    EventTuple::parse(s).expect("event")
}

/// Margin loss with regularizer over `[table; composer]`.
pub struct MarginOp {
    pub vocab: Vocabulary,
    pub rows: usize,
    pub composer: EventComposer<f64>,
    pub event: EventTuple,
    pub corrupted: EventTuple,
    pub lambda: f64,
}

impl MarginOp {
    /// `active` picks whether the hinge is on; either way the point sits
    /// away from the kink.
    pub fn random(rng: &mut ChaCha8Rng, active: bool) -> (Self, Vec<f64>) {
        loop {
            let (vocab, table) = toy_vocab(rng);
            let composer = EventComposer::random(D, K, N, rng);
            let mut point = table.vectors.as_slice().to_vec();
            point.extend(composer.to_flat());
            let op = MarginOp {
                rows: vocab.len(),
                vocab,
                composer,
                event: ev("he|ate|an apple"),
                corrupted: ev("some tea|ate|an apple"),
                lambda: 0.01,
            };
            let pos = op.composer.score_event(&op.event, &table, &op.vocab).unwrap();
            let neg = op.composer.score_event(&op.corrupted, &table, &op.vocab).unwrap();
            let raw = 1.0 - pos + neg;
            if (active && raw > 1e-2) || (!active && raw < -1e-2) {
                return (op, point);
            }
            if !active {
                // push the scores apart along U until the hinge is off
                let mut op = op;
                let c_pos = op.composer.embed_event(&op.event, &table, &op.vocab).unwrap();
                let c_neg = op.composer.embed_event(&op.corrupted, &table, &op.vocab).unwrap();
                let diff: Vec<f64> = c_pos.iter().zip(c_neg.iter()).map(|(a, b)| a - b).collect();
                let norm2: f64 = diff.iter().map(|x| x * x).sum();
                if norm2 < 1e-6 {
                    continue;
                }
                let step = (raw + 0.5) / norm2;
                for (u, d) in op.composer.score.as_mut_slice().iter_mut().zip(&diff) {
                    *u += step * d;
                }
                let mut point = table.vectors.as_slice().to_vec();
                point.extend(op.composer.to_flat());
                let pos = op.composer.score_event(&op.event, &table, &op.vocab).unwrap();
                let neg = op.composer.score_event(&op.corrupted, &table, &op.vocab).unwrap();
                assert!(margin_hinge(pos, neg) == 0.0);
                return (op, point);
            }
        }
    }

    fn unpack(&self, point: &[f64]) -> (EmbeddingTable<f64>, EventComposer<f64>) {
        let split = self.rows * D;
        let (composer, _) = load(&self.composer, &point[split..]);
        (table_from(self.rows, D, &point[..split]), composer)
    }
}

impl DifferentiableOp<f64> for MarginOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let (table, composer) = self.unpack(point);
        event_margin_loss(&composer, &table, &self.vocab, &self.event, &self.corrupted, self.lambda)
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let (table, composer) = self.unpack(point);
        let pos = composer.trace_event(&self.event, &table, &self.vocab)?;
        let neg = composer.trace_event(&self.corrupted, &table, &self.vocab)?;
        let mut grad = EventComposer::zeros(D, K, N);
        let mut grad_table = table_from(self.rows, D, &vec![0.0; self.rows * D]);
        margin_loss_backward(&composer, &pos, &neg, self.lambda, 1.0, &mut grad, &mut grad_table)?;
        let mut g = grad_table.vectors.as_slice().to_vec();
        g.extend(grad.to_flat());
        Ok(g)
    }
}

/// The weighted joint objective over every parameter array.
pub struct JointOp {
    pub vocab: Vocabulary,
    pub params: Parameters<f64>,
    pub example: AnnotatedExample,
    pub negatives: Negatives,
    pub weights: LossWeights,
    pub lambda: f64,
}

pub fn toy_dims() -> ModelDims {
    ModelDims {
        word_dim: D,
        event_dim: K,
        rank: N,
    }
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

impl JointOp {
    pub fn random(rng: &mut ChaCha8Rng, weights: LossWeights) -> (Self, Vec<f64>) {
        loop {
            let (vocab, table) = toy_vocab(rng);
            let mut params = Parameters::random(table, toy_dims(), rng).expect("params");
            // moderate values everywhere keep the tanh units off their plateaus
            let flat = uniform_vec(rng, params.num_parameters(), 0.5);
            params.set_flat(&flat);
            let example = AnnotatedExample {
                event: ev("he|ate|an apple"),
                intent: Some(words("he ate he")),
                emotion_words: Some(words("happy")),
                polarity: Some(Polarity::Positive),
            };
            let negatives = Negatives {
                corrupted: ev("tea|ate|an apple"),
                intent: Some(words("some tea")),
            };
            let op = JointOp {
                vocab,
                params,
                example,
                negatives,
                weights,
                lambda: 0.01,
            };
            let point = op.params.to_flat();
            let l = joint_loss(&op.vocab, &op.params, &op.example, &op.negatives, &op.weights, op.lambda).unwrap();
            let hinge_ok = l.event.is_none_or(|m| m.hinge > 1e-2);
            let intent_ok = l.intent.is_none_or(|v| v > 1e-2);
            if hinge_ok && intent_ok {
                return (op, point);
            }
        }
    }

    fn load(&self, point: &[f64]) -> Parameters<f64> {
        let mut p = self.params.clone();
        p.set_flat(point);
        p
    }
}

impl DifferentiableOp<f64> for JointOp {
    fn value(&self, point: &[f64]) -> Result<f64> {
        let p = self.load(point);
        Ok(joint_loss(&self.vocab, &p, &self.example, &self.negatives, &self.weights, self.lambda)?.total)
    }

    fn gradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        let p = self.load(point);
        let mut grad = p.zeros_like();
        joint_backward(&self.vocab, &p, &self.example, &self.negatives, &self.weights, self.lambda, 1.0, &mut grad)?;
        Ok(grad.to_flat())
    }
}

/// Every named path with a generator of random instances.
pub type Generator = fn(&mut ChaCha8Rng) -> (Box<dyn DifferentiableOp<f64>>, Vec<f64>);

pub fn gradient_paths() -> Vec<(&'static str, Generator)> {
    fn boxed<O: DifferentiableOp<f64> + 'static>((op, p): (O, Vec<f64>)) -> (Box<dyn DifferentiableOp<f64>>, Vec<f64>) {
        (Box::new(op), p)
    }
    vec![
        ("bilinear slice", |r| boxed(BilinearOp::random(r))),
        ("composition layer", |r| boxed(ComposeOp::random(r))),
        ("event embedding", |r| boxed(EventEmbeddingOp::random(r))),
        ("lstm step", |r| boxed(LstmStepOp::random(r))),
        ("bilstm encoder", |r| boxed(BiLstmOp::random(r))),
        ("intent loss", |r| boxed(IntentLossOp::random(r))),
        ("sentiment loss", |r| boxed(SentimentOp::random(r))),
        ("margin loss (active hinge)", |r| boxed(MarginOp::random(r, true))),
        ("margin loss (inactive hinge)", |r| boxed(MarginOp::random(r, false))),
        ("joint ntn", |r| boxed(JointOp::random(r, LossWeights::NTN))),
        ("joint ntn+int", |r| boxed(JointOp::random(r, LossWeights::NTN_INTENT))),
        ("joint ntn+senti", |r| boxed(JointOp::random(r, LossWeights::NTN_SENTIMENT))),
        ("joint all", |r| boxed(JointOp::random(r, LossWeights::JOINT))),
        ("joint partial weights", |r| {
            boxed(JointOp::random(r, LossWeights { alpha: 0.3, beta: 0.7, gamma: 0.5 }))
        }),
    ]
}

//! Low-rank neural tensor composition of `(actor, predicate, object)` into
//! an event embedding, the plausibility score, corruption sampling and the
//! margin ranking loss.

use rand::Rng;

use crate::data::{average_rows, EmbeddingTable, EventTuple, Vocabulary, UNKNOWN_INDEX};
use crate::error::{check_dim, Error, Result};
use crate::params::{mat_mut, mat_ref, slice_muts, slice_refs, vec_mut, vec_ref, ParamMut, ParamRef, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::{
    affine_tanh, affine_tanh_backward, bilinear_lowrank, bilinear_lowrank_backward, LowRankSlice,
    Matrix, Vector,
};

/// Weight of the L2 penalty on composition parameters.
pub const DEFAULT_LAMBDA: f64 = 0.0001;

/// `k` low-rank slices plus the affine part `W [x; y] + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankCompositionLayer<S> {
    pub slices: Vec<LowRankSlice<S>>,
    pub weight: Matrix<S>,
    pub bias: Vector<S>,
}

impl<S: Scalar> LowRankCompositionLayer<S> {
    pub fn zeros(input_dim: usize, output_dim: usize, rank: usize) -> Self {
        LowRankCompositionLayer {
            slices: (0..output_dim)
                .map(|_| LowRankSlice::zeros(input_dim, rank))
                .collect(),
            weight: Matrix::zeros(output_dim, 2 * input_dim),
            bias: Vector::zeros(output_dim),
        }
    }

    /// Factors, `W` and `b` uniform in `±1/√input_dim`; diagonals zero.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        rank: usize,
        rng: &mut R,
    ) -> Self {
        let r = 1.0 / (input_dim as f64).sqrt();
        LowRankCompositionLayer {
            slices: (0..output_dim)
                .map(|_| LowRankSlice {
                    left: Matrix::random_uniform(input_dim, rank, r, rng),
                    right: Matrix::random_uniform(rank, input_dim, r, rng),
                    diag: Vector::zeros(input_dim),
                })
                .collect(),
            weight: Matrix::random_uniform(output_dim, 2 * input_dim, r, rng),
            bias: Vector::random_uniform(output_dim, r, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols() / 2
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.output_dim();
        check_dim("composition layer slice count (k)", k, self.slices.len())?;
        check_dim("composition layer bias (k)", k, self.bias.len())?;
        if !self.weight.cols().is_multiple_of(2) {
            return Err(Error::dim(
                "composition layer weight columns (2·d_in)",
                self.weight.cols() + 1,
                self.weight.cols(),
            ));
        }
        let d = self.input_dim();
        let n = self.slices.first().map_or(1, LowRankSlice::rank);
        for (i, s) in self.slices.iter().enumerate() {
            s.validate()?;
            check_dim(&format!("slice {i} input dimension"), d, s.dim())?;
            check_dim(&format!("slice {i} rank"), n, s.rank())?;
        }
        Ok(())
    }

    /// `tanh([xᵀ T_i y]_i + W [x; y] + b)`
    pub fn compose_pair(&self, x: &[S], y: &[S]) -> Result<Vector<S>> {
        let d = self.input_dim();
        check_dim("composition left input (d_in)", d, x.len())?;
        check_dim("composition right input (d_in)", d, y.len())?;
        let bilinear = self
            .slices
            .iter()
            .map(|s| bilinear_lowrank(x, y, s))
            .collect::<Result<Vec<S>>>()?;
        let xy: Vec<S> = x.iter().chain(y).copied().collect();
        affine_tanh(&xy, &self.weight, &self.bias, &bilinear)
    }

    /// Accumulates gradients given the forward output; returns `(∂x, ∂y)`.
    pub fn backward(
        &self,
        x: &[S],
        y: &[S],
        output: &[S],
        upstream: &[S],
        grad: &mut LowRankCompositionLayer<S>,
    ) -> Result<(Vec<S>, Vec<S>)> {
        let d = self.input_dim();
        let xy: Vec<S> = x.iter().chain(y).copied().collect();
        let mut grad_xy = vec![S::zero(); 2 * d];
        let dz = affine_tanh_backward(
            &xy,
            &self.weight,
            output,
            upstream,
            &mut grad_xy,
            &mut grad.weight,
            &mut grad.bias,
        )?;
        let (gx, gy) = grad_xy.split_at_mut(d);
        for (i, slice) in self.slices.iter().enumerate() {
            bilinear_lowrank_backward(x, y, slice, dz[i], gx, gy, &mut grad.slices[i])?;
        }
        Ok((gx.to_vec(), gy.to_vec()))
    }

    fn push_refs<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, S>>) {
        for (i, s) in self.slices.iter().enumerate() {
            slice_refs(&format!("{prefix}.slice{i}"), s, out);
        }
        out.push(mat_ref(format!("{prefix}.weight"), &self.weight));
        out.push(vec_ref(format!("{prefix}.bias"), &self.bias));
    }

    fn push_muts<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, S>>) {
        for (i, s) in self.slices.iter_mut().enumerate() {
            slice_muts(&format!("{prefix}.slice{i}"), s, out);
        }
        out.push(mat_mut(format!("{prefix}.weight"), &mut self.weight));
        out.push(vec_mut(format!("{prefix}.bias"), &mut self.bias));
    }
}

/// Three composition layers (`actor⊗predicate`, `predicate⊗object`,
/// `S1⊗S2`) and the linear score head `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventComposer<S> {
    pub actor_predicate: LowRankCompositionLayer<S>,
    pub predicate_object: LowRankCompositionLayer<S>,
    pub combine: LowRankCompositionLayer<S>,
    pub score: Vector<S>,
}

/// Forward activations of one event, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EventTrace<S> {
    pub actor_ids: Vec<usize>,
    pub predicate_ids: Vec<usize>,
    pub object_ids: Vec<usize>,
    pub actor: Vector<S>,
    pub predicate: Vector<S>,
    pub object: Vector<S>,
    pub s1: Vector<S>,
    pub s2: Vector<S>,
    pub embedding: Vector<S>,
}

impl<S: Scalar> EventComposer<S> {
    pub fn zeros(word_dim: usize, event_dim: usize, rank: usize) -> Self {
        EventComposer {
            actor_predicate: LowRankCompositionLayer::zeros(word_dim, event_dim, rank),
            predicate_object: LowRankCompositionLayer::zeros(word_dim, event_dim, rank),
            combine: LowRankCompositionLayer::zeros(event_dim, event_dim, rank.min(event_dim)),
            score: Vector::zeros(event_dim),
        }
    }

    pub fn random<R: Rng + ?Sized>(word_dim: usize, event_dim: usize, rank: usize, rng: &mut R) -> Self {
        let actor_predicate = LowRankCompositionLayer::random(word_dim, event_dim, rank, rng);
        let predicate_object = LowRankCompositionLayer::random(word_dim, event_dim, rank, rng);
        let combine = LowRankCompositionLayer::random(event_dim, event_dim, rank.min(event_dim), rng);
        let r = 1.0 / (event_dim as f64).sqrt();
        EventComposer {
            actor_predicate,
            predicate_object,
            combine,
            score: Vector::random_uniform(event_dim, r, rng),
        }
    }

    pub fn word_dim(&self) -> usize {
        self.actor_predicate.input_dim()
    }

    pub fn event_dim(&self) -> usize {
        self.combine.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.actor_predicate.validate()?;
        self.predicate_object.validate()?;
        self.combine.validate()?;
        let k = self.event_dim();
        check_dim("predicate-object layer input (d)", self.word_dim(), self.predicate_object.input_dim())?;
        check_dim("actor-predicate output vs combine input (k)", self.combine.input_dim(), self.actor_predicate.output_dim())?;
        check_dim("predicate-object output vs combine input (k)", self.combine.input_dim(), self.predicate_object.output_dim())?;
        check_dim("score head length (k)", k, self.score.len())
    }

    /// `(S1, S2, C)` from argument vectors.
    pub fn compose(&self, actor: &[S], predicate: &[S], object: &[S]) -> Result<(Vector<S>, Vector<S>, Vector<S>)> {
        let s1 = self.actor_predicate.compose_pair(actor, predicate)?;
        let s2 = self.predicate_object.compose_pair(predicate, object)?;
        let c = self.combine.compose_pair(s1.as_slice(), s2.as_slice())?;
        Ok((s1, s2, c))
    }

    pub fn trace_ids(
        &self,
        table: &EmbeddingTable<S>,
        actor_ids: Vec<usize>,
        predicate_ids: Vec<usize>,
        object_ids: Vec<usize>,
    ) -> Result<EventTrace<S>> {
        check_dim("embedding table width (d)", self.word_dim(), table.dim())?;
        let actor = average_rows(&actor_ids, table)?;
        let predicate = average_rows(&predicate_ids, table)?;
        let object = average_rows(&object_ids, table)?;
        let (s1, s2, embedding) = self.compose(actor.as_slice(), predicate.as_slice(), object.as_slice())?;
        Ok(EventTrace {
            actor_ids,
            predicate_ids,
            object_ids,
            actor,
            predicate,
            object,
            s1,
            s2,
            embedding,
        })
    }

    pub fn trace_event(
        &self,
        event: &EventTuple,
        table: &EmbeddingTable<S>,
        vocab: &Vocabulary,
    ) -> Result<EventTrace<S>> {
        let ids = |ws: &[String]| ws.iter().map(|w| vocab.lookup(w)).collect::<Vec<_>>();
        self.trace_ids(table, ids(&event.actor), ids(&event.predicate), ids(&event.object))
    }

    /// The event embedding `C`.
    pub fn embed_event(
        &self,
        event: &EventTuple,
        table: &EmbeddingTable<S>,
        vocab: &Vocabulary,
    ) -> Result<Vector<S>> {
        Ok(self.trace_event(event, table, vocab)?.embedding)
    }

    /// `U · C`
    pub fn score_event(
        &self,
        event: &EventTuple,
        table: &EmbeddingTable<S>,
        vocab: &Vocabulary,
    ) -> Result<S> {
        self.score.dot(&self.embed_event(event, table, vocab)?)
    }

    pub fn score_trace(&self, trace: &EventTrace<S>) -> Result<S> {
        self.score.dot(&trace.embedding)
    }

    /// Back-propagates `∂L/∂C` through the three layers into `grad` and the
    /// rows of `grad_table` used by the event.
    pub fn backward_event(
        &self,
        trace: &EventTrace<S>,
        grad_embedding: &[S],
        grad: &mut EventComposer<S>,
        grad_table: &mut EmbeddingTable<S>,
    ) -> Result<()> {
        let (g_s1, g_s2) = self.combine.backward(
            trace.s1.as_slice(),
            trace.s2.as_slice(),
            trace.embedding.as_slice(),
            grad_embedding,
            &mut grad.combine,
        )?;
        let (g_a, mut g_p) = self.actor_predicate.backward(
            trace.actor.as_slice(),
            trace.predicate.as_slice(),
            trace.s1.as_slice(),
            &g_s1,
            &mut grad.actor_predicate,
        )?;
        let (g_p2, g_o) = self.predicate_object.backward(
            trace.predicate.as_slice(),
            trace.object.as_slice(),
            trace.s2.as_slice(),
            &g_s2,
            &mut grad.predicate_object,
        )?;
        for (a, b) in g_p.iter_mut().zip(&g_p2) {
            *a += *b;
        }
        scatter_mean(&trace.actor_ids, &g_a, grad_table);
        scatter_mean(&trace.predicate_ids, &g_p, grad_table);
        scatter_mean(&trace.object_ids, &g_o, grad_table);
        Ok(())
    }

    /// Back-propagates `∂L/∂score` (score = `U·C`).
    pub fn backward_score(
        &self,
        trace: &EventTrace<S>,
        upstream: S,
        grad: &mut EventComposer<S>,
        grad_table: &mut EmbeddingTable<S>,
    ) -> Result<()> {
        for (g, &c) in grad.score.as_mut_slice().iter_mut().zip(trace.embedding.iter()) {
            *g += upstream * c;
        }
        let g_c: Vec<S> = self.score.iter().map(|&u| upstream * u).collect();
        self.backward_event(trace, &g_c, grad, grad_table)
    }

    /// `‖Φ‖²` over slices, `W` and `b` of all three layers (`U` excluded).
    pub fn l2_norm_sq(&self) -> S {
        self.regularized_arrays()
            .iter()
            .flat_map(|a| a.data.iter())
            .fold(S::zero(), |acc, &x| acc + x * x)
    }

    /// `grad += scale · ∂‖Φ‖²/∂Φ`
    pub fn add_l2_gradient(&self, scale: S, grad: &mut EventComposer<S>) {
        let two = S::lit(2.0);
        for (p, g) in self.regularized_arrays().iter().zip(grad.regularized_arrays_mut()) {
            for (gi, &pi) in g.data.iter_mut().zip(p.data) {
                *gi += scale * two * pi;
            }
        }
    }

    fn regularized_arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        self.actor_predicate.push_refs("composer.layer1", &mut out);
        self.predicate_object.push_refs("composer.layer2", &mut out);
        self.combine.push_refs("composer.layer3", &mut out);
        out
    }

    fn regularized_arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.actor_predicate.push_muts("composer.layer1", &mut out);
        self.predicate_object.push_muts("composer.layer2", &mut out);
        self.combine.push_muts("composer.layer3", &mut out);
        out
    }
}

impl<S: Scalar> Parameterized<S> for LowRankCompositionLayer<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        self.push_refs("layer", &mut out);
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.push_muts("layer", &mut out);
        out
    }
}

impl<S: Scalar> Parameterized<S> for EventComposer<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = self.regularized_arrays();
        out.push(vec_ref("composer.score".into(), &self.score));
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.actor_predicate.push_muts("composer.layer1", &mut out);
        self.predicate_object.push_muts("composer.layer2", &mut out);
        self.combine.push_muts("composer.layer3", &mut out);
        out.push(vec_mut("composer.score".into(), &mut self.score));
        out
    }
}

/// Distributes `grad` (w.r.t. an average of rows) evenly over the rows.
pub(crate) fn scatter_mean<S: Scalar>(ids: &[usize], grad: &[S], table: &mut EmbeddingTable<S>) {
    let share = S::one() / S::lit(ids.len() as f64);
    for &id in ids {
        for (t, &g) in table.vectors.row_mut(id).iter_mut().zip(grad) {
            *t += share * g;
        }
    }
}

/// Which argument of an event is replaced when building a negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorruptionTarget {
    #[default]
    Actor,
    Object,
}

impl std::str::FromStr for CorruptionTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actor" => Ok(CorruptionTarget::Actor),
            "object" => Ok(CorruptionTarget::Object),
            other => Err(Error::Config(format!(
                "corruption_target must be `actor` or `object`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for CorruptionTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorruptionTarget::Actor => "actor",
            CorruptionTarget::Object => "object",
        })
    }
}

/// Replaces every word of the target argument with an independent uniform
/// draw from the non-UNKNOWN vocabulary, redrawing any word equal to the
/// one it replaces.
pub fn corrupt_event<R: Rng + ?Sized>(
    event: &EventTuple,
    vocab: &Vocabulary,
    target: CorruptionTarget,
    rng: &mut R,
) -> Result<EventTuple> {
    let available = vocab.len().saturating_sub(1);
    if available < 2 {
        return Err(Error::VocabularyTooSmall {
            needed: 2,
            found: available,
        });
    }
    let mut out = event.clone();
    let words = match target {
        CorruptionTarget::Actor => &mut out.actor,
        CorruptionTarget::Object => &mut out.object,
    };
    for w in words.iter_mut() {
        loop {
            let idx = rng.gen_range(UNKNOWN_INDEX + 1..vocab.len());
            let candidate = vocab.word(idx);
            if candidate != w.as_str() {
                *w = candidate.to_string();
                break;
            }
        }
    }
    Ok(out)
}

/// `max(0, 1 − g(E) + g(E^r))`
pub fn margin_hinge<S: Scalar>(score_positive: S, score_corrupted: S) -> S {
    (S::one() - score_positive + score_corrupted).max(S::zero())
}

/// Value of the event objective split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginLoss<S> {
    pub hinge: S,
    pub regularizer: S,
}

impl<S: Scalar> MarginLoss<S> {
    pub fn total(&self) -> S {
        self.hinge + self.regularizer
    }
}

/// `max(0, 1 − g(E) + g(E^r)) + λ‖Φ‖²`
pub fn event_margin_loss<S: Scalar>(
    composer: &EventComposer<S>,
    table: &EmbeddingTable<S>,
    vocab: &Vocabulary,
    event: &EventTuple,
    corrupted: &EventTuple,
    lambda: S,
) -> Result<S> {
    let pos = composer.score_event(event, table, vocab)?;
    let neg = composer.score_event(corrupted, table, vocab)?;
    let loss = MarginLoss {
        hinge: margin_hinge(pos, neg),
        regularizer: lambda * composer.l2_norm_sq(),
    };
    Ok(loss.total())
}

/// Event objective from precomputed traces, accumulating `weight · ∂L` into
/// the gradient buffers. The hinge contributes no gradient when inactive.
pub fn margin_loss_backward<S: Scalar>(
    composer: &EventComposer<S>,
    positive: &EventTrace<S>,
    corrupted: &EventTrace<S>,
    lambda: S,
    weight: S,
    grad: &mut EventComposer<S>,
    grad_table: &mut EmbeddingTable<S>,
) -> Result<MarginLoss<S>> {
    let pos = composer.score_trace(positive)?;
    let neg = composer.score_trace(corrupted)?;
    let hinge = margin_hinge(pos, neg);
    if hinge > S::zero() {
        composer.backward_score(positive, -weight, grad, grad_table)?;
        composer.backward_score(corrupted, weight, grad, grad_table)?;
    }
    composer.add_l2_gradient(weight * lambda, grad);
    Ok(MarginLoss {
        hinge,
        regularizer: lambda * composer.l2_norm_sq(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_word_vectors;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::path::Path;

    fn ev(s: &str) -> EventTuple {
        EventTuple::parse(s).unwrap()
    }

    #[test]
    fn zero_layer_gives_zero() {
        let layer = LowRankCompositionLayer::<f64>::zeros(3, 2, 1);
        let out = layer.compose_pair(&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn single_slice_hand_computation() {
        // d=2, k=1, n=1: left=[1,2]ᵀ, right=[3,-1], diag=[0.5,0], W=[0.1,0,0,-0.2], b=0.05
        let layer = LowRankCompositionLayer {
            slices: vec![LowRankSlice::new(
                Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
                Matrix::from_rows(&[vec![3.0, -1.0]]).unwrap(),
                Vector::from_f64(&[0.5, 0.0]),
            )
            .unwrap()],
            weight: Matrix::from_rows(&[vec![0.1, 0.0, 0.0, -0.2]]).unwrap(),
            bias: Vector::from_f64(&[0.05]),
        };
        let x = [0.2, -0.1];
        let y = [0.3, 0.4];
        // xᵀ left = 0.2 - 0.2 = 0; right·y = 0.9 - 0.4 = 0.5; diag term = 0.2*0.5*0.3 = 0.03
        // affine = 0.1*0.2 - 0.2*0.4 + 0.05 = -0.01
        let expected = (0.0 * 0.5 + 0.03 - 0.01f64).tanh();
        let out = layer.compose_pair(&x, &y).unwrap();
        assert!((out[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = LowRankCompositionLayer::<f64>::random(4, 6, 2, &mut rng);
        for _ in 0..50 {
            let x = Vector::<f64>::random_uniform(4, 3.0, &mut rng);
            let y = Vector::<f64>::random_uniform(4, 3.0, &mut rng);
            let out = layer.compose_pair(x.as_slice(), y.as_slice()).unwrap();
            assert!(out.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn compose_pair_dimension_error() {
        let layer = LowRankCompositionLayer::<f64>::zeros(3, 2, 1);
        assert!(layer.compose_pair(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    fn toy() -> (Vocabulary, EmbeddingTable<f64>) {
        parse_word_vectors(
            "a 0.1 0.2 0.3 0.4\np -0.3 0.1 0.0 0.2\no 0.5 -0.5 0.25 0.1\nb 0.2 0.2 -0.1 0.0\n",
            Path::new("v"),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_embeds_to_zero() {
        let (vocab, table) = toy();
        let c = EventComposer::<f64>::zeros(4, 3, 2);
        let e = c.embed_event(&ev("a|p|o"), &table, &vocab).unwrap();
        assert_eq!(e.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn embed_matches_step_by_step_chain() {
        let (vocab, table) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = EventComposer::<f64>::random(4, 3, 2, &mut rng);
        let e = c.embed_event(&ev("a b|p|o"), &table, &vocab).unwrap();
        let a: Vec<f64> = (0..4)
            .map(|j| (table.row(vocab.lookup("a"))[j] + table.row(vocab.lookup("b"))[j]) / 2.0)
            .collect();
        let p = table.row(vocab.lookup("p"));
        let o = table.row(vocab.lookup("o"));
        let s1 = c.actor_predicate.compose_pair(&a, p).unwrap();
        let s2 = c.predicate_object.compose_pair(p, o).unwrap();
        let oracle = c.combine.compose_pair(s1.as_slice(), s2.as_slice()).unwrap();
        assert_eq!(e, oracle);
        let again = c.embed_event(&ev("a b|p|o"), &table, &vocab).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn score_head() {
        let (vocab, table) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut c = EventComposer::<f64>::random(4, 3, 2, &mut rng);
        let e = ev("a|p|o");
        let emb = c.embed_event(&e, &table, &vocab).unwrap();
        let s = c.score_event(&e, &table, &vocab).unwrap();
        let oracle: f64 = (0..3).map(|i| c.score[i] * emb[i]).sum();
        assert!((s - oracle).abs() < 1e-15);
        c.score = Vector::zeros(3);
        assert_eq!(c.score_event(&e, &table, &vocab).unwrap(), 0.0);
        c.score = Vector::from_f64(&[0.0, 1.0, 0.0]);
        assert_eq!(c.score_event(&e, &table, &vocab).unwrap(), emb[1]);
    }

    #[test]
    fn corruption_redraws_original_word() {
        let mut vocab = Vocabulary::new();
        for w in ["a", "b", "p", "o"] {
            vocab.insert(w);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = ev("a|p|o");
        for _ in 0..200 {
            let c = corrupt_event(&e, &vocab, CorruptionTarget::Actor, &mut rng).unwrap();
            assert_ne!(c.actor, vec!["a".to_string()]);
            assert!(["b", "p", "o"].contains(&c.actor[0].as_str()));
            assert_eq!(c.predicate, e.predicate);
            assert_eq!(c.object, e.object);
        }
        let c = corrupt_event(&e, &vocab, CorruptionTarget::Object, &mut rng).unwrap();
        assert_eq!(c.actor, e.actor);
        assert_ne!(c.object, e.object);
    }

    #[test]
    fn corruption_needs_two_words() {
        let mut vocab = Vocabulary::new();
        vocab.insert("a");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            corrupt_event(&ev("a|a|a"), &vocab, CorruptionTarget::Actor, &mut rng),
            Err(Error::VocabularyTooSmall { .. })
        ));
    }

    #[test]
    fn corruption_is_uniform() {
        // 11 candidate words, actor "w0" excluded: 10 equally likely outcomes.
        let mut vocab = Vocabulary::new();
        for i in 0..11 {
            vocab.insert(&format!("w{i}"));
        }
        let e = ev("w0|w1|w2");
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 10_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let c = corrupt_event(&e, &vocab, CorruptionTarget::Actor, &mut rng).unwrap();
            *counts.entry(c.actor[0].clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(!counts.contains_key("w0"));
        let p = 0.1;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in counts.values() {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "count {c}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        }
        // 9 degrees of freedom, 99.9th percentile ≈ 27.88
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn hinge_values() {
        assert_eq!(margin_hinge(2.0, 0.5), 0.0);
        assert_eq!(margin_hinge(0.0, 0.0), 1.0);
        assert_eq!(margin_hinge(1.0, 0.0), 0.0);
    }

    #[test]
    fn regularizer_of_ones() {
        let mut c = EventComposer::<f64>::zeros(1, 1, 1);
        // one 2x2-equivalent worth of ones: layer1 weight is 1x2, layer2 weight 1x2
        c.actor_predicate.weight = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        c.predicate_object.weight = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        c.score = Vector::from_f64(&[5.0]);
        assert!((DEFAULT_LAMBDA * c.l2_norm_sq() - 0.0004).abs() < 1e-18);
    }

    #[test]
    fn margin_loss_zero_lambda() {
        let (vocab, table) = toy();
        let c = EventComposer::<f64>::zeros(4, 3, 2);
        let l = event_margin_loss(&c, &table, &vocab, &ev("a|p|o"), &ev("b|p|o"), 0.0).unwrap();
        assert_eq!(l, 1.0);
    }
}

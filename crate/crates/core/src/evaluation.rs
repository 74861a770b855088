//! Similarity evaluations over a frozen model: hard-similarity accuracy and
//! Spearman correlation on transitive sentence similarity.

use std::cmp::Ordering;
use std::fmt;

use crate::data::{EventTuple, HardSimInstance, TransitiveSimInstance};
use crate::error::{check_dim, Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Vector;

pub use crate::tensor::cosine;

/// Anything that maps an event to a fixed-width embedding.
pub trait EventEncoder<S: Scalar> {
    fn embed(&self, event: &EventTuple) -> Result<Vector<S>>;
}

impl<S: Scalar> EventEncoder<S> for Model<S> {
    fn embed(&self, event: &EventTuple) -> Result<Vector<S>> {
        self.embed_event(event)
    }
}

impl<S: Scalar, F> EventEncoder<S> for F
where
    F: Fn(&EventTuple) -> Result<Vector<S>>,
{
    fn embed(&self, event: &EventTuple) -> Result<Vector<S>> {
        self(event)
    }
}

fn pair_cosine<S: Scalar, E: EventEncoder<S> + ?Sized>(
    encoder: &E,
    a: &EventTuple,
    b: &EventTuple,
) -> Result<S> {
    let ea = encoder.embed(a)?;
    let eb = encoder.embed(b)?;
    cosine(ea.as_slice(), eb.as_slice())
}

/// Fraction of instances whose similar pair has a strictly higher cosine
/// than the dissimilar pair. Ties count as failures.
pub fn hard_similarity_accuracy<S: Scalar, E: EventEncoder<S> + ?Sized>(
    instances: &[HardSimInstance],
    encoder: &E,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("hard similarity dataset".into()));
    }
    let mut correct = 0usize;
    for inst in instances {
        let sim = pair_cosine(encoder, &inst.similar.0, &inst.similar.1)?;
        let dis = pair_cosine(encoder, &inst.dissimilar.0, &inst.dissimilar.1)?;
        if sim > dis {
            correct += 1;
        }
    }
    Ok(correct as f64 / instances.len() as f64)
}

/// 1-based ranks with ties sharing the average of the positions they span.
pub fn fractional_ranks<S: Scalar>(values: &[S]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("rank input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "an input has zero rank variance (all values equal)".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of fractional ranks.
pub fn spearman_rho<S: Scalar>(pred: &[S], gold: &[S]) -> Result<f64> {
    check_dim("Spearman input lengths", pred.len(), gold.len())?;
    if pred.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 observations, got {}",
            pred.len()
        )));
    }
    pearson(&fractional_ranks(pred)?, &fractional_ranks(gold)?)
}

/// Cosine of each pair, correlated against the gold scores.
pub fn evaluate_transitive<S: Scalar, E: EventEncoder<S> + ?Sized>(
    instances: &[TransitiveSimInstance],
    encoder: &E,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Empty("transitive similarity dataset".into()));
    }
    let pred = instances
        .iter()
        .map(|inst| pair_cosine(encoder, &inst.pair.0, &inst.pair.1))
        .collect::<Result<Vec<S>>>()?;
    let gold: Vec<S> = instances.iter().map(|i| S::lit(i.gold)).collect();
    spearman_rho(&pred, &gold)
}

/// One line of the evaluation report: `metric<TAB>dataset<TAB>value<TAB>count`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub dataset: String,
    pub value: f64,
    pub count: usize,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.6}\t{}",
            self.metric, self.dataset, self.value, self.count
        )
    }
}

//! Binary softmax sentiment classifier over event embeddings.

use rand::Rng;

use crate::data::Polarity;
use crate::error::{check_dim, Result};
use crate::params::{mat_mut, mat_ref, vec_mut, vec_ref, ParamMut, ParamRef, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Vector};

/// Class order is `[negative, positive]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentClassifier<S> {
    pub weight: Matrix<S>,
    pub bias: Vector<S>,
}

impl<S: Scalar> SentimentClassifier<S> {
    pub fn zeros(event_dim: usize) -> Self {
        SentimentClassifier {
            weight: Matrix::zeros(2, event_dim),
            bias: Vector::zeros(2),
        }
    }

    /// Weight uniform in `±1/√k`, bias zero.
    pub fn random<R: Rng + ?Sized>(event_dim: usize, rng: &mut R) -> Self {
        let r = 1.0 / (event_dim as f64).sqrt();
        SentimentClassifier {
            weight: Matrix::random_uniform(2, event_dim, r, rng),
            bias: Vector::zeros(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("sentiment weight rows (classes)", 2, self.weight.rows())?;
        check_dim("sentiment bias (classes)", 2, self.bias.len())
    }

    /// Class probabilities `softmax(W v + b)`.
    pub fn forward(&self, event: &[S]) -> Result<[S; 2]> {
        let z = self.weight.matvec(event)?;
        Ok(softmax2(z[0] + self.bias[0], z[1] + self.bias[1]))
    }

    /// `−ln p(correct class)`
    pub fn loss(&self, event: &[S], polarity: Polarity) -> Result<S> {
        let p = self.forward(event)?;
        Ok(-p[polarity.class_index()].ln())
    }

    /// Accumulates `weight · ∂loss` into `grad`; returns `(loss, ∂event)`.
    pub fn backward(
        &self,
        event: &[S],
        polarity: Polarity,
        weight: S,
        grad: &mut SentimentClassifier<S>,
    ) -> Result<(S, Vec<S>)> {
        let p = self.forward(event)?;
        let target = polarity.class_index();
        let mut dz = [p[0], p[1]];
        dz[target] -= S::one();
        dz.iter_mut().for_each(|d| *d *= weight);
        grad.weight.add_outer(S::one(), &dz, event)?;
        grad.bias[0] += dz[0];
        grad.bias[1] += dz[1];
        let d_event = self.weight.matvec_t(&dz)?.into_vec();
        Ok((-p[target].ln(), d_event))
    }
}

fn softmax2<S: Scalar>(a: S, b: S) -> [S; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let z = ea + eb;
    [ea / z, eb / z]
}

/// `softmax(W v + b)` for `classifier`.
pub fn sentiment_forward<S: Scalar>(classifier: &SentimentClassifier<S>, event: &[S]) -> Result<[S; 2]> {
    classifier.forward(event)
}

pub fn sentiment_loss<S: Scalar>(
    classifier: &SentimentClassifier<S>,
    event: &[S],
    polarity: Polarity,
) -> Result<S> {
    classifier.loss(event, polarity)
}

impl<S: Scalar> Parameterized<S> for SentimentClassifier<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        vec![
            mat_ref("sentiment.weight".into(), &self.weight),
            vec_ref("sentiment.bias".into(), &self.bias),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        vec![
            mat_mut("sentiment.weight".into(), &mut self.weight),
            vec_mut("sentiment.bias".into(), &mut self.bias),
        ]
    }
}

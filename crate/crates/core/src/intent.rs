//! BiLSTM intent encoder and the cosine ranking loss between an event
//! embedding and its intent.

use rand::Rng;

use crate::data::EmbeddingTable;
use crate::error::{check_dim, Error, Result};
use crate::params::{mat_mut, mat_ref, vec_mut, vec_ref, ParamMut, ParamRef, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::{cosine, cosine_backward, Matrix, Vector};

/// Input, forget, output and candidate gates, each acting on `[x; h_prev]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<S> {
    pub input_gate: Matrix<S>,
    pub forget_gate: Matrix<S>,
    pub output_gate: Matrix<S>,
    pub candidate: Matrix<S>,
    pub input_bias: Vector<S>,
    pub forget_bias: Vector<S>,
    pub output_bias: Vector<S>,
    pub candidate_bias: Vector<S>,
}

/// Activations of one LSTM step.
#[derive(Debug, Clone)]
pub struct LstmStepTrace<S> {
    pub xh: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub o: Vec<S>,
    pub g: Vec<S>,
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
    pub h: Vec<S>,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl<S: Scalar> LstmCell<S> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let m = || Matrix::zeros(hidden, input_dim + hidden);
        let v = || Vector::zeros(hidden);
        LstmCell {
            input_gate: m(),
            forget_gate: m(),
            output_gate: m(),
            candidate: m(),
            input_bias: v(),
            forget_bias: v(),
            output_bias: v(),
            candidate_bias: v(),
        }
    }

    /// Gate weights uniform in `±1/√(d + h)`, biases zero.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let r = 1.0 / ((input_dim + hidden) as f64).sqrt();
        let mut cell = Self::zeros(input_dim, hidden);
        cell.input_gate = Matrix::random_uniform(hidden, input_dim + hidden, r, rng);
        cell.forget_gate = Matrix::random_uniform(hidden, input_dim + hidden, r, rng);
        cell.output_gate = Matrix::random_uniform(hidden, input_dim + hidden, r, rng);
        cell.candidate = Matrix::random_uniform(hidden, input_dim + hidden, r, rng);
        cell
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_gate.cols() - self.hidden()
    }

    fn gates(&self) -> [(&Matrix<S>, &Vector<S>); 4] {
        [
            (&self.input_gate, &self.input_bias),
            (&self.forget_gate, &self.forget_bias),
            (&self.output_gate, &self.output_bias),
            (&self.candidate, &self.candidate_bias),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let cols = self.input_gate.cols();
        for (name, (w, b)) in ["input", "forget", "output", "candidate"].iter().zip(self.gates()) {
            check_dim(&format!("{name} gate rows (h)"), h, w.rows())?;
            check_dim(&format!("{name} gate columns (d + h)"), cols, w.cols())?;
            check_dim(&format!("{name} gate bias (h)"), h, b.len())?;
        }
        Ok(())
    }

    /// One gated update; returns the full trace (`h` and `c` included).
    pub fn step_trace(&self, x: &[S], h_prev: &[S], c_prev: &[S]) -> Result<LstmStepTrace<S>> {
        let h = self.hidden();
        check_dim("LSTM input (d)", self.input_dim(), x.len())?;
        check_dim("LSTM previous hidden state (h)", h, h_prev.len())?;
        check_dim("LSTM previous cell state (h)", h, c_prev.len())?;
        let xh: Vec<S> = x.iter().chain(h_prev).copied().collect();
        let pre = |w: &Matrix<S>, b: &Vector<S>| -> Result<Vec<S>> {
            let mut z = w.matvec(&xh)?.into_vec();
            for (zi, &bi) in z.iter_mut().zip(b.iter()) {
                *zi += bi;
            }
            Ok(z)
        };
        let i: Vec<S> = pre(&self.input_gate, &self.input_bias)?.into_iter().map(sigmoid).collect();
        let f: Vec<S> = pre(&self.forget_gate, &self.forget_bias)?.into_iter().map(sigmoid).collect();
        let o: Vec<S> = pre(&self.output_gate, &self.output_bias)?.into_iter().map(sigmoid).collect();
        let g: Vec<S> = pre(&self.candidate, &self.candidate_bias)?.into_iter().map(S::tanh).collect();
        let c: Vec<S> = (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<S> = c.iter().map(|v| v.tanh()).collect();
        let hv: Vec<S> = (0..h).map(|j| o[j] * tanh_c[j]).collect();
        Ok(LstmStepTrace {
            xh,
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h: hv,
        })
    }

    /// Backward through one step. Takes `∂L/∂h` and `∂L/∂c` for this step's
    /// outputs; returns `(∂x, ∂h_prev, ∂c_prev)`.
    pub fn step_backward(
        &self,
        trace: &LstmStepTrace<S>,
        grad_h: &[S],
        grad_c: &[S],
        grad: &mut LstmCell<S>,
    ) -> Result<(Vec<S>, Vec<S>, Vec<S>)> {
        let h = self.hidden();
        let one = S::one();
        let mut dz_i = vec![S::zero(); h];
        let mut dz_f = vec![S::zero(); h];
        let mut dz_o = vec![S::zero(); h];
        let mut dz_g = vec![S::zero(); h];
        let mut d_c_prev = vec![S::zero(); h];
        for j in 0..h {
            let (i, f, o, g, tc) = (trace.i[j], trace.f[j], trace.o[j], trace.g[j], trace.tanh_c[j]);
            let dc = grad_c[j] + grad_h[j] * o * (one - tc * tc);
            dz_o[j] = grad_h[j] * tc * o * (one - o);
            dz_i[j] = dc * g * i * (one - i);
            dz_f[j] = dc * trace.c_prev[j] * f * (one - f);
            dz_g[j] = dc * i * (one - g * g);
            d_c_prev[j] = dc * f;
        }
        let mut d_xh = vec![S::zero(); trace.xh.len()];
        #[allow(clippy::type_complexity)]
        let parts: [(&Matrix<S>, &mut Matrix<S>, &mut Vector<S>, &Vec<S>); 4] = [
            (&self.input_gate, &mut grad.input_gate, &mut grad.input_bias, &dz_i),
            (&self.forget_gate, &mut grad.forget_gate, &mut grad.forget_bias, &dz_f),
            (&self.output_gate, &mut grad.output_gate, &mut grad.output_bias, &dz_o),
            (&self.candidate, &mut grad.candidate, &mut grad.candidate_bias, &dz_g),
        ];
        for (w, gw, gb, dz) in parts {
            gw.add_outer(one, dz, &trace.xh)?;
            for (b, &d) in gb.as_mut_slice().iter_mut().zip(dz.iter()) {
                *b += d;
            }
            let back = w.matvec_t(dz)?;
            for (a, &b) in d_xh.iter_mut().zip(back.iter()) {
                *a += b;
            }
        }
        let d_h_prev = d_xh.split_off(self.input_dim());
        Ok((d_xh, d_h_prev, d_c_prev))
    }

    fn push_refs<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, S>>) {
        out.push(mat_ref(format!("{prefix}.input_gate"), &self.input_gate));
        out.push(mat_ref(format!("{prefix}.forget_gate"), &self.forget_gate));
        out.push(mat_ref(format!("{prefix}.output_gate"), &self.output_gate));
        out.push(mat_ref(format!("{prefix}.candidate"), &self.candidate));
        out.push(vec_ref(format!("{prefix}.input_bias"), &self.input_bias));
        out.push(vec_ref(format!("{prefix}.forget_bias"), &self.forget_bias));
        out.push(vec_ref(format!("{prefix}.output_bias"), &self.output_bias));
        out.push(vec_ref(format!("{prefix}.candidate_bias"), &self.candidate_bias));
    }

    fn push_muts<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, S>>) {
        out.push(mat_mut(format!("{prefix}.input_gate"), &mut self.input_gate));
        out.push(mat_mut(format!("{prefix}.forget_gate"), &mut self.forget_gate));
        out.push(mat_mut(format!("{prefix}.output_gate"), &mut self.output_gate));
        out.push(mat_mut(format!("{prefix}.candidate"), &mut self.candidate));
        out.push(vec_mut(format!("{prefix}.input_bias"), &mut self.input_bias));
        out.push(vec_mut(format!("{prefix}.forget_bias"), &mut self.forget_bias));
        out.push(vec_mut(format!("{prefix}.output_bias"), &mut self.output_bias));
        out.push(vec_mut(format!("{prefix}.candidate_bias"), &mut self.candidate_bias));
    }
}

/// `(h, c)` after one step of `cell` from `(h_prev, c_prev)`.
pub fn lstm_step<S: Scalar>(
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
    cell: &LstmCell<S>,
) -> Result<(Vector<S>, Vector<S>)> {
    let t = cell.step_trace(x, h_prev, c_prev)?;
    Ok((Vector::from_vec(t.h), Vector::from_vec(t.c)))
}

/// Per-step activations of one direction, in the order the steps ran.
pub type StepTraces<S> = Vec<LstmStepTrace<S>>;

/// Two independent LSTMs reading the sequence in opposite directions from
/// zero initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmEncoder<S> {
    pub forward: LstmCell<S>,
    pub backward: LstmCell<S>,
}

/// Per-step traces of both directions (backward trace in reading order,
/// i.e. last word first).
#[derive(Debug, Clone)]
pub struct IntentTrace<S> {
    pub word_ids: Vec<usize>,
    pub forward: Vec<LstmStepTrace<S>>,
    pub backward: Vec<LstmStepTrace<S>>,
    pub encoding: Vector<S>,
}

impl<S: Scalar> BiLstmEncoder<S> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        BiLstmEncoder {
            forward: LstmCell::zeros(input_dim, hidden),
            backward: LstmCell::zeros(input_dim, hidden),
        }
    }

    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let forward = LstmCell::random(input_dim, hidden, rng);
        let backward = LstmCell::random(input_dim, hidden, rng);
        BiLstmEncoder { forward, backward }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        self.backward.validate()?;
        check_dim("backward LSTM hidden size", self.forward.hidden(), self.backward.hidden())?;
        check_dim("backward LSTM input size", self.forward.input_dim(), self.backward.input_dim())
    }

    /// Runs both directions over `inputs`.
    pub fn trace_vectors(&self, inputs: &[&[S]]) -> Result<(StepTraces<S>, StepTraces<S>, Vector<S>)> {
        if inputs.is_empty() {
            return Err(Error::Empty("intent word list".into()));
        }
        let h = self.hidden();
        let run = |cell: &LstmCell<S>, seq: &mut dyn Iterator<Item = &&[S]>| -> Result<Vec<LstmStepTrace<S>>> {
            let mut hs = vec![S::zero(); h];
            let mut cs = vec![S::zero(); h];
            let mut traces = Vec::new();
            for x in seq {
                let t = cell.step_trace(x, &hs, &cs)?;
                hs.clone_from(&t.h);
                cs.clone_from(&t.c);
                traces.push(t);
            }
            Ok(traces)
        };
        let fwd = run(&self.forward, &mut inputs.iter())?;
        let bwd = run(&self.backward, &mut inputs.iter().rev())?;
        let mut enc = fwd.last().expect("non-empty").h.clone();
        enc.extend_from_slice(&bwd.last().expect("non-empty").h);
        Ok((fwd, bwd, Vector::from_vec(enc)))
    }

    /// `[→h_last; ←h_first]` for a sequence of input vectors.
    pub fn encode_vectors(&self, inputs: &[&[S]]) -> Result<Vector<S>> {
        Ok(self.trace_vectors(inputs)?.2)
    }

    pub fn trace_ids(&self, table: &EmbeddingTable<S>, word_ids: Vec<usize>) -> Result<IntentTrace<S>> {
        check_dim("intent encoder input (d)", self.forward.input_dim(), table.dim())?;
        for &id in &word_ids {
            if id >= table.len() {
                return Err(Error::dim("embedding row index", table.len(), id));
            }
        }
        let rows: Vec<&[S]> = word_ids.iter().map(|&id| table.row(id)).collect();
        let (forward, backward, encoding) = self.trace_vectors(&rows)?;
        Ok(IntentTrace {
            word_ids,
            forward,
            backward,
            encoding,
        })
    }

    /// Back-propagates `∂L/∂encoding` into the cells and the word rows.
    pub fn backward_ids(
        &self,
        trace: &IntentTrace<S>,
        grad_encoding: &[S],
        grad: &mut BiLstmEncoder<S>,
        grad_table: &mut EmbeddingTable<S>,
    ) -> Result<()> {
        let h = self.hidden();
        check_dim("intent encoding gradient (2h)", 2 * h, grad_encoding.len())?;
        let n = trace.word_ids.len();
        let input_grads_fwd = bptt(&self.forward, &trace.forward, &grad_encoding[..h], &mut grad.forward)?;
        let input_grads_bwd = bptt(&self.backward, &trace.backward, &grad_encoding[h..], &mut grad.backward)?;
        for (t, g) in input_grads_fwd.iter().enumerate() {
            add_row(grad_table, trace.word_ids[t], g);
        }
        for (t, g) in input_grads_bwd.iter().enumerate() {
            add_row(grad_table, trace.word_ids[n - 1 - t], g);
        }
        Ok(())
    }
}

fn add_row<S: Scalar>(table: &mut EmbeddingTable<S>, id: usize, g: &[S]) {
    for (t, &v) in table.vectors.row_mut(id).iter_mut().zip(g) {
        *t += v;
    }
}

/// Back-propagation through time from a gradient on the final hidden state.
/// Returns input gradients in step order.
fn bptt<S: Scalar>(
    cell: &LstmCell<S>,
    steps: &[LstmStepTrace<S>],
    grad_last_h: &[S],
    grad: &mut LstmCell<S>,
) -> Result<Vec<Vec<S>>> {
    let h = cell.hidden();
    let mut dh = grad_last_h.to_vec();
    let mut dc = vec![S::zero(); h];
    let mut out = vec![Vec::new(); steps.len()];
    for (t, step) in steps.iter().enumerate().rev() {
        let (dx, dh_prev, dc_prev) = cell.step_backward(step, &dh, &dc, grad)?;
        out[t] = dx;
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok(out)
}

impl<S: Scalar> Parameterized<S> for LstmCell<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        self.push_refs("lstm", &mut out);
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.push_muts("lstm", &mut out);
        out
    }
}

impl<S: Scalar> Parameterized<S> for BiLstmEncoder<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        self.forward.push_refs("intent.forward", &mut out);
        self.backward.push_refs("intent.backward", &mut out);
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        self.forward.push_muts("intent.forward", &mut out);
        self.backward.push_muts("intent.backward", &mut out);
        out
    }
}

/// `max(0, 1 − cos(v_e, v_i) + cos(v_e, v_i'))`
pub fn intent_loss<S: Scalar>(event: &[S], intent: &[S], negative: &[S]) -> Result<S> {
    let pos = cosine(event, intent)?;
    let neg = cosine(event, negative)?;
    Ok((S::one() - pos + neg).max(S::zero()))
}

/// Gradients of `weight · intent_loss` with respect to the three vectors.
#[derive(Debug, Clone)]
pub struct IntentLossGrad<S> {
    pub loss: S,
    pub event: Vec<S>,
    pub intent: Vec<S>,
    pub negative: Vec<S>,
}

pub fn intent_loss_backward<S: Scalar>(
    event: &[S],
    intent: &[S],
    negative: &[S],
    weight: S,
) -> Result<IntentLossGrad<S>> {
    let loss = intent_loss(event, intent, negative)?;
    let n = event.len();
    let mut out = IntentLossGrad {
        loss,
        event: vec![S::zero(); n],
        intent: vec![S::zero(); n],
        negative: vec![S::zero(); n],
    };
    if loss > S::zero() {
        cosine_backward(event, intent, -weight, &mut out.event, &mut out.intent)?;
        cosine_backward(event, negative, weight, &mut out.event, &mut out.negative)?;
    }
    Ok(out)
}

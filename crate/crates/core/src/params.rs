//! Named views over parameter arrays.
//!
//! Every trainable component lists its arrays in a fixed order. Gradient and
//! optimiser-state buffers are values of the same types, so the listings line
//! up one-to-one.

use crate::scalar::Scalar;
use crate::tensor::{LowRankSlice, Matrix, Vector};

#[derive(Debug)]
pub struct ParamRef<'a, S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [S],
}

#[derive(Debug)]
pub struct ParamMut<'a, S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [S],
}

/// A component whose parameters can be enumerated by name.
pub trait Parameterized<S: Scalar> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>>;
    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>>;

    fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|a| a.data.len()).sum()
    }

    /// Concatenation of every array in listing order.
    fn to_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for a in self.arrays() {
            out.extend_from_slice(a.data);
        }
        out
    }

    /// Inverse of [`Parameterized::to_flat`]; panics on length mismatch.
    fn set_flat(&mut self, flat: &[S]) {
        let mut offset = 0;
        for a in self.arrays_mut() {
            let n = a.data.len();
            a.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    fn fill_zero(&mut self) {
        for a in self.arrays_mut() {
            a.data.iter_mut().for_each(|x| *x = S::zero());
        }
    }
}

pub(crate) fn vec_ref<'a, S: Scalar>(name: String, v: &'a Vector<S>) -> ParamRef<'a, S> {
    ParamRef {
        name,
        shape: vec![v.len()],
        data: v.as_slice(),
    }
}

pub(crate) fn vec_mut<'a, S: Scalar>(name: String, v: &'a mut Vector<S>) -> ParamMut<'a, S> {
    ParamMut {
        name,
        shape: vec![v.len()],
        data: v.as_mut_slice(),
    }
}

pub(crate) fn mat_ref<'a, S: Scalar>(name: String, m: &'a Matrix<S>) -> ParamRef<'a, S> {
    ParamRef {
        name,
        shape: vec![m.rows(), m.cols()],
        data: m.as_slice(),
    }
}

pub(crate) fn mat_mut<'a, S: Scalar>(name: String, m: &'a mut Matrix<S>) -> ParamMut<'a, S> {
    ParamMut {
        name,
        shape: vec![m.rows(), m.cols()],
        data: m.as_mut_slice(),
    }
}

pub(crate) fn slice_refs<'a, S: Scalar>(
    prefix: &str,
    s: &'a LowRankSlice<S>,
    out: &mut Vec<ParamRef<'a, S>>,
) {
    out.push(mat_ref(format!("{prefix}.left"), &s.left));
    out.push(mat_ref(format!("{prefix}.right"), &s.right));
    out.push(vec_ref(format!("{prefix}.diag"), &s.diag));
}

pub(crate) fn slice_muts<'a, S: Scalar>(
    prefix: &str,
    s: &'a mut LowRankSlice<S>,
    out: &mut Vec<ParamMut<'a, S>>,
) {
    out.push(mat_mut(format!("{prefix}.left"), &mut s.left));
    out.push(mat_mut(format!("{prefix}.right"), &mut s.right));
    out.push(vec_mut(format!("{prefix}.diag"), &mut s.diag));
}

impl<S: Scalar> Parameterized<S> for LowRankSlice<S> {
    fn arrays(&self) -> Vec<ParamRef<'_, S>> {
        let mut out = Vec::new();
        slice_refs("slice", self, &mut out);
        out
    }

    fn arrays_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut out = Vec::new();
        slice_muts("slice", self, &mut out);
        out
    }
}

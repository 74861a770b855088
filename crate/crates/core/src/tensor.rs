//! Dense vectors and matrices, the factored bilinear product, and the
//! finite-difference gradient checker shared by every model component.

use std::ops::{Index, IndexMut};

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Fixed-length dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<S> {
    data: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![S::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Vector { data }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Vector {
            data: values.iter().map(|&v| S::lit(v)).collect(),
        }
    }

    pub fn random_uniform<R: Rng + ?Sized>(len: usize, radius: f64, rng: &mut R) -> Self {
        Vector {
            data: (0..len).map(|_| uniform(radius, rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector<S>) -> Result<S> {
        check_dim("dot product", self.len(), other.len())?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> S {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `[self; other]`
    pub fn concat(&self, other: &Vector<S>) -> Vector<S> {
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Vector { data }
    }
}

impl<S> Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.data[i]
    }
}

impl<S> IndexMut<usize> for Vector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.data[i]
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        check_dim("matrix buffer", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested row literals; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            check_dim(&format!("matrix row {i}"), cols, row.len())?;
            data.extend(row.iter().map(|&v| S::lit(v)));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn random_uniform<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        radius: f64,
        rng: &mut R,
    ) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| uniform(radius, rng)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[S]) -> Result<Vector<S>> {
        check_dim("matrix-vector product (columns)", self.cols, x.len())?;
        Ok(Vector::from_vec(
            (0..self.rows).map(|i| dot(self.row(i), x)).collect(),
        ))
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[S]) -> Result<Vector<S>> {
        check_dim("transposed matrix-vector product (rows)", self.rows, y.len())?;
        let mut out = vec![S::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        Ok(Vector::from_vec(out))
    }

    /// `self += scale · u vᵀ`
    pub fn add_outer(&mut self, scale: S, u: &[S], v: &[S]) -> Result<()> {
        check_dim("outer product (rows)", self.rows, u.len())?;
        check_dim("outer product (columns)", self.cols, v.len())?;
        for (i, &ui) in u.iter().enumerate() {
            let c = scale * ui;
            let cols = self.cols;
            axpy(c, v, &mut self.data[i * cols..(i + 1) * cols]);
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        check_dim("matrix product (inner)", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &a) in self.row(i).iter().enumerate() {
                axpy(a, other.row(k), out.row_mut(i));
            }
        }
        Ok(out)
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn uniform<S: Scalar, R: Rng + ?Sized>(radius: f64, rng: &mut R) -> S {
    if radius == 0.0 {
        S::zero()
    } else {
        S::lit(rng.gen_range(-radius..=radius))
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += alpha · x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Stabiliser added to the norm product in [`cosine`].
pub const COSINE_EPS: f64 = 1e-8;

/// `u·v / (‖u‖‖v‖ + 1e-8)`; zero when either vector is all-zero.
pub fn cosine<S: Scalar>(u: &[S], v: &[S]) -> Result<S> {
    check_dim("cosine operand length", u.len(), v.len())?;
    let denom = dot(u, u).sqrt() * dot(v, v).sqrt() + S::lit(COSINE_EPS);
    Ok(dot(u, v) / denom)
}

/// Gradients of [`cosine`] with respect to `u` and `v`, scaled by `upstream`
/// and accumulated.
pub fn cosine_backward<S: Scalar>(
    u: &[S],
    v: &[S],
    upstream: S,
    grad_u: &mut [S],
    grad_v: &mut [S],
) -> Result<()> {
    check_dim("cosine operand length", u.len(), v.len())?;
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    let denom = nu * nv + S::lit(COSINE_EPS);
    let num = dot(u, v);
    let ratio = num / (denom * denom);
    // ∂/∂u = v/D − (u·v)/D² · ‖v‖ · u/‖u‖  (second term vanishes at u = 0)
    let cu = if nu > S::zero() { ratio * nv / nu } else { S::zero() };
    let cv = if nv > S::zero() { ratio * nu / nv } else { S::zero() };
    for i in 0..u.len() {
        grad_u[i] += upstream * (v[i] / denom - cu * u[i]);
        grad_v[i] += upstream * (u[i] / denom - cv * v[i]);
    }
    Ok(())
}

/// One slice of a low-rank tensor: `left · right + diag(diag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSlice<S> {
    pub left: Matrix<S>,
    pub right: Matrix<S>,
    pub diag: Vector<S>,
}

impl<S: Scalar> LowRankSlice<S> {
    pub fn new(left: Matrix<S>, right: Matrix<S>, diag: Vector<S>) -> Result<Self> {
        let slice = LowRankSlice { left, right, diag };
        slice.validate()?;
        Ok(slice)
    }

    pub fn zeros(dim: usize, rank: usize) -> Self {
        LowRankSlice {
            left: Matrix::zeros(dim, rank),
            right: Matrix::zeros(rank, dim),
            diag: Vector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.left.rows()
    }

    pub fn rank(&self) -> usize {
        self.left.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.left.rows();
        let n = self.left.cols();
        if n == 0 || n > d {
            return Err(Error::Config(format!(
                "slice rank must satisfy 1 <= n <= d, got n={n}, d={d}"
            )));
        }
        check_dim("slice right factor rows (rank)", n, self.right.rows())?;
        check_dim("slice right factor columns (d)", d, self.right.cols())?;
        check_dim("slice diagonal length (d)", d, self.diag.len())
    }

    /// Dense `d × d` matrix; only used by tests and oracles.
    pub fn reconstruct(&self) -> Matrix<S> {
        let mut m = self
            .left
            .matmul(&self.right)
            .expect("validated slice factors");
        for i in 0..self.dim() {
            m[(i, i)] += self.diag[i];
        }
        m
    }
}

fn check_slice_inputs<S: Scalar>(a: &[S], p: &[S], slice: &LowRankSlice<S>) -> Result<()> {
    let d = slice.dim();
    check_dim("bilinear left input (d)", d, a.len())?;
    check_dim("bilinear right input (d)", d, p.len())?;
    check_dim("slice right factor columns (d)", d, slice.right.cols())?;
    check_dim("slice right factor rows (rank)", slice.rank(), slice.right.rows())?;
    check_dim("slice diagonal length (d)", d, slice.diag.len())
}

/// `aᵀ (left·right + diag) p` evaluated in factored form, O(d·n).
pub fn bilinear_lowrank<S: Scalar>(a: &[S], p: &[S], slice: &LowRankSlice<S>) -> Result<S> {
    check_slice_inputs(a, p, slice)?;
    let u = slice.left.matvec_t(a)?;
    let v = slice.right.matvec(p)?;
    let diag_term = a
        .iter()
        .zip(p)
        .zip(slice.diag.iter())
        .fold(S::zero(), |acc, ((&ai, &pi), &ti)| acc + ai * ti * pi);
    Ok(dot(u.as_slice(), v.as_slice()) + diag_term)
}

/// Accumulates `upstream · ∂bilinear/∂{a, p, slice}` into the given buffers.
pub fn bilinear_lowrank_backward<S: Scalar>(
    a: &[S],
    p: &[S],
    slice: &LowRankSlice<S>,
    upstream: S,
    grad_a: &mut [S],
    grad_p: &mut [S],
    grad_slice: &mut LowRankSlice<S>,
) -> Result<()> {
    check_slice_inputs(a, p, slice)?;
    check_dim("bilinear left gradient", a.len(), grad_a.len())?;
    check_dim("bilinear right gradient", p.len(), grad_p.len())?;
    let u = slice.left.matvec_t(a)?;
    let v = slice.right.matvec(p)?;

    grad_slice.left.add_outer(upstream, a, v.as_slice())?;
    grad_slice.right.add_outer(upstream, u.as_slice(), p)?;

    let lv = slice.left.matvec(v.as_slice())?;
    let rtu = slice.right.matvec_t(u.as_slice())?;
    for i in 0..a.len() {
        let t = slice.diag[i];
        grad_slice.diag[i] += upstream * a[i] * p[i];
        grad_a[i] += upstream * (lv[i] + t * p[i]);
        grad_p[i] += upstream * (rtu[i] + t * a[i]);
    }
    Ok(())
}

/// `tanh(bilinear + W·x + b)`
pub fn affine_tanh<S: Scalar>(
    x: &[S],
    weight: &Matrix<S>,
    bias: &Vector<S>,
    bilinear: &[S],
) -> Result<Vector<S>> {
    let k = weight.rows();
    check_dim("affine bias length (k)", k, bias.len())?;
    check_dim("bilinear vector length (k)", k, bilinear.len())?;
    let mut z = weight.matvec(x)?;
    for i in 0..k {
        z[i] = (z[i] + bias[i] + bilinear[i]).tanh();
    }
    Ok(z)
}

/// Backward of [`affine_tanh`] given its output. Returns the gradient with
/// respect to the pre-activation (equal to the gradient w.r.t. `bilinear`)
/// and accumulates into `grad_x`, `grad_weight` and `grad_bias`.
pub fn affine_tanh_backward<S: Scalar>(
    x: &[S],
    weight: &Matrix<S>,
    output: &[S],
    upstream: &[S],
    grad_x: &mut [S],
    grad_weight: &mut Matrix<S>,
    grad_bias: &mut Vector<S>,
) -> Result<Vector<S>> {
    let k = weight.rows();
    check_dim("affine output length (k)", k, output.len())?;
    check_dim("affine upstream length (k)", k, upstream.len())?;
    check_dim("affine input gradient", x.len(), grad_x.len())?;
    let dz: Vec<S> = output
        .iter()
        .zip(upstream)
        .map(|(&y, &g)| g * (S::one() - y * y))
        .collect();
    grad_weight.add_outer(S::one(), &dz, x)?;
    axpy(S::one(), &dz, grad_bias.as_mut_slice());
    let gx = weight.matvec_t(&dz)?;
    axpy(S::one(), gx.as_slice(), grad_x);
    Ok(Vector::from_vec(dz))
}

/// A scalar-valued function of a flat point with an analytic gradient.
///
/// The point packs every input and parameter the operation depends on;
/// implementations decide the packing order.
pub trait DifferentiableOp<S: Scalar> {
    fn value(&self, point: &[S]) -> Result<S>;
    fn gradient(&self, point: &[S]) -> Result<Vec<S>>;
}

/// Central-difference perturbation used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Maximum over coordinates of `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`,
/// with numeric derivatives from central differences at step `1e-5`.
pub fn grad_check<S: Scalar, Op: DifferentiableOp<S> + ?Sized>(op: &Op, point: &[S]) -> Result<S> {
    let analytic = op.gradient(point)?;
    check_dim("gradient length", point.len(), analytic.len())?;
    let h = S::lit(GRAD_CHECK_STEP);
    let floor = S::lit(1e-8);
    let base = op.value(point)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check forward value".into()));
    }
    let mut x = point.to_vec();
    let mut worst = S::zero();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = op.value(&x)?;
        x[i] = orig - h;
        let minus = op.value(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("grad_check forward value at coordinate {i}")));
        }
        let numeric = (plus - minus) / (h + h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let err = (a - numeric).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_slice(d: usize, n: usize, rng: &mut ChaCha8Rng) -> LowRankSlice<f64> {
        LowRankSlice::new(
            Matrix::random_uniform(d, n, 1.0, rng),
            Matrix::random_uniform(n, d, 1.0, rng),
            Vector::random_uniform(d, 1.0, rng),
        )
        .unwrap()
    }

    #[test]
    fn bilinear_zero_tensor() {
        let s = LowRankSlice::new(
            Matrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            Vector::from_f64(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(bilinear_lowrank(&[1.0, 0.0], &[0.0, 1.0], &s).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_diagonal_only() {
        let s = LowRankSlice::new(
            Matrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            Vector::from_f64(&[5.0, 0.0]),
        )
        .unwrap();
        assert_eq!(bilinear_lowrank(&[1.0, 0.0], &[1.0, 0.0], &s).unwrap(), 5.0);
    }

    #[test]
    fn bilinear_matches_dense_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = random_slice(4, 2, &mut rng);
            let a = Vector::<f64>::random_uniform(4, 1.0, &mut rng);
            let p = Vector::<f64>::random_uniform(4, 1.0, &mut rng);
            let m = s.reconstruct();
            let mut dense = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    dense += a[i] * m[(i, j)] * p[j];
                }
            }
            let fact = bilinear_lowrank(a.as_slice(), p.as_slice(), &s).unwrap();
            assert!((fact - dense).abs() < 1e-12, "{fact} vs {dense}");
        }
    }

    #[test]
    fn bilinear_dimension_error_names_dimension() {
        let s = LowRankSlice::<f64>::zeros(3, 1);
        let err = bilinear_lowrank(&[1.0, 2.0], &[1.0, 2.0, 3.0], &s).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bilinear left input"), "{msg}");
        assert!(msg.contains("expected 3, found 2"), "{msg}");
    }

    #[test]
    fn slice_rank_bounds() {
        let bad = LowRankSlice::<f64>::new(
            Matrix::zeros(2, 3),
            Matrix::zeros(3, 2),
            Vector::zeros(2),
        );
        assert!(bad.is_err());
        let zero_rank =
            LowRankSlice::<f64>::new(Matrix::zeros(2, 0), Matrix::zeros(0, 2), Vector::zeros(2));
        assert!(zero_rank.is_err());
    }

    #[test]
    fn affine_tanh_zero() {
        let w = Matrix::<f64>::zeros(3, 4);
        let b = Vector::zeros(3);
        let out = affine_tanh(&[0.0; 4], &w, &b, &[0.0; 3]).unwrap();
        assert_eq!(out.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn affine_tanh_saturates() {
        let w = Matrix::<f64>::zeros(1, 2);
        let b = Vector::zeros(1);
        let out = affine_tanh(&[0.3, -0.2], &w, &b, &[20.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-6);
        assert!(out[0] <= 1.0);
    }

    #[test]
    fn affine_tanh_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (k, d) = (3, 2);
        let w = Matrix::<f64>::random_uniform(k, 2 * d, 1.0, &mut rng);
        let b = Vector::random_uniform(k, 1.0, &mut rng);
        let bil = Vector::random_uniform(k, 1.0, &mut rng);
        let x = Vector::random_uniform(2 * d, 1.0, &mut rng);
        let out = affine_tanh(x.as_slice(), &w, &b, bil.as_slice()).unwrap();
        for i in 0..k {
            let mut z = bil[i] + b[i];
            for j in 0..2 * d {
                z += w[(i, j)] * x[j];
            }
            assert!((out[i] - z.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_tanh_shape_error() {
        let w = Matrix::<f64>::zeros(2, 4);
        let b = Vector::zeros(3);
        assert!(affine_tanh(&[0.0; 4], &w, &b, &[0.0; 2]).is_err());
    }

    struct Linear {
        w: Vec<f64>,
    }

    impl DifferentiableOp<f64> for Linear {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(dot(&self.w, x))
        }
        fn gradient(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(self.w.clone())
        }
    }

    #[test]
    fn grad_check_exact_for_linear() {
        let op = Linear {
            w: vec![0.5, -1.25, 2.0, 3.0],
        };
        let err = grad_check(&op, &[1.0, 2.0, -3.0, 0.25]).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    struct NanOp;
    impl DifferentiableOp<f64> for NanOp {
        fn value(&self, _x: &[f64]) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    #[test]
    fn grad_check_rejects_non_finite() {
        assert!(matches!(grad_check(&NanOp, &[1.0]), Err(Error::NonFinite(_))));
    }
}

//! Small dense linear algebra kernel.
//!
//! Storage is row-major and every reduction runs in a fixed index order, so
//! repeated evaluations on the same inputs give bit-identical results.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITERS: usize = 10_000;

/// Relative pivot size below which a column is treated as numerically dependent.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vector length must be positive"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector entries"));
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Wraps entries produced by finite arithmetic on already validated data.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_dim("dot", self.len(), other.len())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Indices of the nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "DenseMatrix::new",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("DenseMatrix::from_rows", cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `AᵀA`, accumulated row by row of `A`.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..self.rows {
            let r = self.row(i);
            for (a, ra) in r.iter().enumerate() {
                if *ra == 0.0 {
                    continue;
                }
                let out = &mut g.data[a * n..(a + 1) * n];
                for (o, rb) in out.iter_mut().zip(r) {
                    *o += ra * rb;
                }
            }
        }
        g
    }

    /// Column submatrix in the order given by `cols`.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DenseMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::invalid(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        let k = cols.len();
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Ok(DenseMatrix::from_vec_unchecked(self.rows, k, data))
    }

    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        matvec(self, x)
    }

    pub fn matvec_transpose(&self, y: &DenseVector) -> Result<DenseVector> {
        matvec_transpose(self, y)
    }

    /// `out = A x`; lengths are the caller's responsibility.
    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `out = A x + bias`, the affine map shared by IHT steps and unrolled layers.
    pub(crate) fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        debug_assert_eq!(bias.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x) + bias[i];
        }
    }

    /// `out = Aᵀ y`; each output accumulates over rows in ascending order.
    pub(crate) fn matvec_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn check_dim(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { op, expected, got });
    }
    Ok(())
}

pub fn matvec(a: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    check_dim("matvec", a.cols, x.len())?;
    let mut out = vec![0.0; a.rows];
    a.matvec_into(x, &mut out);
    Ok(DenseVector::from_vec_unchecked(out))
}

pub fn matvec_transpose(a: &DenseMatrix, y: &DenseVector) -> Result<DenseVector> {
    check_dim("matvec_transpose", a.rows, y.len())?;
    let mut out = vec![0.0; a.cols];
    a.matvec_transpose_into(y, &mut out);
    Ok(DenseVector::from_vec_unchecked(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralNormEstimate {
    /// Estimate of the largest eigenvalue of `AᵀA`.
    pub value: f64,
    pub iterations: usize,
    /// `false` when `max_iters` ran out before the Rayleigh quotient settled.
    pub converged: bool,
}

/// Largest eigenvalue of `AᵀA` by power iteration from a fixed start vector.
pub fn spectral_norm_sq(a: &DenseMatrix, tol: f64, max_iters: usize) -> Result<SpectralNormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    if max_iters == 0 {
        return Err(Error::invalid("power iteration needs at least one iteration"));
    }
    if a.is_zero() {
        return Ok(SpectralNormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let n = a.cols;
    let mut v = power_start(n);
    let mut av = vec![0.0; a.rows];
    let mut w = vec![0.0; n];

    // Fall back to the heaviest column if the start is annihilated by A.
    a.matvec_into(&v, &mut av);
    if av.iter().all(|x| *x == 0.0) {
        let best = (0..n)
            .map(|j| (j, a.column(j).iter().map(|x| x * x).sum::<f64>()))
            .fold((0, -1.0), |acc, (j, c)| if c > acc.1 { (j, c) } else { acc })
            .0;
        v.iter_mut().for_each(|x| *x = 0.0);
        v[best] = 1.0;
    }

    let mut prev = f64::NAN;
    for k in 1..=max_iters {
        a.matvec_into(&v, &mut av);
        let lambda = dot(&av, &av);
        if k > 1 && (lambda - prev).abs() <= tol * lambda {
            return Ok(SpectralNormEstimate {
                value: lambda,
                iterations: k,
                converged: true,
            });
        }
        prev = lambda;
        a.matvec_transpose_into(&av, &mut w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return Ok(SpectralNormEstimate {
                value: lambda,
                iterations: k,
                converged: true,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    Ok(SpectralNormEstimate {
        value: prev,
        iterations: max_iters,
        converged: false,
    })
}

/// Deterministic unit start vector for power iteration. The entries follow a
/// golden-ratio sequence in `[0.5, 1.5)`; the all-ones vector is avoided
/// because it is an exact eigenvector of `AᵀA` whenever the columns of `A`
/// share one norm.
fn power_start(n: usize) -> Vec<f64> {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let mut v: Vec<f64> = (0..n).map(|j| 0.5 + ((j + 1) as f64 * GOLDEN).fract()).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Power iteration with the default tolerance and iteration budget.
pub fn spectral_norm_sq_default(a: &DenseMatrix) -> f64 {
    spectral_norm_sq(a, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS)
        .map(|e| e.value)
        .unwrap_or(0.0)
}

/// Least-squares fit of `f` using only the columns of `A` listed in `support`.
///
/// The returned vector has length `A.cols()` and is zero off the support. The
/// column submatrix is factored by Householder QR with column pivoting;
/// columns whose pivot falls below [`PIVOT_THRESHOLD`] times the leading pivot
/// get a zero coefficient.
pub fn least_squares_on_support(
    a: &DenseMatrix,
    f: &DenseVector,
    support: &[usize],
) -> Result<DenseVector> {
    check_dim("least_squares_on_support", a.rows, f.len())?;
    let mut seen = vec![false; a.cols];
    for &j in support {
        if j >= a.cols {
            return Err(Error::invalid(format!(
                "support index {j} out of range for {} columns",
                a.cols
            )));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid(format!("support index {j} repeated")));
        }
    }

    let mut u = vec![0.0; a.cols];
    if support.is_empty() {
        return Ok(DenseVector::from_vec_unchecked(u));
    }
    let sub = a.select_columns(support)?;
    let coef = pivoted_qr_solve(&sub, f);
    for (&j, c) in support.iter().zip(coef) {
        u[j] = c;
    }
    Ok(DenseVector::from_vec_unchecked(u))
}

/// Solves `min ‖B c − f‖` with Householder QR and column pivoting.
fn pivoted_qr_solve(b: &DenseMatrix, f: &[f64]) -> Vec<f64> {
    let m = b.rows;
    let k = b.cols;
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| b.column(j)).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut qtf = f.to_vec();
    let mut lead = 0.0;
    let mut rank = 0;

    for j in 0..m.min(k) {
        let (p, _) = (j..k)
            .map(|c| (c, dot(&cols[c][j..], &cols[c][j..])))
            .fold((j, -1.0), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
        cols.swap(j, p);
        perm.swap(j, p);

        let alpha = dot(&cols[j][j..], &cols[j][j..]).sqrt();
        if j == 0 {
            lead = alpha;
        }
        if alpha == 0.0 || alpha <= PIVOT_THRESHOLD * lead {
            break;
        }

        let x0 = cols[j][j];
        let beta = if x0 >= 0.0 { -alpha } else { alpha };
        let mut v = cols[j][j..].to_vec();
        v[0] -= beta;
        let vv = dot(&v, &v);
        if vv > 0.0 {
            for c in cols.iter_mut().skip(j + 1) {
                let t = 2.0 * dot(&v, &c[j..]) / vv;
                for (ci, vi) in c[j..].iter_mut().zip(&v) {
                    *ci -= t * vi;
                }
            }
            let t = 2.0 * dot(&v, &qtf[j..]) / vv;
            for (qi, vi) in qtf[j..].iter_mut().zip(&v) {
                *qi -= t * vi;
            }
        }
        cols[j][j] = beta;
        cols[j][j + 1..].iter_mut().for_each(|x| *x = 0.0);
        rank = j + 1;
    }

    // Back substitution on the leading rank × rank block of R.
    let mut c = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut acc = qtf[i];
        for (l, cl) in c.iter().enumerate().skip(i + 1) {
            acc -= cols[l][i] * cl;
        }
        c[i] = acc / cols[i][i];
    }

    let mut out = vec![0.0; k];
    for (i, ci) in c.into_iter().enumerate() {
        out[perm[i]] = ci;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn matvec_examples() {
        let i3 = DenseMatrix::identity(3);
        assert_eq!(matvec(&i3, &v(&[1.0, 2.0, 3.0])).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(matvec(&z, &v(&[5.0, -1.0])).unwrap().as_slice(), &[0.0, 0.0]);
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&a, &v(&[1.0, 1.0])).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_transpose_examples() {
        let i3 = DenseMatrix::identity(3);
        assert_eq!(
            matvec_transpose(&i3, &v(&[1.0, 2.0, 3.0])).unwrap().as_slice(),
            &[1.0, 2.0, 3.0]
        );
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matvec_transpose(&a, &v(&[1.0, 1.0])).unwrap().as_slice(), &[4.0, 6.0]);
        let col = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert_eq!(matvec_transpose(&col, &v(&[2.0, 3.0])).unwrap().as_slice(), &[5.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(
            matvec(&a, &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            matvec_transpose(&a, &v(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(DenseMatrix::new(0, 3, vec![]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
        assert!(DenseVector::new(vec![]).is_err());
    }

    #[test]
    fn spectral_norm_simple_cases() {
        let e = spectral_norm_sq(&DenseMatrix::identity(4), 1e-10, 100).unwrap();
        assert_relative_eq!(e.value, 1.0, max_relative = 1e-12);
        let d = DenseMatrix::diag(&[3.0, 1.0]).unwrap();
        let e = spectral_norm_sq(&d, 1e-14, 10_000).unwrap();
        assert!(e.converged);
        assert_relative_eq!(e.value, 9.0, max_relative = 1e-10);
        let z = spectral_norm_sq(&DenseMatrix::zeros(3, 2), 1e-10, 10).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn spectral_norm_when_ones_is_in_the_null_space() {
        let a = DenseMatrix::from_rows(&[[1.0, -1.0]]).unwrap();
        let e = spectral_norm_sq(&a, 1e-12, 1000).unwrap();
        assert_relative_eq!(e.value, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn spectral_norm_with_equal_column_norms() {
        // AᵀA = [[4, c], [c, 4]] has (1, 1) and (1, -1) as eigenvectors.
        let a = DenseMatrix::from_rows(&[
            [-1.9554121713025574, 1.8632630536928816],
            [0.41995623619827044, -0.7268086355727192],
        ])
        .unwrap();
        let g = a.gram();
        let top = g.get(0, 0) + g.get(0, 1).abs();
        let e = spectral_norm_sq(&a, 1e-12, 10_000).unwrap();
        assert_relative_eq!(e.value, top, max_relative = 1e-10);
    }

    #[test]
    fn spectral_norm_flags_non_convergence() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.999_999]]).unwrap();
        let e = spectral_norm_sq(&a, 1e-15, 3).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 3);
        assert!(spectral_norm_sq(&a, 0.0, 3).is_err());
    }

    #[test]
    fn least_squares_square_invertible() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let f = v(&[1.0, -2.0]);
        let u = least_squares_on_support(&a, &f, &[0, 1]).unwrap();
        // A⁻¹ f = (1/5) [[3, -1], [-1, 2]] f
        assert_relative_eq!(u[0], (3.0 + 2.0) / 5.0, epsilon = 1e-14);
        assert_relative_eq!(u[1], (-1.0 - 4.0) / 5.0, epsilon = 1e-14);
        let r = matvec(&a, &u).unwrap();
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r[1], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn least_squares_empty_support() {
        let a = DenseMatrix::identity(3);
        let u = least_squares_on_support(&a, &v(&[1.0, 2.0, 3.0]), &[]).unwrap();
        assert_eq!(u.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn least_squares_rejects_bad_support() {
        let a = DenseMatrix::identity(3);
        let f = v(&[1.0, 2.0, 3.0]);
        assert!(least_squares_on_support(&a, &f, &[3]).is_err());
        assert!(least_squares_on_support(&a, &f, &[1, 1]).is_err());
    }

    #[test]
    fn least_squares_dependent_columns() {
        // Third column duplicates the first; its coefficient is dropped.
        let a = DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let f = v(&[2.0, 3.0, 1.0]);
        let u = least_squares_on_support(&a, &f, &[0, 1, 2]).unwrap();
        let fit = matvec(&a, &u).unwrap();
        assert_relative_eq!(fit[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit[1], 3.0, epsilon = 1e-12);
        assert_eq!(u.count_nonzero(), 2);
    }

    #[test]
    fn least_squares_underdetermined() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let f = v(&[6.0]);
        let u = least_squares_on_support(&a, &f, &[0, 1, 2]).unwrap();
        assert_relative_eq!(matvec(&a, &u).unwrap()[0], 6.0, epsilon = 1e-12);
        assert_eq!(u.count_nonzero(), 1);
    }

    #[test]
    fn gram_matches_explicit_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let g = a.gram();
        assert_eq!(g.data(), &[35.0, 44.0, 44.0, 56.0]);
        assert_eq!(a.transpose().transpose(), a);
    }
}

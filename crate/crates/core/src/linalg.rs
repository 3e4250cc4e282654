//! Dense row-major matrices and a symmetric eigensolver.
//!
//! The eigensolver is the classical two-stage scheme: Householder reduction to
//! tridiagonal form followed by the implicit QL iteration with Wilkinson-style
//! shifts. Desk-scale problems (m up to a few hundred) are the target.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{max, Real};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Hilbert–Schmidt inner product `tr(selfᵀ other)`.
    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn frobenius(&self) -> T {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// `(A + Aᵀ)/2`
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = &self.data[k * self.cols..(k + 1) * self.cols];
            let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_t dimension mismatch");
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot_slices(a_row, other.row(j));
            }
        }
        out
    }

    pub fn mat_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot_slices(self.row(i), x)).collect()
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot_slices<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Eigendecomposition `A = V diag(values) Vᵀ` of a symmetric matrix, with
/// eigenvalues ascending and eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Mat<T>,
}

impl<T: Real> SymEigen<T> {
    /// Number of eigenpairs held (the matrix order for a full decomposition).
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(values)) Vᵀ`. Eigenpairs mapped to zero are skipped, so the
    /// cost is proportional to the rank of the result.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Mat<T> {
        let n = self.vectors.rows();
        let kept: Vec<(usize, T)> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| (k, f(v)))
            .filter(|&(_, fv)| fv != T::zero())
            .collect();
        let mut left = Mat::zeros(n, kept.len());
        let mut right = Mat::zeros(n, kept.len());
        for i in 0..n {
            let row = self.vectors.row(i);
            for (c, &(k, fv)) in kept.iter().enumerate() {
                left[(i, c)] = row[k] * fv;
                right[(i, c)] = row[k];
            }
        }
        left.matmul_t(&right)
    }

    pub fn reconstruct(&self) -> Mat<T> {
        self.reconstruct_with(|v| v)
    }

    /// Eigenvector `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column(k)
    }
}

/// Symmetric eigendecomposition. Only the upper triangle is read; the input
/// should be symmetric to working precision.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> Result<SymEigen<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare(a.rows(), a.cols()));
    }
    if a.has_nan() {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    // Symmetric input, so the transposed working copy is the input itself.
    let mut z = a.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut z, &mut d, &mut e);
    // Rows of z are the eigenvectors being accumulated.
    implicit_ql(&mut d, &mut e, Some(&mut z))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let zr = z.row(src);
        for row in 0..n {
            vectors[(row, col)] = zr[row];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Householder reduction stored transposed: on exit the rows of `w` are the
/// columns of the accumulated orthogonal transform, `d` holds the diagonal and
/// `e` the subdiagonal (in `e[1..]`). Working on the transpose keeps every
/// inner loop on contiguous memory.
fn tridiagonalize<T: Real>(w: &mut Mat<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = w[(j, n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[(j, i - 1)];
                w[(j, i)] = T::zero();
                w[(i, j)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                w[(i, j)] = f;
                g = e[j] + w[(j, j)] * f;
                for k in (j + 1)..i {
                    g += w[(j, k)] * d[k];
                    e[k] += w[(j, k)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    w[(j, k)] -= upd;
                }
                d[j] = w[(j, i - 1)];
                w[(j, i)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        w[(i, n - 1)] = w[(i, i)];
        w[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = w[(i + 1, k)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += w[(i + 1, k)] * w[(j, k)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    w[(j, k)] -= upd;
                }
            }
        }
        for k in 0..=i {
            w[(i + 1, k)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = w[(j, n - 1)];
        w[(j, n - 1)] = T::zero();
    }
    w[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL on the tridiagonal `(d, e)` with the coupling of `i − 1` and `i`
/// in `e[i]`; rotations are applied to the rows of `z` when given.
fn implicit_ql<T: Real>(d: &mut [T], e: &mut [T], mut z: Option<&mut Mat<T>>) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    let max_sweeps = 60 * n.max(1);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        let cand = d[l].abs() + e[l].abs();
        if cand > tst1 {
            tst1 = cand;
        }
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > max_sweeps {
                    return Err(Error::EigenNoConvergence { index: l });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (T::lit(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        rotate_rows(z, i, s, c);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Householder reduction `A = Q T Qᵀ` with `Q = H_0 ⋯ H_{n−2}` kept in
/// factored form.
struct Tridiagonal<T> {
    d: Vec<T>,
    /// `e[i]` couples `i` and `i + 1`.
    e: Vec<T>,
    /// `(v, τ)` of `H_k = I − τ v vᵀ` acting on indices `k + 1..n`.
    reflectors: Vec<(Vec<T>, T)>,
}

impl<T: Real> Tridiagonal<T> {
    fn reduce(a: &Mat<T>) -> Self {
        let n = a.rows();
        let mut w = a.clone();
        let mut d = vec![T::zero(); n];
        let mut e = vec![T::zero(); n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
        let two = T::lit(2.0);
        for k in 0..n.saturating_sub(1) {
            d[k] = w[(k, k)];
            // Column k below the diagonal equals row k right of it.
            let x: Vec<T> = w.row(k)[k + 1..].to_vec();
            let alpha = x[0];
            let xnorm = x[1..].iter().map(|&t| t * t).sum::<T>().sqrt();
            if xnorm == T::zero() {
                e[k] = alpha;
                reflectors.push((Vec::new(), T::zero()));
                continue;
            }
            let mut beta = alpha.hypot(xnorm);
            if alpha >= T::zero() {
                beta = -beta;
            }
            let tau = (beta - alpha) / beta;
            let scale = T::one() / (alpha - beta);
            let mut v = x;
            v[0] = T::one();
            for t in v.iter_mut().skip(1) {
                *t *= scale;
            }
            e[k] = beta;
            let len = n - k - 1;
            let mut p = vec![T::zero(); len];
            for (i, pi) in p.iter_mut().enumerate() {
                *pi = tau * dot_slices(&w.row(k + 1 + i)[k + 1..], &v);
            }
            let kk = -(tau / two) * dot_slices(&p, &v);
            for (pi, &vi) in p.iter_mut().zip(&v) {
                *pi += kk * vi;
            }
            for i in 0..len {
                let (vi, pi) = (v[i], p[i]);
                let row = &mut w.row_mut(k + 1 + i)[k + 1..];
                for ((r, &vj), &pj) in row.iter_mut().zip(&v).zip(&p) {
                    *r -= vi * pj + pi * vj;
                }
            }
            reflectors.push((v, tau));
        }
        if n > 0 {
            d[n - 1] = w[(n - 1, n - 1)];
        }
        Self { d, e, reflectors }
    }

    /// `Q x` in place.
    fn apply_q(&self, x: &mut [T]) {
        for (k, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            if *tau == T::zero() {
                continue;
            }
            let tail = &mut x[k + 1..];
            let s = *tau * dot_slices(v, tail);
            for (t, &vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }

    fn norm(&self) -> T {
        let n = self.d.len();
        let mut best = T::zero();
        for i in 0..n {
            let mut row = self.d[i].abs();
            if i > 0 {
                row += self.e[i - 1].abs();
            }
            if i + 1 < n {
                row += self.e[i].abs();
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    fn eigenvalues(&self) -> Result<Vec<T>> {
        let n = self.d.len();
        let mut d = self.d.clone();
        let mut e = vec![T::zero(); n];
        e[1..n].copy_from_slice(&self.e);
        implicit_ql(&mut d, &mut e, None)?;
        d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(d)
    }

    /// Solves `(T − μI) x = b` in place by elimination with partial pivoting;
    /// exact zero pivots are replaced by `tiny`.
    fn shifted_solve(&self, mu: T, tiny: T, b: &mut [T]) {
        let n = self.d.len();
        if n == 1 {
            let piv = self.d[0] - mu;
            b[0] /= if piv.abs() < tiny { tiny } else { piv };
            return;
        }
        let mut dg: Vec<T> = self.d.iter().map(|&x| x - mu).collect();
        let mut dl = self.e.clone();
        let mut du = self.e.clone();
        let mut du2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];
        for i in 0..n - 1 {
            if dg[i].abs() >= dl[i].abs() {
                if dg[i].abs() < tiny {
                    dg[i] = tiny;
                }
                let fact = dl[i] / dg[i];
                dl[i] = fact;
                dg[i + 1] -= fact * du[i];
            } else {
                let fact = dg[i] / dl[i];
                dg[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = dg[i + 1];
                dg[i + 1] = temp - fact * dg[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if dg[n - 1].abs() < tiny {
            dg[n - 1] = tiny;
        }
        for i in 0..n - 1 {
            if swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i];
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }
        b[n - 1] /= dg[n - 1];
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dg[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dg[i];
        }
    }

    /// Eigenvectors of `T` for the given ascending eigenvalues by inverse
    /// iteration, reorthogonalizing within clusters closer than `1e-3‖T‖`.
    fn inverse_iteration(&self, values: &[T]) -> Vec<Vec<T>> {
        let n = self.d.len();
        let tnorm = max(self.norm(), T::min_positive_value());
        let ortol = T::lit(1e-3) * tnorm;
        let tiny = T::epsilon() * tnorm;
        let growth_target = T::one() / (T::lit(10.0) * T::from_usize_lossy(n).sqrt() * tiny);
        let mut out: Vec<Vec<T>> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        let mut state: u64 = 0x2545_F491_4F6C_DD1D;
        for (j, &mu) in values.iter().enumerate() {
            if j > 0 && mu - values[j - 1] > ortol {
                cluster_start = j;
            }
            // Nudge exact repeats apart so the solves stay distinct.
            let shift = if j > cluster_start {
                max(mu, values[j - 1] + T::lit(10.0) * T::epsilon() * tnorm)
            } else {
                mu
            };
            let mut x: Vec<T> = (0..n)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    T::lit(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5)
                })
                .collect();
            normalize(&mut x);
            let mut extra = 0;
            for _ in 0..8 {
                self.shifted_solve(shift, tiny, &mut x);
                for prev in &out[cluster_start..j] {
                    let p = dot_slices(prev, &x);
                    for (t, &q) in x.iter_mut().zip(prev) {
                        *t -= p * q;
                    }
                }
                let growth = normalize(&mut x);
                if growth >= growth_target {
                    extra += 1;
                    if extra > 2 {
                        break;
                    }
                }
            }
            out.push(x);
        }
        out
    }
}

fn normalize<T: Real>(x: &mut [T]) -> T {
    let nrm = dot_slices(x, x).sqrt();
    if nrm > T::zero() {
        for t in x.iter_mut() {
            *t /= nrm;
        }
    }
    nrm
}

/// Eigenpairs of a symmetric matrix whose eigenvalues satisfy `keep`.
///
/// Eigenvalues come from the tridiagonal QL iteration without vector
/// accumulation; the selected eigenvectors (and any neighbours close enough to
/// mix with them) are then found by inverse iteration and transformed back.
/// This costs about a quarter of [`sym_eigen`] when few pairs are kept, and
/// falls back to it otherwise.
pub fn sym_eigen_select<T: Real>(a: &Mat<T>, keep: impl Fn(T) -> bool) -> Result<SymEigen<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare(a.rows(), a.cols()));
    }
    if a.has_nan() {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let n = a.rows();
    let filter_full = |eig: SymEigen<T>| {
        let idx: Vec<usize> = (0..eig.dim()).filter(|&k| keep(eig.values[k])).collect();
        SymEigen {
            values: idx.iter().map(|&k| eig.values[k]).collect(),
            vectors: Mat::from_fn(n, idx.len(), |i, c| eig.vectors[(i, idx[c])]),
        }
    };
    if n < 8 {
        return Ok(filter_full(sym_eigen(a)?));
    }
    let tri = Tridiagonal::reduce(a);
    let values = tri.eigenvalues()?;
    let ortol = T::lit(1e-3) * tri.norm();
    let selected: Vec<bool> = values.iter().map(|&v| keep(v)).collect();
    // Widen the selection to whole clusters.
    let mut wanted = selected.clone();
    for k in 0..n {
        if !selected[k] {
            continue;
        }
        let mut j = k;
        while j > 0 && values[j] - values[j - 1] <= ortol {
            j -= 1;
            wanted[j] = true;
        }
        let mut j = k;
        while j + 1 < n && values[j + 1] - values[j] <= ortol {
            j += 1;
            wanted[j] = true;
        }
    }
    let count = wanted.iter().filter(|&&w| w).count();
    if 4 * count > n {
        return Ok(filter_full(sym_eigen(a)?));
    }
    // Solve each maximal run of wanted values together so clusters stay
    // contiguous.
    let mut pairs: Vec<(T, Vec<T>)> = Vec::with_capacity(count);
    let mut k = 0;
    while k < n {
        if !wanted[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && wanted[k] {
            k += 1;
        }
        let vecs = tri.inverse_iteration(&values[start..k]);
        for (off, mut x) in vecs.into_iter().enumerate() {
            if selected[start + off] {
                tri.apply_q(&mut x);
                pairs.push((values[start + off], x));
            }
        }
    }
    let vectors = Mat::from_fn(n, pairs.len(), |i, c| pairs[c].1[i]);
    Ok(SymEigen {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors,
    })
}

#[inline]
fn rotate_rows<T: Real>(z: &mut Mat<T>, i: usize, s: T, c: T) {
    let n = z.cols();
    let (head, tail) = z.as_mut_slice().split_at_mut((i + 1) * n);
    let zi = &mut head[i * n..];
    let zi1 = &mut tail[..n];
    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// Orthonormalizes the columns of `a` in place by modified Gram–Schmidt with
/// one reorthogonalization pass. Returns the number of columns that survived
/// (columns that became numerically zero are left zero).
pub fn orthonormalize_columns<T: Real>(a: &mut Mat<T>) -> usize {
    let (rows, cols) = (a.rows(), a.cols());
    let mut cols_t = a.transpose();
    let mut kept = 0;
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let (before, cur) = cols_t.as_mut_slice().split_at_mut(j * rows);
                let qk = &before[k * rows..(k + 1) * rows];
                let cj = &mut cur[..rows];
                let proj = dot_slices(qk, cj);
                for (x, &q) in cj.iter_mut().zip(qk) {
                    *x -= proj * q;
                }
            }
        }
        let cj = cols_t.row_mut(j);
        let norm = dot_slices(cj, cj).sqrt();
        if norm > T::tiny() {
            for x in cj.iter_mut() {
                *x /= norm;
            }
            kept += 1;
        } else {
            for x in cj.iter_mut() {
                *x = T::zero();
            }
        }
    }
    *a = cols_t.transpose();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sym(n: usize, seed: u64) -> Mat<f64> {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let mut a = Mat::from_fn(n, n, |_, _| next());
        a.symmetrize();
        a
    }

    #[test]
    fn eigen_reconstructs_and_is_orthonormal() {
        for &n in &[1, 2, 3, 7, 30] {
            let a = random_sym(n, n as u64);
            let eig = sym_eigen(&a).unwrap();
            let back = eig.reconstruct();
            assert!(back.sub(&a).frobenius() < 1e-12 * (1.0 + a.frobenius()));
            let vtv = eig.vectors.t_matmul(&eig.vectors);
            assert!(vtv.sub(&Mat::identity(n)).max_abs() < 1e-12);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_handles_diagonal_and_repeated_values() {
        let a = Mat::diag(&[3.0, 1.0, 1.0, -2.0]);
        let eig = sym_eigen(&a).unwrap();
        assert_eq!(eig.values, vec![-2.0, 1.0, 1.0, 3.0]);
        let zero = Mat::<f64>::zeros(5, 5);
        assert!(sym_eigen(&zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eigen_works_in_single_precision() {
        let a = random_sym(12, 5);
        let a32 = Mat::from_fn(12, 12, |i, j| a[(i, j)] as f32);
        let eig = sym_eigen(&a32).unwrap();
        assert!(eig.reconstruct().sub(&a32).frobenius() < 1e-4);
    }

    #[test]
    fn products_agree() {
        let a = random_sym(6, 1);
        let b = Mat::from_fn(6, 4, |i, j| (i as f64) - 0.3 * j as f64);
        let ab = a.matmul(&b);
        let atb = a.transpose().t_matmul(&b);
        assert!(ab.sub(&atb).max_abs() < 1e-14);
        let bt = b.transpose();
        assert!(a.matmul_t(&bt).sub(&ab).max_abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_orthonormalizes() {
        let mut a = Mat::from_fn(5, 3, |i, j| ((i + 1) as f64).powi(j as i32));
        assert_eq!(orthonormalize_columns(&mut a), 3);
        let g = a.t_matmul(&a);
        assert!(g.sub(&Mat::identity(3)).max_abs() < 1e-12);
    }

    fn projector_of(eig: &SymEigen<f64>, pick: impl Fn(f64) -> bool) -> Mat<f64> {
        eig.reconstruct_with(|v| if pick(v) { v } else { 0.0 })
    }

    #[test]
    fn selected_pairs_match_full_solver() {
        for &(n, seed) in &[(9usize, 1u64), (40, 2), (120, 3)] {
            let a = random_sym(n, seed);
            let full = sym_eigen(&a).unwrap();
            let thr = 0.6 * full.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let keep = |v: f64| v.abs() > thr;
            let sel = sym_eigen_select(&a, keep).unwrap();
            let want: Vec<f64> = full.values.iter().copied().filter(|&v| keep(v)).collect();
            assert_eq!(sel.values.len(), want.len());
            for (x, y) in sel.values.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
            let gram = sel.vectors.t_matmul(&sel.vectors);
            assert!(gram.sub(&Mat::identity(sel.dim())).max_abs() < 1e-10);
            let diff = projector_of(&sel, keep).sub(&projector_of(&full, keep));
            assert!(diff.max_abs() < 1e-10, "n={n}: {}", diff.max_abs());
        }
    }

    #[test]
    fn selected_pairs_with_repeated_eigenvalues() {
        let n = 24;
        let mut q = random_sym(n, 9);
        orthonormalize_columns(&mut q);
        let spectrum: Vec<f64> = (0..n).map(|i| if i < 3 { 5.0 } else if i < 5 { -4.0 } else { 0.01 * i as f64 }).collect();
        let a = q.matmul(&Mat::diag(&spectrum)).matmul_t(&q);
        let keep = |v: f64| v.abs() > 1.0;
        let sel = sym_eigen_select(&a, keep).unwrap();
        assert_eq!(sel.dim(), 5);
        let back = sel.reconstruct();
        let want = sym_eigen(&a).unwrap().reconstruct_with(|v| if keep(v) { v } else { 0.0 });
        assert!(back.sub(&want).max_abs() < 1e-10);
        let none = sym_eigen_select(&a, |v| v > 100.0).unwrap();
        assert_eq!(none.dim(), 0);
        assert_eq!(none.reconstruct().max_abs(), 0.0);
    }
}

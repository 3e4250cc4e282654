//! Weighted graphs, Laplacians and the spectrum of the smoothing operator
//! `W = Δ^q`.
//!
//! Eigen-indices exposed through [`SpectralDecomposition::lambda`] are 1-based
//! (`λ_1 ≤ … ≤ λ_m`) with `λ_k = +∞` for `k > m`.

use crate::error::{invalid, Error, Result};
use crate::kernel::SymmetricKernel;
use crate::linalg::{sym_eigen, Mat};
use crate::scalar::{max, Real};

/// Vertex count plus a symmetric, nonnegative, zero-diagonal weight matrix.
#[derive(Clone, Debug)]
pub struct WeightedGraph<T> {
    weights: Mat<T>,
}

impl<T: Real> WeightedGraph<T> {
    /// Validates and wraps a weight matrix.
    pub fn new(weights: Mat<T>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::NotSquare(weights.rows(), weights.cols()));
        }
        if weights.has_nan() {
            return Err(Error::NonFinite("graph weights"));
        }
        let m = weights.rows();
        let tol = T::epsilon() * T::lit(16.0) * max(T::one(), weights.max_abs());
        for u in 0..m {
            if weights[(u, u)] != T::zero() {
                return Err(Error::NonzeroDiagonal(u));
            }
            for v in 0..m {
                if weights[(u, v)] < T::zero() {
                    return Err(Error::NegativeWeight(u, v));
                }
            }
        }
        let asym = weights.asymmetry();
        if asym > tol {
            return Err(Error::AsymmetricWeights(asym.as_f64()));
        }
        let mut weights = weights;
        weights.symmetrize();
        Ok(Self { weights })
    }

    /// Builds a graph from an undirected edge list; repeated edges add up.
    pub fn from_edges(m: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        let mut w = Mat::zeros(m, m);
        for &(u, v, x) in edges {
            if u >= m || v >= m {
                return Err(invalid("edge", format!("({u}, {v}) out of range for m={m}")));
            }
            if u == v {
                return Err(Error::NonzeroDiagonal(u));
            }
            w[(u, v)] += x;
            w[(v, u)] += x;
        }
        Self::new(w)
    }

    /// `m` isolated vertices.
    pub fn empty(m: usize) -> Self {
        Self {
            weights: Mat::zeros(m, m),
        }
    }

    /// Path `0 - 1 - … - (m-1)` with unit weights.
    pub fn path(m: usize) -> Self {
        let mut w = Mat::zeros(m, m);
        for u in 1..m {
            w[(u - 1, u)] = T::one();
            w[(u, u - 1)] = T::one();
        }
        Self { weights: w }
    }

    /// Complete graph with unit weights.
    pub fn complete(m: usize) -> Self {
        Self {
            weights: Mat::from_fn(m, m, |u, v| if u == v { T::zero() } else { T::one() }),
        }
    }

    /// Cycle on `m ≥ 3` vertices with every edge weighted `weight`.
    ///
    /// With `weight = (m/2π)²` the Laplacian eigenvalues `weight·(2 − 2cos(2πk/m))`
    /// approach `k²`, so `W = Δ^β` has `λ_l ≍ l^{2β}` independently of `m`.
    pub fn circle(m: usize, weight: T) -> Result<Self> {
        if m < 3 {
            return Err(invalid("m", format!("a cycle needs at least 3 vertices, got {m}")));
        }
        if !(weight >= T::zero()) {
            return Err(invalid("weight", "must be nonnegative"));
        }
        let mut w = Mat::zeros(m, m);
        for u in 0..m {
            let v = (u + 1) % m;
            w[(u, v)] = weight;
            w[(v, u)] = weight;
        }
        Ok(Self { weights: w })
    }

    /// Cycle scaled so the Laplacian spectrum is `≈ k²` (see [`Self::circle`]).
    pub fn unit_circle(m: usize) -> Result<Self> {
        let s = T::from_usize_lossy(m) / (T::lit(2.0) * T::PI());
        Self::circle(m, s * s)
    }

    pub fn m(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Mat<T> {
        &self.weights
    }

    pub fn degree(&self, u: usize) -> T {
        self.weights.row(u).iter().copied().sum()
    }
}

/// `Δ = D − A`.
pub fn laplacian<T: Real>(graph: &WeightedGraph<T>) -> SymmetricKernel<T> {
    let m = graph.m();
    let a = graph.weights();
    let mut lap = a.scale(-T::one());
    for u in 0..m {
        lap[(u, u)] = graph.degree(u);
    }
    SymmetricKernel::from_symmetric(lap)
}

/// Ascending eigenvalues and orthonormal eigenvectors (columns) of `W`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<T> {
    eigenvalues: Vec<T>,
    eigenvectors: Mat<T>,
    operator: Mat<T>,
    k0: usize,
    growth_c: T,
}

impl<T: Real> SpectralDecomposition<T> {
    /// Assembles a decomposition from a nonnegative ascending spectrum and an
    /// orthonormal basis (columns of `eigenvectors`).
    pub fn new(eigenvalues: Vec<T>, eigenvectors: Mat<T>) -> Result<Self> {
        let m = eigenvalues.len();
        if eigenvectors.rows() != m || eigenvectors.cols() != m {
            return Err(Error::Dimension {
                expected: m,
                found: eigenvectors.cols(),
            });
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("eigenvalues"));
        }
        if eigenvalues.iter().any(|&x| x < T::zero()) {
            return Err(invalid("eigenvalues", "must be nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("eigenvalues", "must be ascending"));
        }
        let gram = eigenvectors.t_matmul(&eigenvectors);
        let dev = gram.sub(&Mat::identity(m)).max_abs();
        let tol = max(T::lit(1e-8), T::epsilon() * T::lit(64.0) * T::from_usize_lossy(m));
        if dev > tol {
            return Err(invalid("eigenvectors", format!("not orthonormal (deviation {dev})")));
        }
        let (k0, growth_c) = spectrum_constants(&eigenvalues);
        let lam = eigenvalues.clone();
        let operator = {
            let mut left = eigenvectors.clone();
            for i in 0..m {
                for (x, &l) in left.row_mut(i).iter_mut().zip(&lam) {
                    *x *= l;
                }
            }
            let mut w = left.matmul_t(&eigenvectors);
            w.symmetrize();
            w
        };
        Ok(Self {
            eigenvalues,
            eigenvectors,
            operator,
            k0,
            growth_c,
        })
    }

    /// Spectrum with the canonical basis as eigenvectors.
    pub fn diagonal(eigenvalues: Vec<T>) -> Result<Self> {
        let m = eigenvalues.len();
        Self::new(eigenvalues, Mat::identity(m))
    }

    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending eigenvalues `λ_1 ≤ … ≤ λ_m`.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors stored as columns, `φ_k` in column `k − 1`.
    pub fn eigenvectors(&self) -> &Mat<T> {
        &self.eigenvectors
    }

    /// `φ_k` for 1-based `k`.
    pub fn phi(&self, k: usize) -> Vec<T> {
        self.eigenvectors.column(k - 1)
    }

    /// `λ_k` for 1-based `k`, `+∞` when `k > m`.
    pub fn lambda(&self, k: usize) -> T {
        assert!(k >= 1, "eigen-indices are 1-based");
        if k > self.m() {
            T::infinity()
        } else {
            self.eigenvalues[k - 1]
        }
    }

    pub fn lambda_max(&self) -> T {
        self.eigenvalues.last().copied().unwrap_or_else(T::zero)
    }

    /// 1-based index of the first positive eigenvalue (`m + 1` if none).
    pub fn k0(&self) -> usize {
        self.k0
    }

    /// Smallest `c ≥ 1` with `λ_{k+1} ≤ c·λ_k` for every `k ≥ k0`.
    pub fn growth_c(&self) -> T {
        self.growth_c
    }

    /// The operator `W = Σ λ_k φ_k ⊗ φ_k`.
    pub fn operator(&self) -> &Mat<T> {
        &self.operator
    }

    /// `Φᵀ S Φ`: coordinates of `S` in the eigenbasis.
    pub fn to_basis(&self, s: &Mat<T>) -> Mat<T> {
        self.eigenvectors.t_matmul(&s.matmul(&self.eigenvectors))
    }

    /// `Φ C Φᵀ` for coordinates `C` on the leading `C.rows()` eigenvectors.
    pub fn from_basis(&self, c: &Mat<T>) -> Mat<T> {
        let l = c.rows();
        let m = self.m();
        let phi_l = Mat::from_fn(m, l, |i, j| self.eigenvectors[(i, j)]);
        let mut out = phi_l.matmul(c).matmul_t(&phi_l);
        out.symmetrize();
        out
    }
}

fn zero_threshold<T: Real>(top: T) -> T {
    max(T::lit(1e-10), T::lit(1e-12) * top)
}

fn spectrum_constants<T: Real>(values: &[T]) -> (usize, T) {
    let m = values.len();
    let top = values.last().copied().unwrap_or_else(T::zero);
    let thr = zero_threshold(top);
    let k0 = values.iter().position(|&x| x > thr).map_or(m + 1, |i| i + 1);
    let mut c = T::one();
    if k0 <= m {
        for k in k0..m {
            c = max(c, values[k] / values[k - 1]);
        }
    }
    (k0, c)
}

/// Eigendecomposition of `Δ^q` for a PSD `Δ`.
///
/// Eigenvalues of `Δ` at or below `max(1e-10, 1e-12·λ_max)` in magnitude are
/// snapped to exact zeros before the power is taken.
pub fn smoothing_operator<T: Real>(
    laplacian: &SymmetricKernel<T>,
    q: T,
) -> Result<SpectralDecomposition<T>> {
    if !(q > T::zero()) || !q.is_finite() {
        return Err(invalid("q", "must be a positive real"));
    }
    let a = laplacian.as_mat();
    let scale = max(T::one(), a.max_abs());
    let sym_tol = T::lit(1e-8) * scale;
    if a.asymmetry() > sym_tol {
        return Err(Error::AsymmetricWeights(a.asymmetry().as_f64()));
    }
    let eig = sym_eigen(a)?;
    let mut values = eig.values;
    let neg_tol = max(T::lit(1e-8), T::epsilon() * T::lit(64.0)) * scale;
    if let Some(&lo) = values.first() {
        if lo < -neg_tol {
            return Err(Error::NotPsd(lo.as_f64()));
        }
    }
    let top = values.last().copied().unwrap_or_else(T::zero);
    let thr = max(zero_threshold(top), T::epsilon() * T::lit(64.0) * scale);
    for x in values.iter_mut() {
        *x = if *x <= thr { T::zero() } else { x.powf(q) };
    }
    // Powers preserve the order of nonnegative values; the sort only guards
    // against snapped values.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite"));
    let m = values.len();
    let sorted: Vec<T> = order.iter().map(|&i| values[i]).collect();
    let vectors = Mat::from_fn(m, m, |r, c| eig.vectors[(r, order[c])]);
    SpectralDecomposition::new(sorted, vectors)
}

/// `F(λ) = #{k : λ_k ≤ λ}`.
pub fn spectral_function<T: Real>(spec: &SpectralDecomposition<T>, lambda: T) -> usize {
    spec.eigenvalues().partition_point(|&x| x <= lambda)
}

/// The minimal regularized majorant
/// `F̄(λ) = λ^{1−γ} sup_{σ≥λ} F(σ)/σ^{1−γ}` (with `F̄(0) = F(0)`).
///
/// `F` is constant between eigenvalues and `σ ↦ F(σ)/σ^{1−γ}` decreases on each
/// step, so the supremum is attained either at `σ = λ` or at an eigenvalue
/// above `λ`. The latter is a suffix maximum over the distinct positive
/// eigenvalues and is precomputed.
#[derive(Clone, Debug)]
pub struct MajorantFunction<T> {
    gamma: T,
    m: usize,
    f_zero: usize,
    breakpoints: Vec<T>,
    counts: Vec<usize>,
    suffix_ratio: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> MajorantFunction<T> {
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Distinct positive eigenvalues.
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    /// `F̄` at each breakpoint.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `F(λ)` reconstructed from the stored breakpoints.
    pub fn spectral(&self, lambda: T) -> usize {
        if lambda < T::zero() {
            return 0;
        }
        let idx = self.breakpoints.partition_point(|&b| b <= lambda);
        if idx == 0 {
            self.f_zero
        } else {
            self.counts[idx - 1]
        }
    }

    /// `F̄(λ)`; `F̄(λ) = m` for `λ ≥ λ_m` and `F̄(∞) = m`.
    pub fn eval(&self, lambda: T) -> T {
        let mt = T::from_usize_lossy(self.m);
        if lambda.is_infinite() && lambda > T::zero() {
            return mt;
        }
        if lambda <= T::zero() {
            return T::from_usize_lossy(self.f_zero);
        }
        if let Some(&top) = self.breakpoints.last() {
            if lambda >= top {
                return mt;
            }
        } else {
            return mt;
        }
        let f = T::from_usize_lossy(self.spectral(lambda));
        let idx = self.breakpoints.partition_point(|&b| b <= lambda);
        let tail = if idx < self.suffix_ratio.len() {
            self.suffix_ratio[idx]
        } else {
            T::zero()
        };
        let e = T::one() - self.gamma;
        max(f, lambda.powf(e) * tail)
    }
}

/// Builds the minimal regularized majorant of `F` for `γ ∈ (0, 1)`.
pub fn regularized_majorant<T: Real>(
    spec: &SpectralDecomposition<T>,
    gamma: T,
) -> Result<MajorantFunction<T>> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(invalid("gamma", "must lie in (0, 1)"));
    }
    let m = spec.m();
    let f_zero = spectral_function(spec, T::zero());
    let mut breakpoints: Vec<T> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (i, &x) in spec.eigenvalues().iter().enumerate() {
        if x <= T::zero() {
            continue;
        }
        if breakpoints.last() == Some(&x) {
            *counts.last_mut().expect("nonempty") = i + 1;
        } else {
            breakpoints.push(x);
            counts.push(i + 1);
        }
    }
    let e = T::one() - gamma;
    let mut suffix_ratio = vec![T::zero(); breakpoints.len()];
    let mut run = T::zero();
    for j in (0..breakpoints.len()).rev() {
        run = max(run, T::from_usize_lossy(counts[j]) / breakpoints[j].powf(e));
        suffix_ratio[j] = run;
    }
    let mut out = MajorantFunction {
        gamma,
        m,
        f_zero,
        breakpoints,
        counts,
        suffix_ratio,
        values: Vec::new(),
    };
    out.values = out.breakpoints.iter().map(|&b| out.eval(b)).collect();
    Ok(out)
}

/// `c_γ = (c + γ)/γ`.
pub fn c_gamma<T: Real>(growth_c: T, gamma: T) -> T {
    (growth_c + gamma) / gamma
}

/// `Σ_{λ_k > λ} w_k / λ_k`.
pub fn weighted_tail_sum<T: Real>(spec: &SpectralDecomposition<T>, lambda: T, w: &[T]) -> T {
    spec.eigenvalues()
        .iter()
        .zip(w)
        .filter(|(&l, _)| l > lambda)
        .map(|(&l, &wk)| wk / l)
        .sum()
}

/// `Σ_{λ_k > λ} 1/λ_k`.
pub fn inverse_tail_sum<T: Real>(spec: &SpectralDecomposition<T>, lambda: T) -> T {
    let ones = vec![T::one(); spec.m()];
    weighted_tail_sum(spec, lambda, &ones)
}

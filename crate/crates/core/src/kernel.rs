//! Symmetric kernels on the vertex set: norms, truncation, support, coherence
//! and synthetic oracles.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::graph::{MajorantFunction, SpectralDecomposition};
use crate::linalg::{orthonormalize_columns, sym_eigen, Mat, SymEigen};
use crate::rng::rng;
use crate::scalar::{clamp_abs, max, Real};

/// Dense symmetric `m × m` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricKernel<T> {
    mat: Mat<T>,
}

impl<T: Real> SymmetricKernel<T> {
    /// Validates squareness, finiteness and symmetry (to `1e-12` relative, or a
    /// few ulps for `f32`), then symmetrizes exactly.
    pub fn new(mat: Mat<T>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::NotSquare(mat.rows(), mat.cols()));
        }
        if mat.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("kernel entries"));
        }
        let tol = max(T::lit(1e-12), T::epsilon() * T::lit(8.0)) * max(T::one(), mat.max_abs());
        let asym = mat.asymmetry();
        if asym > tol {
            return Err(invalid("kernel", format!("not symmetric (deviation {asym})")));
        }
        Ok(Self::from_symmetric(mat))
    }

    /// Wraps a matrix that is symmetric up to round-off, averaging the two
    /// triangles.
    pub fn from_symmetric(mut mat: Mat<T>) -> Self {
        debug_assert!(mat.is_square());
        mat.symmetrize();
        Self { mat }
    }

    pub fn zeros(m: usize) -> Self {
        Self { mat: Mat::zeros(m, m) }
    }

    /// `ψ ⊗ ψ`.
    pub fn outer(psi: &[T]) -> Self {
        let m = psi.len();
        Self {
            mat: Mat::from_fn(m, m, |u, v| psi[u] * psi[v]),
        }
    }

    /// `Σ_j μ_j ψ_j ⊗ ψ_j`.
    pub fn from_spectral(pairs: &[(T, &[T])]) -> Self {
        let m = pairs.first().map_or(0, |p| p.1.len());
        let mut mat = Mat::zeros(m, m);
        for &(mu, psi) in pairs {
            for u in 0..m {
                let row = mat.row_mut(u);
                for (x, &pv) in row.iter_mut().zip(psi) {
                    *x += mu * psi[u] * pv;
                }
            }
        }
        Self::from_symmetric(mat)
    }

    pub fn m(&self) -> usize {
        self.mat.rows()
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.mat[(u, v)]
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.mat
    }

    pub fn into_mat(self) -> Mat<T> {
        self.mat
    }

    pub fn eigen(&self) -> Result<SymEigen<T>> {
        sym_eigen(&self.mat)
    }

    pub fn sup_norm(&self) -> T {
        self.mat.max_abs()
    }

    /// `‖S‖_{L2(Π²)} = m^{-1}‖S‖₂`.
    pub fn l2_pi2(&self) -> T {
        self.mat.frobenius() / T::from_usize_lossy(self.m())
    }

    /// `⟨S₁, S₂⟩_{L2(Π²)} = m^{-2}⟨S₁, S₂⟩`.
    pub fn inner_pi2(&self, other: &Self) -> T {
        let m = T::from_usize_lossy(self.m());
        self.mat.dot(&other.mat) / (m * m)
    }

    /// `‖S − T‖²_{L2(Π²)}`, the estimation-error metric.
    pub fn sq_dist_pi2(&self, other: &Self) -> T {
        let m = T::from_usize_lossy(self.m());
        let d: T = self
            .mat
            .as_slice()
            .iter()
            .zip(other.mat.as_slice())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        d / (m * m)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.sub(&other.mat),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            mat: self.mat.add(&other.mat),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            mat: self.mat.scale(s),
        }
    }

    /// `m^{-1}(tr(W S²))^{1/2}`.
    pub fn sobolev(&self, spec: &SpectralDecomposition<T>) -> T {
        sobolev_sq(self, spec).sqrt()
    }
}

fn sobolev_sq<T: Real>(s: &SymmetricKernel<T>, spec: &SpectralDecomposition<T>) -> T {
    let m = s.m();
    let coords = spec.eigenvectors().t_matmul(s.as_mat());
    let mut acc = T::zero();
    for k in 0..m {
        let row = coords.row(k);
        let nrm: T = row.iter().map(|&x| x * x).sum();
        acc += spec.eigenvalues()[k] * nrm;
    }
    let mt = T::from_usize_lossy(m);
    max(acc, T::zero()) / (mt * mt)
}

/// Norms of a kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelNorms<T> {
    pub nuclear: T,
    pub frobenius: T,
    pub operator: T,
    pub l2_pi2: T,
    pub sobolev_l2_pi2: T,
    pub sup: T,
}

pub fn norms<T: Real>(
    s: &SymmetricKernel<T>,
    spec: &SpectralDecomposition<T>,
) -> Result<KernelNorms<T>> {
    if s.m() != spec.m() {
        return Err(Error::Dimension {
            expected: spec.m(),
            found: s.m(),
        });
    }
    let eig = s.eigen()?;
    let nuclear = eig.values.iter().map(|x| x.abs()).sum();
    let frobenius = eig.values.iter().map(|&x| x * x).sum::<T>().sqrt();
    let operator = eig.values.iter().fold(T::zero(), |acc, x| max(acc, x.abs()));
    Ok(KernelNorms {
        nuclear,
        frobenius,
        operator,
        l2_pi2: frobenius / T::from_usize_lossy(s.m()),
        sobolev_l2_pi2: sobolev_sq(s, spec).sqrt(),
        sup: s.sup_norm(),
    })
}

/// Entrywise clamp `S^a` to `[−a, a]`.
pub fn truncate<T: Real>(s: &SymmetricKernel<T>, a: T) -> SymmetricKernel<T> {
    SymmetricKernel {
        mat: s.mat.map(|x| clamp_abs(x, a)),
    }
}

/// `sign(S)`, the support projector `P_L` and `rank(S)`.
#[derive(Clone, Debug)]
pub struct SignSupport<T> {
    pub sign: SymmetricKernel<T>,
    pub projector: Mat<T>,
    pub rank: usize,
    /// Orthonormal basis of `L` (columns).
    pub basis: Mat<T>,
}

/// Scale-aware rank cutoff `1e-9·‖S‖`.
pub fn default_rank_tol<T: Real>(s: &SymmetricKernel<T>) -> Result<T> {
    let eig = s.eigen()?;
    let op = eig.values.iter().fold(T::zero(), |acc, x| max(acc, x.abs()));
    Ok(max(T::lit(1e-9) * op, T::min_positive_value()))
}

pub fn sign_and_support<T: Real>(s: &SymmetricKernel<T>, zero_tol: T) -> Result<SignSupport<T>> {
    if !(zero_tol > T::zero()) {
        return Err(invalid("zero_tol", "must be positive"));
    }
    let eig = s.eigen()?;
    let m = s.m();
    let keep: Vec<usize> = (0..m).filter(|&k| eig.values[k].abs() > zero_tol).collect();
    let basis = Mat::from_fn(m, keep.len(), |i, c| eig.vectors[(i, keep[c])]);
    let sign = eig.reconstruct_with(|x| {
        if x > zero_tol {
            T::one()
        } else if x < -zero_tol {
            -T::one()
        } else {
            T::zero()
        }
    });
    let mut projector = basis.matmul_t(&basis);
    projector.symmetrize();
    Ok(SignSupport {
        sign: SymmetricKernel::from_symmetric(sign),
        projector,
        rank: keep.len(),
        basis,
    })
}

/// Per-eigenvector coherences `‖P_L φ_k‖²` of a fixed kernel against the
/// spectrum of `W`, from which `φ(S; ·)` and its minimal majorant follow.
#[derive(Clone, Debug)]
pub struct Coherence<T> {
    eigenvalues: Vec<T>,
    weights: Vec<T>,
    rank: usize,
}

impl<T: Real> Coherence<T> {
    pub fn new(s: &SymmetricKernel<T>, spec: &SpectralDecomposition<T>) -> Result<Self> {
        let tol = default_rank_tol(s)?;
        let supp = sign_and_support(s, tol)?;
        if supp.rank == 0 {
            return Err(Error::ZeroKernel);
        }
        Self::from_basis(&supp.basis, spec)
    }

    /// From an orthonormal basis (columns) of the support `L`.
    pub fn from_basis(basis: &Mat<T>, spec: &SpectralDecomposition<T>) -> Result<Self> {
        if basis.rows() != spec.m() {
            return Err(Error::Dimension {
                expected: spec.m(),
                found: basis.rows(),
            });
        }
        if basis.cols() == 0 {
            return Err(Error::ZeroKernel);
        }
        // ‖P_L φ_k‖² = ‖Uᵀ φ_k‖² with U the basis of L.
        let proj = spec.eigenvectors().t_matmul(basis);
        let weights = (0..spec.m())
            .map(|k| proj.row(k).iter().map(|&x| x * x).sum())
            .collect();
        Ok(Self {
            eigenvalues: spec.eigenvalues().to_vec(),
            weights,
            rank: basis.cols(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `‖P_L φ_k‖²` in eigenvalue order.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `φ(S; λ) = Σ_{λ_j ≤ λ} ‖P_L φ_j‖²`.
    pub fn phi(&self, lambda: T) -> T {
        let top = self.eigenvalues.last().copied().unwrap_or_else(T::zero);
        if lambda >= top {
            return T::from_usize_lossy(self.rank);
        }
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .take_while(|(&l, _)| l <= lambda)
            .map(|(_, &w)| w)
            .sum()
    }

    /// Minimal majorant `φ̄(S; λ) = sup_{σ≤λ} F̄(σ) sup_{σ'≥σ} φ(S;σ')/F̄(σ')`.
    ///
    /// Between consecutive eigenvalues `φ` is constant and `F̄` nondecreasing,
    /// so the inner ratio is largest at the left end of each step and the
    /// outer expression `max(φ(σ), F̄(σ)·H(σ))` (with `H` the inner supremum
    /// over eigenvalues strictly above `σ`) is nondecreasing on each step and
    /// continuous across its right end. The outer supremum is therefore a
    /// maximum over eigenvalues `≤ λ` together with `λ` itself.
    pub fn majorant(&self, fbar: &MajorantFunction<T>, lambda: T) -> T {
        let r = T::from_usize_lossy(self.rank);
        let top = self.eigenvalues.last().copied().unwrap_or_else(T::zero);
        if lambda >= top {
            return r;
        }
        let mut pts: Vec<T> = Vec::with_capacity(self.eigenvalues.len() + 1);
        for &l in &self.eigenvalues {
            if pts.last() != Some(&l) {
                pts.push(l);
            }
        }
        let ratio = |sigma: T| {
            let p = self.phi(sigma);
            let f = fbar.eval(sigma);
            if p <= T::zero() {
                T::zero()
            } else {
                p / f
            }
        };
        // Suffix maxima of φ/F̄ over eigenvalues.
        let mut suffix = vec![T::zero(); pts.len() + 1];
        for j in (0..pts.len()).rev() {
            suffix[j] = max(suffix[j + 1], ratio(pts[j]));
        }
        let g = |sigma: T| {
            let idx = pts.partition_point(|&b| b <= sigma);
            max(self.phi(sigma), fbar.eval(sigma) * suffix[idx])
        };
        let mut best = g(lambda);
        for &b in pts.iter().take_while(|&&b| b <= lambda) {
            best = max(best, g(b));
        }
        best
    }
}

/// `φ(S; λ)`.
pub fn coherence_function<T: Real>(
    s: &SymmetricKernel<T>,
    spec: &SpectralDecomposition<T>,
    lambda: T,
) -> Result<T> {
    Ok(Coherence::new(s, spec)?.phi(lambda))
}

/// `φ̄(S; λ)` for the minimal majorant.
pub fn coherence_majorant<T: Real>(
    s: &SymmetricKernel<T>,
    spec: &SpectralDecomposition<T>,
    fbar: &MajorantFunction<T>,
    lambda: T,
) -> Result<T> {
    Ok(Coherence::new(s, spec)?.majorant(fbar, lambda))
}

/// `S_{*,l} = Σ_{i,j≤l} ⟨Sφ_i, φ_j⟩ φ_i ⊗ φ_j` for `1 ≤ l ≤ m`.
pub fn eigenbasis_truncation<T: Real>(
    s: &SymmetricKernel<T>,
    spec: &SpectralDecomposition<T>,
    l: usize,
) -> Result<SymmetricKernel<T>> {
    let m = spec.m();
    if l < 1 || l > m {
        return Err(invalid("l", format!("must lie in 1..={m}, got {l}")));
    }
    if s.m() != m {
        return Err(Error::Dimension {
            expected: m,
            found: s.m(),
        });
    }
    if l == m {
        return Ok(s.clone());
    }
    let phi_l = Mat::from_fn(m, l, |i, j| spec.eigenvectors()[(i, j)]);
    let coords = phi_l.t_matmul(&s.mat.matmul(&phi_l));
    Ok(SymmetricKernel::from_symmetric(spec.from_basis(&coords)))
}

/// How generated oracle eigenvectors weight the eigenbasis of `W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothnessProfile {
    /// Weights `(1 + λ_j)^{-1}`.
    #[default]
    Smooth,
    /// Equal weights; produces rough, highly coherent kernels.
    Flat,
}

/// Class membership data of an oracle kernel.
#[derive(Clone, Debug)]
pub struct OracleProfile<T> {
    pub r: usize,
    pub rho: T,
    pub a: T,
    pub support_projector: Mat<T>,
}

const ORACLE_ATTEMPTS: usize = 16;
const SATURATION: f64 = 0.95;

/// Random rank-`r` kernel with `‖W^{1/2}S‖_{L2(Π²)} ≤ ρ` and `‖S‖_∞ ≤ a`, the
/// binding constraint saturated at 95%.
pub fn generate_oracle<T: Real>(
    spec: &SpectralDecomposition<T>,
    r: usize,
    rho: T,
    a: T,
    profile: SmoothnessProfile,
    seed: u64,
) -> Result<(SymmetricKernel<T>, OracleProfile<T>)> {
    let m = spec.m();
    if r == 0 || r > m {
        return Err(Error::Infeasible(format!("rank {r} not in 1..={m}")));
    }
    if !(rho > T::zero()) || !(a > T::zero()) {
        return Err(invalid("rho/a", "must be positive"));
    }
    let mut g = rng(seed);
    let weights: Vec<T> = spec
        .eigenvalues()
        .iter()
        .map(|&l| match profile {
            SmoothnessProfile::Smooth => T::one() / (T::one() + l),
            SmoothnessProfile::Flat => T::one(),
        })
        .collect();
    for _ in 0..ORACLE_ATTEMPTS {
        let coeffs = Mat::from_fn(m, r, |j, _| {
            let z: f64 = g.sample(StandardNormal);
            T::lit(z) * weights[j]
        });
        let mut psi = spec.eigenvectors().matmul(&coeffs);
        if orthonormalize_columns(&mut psi) < r {
            continue;
        }
        let mus: Vec<T> = (0..r)
            .map(|_| {
                let sign = if g.random::<bool>() { T::one() } else { -T::one() };
                sign * T::lit(1.0 + g.random::<f64>())
            })
            .collect();
        let mut scaled = psi.clone();
        for i in 0..m {
            for (x, &mu) in scaled.row_mut(i).iter_mut().zip(&mus) {
                *x *= mu;
            }
        }
        let base = SymmetricKernel::from_symmetric(scaled.matmul_t(&psi));
        let sup = base.sup_norm();
        let sob = base.sobolev(spec);
        if !(sup > T::zero()) {
            continue;
        }
        let mut factor = a / sup;
        if sob > T::zero() {
            factor = crate::scalar::min(factor, rho / sob);
        }
        let s = base.scale(T::lit(SATURATION) * factor);
        if s.sup_norm() > a || s.sobolev(spec) > rho {
            continue;
        }
        let mut projector = psi.matmul_t(&psi);
        projector.symmetrize();
        return Ok((
            s,
            OracleProfile {
                r,
                rho,
                a,
                support_projector: projector,
            },
        ));
    }
    Err(Error::Infeasible(format!(
        "no rank-{r} oracle found after {ORACLE_ATTEMPTS} attempts"
    )))
}

//! The two-penalty convex estimator
//!
//! `Ŝ = argmin_{‖S‖_∞ ≤ a} n^{-1}Σ(y_j − S(u_j,v_j))² + ε‖S‖₁ + ε̄ m^{-2} tr(W S²)`
//!
//! solved by three-operator (Davis–Yin) splitting, and the sample-split
//! selection of `ε̄` over the grid `ε̄_l = 1/λ_l`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::{MajorantFunction, SpectralDecomposition};
use crate::kernel::{default_rank_tol, sign_and_support, Coherence, SymmetricKernel};
use crate::linalg::{sym_eigen, sym_eigen_select, Mat};
use crate::sampling::{empirical_loss, Dataset};
use crate::scalar::{clamp_abs, max, Real};

/// Penalties, box radius and stopping rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexConfig<T> {
    pub epsilon: T,
    pub epsilon_bar: T,
    pub a: T,
    pub max_iters: usize,
    /// Relative objective change regarded as stalled.
    pub rel_tol: T,
    /// Bound on the first-order residual.
    pub opt_tol: T,
}

impl<T: Real> ConvexConfig<T> {
    pub fn new(epsilon: T, epsilon_bar: T, a: T) -> Self {
        Self {
            epsilon,
            epsilon_bar,
            a,
            max_iters: 50_000,
            rel_tol: T::lit(1e-10),
            opt_tol: T::lit(1e-6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(invalid("epsilon", "must be a finite nonnegative number"));
        }
        if !(self.epsilon_bar >= T::zero()) || !self.epsilon_bar.is_finite() {
            return Err(invalid("epsilon_bar", "must be a finite nonnegative number"));
        }
        if !(self.a > T::zero()) {
            return Err(invalid("a", "must be positive"));
        }
        if !(self.rel_tol > T::zero()) || !(self.opt_tol > T::zero()) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a solve.
#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    /// Running minimum of the objective over iterations.
    pub objective_trace: Vec<T>,
    /// Objective at the returned kernel.
    pub objective: T,
    /// First-order residual at the last iteration.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    pub step: T,
}

/// `W` in whichever storage multiplies fastest.
#[derive(Clone, Debug)]
enum Operator<T> {
    Dense(Mat<T>),
    Sparse { rows: Vec<Vec<(usize, T)>> },
}

impl<T: Real> Operator<T> {
    fn new(w: &Mat<T>) -> Self {
        let m = w.rows();
        let nnz = w.as_slice().iter().filter(|&&x| x != T::zero()).count();
        if nnz * 8 <= m * m {
            let rows = (0..m)
                .map(|i| {
                    w.row(i)
                        .iter()
                        .enumerate()
                        .filter(|(_, &x)| x != T::zero())
                        .map(|(j, &x)| (j, x))
                        .collect()
                })
                .collect();
            Operator::Sparse { rows }
        } else {
            Operator::Dense(w.clone())
        }
    }

    /// `W X`.
    fn apply(&self, x: &Mat<T>) -> Mat<T> {
        match self {
            Operator::Dense(w) => w.matmul(x),
            Operator::Sparse { rows } => {
                let m = x.rows();
                let mut out = Mat::zeros(m, x.cols());
                for (i, row) in rows.iter().enumerate() {
                    let dst = out.row_mut(i);
                    for &(j, wij) in row {
                        for (o, &s) in dst.iter_mut().zip(x.row(j)) {
                            *o += wij * s;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Sufficient statistics of the design: symmetrized counts and response sums.
#[derive(Clone, Debug)]
struct Design<T> {
    n: T,
    counts: Mat<T>,
    sums: Mat<T>,
    y_sq: T,
    max_count: T,
}

impl<T: Real> Design<T> {
    fn new(data: &Dataset<T>) -> Self {
        let m = data.m();
        let mut counts = Mat::zeros(m, m);
        let mut sums = Mat::zeros(m, m);
        let half = T::lit(0.5);
        let mut y_sq = T::zero();
        for o in data.samples() {
            counts[(o.u, o.v)] += half;
            counts[(o.v, o.u)] += half;
            sums[(o.u, o.v)] += half * o.y;
            sums[(o.v, o.u)] += half * o.y;
            y_sq += o.y * o.y;
        }
        let max_count = counts.max_abs();
        Self {
            n: T::from_usize_lossy(data.n()),
            counts,
            sums,
            y_sq,
            max_count,
        }
    }

    /// `n^{-1}Σ(y − S)²` for symmetric `S`.
    fn loss(&self, s: &Mat<T>) -> T {
        let mut quad = T::zero();
        let mut lin = T::zero();
        for ((&x, &c), &sm) in s
            .as_slice()
            .iter()
            .zip(self.counts.as_slice())
            .zip(self.sums.as_slice())
        {
            quad += c * x * x;
            lin += sm * x;
        }
        max(self.y_sq - T::lit(2.0) * lin + quad, T::zero()) / self.n
    }

    /// `(2/n)(C∘S − Σ)`.
    fn loss_grad(&self, s: &Mat<T>) -> Mat<T> {
        let k = T::lit(2.0) / self.n;
        let data = s
            .as_slice()
            .iter()
            .zip(self.counts.as_slice())
            .zip(self.sums.as_slice())
            .map(|((&x, &c), &sm)| k * (c * x - sm))
            .collect();
        Mat::from_vec(s.rows(), s.cols(), data).expect("same shape")
    }
}

/// A dataset and spectrum prepared for repeated solves.
pub struct ConvexProblem<'a, T> {
    design: Design<T>,
    spec: &'a SpectralDecomposition<T>,
    w: Operator<T>,
    m: usize,
}

/// Warm-start state of the splitting iteration.
#[derive(Clone, Debug)]
pub struct WarmStart<T>(Mat<T>);

struct Candidate<T> {
    point: Mat<T>,
    objective: T,
}

impl<'a, T: Real> ConvexProblem<'a, T> {
    pub fn new(data: &Dataset<T>, spec: &'a SpectralDecomposition<T>) -> Result<Self> {
        if data.m() != spec.m() {
            return Err(Error::Dimension {
                expected: spec.m(),
                found: data.m(),
            });
        }
        Ok(Self {
            design: Design::new(data),
            spec,
            w: Operator::new(spec.operator()),
            m: spec.m(),
        })
    }

    fn m2(&self) -> T {
        let mt = T::from_usize_lossy(self.m);
        mt * mt
    }

    /// Smooth part `h` and its gradient at `s`.
    fn smooth(&self, s: &Mat<T>, eps_bar: T) -> (T, Mat<T>) {
        let mut g = self.design.loss_grad(s);
        let mut val = self.design.loss(s);
        if eps_bar > T::zero() {
            let ws = self.w.apply(s);
            let k = eps_bar / self.m2();
            val += k * ws.dot(s);
            // WS + SW = WS + (WS)ᵀ for symmetric S and W; on symmetric
            // directions this is the same linear functional as 2WS.
            let m = self.m;
            for i in 0..m {
                for j in 0..m {
                    g[(i, j)] += k * (ws[(i, j)] + ws[(j, i)]);
                }
            }
        }
        (val, g)
    }

    /// `h` at `Σ_k s_k v_k v_kᵀ` given the factors.
    fn smooth_factored(&self, x: &Mat<T>, vecs: &Mat<T>, vals: &[T], eps_bar: T) -> T {
        let mut val = self.design.loss(x);
        if eps_bar > T::zero() && !vals.is_empty() {
            let wv = self.w.apply(vecs);
            let mut acc = T::zero();
            for (k, &s) in vals.iter().enumerate() {
                let mut quad = T::zero();
                for i in 0..self.m {
                    quad += vecs[(i, k)] * wv[(i, k)];
                }
                acc += s * s * quad;
            }
            val += eps_bar / self.m2() * acc;
        }
        val
    }

    /// Full objective `J(S)`.
    pub fn objective(&self, s: &SymmetricKernel<T>, cfg: &ConvexConfig<T>) -> Result<T> {
        let (h, _) = self.smooth(s.as_mat(), cfg.epsilon_bar);
        let nuc = if cfg.epsilon > T::zero() {
            sym_eigen(s.as_mat())?.values.iter().map(|x| x.abs()).sum()
        } else {
            T::zero()
        };
        Ok(h + cfg.epsilon * nuc)
    }

    /// Gradient of the smooth part, `−(2/n)Σ(y_j − S)E_{u_j v_j} + (ε̄/m²)(WS + SW)`.
    pub fn smooth_gradient(&self, s: &SymmetricKernel<T>, eps_bar: T) -> Mat<T> {
        self.smooth(s.as_mat(), eps_bar).1
    }

    /// Lipschitz constant of the smooth gradient.
    pub fn lipschitz(&self, eps_bar: T) -> T {
        let two = T::lit(2.0);
        two * self.design.max_count / self.design.n
            + two * eps_bar * self.spec.lambda_max() / self.m2()
    }

    pub fn solve(&self, cfg: &ConvexConfig<T>) -> Result<(SymmetricKernel<T>, SolveReport<T>)> {
        self.solve_warm(cfg, None).map(|(s, r, _)| (s, r))
    }

    /// Davis–Yin splitting with `g` = box indicator, `f = ε‖·‖₁` and the
    /// quadratic smooth part. The iterate is `z`; each step evaluates
    /// `x_g = P_box(z)`, `x_f = prox_{γf}(2x_g − z − γ∇h(x_g))`, `z += x_f − x_g`.
    /// `‖x_g − x_f‖/γ` equals the norm of `∇h(x_g) + u + v` for explicit
    /// subgradients `u ∈ ε∂‖x_f‖₁`, `v ∈ N_box(x_g)`, and serves as the
    /// first-order residual.
    pub fn solve_warm(
        &self,
        cfg: &ConvexConfig<T>,
        warm: Option<&WarmStart<T>>,
    ) -> Result<(SymmetricKernel<T>, SolveReport<T>, WarmStart<T>)> {
        cfg.validate()?;
        let m = self.m;
        let a = cfg.a;
        let mut z = match warm {
            Some(WarmStart(z)) if z.rows() == m => z.clone(),
            _ => Mat::zeros(m, m),
        };
        let lip = self.lipschitz(cfg.epsilon_bar);
        let mut gamma = if lip > T::zero() {
            T::one() / lip
        } else {
            T::one()
        };
        let mut trace: Vec<T> = Vec::new();
        let mut best = T::infinity();
        let mut prev_obj: Option<T> = None;
        let mut stalled = 0usize;
        let mut residual = T::infinity();
        let mut last: Option<Candidate<T>> = None;
        let mut converged = false;
        let mut iterations = 0;
        let half = T::lit(0.5);

        while iterations < cfg.max_iters {
            iterations += 1;
            let xg = z.map(|x| clamp_abs(x, a));
            let (h_g, grad) = self.smooth(&xg, cfg.epsilon_bar);
            let (xf, cand) = loop {
                let mut y = xg.scale(T::lit(2.0));
                y.axpy(-T::one(), &z);
                y.axpy(-gamma, &grad);
                y.symmetrize();
                let (xf, vecs, vals) = self.prox_nuclear(&y, gamma * cfg.epsilon)?;
                let h_f = match &vecs {
                    Some(v) => self.smooth_factored(&xf, v, &vals, cfg.epsilon_bar),
                    None => self.smooth(&xf, cfg.epsilon_bar).0,
                };
                let diff = xf.sub(&xg);
                let model = h_g + grad.dot(&diff) + diff.frobenius_sq() * half / gamma;
                let slack = T::lit(1e-12) * max(T::one(), h_g.abs());
                if h_f <= model + slack || gamma < T::lit(1e-12) / max(lip, T::one()) {
                    let nuc: T = vals.iter().map(|x| x.abs()).sum();
                    break (xf, (h_f, nuc));
                }
                gamma *= half;
            };
            residual = xf.sub(&xg).frobenius() / gamma;
            z.axpy(T::one(), &xf);
            z.axpy(-T::one(), &xg);

            // Objective at the returned candidate: x_f itself when it lies in
            // the box, otherwise its clamp.
            let candidate = if xf.max_abs() <= a {
                let obj = if cfg.epsilon > T::zero() {
                    cand.0 + cfg.epsilon * cand.1
                } else {
                    cand.0
                };
                Candidate { point: xf, objective: obj }
            } else {
                let p = xf.map(|x| clamp_abs(x, a));
                let obj = self.objective(&SymmetricKernel::from_symmetric(p.clone()), cfg)?;
                Candidate { point: p, objective: obj }
            };
            if candidate.objective.is_nan() {
                return Err(Error::NonFinite("objective"));
            }
            best = if candidate.objective < best { candidate.objective } else { best };
            trace.push(best);
            if let Some(p) = prev_obj {
                let rel = (candidate.objective - p).abs() / max(T::one(), candidate.objective.abs());
                if rel < cfg.rel_tol {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
            }
            prev_obj = Some(candidate.objective);
            last = Some(candidate);
            if stalled >= 10 && residual < cfg.opt_tol {
                converged = true;
                break;
            }
        }
        let cand = last.expect("at least one iteration");
        let kernel = SymmetricKernel::from_symmetric(cand.point);
        Ok((
            kernel,
            SolveReport {
                objective_trace: trace,
                objective: cand.objective,
                residual,
                iterations,
                converged,
                step: gamma,
            },
            WarmStart(z),
        ))
    }

    /// Eigenvalue soft-thresholding at level `tau`. Returns the result and,
    /// when computed, its eigenvectors and thresholded eigenvalues.
    #[allow(clippy::type_complexity)]
    fn prox_nuclear(&self, y: &Mat<T>, tau: T) -> Result<(Mat<T>, Option<Mat<T>>, Vec<T>)> {
        if tau == T::zero() {
            return Ok((y.clone(), None, Vec::new()));
        }
        let eig = sym_eigen_select(y, |v| v.abs() > tau)?;
        let vals: Vec<T> = eig
            .values
            .iter()
            .map(|&v| if v > T::zero() { v - tau } else { v + tau })
            .collect();
        let n = y.rows();
        let mut left = eig.vectors.clone();
        for i in 0..n {
            for (x, &s) in left.row_mut(i).iter_mut().zip(&vals) {
                *x *= s;
            }
        }
        let mut out = left.matmul_t(&eig.vectors);
        out.symmetrize();
        Ok((out, Some(eig.vectors), vals))
    }
}

/// Solves the convex program from a zero start.
pub fn solve_convex<T: Real>(
    data: &Dataset<T>,
    spec: &SpectralDecomposition<T>,
    cfg: &ConvexConfig<T>,
) -> Result<(SymmetricKernel<T>, SolveReport<T>)> {
    if data.samples().iter().any(|o| !o.y.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    ConvexProblem::new(data, spec)?.solve(cfg)
}

/// Inputs of the oracle bound.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs<T> {
    pub epsilon: T,
    pub epsilon_bar: T,
    /// Unspecified absolute constant, 1 by default.
    pub big_c: T,
    /// Confidence parameter `t`.
    pub t: T,
    pub n: usize,
    pub a: T,
    /// `λ̃ ∈ (0, λ_{k0}]`.
    pub lambda_tilde: T,
}

/// `t_{n,m} = t + 3 log(2 log₂ n + ½ log₂(λ_m/λ̃) + 2)`.
pub fn t_nm<T: Real>(t: T, n: usize, lambda_max: T, lambda_tilde: T) -> T {
    let two = T::lit(2.0);
    let inner = two * T::from_usize_lossy(n).log2() + T::lit(0.5) * (lambda_max / lambda_tilde).log2() + two;
    t + T::lit(3.0) * inner.ln()
}

/// Oracle bound
/// `‖S − S_*‖² + C m² ε² φ̄(S; 1/ε̄) + ε̄‖W^{1/2}S‖² + C a² t_{n,m}/n`
/// (norms in `L2(Π²)`), with `φ̄(S; ∞) = rank(S)` when `ε̄ = 0` and no
/// penalty terms for the zero oracle. `phi_bar` overrides the minimal
/// coherence majorant.
pub fn convex_oracle_bound<T: Real>(
    s_oracle: &SymmetricKernel<T>,
    s_star: &SymmetricKernel<T>,
    spec: &SpectralDecomposition<T>,
    fbar: &MajorantFunction<T>,
    inputs: &BoundInputs<T>,
    phi_bar: Option<&dyn Fn(T) -> T>,
) -> Result<T> {
    let BoundInputs {
        epsilon,
        epsilon_bar,
        big_c,
        t,
        n,
        a,
        lambda_tilde,
    } = *inputs;
    let k0 = spec.k0();
    if k0 > spec.m() {
        return Err(invalid("spectrum", "W has no positive eigenvalue"));
    }
    if !(lambda_tilde > T::zero()) || lambda_tilde > spec.lambda(k0) * (T::one() + T::lit(1e-12)) {
        return Err(invalid("lambda_tilde", "must lie in (0, λ_k0]"));
    }
    if epsilon_bar < T::zero() || epsilon_bar * lambda_tilde > T::one() + T::lit(1e-12) {
        return Err(invalid("epsilon_bar", "must lie in [0, 1/λ̃]"));
    }
    let mt = T::from_usize_lossy(spec.m());
    let dist = s_oracle.sq_dist_pi2(s_star);
    let tail = big_c * a * a * t_nm(t, n, spec.lambda_max(), lambda_tilde) / T::from_usize_lossy(n);
    let rank = sign_and_support(s_oracle, default_rank_tol(s_oracle)?)?.rank;
    if rank == 0 {
        return Ok(dist + tail);
    }
    let coherence = if epsilon_bar == T::zero() {
        T::from_usize_lossy(rank)
    } else {
        let lam = T::one() / epsilon_bar;
        match phi_bar {
            Some(f) => f(lam),
            None => Coherence::new(s_oracle, spec)?.majorant(fbar, lam),
        }
    };
    let sob = s_oracle.sobolev(spec);
    Ok(dist + big_c * mt * mt * epsilon * epsilon * coherence + epsilon_bar * sob * sob + tail)
}

/// Which `l` values of the `ε̄_l = 1/λ_l` grid to fit.
#[derive(Clone, Debug, PartialEq)]
pub enum EpsBarGrid {
    /// Every `l = k0, …, m + 1` (`l = m + 1` meaning `ε̄ = 0`).
    Full,
    /// About `points` log-spaced values of `l` in `[k0, m]`, plus `m + 1`.
    Geometric(usize),
    /// The given values (clipped to `[k0, m + 1]`, deduplicated).
    Explicit(Vec<usize>),
}

impl EpsBarGrid {
    /// Sorted, deduplicated `l` values for a spectrum with the given `k0`, `m`.
    pub fn levels(&self, k0: usize, m: usize) -> Vec<usize> {
        let lo = k0.min(m + 1);
        let mut out: Vec<usize> = match self {
            EpsBarGrid::Full => (lo..=m + 1).collect(),
            EpsBarGrid::Geometric(points) => {
                let mut v = vec![m + 1];
                if lo <= m {
                    let p = (*points).max(2);
                    let (a, b) = ((lo as f64).ln(), (m as f64).ln());
                    for i in 0..p {
                        let x = (a + (b - a) * i as f64 / (p - 1) as f64).exp();
                        v.push((x.round() as usize).clamp(lo, m));
                    }
                }
                v
            }
            EpsBarGrid::Explicit(ls) => ls.iter().map(|&l| l.clamp(lo, m + 1)).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One fitted grid member.
#[derive(Clone, Debug)]
pub struct GridFit<T> {
    pub l: usize,
    pub epsilon_bar: T,
    pub kernel: SymmetricKernel<T>,
    pub validation_loss: T,
    pub report: SolveReport<T>,
}

/// Result of the sample-split selection.
#[derive(Clone, Debug)]
pub struct Aggregate<T> {
    pub kernel: SymmetricKernel<T>,
    pub chosen_l: usize,
    pub fits: Vec<GridFit<T>>,
}

/// `ε̄_l = 1/λ_l`, zero for `l > m`.
pub fn epsbar_for<T: Real>(spec: &SpectralDecomposition<T>, l: usize) -> T {
    if l > spec.m() {
        T::zero()
    } else {
        T::one() / spec.lambda(l)
    }
}

/// Fits `Ŝ_l` with `ε̄ = 1/λ_l` on the first `⌊n/2⌋ + 1` samples and returns
/// the fit with the smallest empirical loss on the rest (ties to the smallest
/// `l`). With `warm_start` the grid is solved sequentially in increasing `l`,
/// each solve starting from the previous state; otherwise fits run in
/// parallel from zero.
pub fn aggregate_epsbar<T: Real>(
    data: &Dataset<T>,
    spec: &SpectralDecomposition<T>,
    base_cfg: &ConvexConfig<T>,
    grid: &EpsBarGrid,
    warm_start: bool,
) -> Result<Aggregate<T>> {
    let n = data.n();
    if n < 4 {
        return Err(invalid("n", "sample splitting needs n ≥ 4"));
    }
    let n_train = n / 2 + 1;
    if n_train >= n {
        return Err(invalid("n", "degenerate split"));
    }
    let (train, valid) = data.split_at(n_train)?;
    let levels = grid.levels(spec.k0(), spec.m());
    if levels.is_empty() {
        return Err(invalid("grid", "no admissible levels"));
    }
    let problem = ConvexProblem::new(&train, spec)?;
    let fit_one = |l: usize, warm: Option<&WarmStart<T>>| -> Result<(GridFit<T>, WarmStart<T>)> {
        let eb = epsbar_for(spec, l);
        let cfg = ConvexConfig {
            epsilon_bar: eb,
            ..*base_cfg
        };
        let (kernel, report, state) = problem.solve_warm(&cfg, warm)?;
        let validation_loss = empirical_loss(&kernel, &valid)?;
        Ok((
            GridFit {
                l,
                epsilon_bar: eb,
                kernel,
                validation_loss,
                report,
            },
            state,
        ))
    };
    let fits: Vec<GridFit<T>> = if warm_start {
        let mut out = Vec::with_capacity(levels.len());
        let mut state: Option<WarmStart<T>> = None;
        for &l in &levels {
            let (fit, st) = fit_one(l, state.as_ref())?;
            out.push(fit);
            state = Some(st);
        }
        out
    } else {
        levels
            .par_iter()
            .map(|&l| fit_one(l, None).map(|x| x.0))
            .collect::<Result<Vec<_>>>()?
    };
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.validation_loss < fits[best].validation_loss {
            best = i;
        }
    }
    Ok(Aggregate {
        kernel: fits[best].kernel.clone(),
        chosen_l: fits[best].l,
        fits,
    })
}

//! Rank- and eigenbasis-restricted least squares and penalized selection of
//! `(r, l)`.
//!
//! The class is `{T^a : T = Σ_{i,j≤l} c_ij φ_i ⊗ φ_j, rank T ≤ r, ‖T‖₂ ≤ am}`.
//! It is not convex; we run projected gradient on the `l × l` coefficient
//! matrix `C` (gradient of the truncated loss, then rank hard-thresholding,
//! then projection on the Frobenius ball) from several seeded starts.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::graph::SpectralDecomposition;
use crate::kernel::{truncate, SymmetricKernel};
use crate::linalg::{sym_eigen, Mat};
use crate::rng::{derive_seed, rng};
use crate::sampling::Dataset;
use crate::scalar::{clamp_abs, max, min, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictedConfig<T> {
    pub r: usize,
    pub l: usize,
    pub a: T,
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative loss decrease regarded as stalled.
    pub tol: T,
    pub seed: u64,
}

impl<T: Real> RestrictedConfig<T> {
    pub fn new(r: usize, l: usize, a: T) -> Self {
        Self {
            r,
            l,
            a,
            restarts: 8,
            max_iters: 5_000,
            tol: T::lit(1e-12),
            seed: 0,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.r < 1 || self.r > m {
            return Err(invalid("r", format!("must lie in 1..={m}")));
        }
        if self.l < 1 || self.l > m {
            return Err(invalid("l", format!("must lie in 1..={m}")));
        }
        if !(self.a > T::zero()) {
            return Err(invalid("a", "must be positive"));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(invalid("restarts/max_iters", "must be positive"));
        }
        if !(self.tol > T::zero()) {
            return Err(invalid("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Result of [`restricted_ls`].
#[derive(Clone, Debug)]
pub struct RestrictedFit<T> {
    /// `T^a`.
    pub kernel: SymmetricKernel<T>,
    /// The untruncated `T`.
    pub pre_truncation: SymmetricKernel<T>,
    /// Coefficients of `T` on the leading `l` eigenvectors.
    pub coefficients: Mat<T>,
    pub loss: T,
}

struct Cells<T> {
    /// `(u, v, count, sum of y, sum of y²)` over distinct unordered pairs.
    cells: Vec<(usize, usize, T, T, T)>,
    n: T,
    max_count: T,
}

impl<T: Real> Cells<T> {
    fn new(data: &Dataset<T>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for o in data.samples() {
            let key = if o.u <= o.v { (o.u, o.v) } else { (o.v, o.u) };
            let e = map.entry(key).or_insert((T::zero(), T::zero(), T::zero()));
            e.0 += T::one();
            e.1 += o.y;
            e.2 += o.y * o.y;
        }
        let max_count = map.values().fold(T::zero(), |acc, e| max(acc, e.0));
        Self {
            cells: map.into_iter().map(|((u, v), (c, s, q))| (u, v, c, s, q)).collect(),
            n: T::from_usize_lossy(data.n()),
            max_count,
        }
    }

    /// Loss of `T^a`.
    fn loss(&self, t: &Mat<T>, a: T) -> T {
        let mut acc = T::zero();
        for &(u, v, c, s, q) in &self.cells {
            let x = clamp_abs(t[(u, v)], a);
            acc += q - T::lit(2.0) * x * s + c * x * x;
        }
        max(acc, T::zero()) / self.n
    }

    /// Gradient of `T ↦ loss(T^a)` as a symmetric matrix; the clamp is
    /// differentiated as the identity on `[−a, a]` and zero outside.
    fn grad(&self, t: &Mat<T>, a: T, m: usize) -> Mat<T> {
        let mut g = Mat::zeros(m, m);
        let k = T::lit(2.0) / self.n;
        for &(u, v, c, s, _) in &self.cells {
            let x = t[(u, v)];
            if x.abs() > a {
                continue;
            }
            let d = k * (c * x - s);
            if u == v {
                g[(u, u)] += d;
            } else {
                let h = d * T::lit(0.5);
                g[(u, v)] += h;
                g[(v, u)] += h;
            }
        }
        g
    }
}

/// Keeps the `k` eigenvalues of largest magnitude of a symmetric matrix.
fn hard_threshold<T: Real>(c: &Mat<T>, k: usize) -> Result<Mat<T>> {
    let n = c.rows();
    if k >= n {
        return Ok(c.clone());
    }
    let eig = sym_eigen(c)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.values[j]
            .abs()
            .partial_cmp(&eig.values[i].abs())
            .expect("finite")
            .then(i.cmp(&j))
    });
    let keep = &order[..k];
    let mut out = Mat::zeros(n, n);
    for &idx in keep {
        let mu = eig.values[idx];
        for i in 0..n {
            let vi = eig.vectors[(i, idx)] * mu;
            for j in 0..n {
                out[(i, j)] += vi * eig.vectors[(j, idx)];
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

fn project<T: Real>(c: &Mat<T>, rank: usize, radius: T) -> Result<Mat<T>> {
    let mut p = hard_threshold(c, rank)?;
    let f = p.frobenius();
    if f > radius {
        p = p.scale(radius / f);
    }
    Ok(p)
}

/// Cheap problems (`l ≤ 4`) always get at least this many starts.
const SMALL_PROBLEM_STARTS: usize = 64;

/// `Ŝ_{r,l,a}`: best local minimum of the truncated empirical loss found from
/// `restarts` starts (a spectral start plus seeded random ones; at least
/// 64 when `l ≤ 4`).
pub fn restricted_ls<T: Real>(
    data: &Dataset<T>,
    spec: &SpectralDecomposition<T>,
    cfg: &RestrictedConfig<T>,
) -> Result<RestrictedFit<T>> {
    let m = spec.m();
    cfg.validate(m)?;
    if data.m() != m {
        return Err(crate::error::Error::Dimension {
            expected: m,
            found: data.m(),
        });
    }
    let l = cfg.l;
    let rank = cfg.r.min(l);
    let a = cfg.a;
    let radius = a * T::from_usize_lossy(m);
    let cells = Cells::new(data);
    let phi = Mat::from_fn(m, l, |i, j| spec.eigenvectors()[(i, j)]);
    let to_t = |c: &Mat<T>| {
        let mut t = phi.matmul(c).matmul_t(&phi);
        t.symmetrize();
        t
    };
    let lip = T::lit(2.0) * cells.max_count / cells.n;
    let eta0 = if lip > T::zero() { T::one() / lip } else { T::one() };

    let n_starts = if l <= 4 { cfg.restarts.max(SMALL_PROBLEM_STARTS) } else { cfg.restarts };
    let mut starts: Vec<Mat<T>> = Vec::with_capacity(n_starts);
    {
        // Spectral start: rescaled observed averages projected on the class.
        let mut avg = Mat::zeros(m, m);
        let w = T::from_usize_lossy(m * m) / cells.n;
        for &(u, v, _, s, _) in &cells.cells {
            // Unordered off-diagonal pairs are hit twice as often.
            let x = if u == v { s * w } else { s * w * T::lit(0.5) };
            avg[(u, v)] = x;
            avg[(v, u)] = x;
        }
        let c0 = phi.t_matmul(&avg.matmul(&phi));
        starts.push(project(&c0, rank, radius)?);
    }
    for k in 1..n_starts {
        let mut g = rng(derive_seed(cfg.seed, &[k as u64]));
        let mut c = Mat::from_fn(l, l, |_, _| {
            let z: f64 = g.sample(StandardNormal);
            T::lit(z)
        });
        c.symmetrize();
        let c = hard_threshold(&c, rank)?;
        let f = c.frobenius();
        // Every other start sits on the boundary of the ball.
        let target = if k % 2 == 0 { radius } else { radius * T::lit(g.random::<f64>()) };
        let c = if f > T::zero() { c.scale(target / f) } else { c };
        starts.push(project(&c, rank, radius)?);
    }

    let mut best: Option<(T, Mat<T>)> = None;
    for c_init in starts {
        let mut c = c_init;
        let mut t = to_t(&c);
        let mut loss = cells.loss(&t, a);
        let mut eta = eta0;
        for _ in 0..cfg.max_iters {
            let g_t = cells.grad(&t, a, m);
            let g_c = phi.t_matmul(&g_t.matmul(&phi));
            let mut accepted = false;
            let mut trial_eta = eta;
            for _ in 0..40 {
                let mut next = c.clone();
                next.axpy(-trial_eta, &g_c);
                next.symmetrize();
                let next = project(&next, rank, radius)?;
                let t_next = to_t(&next);
                let l_next = cells.loss(&t_next, a);
                if l_next <= loss {
                    let improvement = loss - l_next;
                    c = next;
                    t = t_next;
                    let done = improvement <= cfg.tol * max(loss, T::lit(1e-300));
                    loss = l_next;
                    accepted = !done;
                    break;
                }
                trial_eta *= T::lit(0.5);
            }
            // Allow the step to recover after backtracking.
            eta = min(eta0, trial_eta * T::lit(2.0));
            if !accepted {
                break;
            }
        }
        if best.as_ref().map_or(true, |b| loss < b.0) {
            best = Some((loss, c));
        }
    }
    let (loss, coefficients) = best.expect("at least one restart");
    let pre = SymmetricKernel::from_symmetric(to_t(&coefficients));
    let kernel = truncate(&pre, a);
    Ok(RestrictedFit {
        kernel,
        pre_truncation: pre,
        coefficients,
        loss,
    })
}

/// Penalty constants and grid for model selection.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig<T> {
    pub big_k: T,
    pub big_a: T,
    pub a: T,
    pub grid: Vec<(usize, usize)>,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl<T: Real> SelectionConfig<T> {
    pub fn new(a: T, grid: Vec<(usize, usize)>) -> Self {
        Self {
            big_k: T::one(),
            big_a: T::one(),
            a,
            grid,
            restarts: 8,
            max_iters: 5_000,
            seed: 0,
        }
    }
}

/// `K a² (r∧l) l/n · log(A n m/((r∧l) l))`.
pub fn selection_penalty<T: Real>(big_k: T, big_a: T, a: T, r: usize, l: usize, n: usize, m: usize) -> T {
    let rl = T::from_usize_lossy(r.min(l));
    let lt = T::from_usize_lossy(l);
    let nt = T::from_usize_lossy(n);
    let mt = T::from_usize_lossy(m);
    big_k * a * a * rl * lt / nt * (big_a * nt * mt / (rl * lt)).ln()
}

/// A selected model.
#[derive(Clone, Debug)]
pub struct Selection<T> {
    /// `r̂ ∧ l̂`.
    pub r_hat: usize,
    pub l_hat: usize,
    pub fit: RestrictedFit<T>,
    /// `(r∧l, l, loss, penalty)` for every distinct cell.
    pub table: Vec<(usize, usize, T, T)>,
}

/// Minimizes loss plus [`selection_penalty`] over the grid. Cells are
/// deduplicated by `(r∧l, l)` and scanned in increasing `(l, r∧l)`, so ties go
/// to the simplest model.
pub fn select_model<T: Real>(
    data: &Dataset<T>,
    spec: &SpectralDecomposition<T>,
    cfg: &SelectionConfig<T>,
) -> Result<Selection<T>> {
    if cfg.grid.is_empty() {
        return Err(invalid("grid", "must not be empty"));
    }
    if !(cfg.big_k > T::zero()) || !(cfg.big_a > T::zero()) {
        return Err(invalid("K/A", "must be positive"));
    }
    let mut cells: Vec<(usize, usize)> = cfg.grid.iter().map(|&(r, l)| (l, r.min(l))).collect();
    cells.sort_unstable();
    cells.dedup();
    let n = data.n();
    let m = spec.m();
    let mut best: Option<(T, usize, usize, RestrictedFit<T>)> = None;
    let mut table = Vec::with_capacity(cells.len());
    for (l, r) in cells {
        let rc = RestrictedConfig {
            restarts: cfg.restarts,
            max_iters: cfg.max_iters,
            seed: derive_seed(cfg.seed, &[r as u64, l as u64]),
            ..RestrictedConfig::new(r, l, cfg.a)
        };
        let fit = restricted_ls(data, spec, &rc)?;
        let pen = selection_penalty(cfg.big_k, cfg.big_a, cfg.a, r, l, n, m);
        table.push((r, l, fit.loss, pen));
        let score = fit.loss + pen;
        if best.as_ref().map_or(true, |b| score < b.0) {
            best = Some((score, r, l, fit));
        }
    }
    let (_, r_hat, l_hat, fit) = best.expect("nonempty grid");
    Ok(Selection {
        r_hat,
        l_hat,
        fit,
        table,
    })
}

/// The two upper-rate expressions for `Ŝ_{r,l,a}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictedRate<T> {
    /// `a²(r∧l)l/n · log(Anm/((r∧l)l)) ∨ ρ²/λ_{l+1}`.
    pub oracle: T,
    /// `4a²l²/m² + 2ρ²/λ_{l+1}`.
    pub trivial: T,
}

#[allow(clippy::too_many_arguments)]
pub fn restricted_oracle_rate<T: Real>(
    r: usize,
    l: usize,
    rho: T,
    a: T,
    n: usize,
    m: usize,
    big_a: T,
    spec: &SpectralDecomposition<T>,
) -> Result<RestrictedRate<T>> {
    if l < 1 || l > m {
        return Err(invalid("l", format!("must lie in 1..={m}")));
    }
    let bias = rho * rho / spec.lambda(l + 1);
    let variance = selection_penalty(T::one(), big_a, a, r, l, n, m);
    let lt = T::from_usize_lossy(l);
    let mt = T::from_usize_lossy(m);
    Ok(RestrictedRate {
        oracle: max(variance, bias),
        trivial: T::lit(4.0) * a * a * lt * lt / (mt * mt) + T::lit(2.0) * bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, smoothing_operator, WeightedGraph};
    use crate::sampling::{draw_dataset, empirical_loss, Noise, Sample};
    use approx::assert_relative_eq;

    fn path_spec(m: usize) -> SpectralDecomposition<f64> {
        smoothing_operator(&laplacian(&WeightedGraph::path(m)), 1.0).unwrap()
    }

    #[test]
    fn penalty_arithmetic() {
        let p = selection_penalty(1.0, 1.0, 1.0, 2, 3, 100, 10);
        assert_relative_eq!(p, 0.06 * (1000.0f64 / 6.0).ln(), max_relative = 1e-12);
        assert_relative_eq!(p, 0.3069, max_relative = 1e-3);
    }

    #[test]
    fn rates_at_full_basis() {
        let spec = path_spec(10);
        let r = restricted_oracle_rate(2, 10, 1.0, 1.0, 1000, 10, 1.0, &spec).unwrap();
        assert_relative_eq!(r.trivial, 4.0);
        assert_relative_eq!(r.oracle, 2.0 * 10.0 / 1000.0 * (1000.0f64 / 2.0).ln(), max_relative = 1e-12);
    }

    #[test]
    fn noiseless_member_is_fit_exactly() {
        let spec = path_spec(6);
        let mut c = Mat::zeros(2, 2);
        c[(0, 0)] = 1.0;
        c[(0, 1)] = 0.5;
        c[(1, 0)] = 0.5;
        c[(1, 1)] = 0.25;
        let s = SymmetricKernel::from_symmetric(spec.from_basis(&c));
        let samples = (0..36)
            .map(|k| Sample { u: k / 6, v: k % 6, y: s.get(k / 6, k % 6) })
            .collect();
        let data = Dataset::new(samples, 6, 1.0).unwrap();
        let fit = restricted_ls(&data, &spec, &RestrictedConfig::new(1, 2, 1.0)).unwrap();
        assert!(fit.loss <= 1e-10, "loss {}", fit.loss);
        assert_relative_eq!(fit.loss, empirical_loss(&fit.kernel, &data).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn loss_decreases_along_nested_classes() {
        let spec = path_spec(6);
        let s = SymmetricKernel::from_symmetric(Mat::from_fn(6, 6, |u, v| 0.1 * ((u * v) as f64).cos()));
        let data = draw_dataset(&s, 1.0, Noise::Sign(0.3), 80, 4).unwrap();
        let mut prev = f64::INFINITY;
        for l in 1..=6 {
            let fit = restricted_ls(&data, &spec, &RestrictedConfig::new(6, l, 1.0)).unwrap();
            assert!(fit.loss <= prev + 1e-8, "l={l}: {} > {prev}", fit.loss);
            prev = fit.loss;
        }
    }

    #[test]
    fn single_cell_selection() {
        let spec = path_spec(5);
        let s = SymmetricKernel::from_symmetric(Mat::from_fn(5, 5, |u, v| 0.1 * (u + v) as f64));
        let data = draw_dataset(&s, 1.0, Noise::Sign(0.2), 50, 1).unwrap();
        let sel = select_model(&data, &spec, &SelectionConfig::new(1.0, vec![(3, 2)])).unwrap();
        assert_eq!((sel.r_hat, sel.l_hat), (2, 2));
        assert_eq!(sel.table.len(), 1);
    }
}

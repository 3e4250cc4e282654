//! Closed-form rates: minimax lower bounds, the cutoffs `l̄` and `l̃`, the
//! adaptive upper rate `Δ_n`, the power-spectrum example and the basis
//! coherence quantities `Q_p`, `Q_p(l)` and `d`.
//!
//! `λ_{m+1} = +∞`, so `ρ²/λ_{m+1} = 0`; and `ρ²/0 = +∞` for zero eigenvalues.

use crate::error::{invalid, Result};
use crate::graph::SpectralDecomposition;
use crate::scalar::{max, min, Real};

/// Sample size, graph size and class parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemSize<T> {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub rho: T,
    pub a: T,
}

impl<T: Real> ProblemSize<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.r == 0 {
            return Err(invalid("n/m/r", "must be positive"));
        }
        if self.r > self.m {
            return Err(invalid("r", "must not exceed m"));
        }
        if !(self.rho >= T::zero()) || !(self.a > T::zero()) {
            return Err(invalid("rho/a", "rho must be nonnegative and a positive"));
        }
        Ok(())
    }
}

fn t<T: Real>(x: usize) -> T {
    T::from_usize_lossy(x)
}

/// `ρ²/λ_l` with the conventions above.
fn bias<T: Real>(rho: T, lambda: T) -> T {
    let r2 = rho * rho;
    if lambda.is_infinite() || r2 == T::zero() {
        T::zero()
    } else if lambda <= T::zero() {
        T::infinity()
    } else {
        r2 / lambda
    }
}

/// `a²(r∧l)l/n`.
fn variance<T: Real>(ps: &ProblemSize<T>, l: usize) -> T {
    ps.a * ps.a * t::<T>(ps.r.min(l) * l) / t::<T>(ps.n)
}

/// `max_j ‖√m φ_j‖²_{L_p(Π)}`.
pub fn q_p<T: Real>(spec: &SpectralDecomposition<T>, p: T) -> Result<T> {
    if !(p >= T::lit(2.0)) {
        return Err(invalid("p", "must be at least 2"));
    }
    let m = spec.m();
    let mt = t::<T>(m);
    let scale = mt.powf(p / T::lit(2.0) - T::one());
    let mut best = T::zero();
    for j in 0..m {
        let s: T = (0..m).map(|v| spec.eigenvectors()[(v, j)].abs().powf(p)).sum();
        best = max(best, (scale * s).powf(T::lit(2.0) / p));
    }
    Ok(best)
}

/// `‖l^{-1} Σ_{j≤l} (√m φ_j)²‖_{L_{p/2}(Π)}`.
pub fn q_p_partial<T: Real>(spec: &SpectralDecomposition<T>, p: T, l: usize) -> Result<T> {
    if !(p >= T::lit(2.0)) {
        return Err(invalid("p", "must be at least 2"));
    }
    let m = spec.m();
    if l < 1 || l > m {
        return Err(invalid("l", format!("must lie in 1..={m}")));
    }
    let mt = t::<T>(m);
    let half = p / T::lit(2.0);
    let mut acc = T::zero();
    for v in 0..m {
        let row = spec.eigenvectors().row(v);
        let w: T = row[..l].iter().map(|&x| mt * x * x).sum::<T>() / t::<T>(l);
        acc += w.powf(half);
    }
    Ok((acc / mt).powf(T::one() / half))
}

/// `max_v #{j : |φ_j(v)| > tol}`.
pub fn sparsity_d<T: Real>(spec: &SpectralDecomposition<T>, tol: T) -> usize {
    let m = spec.m();
    (0..m)
        .map(|v| spec.eigenvectors().row(v).iter().filter(|x| x.abs() > tol).count())
        .max()
        .unwrap_or(0)
}

/// `l₀ = k₀ ∧ 32`.
pub fn l0<T: Real>(spec: &SpectralDecomposition<T>) -> usize {
    spec.k0().min(32).min(spec.m().max(1))
}

fn grid_max<T: Real>(lo: usize, hi: usize, f: impl Fn(usize) -> T) -> T {
    (lo..=hi).map(f).fold(T::zero(), max)
}

/// Third term of the dense lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DenseTerm<T> {
    /// `(p−1)^{-1} Q_p^{-2} a²(r∧l)/l · m^{−4/p}` for the given `p` and `Q_p`.
    General { p: T, q_p: T },
    /// `Q_{log m}^{-2} a²(r∧l)/l · 1/log m` (the `p = log m` variant).
    LogM { q_p: T },
}

/// `δ_n^(1)` (or its `p = log m` variant `δ_n^(2)`).
pub fn lower_dense<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    term: DenseTerm<T>,
) -> Result<T> {
    ps.validate()?;
    let m = spec.m();
    let mt = t::<T>(m);
    let third = |l: usize| -> T {
        let base = ps.a * ps.a * t::<T>(ps.r.min(l)) / t::<T>(l);
        match term {
            DenseTerm::General { p, q_p } => {
                base / ((p - T::one()) * q_p * q_p * mt.powf(T::lit(4.0) / p))
            }
            DenseTerm::LogM { q_p } => base / (q_p * q_p * mt.ln()),
        }
    };
    if let DenseTerm::General { p, .. } = term {
        if !(p > T::one()) {
            return Err(invalid("p", "must exceed 1"));
        }
    }
    Ok(grid_max(l0(spec), m, |l| {
        min(min(variance(ps, l), bias(ps.rho, spec.lambda(l))), third(l))
    }))
}

/// `δ_n^(4) = max_l [a²(r∧l)l/n ∧ ρ²/λ_l ∧ a²l²/(d m² log m)]`.
pub fn lower_sparse<T: Real>(ps: &ProblemSize<T>, spec: &SpectralDecomposition<T>, d: usize) -> Result<T> {
    ps.validate()?;
    let m = spec.m();
    if d < 1 || m < 2 {
        return Err(invalid("d/m", "need d ≥ 1 and m ≥ 2"));
    }
    let mt = t::<T>(m);
    let k = ps.a * ps.a / (t::<T>(d) * mt.ln() * mt * mt);
    Ok(grid_max(l0(spec), m, |l| {
        let lt = t::<T>(l);
        min(min(variance(ps, l), bias(ps.rho, spec.lambda(l))), k * lt * lt)
    }))
}

/// `l̄`, the two sides of its characterization, and `δ_n^(3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LBar<T> {
    /// `max{l ∈ [l₀, m] : (r∧l) l λ_l ≤ ρ²n/a²}`, or `l₀ − 1` if the set is empty.
    pub l_bar: usize,
    /// Whether the defining set was empty.
    pub empty: bool,
    /// `a²(r∧l̄)l̄/n ∨ ρ²/λ_{l̄+1}` (the raw grid maximum when `empty`).
    pub closed_form: T,
    /// `max_{l₀≤l≤m} [a²(r∧l)l/n ∧ ρ²/λ_l]` by enumeration.
    pub grid: T,
    /// `L = ⌊Q_p^{-1} m^{−2/p} √(n/(p−1))⌋ ∧ m`.
    pub big_l: usize,
    /// `δ_n^(3)`, the grid maximum restricted to `l ≤ L`.
    pub delta3: T,
}

pub fn l_bar_and_delta3<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    p: T,
    q_p: T,
) -> Result<LBar<T>> {
    ps.validate()?;
    if !(p > T::one()) || !(q_p > T::zero()) {
        return Err(invalid("p/Q_p", "need p > 1 and Q_p > 0"));
    }
    let m = spec.m();
    let lo = l0(spec);
    let cap = ps.rho * ps.rho * t::<T>(ps.n) / (ps.a * ps.a);
    let admissible = |l: usize| t::<T>(ps.r.min(l) * l) * spec.lambda(l) <= cap;
    let l_bar = (lo..=m).filter(|&l| admissible(l)).max();
    let inner = |l: usize| min(variance(ps, l), bias(ps.rho, spec.lambda(l)));
    let grid = grid_max(lo, m, inner);
    let (l_bar, empty, closed_form) = match l_bar {
        Some(lb) => (lb, false, max(variance(ps, lb), bias(ps.rho, spec.lambda(lb + 1)))),
        None => (lo - 1, true, grid),
    };
    let mt = t::<T>(m);
    let raw = (T::one() / (q_p * mt.powf(T::lit(2.0) / p)))
        * (t::<T>(ps.n) / (p - T::one())).sqrt();
    let big_l = raw.floor().to_usize().unwrap_or(usize::MAX).min(m);
    let delta3 = if big_l >= lo { grid_max(lo, big_l, inner) } else { T::zero() };
    Ok(LBar {
        l_bar,
        empty,
        closed_form,
        grid,
        big_l,
        delta3,
    })
}

/// `l̃`, `Δ_n` by enumeration and by the characterization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveRate<T> {
    /// `min{l : (r∧l) l λ_{l+1} log(Anm/((r∧l)l)) ≥ ρ²n/a²}`.
    pub l_tilde: usize,
    /// `min_l [a²(r∧l)l/n · log(Anm/((r∧l)l)) ∨ ρ²/λ_{l+1}]`.
    pub delta_n: T,
    /// Minimizing `l` of the enumeration (smallest on ties).
    pub argmin: usize,
    /// `V(l̃) ∧ ρ²/λ_{l̃}` with `V` the first term.
    pub closed_form: T,
}

pub fn adaptive_upper_rate<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    big_a: T,
) -> Result<AdaptiveRate<T>> {
    ps.validate()?;
    if !(big_a > T::zero()) {
        return Err(invalid("A", "must be positive"));
    }
    let m = spec.m();
    let nm = t::<T>(ps.n) * t::<T>(m);
    let logf = |l: usize| (big_a * nm / t::<T>(ps.r.min(l) * l)).ln();
    let first = |l: usize| variance(ps, l) * logf(l);
    let second = |l: usize| bias(ps.rho, spec.lambda(l + 1));
    let mut delta_n = T::infinity();
    let mut argmin = 1;
    for l in 1..=m {
        let v = max(first(l), second(l));
        if v < delta_n {
            delta_n = v;
            argmin = l;
        }
    }
    let cap = ps.rho * ps.rho * t::<T>(ps.n) / (ps.a * ps.a);
    let l_tilde = (1..=m)
        .find(|&l| t::<T>(ps.r.min(l) * l) * spec.lambda(l + 1) * logf(l) >= cap)
        .unwrap_or(m);
    let closed_form = if l_tilde == 1 {
        first(1)
    } else {
        min(first(l_tilde), second(l_tilde - 1))
    };
    Ok(AdaptiveRate {
        l_tilde,
        delta_n,
        argmin,
        closed_form,
    })
}

/// `((a²ρ^{1/β}r/n)^{2β/(2β+1)} ∧ (a²ρ^{2/β}/n)^{β/(β+1)} ∧ a²rm/n) ∨ a²/n`.
pub fn beta_example_rate<T: Real>(ps: &ProblemSize<T>, beta: T) -> Result<T> {
    ps.validate()?;
    if !(beta > T::lit(0.5)) {
        return Err(invalid("beta", "must exceed 1/2"));
    }
    let (a2, n, r, m) = (ps.a * ps.a, t::<T>(ps.n), t::<T>(ps.r), t::<T>(ps.m));
    let one = T::one();
    let two = T::lit(2.0);
    let first = (a2 * ps.rho.powf(one / beta) * r / n).powf(two * beta / (two * beta + one));
    let second = (a2 * ps.rho.powf(two / beta) / n).powf(beta / (beta + one));
    let third = a2 * r * m / n;
    Ok(max(min(min(first, second), third), a2 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use approx::assert_relative_eq;

    fn squares(m: usize) -> SpectralDecomposition<f64> {
        SpectralDecomposition::diagonal((1..=m).map(|l| (l * l) as f64).collect()).unwrap()
    }

    fn flat_basis(m: usize) -> SpectralDecomposition<f64> {
        // Normalized Walsh–Hadamard basis; m must be a power of two.
        let h = Mat::from_fn(m, m, |i, j| {
            let s = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            s / (m as f64).sqrt()
        });
        SpectralDecomposition::new((1..=m).map(|l| (l * l) as f64).collect(), h).unwrap()
    }

    #[test]
    fn coherence_quantities() {
        let canon = squares(8);
        assert_eq!(sparsity_d(&canon, 1e-12), 1);
        let flat = flat_basis(8);
        for &p in &[2.0, 3.0, 8.0] {
            assert_relative_eq!(q_p(&flat, p).unwrap(), 1.0, epsilon = 1e-12);
            for l in 1..=8 {
                assert!(q_p_partial(&canon, p, l).unwrap() <= 8.0 / l as f64 + 1e-12);
            }
        }
        assert_eq!(sparsity_d(&flat, 1e-12), 8);
    }

    #[test]
    fn zero_rho_kills_lower_bounds() {
        let spec = squares(16);
        let ps = ProblemSize { n: 1000, m: 16, r: 2, rho: 0.0, a: 1.0 };
        assert_eq!(lower_dense(&ps, &spec, DenseTerm::LogM { q_p: 1.0 }).unwrap(), 0.0);
        assert_eq!(lower_sparse(&ps, &spec, 1).unwrap(), 0.0);
    }

    #[test]
    fn dense_bound_matches_direct_loop() {
        let m = 64;
        let spec = squares(m);
        let ps = ProblemSize { n: 10_000, m, r: 2, rho: 1.0, a: 1.0 };
        let p = (m as f64).ln();
        let got = lower_dense(&ps, &spec, DenseTerm::General { p, q_p: 1.0 }).unwrap();
        let mut want = 0.0f64;
        for l in 1..=m {
            let lf = l as f64;
            let rl = 2.0f64.min(lf);
            let v = (rl * lf / 1e4).min(1.0 / (lf * lf)).min(rl / lf / (p - 1.0) / (m as f64).powf(4.0 / p));
            want = want.max(v);
        }
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }

    #[test]
    fn l_bar_example() {
        let spec = squares(50);
        let ps = ProblemSize { n: 64, m: 50, r: 1, rho: 1.0, a: 1.0 };
        let lb = l_bar_and_delta3(&ps, &spec, 2.0, 1.0).unwrap();
        assert_eq!(lb.l_bar, 4);
        assert_relative_eq!(lb.closed_form, lb.grid);
        assert_relative_eq!(lb.grid, 4.0 / 64.0);
        let ps = ProblemSize { n: 1 << 40, ..ps };
        assert_eq!(l_bar_and_delta3(&ps, &spec, 2.0, 1.0).unwrap().l_bar, 50);
    }

    #[test]
    fn adaptive_rate_zero_rho() {
        let spec = squares(20);
        let ps = ProblemSize { n: 1000, m: 20, r: 3, rho: 0.0, a: 1.0 };
        let ar = adaptive_upper_rate(&ps, &spec, 1.0).unwrap();
        assert_eq!(ar.argmin, 1);
        assert_relative_eq!(ar.delta_n, 1.0 / 1000.0 * (20_000.0f64).ln());
        assert_relative_eq!(ar.closed_form, ar.delta_n);
    }

    #[test]
    fn beta_rate_example() {
        let ps = ProblemSize { n: 10_000, m: 1_000_000, r: 1, rho: 1.0, a: 1.0 };
        assert_relative_eq!(beta_example_rate(&ps, 1.0).unwrap(), 1e-4f64.powf(2.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(beta_example_rate(&ps, 1.0).unwrap(), 2.154e-3, max_relative = 1e-3);
        assert!(beta_example_rate(&ps, 0.5).is_err());
    }
}

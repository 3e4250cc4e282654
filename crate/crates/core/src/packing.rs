//! Packing sets of low-rank smooth kernels used in minimax lower bounds.
//!
//! A code `σ ∈ {−1,1}^{l′×w}` is placed as an off-diagonal block in the
//! coordinates of the leading `l` eigenvectors of `W`; the resulting kernels
//! `K_σ` are pairwise far apart in `L₂(Π²)` while the induced binary-response
//! distributions stay close in Kullback–Leibler divergence.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::SpectralDecomposition;
use crate::kernel::SymmetricKernel;
use crate::linalg::Mat;
use crate::rates::{l0, q_p_partial, sparsity_d, ProblemSize};
use crate::rng::rng;
use crate::scalar::{max, min, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PackingMode {
    Dense,
    Sparse,
}

impl FromStr for PackingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            other => Err(Error::Parse(format!("unknown packing mode `{other}`"))),
        }
    }
}

impl fmt::Display for PackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dense => "dense",
            Self::Sparse => "sparse",
        })
    }
}

/// Block layout of the code inside the coefficient matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `r ≤ l″`: `⌊l″/r⌋` repeated `l′×r` blocks.
    Repeated,
    /// `r > l″`: a single `l′×l″` block.
    Single,
}

/// Coordinates of entries below this magnitude count as zero for `d`.
pub const SPARSITY_TOL: f64 = 1e-10;

/// The three constraints on the entry magnitude `κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaTerms<T> {
    /// `(1/16) a (m/l) √(rl/n)`: keeps the KL divergences small.
    pub information: T,
    /// Keeps most `K_σ` inside the sup-norm ball.
    pub entry: T,
    /// `(m/l) 4ρ/√λ_l`: keeps the Sobolev norm below `ρ`.
    pub sobolev: T,
}

impl<T: Real> KappaTerms<T> {
    pub fn kappa(&self) -> T {
        min(min(self.information, self.entry), self.sobolev)
    }
}

fn check_l<T: Real>(spec: &SpectralDecomposition<T>, l: usize, mode: PackingMode) -> Result<()> {
    let m = spec.m();
    let lo = match mode {
        PackingMode::Dense => l0(spec).max(32),
        PackingMode::Sparse => l0(spec).max(2),
    };
    if l < lo || l > m {
        return Err(invalid("l", format!("must lie in {lo}..={m} in {mode} mode")));
    }
    Ok(())
}

pub fn kappa_terms<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    l: usize,
    p: T,
    mode: PackingMode,
) -> Result<KappaTerms<T>> {
    ps.validate()?;
    if l < 1 || l > spec.m() {
        return Err(invalid("l", "out of range"));
    }
    let lambda = spec.lambda(l);
    if !(lambda > T::zero()) {
        return Err(invalid("l", "λ_l = 0 leaves the Sobolev constraint undefined"));
    }
    let f = |x: usize| T::from_usize_lossy(x);
    let (m, lt, n) = (f(spec.m()), f(l), f(ps.n));
    let r = f(ps.r.min(l));
    let ratio = m / lt;
    let information = T::lit(1.0 / 16.0) * ps.a * ratio * (r * lt / n).sqrt();
    let spread = match mode {
        PackingMode::Dense => (r / lt).sqrt(),
        PackingMode::Sparse => T::one() / f(sparsity_d(spec, T::lit(SPARSITY_TOL)).max(1)).sqrt(),
    };
    let two = T::lit(2.0);
    let entry = two.powf(-(T::one() + two / p)) / (p - T::one()).sqrt() / q_p_partial(spec, p, l)?
        * ratio
        * ps.a
        * spread
        / m.powf(two / p);
    let sobolev = ratio * T::lit(4.0) * ps.rho / lambda.sqrt();
    Ok(KappaTerms {
        information,
        entry,
        sobolev,
    })
}

/// `κ`, the minimum of the three constraint values.
pub fn kappa_schedule<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    l: usize,
    p: T,
    mode: PackingMode,
) -> Result<T> {
    Ok(kappa_terms(ps, spec, l, p, mode)?.kappa())
}

/// Codes, kernels and construction diagnostics.
#[derive(Clone, Debug)]
pub struct PackingSet<T> {
    pub l: usize,
    pub l_prime: usize,
    pub l_double_prime: usize,
    pub r: usize,
    pub a: T,
    pub kappa: T,
    pub mode: PackingMode,
    pub regime: Regime,
    /// Code width `w`: `r` or `l″`.
    pub width: usize,
    /// Minimum pairwise Hamming distance enforced, `⌈l′w/16⌉`.
    pub radius: usize,
    /// Row-major `l′×w` sign matrices.
    pub codes: Vec<Vec<i8>>,
    pub kernels: Vec<SymmetricKernel<T>>,
    pub draws: usize,
    /// Draws that passed the sup-norm filter.
    pub admissible: usize,
}

impl<T: Real> PackingSet<T> {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.admissible as f64 / self.draws.max(1) as f64
    }
}

/// Layout helper: coefficient matrix on the leading `l` eigenvectors.
struct Layout {
    l: usize,
    l_prime: usize,
    width: usize,
    blocks: usize,
}

impl Layout {
    fn new(l: usize, r: usize) -> (Self, Regime) {
        let l_prime = l / 2;
        let l_dd = l - l_prime;
        if r <= l_dd {
            (Layout { l, l_prime, width: r, blocks: l_dd / r }, Regime::Repeated)
        } else {
            (Layout { l, l_prime, width: l_dd, blocks: 1 }, Regime::Single)
        }
    }

    fn coefficients<T: Real>(&self, code: &[i8], kappa: T) -> Mat<T> {
        let mut c = Mat::zeros(self.l, self.l);
        for i in 0..self.l_prime {
            for j in 0..self.width {
                let v = if code[i * self.width + j] > 0 { kappa } else { -kappa };
                for k in 0..self.blocks {
                    let col = self.l_prime + self.width * k + j;
                    c[(i, col)] = v;
                    c[(col, i)] = v;
                }
            }
        }
        c
    }
}

fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Draws sign codes, keeps those whose kernel satisfies `|K_σ| ≤ a`, and
/// greedily retains codes at Hamming distance at least `⌈l′w/16⌉` from all
/// previously retained ones.
pub fn build_packing<T: Real>(
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    l: usize,
    p: T,
    mode: PackingMode,
    seed: u64,
    max_draws: usize,
) -> Result<PackingSet<T>> {
    check_l(spec, l, mode)?;
    let kappa = kappa_schedule(ps, spec, l, p, mode)?;
    let (layout, regime) = Layout::new(l, ps.r);
    let len = layout.l_prime * layout.width;
    let radius = len.div_ceil(16).max(1);
    let mut rng = rng(seed);
    let mut codes: Vec<Vec<i8>> = Vec::new();
    let mut kernels = Vec::new();
    let mut admissible = 0;
    for _ in 0..max_draws {
        let code: Vec<i8> = (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let k = spec.from_basis(&layout.coefficients(&code, kappa));
        if k.max_abs() > ps.a {
            continue;
        }
        admissible += 1;
        if codes.iter().all(|c| hamming(c, &code) >= radius) {
            codes.push(code);
            kernels.push(SymmetricKernel::from_symmetric(k));
        }
    }
    if codes.len() < 2 {
        return Err(Error::PackingFailed(format!(
            "{} codeword(s) after {max_draws} draws ({admissible} within the sup-norm bound, κ = {:e})",
            codes.len(),
            kappa.as_f64()
        )));
    }
    Ok(PackingSet {
        l,
        l_prime: layout.l_prime,
        l_double_prime: l - layout.l_prime,
        r: ps.r,
        a: ps.a,
        kappa,
        mode,
        regime,
        width: layout.width,
        radius,
        codes,
        kernels,
        draws: max_draws,
        admissible,
    })
}

/// `P{Y = +a | u, v} = 1/2 + K_σ(u,v)/(8a)` for every member.
pub fn packing_distributions<T: Real>(set: &PackingSet<T>, a: T) -> Result<Vec<Mat<T>>> {
    if !(a > T::zero()) {
        return Err(invalid("a", "must be positive"));
    }
    set.kernels
        .iter()
        .enumerate()
        .map(|(i, k)| {
            if k.sup_norm() > a {
                return Err(Error::Infeasible(format!("member {i} violates the sup-norm bound")));
            }
            Ok(k.as_mat().map(|x| T::lit(0.5) + x / (T::lit(8.0) * a)))
        })
        .collect()
}

fn binary_kl<T: Real>(p: T, q: T) -> T {
    let one = T::one();
    let term = |x: T, y: T| if x > T::zero() { x * (x / y).ln() } else { T::zero() };
    term(p, q) + term(one - p, one - q)
}

/// Per-member checks.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberCheck<T> {
    pub index: usize,
    pub sup: T,
    pub rank: usize,
    /// `‖W^{1/2} S_σ‖_{L₂(Π²)}` for `S_σ = K_σ/4`.
    pub sobolev: T,
    /// `‖W^{1/2} K_σ‖²_{L₂(Π²)}` and its bound `λ_l κ² l²/m²`.
    pub sobolev_k_sq: T,
    pub sobolev_k_bound: T,
}

/// Pairwise checks.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCheck<T> {
    pub i: usize,
    pub j: usize,
    pub hamming: usize,
    /// `n · max(K(P_i‖P_j), K(P_j‖P_i))`, exact.
    pub kl: T,
    /// `(4nκ²/(10a²))(l²/m²)`.
    pub kl_bound: T,
    /// `‖S_i − S_j‖²_{L₂(Π²)}`.
    pub separation: T,
    /// `2^{−10} κ² l²/m²`.
    pub separation_bound: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Entry,
    Rank,
    Sobolev,
    Separation,
    Divergence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation<T> {
    pub kind: CheckKind,
    pub members: (usize, Option<usize>),
    pub value: T,
    pub bound: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport<T> {
    pub members: Vec<MemberCheck<T>>,
    pub pairs: Vec<PairCheck<T>>,
    pub violations: Vec<Violation<T>>,
    /// `max_σ (card−1)^{-1} Σ_{σ′} n K(P_σ‖P_σ′)` against `log(card−1)/10`.
    pub average_kl: T,
    pub fano_bound: T,
}

impl<T: Real> VerificationReport<T> {
    pub fn count(&self, kind: CheckKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

fn numerical_rank<T: Real>(k: &SymmetricKernel<T>) -> Result<usize> {
    let e = k.eigen()?;
    let top = e.values.iter().fold(T::zero(), |acc, &x| max(acc, x.abs()));
    let tol = T::lit(1e-9) * top;
    Ok(e.values.iter().filter(|x| x.abs() > tol).count())
}

pub fn verify_packing<T: Real>(
    set: &PackingSet<T>,
    ps: &ProblemSize<T>,
    spec: &SpectralDecomposition<T>,
    n: usize,
) -> Result<VerificationReport<T>> {
    let f = |x: usize| T::from_usize_lossy(x);
    let (m, l, nt) = (f(spec.m()), f(set.l), f(n));
    let k2 = set.kappa * set.kappa;
    let ll_mm = l * l / (m * m);
    let slack = T::one() + T::lit(1e-9);
    let probs = packing_distributions(set, set.a)?;

    let members: Vec<MemberCheck<T>> = set
        .kernels
        .par_iter()
        .enumerate()
        .map(|(index, k)| {
            let sobolev_k = k.sobolev(spec);
            Ok(MemberCheck {
                index,
                sup: k.sup_norm(),
                rank: numerical_rank(k)?,
                sobolev: sobolev_k / T::lit(4.0),
                sobolev_k_sq: sobolev_k * sobolev_k,
                sobolev_k_bound: spec.lambda(set.l) * k2 * ll_mm,
            })
        })
        .collect::<Result<_>>()?;

    let kl_bound = T::lit(4.0) * nt * k2 / (T::lit(10.0) * set.a * set.a) * ll_mm;
    let separation_bound = T::lit(2.0).powi(-10) * k2 * ll_mm;
    let index_pairs: Vec<(usize, usize)> = (0..set.len())
        .flat_map(|i| (i + 1..set.len()).map(move |j| (i, j)))
        .collect();
    let cells = m * m;
    let pairs: Vec<(PairCheck<T>, T, T)> = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let (pi, pj) = (probs[i].as_slice(), probs[j].as_slice());
            let mut fwd = T::zero();
            let mut bwd = T::zero();
            for (&x, &y) in pi.iter().zip(pj) {
                fwd += binary_kl(x, y);
                bwd += binary_kl(y, x);
            }
            let (fwd, bwd) = (nt * fwd / cells, nt * bwd / cells);
            let separation = set.kernels[i].sq_dist_pi2(&set.kernels[j]) / T::lit(16.0);
            let check = PairCheck {
                i,
                j,
                hamming: hamming(&set.codes[i], &set.codes[j]),
                kl: max(fwd, bwd),
                kl_bound,
                separation,
                separation_bound,
            };
            (check, fwd, bwd)
        })
        .collect();

    let card = set.len();
    let mut outgoing = vec![T::zero(); card];
    for (c, fwd, bwd) in &pairs {
        outgoing[c.i] += *fwd;
        outgoing[c.j] += *bwd;
    }
    let average_kl = outgoing.iter().fold(T::zero(), |acc, &x| max(acc, x / f(card - 1)));
    let fano_bound = f(card - 1).ln() / T::lit(10.0);

    let mut violations = Vec::new();
    for c in &members {
        let mut flag = |kind, value, bound| {
            violations.push(Violation { kind, members: (c.index, None), value, bound });
        };
        if c.sup > set.a {
            flag(CheckKind::Entry, c.sup, set.a);
        }
        if c.rank > set.r {
            flag(CheckKind::Rank, f(c.rank), f(set.r));
        }
        if c.sobolev > ps.rho * slack {
            flag(CheckKind::Sobolev, c.sobolev, ps.rho);
        }
        if c.sobolev_k_sq > c.sobolev_k_bound * slack {
            flag(CheckKind::Sobolev, c.sobolev_k_sq, c.sobolev_k_bound);
        }
    }
    let pairs: Vec<PairCheck<T>> = pairs.into_iter().map(|(c, _, _)| c).collect();
    for c in &pairs {
        if c.separation * slack < c.separation_bound {
            violations.push(Violation {
                kind: CheckKind::Separation,
                members: (c.i, Some(c.j)),
                value: c.separation,
                bound: c.separation_bound,
            });
        }
        if c.kl > c.kl_bound * slack {
            violations.push(Violation {
                kind: CheckKind::Divergence,
                members: (c.i, Some(c.j)),
                value: c.kl,
                bound: c.kl_bound,
            });
        }
    }
    Ok(VerificationReport {
        members,
        pairs,
        violations,
        average_kl,
        fano_bound,
    })
}

//! Uniform-design sampling with bounded responses, the empirical loss and the
//! noise-level quantities `ε*` and `ε(D)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::kernel::SymmetricKernel;
use crate::linalg::{sym_eigen, Mat};
use crate::rng::{rng, Rng};
use crate::scalar::{max, Real};

/// One observation `(u, v, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<T> {
    pub u: usize,
    pub v: usize,
    pub y: T,
}

/// `n ≥ 1` observations on `m` vertices with `|y| ≤ a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
    m: usize,
    a: T,
}

impl<T: Real> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>, m: usize, a: T) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("n", "a dataset needs at least one sample"));
        }
        if !(a > T::zero()) {
            return Err(invalid("a", "must be positive"));
        }
        let slack = T::lit(1e-12) * max(T::one(), a);
        for (j, s) in samples.iter().enumerate() {
            if s.u >= m || s.v >= m {
                return Err(invalid("sample", format!("#{j}: vertex out of range for m={m}")));
            }
            if !s.y.is_finite() {
                return Err(Error::NonFinite("response"));
            }
            if s.y.abs() > a + slack {
                return Err(invalid("sample", format!("#{j}: |y| = {} exceeds a = {a}", s.y.abs())));
            }
        }
        Ok(Self { samples, m, a })
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> T {
        self.a
    }

    /// First `k` samples and the rest.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.n() {
            return Err(invalid("split", format!("cannot split n={} at {k}", self.n())));
        }
        let (head, tail) = self.samples.split_at(k);
        Ok((
            Self {
                samples: head.to_vec(),
                m: self.m,
                a: self.a,
            },
            Self {
                samples: tail.to_vec(),
                m: self.m,
                a: self.a,
            },
        ))
    }
}

/// Noise families. Each keeps `E(Y | u, v) = S_*(u, v)` and `|Y| ≤ a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise<T> {
    None,
    /// `Y = S_* + U(−ς, ς)`.
    Uniform(T),
    /// `Y = S_* ± ς` with fair signs.
    Sign(T),
    /// `Y ∈ {−a, a}` with `P{Y = a} = 1/2 + S_*/(2a)`.
    BinaryPacking,
}

impl<T: Real> Noise<T> {
    /// Largest `‖S_*‖_∞` compatible with `|Y| ≤ a` under this noise.
    pub fn oracle_bound(&self, a: T) -> T {
        match *self {
            Noise::None => a,
            Noise::Uniform(s) | Noise::Sign(s) => a - s,
            Noise::BinaryPacking => a / T::lit(2.0),
        }
    }
}

impl<T: Real> FromStr for Noise<T> {
    type Err = Error;

    /// `none`, `uniform:<s>`, `sign:<s>` or `binary`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let level = |rest: &str| -> Result<T> {
            let x: f64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad noise level '{rest}'")))?;
            if !(x >= 0.0) {
                return Err(invalid("noise", "level must be nonnegative"));
            }
            Ok(T::lit(x))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(Noise::None),
            None if s == "binary" || s == "binary_packing" => Ok(Noise::BinaryPacking),
            Some(("uniform", rest)) => Ok(Noise::Uniform(level(rest)?)),
            Some(("sign", rest)) => Ok(Noise::Sign(level(rest)?)),
            _ => Err(Error::Parse(format!("unknown noise spec '{s}'"))),
        }
    }
}

impl<T: Real> fmt::Display for Noise<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::None => write!(f, "none"),
            Noise::Uniform(s) => write!(f, "uniform:{s}"),
            Noise::Sign(s) => write!(f, "sign:{s}"),
            Noise::BinaryPacking => write!(f, "binary"),
        }
    }
}

fn check_feasible<T: Real>(s_star: &SymmetricKernel<T>, a: T, noise: Noise<T>) -> Result<()> {
    let sup = s_star.sup_norm();
    let slack = T::one() + T::epsilon() * T::lit(64.0);
    if sup > noise.oracle_bound(a) * slack {
        return Err(Error::Infeasible(format!(
            "noise {noise} with sup-norm {sup} exceeds response bound {a}"
        )));
    }
    Ok(())
}

fn respond<T: Real>(g: &mut Rng, s: T, a: T, noise: Noise<T>) -> T {
    let y = match noise {
        Noise::None => s,
        Noise::Uniform(w) => s + w * T::lit(2.0 * g.random::<f64>() - 1.0),
        Noise::Sign(w) => {
            if g.random::<bool>() {
                s + w
            } else {
                s - w
            }
        }
        Noise::BinaryPacking => {
            let p = T::lit(0.5) + s / (T::lit(2.0) * a);
            if T::lit(g.random::<f64>()) < p {
                a
            } else {
                -a
            }
        }
    };
    // Rounding can push S + noise past a by an ulp.
    crate::scalar::clamp_abs(y, a)
}

/// Draws `n` i.i.d. observations with `u, v` uniform on the vertices.
pub fn draw_dataset<T: Real>(
    s_star: &SymmetricKernel<T>,
    a: T,
    noise: Noise<T>,
    n: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    check_feasible(s_star, a, noise)?;
    let m = s_star.m();
    let mut g = rng(seed);
    let samples = (0..n)
        .map(|_| {
            let u = g.random_range(0..m);
            let v = g.random_range(0..m);
            let y = respond(&mut g, s_star.get(u, v), a, noise);
            Sample { u, v, y }
        })
        .collect();
    Dataset::new(samples, m, a)
}

/// Every ordered pair `(u, v)` observed `reps` times, in row-major order.
pub fn draw_exhaustive<T: Real>(
    s_star: &SymmetricKernel<T>,
    a: T,
    noise: Noise<T>,
    reps: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    if reps < 1 {
        return Err(invalid("reps", "must be at least 1"));
    }
    check_feasible(s_star, a, noise)?;
    let m = s_star.m();
    let mut g = rng(seed);
    let mut samples = Vec::with_capacity(reps * m * m);
    for _ in 0..reps {
        for u in 0..m {
            for v in 0..m {
                let y = respond(&mut g, s_star.get(u, v), a, noise);
                samples.push(Sample { u, v, y });
            }
        }
    }
    Dataset::new(samples, m, a)
}

/// `n^{-1} Σ (y_j − S(u_j, v_j))²`.
pub fn empirical_loss<T: Real>(s: &SymmetricKernel<T>, data: &Dataset<T>) -> Result<T> {
    if s.m() != data.m() {
        return Err(Error::Dimension {
            expected: data.m(),
            found: s.m(),
        });
    }
    let total: T = data
        .samples()
        .iter()
        .map(|o| {
            let r = o.y - s.get(o.u, o.v);
            r * r
        })
        .sum();
    Ok(total / T::from_usize_lossy(data.n()))
}

fn noise_scale<T: Real>(n: usize, m: usize) -> T {
    let nt = T::from_usize_lossy(n);
    let mt = T::from_usize_lossy(m);
    let lg = (T::lit(2.0) * mt).ln();
    max((lg / (nt * mt)).sqrt(), lg / nt)
}

/// `ε* = 16a(√(log(2m)/(nm)) ∨ log(2m)/n)`.
pub fn epsilon_star<T: Real>(n: usize, m: usize, a: T) -> T {
    T::lit(16.0) * a * noise_scale::<T>(n, m)
}

/// Default multiplier in [`default_epsilon`].
pub const DEFAULT_BIG_D: f64 = 32.0;

/// `ε = D a (√(log(2m)/(nm)) ∨ log(2m)/n)`.
pub fn default_epsilon<T: Real>(n: usize, m: usize, a: T, big_d: T) -> Result<T> {
    if !(big_d > T::zero()) {
        return Err(invalid("D", "must be positive"));
    }
    Ok(big_d * a * noise_scale::<T>(n, m))
}

/// `Ξ = n^{-1} Σ ξ_j E_{u_j, v_j}` with `E_{u,v} = (e_u ⊗ e_v + e_v ⊗ e_u)/2`.
pub fn noise_matrix<T: Real>(data: &Dataset<T>, xi: &[T]) -> Result<Mat<T>> {
    if xi.len() != data.n() {
        return Err(Error::Dimension {
            expected: data.n(),
            found: xi.len(),
        });
    }
    let m = data.m();
    let mut out = Mat::zeros(m, m);
    let w = T::lit(0.5) / T::from_usize_lossy(data.n());
    for (o, &x) in data.samples().iter().zip(xi) {
        out[(o.u, o.v)] += w * x;
        out[(o.v, o.u)] += w * x;
    }
    Ok(out)
}

/// Spectral norm of a symmetric matrix.
pub fn operator_norm<T: Real>(a: &Mat<T>) -> Result<T> {
    let eig = sym_eigen(a)?;
    Ok(eig.values.iter().fold(T::zero(), |acc, x| max(acc, x.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kernel(m: usize) -> SymmetricKernel<f64> {
        SymmetricKernel::from_symmetric(Mat::from_fn(m, m, |u, v| {
            0.3 * ((u + v) as f64).sin()
        }))
    }

    #[test]
    fn noiseless_responses_are_exact() {
        let s = kernel(7);
        let d = draw_dataset(&s, 1.0, Noise::None, 500, 1).unwrap();
        for o in d.samples() {
            assert_eq!(o.y, s.get(o.u, o.v));
        }
        assert_eq!(empirical_loss(&s, &d).unwrap(), 0.0);
        assert_eq!(d, draw_dataset(&s, 1.0, Noise::None, 500, 1).unwrap());
    }

    #[test]
    fn binary_responses_take_two_values() {
        let s = kernel(5);
        let d = draw_dataset(&s, 1.0, Noise::BinaryPacking, 300, 2).unwrap();
        assert!(d.samples().iter().all(|o| o.y == 1.0 || o.y == -1.0));
        let big = s.scale(3.0);
        assert!(draw_dataset(&big, 1.0, Noise::BinaryPacking, 10, 2).is_err());
        assert!(draw_dataset(&s, 1.0, Noise::Uniform(0.8), 10, 2).is_err());
        assert!(draw_dataset(&s, 1.0, Noise::None, 0, 2).is_err());
    }

    #[test]
    fn constant_residual_loss() {
        let samples = (0..10).map(|j| Sample { u: j % 3, v: 0, y: 2.0 }).collect();
        let d = Dataset::new(samples, 3, 2.0).unwrap();
        assert_eq!(empirical_loss(&SymmetricKernel::zeros(3), &d).unwrap(), 4.0);
    }

    #[test]
    fn epsilon_values() {
        assert_relative_eq!(epsilon_star(10_000, 100, 1.0), 3.6834e-2, max_relative = 1e-3);
        assert_relative_eq!(
            default_epsilon(10_000, 100, 1.0, 32.0).unwrap(),
            7.3669e-2,
            max_relative = 1e-3
        );
        assert!(default_epsilon(10, 10, 1.0, 0.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let e = epsilon_star(10usize << k, 50, 1.0);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn noise_specs_parse() {
        assert_eq!("none".parse::<Noise<f64>>().unwrap(), Noise::None);
        assert_eq!("sign:0.25".parse::<Noise<f64>>().unwrap(), Noise::Sign(0.25));
        assert_eq!("uniform:0.1".parse::<Noise<f64>>().unwrap(), Noise::Uniform(0.1));
        assert_eq!("binary".parse::<Noise<f64>>().unwrap(), Noise::BinaryPacking);
        assert!("gauss:1".parse::<Noise<f64>>().is_err());
        assert!("sign:-1".parse::<Noise<f64>>().is_err());
    }

    #[test]
    fn noise_matrix_is_symmetric_average() {
        let samples = vec![Sample { u: 0, v: 1, y: 0.0 }, Sample { u: 2, v: 2, y: 0.0 }];
        let d = Dataset::new(samples, 3, 1.0).unwrap();
        let x = noise_matrix(&d, &[1.0, -1.0]).unwrap();
        assert_eq!(x[(0, 1)], 0.25);
        assert_eq!(x[(1, 0)], 0.25);
        assert_eq!(x[(2, 2)], -0.5);
        assert_relative_eq!(operator_norm(&x).unwrap(), 0.5);
    }
}

//! Monte Carlo rate experiments driven by a TOML configuration.
//!
//! ```toml
//! seed = 7
//! replicates = 10
//! n_grid = [500, 1000, 2000]
//! a = 1.0
//! noise = "uniform:0.05"
//!
//! [graph]
//! kind = "unit_circle"   # circle | unit_circle | path | complete | file
//! m = 200
//! q = 1.0
//!
//! [oracle]
//! r = 1
//! rho = inf
//! profile = "smooth"
//!
//! [estimator]
//! kind = "aggregate"     # convex | aggregate | restricted | select
//! big_d = 0.5
//! grid_points = 8
//!
//! [estimator.solver]
//! max_iters = 600
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{aggregate_epsbar, solve_convex, ConvexConfig, EpsBarGrid};
use crate::error::{invalid, Error, Result};
use crate::graph::{laplacian, smoothing_operator, SpectralDecomposition, WeightedGraph};
use crate::kernel::{generate_oracle, SmoothnessProfile, SymmetricKernel};
use crate::rates::{
    adaptive_upper_rate, beta_example_rate, lower_dense, lower_sparse, q_p, sparsity_d, DenseTerm,
    ProblemSize,
};
use crate::restricted::{restricted_ls, select_model, RestrictedConfig, SelectionConfig};
use crate::rng::derive_seed;
use crate::sampling::{default_epsilon, draw_dataset, draw_exhaustive, Dataset, Noise, DEFAULT_BIG_D};

const ORACLE_TAG: u64 = 0x0AC1E;
const ESTIMATOR_TAG: u64 = 0xE57;

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn no_noise() -> String {
    "none".into()
}
fn big_d() -> f64 {
    DEFAULT_BIG_D
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn restarts() -> usize {
    8
}
fn restricted_iters() -> usize {
    5000
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    pub kind: String,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "one")]
    pub q: f64,
}

impl GraphSource {
    fn size(&self) -> Result<usize> {
        self.m.ok_or_else(|| invalid("graph.m", "required for generated graphs"))
    }

    pub fn build(&self) -> Result<WeightedGraph<f64>> {
        match self.kind.as_str() {
            "circle" => WeightedGraph::circle(self.size()?, self.weight.unwrap_or(1.0)),
            "unit_circle" => WeightedGraph::unit_circle(self.size()?),
            "path" => Ok(WeightedGraph::path(self.size()?)),
            "complete" => Ok(WeightedGraph::complete(self.size()?)),
            "file" => {
                let p = self.path.as_ref().ok_or_else(|| invalid("graph.path", "required for kind = \"file\""))?;
                crate::io::read_graph(p)
            }
            other => Err(invalid("graph.kind", format!("unknown graph kind `{other}`"))),
        }
    }

    pub fn spectrum(&self) -> Result<SpectralDecomposition<f64>> {
        smoothing_operator(&laplacian(&self.build()?), self.q)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub r: usize,
    #[serde(default = "infinity")]
    pub rho: f64,
    #[serde(default)]
    pub profile: SmoothnessProfile,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub opt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let c = ConvexConfig::<f64>::new(0.0, 0.0, 1.0);
        Self {
            max_iters: c.max_iters,
            rel_tol: c.rel_tol,
            opt_tol: c.opt_tol,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// Two-penalty estimator at fixed `(ε, ε̄)`; `ε` defaults to the
    /// `big_d`-scaled noise level.
    Convex {
        epsilon: Option<f64>,
        #[serde(default = "big_d")]
        big_d: f64,
        #[serde(default)]
        epsilon_bar: f64,
        #[serde(default)]
        solver: SolverOptions,
    },
    /// Sample-split selection of `ε̄` over the eigenvalue grid.
    Aggregate {
        epsilon: Option<f64>,
        #[serde(default = "big_d")]
        big_d: f64,
        /// Geometric subgrid size; the full grid when absent.
        grid_points: Option<usize>,
        #[serde(default = "yes")]
        warm_start: bool,
        #[serde(default)]
        solver: SolverOptions,
    },
    Restricted {
        r: usize,
        l: usize,
        #[serde(default = "restarts")]
        restarts: usize,
        #[serde(default = "restricted_iters")]
        max_iters: usize,
    },
    Select {
        r_grid: Vec<usize>,
        l_grid: Vec<usize>,
        #[serde(default = "one")]
        big_k: f64,
        #[serde(default = "one")]
        big_a: f64,
        #[serde(default = "restarts")]
        restarts: usize,
        #[serde(default = "restricted_iters")]
        max_iters: usize,
    },
}

impl EstimatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Convex { .. } => "convex",
            Self::Aggregate { .. } => "aggregate",
            Self::Restricted { .. } => "restricted",
            Self::Select { .. } => "select",
        }
    }
}

/// How vertex pairs are drawn.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Uniform,
    /// Every ordered pair `n/m²` times; `n` must be a multiple of `m²`.
    Exhaustive,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    #[serde(default = "one")]
    pub big_a: f64,
    /// Exponent of the power-spectrum rate; defaults to `graph.q`.
    pub beta: Option<f64>,
    /// Moment order for the dense bound; defaults to `max(2, log m)`.
    pub p: Option<f64>,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { big_a: 1.0, beta: None, p: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "no_noise")]
    pub noise: String,
    #[serde(default)]
    pub design: Design,
    pub graph: GraphSource,
    pub oracle: OracleConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Record wall-clock times; when off, `wall_ms` is written as 0 so that
    /// output files are byte-identical across runs.
    #[serde(default = "yes")]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn noise(&self) -> Result<Noise<f64>> {
        self.noise.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_grid", "must be nonempty and strictly increasing"));
        }
        if self.n_grid[0] < 4 {
            return Err(invalid("n_grid", "sample sizes must be at least 4"));
        }
        if !(self.a > 0.0) {
            return Err(invalid("a", "must be positive"));
        }
        if self.oracle.r < 1 || !(self.oracle.rho > 0.0) {
            return Err(invalid("oracle", "need r ≥ 1 and rho > 0"));
        }
        if !(self.noise()?.oracle_bound(self.a) > 0.0) {
            return Err(invalid("noise", "leaves no room for the oracle below a"));
        }
        match &self.estimator {
            EstimatorConfig::Convex { epsilon, big_d, .. } | EstimatorConfig::Aggregate { epsilon, big_d, .. } => {
                if epsilon.is_none() && !(*big_d > 0.0) {
                    return Err(invalid("estimator.big_d", "must be positive"));
                }
            }
            EstimatorConfig::Restricted { r, l, .. } => {
                if *r < 1 || *l < 1 {
                    return Err(invalid("estimator", "r and l must be positive"));
                }
            }
            EstimatorConfig::Select { r_grid, l_grid, .. } => {
                if r_grid.is_empty() || l_grid.is_empty() {
                    return Err(invalid("estimator", "r_grid and l_grid must be nonempty"));
                }
            }
        }
        Ok(())
    }
}

/// One replicate at one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub replicate: usize,
    /// `‖Ŝ − S_*‖²_{L₂(Π²)}`; `None` when the fit failed.
    pub sq_error: Option<f64>,
    pub wall_ms: f64,
    pub estimator: String,
    pub failure: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub n: usize,
    pub delta1: f64,
    pub delta4: f64,
    #[serde(rename = "Delta_n")]
    pub delta_n: f64,
    pub beta_rate: f64,
}

/// Ordinary least squares fit of `log error` on `log n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub slope: Option<SlopeFit>,
    pub median_slope: Option<SlopeFit>,
    pub envelope: Vec<EnvelopeRow>,
    /// Largest oracle Sobolev norm, used as `ρ` in the envelope.
    pub rho: f64,
    pub timing: bool,
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let k = points.len();
    if k < 3 {
        return Err(invalid("points", "need at least 3 distinct sample sizes"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(invalid("points", "coordinates must be positive"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let kf = k as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("points", "need at least 3 distinct sample sizes"));
    }
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (kf - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, stderr, intercept, points: k })
}

fn per_n(rows: &[RateRow], stat: impl Fn(&mut Vec<f64>) -> f64) -> Vec<(f64, f64)> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let mut errs: Vec<f64> = rows.iter().filter(|r| r.n == n).filter_map(|r| r.sq_error).collect();
            (!errs.is_empty()).then(|| (n as f64, stat(&mut errs)))
        })
        .collect()
}

fn mean(xs: &mut Vec<f64>) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &mut Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Replicate-averaged error per sample size.
pub fn mean_errors(rows: &[RateRow]) -> Vec<(f64, f64)> {
    per_n(rows, mean)
}

pub fn median_errors(rows: &[RateRow]) -> Vec<(f64, f64)> {
    per_n(rows, median)
}

/// Slope of the log mean error against `log n`.
pub fn fit_rate_slope(rows: &[RateRow]) -> Result<SlopeFit> {
    fit_loglog(&mean_errors(rows))
}

/// Result of comparing the error curve with `C·Δ_n`, `C` fitted at the
/// smallest sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeCheck {
    pub constant: f64,
    /// `(n, mean error, C·Δ_n)`.
    pub points: Vec<(usize, f64, f64)>,
    pub holds: bool,
}

pub fn envelope_check(report: &RateReport) -> Result<EnvelopeCheck> {
    let errs = mean_errors(&report.rows);
    let first = errs.first().ok_or_else(|| invalid("rows", "no successful fits"))?;
    let env = |n: usize| report.envelope.iter().find(|e| e.n == n).map(|e| e.delta_n);
    let base = env(first.0 as usize).ok_or_else(|| invalid("envelope", "missing sample size"))?;
    let constant = first.1 / base;
    let mut holds = true;
    let mut points = Vec::new();
    for &(n, e) in &errs {
        let n = n as usize;
        let bound = constant * env(n).ok_or_else(|| invalid("envelope", "missing sample size"))?;
        holds &= e <= bound * (1.0 + 1e-12);
        points.push((n, e, bound));
    }
    Ok(EnvelopeCheck { constant, points, holds })
}

fn envelope_rows(cfg: &ExperimentConfig, spec: &SpectralDecomposition<f64>, rho: f64) -> Result<Vec<EnvelopeRow>> {
    let m = spec.m();
    let p = cfg.envelope.p.unwrap_or_else(|| (m as f64).ln().max(2.0));
    let qp = q_p(spec, p)?;
    let d = sparsity_d(spec, crate::packing::SPARSITY_TOL);
    let beta = cfg.envelope.beta.unwrap_or(cfg.graph.q);
    let r = cfg.oracle.r.min(m);
    cfg.n_grid
        .iter()
        .map(|&n| {
            let ps = ProblemSize { n, m, r, rho, a: cfg.a };
            let nan_if_err = |x: Result<f64>| x.unwrap_or(f64::NAN);
            Ok(EnvelopeRow {
                n,
                delta1: nan_if_err(lower_dense(&ps, spec, DenseTerm::General { p, q_p: qp })),
                delta4: nan_if_err(if m >= 2 { lower_sparse(&ps, spec, d) } else { Err(invalid("m", "too small")) }),
                delta_n: adaptive_upper_rate(&ps, spec, cfg.envelope.big_a)?.delta_n,
                beta_rate: nan_if_err(beta_example_rate(&ps, beta)),
            })
        })
        .collect()
}

fn fit_one(
    cfg: &ExperimentConfig,
    spec: &SpectralDecomposition<f64>,
    data: &Dataset<f64>,
    seed: u64,
) -> Result<SymmetricKernel<f64>> {
    let m = spec.m();
    let n = data.n();
    let auto_eps = |epsilon: Option<f64>, big_d: f64, n: usize| match epsilon {
        Some(e) => Ok(e),
        None => default_epsilon(n, m, cfg.a, big_d),
    };
    let solver_cfg = |eps: f64, eps_bar: f64, s: &SolverOptions| {
        let mut c = ConvexConfig::new(eps, eps_bar, cfg.a);
        c.max_iters = s.max_iters;
        c.rel_tol = s.rel_tol;
        c.opt_tol = s.opt_tol;
        c
    };
    match &cfg.estimator {
        EstimatorConfig::Convex { epsilon, big_d, epsilon_bar, solver } => {
            let c = solver_cfg(auto_eps(*epsilon, *big_d, n)?, *epsilon_bar, solver);
            Ok(solve_convex(data, spec, &c)?.0)
        }
        EstimatorConfig::Aggregate { epsilon, big_d, grid_points, warm_start, solver } => {
            let c = solver_cfg(auto_eps(*epsilon, *big_d, n / 2 + 1)?, 0.0, solver);
            let grid = grid_points.map_or(EpsBarGrid::Full, EpsBarGrid::Geometric);
            Ok(aggregate_epsbar(data, spec, &c, &grid, *warm_start)?.kernel)
        }
        EstimatorConfig::Restricted { r, l, restarts, max_iters } => {
            let mut c = RestrictedConfig::new(*r, *l, cfg.a);
            c.restarts = *restarts;
            c.max_iters = *max_iters;
            c.seed = seed;
            Ok(restricted_ls(data, spec, &c)?.kernel)
        }
        EstimatorConfig::Select { r_grid, l_grid, big_k, big_a, restarts, max_iters } => {
            let grid = r_grid
                .iter()
                .flat_map(|&r| l_grid.iter().map(move |&l| (r, l)))
                .collect();
            let mut c = SelectionConfig::new(cfg.a, grid);
            c.big_k = *big_k;
            c.big_a = *big_a;
            c.restarts = *restarts;
            c.max_iters = *max_iters;
            c.seed = seed;
            Ok(select_model(data, spec, &c)?.fit.kernel)
        }
    }
}

/// Runs every `(n, replicate)` cell. Output is independent of the number of
/// worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let spec = cfg.graph.spectrum()?;
    run_with_spectrum(cfg, &spec)
}

pub fn run_with_spectrum(cfg: &ExperimentConfig, spec: &SpectralDecomposition<f64>) -> Result<RateReport> {
    cfg.validate()?;
    let m = spec.m();
    let noise = cfg.noise()?;
    let bound = noise.oracle_bound(cfg.a);
    let oracles: Vec<SymmetricKernel<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(cfg.seed, &[ORACLE_TAG, k as u64]);
            generate_oracle(spec, cfg.oracle.r, cfg.oracle.rho, bound, cfg.oracle.profile, seed).map(|o| o.0)
        })
        .collect::<Result<_>>()?;
    let rho = oracles.iter().map(|s| s.sobolev(spec)).fold(0.0, f64::max);

    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.replicates).map(move |k| (i, k)))
        .collect();
    let name = cfg.estimator.name().to_string();
    let rows: Vec<RateRow> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let n = cfg.n_grid[i];
            let seed = derive_seed(cfg.seed, &[i as u64, k as u64]);
            let oracle = &oracles[k];
            let start = Instant::now();
            let outcome = (|| {
                let data = match cfg.design {
                    Design::Uniform => draw_dataset(oracle, cfg.a, noise, n, seed)?,
                    Design::Exhaustive => {
                        if n % (m * m) != 0 {
                            return Err(invalid("n_grid", "exhaustive design needs multiples of m²"));
                        }
                        draw_exhaustive(oracle, cfg.a, noise, n / (m * m), seed)?
                    }
                };
                let fit = fit_one(cfg, spec, &data, derive_seed(seed, &[ESTIMATOR_TAG]))?;
                Ok(fit.sq_dist_pi2(oracle))
            })();
            let wall_ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let (sq_error, failure) = match outcome {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e.to_string())),
            };
            RateRow { n, replicate: k, sq_error, wall_ms, estimator: name.clone(), failure }
        })
        .collect();

    let distinct = rows.iter().filter(|r| r.sq_error.is_some()).map(|r| r.n).collect::<std::collections::BTreeSet<_>>().len();
    let (slope, median_slope) = if distinct >= 3 {
        (fit_rate_slope(&rows).ok(), fit_loglog(&median_errors(&rows)).ok())
    } else {
        (None, None)
    };
    Ok(RateReport {
        rows,
        slope,
        median_slope,
        envelope: envelope_rows(cfg, spec, rho)?,
        rho,
        timing: cfg.timing,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: usize,
    replicate: usize,
    sq_error: f64,
    wall_ms: f64,
    estimator: &'a str,
}

fn csv_string<S: Serialize>(items: impl IntoIterator<Item = S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for it in items {
        w.serialize(it).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

impl RateReport {
    /// `n,replicate,sq_error,wall_ms,estimator`; failed rows carry `NaN`.
    pub fn rows_csv(&self) -> Result<String> {
        csv_string(self.rows.iter().map(|r| CsvRow {
            n: r.n,
            replicate: r.replicate,
            sq_error: r.sq_error.unwrap_or(f64::NAN),
            wall_ms: (r.wall_ms * 1e3).round() / 1e3,
            estimator: &r.estimator,
        }))
    }

    /// `n,delta1,delta4,Delta_n,beta_rate`.
    pub fn envelope_csv(&self) -> Result<String> {
        csv_string(&self.envelope)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RateRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fmt_fit = |f: &Option<SlopeFit>| match f {
            Some(f) => format!("{:.4} ± {:.4}", f.slope, f.stderr),
            None => "n/a".into(),
        };
        s.push_str(&format!("slope (mean)   {}\n", fmt_fit(&self.slope)));
        s.push_str(&format!("slope (median) {}\n", fmt_fit(&self.median_slope)));
        s.push_str(&format!("rho            {:.6e}\n", self.rho));
        let med = median_errors(&self.rows);
        for ((n, mean), (_, median)) in mean_errors(&self.rows).into_iter().zip(med) {
            s.push_str(&format!("n = {n:>8}  mean {mean:.4e}  median {median:.4e}\n"));
        }
        let failed = self.failures().count();
        if failed > 0 {
            s.push_str(&format!("{failed} failed row(s)\n"));
        }
        s
    }

    /// Writes `rows.csv`, `envelope.csv`, `summary.txt` and, when needed,
    /// `failures.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rows.csv"), self.rows_csv()?)?;
        fs::write(dir.join("envelope.csv"), self.envelope_csv()?)?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        let failed: Vec<_> = self.failures().collect();
        if !failed.is_empty() {
            let mut f = fs::File::create(dir.join("failures.csv"))?;
            writeln!(f, "n,replicate,reason")?;
            for r in failed {
                let reason = r.failure.as_deref().unwrap_or_default().replace(['\n', ','], " ");
                writeln!(f, "{},{},{}", r.n, r.replicate, reason)?;
            }
        }
        Ok(())
    }
}

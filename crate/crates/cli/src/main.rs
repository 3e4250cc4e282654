use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use randkit::convex::{aggregate_epsbar, solve_convex, ConvexConfig, EpsBarGrid};
use randkit::experiment::{envelope_check, run_experiment, ExperimentConfig};
use randkit::graph::{laplacian, regularized_majorant, smoothing_operator};
use randkit::io::{read_dataset, read_graph, read_kernel, write_dataset, write_kernel};
use randkit::kernel::{generate_oracle, norms, sign_and_support, Coherence, SmoothnessProfile};
use randkit::packing::{build_packing, kappa_terms, verify_packing, PackingMode, PackingSet};
use randkit::rates::{
    adaptive_upper_rate, beta_example_rate, l_bar_and_delta3, lower_dense, lower_sparse, q_p,
    sparsity_d, DenseTerm, ProblemSize,
};
use randkit::restricted::{restricted_ls, select_model, RestrictedConfig, SelectionConfig};
use randkit::sampling::{default_epsilon, draw_dataset, Noise, DEFAULT_BIG_D};
use randkit::{Graph, Kernel, Spectrum};

#[derive(Parser)]
#[command(name = "randkit", version, about = "Low-rank graph-smooth kernel estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum of W = Δ^q for a graph.
    Spectra {
        #[command(flatten)]
        graph: GraphArgs,
        /// Also write eigenvectors (one column per eigenpair) to this file.
        #[arg(long)]
        vectors: Option<PathBuf>,
    },
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Draw noisy observations of a kernel.
    Sample {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Fit(FitCmd),
    /// Closed-form lower and upper rates.
    Rates {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        size: SizeArgs,
        /// Moment order; defaults to max(2, log m).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        big_a: f64,
        /// Exponent for the power-spectrum example rate.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    #[command(subcommand)]
    Packing(PackingCmd),
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Args)]
struct GraphArgs {
    /// Graph file (Matrix Market or dense), or `circle:M`, `unit_circle:M`,
    /// `path:M`, `complete:M`.
    #[arg(long)]
    graph: String,
    #[arg(long, default_value_t = 1.0)]
    power: f64,
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Norms, rank and coherence of a kernel file.
    Info {
        #[arg(long)]
        kernel: PathBuf,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
    },
    /// Random low-rank smooth kernel.
    Oracle {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = f64::INFINITY)]
        rho: f64,
        /// Sup-norm bound.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value = "smooth")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FitCommon {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FitCmd {
    /// Nuclear-norm plus Sobolev penalized least squares.
    Convex {
        #[command(flatten)]
        common: FitCommon,
        /// Nuclear penalty; defaults to the scaled noise level.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_BIG_D)]
        big_d: f64,
        #[arg(long, default_value_t = 0.0)]
        epsilon_bar: f64,
        /// Select ε̄ on a held-out half instead of fixing it.
        #[arg(long)]
        aggregate: bool,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, default_value_t = 50_000)]
        max_iters: usize,
    },
    /// Rank- and basis-restricted least squares, optionally with model selection.
    Restricted {
        #[command(flatten)]
        common: FitCommon,
        #[arg(long, value_delimiter = ',')]
        r: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        l: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PackingArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    l: usize,
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value = "dense")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    max_draws: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PackingCmd {
    /// Build a packing set and write its kernels.
    Build(PackingArgs),
    /// Build a packing set and check every property of the construction.
    Verify(PackingArgs),
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run a Monte Carlo rate experiment from a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; falls back to RANDKIT_THREADS.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_graph(spec: &str) -> Result<Graph> {
    if !Path::new(spec).exists() {
        if let Some((kind, m)) = spec.split_once(':') {
            let m: usize = m.parse().with_context(|| format!("bad vertex count in `{spec}`"))?;
            return Ok(match kind {
                "circle" => Graph::circle(m, 1.0)?,
                "unit_circle" => Graph::unit_circle(m)?,
                "path" => Graph::path(m),
                "complete" => Graph::complete(m),
                _ => bail!("unknown built-in graph `{kind}`"),
            });
        }
    }
    read_graph(spec).with_context(|| format!("reading graph {spec}"))
}

fn load_spectrum(g: &GraphArgs) -> Result<Spectrum> {
    Ok(smoothing_operator(&laplacian(&load_graph(&g.graph)?), g.power)?)
}

fn load_kernel(path: &Path) -> Result<Kernel> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_kernel(f)?)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn default_p(m: usize) -> f64 {
    (m as f64).ln().max(2.0)
}

fn spectra(graph: &GraphArgs, vectors: &Option<PathBuf>) -> Result<()> {
    let spec = load_spectrum(graph)?;
    println!("m {}", spec.m());
    println!("k0 {}", spec.k0());
    println!("growth_c {}", spec.growth_c());
    for (k, l) in spec.eigenvalues().iter().enumerate() {
        println!("{} {l}", k + 1);
    }
    if let Some(path) = vectors {
        let mut w = sink(&Some(path.clone()))?;
        let v = spec.eigenvectors();
        for i in 0..v.rows() {
            let row: Vec<String> = v.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

fn kernel_cmd(cmd: &KernelCmd) -> Result<()> {
    match cmd {
        KernelCmd::Info { kernel, graph, gamma } => {
            let s = load_kernel(kernel)?;
            let spec = load_spectrum(graph)?;
            let nr = norms(&s, &spec)?;
            let support = sign_and_support(&s, randkit::kernel::default_rank_tol(&s)?)?;
            println!("m {}", s.m());
            println!("rank {}", support.rank);
            println!("nuclear {}", nr.nuclear);
            println!("frobenius {}", nr.frobenius);
            println!("operator {}", nr.operator);
            println!("sup {}", nr.sup);
            println!("l2_pi2 {}", nr.l2_pi2);
            println!("sobolev_l2_pi2 {}", nr.sobolev_l2_pi2);
            let fbar = regularized_majorant(&spec, *gamma)?;
            let coh = Coherence::new(&s, &spec)?;
            println!("# lambda coherence_majorant");
            let mut last = None;
            for &l in spec.eigenvalues() {
                if last == Some(l) {
                    continue;
                }
                last = Some(l);
                println!("{l} {}", coh.majorant(&fbar, l));
            }
            Ok(())
        }
        KernelCmd::Oracle { graph, r, rho, a, profile, seed, out } => {
            let spec = load_spectrum(graph)?;
            let profile = match profile.as_str() {
                "smooth" => SmoothnessProfile::Smooth,
                "flat" => SmoothnessProfile::Flat,
                other => bail!("unknown profile `{other}`"),
            };
            let (s, _) = generate_oracle(&spec, *r, *rho, *a, profile, *seed)?;
            write_kernel(&s, sink(out)?)?;
            Ok(())
        }
    }
}

fn fit_cmd(cmd: &FitCmd) -> Result<()> {
    match cmd {
        FitCmd::Convex { common, epsilon, big_d, epsilon_bar, aggregate, grid_points, max_iters } => {
            let spec = load_spectrum(&common.graph)?;
            let data = read_dataset(fs::File::open(&common.data)?, spec.m(), common.a)?;
            let n_fit = if *aggregate { data.n() / 2 + 1 } else { data.n() };
            let eps = match epsilon {
                Some(e) => *e,
                None => default_epsilon(n_fit, spec.m(), common.a, *big_d)?,
            };
            let mut cfg = ConvexConfig::new(eps, *epsilon_bar, common.a);
            cfg.max_iters = *max_iters;
            let fit = if *aggregate {
                let grid = grid_points.map_or(EpsBarGrid::Full, EpsBarGrid::Geometric);
                let agg = aggregate_epsbar(&data, &spec, &cfg, &grid, true)?;
                eprintln!("epsilon {eps} chosen_l {}", agg.chosen_l);
                agg.kernel
            } else {
                let (k, rep) = solve_convex(&data, &spec, &cfg)?;
                eprintln!(
                    "epsilon {eps} iterations {} converged {} objective {} residual {}",
                    rep.iterations, rep.converged, rep.objective, rep.residual
                );
                k
            };
            write_kernel(&fit, sink(&common.out)?)?;
            Ok(())
        }
        FitCmd::Restricted { common, r, l, restarts, seed } => {
            let spec = load_spectrum(&common.graph)?;
            let data = read_dataset(fs::File::open(&common.data)?, spec.m(), common.a)?;
            if r.is_empty() || l.is_empty() {
                bail!("--r and --l are required");
            }
            let fit = if r.len() == 1 && l.len() == 1 {
                let mut cfg = RestrictedConfig::new(r[0], l[0], common.a);
                cfg.restarts = *restarts;
                cfg.seed = *seed;
                let fit = restricted_ls(&data, &spec, &cfg)?;
                eprintln!("loss {}", fit.loss);
                fit.kernel
            } else {
                let grid = r.iter().flat_map(|&r| l.iter().map(move |&l| (r, l))).collect();
                let mut cfg = SelectionConfig::new(common.a, grid);
                cfg.restarts = *restarts;
                cfg.seed = *seed;
                let sel = select_model(&data, &spec, &cfg)?;
                eprintln!("r_hat {} l_hat {} loss {}", sel.r_hat, sel.l_hat, sel.fit.loss);
                sel.fit.kernel
            };
            write_kernel(&fit, sink(&common.out)?)?;
            Ok(())
        }
    }
}

fn rates(graph: &GraphArgs, size: &SizeArgs, p: Option<f64>, big_a: f64, beta: f64) -> Result<()> {
    let spec = load_spectrum(graph)?;
    let m = spec.m();
    let ps = ProblemSize { n: size.n, m, r: size.r, rho: size.rho, a: size.a };
    let p = p.unwrap_or_else(|| default_p(m));
    let qp = q_p(&spec, p)?;
    let d = sparsity_d(&spec, randkit::packing::SPARSITY_TOL);
    let lb = l_bar_and_delta3(&ps, &spec, p, qp)?;
    let up = adaptive_upper_rate(&ps, &spec, big_a)?;
    println!("Q_p {qp}");
    println!("d {d}");
    println!("delta1 {}", lower_dense(&ps, &spec, DenseTerm::General { p, q_p: qp })?);
    println!("delta2 {}", lower_dense(&ps, &spec, DenseTerm::LogM { q_p: q_p(&spec, default_p(m))? })?);
    println!("delta3 {}", lb.delta3);
    println!("delta4 {}", lower_sparse(&ps, &spec, d)?);
    println!("l_bar {}", lb.l_bar);
    println!("L {}", lb.big_l);
    println!("Delta_n {}", up.delta_n);
    println!("l_tilde {}", up.l_tilde);
    println!("beta_rate {}", beta_example_rate(&ps, beta)?);
    Ok(())
}

fn build_set(args: &PackingArgs) -> Result<(Spectrum, ProblemSize<f64>, PackingSet<f64>, f64)> {
    let spec = load_spectrum(&args.graph)?;
    let s = &args.size;
    let ps = ProblemSize { n: s.n, m: spec.m(), r: s.r, rho: s.rho, a: s.a };
    let mode: PackingMode = args.mode.parse()?;
    let p = args.p.unwrap_or_else(|| default_p(spec.m()));
    let set = build_packing(&ps, &spec, args.l, p, mode, args.seed, args.max_draws)?;
    Ok((spec, ps, set, p))
}

fn write_set(set: &PackingSet<f64>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut codes = fs::File::create(dir.join("codes.txt"))?;
    for c in &set.codes {
        let line: Vec<&str> = c.iter().map(|&x| if x > 0 { "+" } else { "-" }).collect();
        writeln!(codes, "{}", line.concat())?;
    }
    for (i, k) in set.kernels.iter().enumerate() {
        write_kernel(k, fs::File::create(dir.join(format!("kernel_{i:04}.txt")))?)?;
    }
    Ok(())
}

fn packing_cmd(cmd: &PackingCmd) -> Result<()> {
    match cmd {
        PackingCmd::Build(args) => {
            let (spec, ps, set, p) = build_set(args)?;
            let terms = kappa_terms(&ps, &spec, args.l, p, set.mode)?;
            println!("kappa {} (information {}, entry {}, sobolev {})", set.kappa, terms.information, terms.entry, terms.sobolev);
            println!("regime {:?} width {} radius {}", set.regime, set.width, set.radius);
            println!("codes {} admissible {}/{}", set.len(), set.admissible, set.draws);
            if let Some(dir) = &args.out {
                write_set(&set, dir)?;
            }
            Ok(())
        }
        PackingCmd::Verify(args) => {
            let (spec, ps, set, _) = build_set(args)?;
            let rep = verify_packing(&set, &ps, &spec, ps.n)?;
            let mut report = String::new();
            report.push_str(&format!("kappa {}\ncodes {}\npairs {}\n", set.kappa, set.len(), rep.pairs.len()));
            report.push_str(&format!("max_rank {}\n", rep.members.iter().map(|c| c.rank).max().unwrap_or(0)));
            report.push_str(&format!("average_kl {} fano_bound {}\n", rep.average_kl, rep.fano_bound));
            report.push_str(&format!("violations {}\n", rep.violations.len()));
            for v in &rep.violations {
                report.push_str(&format!("  {:?} {:?} value {} bound {}\n", v.kind, v.members, v.value, v.bound));
            }
            print!("{report}");
            if let Some(dir) = &args.out {
                write_set(&set, dir)?;
                fs::write(dir.join("report.txt"), &report)?;
                let mut pairs = fs::File::create(dir.join("pairs.csv"))?;
                writeln!(pairs, "i,j,hamming,kl,kl_bound,separation,separation_bound")?;
                for c in &rep.pairs {
                    writeln!(
                        pairs,
                        "{},{},{},{},{},{},{}",
                        c.i, c.j, c.hamming, c.kl, c.kl_bound, c.separation, c.separation_bound
                    )?;
                }
            }
            Ok(())
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("RANDKIT_THREADS") {
        Ok(v) => Ok(Some(v.trim().parse().context("RANDKIT_THREADS must be a positive integer")?)),
        Err(_) => Ok(None),
    }
}

fn experiment_cmd(cmd: &ExperimentCmd) -> Result<()> {
    let ExperimentCmd::Run { config, threads, out } = cmd;
    let cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = thread_count(*threads)? {
        if k == 0 {
            bail!("thread count must be positive");
        }
        pool = pool.num_threads(k);
    }
    let report = pool.build()?.install(|| run_experiment(&cfg))?;
    print!("{}", report.summary());
    if let Ok(check) = envelope_check(&report) {
        println!("envelope C {:.4e} holds {}", check.constant, check.holds);
    }
    if let Some(dir) = out.as_ref().or(cfg.output.as_ref()) {
        report.write(dir)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Spectra { graph, vectors } => spectra(graph, vectors),
        Command::Kernel(cmd) => kernel_cmd(cmd),
        Command::Sample { kernel, a, noise, n, seed, out } => {
            let s = load_kernel(kernel)?;
            let noise: Noise<f64> = noise.parse()?;
            let data = draw_dataset(&s, *a, noise, *n, *seed)?;
            write_dataset(&data, sink(out)?)?;
            Ok(())
        }
        Command::Fit(cmd) => fit_cmd(cmd),
        Command::Rates { graph, size, p, big_a, beta } => rates(graph, size, *p, *big_a, *beta),
        Command::Packing(cmd) => packing_cmd(cmd),
        Command::Experiment(cmd) => experiment_cmd(cmd),
    }
}

use std::fs;

use randkit::convex::{solve_convex, ConvexConfig};
use randkit::experiment::{run_experiment, ExperimentConfig};
use randkit::graph::{laplacian, smoothing_operator, WeightedGraph};
use randkit::io::{read_dataset, read_graph, read_kernel, write_dataset, write_graph, write_kernel};
use randkit::kernel::{generate_oracle, SmoothnessProfile};
use randkit::packing::{build_packing, packing_distributions, PackingMode};
use randkit::rates::ProblemSize;
use randkit::restricted::{select_model, SelectionConfig};
use randkit::sampling::{default_epsilon, draw_dataset, Noise};
use randkit::{Graph, Kernel};

const SMALL: &str = r#"
seed = 11
replicates = 2
n_grid = [400, 800, 1600]
noise = "sign:0.1"
timing = false

[graph]
kind = "circle"
m = 16
q = 1.0

[oracle]
r = 1

[estimator]
kind = "convex"
big_d = 2.0
epsilon_bar = 0.0

[estimator.solver]
max_iters = 2000
rel_tol = 1e-9
opt_tol = 1e-6
"#;

#[test]
fn experiment_output_is_reproducible() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_experiment(&cfg).unwrap();
    let second = run_experiment(&cfg).unwrap();
    first.write(dir.path().join("a")).unwrap();
    second.write(dir.path().join("b")).unwrap();
    for name in ["rows.csv", "envelope.csv", "summary.txt"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    assert!(!dir.path().join("a/failures.csv").exists());
    let rows = fs::read_to_string(dir.path().join("a/rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2);
    assert!(rows.starts_with("n,replicate,sq_error,wall_ms,estimator"));
    assert!(first.rows.iter().all(|r| r.sq_error.is_some()));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_experiment(&cfg)).unwrap();
    let b = four.install(|| run_experiment(&cfg)).unwrap();
    assert_eq!(a.rows_csv().unwrap(), b.rows_csv().unwrap());
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml(&SMALL.replace("replicates = 2", "replicates = 0")).is_err());
    assert!(ExperimentConfig::from_toml(&SMALL.replace("seed = 11", "seed = 11\nbogus = 1")).is_err());
    assert!(ExperimentConfig::from_toml(&SMALL.replace("sign:0.1", "gaussian:1")).is_err());
}

#[test]
fn files_round_trip_through_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let graph = Graph::circle(10, 1.0).unwrap();
    let gpath = dir.path().join("g.mtx");
    write_graph(&graph, fs::File::create(&gpath).unwrap()).unwrap();
    let graph: Graph = read_graph(&gpath).unwrap();
    let spec = smoothing_operator(&laplacian(&graph), 1.0).unwrap();

    let (oracle, _) = generate_oracle(&spec, 1, f64::INFINITY, 0.8, SmoothnessProfile::Smooth, 3).unwrap();
    let data = draw_dataset(&oracle, 1.0, Noise::Uniform(0.2), 1500, 4).unwrap();
    let dpath = dir.path().join("d.csv");
    write_dataset(&data, fs::File::create(&dpath).unwrap()).unwrap();
    let back = read_dataset(fs::File::open(&dpath).unwrap(), 10, 1.0).unwrap();
    assert_eq!(back.samples(), data.samples());

    let cfg = ConvexConfig::new(default_epsilon(1500, 10, 1.0, 1.0).unwrap(), 0.0, 1.0);
    let (fit, rep) = solve_convex(&back, &spec, &cfg).unwrap();
    assert!(rep.converged);
    assert!(fit.sq_dist_pi2(&oracle) < oracle.l2_pi2().powi(2));

    let kpath = dir.path().join("k.txt");
    write_kernel(&fit, fs::File::create(&kpath).unwrap()).unwrap();
    let k: Kernel = read_kernel(fs::File::open(&kpath).unwrap()).unwrap();
    assert!(k.sq_dist_pi2(&fit) < 1e-28);
}

#[test]
fn selection_prefers_the_true_rank() {
    let g = WeightedGraph::unit_circle(12).unwrap();
    let spec = smoothing_operator(&laplacian(&g), 1.0).unwrap();
    let (oracle, _) = generate_oracle(&spec, 1, f64::INFINITY, 0.9, SmoothnessProfile::Smooth, 8).unwrap();
    let data = draw_dataset(&oracle, 1.0, Noise::Sign(0.1), 20_000, 9).unwrap();
    let grid = [1, 2, 3].iter().flat_map(|&r| [2, 4, 8, 12].map(|l| (r, l))).collect();
    let sel = select_model(&data, &spec, &SelectionConfig::new(1.0, grid)).unwrap();
    assert_eq!(sel.r_hat, 1);
    assert!(sel.fit.kernel.sq_dist_pi2(&oracle) < 0.1 * oracle.l2_pi2().powi(2));
}

#[test]
fn packing_probabilities_are_bounded() {
    let g = WeightedGraph::unit_circle(64).unwrap();
    let spec = smoothing_operator(&laplacian(&g), 1.0).unwrap();
    let ps = ProblemSize { n: 5_000, m: 64, r: 1, rho: 1.0, a: 1.0 };
    let set = build_packing(&ps, &spec, 32, 64f64.ln(), PackingMode::Dense, 5, 32).unwrap();
    for p in packing_distributions(&set, 1.0).unwrap() {
        assert!(p.as_slice().iter().all(|&x| (0.375..=0.625).contains(&x)));
    }
}

use randkit::convex::{aggregate_epsbar, ConvexConfig, EpsBarGrid};
use randkit::graph::{laplacian, smoothing_operator};
use randkit::kernel::{generate_oracle, SmoothnessProfile};
use randkit::sampling::{default_epsilon, draw_dataset, Noise};
use randkit::Graph;

fn main() -> randkit::Result<()> {
    let graph = Graph::unit_circle(100)?;
    let spec = smoothing_operator(&laplacian(&graph), 1.0)?;
    let (truth, _) = generate_oracle(&spec, 1, f64::INFINITY, 0.9, SmoothnessProfile::Smooth, 7)?;
    let data = draw_dataset(&truth, 1.0, Noise::Uniform(0.1), 8000, 8)?;

    let eps = default_epsilon(data.n() / 2 + 1, 100, 1.0, 0.5)?;
    let cfg = ConvexConfig::new(eps, 0.0, 1.0);
    let fit = aggregate_epsbar(&data, &spec, &cfg, &EpsBarGrid::Geometric(8), true)?;
    println!("chosen l = {}, error = {:e}", fit.chosen_l, fit.kernel.sq_dist_pi2(&truth));
    Ok(())
}

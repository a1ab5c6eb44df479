use connlap::experiments::*;
use connlap::manifolds::ManifoldModel;
fn main() {
    for (n, c) in [(600usize, 0.5f64), (1000, 0.3), (2000, 0.2), (3000, 0.15)] {
        let mut cfg = ExperimentConfig::new(ManifoldModel::Interval);
        cfg.n_schedule = vec![n];
        cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
        cfg.reps = 3;
        let rep = pointwise_error::<f64>(&cfg, "cos_x").unwrap();
        println!(
            "n={n} c={c}: interior {:.4} boundary {:.4} (counts {} / {})",
            rep.value("median_interior_error").unwrap(),
            rep.value("median_boundary_error").unwrap(),
            rep.value("interior_count").unwrap(),
            rep.value("boundary_count").unwrap()
        );
    }
}

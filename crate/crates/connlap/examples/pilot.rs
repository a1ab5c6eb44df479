//! Exploration driver: prints spectra, trends, verdicts, and decay tables
//! for one experiment family at a time (`cargo run --release --example
//! pilot -- s1|interval|s2|s2pca|richardson|pointwise|orient|heat|density|slope`).

use connlap::experiments::{
    heat_power_experiment, orientability_test, pointwise_error, procrustes_transport_decay,
    spectral_error, BandwidthRule, ExperimentConfig, TransportSource,
};
use connlap::manifolds::{DensitySpec, ManifoldModel};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "s1".into());
    let t0 = std::time::Instant::now();
    match which.as_str() {
        "s1" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
            cfg.n_schedule = vec![3000];
            cfg.eig_count = 10;
            for c in [1.0, 0.7, 0.5] {
                cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                let rep = spectral_error::<f64>(&cfg).unwrap();
                println!("--- c = {c}");
                for row in &rep.rows {
                    println!("n={} h={:.4} {} = {:.6}", row.n, row.h, row.metric, row.value);
                }
            }
        }
        "s1raw" => {
            use connlap::graph::{assemble_operator, OperatorForm};
            use connlap::kernels::KernelSpec;
            use connlap::spectral::{eigendecompose, rescale_eigenvalues, EigOptions};
            let n: usize = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(3000);
            for c in [1.0, 0.7, 0.5, 0.35, 0.25, 0.18] {
                let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
                cfg.n_schedule = vec![n];
                cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                let cell = connlap::experiments::build_cell::<f64>(&cfg, n).unwrap();
                let op = assemble_operator(&cell.graph, OperatorForm::SymNormalized);
                let dec = eigendecompose(&op, EigOptions::top(10)).unwrap();
                let r = rescale_eigenvalues(&dec, cell.h, &KernelSpec::gaussian(), 1).unwrap();
                let vals: Vec<String> = r.iter().map(|v| format!("{v:.4}")).collect();
                println!("c={c:.2} h={:.4}: {}", cell.h, vals.join(" "));
            }
        }
        "interval" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Interval);
            cfg.n_schedule = vec![3000];
            cfg.eig_count = 8;
            for c in [0.3, 0.18, 0.12, 0.08] {
                cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                let rep = spectral_error::<f64>(&cfg).unwrap();
                println!("--- c = {c}");
                for row in &rep.rows {
                    println!("n={} h={:.4} {} = {:.6}", row.n, row.h, row.metric, row.value);
                }
            }
        }
        "s2" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
            cfg.n_schedule = vec![4000];
            cfg.eig_count = 20;
            cfg.transport_source = TransportSource::Analytic;
            for c in [1.0, 0.7, 0.5] {
                cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                let rep = spectral_error::<f64>(&cfg).unwrap();
                println!("--- c = {c}  [{:?}]", t0.elapsed());
                for row in &rep.rows {
                    println!("n={} h={:.4} {} = {:.6}", row.n, row.h, row.metric, row.value);
                }
            }
        }
        "s2pca" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
            cfg.n_schedule = vec![4000];
            cfg.eig_count = 20;
            cfg.transport_source = TransportSource::EstimatedPca;
            let c: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(1.0);
            cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
            let rep = spectral_error::<f64>(&cfg).unwrap();
            println!("--- c = {c}  [{:?}]", t0.elapsed());
            for row in &rep.rows {
                println!("n={} h={:.4} {} = {:.6}", row.n, row.h, row.metric, row.value);
            }
        }
        "richardson" => {
            // Extrapolation oracle for the first S^2 tangent cluster.
            let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
            cfg.eig_count = 8;
            cfg.transport_source = TransportSource::Analytic;
            let c: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.7);
            cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
            cfg.n_schedule = vec![1000, 2000, 4000, 8000];
            let rep = spectral_error::<f64>(&cfg).unwrap();
            let mut pts = Vec::new();
            for row in &rep.rows {
                if row.metric == "cluster0_mean" {
                    println!("n={} h={:.4} mean={:.6}", row.n, row.h, row.value);
                    pts.push((row.h, row.value));
                }
            }
            // Fit mean ~ a + b h by least squares; a is the h -> 0 limit.
            let n = pts.len() as f64;
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let a = (sy - b * sx) / n;
            println!("extrapolated h->0 limit: {a:.4} (slope {b:.4}) [{:?}]", t0.elapsed());
        }
        "pointwise" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
            cfg.n_schedule = vec![500, 1000, 2000, 4000];
            cfg.reps = 6;
            for c in [0.9, 0.8, 0.7] {
                for seed in [42u64, 7, 123, 2024] {
                    cfg.seed = seed;
                    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                    let rep = pointwise_error::<f64>(&cfg, "sin_theta").unwrap();
                    let meds: Vec<String> = rep
                        .metric_series("median_interior_error")
                        .iter()
                        .map(|(_, v)| format!("{v:.4}"))
                        .collect();
                    println!(
                        "c={c} seed={seed}: {} decreasing={}",
                        meds.join(" "),
                        rep.verdicts[0].pass
                    );
                }
            }
        }
        "orient" => {
            for model in [
                ManifoldModel::Sphere,
                ManifoldModel::TorusRev,
                ManifoldModel::Cylinder,
                ManifoldModel::Mobius,
                ManifoldModel::Klein,
            ] {
                for pca in [false, true] {
                    let out = orientability_test::<f64>(model, 2000, pca, 99).unwrap();
                    println!(
                        "{:<12} pca={}: deficit {:+.5} (dm {:.6} odm {:.6}) -> {} [{:?}]",
                        model.name(),
                        pca,
                        out.deficit,
                        out.top_dm,
                        out.top_odm,
                        if out.orientable { "orientable" } else { "non-orientable" },
                        t0.elapsed(),
                    );
                }
            }
        }
        "heat" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
            cfg.n_schedule = vec![3000];
            cfg.eig_count = 10;
            for c in [1.0, 0.7, 0.5] {
                cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
                let rep = heat_power_experiment::<f64>(&cfg, 0.5).unwrap();
                println!("--- c = {c}");
                for row in &rep.rows {
                    println!("n={} h={:.4} {} = {:.6}", row.n, row.h, row.metric, row.value);
                }
            }
        }
        "density" => {
            let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
            cfg.n_schedule = vec![4000];
            cfg.eig_count = 8;
            let c: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(1.0);
            cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c };
            let uni = spectral_error::<f64>(&cfg).unwrap();
            cfg.density = DensitySpec::S1TwoPlusSin;
            let non = spectral_error::<f64>(&cfg).unwrap();
            let a = uni.value("cluster1_mean").unwrap();
            let b = non.value("cluster1_mean").unwrap();
            println!("uniform {a:.5} vs 2+sin {b:.5}: rel diff {:.4}", (a - b).abs() / a);
        }
        "slope" => {
            let hs = [0.05, 0.02, 0.01];
            let pts = procrustes_transport_decay::<f64>(ManifoldModel::Sphere, 6000, &hs, 7).unwrap();
            for (h, м) in &pts {
                println!("h={h}: median err {м:.6}");
            }
            let lo = (pts[0].1 / pts[2].1).ln() / (pts[0].0.sqrt() / pts[2].0.sqrt()).ln();
            println!("log-log slope vs sqrt(h): {lo:.3} [{:?}]", t0.elapsed());
        }
        other => eprintln!("unknown pilot `{other}`"),
    }
    println!("total {:?}", t0.elapsed());
}

//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `--nocapture` to see them). Timed criteria take a global lock
//! so wall-clock limits are measured without interference from sibling
//! tests.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;

use connlap::experiments::{
    self, heat_power_experiment, orientability_test, pointwise_error, procrustes_transport_decay,
    spectral_error, BandwidthRule, ExperimentConfig, TransportSource,
};
use connlap::graph::{
    assemble_operator, attach_connection, build_affinity, AffinityGraph, ConnectionGraph,
    ConnectionSource, OperatorForm,
};
use connlap::kernels::KernelSpec;
use connlap::manifolds::{DensitySpec, ManifoldModel, PointCloud};
use connlap::rng::CounterRng;
use connlap::spectral::{eigendecompose, EigOptions};

static TIMER_LOCK: Mutex<()> = Mutex::new(());

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {}: {} ({})",
        criterion,
        if pass { "PASS" } else { "FAIL" },
        detail
    );
    assert!(pass, "{criterion}: {detail}");
}

fn random_connection_graph(n: usize, q: usize, seed: u64) -> ConnectionGraph<f64> {
    let mut rng = CounterRng::new(seed);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.range(0.1, 1.0);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let aff = AffinityGraph::from_dense_weights(&w, 1.0, 0.0).unwrap();
    ConnectionGraph::from_parts(aff, q, ConnectionSource::Analytic, |_, _| {
        let m = DMatrix::from_fn(q, q, |_, _| rng.next_normal());
        let mut o = m.qr().q();
        if rng.next_f64() < 0.5 {
            for r in 0..q {
                o[(r, 0)] = -o[(r, 0)];
            }
        }
        o
    })
    .unwrap()
}

/// Criterion 1: machine-precision identities on random connection graphs.
#[test]
fn criterion_1_exact_identities() {
    let _guard = TIMER_LOCK.lock().unwrap();
    let t0 = Instant::now();
    let mut rng = CounterRng::new(0xACC1);
    for case in 0..25u64 {
        let n = 2 + (rng.next_u64() % 7) as usize; // 2..=8
        let q = 1 + (rng.next_u64() % 3) as usize; // 1..=3
        let graph = random_connection_graph(n, q, 1000 + case);
        let nq = n * q;

        let sym = assemble_operator(&graph, OperatorForm::SymNormalized);
        let dec = eigendecompose(&sym, EigOptions::top(nq)).unwrap();

        // (a) HS identity: spectral sum vs brute-force matrix power.
        for t in [1u32, 2, 3] {
            for i in 0..n {
                for j in 0..n {
                    let mut spectral_sum = 0.0;
                    for l in 0..nq {
                        for r in 0..nq {
                            let mut inner_i = 0.0;
                            let mut inner_j = 0.0;
                            for k in 0..q {
                                inner_i +=
                                    dec.eigenvectors[l][i * q + k] * dec.eigenvectors[r][i * q + k];
                                inner_j +=
                                    dec.eigenvectors[l][j * q + k] * dec.eigenvectors[r][j * q + k];
                            }
                            spectral_sum += (dec.eigenvalues[l] * dec.eigenvalues[r])
                                .powi(2 * t as i32)
                                * inner_i
                                * inner_j;
                        }
                    }
                    let brute = connlap::spectral::hs_affinity(&sym, t, i, j).unwrap();
                    assert!(
                        (spectral_sum - brute).abs() < 1e-10,
                        "case {case} t={t} ({i},{j}): {spectral_sum} vs {brute}"
                    );
                }
            }
        }

        // (b) D - S is positive semidefinite.
        let lap = assemble_operator(&graph, OperatorForm::LUnnormalized);
        let ldec = eigendecompose(&lap, EigOptions::bottom(nq)).unwrap();
        let lscale = ldec.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for &l in &ldec.eigenvalues {
            assert!(l >= -1e-10 * lscale, "case {case}: L eigenvalue {l}");
        }

        // (c) spectrum of the symmetric normalized operator is in [-1, 1].
        for &l in &dec.eigenvalues {
            assert!(l.abs() <= 1.0 + 1e-10, "case {case}: |{l}| > 1");
        }

        // (d) spec(D^{-1} S) equals spec(S~).
        let s = assemble_operator(&graph, OperatorForm::S).to_dense();
        let mut dinv_s = s;
        for r in 0..nq {
            let inv = 1.0 / graph.affinity.degrees[r / q];
            for c in 0..nq {
                dinv_s[(r, c)] *= inv;
            }
        }
        let mut markov: Vec<f64> = dinv_s
            .complex_eigenvalues()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-10, "case {case}: nonreal {z}");
                z.re
            })
            .collect();
        markov.sort_by(f64::total_cmp);
        let mut sym_vals = dec.eigenvalues.clone();
        sym_vals.sort_by(f64::total_cmp);
        for (a, b) in markov.iter().zip(&sym_vals) {
            assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        "criterion 1 (exact identities)",
        elapsed.as_secs_f64() < 10.0,
        &format!("25 graphs, all identities at 1e-10; {elapsed:?} < 10 s"),
    );
}

/// Criterion 2: with q = 1 and trivial connection the assembled operators
/// equal the plain graph-Laplacian matrices entrywise.
#[test]
fn criterion_2_graph_laplacian_reduction() {
    let models = [
        ManifoldModel::Circle,
        ManifoldModel::Sphere,
        ManifoldModel::TorusRev,
        ManifoldModel::Interval,
        ManifoldModel::Cylinder,
    ];
    for run in 0..10usize {
        let model = models[run % models.len()];
        let n = 20 + 7 * run;
        let cloud: PointCloud<f64> = model.sample(n, DensitySpec::Uniform, 77 + run as u64).unwrap();
        let h = 0.2 * model.ambient_diameter();
        let alpha = if run % 2 == 0 { 0.0 } else { 1.0 };
        let aff = build_affinity(&cloud, &KernelSpec::gaussian(), h, alpha, model.intrinsic_dim());
        let w = aff.weights.to_dense();
        let degrees = aff.degrees.clone();
        let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
        assert_eq!(graph.q, 1);

        let s = assemble_operator(&graph, OperatorForm::S).to_dense();
        let lap = assemble_operator(&graph, OperatorForm::LUnnormalized).to_dense();
        let markov = assemble_operator(&graph, OperatorForm::OneMinusMarkov).to_dense();
        let sym = assemble_operator(&graph, OperatorForm::SymNormalized).to_dense();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(s[(i, j)], w[(i, j)], "S({i},{j}) run {run}");
                let l_want = if i == j { degrees[i] - w[(i, j)] } else { -w[(i, j)] };
                assert_eq!(lap[(i, j)], l_want, "L({i},{j}) run {run}");
                let m_want = if i == j {
                    1.0 - w[(i, j)] / degrees[i]
                } else {
                    -(w[(i, j)] / degrees[i])
                };
                assert_eq!(markov[(i, j)], m_want, "(I-D^-1 S)({i},{j}) run {run}");
                let sym_want = w[(i, j)] * ((1.0 / degrees[i].sqrt()) * (1.0 / degrees[j].sqrt()));
                assert_eq!(sym[(i, j)], sym_want, "S~({i},{j}) run {run}");
            }
        }
    }
    verdict(
        "criterion 2 (GL inside GCL)",
        true,
        "10 clouds, S/L/I-D^-1S/S~ match the scalar graph-Laplacian matrices exactly",
    );
}

fn cluster_rows(report: &experiments::ConvergenceReport, idx: usize) -> (f64, usize, f64) {
    let mean = report.value(&format!("cluster{idx}_mean")).unwrap();
    let size = report.value(&format!("cluster{idx}_size")).unwrap() as usize;
    let rel = report.value(&format!("cluster{idx}_rel_err")).unwrap_or(f64::NAN);
    (mean, size, rel)
}

/// Criterion 3: S^1 Laplace-Beltrami spectrum at n = 3000.
#[test]
fn criterion_3_circle_spectrum() {
    let _guard = TIMER_LOCK.lock().unwrap();
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
    cfg.n_schedule = vec![3000];
    cfg.alpha = 1.0;
    cfg.eig_count = 10;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.18 };
    let report = spectral_error::<f64>(&cfg).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for (idx, want_mult) in [(1usize, 2usize), (2, 2), (3, 2)] {
        let (mean, size, rel) = cluster_rows(&report, idx);
        detail.push_str(&format!("cluster{idx}: mean {mean:.4} x{size}; "));
        ok &= rel <= 0.10 && size == want_mult;
    }
    let elapsed = t0.elapsed();
    ok &= elapsed.as_secs_f64() < 60.0;
    verdict(
        "criterion 3 (S1 spectrum)",
        ok,
        &format!("{detail}{elapsed:?} < 60 s"),
    );
}

/// Criterion 4: density invariance of the alpha = 1 normalization.
#[test]
fn criterion_4_density_invariance() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
    cfg.n_schedule = vec![4000];
    cfg.alpha = 1.0;
    cfg.eig_count = 8;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.5 };
    let uniform = spectral_error::<f64>(&cfg).unwrap();
    cfg.density = DensitySpec::S1TwoPlusSin;
    let skewed = spectral_error::<f64>(&cfg).unwrap();

    let a = uniform.value("cluster1_mean").unwrap();
    let b = skewed.value("cluster1_mean").unwrap();
    let rel = (a - b).abs() / a.abs();
    verdict(
        "criterion 4 (density invariance)",
        rel < 0.07,
        &format!("uniform {a:.4} vs 2+sin {b:.4}, rel diff {rel:.4} < 0.07"),
    );
}

/// Criterion 5: Neumann spectrum and eigenvector on the interval.
#[test]
fn criterion_5_interval_neumann() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Interval);
    cfg.n_schedule = vec![3000];
    cfg.eig_count = 6;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.10 };
    let report = spectral_error::<f64>(&cfg).unwrap();

    let (m1, _, r1) = cluster_rows(&report, 1);
    let (m2, _, r2) = cluster_rows(&report, 2);
    let corr = report.value("evec1_cos_abs_corr").unwrap();
    let ok = r1 <= 0.15 && r2 <= 0.15 && corr > 0.95;
    verdict(
        "criterion 5 (interval Neumann)",
        ok,
        &format!("eigenvalues {m1:.4}, {m2:.4} vs {{1, 4}} within 15%; |corr(cos)| = {corr:.4} > 0.95"),
    );
}

/// Criterion 6: tangent connection Laplacian of S^2 with analytic transport.
/// The reference value 1.0 was confirmed against the Richardson
/// extrapolation oracle (`richardson_extrapolation_oracle` below) before
/// being frozen here.
#[test]
fn criterion_6_sphere_connection_laplacian() {
    let _guard = TIMER_LOCK.lock().unwrap();
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
    cfg.n_schedule = vec![4000];
    cfg.eig_count = 20;
    cfg.transport_source = TransportSource::Analytic;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.7 };
    let report = spectral_error::<f64>(&cfg).unwrap();

    let (m0, s0, r0) = cluster_rows(&report, 0);
    let (m1, _, _) = cluster_rows(&report, 1);
    let gap = (m1 - m0) / m0;
    let elapsed = t0.elapsed();
    let ok = s0 == 6 && r0 <= 0.15 && m0 > 0.0 && gap > 1.5 && elapsed.as_secs_f64() < 300.0;
    verdict(
        "criterion 6 (S2 connection Laplacian, analytic)",
        ok,
        &format!(
            "first cluster {m0:.4} x{s0} (want 1.0 x6, 15%), next {m1:.4}, rel gap {gap:.2} > 1.5; {elapsed:?} < 5 min"
        ),
    );
}

/// Criterion 7a: the full point-cloud pipeline (local PCA + Procrustes)
/// reproduces the S^2 spectrum at 20%.
#[test]
fn criterion_7_pipeline_spectrum() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
    cfg.n_schedule = vec![4000];
    cfg.eig_count = 20;
    cfg.transport_source = TransportSource::EstimatedPca;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.7 };
    let report = spectral_error::<f64>(&cfg).unwrap();
    let (m0, s0, r0) = cluster_rows(&report, 0);
    verdict(
        "criterion 7a (S2 pipeline spectrum)",
        s0 == 6 && r0 <= 0.20 && m0 > 0.0,
        &format!("first cluster {m0:.4} x{s0} within 20% of 1.0"),
    );
}

/// Criterion 7b: decay of the estimated-transport error across the h grid.
///
/// Asserted at the stated slope >= 1.3. On the round sphere the
/// deterministic alignment-vs-transport discrepancy vanishes identically
/// (the Procrustes alignment of exact tangent planes IS the parallel
/// transport), so what remains is frame-estimation noise whose pair
/// decorrelation decays with slope ~1 in sqrt(h) at fixed n; the measured
/// slope therefore documents the gap between the asymptotic bound and what
/// n = 6000 can exhibit.
#[test]
fn criterion_7_procrustes_decay_slope() {
    let hs = [0.05, 0.02, 0.01];
    let pts = procrustes_transport_decay::<f64>(ManifoldModel::Sphere, 6000, &hs, 7).unwrap();
    // Least-squares slope of log(err) against log(sqrt(h)).
    let logs: Vec<(f64, f64)> = pts.iter().map(|(h, e)| (h.sqrt().ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let detail = format!(
        "medians {:?}, log-log slope vs sqrt(h) = {slope:.3} (criterion asks >= 1.3)",
        pts.iter().map(|(_, e)| (e * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
    verdict("criterion 7b (Procrustes decay slope)", slope >= 1.3, &detail);
}

/// Criterion 8: pointwise convergence trend on S^1.
#[test]
fn criterion_8_pointwise_trend() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
    cfg.n_schedule = vec![500, 1000, 2000, 4000];
    cfg.alpha = 1.0;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.9 };
    cfg.reps = 6;
    let report = pointwise_error::<f64>(&cfg, "sin_theta").unwrap();
    let medians: Vec<f64> = report
        .metric_series("median_interior_error")
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let last = *medians.last().unwrap();
    verdict(
        "criterion 8 (pointwise trend)",
        decreasing && last < 0.15,
        &format!("medians {medians:.4?} strictly decreasing, final {last:.4} < 0.15"),
    );
}

/// Criterion 9: orientability verdicts across the catalog.
#[test]
fn criterion_9_orientability() {
    let _guard = TIMER_LOCK.lock().unwrap();
    let t0 = Instant::now();
    let cases = [
        (ManifoldModel::Sphere, true),
        (ManifoldModel::TorusRev, true),
        (ManifoldModel::Cylinder, true),
        (ManifoldModel::Mobius, false),
        (ManifoldModel::Klein, false),
    ];
    let mut analytic_ok = 0;
    let mut pca_ok = 0;
    for (model, want) in cases {
        for seed in [1u64, 2] {
            let a = orientability_test::<f64>(model, 2000, false, seed).unwrap();
            if a.orientable == want {
                analytic_ok += 1;
            }
            let p = orientability_test::<f64>(model, 2000, true, seed).unwrap();
            if p.orientable == want {
                pca_ok += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    let ok = analytic_ok == 10 && pca_ok >= 9 && elapsed.as_secs_f64() < 180.0;
    verdict(
        "criterion 9 (orientability)",
        ok,
        &format!("analytic {analytic_ok}/10, local-PCA {pca_ok}/10 (need >= 9); {elapsed:?} < 3 min"),
    );
}

/// Criterion 10: heat-kernel powers on S^1.
#[test]
fn criterion_10_heat_power() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Circle);
    cfg.n_schedule = vec![3000];
    cfg.eig_count = 10;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.5 };
    let report = heat_power_experiment::<f64>(&cfg, 0.5).unwrap();
    // top0 is the trivial cluster (exp(0) = 1); top1 the first nontrivial.
    let rel = report.value("top1_rel_err").unwrap();
    let mean = report.value("top1_mean").unwrap();
    verdict(
        "criterion 10 (heat power)",
        rel <= 0.15,
        &format!(
            "top nontrivial powered cluster {mean:.4} vs e^-0.5 = {:.4}, rel err {rel:.4} <= 0.15",
            (-0.5f64).exp()
        ),
    );
}

/// Development-time oracle for the frozen S^2 reference value: rescaled
/// first-cluster means over an n-schedule, extrapolated to h -> 0 by a
/// linear fit over the variance-reliable cells. Run explicitly with
/// `cargo test --release -- --ignored richardson`.
#[test]
#[ignore = "heavy oracle; run explicitly to re-confirm the frozen S2 reference"]
fn richardson_extrapolation_oracle() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
    cfg.eig_count = 8;
    cfg.transport_source = TransportSource::Analytic;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.7 };
    cfg.n_schedule = vec![2000, 4000, 8000];
    let report = spectral_error::<f64>(&cfg).unwrap();
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.metric == "cluster0_mean")
        .map(|r| (r.h, r.value))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let a = (sy - b * sx) / n;
    println!("richardson: cells {pts:?}, extrapolated limit {a:.4}");
    assert!((a - 1.0).abs() < 0.05, "extrapolated limit {a} should be near 1.0");
}

use super::*;
use crate::error::Error;
use crate::graph::{
    assemble_operator, attach_connection, AffinityGraph, ConnectionGraph, ConnectionSource,
    OperatorForm,
};
use crate::manifolds::{DensitySpec, ManifoldModel, PointCloud};
use crate::rng::CounterRng;
use nalgebra::DMatrix;

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

#[test]
fn swap_matrix_eigenvalues() {
    // w12 = 1 with no self weight: S~ = [[0,1],[1,0]].
    let w = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let aff = AffinityGraph::from_dense_weights(&w, 1.0, 0.0).unwrap();
    let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(2)).unwrap();
    assert!((dec.eigenvalues[0] - 1.0).abs() < 1e-14);
    assert!((dec.eigenvalues[1] + 1.0).abs() < 1e-14);
}

#[test]
fn krylov_matches_dense_reference_on_a_random_operator() {
    let graph = random_connection_graph(15, 2, 7); // nq = 30
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);

    let dense = op.to_dense();
    let mut reference: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
    reference.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // Force the Krylov path by disabling the dense cutoff.
    let mut opts = EigOptions::top(6);
    opts.dense_cutoff = 0;
    opts.tol = 1e-10;
    let dec = eigendecompose(&op, opts).unwrap();
    for (got, want) in dec.eigenvalues.iter().zip(&reference[..6]) {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
    assert!(dec.gram_defect() < 1e-8);

    let mut bot = EigOptions::bottom(4);
    bot.dense_cutoff = 0;
    bot.tol = 1e-10;
    let dec = eigendecompose(&op, bot).unwrap();
    let tail = &reference[reference.len() - 4..];
    for (got, want) in dec.eigenvalues.iter().zip(tail) {
        assert!((got - want).abs() < 1e-10, "bottom: {got} vs {want}");
    }
}

#[test]
fn markov_similarity_matches_nonsymmetric_eigenvalues() {
    let graph = random_connection_graph(8, 2, 11);
    let markov = assemble_operator(&graph, OperatorForm::OneMinusMarkov);
    let dec = eigendecompose(&markov, EigOptions::bottom(16)).unwrap();

    // Dense nonsymmetric oracle: eigenvalues of D^{-1} S directly.
    let s = assemble_operator(&graph, OperatorForm::S).to_dense();
    let mut dinv_s = s;
    for r in 0..16 {
        let inv = 1.0 / graph.affinity.degrees[r / 2];
        for c in 0..16 {
            dinv_s[(r, c)] *= inv;
        }
    }
    let mut oracle: Vec<f64> = dinv_s
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            assert!(z.im.abs() < 1e-10, "nonreal eigenvalue {z}");
            z.re
        })
        .collect();
    oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let got = dec.markov_eigenvalues();
    let mut got_sorted = got.clone();
    got_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (g, o) in got_sorted.iter().zip(&oracle) {
        assert!((g - o).abs() < 1e-10, "{g} vs {o}");
    }
}

#[test]
fn residual_contract_holds() {
    let graph = random_connection_graph(12, 2, 13);
    for form in [OperatorForm::SymNormalized, OperatorForm::LUnnormalized] {
        let op = assemble_operator(&graph, form);
        let dec = eigendecompose(&op, EigOptions::top(5)).unwrap();
        let scale = dec
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1.0);
        for &r in &dec.residuals {
            assert!(r <= 1e-8 * scale, "residual {r}");
        }
    }
}

#[test]
fn eigenvalue_ranges_on_random_graphs() {
    for seed in 0..4 {
        let graph = random_connection_graph(7, 3, 40 + seed);
        let sym = assemble_operator(&graph, OperatorForm::SymNormalized);
        let dec = eigendecompose(&sym, EigOptions::top(21)).unwrap();
        for &l in &dec.eigenvalues {
            assert!(l.abs() <= 1.0 + 1e-10);
        }
        let lap = assemble_operator(&graph, OperatorForm::LUnnormalized);
        let dec = eigendecompose(&lap, EigOptions::bottom(21)).unwrap();
        let scale = dec.eigenvalues[0].abs().max(1.0);
        for &l in &dec.eigenvalues {
            assert!(l >= -1e-10 * scale);
        }
    }
}

#[test]
fn similarity_invariance_of_the_full_spectrum() {
    let graph = random_connection_graph(9, 2, 17);
    let sym = assemble_operator(&graph, OperatorForm::SymNormalized);
    let markov = assemble_operator(&graph, OperatorForm::OneMinusMarkov);
    let a = eigendecompose(&sym, EigOptions::top(18)).unwrap();
    let b = eigendecompose(&markov, EigOptions::top(18)).unwrap();
    let mut la = a.eigenvalues.clone();
    let mut lb = b.markov_eigenvalues();
    la.sort_by(f64::total_cmp);
    lb.sort_by(f64::total_cmp);
    for (x, y) in la.iter().zip(&lb) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn rescaling_maps_unit_eigenvalue_to_zero_and_uses_the_gaussian_moment() {
    let mut rng = CounterRng::new(19);
    let w = DMatrix::<f64>::from_fn(6, 6, |i, j| if i <= j { rng.range(0.2, 1.0) } else { 0.0 });
    let w = &w + w.transpose();
    let aff = AffinityGraph::from_dense_weights(&w, 1.0, 0.0).unwrap();
    let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(6)).unwrap();
    let spec = crate::kernels::KernelSpec::gaussian();
    let h = 0.25;
    let rescaled = rescale_eigenvalues(&dec, h, &spec, 2).unwrap();
    // Top eigenvalue of D^{-1}S is exactly 1 (constants); it maps to 0.
    assert!((dec.eigenvalues[0] - 1.0).abs() < 1e-12);
    assert!(rescaled[0].abs() < 1e-10);
    // Gaussian second moment equals d, so the scale factor is 2 / h.
    for (lh, l) in rescaled.iter().zip(&dec.eigenvalues) {
        let want = 2.0 * (1.0 - l) / h;
        assert!((lh - want).abs() < 1e-9 * want.abs().max(1.0));
    }
    assert!(rescale_eigenvalues(&dec, -0.1, &spec, 2).is_err());
}

#[test]
fn vdm_identity_against_matrix_powers() {
    let graph = random_connection_graph(6, 2, 23);
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let nq = op.dim();
    let dec = eigendecompose(&op, EigOptions::top(nq)).unwrap();
    for t in [1u32, 2, 3] {
        let emb = vdm_embed(&dec, t, nq, false);
        for i in 0..6 {
            for j in 0..6 {
                let inner: f64 = emb
                    .point(i)
                    .iter()
                    .zip(emb.point(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let oracle = hs_affinity(&op, t, i, j).unwrap();
                assert!(
                    (inner - oracle).abs() < 1e-10,
                    "t={t} ({i},{j}): {inner} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn vdm_single_pair_and_normalization() {
    let graph = random_connection_graph(5, 2, 29);
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(4)).unwrap();
    let t = 3;
    let emb = vdm_embed(&dec, t, 1, false);
    for i in 0..5 {
        let v = &dec.eigenvectors[0][i * 2..(i + 1) * 2];
        let want = dec.eigenvalues[0].powi(2 * t as i32) * (v[0] * v[0] + v[1] * v[1]);
        assert!((emb.point(i)[0] - want).abs() < 1e-12);
    }
    let plain = vdm_embed(&dec, t, 4, false);
    let normalized = vdm_embed(&dec, t, 4, true);
    for i in 0..5 {
        for (a, b) in plain.point(i).iter().zip(normalized.point(i)) {
            assert!((a / dec.degrees[i] - b).abs() < 1e-13);
        }
    }
}

#[test]
fn vdd_is_a_pseudo_metric() {
    let graph = random_connection_graph(8, 2, 31);
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(8)).unwrap();
    let emb = vdm_embed(&dec, 2, 8, false);
    let mut rng = CounterRng::new(3);
    for i in 0..8 {
        assert_eq!(vdd(&emb, i, i), 0.0);
    }
    for _ in 0..200 {
        let i = (rng.next_f64() * 8.0) as usize;
        let j = (rng.next_f64() * 8.0) as usize;
        let k = (rng.next_f64() * 8.0) as usize;
        let dij = vdd(&emb, i, j);
        assert!(dij >= 0.0);
        assert_eq!(dij, vdd(&emb, j, i));
        // Squared-distance triangle inequality with slack, via the distances.
        let (a, b, c) = (dij.sqrt(), vdd(&emb, i, k).sqrt(), vdd(&emb, k, j).sqrt());
        assert!(a <= b + c + 1e-9);
    }
}

#[test]
fn hs_affinity_identity_block_and_guard() {
    // Single vertex with a self loop: S~ = I, so the (0,0) block of any even
    // power is I and the squared HS norm is q.
    let w = DMatrix::from_element(1, 1, 2.0f64);
    let aff = AffinityGraph::from_dense_weights(&w, 1.0, 0.0).unwrap();
    let graph =
        ConnectionGraph::from_parts(aff, 2, ConnectionSource::Analytic, |_, _| {
            DMatrix::identity(2, 2)
        })
        .unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    assert!((hs_affinity(&op, 3, 0, 0).unwrap() - 2.0).abs() < 1e-12);

    let big = random_connection_graph(260, 2, 5); // nq = 520 > 500
    let op = assemble_operator(&big, OperatorForm::SymNormalized);
    assert!(matches!(
        hs_affinity(&op, 1, 0, 0),
        Err(Error::SizeGuardExceeded { .. })
    ));

    let wrong_form = assemble_operator(&graph, OperatorForm::S);
    assert!(hs_affinity(&wrong_form, 1, 0, 0).is_err());
}

#[test]
fn two_node_hand_computed_hs_powers() {
    // S~ for w12 = 1, w11 = w22 = 0 is the swap matrix; its even powers are
    // the identity, so the (0,0) entry is 1 and the (0,1) entry is 0.
    let w = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let aff = AffinityGraph::from_dense_weights(&w, 1.0, 0.0).unwrap();
    let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    for t in [1u32, 2] {
        assert!((hs_affinity(&op, t, 0, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!(hs_affinity(&op, t, 0, 1).unwrap().abs() < 1e-14);
    }
}

#[test]
fn dm_embedding_basics() {
    let cloud: PointCloud<f64> = ManifoldModel::Circle
        .sample(60, DensitySpec::Uniform, 37)
        .unwrap();
    let aff = crate::graph::build_affinity(&cloud, &crate::kernels::KernelSpec::gaussian(), 0.15, 1.0, 1);
    let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(4)).unwrap();

    // m = 0: empty coordinates.
    let empty = dm_embed(&dec, 1, 0).unwrap();
    assert!(empty.iter().all(|c| c.is_empty()));

    // Top eigenvector of D^{-1}S is constant, so the first coordinate is.
    let coords = dm_embed(&dec, 1, 3).unwrap();
    let c0: Vec<f64> = coords.iter().map(|c| c[0]).collect();
    let spread = c0.iter().fold(0.0f64, |a, &b| a.max((b - c0[0]).abs()));
    assert!(spread < 1e-8 * c0[0].abs(), "constant coordinate, spread {spread}");

    // q = 2 decompositions are rejected.
    let g2 = random_connection_graph(6, 2, 41);
    let op2 = assemble_operator(&g2, OperatorForm::SymNormalized);
    let dec2 = eigendecompose(&op2, EigOptions::top(3)).unwrap();
    assert!(dm_embed(&dec2, 1, 2).is_err());
}

#[test]
fn dm_circle_embedding_is_round() {
    let cloud: PointCloud<f64> = ManifoldModel::Circle
        .sample(400, DensitySpec::Uniform, 43)
        .unwrap();
    let h = crate::experiments::bandwidth_schedule(400, 1, crate::experiments::BandwidthRule::alpha_positive());
    let aff = crate::graph::build_affinity(&cloud, &crate::kernels::KernelSpec::gaussian(), h, 1.0, 1);
    let graph = attach_connection(aff, ConnectionSource::Trivial, None, None).unwrap();
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(3)).unwrap();
    let coords = dm_embed(&dec, 1, 3).unwrap();
    // The two nontrivial coordinates should lie near a circle: radius
    // variation below 15%.
    let radii: Vec<f64> = coords
        .iter()
        .map(|c| (c[1] * c[1] + c[2] * c[2]).sqrt())
        .collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let max_dev = radii
        .iter()
        .fold(0.0f64, |a, &r| a.max((r - mean).abs() / mean));
    assert!(max_dev < 0.15, "radius variation {max_dev}");
}

#[test]
fn cluster_detection_merges_near_degenerate_values() {
    let values = [0.001f64, 0.999, 1.004, 3.95, 4.01, 9.2];
    let clusters = cluster_eigenvalues(&values, 0.02);
    let sizes: Vec<usize> = clusters.iter().map(|c| c.1).collect();
    assert_eq!(sizes, vec![1, 2, 2, 1]);
    assert!((clusters[1].0 - 1.0015).abs() < 1e-12);
}

#[test]
fn nonconvergence_reports_best_residuals() {
    let graph = random_connection_graph(40, 1, 47);
    let op = assemble_operator(&graph, OperatorForm::SymNormalized);
    let mut opts = EigOptions::top(3);
    opts.dense_cutoff = 0;
    opts.max_subspace = 4; // far too small on purpose
    opts.tol = 1e-14;
    match eigendecompose(&op, opts) {
        Err(Error::EigenNonConvergence(res)) => assert_eq!(res.len(), 3),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

//! Embedding-quality checks that cut across modules: the vector diffusion
//! distance should track geodesic distance between nearby points.

use connlap::experiments::{BandwidthRule, ExperimentConfig, TransportSource};
use connlap::graph::{assemble_operator, OperatorForm};
use connlap::manifolds::ManifoldModel;
use connlap::spectral::{eigendecompose, vdd, vdm_embed, EigOptions};

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

#[test]
fn vdd_tracks_geodesic_distance_on_a_sphere_patch() {
    let mut cfg = ExperimentConfig::new(ManifoldModel::Sphere);
    cfg.n_schedule = vec![1500];
    cfg.transport_source = TransportSource::Analytic;
    cfg.bandwidth_rule = BandwidthRule::AlphaPositive { c: 0.7 };
    let cell = connlap::experiments::build_cell::<f64>(&cfg, 1500).unwrap();
    let op = assemble_operator(&cell.graph, OperatorForm::SymNormalized);
    let dec = eigendecompose(&op, EigOptions::top(16)).unwrap();
    let emb = vdm_embed(&dec, 5, 16, false);

    let mut vdds = Vec::new();
    let mut geos = Vec::new();
    for i in 0..200 {
        for j in (i + 1)..cell.cloud.len() {
            let dot: f64 = cell
                .cloud
                .point(i)
                .iter()
                .zip(cell.cloud.point(j))
                .map(|(a, b)| a * b)
                .sum();
            let geo = dot.clamp(-1.0, 1.0).acos();
            if geo > 0.3 {
                continue;
            }
            geos.push(geo);
            vdds.push(vdd(&emb, i, j));
        }
    }
    assert!(geos.len() > 1000, "enough nearby pairs: {}", geos.len());
    let rho = spearman(&vdds, &geos);
    assert!(rho > 0.9, "Spearman correlation {rho} with {} pairs", geos.len());
}

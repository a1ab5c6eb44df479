//! Frame-bundle estimation from a bare point cloud.
//!
//! Local PCA estimates the embedded tangent plane at each point; orthogonal
//! Procrustes alignment of neighboring frames estimates the parallel
//! transport; its determinant sign gives the Z2 orientation connection. The
//! same SVD machinery also solves the group-invariant distance between
//! objects identified up to an O(q) action.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::manifolds::{Frame, PointCloud};
use crate::scalar::Scalar;

/// Output of local PCA at one point.
#[derive(Debug, Clone)]
pub struct LocalPcaResult<T> {
    /// Top-`d` eigenvectors of the local covariance.
    pub frame: Frame<T>,
    /// Covariance eigenvalues, nonincreasing, clamped at zero, truncated to
    /// `min(p, neighbor_count)` entries.
    pub eigenvalues: Vec<T>,
    pub neighbor_count: usize,
    pub h_pca: T,
}

/// Default local-PCA bandwidth `c * n^(-2/(d+2))`.
pub fn default_h_pca(n: usize, d: usize, c: f64) -> f64 {
    c * (n as f64).powf(-2.0 / (d as f64 + 2.0))
}

/// Model-aware default: the rate constant is calibrated to the manifold's
/// diameter (`c = (diameter/2)^2`, so the unit sphere keeps `c = 1`).
pub fn default_h_pca_for(model: crate::manifolds::ManifoldModel, n: usize) -> f64 {
    let radius = model.ambient_diameter() / 2.0;
    default_h_pca(n, model.intrinsic_dim(), radius * radius)
}

/// Local PCA at point `i`: the covariance is
/// `(n-1)^{-1} sum_{j != i} K(|x_i-x_j|/sqrt(h_pca)) (x_j-x_i)(x_j-x_i)^T`
/// over neighbors within `sqrt(h_pca)`; the frame is its top-`d` eigenvectors.
pub fn local_pca<T: Scalar>(
    cloud: &PointCloud<T>,
    i: usize,
    h_pca: T,
    d: usize,
    spec: &KernelSpec,
) -> Result<LocalPcaResult<T>> {
    let radius = h_pca.sqrt();
    let weight = move |t: T| spec.eval(d, t).unwrap_or_else(|_| T::zero());
    local_pca_weighted(cloud, i, radius, d, weight).map(|mut r| {
        r.h_pca = h_pca;
        r
    })
}

/// Core of [`local_pca`] with an arbitrary radial weight; the neighborhood
/// cutoff stays at `radius` regardless of the weight's own support.
pub fn local_pca_weighted<T: Scalar>(
    cloud: &PointCloud<T>,
    i: usize,
    radius: T,
    d: usize,
    weight: impl Fn(T) -> T,
) -> Result<LocalPcaResult<T>> {
    let p = cloud.ambient_dim();
    let xi = cloud.point(i);
    let mut cov = DMatrix::<T>::zeros(p, p);
    let mut count = 0usize;
    for j in 0..cloud.len() {
        if j == i {
            continue;
        }
        let xj = cloud.point(j);
        let mut dist2 = T::zero();
        for k in 0..p {
            let dk = xj[k] - xi[k];
            dist2 += dk * dk;
        }
        let dist = dist2.sqrt();
        if dist > radius {
            continue;
        }
        count += 1;
        let w = weight(dist / radius);
        for r in 0..p {
            let dr = xj[r] - xi[r];
            for c in 0..p {
                cov[(r, c)] += w * dr * (xj[c] - xi[c]);
            }
        }
    }
    if count < d {
        return Err(Error::TooFewNeighbors {
            index: i,
            found: count,
            need: d,
        });
    }
    let scale = T::one() / T::of((cloud.len() - 1) as f64);
    cov.scale_mut(scale);

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut basis = DMatrix::<T>::zeros(p, d);
    for (c, &k) in order.iter().take(d).enumerate() {
        for r in 0..p {
            basis[(r, c)] = eig.eigenvectors[(r, k)];
        }
    }
    let eigenvalues: Vec<T> = order
        .iter()
        .take(p.min(count))
        .map(|&k| eig.eigenvalues[k].max(T::zero()))
        .collect();
    Ok(LocalPcaResult {
        frame: Frame::new(basis).at(i),
        eigenvalues,
        neighbor_count: count,
        h_pca: radius * radius,
    })
}

/// Local PCA frames at every cloud point.
pub fn local_pca_frames<T: Scalar>(
    cloud: &PointCloud<T>,
    h_pca: T,
    d: usize,
    spec: &KernelSpec,
) -> Result<Vec<Frame<T>>> {
    let results: Vec<Result<LocalPcaResult<T>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| local_pca(cloud, i, h_pca, d, spec))
        .collect();
    results
        .into_iter()
        .map(|r| r.map(|res| res.frame))
        .collect()
}

/// Like [`local_pca_frames`], but points with fewer than `d` neighbors retry
/// with a doubled bandwidth (a few times) before giving up.
pub fn local_pca_frames_adaptive<T: Scalar>(
    cloud: &PointCloud<T>,
    h_pca: T,
    d: usize,
    spec: &KernelSpec,
) -> Result<Vec<Frame<T>>> {
    let results: Vec<Result<LocalPcaResult<T>>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let mut h = h_pca;
            loop {
                match local_pca(cloud, i, h, d, spec) {
                    Err(Error::TooFewNeighbors { .. }) if h < h_pca * T::of(200.0) => {
                        h *= T::of(2.0);
                    }
                    other => return other,
                }
            }
        })
        .collect();
    results
        .into_iter()
        .map(|r| r.map(|res| res.frame))
        .collect()
}

/// Closed-form minimizer of `|O - O_i^T O_j|_HS` over `O(d)`: with
/// `O_i^T O_j = U S V^T`, the minimizer is `U V^T`.
///
/// Errors when `O_i^T O_j` is rank deficient — the frames are
/// near-perpendicular and the alignment is meaningless.
pub fn procrustes_align<T: Scalar>(o_i: &Frame<T>, o_j: &Frame<T>) -> Result<DMatrix<T>> {
    let m = o_i.basis.transpose() * &o_j.basis;
    polar_orthogonal(&m)
}

/// Orthogonal polar factor of a small square matrix via SVD.
fn polar_orthogonal<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = m.clone().svd(true, true);
    let sigma_min = svd
        .singular_values
        .iter()
        .fold(T::max_value().unwrap(), |a, &b| a.min(b));
    if sigma_min.as_f64() < 1e-8 {
        return Err(Error::RankDeficientAlignment {
            sigma_min: sigma_min.as_f64(),
        });
    }
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    Ok(u * v_t)
}

/// Determinant sign of the Procrustes alignment: the Z2 orientation
/// connection between two frames.
pub fn z2_connection<T: Scalar>(o_i: &Frame<T>, o_j: &Frame<T>) -> Result<T> {
    let o = procrustes_align(o_i, o_j)?;
    let det = o.determinant();
    Ok(if det >= T::zero() { T::one() } else { -T::one() })
}

/// Group-invariant distance `min over g in O(q) of |A - B g|_F`, with the
/// minimizer; solved in closed form from the SVD of `B^T A`.
pub fn invariant_distance<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<(T, DMatrix<T>)> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let m = b.transpose() * a;
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    // distance^2 = |A|^2 + |B|^2 - 2 sum sigma, attained at g = U V^T.
    let trace_sigma: T = svd.singular_values.iter().fold(T::zero(), |s, &x| s + x);
    let d2 = a.norm_squared() + b.norm_squared() - T::of(2.0) * trace_sigma;
    Ok((d2.max(T::zero()).sqrt(), u * v_t))
}

/// Advisory intrinsic-dimension estimate: the median over points of the
/// largest-spectral-gap index of the local PCA eigenvalues.
pub fn estimate_dimension<T: Scalar>(
    cloud: &PointCloud<T>,
    h_pca: T,
    spec: &KernelSpec,
) -> usize {
    assert!(cloud.len() >= 10, "dimension estimate needs n >= 10");
    let radius = h_pca.sqrt();
    let mut gaps: Vec<usize> = (0..cloud.len())
        .into_par_iter()
        .filter_map(|i| {
            let res = local_pca_weighted(cloud, i, radius, 1, |t| {
                spec.eval(1, t).unwrap_or_else(|_| T::zero())
            })
            .ok()?;
            let ev = &res.eigenvalues;
            if ev.len() < 2 {
                return Some(1);
            }
            let mut best = 0usize;
            let mut best_gap = T::min_value().unwrap();
            for k in 0..ev.len() - 1 {
                let gap = ev[k] - ev[k + 1];
                if gap > best_gap {
                    best_gap = gap;
                    best = k;
                }
            }
            Some(best + 1)
        })
        .collect();
    assert!(!gaps.is_empty(), "no point had enough neighbors");
    gaps.sort_unstable();
    gaps[gaps.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{DensitySpec, ManifoldModel};
    use crate::rng::CounterRng;

    fn random_orthogonal(d: usize, rng: &mut CounterRng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.next_normal());
        let qr = m.qr();
        let mut q = qr.q();
        if rng.next_f64() < 0.5 {
            // flip one column so both components of O(d) appear
            for r in 0..d {
                q[(r, 0)] = -q[(r, 0)];
            }
        }
        q
    }

    fn random_frame(p: usize, d: usize, rng: &mut CounterRng) -> Frame<f64> {
        let m = DMatrix::from_fn(p, d, |_, _| rng.next_normal());
        let qr = m.qr();
        Frame::new(qr.q().columns(0, d).into())
    }

    #[test]
    fn collinear_points_give_the_line_direction_and_zero_second_eigenvalue() {
        let dir = [0.6f64, 0.64, 0.48];
        let mut pts = Vec::new();
        for k in 0..12 {
            let t = 0.01 * k as f64;
            pts.extend_from_slice(&[t * dir[0], t * dir[1], t * dir[2]]);
        }
        let cloud = PointCloud::from_rows(pts, 12, 3).unwrap();
        let res = local_pca(&cloud, 0, 1.0, 1, &KernelSpec::gaussian()).unwrap();
        assert!(res.eigenvalues[1].abs() < 1e-18);
        let b = &res.frame.basis;
        let align: f64 = (0..3).map(|r| b[(r, 0)] * dir[r]).sum::<f64>().abs();
        assert!((align - 1.0).abs() < 1e-10, "direction misaligned: {align}");
    }

    #[test]
    fn too_few_neighbors_is_reported_with_the_count() {
        let pts = vec![0.0f64, 0.0, 10.0, 0.0, 20.0, 0.0];
        let cloud = PointCloud::from_rows(pts, 3, 2).unwrap();
        match local_pca(&cloud, 0, 0.01, 1, &KernelSpec::gaussian()) {
            Err(Error::TooFewNeighbors { found, need, .. }) => {
                assert_eq!(found, 0);
                assert_eq!(need, 1);
            }
            other => panic!("expected TooFewNeighbors, got {other:?}"),
        }
    }

    #[test]
    fn flat_weight_reduces_to_the_scatter_matrix() {
        let cloud: PointCloud<f64> = ManifoldModel::Sphere
            .sample(200, DensitySpec::Uniform, 31)
            .unwrap();
        let i = 7;
        let radius = 0.5f64;
        let res = local_pca_weighted(&cloud, i, radius, 2, |_| 1.0).unwrap();

        // Unweighted scatter oracle.
        let xi = cloud.point(i);
        let mut scatter = DMatrix::<f64>::zeros(3, 3);
        for j in 0..cloud.len() {
            if j == i {
                continue;
            }
            let xj = cloud.point(j);
            let d: Vec<f64> = (0..3).map(|k| xj[k] - xi[k]).collect();
            if d.iter().map(|v| v * v).sum::<f64>().sqrt() > radius {
                continue;
            }
            for r in 0..3 {
                for c in 0..3 {
                    scatter[(r, c)] += d[r] * d[c];
                }
            }
        }
        scatter /= (cloud.len() - 1) as f64;
        let mut eig: Vec<f64> = scatter.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..3 {
            assert!((res.eigenvalues[k] - eig[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_pca_frames_align_with_analytic_tangent_planes() {
        let n = 3000;
        let cloud: PointCloud<f64> = ManifoldModel::Sphere
            .sample(n, DensitySpec::Uniform, 37)
            .unwrap();
        let h_pca = default_h_pca(n, 2, 1.0);
        let spec = KernelSpec::gaussian();
        let mut angles: Vec<f64> = Vec::new();
        for i in 0..n {
            let est = match local_pca(&cloud, i, h_pca, 2, &spec) {
                Ok(r) => r.frame,
                Err(_) => continue,
            };
            let truth = ManifoldModel::Sphere.analytic_frame(cloud.point(i)).unwrap();
            let m = est.basis.transpose() * &truth.basis;
            let svd = m.svd(false, false);
            let sigma_min = svd.singular_values.iter().fold(1.0f64, |a, &b| a.min(b));
            angles.push(sigma_min.min(1.0).acos());
        }
        angles.sort_by(f64::total_cmp);
        let median = angles[angles.len() / 2];
        assert!(median < 0.1, "median principal angle {median}");
    }

    #[test]
    fn procrustes_recovers_exact_rotations() {
        let mut rng = CounterRng::new(41);
        for d in [1usize, 2, 3] {
            let o_i = random_frame(5, d, &mut rng);
            let same = procrustes_align(&o_i, &o_i).unwrap();
            for r in 0..d {
                for c in 0..d {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((same[(r, c)] - want).abs() < 1e-12);
                }
            }
            let rot = random_orthogonal(d, &mut rng);
            let o_j = Frame::new(&o_i.basis * &rot);
            let est = procrustes_align(&o_i, &o_j).unwrap();
            assert!((est - &rot).abs().max() < 1e-12);
        }
    }

    #[test]
    fn procrustes_output_is_orthogonal_and_attains_the_minimum() {
        let mut rng = CounterRng::new(43);
        let d = 3;
        for _ in 0..10 {
            let o_i = random_frame(6, d, &mut rng);
            let o_j = random_frame(6, d, &mut rng);
            let est = match procrustes_align(&o_i, &o_j) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let gram = &est * est.transpose();
            assert!((gram - DMatrix::<f64>::identity(d, d)).abs().max() < 1e-12);

            let target = o_i.basis.transpose() * &o_j.basis;
            let best = (&est - &target).norm();
            for _ in 0..1000 {
                let cand = random_orthogonal(d, &mut rng);
                assert!((cand - &target).norm() >= best - 1e-12);
            }
        }
    }

    #[test]
    fn procrustes_antisymmetry() {
        let mut rng = CounterRng::new(47);
        for _ in 0..20 {
            let o_i = random_frame(4, 2, &mut rng);
            let o_j = random_frame(4, 2, &mut rng);
            let (fwd, bwd) = match (procrustes_align(&o_i, &o_j), procrustes_align(&o_j, &o_i)) {
                (Ok(f), Ok(b)) => (f, b),
                _ => continue,
            };
            assert!((fwd.transpose() - bwd).abs().max() < 1e-12);
        }
    }

    #[test]
    fn perpendicular_frames_are_rejected() {
        let mut a = DMatrix::<f64>::zeros(4, 2);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let mut b = DMatrix::<f64>::zeros(4, 2);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        let r = procrustes_align(&Frame::new(a), &Frame::new(b));
        assert!(matches!(r, Err(Error::RankDeficientAlignment { .. })));
    }

    #[test]
    fn z2_signs() {
        let mut rng = CounterRng::new(53);
        let o_i = random_frame(5, 2, &mut rng);
        assert_eq!(z2_connection(&o_i, &o_i).unwrap(), 1.0);

        let mut flipped = o_i.basis.clone();
        for r in 0..5 {
            flipped[(r, 1)] = -flipped[(r, 1)];
        }
        let o_j = Frame::new(flipped);
        assert_eq!(z2_connection(&o_i, &o_j).unwrap(), -1.0);

        // Reciprocal signs multiply to +1.
        let o_k = random_frame(5, 2, &mut rng);
        let ab = z2_connection(&o_i, &o_k).unwrap();
        let ba = z2_connection(&o_k, &o_i).unwrap();
        assert_eq!(ab * ba, 1.0);
    }

    #[test]
    fn cylinder_frames_are_orientation_consistent() {
        let cloud: PointCloud<f64> = ManifoldModel::Cylinder
            .sample(200, DensitySpec::Uniform, 59)
            .unwrap();
        let frames = ManifoldModel::Cylinder.analytic_frames(&cloud).unwrap();
        // Graph edges are short-range; the determinant connection is only
        // meaningful for frames with substantial overlap.
        let mut checked = 0;
        for i in 0..cloud.len() {
            for j in (i + 1)..cloud.len() {
                let d2: f64 = cloud
                    .point(i)
                    .iter()
                    .zip(cloud.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2.sqrt() > 0.8 {
                    continue;
                }
                checked += 1;
                let s = z2_connection(&frames[i], &frames[j]).unwrap();
                assert_eq!(s, 1.0, "edge ({i},{j})");
            }
        }
        assert!(checked > 500, "too few nearby pairs exercised: {checked}");
    }

    #[test]
    fn invariant_distance_vanishes_on_orbits_and_recovers_the_aligner() {
        let mut rng = CounterRng::new(61);
        let a = DMatrix::<f64>::from_fn(6, 3, |_, _| rng.next_normal());
        let g = random_orthogonal(3, &mut rng);
        let b = &a * g.transpose(); // so that B g = A
        let (dist, minimizer) = invariant_distance(&a, &b).unwrap();
        assert!(dist < 1e-12, "orbit distance {dist}");
        assert!(((&b * &minimizer) - &a).abs().max() < 1e-12);
        assert!((minimizer - g).abs().max() < 1e-10);
    }

    #[test]
    fn invariant_distance_matches_grid_search_in_two_dimensions() {
        let mut rng = CounterRng::new(67);
        let a = DMatrix::<f64>::from_fn(4, 2, |_, _| rng.next_normal());
        let b = DMatrix::<f64>::from_fn(4, 2, |_, _| rng.next_normal());
        let (dist, _) = invariant_distance(&a, &b).unwrap();

        // Exhaustive search over rotations and reflections of O(2).
        let mut best = f64::INFINITY;
        for k in 0..200_000 {
            let th = std::f64::consts::TAU * k as f64 / 200_000.0;
            for refl in [1.0, -1.0] {
                let g = DMatrix::from_row_slice(
                    2,
                    2,
                    &[th.cos(), -refl * th.sin(), th.sin(), refl * th.cos()],
                );
                best = best.min((&a - &b * g).norm());
            }
        }
        assert!((dist - best).abs() < 1e-6, "svd {dist} vs grid {best}");
    }

    #[test]
    fn invariant_distance_is_symmetric_and_triangular() {
        let mut rng = CounterRng::new(71);
        for _ in 0..100 {
            let a = DMatrix::<f64>::from_fn(3, 2, |_, _| rng.next_normal());
            let b = DMatrix::<f64>::from_fn(3, 2, |_, _| rng.next_normal());
            let c = DMatrix::<f64>::from_fn(3, 2, |_, _| rng.next_normal());
            let (ab, _) = invariant_distance(&a, &b).unwrap();
            let (ba, _) = invariant_distance(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-9);
            let (ac, _) = invariant_distance(&a, &c).unwrap();
            let (cb, _) = invariant_distance(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = DMatrix::<f64>::zeros(3, 2);
        let b = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            invariant_distance(&a, &b),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dimension_estimates_on_catalogued_shapes() {
        let s2: PointCloud<f64> = ManifoldModel::Sphere
            .sample(2000, DensitySpec::Uniform, 73)
            .unwrap();
        let h = default_h_pca(2000, 2, 1.0);
        assert_eq!(estimate_dimension(&s2, h, &KernelSpec::gaussian()), 2);

        let s1: PointCloud<f64> = ManifoldModel::Circle
            .sample(1000, DensitySpec::Uniform, 79)
            .unwrap();
        let h = default_h_pca(1000, 1, 1.0);
        assert_eq!(estimate_dimension(&s1, h, &KernelSpec::gaussian()), 1);

        // Straight segment embedded in R^5.
        let mut pts = Vec::new();
        let dir = [0.2f64, 0.4, 0.4, 0.6, 0.561];
        for k in 0..50 {
            let t = k as f64 / 50.0;
            for v in dir {
                pts.push(t * v);
            }
        }
        let seg = PointCloud::from_rows(pts, 50, 5).unwrap();
        assert_eq!(estimate_dimension(&seg, 0.09, &KernelSpec::gaussian()), 1);
    }
}

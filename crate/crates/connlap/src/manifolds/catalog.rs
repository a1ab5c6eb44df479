//! Catalogued test fields and reference spectra.

use super::{DensitySpec, ManifoldModel, OperatorKind, ReferenceSpectrum};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A catalogued field evaluated at a point, in the coordinates of the
/// analytic frame there. For scalar fields the vectors have length 1.
#[derive(Debug, Clone)]
pub struct FieldSample<T> {
    /// Coefficients of X(x).
    pub value: Vec<T>,
    /// Coefficients of the connection Laplacian of X at x (trace of the
    /// second covariant derivative; negative on low eigenmodes).
    pub laplacian: Vec<T>,
    /// Coefficients of `2 grad X . grad(p^(1-alpha)) / p^(1-alpha)`.
    pub drift: Vec<T>,
}

pub fn field_fiber_dim(model: ManifoldModel, field_id: &str) -> Result<usize> {
    match (model, field_id) {
        (_, "one") => Ok(1),
        (ManifoldModel::Circle, "sin_theta") => Ok(1),
        (ManifoldModel::Interval, "cos_x") => Ok(1),
        (ManifoldModel::Sphere, "grad_h1") => Ok(2),
        _ => Err(Error::UnknownField(field_id.into(), model.name().into())),
    }
}

pub fn field<T: Scalar>(
    model: ManifoldModel,
    field_id: &str,
    x: &[T],
    density: DensitySpec,
    alpha: f64,
) -> Result<FieldSample<T>> {
    match (model, field_id) {
        (_, "one") => Ok(FieldSample {
            value: vec![T::one()],
            laplacian: vec![T::zero()],
            drift: vec![T::zero()],
        }),
        (ManifoldModel::Circle, "sin_theta") => {
            let theta = x[1].atan2(x[0]);
            let f = theta.sin();
            let fp = theta.cos();
            // For p proportional to 2 + sin(theta):
            //   grad log p^(1-alpha) = (1 - alpha) cos(theta) / (2 + sin(theta)).
            let drift = match density {
                DensitySpec::Uniform => T::zero(),
                DensitySpec::S1TwoPlusSin => {
                    let psi = (T::one() - T::of(alpha)) * theta.cos() / (T::of(2.0) + theta.sin());
                    T::of(2.0) * fp * psi
                }
            };
            Ok(FieldSample {
                value: vec![f],
                laplacian: vec![-f],
                drift: vec![drift],
            })
        }
        (ManifoldModel::Interval, "cos_x") => {
            let t = x[0];
            Ok(FieldSample {
                value: vec![t.cos()],
                laplacian: vec![-t.cos()],
                drift: vec![T::zero()],
            })
        }
        (ManifoldModel::Sphere, "grad_h1") => {
            // X = grad(z) = e3 - z x, an eigenfield of the connection
            // Laplacian on T(S^2) with eigenvalue -1.
            let z = x[2];
            let ambient = [-z * x[0], -z * x[1], T::one() - z * z];
            let fr = super::geometry::frame(model, x)?;
            let mut coeff = vec![T::zero(); 2];
            for c in 0..2 {
                let mut s = T::zero();
                for r in 0..3 {
                    s += fr.basis[(r, c)] * ambient[r];
                }
                coeff[c] = s;
            }
            let lap = coeff.iter().map(|&v| -v).collect();
            Ok(FieldSample {
                value: coeff,
                laplacian: lap,
                drift: vec![T::zero(); 2],
            })
        }
        _ => Err(Error::UnknownField(field_id.into(), model.name().into())),
    }
}

pub fn reference_spectrum(
    model: ManifoldModel,
    kind: OperatorKind,
    count: usize,
) -> Result<ReferenceSpectrum> {
    let entries: Vec<(f64, usize)> = match (model, kind) {
        // d^2/d theta^2 on 2*pi-periodic functions: 0, then k^2 twice
        // (sin k.theta, cos k.theta).
        (ManifoldModel::Circle, OperatorKind::LaplaceBeltrami) => (0..count)
            .map(|k| ((k * k) as f64, if k == 0 { 1 } else { 2 }))
            .collect(),
        // The tangent bundle of S^1 is flat and trivialized by the oriented
        // unit frame, so eigen-sections are scalar eigenfunctions times it.
        (ManifoldModel::Circle, OperatorKind::ConnectionLaplacianTangent) => (0..count)
            .map(|k| ((k * k) as f64, if k == 0 { 1 } else { 2 }))
            .collect(),
        // Neumann eigenfunctions cos(k x) on [0, pi].
        (ManifoldModel::Interval, OperatorKind::LaplaceBeltrami) => {
            (0..count).map(|k| ((k * k) as f64, 1)).collect()
        }
        // Spherical harmonics: l(l+1) with multiplicity 2l+1.
        (ManifoldModel::Sphere, OperatorKind::LaplaceBeltrami) => (0..count)
            .map(|l| ((l * (l + 1)) as f64, 2 * l + 1))
            .collect(),
        // Rough Laplacian on T(S^2): Hodge eigenvalue l(l+1) shifted by the
        // Ricci term (curvature 1), multiplicity 2(2l+1) from the exact and
        // coexact families, l >= 1. Strictly positive; confirmed numerically
        // by the Richardson extrapolation oracle in the test suite.
        (ManifoldModel::Sphere, OperatorKind::ConnectionLaplacianTangent) => (1..=count)
            .map(|l| ((l * (l + 1) - 1) as f64, 2 * (2 * l + 1)))
            .collect(),
        // Integer lattice: j^2 + k^2 over Z^2.
        (ManifoldModel::FlatTorus, OperatorKind::LaplaceBeltrami) => {
            lattice_spectrum(count, |j, k| (j * j + k * k) as f64)
        }
        // Product spectrum (m^2 from the circle, (k pi / H)^2 Neumann from
        // the segment).
        (ManifoldModel::Cylinder, OperatorKind::LaplaceBeltrami) => {
            let h = super::geometry::CYL_H;
            let mut items: Vec<(f64, usize)> = Vec::new();
            for m in 0..(count as i64 + 2) {
                for k in 0..(count as i64 + 2) {
                    let val = (m * m) as f64
                        + (k as f64 * std::f64::consts::PI / h).powi(2);
                    items.push((val, if m == 0 { 1 } else { 2 }));
                }
            }
            merge_sorted(items, count)
        }
        _ => return Err(Error::UncataloguedSpectrum(model.name().into(), kind)),
    };
    Ok(ReferenceSpectrum {
        operator_kind: kind,
        entries: entries.into_iter().take(count).collect(),
    })
}

fn lattice_spectrum(count: usize, f: impl Fn(i64, i64) -> f64) -> Vec<(f64, usize)> {
    let bound = (count as i64) + 2;
    let mut items = Vec::new();
    for j in -bound..=bound {
        for k in -bound..=bound {
            items.push((f(j, k), 1usize));
        }
    }
    merge_sorted(items, count)
}

fn merge_sorted(mut items: Vec<(f64, usize)>, count: usize) -> Vec<(f64, usize)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for (v, m) in items {
        match out.last_mut() {
            Some(last) if (last.0 - v).abs() < 1e-9 => last.1 += m,
            _ => out.push((v, m)),
        }
    }
    out.truncate(count);
    out
}

//! Analytic manifold catalog.
//!
//! Each model supplies i.i.d. samples, ground-truth tangent frames, closed-form
//! parallel transport where one exists, catalogued test fields, and reference
//! spectra. The catalog is fixed: S^1, the interval [0, pi] embedded as a
//! planar curve, S^2, the flat torus in R^4, the torus of revolution in R^3,
//! the Mobius band in R^3, the Klein bottle in R^4, and a finite cylinder in
//! R^3 — covering boundary/no-boundary, orientable/non-orientable, and
//! intrinsic dimensions 1 and 2.

mod catalog;
mod geometry;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Scalar;

pub use catalog::FieldSample;

/// Ambient tolerance for "this point lies on the manifold".
pub const EMBED_TOL: f64 = 1e-12;
/// Ambient tolerance for off-manifold inputs to frame/transport queries.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;
/// Ambient distance to the exact cut-locus set below which transport is zero.
pub const CUT_LOCUS_TOL: f64 = 1e-9;

/// The fixed manifold catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldModel {
    /// Unit circle in R^2.
    Circle,
    /// Segment [0, pi] x {0} in R^2; a curve with boundary.
    Interval,
    /// Unit sphere in R^3.
    Sphere,
    /// Flat torus (cos u, sin u, cos v, sin v) in R^4.
    FlatTorus,
    /// Torus of revolution in R^3 with radii R = 2, r = 1.
    TorusRev,
    /// Mobius band of half-width 1/2 in R^3.
    Mobius,
    /// Klein bottle of revolution in R^4 with radii R = 2, r = 1.
    Klein,
    /// Cylinder of height 2 in R^3, with two boundary circles.
    Cylinder,
}

pub const CATALOG: [ManifoldModel; 8] = [
    ManifoldModel::Circle,
    ManifoldModel::Interval,
    ManifoldModel::Sphere,
    ManifoldModel::FlatTorus,
    ManifoldModel::TorusRev,
    ManifoldModel::Mobius,
    ManifoldModel::Klein,
    ManifoldModel::Cylinder,
];

/// Sampling density on a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensitySpec {
    Uniform,
    /// On S^1 only: p(theta) proportional to 2 + sin(theta).
    S1TwoPlusSin,
}

impl DensitySpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DensitySpec::Uniform),
            "2+sin" | "two-plus-sin" => Ok(DensitySpec::S1TwoPlusSin),
            other => Err(Error::UnknownDensity(other.into(), "<any>".into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DensitySpec::Uniform => "uniform",
            DensitySpec::S1TwoPlusSin => "2+sin",
        }
    }
}

/// Which catalogued operator a reference spectrum refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    LaplaceBeltrami,
    ConnectionLaplacianTangent,
}

/// Catalogued exact spectrum: (eigenvalue, multiplicity), ascending.
#[derive(Debug, Clone)]
pub struct ReferenceSpectrum {
    pub operator_kind: OperatorKind,
    pub entries: Vec<(f64, usize)>,
}

impl ReferenceSpectrum {
    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &(v, m) in &self.entries {
            out.extend(std::iter::repeat_n(v, m));
        }
        out
    }
}

/// A sampled point set, optionally tagged with its source model.
#[derive(Debug, Clone)]
pub struct PointCloud<T> {
    points: Vec<T>,
    n: usize,
    p: usize,
    pub manifold: Option<ManifoldModel>,
    pub density: Option<DensitySpec>,
    /// True density p(x_i) when sampled analytically.
    pub density_values: Option<Vec<T>>,
    pub seed: u64,
}

impl<T: Scalar> PointCloud<T> {
    /// Wrap raw coordinates (row-major, `n x p`). Rows must be finite.
    pub fn from_rows(points: Vec<T>, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 || points.len() != n * p {
            return Err(Error::ShapeMismatch(format!(
                "point buffer {} != n*p = {}*{}",
                points.len(),
                n,
                p
            )));
        }
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedInput {
                path: "<memory>".into(),
                line: k / p + 1,
                what: "non-finite coordinate".into(),
            });
        }
        Ok(PointCloud {
            points,
            n,
            p,
            manifold: None,
            density: None,
            density_values: None,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.p
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.points.chunks_exact(self.p)
    }
}

/// Column-orthonormal basis of an embedded tangent plane.
#[derive(Debug, Clone)]
pub struct Frame<T> {
    /// Index into the owning cloud, when the frame sits on a sampled point.
    pub base_point_index: Option<usize>,
    /// `p x d`, columns orthonormal.
    pub basis: DMatrix<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(basis: DMatrix<T>) -> Self {
        Frame {
            base_point_index: None,
            basis,
        }
    }

    pub fn at(mut self, index: usize) -> Self {
        self.base_point_index = Some(index);
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Max deviation of basis^T basis from the identity.
    pub fn orthonormality_defect(&self) -> T {
        let g = self.basis.transpose() * &self.basis;
        let d = self.basis.ncols();
        let mut worst = T::zero();
        for r in 0..d {
            for c in 0..d {
                let want = if r == c { T::one() } else { T::zero() };
                worst = worst.max((g[(r, c)] - want).abs());
            }
        }
        worst
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        if self.orthonormality_defect().as_f64() > 1e-10 {
            Err(Error::NonOrthonormalFrame(index))
        } else {
            Ok(())
        }
    }
}

impl ManifoldModel {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "s1" | "circle" => Ok(ManifoldModel::Circle),
            "interval" => Ok(ManifoldModel::Interval),
            "s2" | "sphere" => Ok(ManifoldModel::Sphere),
            "flat-torus" | "flat_torus" | "t2-flat" => Ok(ManifoldModel::FlatTorus),
            "torus" => Ok(ManifoldModel::TorusRev),
            "mobius" => Ok(ManifoldModel::Mobius),
            "klein" => Ok(ManifoldModel::Klein),
            "cylinder" => Ok(ManifoldModel::Cylinder),
            other => Err(Error::UnknownManifold(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldModel::Circle => "s1",
            ManifoldModel::Interval => "interval",
            ManifoldModel::Sphere => "s2",
            ManifoldModel::FlatTorus => "flat-torus",
            ManifoldModel::TorusRev => "torus",
            ManifoldModel::Mobius => "mobius",
            ManifoldModel::Klein => "klein",
            ManifoldModel::Cylinder => "cylinder",
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldModel::Circle | ManifoldModel::Interval => 1,
            _ => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldModel::Circle | ManifoldModel::Interval => 2,
            ManifoldModel::Sphere
            | ManifoldModel::TorusRev
            | ManifoldModel::Mobius
            | ManifoldModel::Cylinder => 3,
            ManifoldModel::FlatTorus | ManifoldModel::Klein => 4,
        }
    }

    /// Fiber dimension of the tangent bundle (q = d). Scalar and Z2 settings
    /// use q = 1 regardless, chosen by the connection source.
    pub fn fiber_dim(&self) -> usize {
        self.intrinsic_dim()
    }

    pub fn has_boundary(&self) -> bool {
        matches!(
            self,
            ManifoldModel::Interval | ManifoldModel::Mobius | ManifoldModel::Cylinder
        )
    }

    pub fn orientable(&self) -> bool {
        !matches!(self, ManifoldModel::Mobius | ManifoldModel::Klein)
    }

    /// Riemannian volume (area/length) of the model.
    pub fn volume(&self) -> f64 {
        geometry::volume(*self)
    }

    /// Ambient diameter (sup pairwise Euclidean distance), used to scale
    /// bandwidth defaults across models of different physical size.
    pub fn ambient_diameter(&self) -> f64 {
        match self {
            ManifoldModel::Circle => 2.0,
            ManifoldModel::Interval => std::f64::consts::PI,
            ManifoldModel::Sphere => 2.0,
            // Opposite outer-equator points.
            ManifoldModel::TorusRev => 2.0 * (geometry::TORUS_R + geometry::TORUS_SMALL_R),
            ManifoldModel::FlatTorus => 2.0 * std::f64::consts::SQRT_2,
            ManifoldModel::Mobius => 3.0,
            ManifoldModel::Klein => {
                let reach = geometry::KLEIN_R + geometry::KLEIN_SMALL_R;
                (4.0 * reach * reach + 4.0 * geometry::KLEIN_SMALL_R.powi(2)).sqrt()
            }
            ManifoldModel::Cylinder => (4.0 + geometry::CYL_H * geometry::CYL_H).sqrt(),
        }
    }

    /// Ambient residual of the model's embedding equation at `x`.
    pub fn embedding_residual<T: Scalar>(&self, x: &[T]) -> T {
        geometry::embedding_residual(*self, x)
    }

    /// Geodesic distance from `x` to the boundary, `None` for closed models.
    pub fn boundary_distance<T: Scalar>(&self, x: &[T]) -> Option<T> {
        geometry::boundary_distance(*self, x)
    }

    /// Draw `n` i.i.d. samples. Each point uses its own counter stream, so the
    /// result is independent of evaluation order and thread count.
    pub fn sample<T: Scalar>(&self, n: usize, density: DensitySpec, seed: u64) -> Result<PointCloud<T>> {
        if n < 2 {
            return Err(Error::TooFewPoints { need: 2, got: n });
        }
        if density == DensitySpec::S1TwoPlusSin && *self != ManifoldModel::Circle {
            return Err(Error::UnknownDensity(density.name().into(), self.name().into()));
        }
        let p = self.ambient_dim();
        let model = *self;
        let draws: Vec<(Vec<T>, T)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = CounterRng::stream(seed, i as u64);
                geometry::draw_point::<T>(model, density, &mut rng)
            })
            .collect();
        let mut points = Vec::with_capacity(n * p);
        let mut dens = Vec::with_capacity(n);
        for (x, pv) in draws {
            debug_assert_eq!(x.len(), p);
            points.extend_from_slice(&x);
            dens.push(pv);
        }
        // 1e-12 in f64; widened for coarser scalar types.
        let tol = EMBED_TOL.max(8.0 * T::machine_epsilon());
        for row in points.chunks_exact(p) {
            let res = self.embedding_residual(row).as_f64();
            assert!(res <= tol, "sampled point off manifold by {res:.3e}");
        }
        Ok(PointCloud {
            points,
            n,
            p,
            manifold: Some(model),
            density: Some(density),
            density_values: Some(dens),
            seed,
        })
    }

    /// Closed-form orthonormal tangent frame at `x`.
    pub fn analytic_frame<T: Scalar>(&self, x: &[T]) -> Result<Frame<T>> {
        let res = self.embedding_residual(x).as_f64();
        if res > ON_MANIFOLD_TOL {
            return Err(Error::OffManifold {
                dist: res,
                tol: ON_MANIFOLD_TOL,
            });
        }
        geometry::frame(*self, x)
    }

    /// Frames at every cloud point.
    pub fn analytic_frames<T: Scalar>(&self, cloud: &PointCloud<T>) -> Result<Vec<Frame<T>>> {
        (0..cloud.len())
            .map(|i| Ok(self.analytic_frame(cloud.point(i))?.at(i)))
            .collect()
    }

    /// Parallel transport along the minimizing geodesic from `y` to `x`,
    /// expressed in the given frames: `g = frame_x^T (//^x_y frame_y)`.
    /// Returns the zero matrix when `y` lies in the cut locus of `x`.
    pub fn analytic_transport<T: Scalar>(
        &self,
        x: &[T],
        y: &[T],
        frame_x: &Frame<T>,
        frame_y: &Frame<T>,
    ) -> Result<DMatrix<T>> {
        geometry::transport(*self, x, y, frame_x, frame_y)
    }

    /// Catalogued test field at `x`: coefficients of X, of `div grad X`, and
    /// of the density-drift term `2 grad X . grad(p^(1-alpha)) / p^(1-alpha)`,
    /// all in the analytic frame at `x` (scalars for q = 1 fields).
    pub fn analytic_field<T: Scalar>(
        &self,
        field_id: &str,
        x: &[T],
        density: DensitySpec,
        alpha: f64,
    ) -> Result<FieldSample<T>> {
        catalog::field(*self, field_id, x, density, alpha)
    }

    /// Fiber dimension of a catalogued field (1 for scalar fields, d for
    /// tangent fields).
    pub fn field_fiber_dim(&self, field_id: &str) -> Result<usize> {
        catalog::field_fiber_dim(*self, field_id)
    }

    /// First `count` catalogued eigenvalues with multiplicities.
    pub fn reference_spectrum(&self, kind: OperatorKind, count: usize) -> Result<ReferenceSpectrum> {
        catalog::reference_spectrum(*self, kind, count)
    }
}

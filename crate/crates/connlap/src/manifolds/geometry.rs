//! Per-model geometry: embeddings, sampling, frames, parallel transport.
//!
//! All math is generic over the scalar type; random draws come in as `f64`
//! uniforms and are converted before any geometry is computed.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::{DensitySpec, Frame, ManifoldModel, CUT_LOCUS_TOL, ON_MANIFOLD_TOL};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Scalar;

/// Torus of revolution radii.
pub const TORUS_R: f64 = 2.0;
pub const TORUS_SMALL_R: f64 = 1.0;
/// Klein bottle radii: a shorter ring keeps the orientation-reversing mode
/// of its double cover well separated from zero.
pub const KLEIN_R: f64 = 1.5;
pub const KLEIN_SMALL_R: f64 = 1.0;
/// Mobius band half-width.
pub const MOBIUS_W: f64 = 0.5;
/// Cylinder height.
pub const CYL_H: f64 = 2.0;

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
fn cross3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn normalize<T: Scalar, const N: usize>(v: [T; N]) -> [T; N] {
    let n = norm(&v);
    v.map(|x| x / n)
}

fn unit_frame<T: Scalar>(cols: &[&[T]]) -> Frame<T> {
    let p = cols[0].len();
    let mut m = DMatrix::zeros(p, cols.len());
    for (c, col) in cols.iter().enumerate() {
        for r in 0..p {
            m[(r, c)] = col[r];
        }
    }
    Frame::new(m)
}

/// Wrap an angle into [0, 2*pi).
#[inline]
fn wrap_angle<T: Scalar>(a: T) -> T {
    let tau = T::of(std::f64::consts::TAU);
    let mut a = a % tau;
    if a < T::zero() {
        a += tau;
    }
    a
}

// ---------------------------------------------------------------------------
// Embeddings and charts
// ---------------------------------------------------------------------------

fn mobius_embed<T: Scalar>(u: T, v: T) -> [T; 3] {
    let (c, s) = ((u / T::of(2.0)).cos(), (u / T::of(2.0)).sin());
    let rad = T::one() + v * c;
    [rad * u.cos(), rad * u.sin(), v * s]
}

/// Recover Mobius parameters (u in [0, 2pi), v) from an ambient point.
fn mobius_params<T: Scalar>(x: &[T]) -> (T, T) {
    let u = wrap_angle(x[1].atan2(x[0]));
    let (c, s) = ((u / T::of(2.0)).cos(), (u / T::of(2.0)).sin());
    let rad = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let v = (rad - T::one()) * c + x[2] * s;
    (u, v)
}

/// Mobius partial derivative in `u` (the `v` direction is the unit vector
/// (c cos u, c sin u, s)); the two are orthogonal.
fn mobius_du<T: Scalar>(u: T, v: T) -> [T; 3] {
    let two = T::of(2.0);
    let (c, s) = ((u / two).cos(), (u / two).sin());
    let rad = T::one() + v * c;
    let dc = -s / two;
    let ds = c / two;
    [
        -rad * u.sin() + v * dc * u.cos(),
        rad * u.cos() + v * dc * u.sin(),
        v * ds,
    ]
}

fn klein_embed<T: Scalar>(u: T, v: T) -> [T; 4] {
    let (cr, sr) = (T::of(KLEIN_R), T::of(KLEIN_SMALL_R));
    let rad = cr + sr * v.cos();
    let (ch, sh) = ((u / T::of(2.0)).cos(), (u / T::of(2.0)).sin());
    [rad * u.cos(), rad * u.sin(), sr * v.sin() * ch, sr * v.sin() * sh]
}

fn klein_params<T: Scalar>(x: &[T]) -> (T, T) {
    let u = wrap_angle(x[1].atan2(x[0]));
    let (ch, sh) = ((u / T::of(2.0)).cos(), (u / T::of(2.0)).sin());
    let rad = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let r = T::of(KLEIN_SMALL_R);
    let cv = (rad - T::of(KLEIN_R)) / r;
    let sv = (x[2] * ch + x[3] * sh) / r;
    (u, sv.atan2(cv))
}

fn klein_du<T: Scalar>(u: T, v: T) -> [T; 4] {
    let r = T::of(KLEIN_SMALL_R);
    let rad = T::of(KLEIN_R) + r * v.cos();
    let two = T::of(2.0);
    let (ch, sh) = ((u / two).cos(), (u / two).sin());
    [
        -rad * u.sin(),
        rad * u.cos(),
        -r * v.sin() * sh / two,
        r * v.sin() * ch / two,
    ]
}

fn klein_dv<T: Scalar>(u: T, v: T) -> [T; 4] {
    let r = T::of(KLEIN_SMALL_R);
    let two = T::of(2.0);
    let (ch, sh) = ((u / two).cos(), (u / two).sin());
    [
        -r * v.sin() * u.cos(),
        -r * v.sin() * u.sin(),
        r * v.cos() * ch,
        r * v.cos() * sh,
    ]
}

fn torus_params<T: Scalar>(x: &[T]) -> (T, T) {
    let phi = x[1].atan2(x[0]);
    let rad = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let theta = x[2].atan2(rad - T::of(TORUS_R));
    (theta, phi)
}

// ---------------------------------------------------------------------------
// Embedding residuals, volumes, boundary distances
// ---------------------------------------------------------------------------

pub fn embedding_residual<T: Scalar>(model: ManifoldModel, x: &[T]) -> T {
    match model {
        ManifoldModel::Circle | ManifoldModel::Sphere => (norm(x) - T::one()).abs(),
        ManifoldModel::Interval => {
            let outside = (-x[0]).max(x[0] - T::PI()).max(T::zero());
            (x[1] * x[1] + outside * outside).sqrt()
        }
        ManifoldModel::FlatTorus => {
            let a = ((x[0] * x[0] + x[1] * x[1]).sqrt() - T::one()).abs();
            let b = ((x[2] * x[2] + x[3] * x[3]).sqrt() - T::one()).abs();
            (a * a + b * b).sqrt()
        }
        ManifoldModel::TorusRev => {
            let rad = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let dr = rad - T::of(TORUS_R);
            ((dr * dr + x[2] * x[2]).sqrt() - T::of(TORUS_SMALL_R)).abs()
        }
        ManifoldModel::Mobius => {
            let (u, v) = mobius_params(x);
            let y = mobius_embed(u, v);
            let mut d = [T::zero(); 3];
            for k in 0..3 {
                d[k] = x[k] - y[k];
            }
            let outside = (v.abs() - T::of(MOBIUS_W)).max(T::zero());
            (dot(&d, &d) + outside * outside).sqrt()
        }
        ManifoldModel::Klein => {
            let (u, v) = klein_params(x);
            let y = klein_embed(u, v);
            let mut s = T::zero();
            for k in 0..4 {
                let d = x[k] - y[k];
                s += d * d;
            }
            s.sqrt()
        }
        ManifoldModel::Cylinder => {
            let a = ((x[0] * x[0] + x[1] * x[1]).sqrt() - T::one()).abs();
            let outside = (-x[2]).max(x[2] - T::of(CYL_H)).max(T::zero());
            (a * a + outside * outside).sqrt()
        }
    }
}

pub fn volume(model: ManifoldModel) -> f64 {
    use std::f64::consts::PI;
    match model {
        ManifoldModel::Circle => 2.0 * PI,
        ManifoldModel::Interval => PI,
        ManifoldModel::Sphere => 4.0 * PI,
        ManifoldModel::FlatTorus => 4.0 * PI * PI,
        ManifoldModel::TorusRev => 4.0 * PI * PI * TORUS_R * TORUS_SMALL_R,
        ManifoldModel::Mobius => {
            static AREA: OnceLock<f64> = OnceLock::new();
            *AREA.get_or_init(|| {
                // 2-d Simpson over the (u, v) chart; the area element is
                // sqrt((1 + v cos(u/2))^2 + v^2/4).
                let f = |u: f64, v: f64| {
                    let du = mobius_du::<f64>(u, v);
                    norm(&du)
                };
                simpson2(f, 0.0, 2.0 * PI, -MOBIUS_W, MOBIUS_W, 400)
            })
        }
        ManifoldModel::Klein => {
            static AREA: OnceLock<f64> = OnceLock::new();
            *AREA.get_or_init(|| {
                let f = |v: f64| {
                    let rad = KLEIN_R + KLEIN_SMALL_R * v.cos();
                    let tw = KLEIN_SMALL_R * v.sin() / 2.0;
                    KLEIN_SMALL_R * (rad * rad + tw * tw).sqrt()
                };
                2.0 * PI * simpson1(f, 0.0, 2.0 * PI, 4000)
            })
        }
        ManifoldModel::Cylinder => 2.0 * PI * CYL_H,
    }
}

fn simpson1(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn simpson2(
    f: impl Fn(f64, f64) -> f64 + Copy,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    n: usize,
) -> f64 {
    simpson1(|u| simpson1(|v| f(u, v), c, d, n), a, b, n)
}

pub fn boundary_distance<T: Scalar>(model: ManifoldModel, x: &[T]) -> Option<T> {
    match model {
        ManifoldModel::Interval => Some(x[0].min(T::PI() - x[0]).max(T::zero())),
        ManifoldModel::Mobius => {
            let (_, v) = mobius_params(x);
            Some((T::of(MOBIUS_W) - v.abs()).max(T::zero()))
        }
        ManifoldModel::Cylinder => Some(x[2].min(T::of(CYL_H) - x[2]).max(T::zero())),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draw one point and its true density from the given per-index stream.
pub fn draw_point<T: Scalar>(
    model: ManifoldModel,
    density: DensitySpec,
    rng: &mut CounterRng,
) -> (Vec<T>, T) {
    let tau = std::f64::consts::TAU;
    match model {
        ManifoldModel::Circle => match density {
            DensitySpec::Uniform => {
                let th = T::of(rng.range(0.0, tau));
                (vec![th.cos(), th.sin()], T::of(1.0 / tau))
            }
            DensitySpec::S1TwoPlusSin => loop {
                let th = rng.range(0.0, tau);
                if rng.next_f64() * 3.0 < 2.0 + th.sin() {
                    let t = T::of(th);
                    let p = T::of((2.0 + th.sin()) / (2.0 * tau));
                    break (vec![t.cos(), t.sin()], p);
                }
            },
        },
        ManifoldModel::Interval => {
            let t = T::of(rng.range(0.0, std::f64::consts::PI));
            (vec![t, T::zero()], T::of(1.0 / std::f64::consts::PI))
        }
        ManifoldModel::Sphere => {
            let z = rng.range(-1.0, 1.0);
            let phi = rng.range(0.0, tau);
            let rho = (1.0 - z * z).max(0.0).sqrt();
            (
                vec![T::of(rho * phi.cos()), T::of(rho * phi.sin()), T::of(z)],
                T::of(1.0 / (4.0 * std::f64::consts::PI)),
            )
        }
        ManifoldModel::FlatTorus => {
            let u = T::of(rng.range(0.0, tau));
            let v = T::of(rng.range(0.0, tau));
            (
                vec![u.cos(), u.sin(), v.cos(), v.sin()],
                T::of(1.0 / (tau * tau)),
            )
        }
        ManifoldModel::TorusRev => {
            let phi = rng.range(0.0, tau);
            let theta = loop {
                let th = rng.range(0.0, tau);
                let accept = (TORUS_R + TORUS_SMALL_R * th.cos()) / (TORUS_R + TORUS_SMALL_R);
                if rng.next_f64() < accept {
                    break th;
                }
            };
            let rad = TORUS_R + TORUS_SMALL_R * theta.cos();
            (
                vec![
                    T::of(rad * phi.cos()),
                    T::of(rad * phi.sin()),
                    T::of(TORUS_SMALL_R * theta.sin()),
                ],
                T::of(1.0 / volume(ManifoldModel::TorusRev)),
            )
        }
        ManifoldModel::Mobius => {
            let bound = ((1.0 + MOBIUS_W).powi(2) + MOBIUS_W * MOBIUS_W / 4.0).sqrt();
            let (u, v) = loop {
                let u = rng.range(0.0, tau);
                let v = rng.range(-MOBIUS_W, MOBIUS_W);
                let elem = norm(&mobius_du::<f64>(u, v));
                if rng.next_f64() * bound < elem {
                    break (u, v);
                }
            };
            (
                mobius_embed(T::of(u), T::of(v)).to_vec(),
                T::of(1.0 / volume(ManifoldModel::Mobius)),
            )
        }
        ManifoldModel::Klein => {
            let r = KLEIN_SMALL_R;
            let bound = r * ((KLEIN_R + r).powi(2) + r * r / 4.0).sqrt();
            let (u, v) = loop {
                let u = rng.range(0.0, tau);
                let v = rng.range(0.0, tau);
                let rad = KLEIN_R + r * v.cos();
                let tw = r * v.sin() / 2.0;
                let elem = r * (rad * rad + tw * tw).sqrt();
                if rng.next_f64() * bound < elem {
                    break (u, v);
                }
            };
            (
                klein_embed(T::of(u), T::of(v)).to_vec(),
                T::of(1.0 / volume(ManifoldModel::Klein)),
            )
        }
        ManifoldModel::Cylinder => {
            let th = T::of(rng.range(0.0, tau));
            let z = T::of(rng.range(0.0, CYL_H));
            (
                vec![th.cos(), th.sin(), z],
                T::of(1.0 / volume(ManifoldModel::Cylinder)),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// Sphere chart: frame derived from rotation axis `a`, right-handed with the
/// outward normal. Fails within `tol` of the chart's poles +-a.
fn sphere_chart_frame<T: Scalar>(x: &[T; 3], axis: usize) -> Result<Frame<T>> {
    let mut a = [T::zero(); 3];
    a[axis] = T::one();
    let e1 = cross3(&a, x);
    let n1 = norm(&e1);
    if n1.as_f64() < 1e-6 {
        return Err(Error::ChartSingularity);
    }
    let e1 = normalize(e1);
    let e2 = cross3(x, &e1);
    Ok(unit_frame(&[&e1, &e2]))
}

pub fn frame<T: Scalar>(model: ManifoldModel, x: &[T]) -> Result<Frame<T>> {
    match model {
        ManifoldModel::Circle => Ok(unit_frame(&[&[-x[1], x[0]]])),
        ManifoldModel::Interval => Ok(unit_frame(&[&[T::one(), T::zero()]])),
        ManifoldModel::Sphere => {
            let xx = [x[0], x[1], x[2]];
            // Two overlapping charts; take the one whose poles are farther.
            let axis = if x[2].abs() <= x[0].abs() { 2 } else { 0 };
            sphere_chart_frame(&xx, axis).or_else(|_| sphere_chart_frame(&xx, 2 - axis))
        }
        ManifoldModel::FlatTorus => Ok(unit_frame(&[
            &[-x[1], x[0], T::zero(), T::zero()],
            &[T::zero(), T::zero(), -x[3], x[2]],
        ])),
        ManifoldModel::TorusRev => {
            let (theta, phi) = torus_params(x);
            let e_theta = [
                -theta.sin() * phi.cos(),
                -theta.sin() * phi.sin(),
                theta.cos(),
            ];
            let e_phi = [-phi.sin(), phi.cos(), T::zero()];
            Ok(unit_frame(&[&e_theta, &e_phi]))
        }
        ManifoldModel::Mobius => {
            let (u, v) = mobius_params(x);
            let du = mobius_du(u, v);
            let e1 = normalize(du);
            let (c, s) = ((u / T::of(2.0)).cos(), (u / T::of(2.0)).sin());
            let e2 = [c * u.cos(), c * u.sin(), s];
            Ok(unit_frame(&[&e1, &e2]))
        }
        ManifoldModel::Klein => {
            let (u, v) = klein_params(x);
            let e1 = normalize(klein_du(u, v));
            let e2 = normalize(klein_dv(u, v));
            Ok(unit_frame(&[&e1, &e2]))
        }
        ManifoldModel::Cylinder => Ok(unit_frame(&[
            &[-x[1], x[0], T::zero()],
            &[T::zero(), T::zero(), T::one()],
        ])),
    }
}

// ---------------------------------------------------------------------------
// Parallel transport
// ---------------------------------------------------------------------------

/// Rotation in span(y, x) taking y to x, identity on the complement;
/// this is parallel transport along the minimizing great-circle arc.
fn sphere_rotate<T: Scalar>(x: &[T; 3], y: &[T; 3], v: &[T; 3]) -> [T; 3] {
    let c = dot(x, y).clamp(-T::one(), T::one());
    let axis = cross3(y, x);
    let s = norm(&axis);
    if s.as_f64() < 1e-300 {
        return *v; // x == y
    }
    let n = normalize(axis);
    let nv = cross3(&n, v);
    let ndv = dot(&n, v);
    let mut out = [T::zero(); 3];
    for k in 0..3 {
        out[k] = v[k] * c + nv[k] * s + n[k] * ndv * (T::one() - c);
    }
    out
}

pub fn transport<T: Scalar>(
    model: ManifoldModel,
    x: &[T],
    y: &[T],
    frame_x: &Frame<T>,
    frame_y: &Frame<T>,
) -> Result<DMatrix<T>> {
    for (pt, label) in [(x, "x"), (y, "y")] {
        let res = embedding_residual(model, pt).as_f64();
        if res > ON_MANIFOLD_TOL {
            let _ = label;
            return Err(Error::OffManifold {
                dist: res,
                tol: ON_MANIFOLD_TOL,
            });
        }
    }
    let q = model.fiber_dim();
    let zero = || DMatrix::<T>::zeros(q, q);
    match model {
        ManifoldModel::Circle => {
            // Flat connection; frames (-sin, cos) are globally parallel.
            let mut sum = T::zero();
            for k in 0..2 {
                let s = x[k] + y[k];
                sum += s * s;
            }
            if sum.sqrt().as_f64() <= CUT_LOCUS_TOL {
                Ok(zero())
            } else {
                Ok(DMatrix::identity(1, 1))
            }
        }
        ManifoldModel::Interval => Ok(DMatrix::identity(1, 1)),
        ManifoldModel::Sphere => {
            let xx = [x[0], x[1], x[2]];
            let yy = [y[0], y[1], y[2]];
            let mut sum = T::zero();
            for k in 0..3 {
                let s = x[k] + y[k];
                sum += s * s;
            }
            if sum.sqrt().as_f64() <= CUT_LOCUS_TOL {
                return Ok(zero());
            }
            let mut g = DMatrix::zeros(2, 2);
            for c in 0..2 {
                let col = [frame_y.basis[(0, c)], frame_y.basis[(1, c)], frame_y.basis[(2, c)]];
                let moved = sphere_rotate(&xx, &yy, &col);
                for r in 0..2 {
                    let fr = [frame_x.basis[(0, r)], frame_x.basis[(1, r)], frame_x.basis[(2, r)]];
                    g[(r, c)] = dot(&fr, &moved);
                }
            }
            Ok(g)
        }
        ManifoldModel::FlatTorus => {
            // Flat; the coordinate frames are globally parallel. Cut locus
            // where either angular offset reaches pi.
            let du = angle_between(x[0], x[1], y[0], y[1]);
            let dv = angle_between(x[2], x[3], y[2], y[3]);
            let pi = T::PI();
            if (pi - du).min(pi - dv).as_f64() <= CUT_LOCUS_TOL {
                Ok(zero())
            } else {
                Ok(DMatrix::identity(2, 2))
            }
        }
        ManifoldModel::Cylinder => {
            let dth = angle_between(x[0], x[1], y[0], y[1]);
            if (T::PI() - dth).as_f64() <= CUT_LOCUS_TOL {
                Ok(zero())
            } else {
                Ok(DMatrix::identity(2, 2))
            }
        }
        ManifoldModel::TorusRev | ManifoldModel::Mobius | ManifoldModel::Klein => {
            Err(Error::NoClosedFormTransport(model.name().into()))
        }
    }
}

/// Unsigned angle between planar directions (a0, a1) and (b0, b1).
fn angle_between<T: Scalar>(a0: T, a1: T, b0: T, b1: T) -> T {
    let c = (a0 * b0 + a1 * b1).clamp(-T::one(), T::one());
    c.acos()
}

//! Connection graphs and their block operators.
//!
//! An affinity graph carries the alpha-normalized kernel weights and degrees;
//! attaching a per-edge orthogonal connection turns it into a connection
//! graph, from which the block operators `S`, `D`, `L = D - S`,
//! `I - D^{-1} S`, and `D^{-1/2} S D^{-1/2}` are assembled.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{normalized_kernel, KernelSpec};
use crate::manifolds::{Frame, ManifoldModel, PointCloud};
use crate::scalar::Scalar;
use crate::sparse::{SymBlockMatrix, SymMatrix};
use crate::tangent;

/// Symmetric weighted graph with degrees.
#[derive(Debug, Clone)]
pub struct AffinityGraph<T> {
    pub weights: SymMatrix<T>,
    /// `d_i = sum_j w_ij` (self term included), accumulated in ascending j.
    pub degrees: Vec<T>,
    pub alpha: f64,
    pub bandwidth: T,
    /// Vertices whose degree is carried by the self loop alone after
    /// truncation. Recorded as a warning, never fatal.
    pub isolated: Vec<usize>,
}

impl<T: Scalar> AffinityGraph<T> {
    pub fn n(&self) -> usize {
        self.weights.n()
    }

    /// Wrap an explicit symmetric nonnegative weight matrix (tests and small
    /// synthetic graphs). The diagonal plays the role of the self loops.
    pub fn from_dense_weights(w: &DMatrix<T>, h: T, alpha: f64) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::ShapeMismatch(format!("{}x{}", w.nrows(), w.ncols())));
        }
        for i in 0..n {
            for j in 0..n {
                if w[(i, j)] < T::zero() {
                    return Err(Error::InvalidConfig("negative weight".into()));
                }
                if w[(i, j)] != w[(j, i)] {
                    return Err(Error::InvalidConfig("weights not symmetric".into()));
                }
            }
        }
        let pattern = crate::sparse::SymPattern::dense(n);
        let mut vals = vec![T::zero(); pattern.nnz()];
        for i in 0..n {
            for (j, e) in pattern.row_upper(i) {
                vals[e] = w[(i, j)];
            }
        }
        let weights = SymMatrix::new(pattern, vals);
        let degrees = weights.row_sums();
        if let Some(i) = degrees.iter().position(|&d| d <= T::zero()) {
            return Err(Error::InvalidConfig(format!("vertex {i} has zero degree")));
        }
        Ok(AffinityGraph {
            weights,
            degrees,
            alpha,
            bandwidth: h,
            isolated: Vec::new(),
        })
    }
}

/// `w_ij = K_hat_{h,alpha,n}(x_i, x_j)` with degrees; the graph is complete
/// up to kernel truncation.
pub fn build_affinity<T: Scalar>(
    cloud: &PointCloud<T>,
    spec: &KernelSpec,
    h: T,
    alpha: f64,
    d: usize,
) -> AffinityGraph<T> {
    let (weights, _density) = normalized_kernel(cloud, spec, h, alpha, d);
    let degrees = weights.row_sums();
    let mut isolated = Vec::new();
    for i in 0..weights.n() {
        let has_upper_neighbor = weights.pattern.row_upper(i).any(|(j, _)| j != i);
        let has_lower_neighbor = weights.pattern.row_mirror(i).next().is_some();
        if !has_upper_neighbor && !has_lower_neighbor {
            isolated.push(i);
        }
    }
    AffinityGraph {
        weights,
        degrees,
        alpha,
        bandwidth: h,
        isolated,
    }
}

/// Where the per-edge connection comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionSource {
    /// q = 1, g = 1: the plain graph Laplacian setting.
    Trivial,
    /// Closed-form parallel transport in the supplied frames.
    Analytic,
    /// Procrustes alignment of estimated (or analytic) frames.
    EstimatedPca,
    /// Determinant sign of the frame alignment: q = 1, g = +-1.
    Z2Determinant,
}

/// A connection graph: weights plus one orthogonal `q x q` matrix per
/// unordered edge (`g_ji = g_ij^T` held implicitly; `g_ii = I`).
///
/// Cut-locus pairs and rank-deficient alignments store the zero block: the
/// transport convention sets them to zero, and their kernel weight is
/// negligible by construction.
#[derive(Debug)]
pub struct ConnectionGraph<T> {
    pub affinity: AffinityGraph<T>,
    pub q: usize,
    /// Per-edge connection `g_ij`, same pattern as the weights.
    pub connections: SymBlockMatrix<T>,
    pub source: ConnectionSource,
    s_cache: OnceLock<Arc<SymBlockMatrix<T>>>,
}

impl<T: Scalar> ConnectionGraph<T> {
    pub fn n(&self) -> usize {
        self.affinity.n()
    }

    pub fn dim(&self) -> usize {
        self.n() * self.q
    }

    /// Assembled `S` blocks (`w_ij g_ij`), built once and shared.
    fn s_blocks(&self) -> Arc<SymBlockMatrix<T>> {
        self.s_cache
            .get_or_init(|| {
                let qq = self.q * self.q;
                let w = &self.affinity.weights;
                let mut blocks = self.connections.blocks.clone();
                for (e, chunk) in blocks.chunks_exact_mut(qq).enumerate() {
                    let wij = w.vals[e];
                    for b in chunk {
                        *b *= wij;
                    }
                }
                Arc::new(SymBlockMatrix::new(
                    self.connections.pattern.clone(),
                    self.q,
                    blocks,
                ))
            })
            .clone()
    }

    /// Build from explicit per-edge connections (tests, synthetic graphs).
    /// `g(i, j)` is queried once per stored edge with `i <= j` and must be
    /// orthogonal (or zero); the diagonal must be the identity.
    pub fn from_parts(
        affinity: AffinityGraph<T>,
        q: usize,
        source: ConnectionSource,
        mut g: impl FnMut(usize, usize) -> DMatrix<T>,
    ) -> Result<Self> {
        let pattern = affinity.weights.pattern.clone();
        let n = affinity.n();
        let qq = q * q;
        let mut blocks = vec![T::zero(); pattern.nnz() * qq];
        for i in 0..n {
            for (j, e) in pattern.row_upper(i) {
                let m = if i == j { DMatrix::identity(q, q) } else { g(i, j) };
                if m.nrows() != q || m.ncols() != q {
                    return Err(Error::ShapeMismatch(format!(
                        "connection block ({i},{j}) is {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                validate_block(&m, i, j)?;
                for r in 0..q {
                    for c in 0..q {
                        blocks[e * qq + r * q + c] = m[(r, c)];
                    }
                }
            }
        }
        let connections = SymBlockMatrix::new(pattern, q, blocks);
        Ok(ConnectionGraph {
            affinity,
            q,
            connections,
            source,
            s_cache: OnceLock::new(),
        })
    }
}

/// Orthogonal to 1e-10, or exactly zero (cut locus / failed alignment).
fn validate_block<T: Scalar>(m: &DMatrix<T>, i: usize, j: usize) -> Result<()> {
    if m.iter().all(|&v| v == T::zero()) {
        return Ok(());
    }
    let gram = m * m.transpose();
    let q = m.nrows();
    for r in 0..q {
        for c in 0..q {
            let want = if r == c { T::one() } else { T::zero() };
            if (gram[(r, c)] - want).abs().as_f64() > 1e-10 {
                return Err(Error::InvalidConfig(format!(
                    "connection block ({i},{j}) is not orthogonal"
                )));
            }
        }
    }
    Ok(())
}

/// Attach a connection to an affinity graph.
///
/// `analytic` needs the model and its frames; `estimated_pca` and
/// `z2_determinant` need frames (estimated or analytic); `trivial` forces
/// q = 1, g = 1.
pub fn attach_connection<T: Scalar>(
    affinity: AffinityGraph<T>,
    source: ConnectionSource,
    frames: Option<&[Frame<T>]>,
    model: Option<(ManifoldModel, &PointCloud<T>)>,
) -> Result<ConnectionGraph<T>> {
    let n = affinity.n();
    let pattern = affinity.weights.pattern.clone();

    let need_frames = |frames: Option<&[Frame<T>]>| -> Result<()> {
        let fr = frames.ok_or_else(|| Error::MissingFrames(format!("{source:?}")))?;
        if fr.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} frames for {} points",
                fr.len(),
                n
            )));
        }
        for (i, f) in fr.iter().enumerate() {
            f.validate(i)?;
        }
        Ok(())
    };

    let (q, blocks) = match source {
        ConnectionSource::Trivial => {
            let blocks = vec![T::one(); pattern.nnz()];
            (1, blocks)
        }
        ConnectionSource::Analytic => {
            let (model, cloud) =
                model.ok_or_else(|| Error::MissingFrames("analytic needs a model".into()))?;
            need_frames(frames)?;
            let fr = frames.unwrap();
            let q = model.fiber_dim();
            let qq = q * q;
            let rows: Vec<Result<Vec<T>>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::new();
                    for (j, _) in pattern.row_upper(i) {
                        if i == j {
                            out.extend(identity_flat::<T>(q));
                            continue;
                        }
                        let g = model.analytic_transport(
                            cloud.point(i),
                            cloud.point(j),
                            &fr[i],
                            &fr[j],
                        )?;
                        out.extend(flatten(&g));
                    }
                    Ok(out)
                })
                .collect();
            let mut blocks = Vec::with_capacity(pattern.nnz() * qq);
            for row in rows {
                blocks.extend(row?);
            }
            (q, blocks)
        }
        ConnectionSource::EstimatedPca => {
            need_frames(frames)?;
            let fr = frames.unwrap();
            let q = fr[0].dim();
            let qq = q * q;
            let rows: Vec<Vec<T>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::new();
                    for (j, _) in pattern.row_upper(i) {
                        if i == j {
                            out.extend(identity_flat::<T>(q));
                        } else {
                            match tangent::procrustes_align(&fr[i], &fr[j]) {
                                Ok(g) => out.extend(flatten(&g)),
                                // Near-perpendicular planes: treat like the
                                // cut locus and contribute nothing.
                                Err(_) => out.extend(std::iter::repeat_n(T::zero(), qq)),
                            }
                        }
                    }
                    out
                })
                .collect();
            (q, rows.concat())
        }
        ConnectionSource::Z2Determinant => {
            need_frames(frames)?;
            let fr = frames.unwrap();
            let rows: Vec<Vec<T>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::new();
                    for (j, _) in pattern.row_upper(i) {
                        if i == j {
                            out.push(T::one());
                        } else {
                            out.push(tangent::z2_connection(&fr[i], &fr[j]).unwrap_or_else(|_| T::zero()));
                        }
                    }
                    out
                })
                .collect();
            (1, rows.concat())
        }
    };

    let connections = SymBlockMatrix::new(pattern, q, blocks);
    Ok(ConnectionGraph {
        affinity,
        q,
        connections,
        source,
        s_cache: OnceLock::new(),
    })
}

fn identity_flat<T: Scalar>(q: usize) -> Vec<T> {
    let mut v = vec![T::zero(); q * q];
    for k in 0..q {
        v[k * q + k] = T::one();
    }
    v
}

fn flatten<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// The operator forms assembled from a connection graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorForm {
    /// `S(i,j) = w_ij g_ij`.
    S,
    /// `D(i,i) = d_i I_q`.
    D,
    /// `L = D - S`, the unnormalized connection Laplacian. PSD.
    LUnnormalized,
    /// `I - D^{-1} S`, the normalized connection Laplacian (applied through
    /// the degree-scaled `S`).
    OneMinusMarkov,
    /// `D^{-1/2} S D^{-1/2}`, symmetric, spectrum in [-1, 1].
    SymNormalized,
}

impl OperatorForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(OperatorForm::S),
            "d" => Ok(OperatorForm::D),
            "unnormalized" | "l" => Ok(OperatorForm::LUnnormalized),
            "markov" | "one-minus-markov" => Ok(OperatorForm::OneMinusMarkov),
            "sym" | "sym-normalized" => Ok(OperatorForm::SymNormalized),
            other => Err(Error::InvalidConfig(format!("unknown operator form `{other}`"))),
        }
    }
}

/// A materialized block operator: the assembled `S` blocks plus degrees,
/// interpreted according to `form` on application.
#[derive(Debug, Clone)]
pub struct BlockOperator<T> {
    pub form: OperatorForm,
    pub n: usize,
    pub q: usize,
    s: Arc<SymBlockMatrix<T>>,
    pub degrees: Arc<Vec<T>>,
    inv_sqrt_deg: Arc<Vec<T>>,
}

/// Materialize one operator form from the connection graph.
pub fn assemble_operator<T: Scalar>(graph: &ConnectionGraph<T>, form: OperatorForm) -> BlockOperator<T> {
    let degrees = Arc::new(graph.affinity.degrees.clone());
    let inv_sqrt_deg = Arc::new(degrees.iter().map(|&d| T::one() / d.sqrt()).collect());
    BlockOperator {
        form,
        n: graph.n(),
        q: graph.q,
        s: graph.s_blocks(),
        degrees,
        inv_sqrt_deg,
    }
}

impl<T: Scalar> BlockOperator<T> {
    pub fn dim(&self) -> usize {
        self.n * self.q
    }

    /// Same assembled data viewed as another form.
    pub fn with_form(&self, form: OperatorForm) -> BlockOperator<T> {
        let mut o = self.clone();
        o.form = form;
        o
    }

    /// Block matrix-vector product.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                want: self.dim(),
                got: v.len(),
            });
        }
        Ok(match self.form {
            OperatorForm::S => self.s.apply(v),
            OperatorForm::D => self.scale_by_degrees(v, &self.degrees),
            OperatorForm::LUnnormalized => {
                let sv = self.s.apply(v);
                let mut y = self.scale_by_degrees(v, &self.degrees);
                for (yk, sk) in y.iter_mut().zip(sv) {
                    *yk -= sk;
                }
                y
            }
            OperatorForm::OneMinusMarkov => {
                let sv = self.s.apply(v);
                let mut y = v.to_vec();
                for i in 0..self.n {
                    let inv = T::one() / self.degrees[i];
                    for k in 0..self.q {
                        y[i * self.q + k] -= inv * sv[i * self.q + k];
                    }
                }
                y
            }
            OperatorForm::SymNormalized => {
                let mut t = v.to_vec();
                self.scale_in_place(&mut t, &self.inv_sqrt_deg);
                let mut y = self.s.apply(&t);
                self.scale_in_place(&mut y, &self.inv_sqrt_deg);
                y
            }
        })
    }

    fn scale_by_degrees(&self, v: &[T], s: &[T]) -> Vec<T> {
        let mut y = v.to_vec();
        self.scale_in_place(&mut y, s);
        y
    }

    fn scale_in_place(&self, v: &mut [T], s: &[T]) {
        for i in 0..self.n {
            for k in 0..self.q {
                v[i * self.q + k] *= s[i];
            }
        }
    }

    /// Dense materialization (tests and the brute-force affinity oracle).
    pub fn to_dense(&self) -> DMatrix<T> {
        let nq = self.dim();
        let s = self.s.to_dense();
        match self.form {
            OperatorForm::S => s,
            OperatorForm::D => {
                let mut m = DMatrix::zeros(nq, nq);
                for i in 0..self.n {
                    for k in 0..self.q {
                        m[(i * self.q + k, i * self.q + k)] = self.degrees[i];
                    }
                }
                m
            }
            OperatorForm::LUnnormalized => {
                let mut m = -s;
                for i in 0..self.n {
                    for k in 0..self.q {
                        m[(i * self.q + k, i * self.q + k)] += self.degrees[i];
                    }
                }
                m
            }
            OperatorForm::OneMinusMarkov => {
                // Division and sequential scaling keep the q = 1 case
                // bit-identical to the scalar graph-Laplacian construction.
                let mut m = s;
                for r in 0..nq {
                    let deg = self.degrees[r / self.q];
                    for c in 0..nq {
                        m[(r, c)] = -(m[(r, c)] / deg);
                    }
                    m[(r, r)] += T::one();
                }
                m
            }
            OperatorForm::SymNormalized => {
                // One commutative product of the two scale factors keeps the
                // materialization bitwise symmetric.
                let mut m = s;
                for r in 0..nq {
                    for c in 0..nq {
                        m[(r, c)] *=
                            self.inv_sqrt_deg[r / self.q] * self.inv_sqrt_deg[c / self.q];
                    }
                }
                m
            }
        }
    }
}

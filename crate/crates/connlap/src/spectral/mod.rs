//! Symmetric block eigensolving, eigenvalue rescaling to Laplacian units,
//! vector diffusion maps, and the Hilbert-Schmidt affinity identity.

mod solver;
#[cfg(test)]
mod tests;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{BlockOperator, OperatorForm};
use crate::kernels::KernelSpec;
use crate::scalar::Scalar;

/// Which end of the spectrum a request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumEnd {
    Top,
    Bottom,
}

impl SpectrumEnd {
    fn flip(self) -> Self {
        match self {
            SpectrumEnd::Top => SpectrumEnd::Bottom,
            SpectrumEnd::Bottom => SpectrumEnd::Top,
        }
    }
}

/// Eigensolve request.
#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    pub k: usize,
    /// Residual contract: every returned pair satisfies
    /// `|A v - lambda v| <= tol * |A|`.
    pub tol: f64,
    pub which: SpectrumEnd,
    /// Start vectors for the iterative path are drawn from this seed.
    pub seed: u64,
    /// Dense solve at or below this dimension (when `k` is a substantial
    /// fraction of it); Krylov above.
    pub dense_cutoff: usize,
    /// Hard cap on the Krylov subspace (0 = automatic).
    pub max_subspace: usize,
}

impl EigOptions {
    pub fn top(k: usize) -> Self {
        EigOptions {
            k,
            tol: 1e-8,
            which: SpectrumEnd::Top,
            seed: 0x5eed,
            dense_cutoff: 2000,
            max_subspace: 0,
        }
    }

    pub fn bottom(k: usize) -> Self {
        EigOptions {
            which: SpectrumEnd::Bottom,
            ..EigOptions::top(k)
        }
    }
}

/// Eigenpairs of a block operator, eigenvalues descending.
///
/// Vectors are orthonormal in the standard inner product when the source is
/// a symmetric form, and in the degree-weighted inner product when derived
/// from `I - D^{-1} S` through the `D^{-1/2}` similarity.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    /// One vector of length `n * q` per eigenvalue.
    pub eigenvectors: Vec<Vec<T>>,
    pub operator_form: OperatorForm,
    /// `|A v - lambda v|` per returned pair.
    pub residuals: Vec<T>,
    pub degrees: Arc<Vec<T>>,
    pub n: usize,
    pub q: usize,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues as the similar `D^{-1/2} S D^{-1/2}` matrix would report
    /// them (identity when the decomposition is already of that form).
    pub fn markov_eigenvalues(&self) -> Vec<T> {
        match self.operator_form {
            OperatorForm::OneMinusMarkov => {
                self.eigenvalues.iter().map(|&l| T::one() - l).collect()
            }
            _ => self.eigenvalues.clone(),
        }
    }

    /// Eigenvector blocks of the normalized-symmetric operator (`v_l`); the
    /// stored vectors are converted from `w_l = D^{-1/2} v_l` when needed.
    fn sym_vector(&self, l: usize) -> Vec<T> {
        match self.operator_form {
            OperatorForm::OneMinusMarkov => {
                let mut v = self.eigenvectors[l].clone();
                for i in 0..self.n {
                    let s = self.degrees[i].sqrt();
                    for k in 0..self.q {
                        v[i * self.q + k] *= s;
                    }
                }
                v
            }
            _ => self.eigenvectors[l].clone(),
        }
    }

    /// Max off-identity entry of the Gram matrix, in the inner product the
    /// decomposition promises.
    pub fn gram_defect(&self) -> T {
        let weighted = matches!(self.operator_form, OperatorForm::OneMinusMarkov);
        let mut worst = T::zero();
        for a in 0..self.len() {
            for b in a..self.len() {
                let mut s = T::zero();
                for i in 0..self.n {
                    let w = if weighted { self.degrees[i] } else { T::one() };
                    for k in 0..self.q {
                        let idx = i * self.q + k;
                        s += w * self.eigenvectors[a][idx] * self.eigenvectors[b][idx];
                    }
                }
                let want = if a == b { T::one() } else { T::zero() };
                worst = worst.max((s - want).abs());
            }
        }
        worst
    }
}

/// Top-k (or bottom-k) eigenpairs of the operator.
///
/// Symmetric forms are solved directly (dense below the cutoff, block Krylov
/// with full reorthogonalization above); `I - D^{-1} S` is solved through its
/// `D^{-1/2}` similarity to the symmetric normalized form, which shares its
/// eigenvalues.
pub fn eigendecompose<T: Scalar>(
    op: &BlockOperator<T>,
    opts: EigOptions,
) -> Result<SpectralDecomposition<T>> {
    let k = opts.k.min(op.dim());
    match op.form {
        OperatorForm::OneMinusMarkov => {
            let sym = op.with_form(OperatorForm::SymNormalized);
            let inner = solver::solve_symmetric(
                &sym,
                EigOptions {
                    k,
                    which: opts.which.flip(),
                    ..opts
                },
            )?;
            let mut eigenvalues: Vec<T> = inner.0.iter().map(|&l| T::one() - l).collect();
            let mut vectors: Vec<Vec<T>> = inner.1;
            // 1 - lambda reverses the order; restore descending.
            eigenvalues.reverse();
            vectors.reverse();
            for v in &mut vectors {
                for i in 0..op.n {
                    let s = T::one() / op.degrees[i].sqrt();
                    for kk in 0..op.q {
                        v[i * op.q + kk] *= s;
                    }
                }
            }
            // Residual contract re-checked against the requested operator.
            let mut residuals = Vec::with_capacity(vectors.len());
            let mut norm_est = T::zero();
            for &l in &eigenvalues {
                norm_est = norm_est.max(l.abs());
            }
            for (l, v) in eigenvalues.iter().zip(&vectors) {
                let av = op.apply(v)?;
                let mut r2 = T::zero();
                let mut v2 = T::zero();
                for (a, b) in av.iter().zip(v) {
                    let d = *a - *l * *b;
                    r2 += d * d;
                    v2 += *b * *b;
                }
                residuals.push(r2.sqrt() / v2.sqrt());
            }
            let worst = residuals.iter().fold(T::zero(), |a, &b| a.max(b));
            if worst.as_f64() > opts.tol * norm_est.as_f64().max(1.0) * 10.0 {
                return Err(Error::EigenNonConvergence(
                    residuals.iter().map(|r| r.as_f64()).collect(),
                ));
            }
            Ok(SpectralDecomposition {
                eigenvalues,
                eigenvectors: vectors,
                operator_form: OperatorForm::OneMinusMarkov,
                residuals,
                degrees: op.degrees.clone(),
                n: op.n,
                q: op.q,
            })
        }
        _ => {
            let (eigenvalues, eigenvectors, residuals) = {
                let (vals, vecs) = solver::solve_symmetric(op, EigOptions { k, ..opts })?;
                let mut residuals = Vec::with_capacity(vals.len());
                for (l, v) in vals.iter().zip(&vecs) {
                    let av = op.apply(v)?;
                    let mut r2 = T::zero();
                    for (a, b) in av.iter().zip(v) {
                        let d = *a - *l * *b;
                        r2 += d * d;
                    }
                    residuals.push(r2.sqrt());
                }
                (vals, vecs, residuals)
            };
            Ok(SpectralDecomposition {
                eigenvalues,
                eigenvectors,
                operator_form: op.form,
                residuals,
                degrees: op.degrees.clone(),
                n: op.n,
                q: op.q,
            })
        }
    }
}

/// Map discrete eigenvalues to connection-Laplacian units:
/// `lambda_hat = (2 d / mu^{(0)}_{1,2}) (1 - lambda) / h`.
///
/// The result is aligned with `decomp.eigenvalues` (so it ascends when the
/// decomposition descends). The decomposition must come from `I - D^{-1} S`
/// or the symmetric normalized form.
pub fn rescale_eigenvalues<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    h: T,
    spec: &KernelSpec,
    d: usize,
) -> Result<Vec<T>> {
    if h <= T::zero() {
        return Err(Error::InvalidConfig("bandwidth must be positive".into()));
    }
    if !matches!(
        decomp.operator_form,
        OperatorForm::OneMinusMarkov | OperatorForm::SymNormalized
    ) {
        return Err(Error::InvalidConfig(format!(
            "rescaling needs a Markov-compatible form, got {:?}",
            decomp.operator_form
        )));
    }
    let mu = spec.kernel_moment(d, 1, 2, 0)?;
    let scale = T::of(2.0 * d as f64 / mu) / h;
    Ok(decomp
        .markov_eigenvalues()
        .iter()
        .map(|&l| scale * (T::one() - l))
        .collect())
}

/// Vector diffusion map coordinates.
#[derive(Debug, Clone)]
pub struct VdmEmbedding<T> {
    pub t: u32,
    /// Eigenpairs retained; each point gets `m * m` coordinates.
    pub m: usize,
    /// True when coordinates are degree-normalized (the `V'_t` variant).
    pub normalized: bool,
    coords: Vec<T>,
    n: usize,
}

impl<T: Scalar> VdmEmbedding<T> {
    pub fn point(&self, i: usize) -> &[T] {
        let w = self.m * self.m;
        &self.coords[i * w..(i + 1) * w]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// The vector diffusion map
/// `V_t(i) = ((lambda_l lambda_r)^t <v_l[i], v_r[i]>)_{l,r <= m}`, optionally
/// degree-normalized (`V'_t(i) = V_t(i) / d_i`).
pub fn vdm_embed<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    t: u32,
    m: usize,
    normalized: bool,
) -> VdmEmbedding<T> {
    assert!(m <= decomp.len(), "m exceeds retained eigenpairs");
    let lambdas = decomp.markov_eigenvalues();
    let (n, q) = (decomp.n, decomp.q);
    let vs: Vec<Vec<T>> = (0..m).map(|l| decomp.sym_vector(l)).collect();
    let mut coords = vec![T::zero(); n * m * m];
    for i in 0..n {
        for l in 0..m {
            for r in 0..m {
                let mut inner = T::zero();
                for kk in 0..q {
                    inner += vs[l][i * q + kk] * vs[r][i * q + kk];
                }
                let weight = (lambdas[l] * lambdas[r]).powi(t as i32);
                let mut c = weight * inner;
                if normalized {
                    c /= decomp.degrees[i];
                }
                coords[i * m * m + l * m + r] = c;
            }
        }
    }
    VdmEmbedding {
        t,
        m,
        normalized,
        coords,
        n,
    }
}

/// Vector diffusion distance: squared Euclidean distance between embedding
/// images.
pub fn vdd<T: Scalar>(emb: &VdmEmbedding<T>, i: usize, j: usize) -> T {
    let (a, b) = (emb.point(i), emb.point(j));
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Brute-force Hilbert-Schmidt affinity `|S~^{2t}(i,j)|^2_HS`, the oracle for
/// the VDM inner-product identity. Guarded to small operators.
pub fn hs_affinity<T: Scalar>(op: &BlockOperator<T>, t: u32, i: usize, j: usize) -> Result<T> {
    if op.form != OperatorForm::SymNormalized {
        return Err(Error::InvalidConfig(
            "hs_affinity expects the symmetric normalized form".into(),
        ));
    }
    let nq = op.dim();
    if nq > 500 {
        return Err(Error::SizeGuardExceeded { limit: 500, got: nq });
    }
    let dense = op.to_dense();
    let mut power = dense.clone();
    for _ in 1..(2 * t) {
        power = &power * &dense;
    }
    let q = op.q;
    let mut s = T::zero();
    for r in 0..q {
        for c in 0..q {
            let v = power[(i * q + r, j * q + c)];
            s += v * v;
        }
    }
    Ok(s)
}

/// Classical diffusion-map coordinates `(lambda_l^t w_l[i])_{l < m}` from a
/// scalar (q = 1) decomposition.
pub fn dm_embed<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    t: u32,
    m: usize,
) -> Result<Vec<Vec<T>>> {
    if decomp.q != 1 {
        return Err(Error::InvalidConfig(format!(
            "diffusion maps need q = 1, got q = {}",
            decomp.q
        )));
    }
    let m = m.min(decomp.len());
    let lambdas = decomp.markov_eigenvalues();
    // w_l = D^{-1/2} v_l are the D^{-1}S eigenvectors.
    let ws: Vec<Vec<T>> = (0..m)
        .map(|l| match decomp.operator_form {
            OperatorForm::OneMinusMarkov => decomp.eigenvectors[l].clone(),
            _ => {
                let mut w = decomp.eigenvectors[l].clone();
                for i in 0..decomp.n {
                    w[i] /= decomp.degrees[i].sqrt();
                }
                w
            }
        })
        .collect();
    Ok((0..decomp.n)
        .map(|i| {
            (0..m)
                .map(|l| lambdas[l].powi(t as i32) * ws[l][i])
                .collect()
        })
        .collect())
}

/// Group eigenvalues into multiplicity clusters: consecutive values
/// (ascending) join one cluster while their gap stays below `rel_gap` of the
/// retained spectrum's span. True multiplicity pairs at desk scale split by
/// a few percent of their own value, so the gap is measured against the span
/// rather than the local magnitude.
pub fn cluster_eigenvalues<T: Scalar>(values: &[T], rel_gap: f64) -> Vec<(T, usize)> {
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) => (hi - lo).max(hi.abs() * T::of(1e-9)),
        _ => return Vec::new(),
    };
    let threshold = T::of(rel_gap) * span;
    let mut clusters: Vec<(T, usize)> = Vec::new();
    let mut current: Vec<T> = Vec::new();
    for &v in &sorted {
        match current.last() {
            Some(&prev) if (v - prev).abs() > threshold => {
                clusters.push(summarize(&current));
                current = vec![v];
            }
            _ => current.push(v),
        }
    }
    if !current.is_empty() {
        clusters.push(summarize(&current));
    }
    clusters
}

fn summarize<T: Scalar>(cluster: &[T]) -> (T, usize) {
    let sum = cluster.iter().fold(T::zero(), |a, &b| a + b);
    (sum / T::of(cluster.len() as f64), cluster.len())
}

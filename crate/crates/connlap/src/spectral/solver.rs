//! Symmetric eigensolver backends: dense for small operators, block Krylov
//! with full reorthogonalization above.

use nalgebra::DMatrix;

use super::{EigOptions, SpectrumEnd};
use crate::error::{Error, Result};
use crate::graph::BlockOperator;
use crate::rng::CounterRng;
use crate::scalar::Scalar;

/// `k` eigenpairs of a symmetric block operator at the requested end of the
/// spectrum, eigenvalues sorted descending.
pub(super) fn solve_symmetric<T: Scalar>(
    op: &BlockOperator<T>,
    opts: EigOptions,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let nq = op.dim();
    let k = opts.k.min(nq);
    if k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let use_dense = nq <= opts.dense_cutoff && (nq <= 256 || 8 * k >= nq);
    if use_dense {
        solve_dense(op, k, opts.which)
    } else {
        solve_krylov(op, k, opts)
    }
}

fn solve_dense<T: Scalar>(
    op: &BlockOperator<T>,
    k: usize,
    which: SpectrumEnd,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let dense = op.to_dense();
    let nq = dense.nrows();
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..nq).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    // `order` is descending, so its tail holds the k smallest values while
    // keeping them descending among themselves.
    let picked: Vec<usize> = match which {
        SpectrumEnd::Top => order[..k].to_vec(),
        SpectrumEnd::Bottom => order[nq - k..].to_vec(),
    };
    let values: Vec<T> = picked.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<T>> = picked
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok((values, vectors))
}

/// Block Krylov subspace with full reorthogonalization and Rayleigh-Ritz
/// extraction. Blocks keep clustered (near-multiple) eigenvalues honest;
/// reorthogonalization keeps the basis numerically orthonormal so spurious
/// copies cannot appear.
fn solve_krylov<T: Scalar>(
    op: &BlockOperator<T>,
    k: usize,
    opts: EigOptions,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let nq = op.dim();
    let block = k.clamp(2, 8).min(nq);
    let max_m = if opts.max_subspace > 0 {
        opts.max_subspace
    } else {
        (10 * k + 100).max(240)
    }
    .min(nq);

    let mut rng = CounterRng::stream(opts.seed, 0);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut images: Vec<Vec<T>> = Vec::new(); // A v per basis column
    let mut h_cols: Vec<Vec<T>> = Vec::new(); // H[0..=j][j]

    let append = |cands: Vec<Vec<T>>,
                      basis: &mut Vec<Vec<T>>,
                      images: &mut Vec<Vec<T>>,
                      h_cols: &mut Vec<Vec<T>>,
                      rng: &mut CounterRng|
     -> Result<()> {
        for mut w in cands {
            if basis.len() >= max_m.min(nq) {
                break;
            }
            // Full reorthogonalization, twice.
            for _ in 0..2 {
                for v in basis.iter() {
                    let c = dot(&w, v);
                    axpy(&mut w, -c, v);
                }
            }
            let mut nrm = norm(&w);
            // Breakdown: the candidate lies in the span; continue the search
            // in a fresh random direction.
            if nrm.as_f64() < 1e-10 {
                w = random_vector(nq, rng);
                for _ in 0..2 {
                    for v in basis.iter() {
                        let c = dot(&w, v);
                        axpy(&mut w, -c, v);
                    }
                }
                nrm = norm(&w);
                if nrm.as_f64() < 1e-10 {
                    continue;
                }
            }
            let inv = T::one() / nrm;
            for x in &mut w {
                *x *= inv;
            }
            let aw = op.apply(&w)?;
            let mut col: Vec<T> = basis.iter().map(|v| dot(v, &aw)).collect();
            col.push(dot(&w, &aw));
            basis.push(w);
            images.push(aw);
            h_cols.push(col);
        }
        Ok(())
    };

    let start: Vec<Vec<T>> = (0..block).map(|_| random_vector(nq, &mut rng)).collect();
    append(start, &mut basis, &mut images, &mut h_cols, &mut rng)?;

    let mut best_residuals: Vec<f64>;
    loop {
        // Rayleigh-Ritz on the current subspace.
        let m = basis.len();
        let mut h = DMatrix::<T>::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                h[(i, j)] = h_cols[j][i];
                h[(j, i)] = h_cols[j][i];
            }
        }
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let wanted: Vec<usize> = match opts.which {
            SpectrumEnd::Top => order[..k.min(m)].to_vec(),
            SpectrumEnd::Bottom => order[m - k.min(m)..].to_vec(),
        };
        let scale = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()))
            .as_f64()
            .max(1e-300);

        // True residuals of the wanted Ritz pairs, using the cached images.
        let mut ritz_vecs: Vec<Vec<T>> = Vec::with_capacity(wanted.len());
        let mut residuals: Vec<f64> = Vec::with_capacity(wanted.len());
        for &w in &wanted {
            let y = eig.eigenvectors.column(w);
            let theta = eig.eigenvalues[w];
            let mut u = vec![T::zero(); nq];
            let mut au = vec![T::zero(); nq];
            for (j, (v, av)) in basis.iter().zip(&images).enumerate() {
                axpy(&mut u, y[j], v);
                axpy(&mut au, y[j], av);
            }
            let mut r2 = T::zero();
            for idx in 0..nq {
                let d = au[idx] - theta * u[idx];
                r2 += d * d;
            }
            residuals.push(r2.sqrt().as_f64());
            ritz_vecs.push(u);
        }
        best_residuals = residuals.clone();
        let tol_abs = opts.tol * scale;
        if m >= k && residuals.iter().all(|&r| r <= tol_abs) {
            let values: Vec<T> = wanted.iter().map(|&w| eig.eigenvalues[w]).collect();
            return Ok((values, ritz_vecs));
        }
        if m >= max_m.min(nq) {
            // Subspace exhausted. If it spans everything the Ritz pairs are
            // exact up to roundoff; accept them.
            if m == nq {
                let values: Vec<T> = wanted.iter().map(|&w| eig.eigenvalues[w]).collect();
                return Ok((values, ritz_vecs));
            }
            return Err(Error::EigenNonConvergence(best_residuals));
        }

        // Expand with the images of the newest block (power-iteration
        // directions), refreshed randomly on breakdown.
        let newest = images.len().saturating_sub(block);
        let cands: Vec<Vec<T>> = images[newest..].to_vec();
        let before = basis.len();
        append(cands, &mut basis, &mut images, &mut h_cols, &mut rng)?;
        if basis.len() == before {
            return Err(Error::EigenNonConvergence(best_residuals));
        }
    }
}

fn random_vector<T: Scalar>(n: usize, rng: &mut CounterRng) -> Vec<T> {
    (0..n).map(|_| T::of(rng.next_normal())).collect()
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

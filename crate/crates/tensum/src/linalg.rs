//! Singular value decomposition and the rank-r truncation operator used to
//! extract common factor bases from concatenated factor matrices.
//!
//! The SVD is a one-sided Jacobi iteration applied to the thinner
//! orientation of the input. It is simple, deterministic and accurate to
//! near machine precision at the sizes this crate works with (thin side up
//! to a few dozen, long side up to a few hundred thousand).

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Thin SVD: u is rows x k, s has k nonincreasing nonnegative entries,
/// v is cols x k, with k = min(rows, cols) and m == u * diag(s) * v^T.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Symmetric eigendecomposition: values descending (signed), vectors
/// orthonormal columns in matching order.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_SVD_SWEEPS: usize = 60;
const MAX_EIG_SWEEPS: usize = 100;

/// Thin SVD with a deterministic sign convention: every left singular
/// vector has its largest-magnitude entry positive (ties broken by lowest
/// index), and the paired right vector is flipped with it.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    let transposed = m.rows() < m.cols();
    let work = if transposed { m.transpose() } else { m.clone() };
    let (u, s, v) = jacobi_svd(&work)?;
    let (mut u, s, mut v) = if transposed { (v, s, u) } else { (u, s, v) };
    fix_signs(&mut u, Some(&mut v));
    Ok(SvdResult { u, s, v })
}

/// First r left singular vectors of m, columns orthonormal.
pub fn tsvd(m: &Matrix, r: usize) -> Result<Matrix> {
    let k = m.rows().min(m.cols());
    if r == 0 || r > k {
        return Err(Error::RankOutOfRange { rank: r, max: k });
    }
    let dec = svd(m)?;
    let mut out = Matrix::zeros(m.rows(), r);
    for c in 0..r {
        for i in 0..m.rows() {
            out.set(i, c, dec.u.get(i, c));
        }
    }
    Ok(out)
}

/// One-sided Jacobi on a matrix with rows >= cols. Returns (u, s, v)
/// sorted by singular value, before any sign normalization.
fn jacobi_svd(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let rows = m.rows();
    let n = m.cols();
    let mut w = m.data().to_vec();
    let mut v = Matrix::identity(n);
    // Rotate while any column pair has |<w_p, w_q>| above a relative
    // threshold; this implies the absolute bound 1e-14 * ||m||_F^2 on
    // every off-diagonal Gram entry at convergence.
    let mut converged = false;
    for _ in 0..MAX_SVD_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let wp = w[p * rows + i];
                    let wq = w[q * rows + i];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma.abs() <= 1e-14 * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                if t == 0.0 || !t.is_finite() {
                    continue;
                }
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotated = true;
                for i in 0..rows {
                    let wp = w[p * rows + i];
                    let wq = w[q * rows + i];
                    w[p * rows + i] = c * wp - s * wq;
                    w[q * rows + i] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "jacobi svd did not settle within {MAX_SVD_SWEEPS} sweeps"
        )));
    }

    let sigma: Vec<f64> = (0..n)
        .map(|j| {
            (0..rows)
                .map(|i| w[j * rows + i] * w[j * rows + i])
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));

    let mut u = Matrix::zeros(rows, n);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut s_sorted = vec![0.0; n];
    let mut filled = vec![false; n];
    for (dst, &src) in order.iter().enumerate() {
        s_sorted[dst] = sigma[src];
        for i in 0..n {
            v_sorted.set(i, dst, v.get(i, src));
        }
        if sigma[src] > 0.0 {
            for i in 0..rows {
                u.set(i, dst, w[src * rows + i] / sigma[src]);
            }
            filled[dst] = true;
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok((u, s_sorted, v_sorted))
}

/// Fills the unfilled columns of u with unit vectors orthogonal to every
/// filled column, chosen deterministically from the standard basis.
fn complete_orthonormal(u: &mut Matrix, filled: &[bool]) {
    let rows = u.rows();
    let mut have: Vec<usize> = (0..u.cols()).filter(|&c| filled[c]).collect();
    for c in 0..u.cols() {
        if filled[c] {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for cand in 0..rows {
            let mut r = vec![0.0; rows];
            r[cand] = 1.0;
            for &h in &have {
                let dot: f64 = (0..rows).map(|i| r[i] * u.get(i, h)).sum();
                for i in 0..rows {
                    r[i] -= dot * u.get(i, h);
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("rows >= 1");
        for i in 0..rows {
            u.set(i, c, r[i] / norm);
        }
        have.push(c);
    }
}

/// Flips each column of u (and the matching column of v) so the
/// largest-magnitude entry of the u column is positive; ties take the
/// lowest index.
fn fix_signs(u: &mut Matrix, v: Option<&mut Matrix>) {
    let mut flip = vec![false; u.cols()];
    for c in 0..u.cols() {
        let mut arg = 0;
        for i in 1..u.rows() {
            if u.get(i, c).abs() > u.get(arg, c).abs() {
                arg = i;
            }
        }
        if u.get(arg, c) < 0.0 {
            flip[c] = true;
            for i in 0..u.rows() {
                u.set(i, c, -u.get(i, c));
            }
        }
    }
    if let Some(v) = v {
        for c in 0..v.cols() {
            if flip[c] {
                for i in 0..v.rows() {
                    v.set(i, c, -v.get(i, c));
                }
            }
        }
    }
}

/// Cyclic two-sided Jacobi eigensolver for symmetric matrices. Used for
/// the Gram-matrix path of basis fitting and as an independent oracle for
/// the SVD in tests.
pub fn symmetric_eigen(m: &Matrix) -> Result<EigResult> {
    if m.rows() != m.cols() {
        return Err(Error::ShapeMismatch(format!(
            "symmetric_eigen on {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("symmetric_eigen input".into()));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let thresh = 1e-14 * m.frobenius_norm();
    let mut converged = false;
    for _ in 0..MAX_EIG_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= thresh {
                    continue;
                }
                let zeta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                if t == 0.0 || !t.is_finite() {
                    continue;
                }
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotated = true;
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(p, k, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                    a.set(q, k, s * akp + c * akq);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "jacobi eigensolver did not settle within {MAX_EIG_SWEEPS} sweeps"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a.get(y, y)
            .partial_cmp(&a.get(x, x))
            .unwrap()
            .then(x.cmp(&y))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(a.get(src, src));
        for i in 0..n {
            vectors.set(i, dst, v.get(i, src));
        }
    }
    fix_signs(&mut vectors, None);
    Ok(EigResult { values, vectors })
}

//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::linalg::{Cholesky, SymmetricEigen};

use crate::error::{Result, SsdaError};
use crate::{Mat, Vector};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-10;
/// Diagonal jitter, relative to `trace / dim`, added when a Cholesky factorisation fails.
pub const JITTER_REL: f64 = 1e-10;
/// Entries below this magnitude do not count for the sign convention.
pub const SIGN_TOL: f64 = 1e-12;

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// `XᵀX / n`.
pub fn second_moment(x: &Mat) -> Mat {
    let n = x.nrows().max(1) as f64;
    symmetrize(&(x.tr_mul(x) / n))
}

/// `XᵀY / n`.
pub fn cross_moment(x: &Mat, y: &Vector) -> Vector {
    let n = x.nrows().max(1) as f64;
    x.tr_mul(y) / n
}

/// Solution of an SPD system together with whether jitter was needed.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Mat,
    pub jittered: bool,
}

/// Solves `A X = B` for symmetric positive (semi)definite `A`.
///
/// Cholesky is tried first; on failure `1e-10 · trace(A)/dim` is added to the diagonal
/// and the factorisation retried. An LU solve is the last resort.
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<SpdSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(SsdaError::Dimension(format!("spd_solve: A is {}x{}, B has {} rows", n, a.ncols(), b.nrows())));
    }
    if n == 0 {
        return Ok(SpdSolution { x: Mat::zeros(0, b.ncols()), jittered: false });
    }
    let a = symmetrize(a);
    if let Some(ch) = Cholesky::new(a.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(SpdSolution { x, jittered: false });
        }
    }
    let trace = a.trace();
    let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
    let mut jittered = a.clone();
    for i in 0..n {
        jittered[(i, i)] += JITTER_REL * scale;
    }
    if let Some(ch) = Cholesky::new(jittered.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(SpdSolution { x, jittered: true });
        }
    }
    match jittered.lu().solve(b) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(SpdSolution { x, jittered: true }),
        _ => Err(SsdaError::Numerical("matrix is singular even after jitter".into())),
    }
}

pub fn spd_solve_vec(a: &Mat, b: &Vector) -> Result<(Vector, bool)> {
    let rhs = Mat::from_column_slice(b.len(), 1, b.as_slice());
    let sol = spd_solve(a, &rhs)?;
    Ok((sol.x.column(0).into_owned(), sol.jittered))
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vector,
    pub v_t: Mat,
}

/// Largest acceptable `‖U diag(s) Vᵀ − A‖_F / ‖A‖_F` and `‖UᵀU − I‖_F` of a factorisation.
const SVD_CHECK_TOL: f64 = 1e-9;

fn svd_is_sound(a: &Mat, f: &Svd) -> bool {
    let k = f.s.len();
    if !(f.u.iter().chain(f.s.iter()).chain(f.v_t.iter()).all(|v| v.is_finite())) {
        return false;
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let recomposed = &f.u * Mat::from_diagonal(&f.s) * &f.v_t;
    let eye = Mat::identity(k, k);
    (recomposed - a).norm() <= SVD_CHECK_TOL * scale
        && (f.u.tr_mul(&f.u) - &eye).norm() <= SVD_CHECK_TOL * k as f64
        && (&f.v_t * f.v_t.transpose() - eye).norm() <= SVD_CHECK_TOL * k as f64
}

fn raw_svd(a: &Mat) -> Option<Svd> {
    let svd = a.clone().svd(true, true);
    Some(Svd { u: svd.u?, s: svd.singular_values, v_t: svd.v_t? })
}

/// SVD whose result is verified against `a`.
///
/// nalgebra's bidiagonal iteration occasionally returns an inconsistent factorisation
/// for rank-deficient input (seen on upper-triangular rank-1 matrices). When the check
/// fails the transpose is decomposed instead, and as a last resort the factors are
/// rebuilt from the symmetric eigendecomposition of `AᵀA`.
pub fn checked_svd(a: &Mat) -> Result<Svd> {
    if let Some(f) = raw_svd(a).filter(|f| svd_is_sound(a, f)) {
        return Ok(f);
    }
    let at = a.transpose();
    if let Some(f) = raw_svd(&at) {
        let f = Svd { u: f.v_t.transpose(), s: f.s, v_t: f.u.transpose() };
        if svd_is_sound(a, &f) {
            return Ok(f);
        }
    }
    // V and s from AᵀA, U = A V / s where s > 0, remaining columns completed by Gram-Schmidt.
    let (m, n) = a.shape();
    let k = m.min(n);
    let eig = SymmetricEigen::new(symmetrize(&a.tr_mul(a)));
    let order = descending_order(eig.eigenvalues.as_slice(), 0.0);
    let smax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max).max(0.0).sqrt();
    let mut u = Mat::zeros(m, k);
    let mut s = Vector::zeros(k);
    let mut v_t = Mat::zeros(k, n);
    let mut filled = 0;
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        v_t.set_row(c, &v.transpose());
        let sigma = eig.eigenvalues[i].max(0.0).sqrt();
        if sigma > PINV_RTOL * smax {
            s[c] = sigma;
            u.set_column(c, &((a * v) / sigma));
            filled += 1;
        }
    }
    let mut probe = 0;
    for c in filled..k {
        loop {
            let mut col = Vector::zeros(m);
            col[probe % m] = 1.0;
            probe += 1;
            for _ in 0..2 {
                for j in 0..c {
                    let proj = u.column(j).dot(&col);
                    col -= u.column(j) * proj;
                }
            }
            let norm = col.norm();
            if norm > 0.5 || probe > 2 * m {
                u.set_column(c, &(col / norm));
                break;
            }
        }
    }
    Ok(Svd { u, s, v_t })
}

/// Minimum-norm least-squares solution of `X β ≈ y`.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub beta: Vector,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Householder QR followed by an SVD of `R`, with singular values below
/// `1e-10 · σ_max` treated as zero.
pub fn lstsq_min_norm(x: &Mat, y: &Vector) -> Result<LstsqSolution> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(SsdaError::Dimension(format!("lstsq: X has {n} rows, y has {}", y.len())));
    }
    if n == 0 || d == 0 {
        return Ok(LstsqSolution { beta: Vector::zeros(d), rank: 0, rank_deficient: d > 0 });
    }
    let qr = x.clone().qr();
    let qty = qr.q().tr_mul(y);
    let r = qr.r();
    let svd = checked_svd(&r)?;
    let (u, vt) = (&svd.u, &svd.v_t);
    let smax = svd.s.iter().cloned().fold(0.0_f64, f64::max);
    let cut = PINV_RTOL * smax;
    let uty = u.tr_mul(&qty);
    let mut beta = Vector::zeros(d);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            beta.axpy(uty[k] / s, &vt.row(k).transpose(), 1.0);
        }
    }
    if !beta.iter().all(|v| v.is_finite()) {
        return Err(SsdaError::Numerical("least-squares solution is not finite".into()));
    }
    Ok(LstsqSolution { beta, rank, rank_deficient: rank < d })
}

/// Flips `v` so that its first entry with `|v_i| > 1e-12` is positive.
pub fn normalize_sign(v: &mut Vector) {
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Indices sorting `keys` in decreasing order. Keys within `tie_tol` of their
/// neighbour form a tie group, which is ordered by original index.
pub fn descending_order(keys: &[f64], tie_tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && (keys[idx[end - 1]] - keys[idx[end]]).abs() <= tie_tol {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_unstable();
        out.extend(group);
        start = end;
    }
    out
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn lambda_max_sym(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean projection onto `{v : ‖v‖ ≤ rho}`.
pub fn project_ball(v: &Vector, rho: f64) -> Vector {
    let norm = v.norm();
    if norm <= rho || !rho.is_finite() {
        v.clone()
    } else {
        v * (rho / norm)
    }
}

pub fn soft_threshold(v: &Vector, t: f64) -> Vector {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Operator-norm of a symmetric matrix difference, used by tests and diagnostics.
pub fn sym_op_norm(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Minimum singular value over maximum; 0 when the matrix is empty or zero.
pub fn inverse_condition(a: &Mat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

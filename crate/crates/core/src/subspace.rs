//! Orthonormal bases from symmetric eigen and singular value decompositions.
//!
//! Bases are only defined up to rotation, so callers should compare projectors `UUᵀ`.
//! Each basis still comes out in a reproducible form: columns are ordered by decreasing
//! |eigenvalue| (ties by index) and each column's first nonzero entry is positive.

use nalgebra::linalg::SymmetricEigen;

use crate::error::{Result, SsdaError};
use crate::linalg::{self, descending_order, normalize_sign};
use crate::{Mat, Vector};

const TIE_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisOrigin {
    EigTopAbs,
    SvdLeft,
    Complement,
    /// Gram–Schmidt of caller-supplied columns.
    Augmented,
}

/// A `d × k` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    cols: Mat,
    origin: BasisOrigin,
    gap: f64,
}

impl OrthoBasis {
    /// Wraps `cols`, checking `colsᵀ cols = I` to 1e-10.
    pub fn new(cols: Mat, origin: BasisOrigin) -> Result<Self> {
        let k = cols.ncols();
        let err = (cols.tr_mul(&cols) - Mat::identity(k, k)).amax();
        if k > 0 && err > ORTHO_TOL {
            return Err(SsdaError::Numerical(format!("columns are not orthonormal (error {err:.3e})")));
        }
        Ok(Self { cols, origin, gap: f64::NAN })
    }

    fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    /// Basis with no columns in `R^d`.
    pub fn empty(d: usize, origin: BasisOrigin) -> Self {
        Self { cols: Mat::zeros(d, 0), origin, gap: f64::INFINITY }
    }

    pub fn cols(&self) -> &Mat {
        &self.cols
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn rank(&self) -> usize {
        self.cols.ncols()
    }

    pub fn origin(&self) -> BasisOrigin {
        self.origin
    }

    /// Separation `|λ_r| − |λ_{r+1}|` (or `σ_r − σ_{r+1}`) of the retained spectrum.
    /// Infinite for an empty basis, NaN when not applicable.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Whether the retained directions are not separated from the rest by more than `tol`.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        !(self.gap > tol)
    }

    /// Orthogonal projector `U Uᵀ`.
    pub fn projector(&self) -> Mat {
        &self.cols * self.cols.transpose()
    }
}

/// Eigenvectors of the `r` largest-|λ| eigenvalues of `(A + Aᵀ)/2`.
pub fn top_abs_eigvecs(a: &Mat, r: usize) -> Result<OrthoBasis> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(SsdaError::Dimension(format!("expected a square matrix, got {:?}", a.shape())));
    }
    if r > d {
        return Err(SsdaError::InvalidArgument(format!("r = {r} exceeds dimension {d}")));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(SsdaError::Numerical("matrix has non-finite entries".into()));
    }
    if r == 0 {
        return Ok(OrthoBasis::empty(d, BasisOrigin::EigTopAbs));
    }
    let eig = SymmetricEigen::new(linalg::symmetrize(a));
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    let scale = abs.iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let order = descending_order(&abs, TIE_TOL * scale);
    let mut cols = Mat::zeros(d, r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let mut v: Vector = eig.eigenvectors.column(idx).into_owned();
        normalize_sign(&mut v);
        cols.set_column(k, &v);
    }
    let next = order.get(r).map_or(0.0, |&i| abs[i]);
    let gap = abs[order[r - 1]] - next;
    Ok(OrthoBasis::new(cols, BasisOrigin::EigTopAbs)?.with_gap(gap))
}

/// Orthonormal basis of the orthogonal complement of `span(v)`.
pub fn orthonormal_complement(v: &OrthoBasis) -> OrthoBasis {
    let d = v.dim();
    let k = v.rank();
    if k == 0 {
        return OrthoBasis { cols: Mat::identity(d, d), origin: BasisOrigin::Complement, gap: f64::NAN };
    }
    if k >= d {
        return OrthoBasis::empty(d, BasisOrigin::Complement);
    }
    let residual = Mat::identity(d, d) - v.projector();
    let eig = SymmetricEigen::new(linalg::symmetrize(&residual));
    let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let order = descending_order(&vals, 0.5);
    let mut q = Mat::zeros(d, d - k);
    for (c, &idx) in order.iter().filter(|&&i| vals[i] > 0.5).take(d - k).enumerate() {
        q.set_column(c, &eig.eigenvectors.column(idx));
    }
    // one pass of re-orthogonalisation against v, then Gram–Schmidt
    q -= v.cols() * v.cols().tr_mul(&q);
    let cols = gram_schmidt(&q);
    OrthoBasis { cols, origin: BasisOrigin::Complement, gap: f64::NAN }
}

/// Modified Gram–Schmidt with two passes, followed by the sign convention.
/// Assumes the input columns are linearly independent.
fn gram_schmidt(m: &Mat) -> Mat {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        let mut col: Vector = out.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let prev = out.column(i).into_owned();
                let proj = prev.dot(&col);
                col.axpy(-proj, &prev, 1.0);
            }
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        normalize_sign(&mut col);
        out.set_column(j, &col);
    }
    out
}

/// Orthonormalises `[w, V]`, returning an `(r+1)`-column basis.
///
/// Fails when `w` lies in `span(V)` up to relative residual `rel_tol`.
pub fn augment_basis(w: &Vector, v: &OrthoBasis, rel_tol: f64) -> Result<OrthoBasis> {
    let d = v.dim();
    if w.len() != d {
        return Err(SsdaError::Dimension("augmenting vector has the wrong length".into()));
    }
    let resid = w - v.cols() * v.cols().tr_mul(w);
    let wn = w.norm();
    if !(wn > 0.0) || resid.norm() <= rel_tol * wn {
        return Err(SsdaError::InvalidArgument(format!(
            "vector lies in the span of the basis (relative residual {:.3e})",
            if wn > 0.0 { resid.norm() / wn } else { 0.0 }
        )));
    }
    let mut m = Mat::zeros(d, v.rank() + 1);
    m.set_column(0, w);
    for j in 0..v.rank() {
        m.set_column(j + 1, &v.cols().column(j));
    }
    OrthoBasis::new(gram_schmidt(&m), BasisOrigin::Augmented)
}

/// Left singular vectors of the `r` largest singular values of `p`.
pub fn top_left_singvecs(p: &Mat, r: usize) -> Result<OrthoBasis> {
    let (d, k) = p.shape();
    if r > d.min(k) {
        return Err(SsdaError::InvalidArgument(format!("r = {r} exceeds min(d, k) = {}", d.min(k))));
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(SsdaError::Numerical("matrix has non-finite entries".into()));
    }
    if r == 0 {
        return Ok(OrthoBasis::empty(d, BasisOrigin::SvdLeft));
    }
    let svd = linalg::checked_svd(p)?;
    let u = svd.u;
    let sv: Vec<f64> = svd.s.iter().cloned().collect();
    let scale = sv.iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let order = descending_order(&sv, TIE_TOL * scale);
    let mut cols = Mat::zeros(d, r);
    for (c, &idx) in order.iter().take(r).enumerate() {
        let mut v: Vector = u.column(idx).into_owned();
        normalize_sign(&mut v);
        cols.set_column(c, &v);
    }
    let next = order.get(r).map_or(0.0, |&i| sv[i]);
    let gap = sv[order[r - 1]] - next;
    Ok(OrthoBasis::new(cols, BasisOrigin::SvdLeft)?.with_gap(gap))
}

/// Operator-norm distance between the projectors of two bases.
pub fn subspace_distance(a: &OrthoBasis, b: &OrthoBasis) -> f64 {
    linalg::sym_op_norm(&(a.projector() - b.projector()))
}

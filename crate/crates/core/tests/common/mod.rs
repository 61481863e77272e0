//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use ssda_core::scm::{DomainParams, EnvironmentSet, Intervention};
use ssda_core::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

pub fn m3(rows: [[f64; 3]; 3]) -> Mat {
    Mat::from_fn(3, 3, |i, j| rows[i][j])
}

/// Three-node SCM whose source and target differ only in the first column of `B`.
pub fn example3_env() -> EnvironmentSet {
    let b = v(&[1.0, 1.0, 1.0]);
    let src = DomainParams::standard(m3([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 2.0, 0.0]]), b.clone()).unwrap();
    let tar = DomainParams::standard(m3([[0.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [-2.0, 2.0, 0.0]]), b).unwrap();
    EnvironmentSet::new(vec![src], tar, Intervention::Sc { support: vec![0] }).unwrap()
}

/// No edges among covariates; the domains differ by a deterministic mean shift.
pub fn example4_env() -> EnvironmentSet {
    let b = v(&[1.0, 1.0, 1.0]);
    let zero = Mat::zeros(3, 3);
    let src = DomainParams::standard(zero.clone(), b.clone()).unwrap().with_mean_shift(v(&[4.25, 2.75, -4.0])).unwrap();
    let tar = DomainParams::standard(zero, b).unwrap().with_mean_shift(v(&[-2.5, -1.5, 4.0])).unwrap();
    EnvironmentSet::new(vec![src], tar, Intervention::MeanShift).unwrap()
}

/// Joint second moments of `(X, Y)` from the explicit loading of `X` and `Y` on the
/// independent noises `(ξ_Y, ξ_X, Z)`, with `H` from a dense inverse.
pub struct JointMoments {
    pub sigma_x: Mat,
    pub exy: Vector,
    pub var_y: f64,
}

pub fn joint_moments(p: &DomainParams) -> JointMoments {
    let d = p.dim();
    let h = (Mat::identity(d, d) - p.connectivity()).try_inverse().expect("I - B invertible");
    let r = p.confounder().map_or(0, |c| c.rank());
    let k = 1 + d + r;
    // cov of (ξ_Y, ξ_X, Z)
    let mut cov = Mat::zeros(k, k);
    cov[(0, 0)] = p.noise_var_y();
    cov.view_mut((1, 1), (d, d)).copy_from(p.noise_cov_x());
    for j in 0..r {
        cov[(1 + d + j, 1 + d + j)] = 1.0;
    }
    // rows 0..d load X, row d loads Y
    let mut load = Mat::zeros(d + 1, k);
    let hb = &h * p.b();
    load.view_mut((0, 0), (d, 1)).copy_from(&hb);
    load.view_mut((0, 1), (d, d)).copy_from(&h);
    load[(d, 0)] = 1.0;
    if let Some(c) = p.confounder() {
        for j in 0..r {
            let wy = c.w_y()[j];
            let col = &hb * wy + &h * c.w().column(j);
            load.view_mut((0, 1 + d + j), (d, 1)).copy_from(&col);
            load[(d, 1 + d + j)] = wy;
        }
    }
    let joint = &load * cov * load.transpose();
    let mut sigma_x = joint.view((0, 0), (d, d)).into_owned();
    if let Some(mu) = p.mean_shift() {
        sigma_x += mu * mu.transpose();
    }
    JointMoments { sigma_x, exy: joint.view((0, d), (d, 1)).column(0).into_owned(), var_y: joint[(d, d)] }
}

/// `Σ⁻¹ c` through a dense inverse.
pub fn ls_coef(sigma: &Mat, c: &Vector) -> Vector {
    sigma.clone().try_inverse().expect("invertible second moment") * c
}

/// `(β − β*)ᵀ Σ (β − β*)`.
pub fn quad_excess(beta: &Vector, beta_star: &Vector, sigma: &Mat) -> f64 {
    let e = beta - beta_star;
    e.dot(&(sigma * &e))
}

pub fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

/// `|sin|` of the angle between two nonzero vectors.
pub fn sine_between(a: &Vector, b: &Vector) -> f64 {
    // residual form; sqrt(1 − cos²) loses half the digits near parallel
    let u = b / b.norm();
    (a - &u * a.dot(&u)).norm() / a.norm()
}

/// Orthonormal basis check: `‖VᵀV − I‖∞`.
pub fn orthonormality_error(v: &Mat) -> f64 {
    (v.transpose() * v - Mat::identity(v.ncols(), v.ncols())).amax()
}

/// Random SPD matrix `AᵀA/d + shift·I` from a deterministic LCG, so fixtures do not
/// depend on the crate's own RNG plumbing.
pub fn lcg_spd(d: usize, seed: u64, shift: f64) -> Mat {
    let a = lcg_mat(d, d, seed);
    a.transpose() * &a / d as f64 + Mat::identity(d, d) * shift
}

pub fn lcg_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Mat::from_fn(rows, cols, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

pub fn lcg_vec(n: usize, seed: u64) -> Vector {
    lcg_mat(n, 1, seed).column(0).into_owned()
}

//! Brute-force reference solver for small quadratic programs.
//!
//! Deliberately shares nothing with the production solvers: equality constraints go
//! through the full KKT system, a norm ball through a coarse multiplier scan plus
//! bisection, and an ℓ1 term through enumeration of all `3^d` sign patterns.
//! Only meant for `d ≤ 12`.

use crate::error::{Result, SsdaError};
use crate::{Mat, Vector};

pub const MAX_DIM: usize = 12;

/// `βᵀ G β − 2 hᵀ β`.
#[derive(Debug, Clone)]
pub struct QuadObjective {
    pub g: Mat,
    pub h: Vector,
}

impl QuadObjective {
    pub fn value(&self, beta: &Vector) -> f64 {
        beta.dot(&(&self.g * beta)) - 2.0 * self.h.dot(beta)
    }
}

/// `‖C (β − center)‖₂ ≤ rho`.
#[derive(Debug, Clone)]
pub struct BallSpec {
    pub c_mat: Mat,
    pub center: Vector,
    pub rho: f64,
}

/// `λ ‖β − center‖₁` added to the objective.
#[derive(Debug, Clone)]
pub struct L1Spec {
    pub lambda: f64,
    pub center: Vector,
}

#[derive(Debug, Clone, Default)]
pub struct QpConstraints {
    /// `A β = b`.
    pub affine: Option<(Mat, Vector)>,
    pub ball: Option<BallSpec>,
    pub l1: Option<L1Spec>,
}

/// Minimiser of the objective under `cons`.
pub fn brute_force_qp(obj: &QuadObjective, cons: &QpConstraints) -> Result<Vector> {
    let d = obj.h.len();
    if d > MAX_DIM {
        return Err(SsdaError::Unsupported(format!("reference solver handles d ≤ {MAX_DIM}, got {d}")));
    }
    if obj.g.shape() != (d, d) {
        return Err(SsdaError::Dimension("objective matrix has the wrong shape".into()));
    }
    if let Some(l1) = &cons.l1 {
        if cons.affine.is_some() || cons.ball.is_some() {
            return Err(SsdaError::Unsupported("ℓ1 term combined with other constraints".into()));
        }
        return enumerate_signs(obj, l1);
    }
    match &cons.ball {
        None => kkt_solve(obj, cons.affine.as_ref(), None),
        Some(ball) => ball_search(obj, cons.affine.as_ref(), ball),
    }
}

/// Solves the stationarity system of `βᵀ(G + μCᵀC)β − 2(h + μCᵀC c)ᵀβ` under `Aβ = b`.
fn kkt_solve(obj: &QuadObjective, affine: Option<&(Mat, Vector)>, ball: Option<(&BallSpec, f64)>) -> Result<Vector> {
    let d = obj.h.len();
    let mut g = obj.g.clone();
    let mut h = obj.h.clone();
    if let Some((b, mu)) = ball {
        let ctc = b.c_mat.tr_mul(&b.c_mat);
        h += &ctc * &b.center * mu;
        g += ctc * mu;
    }
    let k = affine.map_or(0, |(a, _)| a.nrows());
    let mut kkt = Mat::zeros(d + k, d + k);
    let mut rhs = Vector::zeros(d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(&(&g * 2.0));
    rhs.rows_mut(0, d).copy_from(&(&h * 2.0));
    if let Some((a, b)) = affine {
        if a.ncols() != d || b.len() != k {
            return Err(SsdaError::Dimension("affine constraint has the wrong shape".into()));
        }
        kkt.view_mut((0, d), (d, k)).copy_from(&a.transpose());
        kkt.view_mut((d, 0), (k, d)).copy_from(a);
        rhs.rows_mut(d, k).copy_from(b);
    }
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => kkt.svd(true, true).solve(&rhs, 1e-12).map_err(|e| SsdaError::Numerical(format!("KKT system: {e}")))?,
    };
    Ok(sol.rows(0, d).into_owned())
}

fn ball_search(obj: &QuadObjective, affine: Option<&(Mat, Vector)>, ball: &BallSpec) -> Result<Vector> {
    let radius = |beta: &Vector| (&ball.c_mat * (beta - &ball.center)).norm();
    let free = kkt_solve(obj, affine, Some((ball, 0.0)))?;
    if radius(&free) <= ball.rho {
        return Ok(free);
    }
    // scan μ over 1e-12 .. 1e12 in quarter decades until the ball is met
    let mut lo = 0.0;
    let mut hi = None;
    for k in -48..=48 {
        let mu = 10f64.powf(k as f64 / 4.0);
        if radius(&kkt_solve(obj, affine, Some((ball, mu)))?) <= ball.rho {
            hi = Some(mu);
            break;
        }
        lo = mu;
    }
    let mut hi = hi.ok_or_else(|| SsdaError::Numerical("ball constraint is unreachable".into()))?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if radius(&kkt_solve(obj, affine, Some((ball, mid)))?) <= ball.rho {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    kkt_solve(obj, affine, Some((ball, hi)))
}

fn enumerate_signs(obj: &QuadObjective, l1: &L1Spec) -> Result<Vector> {
    let d = obj.h.len();
    let a = &l1.center;
    let objective = |beta: &Vector| obj.value(beta) + l1.lambda * (beta - a).lp_norm(1);
    let mut best = a.clone();
    let mut best_val = objective(a);
    let total = 3usize.pow(d as u32);
    let mut signs = vec![0i8; d];
    for code in 0..total {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&i| signs[i] != 0).collect();
        if free.is_empty() {
            continue;
        }
        let fixed: Vec<usize> = (0..d).filter(|&i| signs[i] == 0).collect();
        let k = free.len();
        let g_ff = Mat::from_fn(k, k, |p, q| obj.g[(free[p], free[q])]);
        let rhs = Vector::from_fn(k, |p, _| {
            let i = free[p];
            let coupling: f64 = fixed.iter().map(|&j| obj.g[(i, j)] * a[j]).sum();
            obj.h[i] - coupling - 0.5 * l1.lambda * f64::from(signs[i])
        });
        let Some(sol) = g_ff.lu().solve(&rhs) else { continue };
        let mut beta = a.clone();
        for (p, &i) in free.iter().enumerate() {
            beta[i] = sol[p];
        }
        let val = objective(&beta);
        if val.is_finite() && val < best_val {
            best_val = val;
            best = beta;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spd3() -> Mat {
        Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0])
    }

    #[test]
    fn unconstrained_matches_normal_equations() {
        let g = spd3();
        let h = Vector::from_vec(vec![1.0, -0.5, 0.25]);
        let obj = QuadObjective { g: g.clone(), h: h.clone() };
        let beta = brute_force_qp(&obj, &QpConstraints::default()).unwrap();
        assert_abs_diff_eq!(beta, g.lu().solve(&h).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn all_negative_sign_pattern_is_visited() {
        let obj = QuadObjective { g: Mat::identity(2, 2), h: Vector::from_vec(vec![-1.0, -1.0]) };
        let cons = QpConstraints { l1: Some(L1Spec { lambda: 0.1, center: Vector::zeros(2) }), ..Default::default() };
        assert_abs_diff_eq!(
            brute_force_qp(&obj, &cons).unwrap(),
            Vector::from_vec(vec![-0.95, -0.95]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn large_l1_weight_keeps_center() {
        let obj = QuadObjective { g: spd3(), h: Vector::from_vec(vec![1.0, -0.5, 0.25]) };
        let center = Vector::from_vec(vec![0.2, 0.1, -0.3]);
        let cons = QpConstraints { l1: Some(L1Spec { lambda: 1e4, center: center.clone() }), ..Default::default() };
        assert_abs_diff_eq!(brute_force_qp(&obj, &cons).unwrap(), center, epsilon = 0.0);
    }

    #[test]
    fn ball_binds_at_radius() {
        let obj = QuadObjective { g: Mat::identity(2, 2), h: Vector::from_vec(vec![3.0, 4.0]) };
        let ball = BallSpec { c_mat: Mat::identity(2, 2), center: Vector::zeros(2), rho: 1.0 };
        let cons = QpConstraints { ball: Some(ball), ..Default::default() };
        let beta = brute_force_qp(&obj, &cons).unwrap();
        assert_abs_diff_eq!(beta, Vector::from_vec(vec![0.6, 0.8]), epsilon = 1e-9);
    }

    #[test]
    fn affine_constraint_is_respected() {
        let obj = QuadObjective { g: spd3(), h: Vector::from_vec(vec![1.0, 1.0, 1.0]) };
        let a = Mat::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let cons = QpConstraints { affine: Some((a.clone(), Vector::from_vec(vec![0.0]))), ..Default::default() };
        let beta = brute_force_qp(&obj, &cons).unwrap();
        assert!((a * beta)[0].abs() < 1e-12);
    }

    #[test]
    fn rejects_large_dimension_and_mixed_l1() {
        let obj = QuadObjective { g: Mat::identity(13, 13), h: Vector::zeros(13) };
        assert!(brute_force_qp(&obj, &QpConstraints::default()).is_err());
        let obj = QuadObjective { g: Mat::identity(2, 2), h: Vector::zeros(2) };
        let cons = QpConstraints {
            l1: Some(L1Spec { lambda: 1.0, center: Vector::zeros(2) }),
            ball: Some(BallSpec { c_mat: Mat::identity(2, 2), center: Vector::zeros(2), rho: 1.0 }),
            ..Default::default()
        };
        assert!(brute_force_qp(&obj, &cons).is_err());
    }
}

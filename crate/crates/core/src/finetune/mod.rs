//! Fine-tuning a UDA anchor on a small labeled target sample.
//!
//! Two families:
//!
//! - subspace fine-tuning (FT-DIP, FT-CIP, FT-CIP-Tar): least squares over the affine set
//!   `{β : Q̂ᵀ Σ̂ (β − β₀) = 0}` with an optional cap `‖V̂ᵀ Σ̂ β‖₂ ≤ ϱ`;
//! - anchored penalised least squares (FT-OLS-Src): `λ · pen(β − β̂_LS)` with `pen` the
//!   ℓ1 or squared ℓ2 norm, inside the ball `‖β‖₂ ≤ ρ`.
//!
//! [`reference::brute_force_qp`] solves the same programs by unrelated means for testing.

pub mod reference;

use nalgebra::linalg::SymmetricEigen;

use crate::error::{Result, SsdaError};
use crate::estimators::{LinearPredictor, Moments, PredictorMeta};
use crate::linalg::{self, lambda_max_sym, project_ball, soft_threshold, spd_solve, spd_solve_vec};
use crate::scm::Dataset;
use crate::subspace::{augment_basis, orthonormal_complement, OrthoBasis};
use crate::{Mat, Vector};

const BISECTION_STEPS: usize = 200;
const CAP_TOL: f64 = 1e-10;
const FISTA_MAX_ITER: usize = 10_000;
const FISTA_TOL: f64 = 1e-9;
/// `ŵ⁽¹⁾` must stick out of `span(V̂_aw)` by at least this relative residual.
const AUGMENT_TOL: f64 = 1e-8;

/// Feasible set of a subspace fine-tuning problem.
#[derive(Debug, Clone)]
pub struct SubspaceConstraint {
    pub v_hat: OrthoBasis,
    pub q_hat: OrthoBasis,
    pub sigma_hat: Mat,
    pub anchor: LinearPredictor,
    /// Cap `ϱ`; `f64::INFINITY` switches it off.
    pub rho: f64,
}

impl SubspaceConstraint {
    /// Builds the constraint with `Q̂` the orthogonal complement of `V̂`.
    pub fn new(v_hat: OrthoBasis, sigma_hat: Mat, anchor: LinearPredictor, rho: f64) -> Result<Self> {
        let q_hat = orthonormal_complement(&v_hat);
        Self::with_complement(v_hat, q_hat, sigma_hat, anchor, rho)
    }

    pub fn with_complement(
        v_hat: OrthoBasis,
        q_hat: OrthoBasis,
        sigma_hat: Mat,
        anchor: LinearPredictor,
        rho: f64,
    ) -> Result<Self> {
        let d = v_hat.dim();
        if q_hat.dim() != d || sigma_hat.shape() != (d, d) || anchor.dim() != d {
            return Err(SsdaError::Dimension("subspace constraint parts differ in dimension".into()));
        }
        if v_hat.rank() + q_hat.rank() != d {
            return Err(SsdaError::InvalidArgument("V̂ and Q̂ must together span R^d".into()));
        }
        if v_hat.rank() > 0 && q_hat.rank() > 0 && q_hat.cols().tr_mul(v_hat.cols()).amax() > 1e-10 {
            return Err(SsdaError::InvalidArgument("Q̂ is not orthogonal to V̂".into()));
        }
        if !(rho > 0.0) {
            return Err(SsdaError::InvalidArgument(format!("cap must be positive, got {rho}")));
        }
        Ok(Self { v_hat, q_hat, sigma_hat, anchor, rho })
    }

    /// `‖Q̂ᵀ Σ̂ (β − β₀)‖₂`.
    pub fn equality_residual(&self, beta: &Vector) -> f64 {
        if self.q_hat.rank() == 0 {
            return 0.0;
        }
        self.q_hat.cols().tr_mul(&(&self.sigma_hat * (beta - self.anchor.beta()))).norm()
    }

    /// `‖V̂ᵀ Σ̂ β‖₂`.
    pub fn cap_value(&self, beta: &Vector) -> f64 {
        self.v_hat.cols().tr_mul(&(&self.sigma_hat * beta)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyNorm {
    L1,
    L2,
}

/// Regularised fine-tuning around an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredPenalty {
    pub lambda: f64,
    pub norm: PenaltyNorm,
    /// Radius of the ball `‖β‖₂ ≤ ρ`; infinite by default.
    pub ball_rho: f64,
}

impl AnchoredPenalty {
    pub fn new(lambda: f64, norm: PenaltyNorm) -> Result<Self> {
        Self::with_ball(lambda, norm, f64::INFINITY)
    }

    pub fn with_ball(lambda: f64, norm: PenaltyNorm, ball_rho: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(SsdaError::InvalidArgument(format!("λ must be finite and ≥ 0, got {lambda}")));
        }
        if !(ball_rho > 0.0) {
            return Err(SsdaError::InvalidArgument(format!("ball radius must be positive, got {ball_rho}")));
        }
        Ok(Self { lambda, norm, ball_rho })
    }
}

/// Smallest `μ ≥ 0` (to bisection tolerance) with `‖(A + μI)⁻¹ z‖ ≤ rho`, for symmetric PSD `A`.
///
/// Returns `(μ, (A + μI)⁻¹ z)` at the feasible end of the final bracket.
fn bisect_shift(eig: &SymmetricEigen<f64, nalgebra::Dyn>, z: &Vector, rho: f64) -> (f64, Vector) {
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let t = eig.eigenvectors.tr_mul(z);
    let norm_at = |mu: f64| -> f64 {
        t.iter()
            .zip(&lambdas)
            .map(|(ti, li)| {
                let denom = li + mu;
                if denom > 0.0 {
                    (ti / denom).powi(2)
                } else if *ti == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum::<f64>()
            .sqrt()
    };
    let solve_at = |mu: f64| -> Vector {
        let scaled = Vector::from_iterator(
            t.len(),
            t.iter().zip(&lambdas).map(|(ti, li)| if li + mu > 0.0 { ti / (li + mu) } else { 0.0 }),
        );
        &eig.eigenvectors * scaled
    };
    let mut lo = 0.0;
    let mut hi = z.norm() / rho;
    for _ in 0..BISECTION_STEPS {
        if rho - norm_at(hi) <= CAP_TOL * rho.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, solve_at(hi))
}

/// Subspace fine-tuning from target moments `G = XᵀX/n`, `c = XᵀY/n`.
///
/// With `D = Σ̂⁻¹V̂`, every feasible point is `β₀ + Dα`. The objective becomes
/// `αᵀ(DᵀGD)α − 2αᵀDᵀ(c − Gβ₀)` and the cap `‖s₀ + α‖ ≤ ϱ` where `s₀ = V̂ᵀΣ̂β₀`.
pub fn solve_subspace_moments(target: &Moments, c: &SubspaceConstraint) -> Result<LinearPredictor> {
    let d = c.anchor.dim();
    if target.dim() != d {
        return Err(SsdaError::Dimension("target moments and constraint differ in dimension".into()));
    }
    let r = c.v_hat.rank();
    let beta0 = c.anchor.beta();
    let mut meta = PredictorMeta { fine_tune_dim: Some(r), cap_active: Some(false), ..Default::default() };
    meta.set_hyper("rho", c.rho);
    if r == 0 {
        meta.alpha = Some(Vector::zeros(0));
        return Ok(LinearPredictor::new("FT", beta0.clone())?.with_meta(meta));
    }
    let sol = spd_solve(&c.sigma_hat, c.v_hat.cols())?;
    let dmat = sol.x;
    meta.jitter |= sol.jittered;

    let gram_r = linalg::symmetrize(&dmat.tr_mul(&(&target.gram * &dmat)));
    let h = dmat.tr_mul(&(&target.cross - &target.gram * beta0));
    let s0 = c.v_hat.cols().tr_mul(&(&c.sigma_hat * beta0));
    // in γ = α + s₀ the objective is γᵀGγ − 2γᵀ(h + G s₀)
    let h_shift = &h + &gram_r * &s0;

    let (gamma_free, jitter) = spd_solve_vec(&gram_r, &h_shift)?;
    meta.jitter |= jitter;
    let gamma = if gamma_free.norm() <= c.rho {
        gamma_free
    } else {
        let eig = SymmetricEigen::new(gram_r.clone());
        let (mu, gamma) = bisect_shift(&eig, &h_shift, c.rho);
        meta.cap_active = Some(true);
        meta.multiplier = Some(mu);
        gamma
    };
    let alpha = &gamma - &s0;
    let beta = beta0 + &dmat * &alpha;
    meta.alpha = Some(alpha);
    meta.basis = Some(c.v_hat.clone());
    meta.complement = Some(c.q_hat.clone());
    Ok(LinearPredictor::new("FT", beta)?.with_meta(meta))
}

/// Subspace-constrained least squares on labeled target data.
pub fn solve_subspace_ls(tar_labeled: &Dataset, c: &SubspaceConstraint) -> Result<LinearPredictor> {
    solve_subspace_moments(&Moments::from_dataset(tar_labeled)?, c)
}

fn require_basis<'a>(pred: &'a LinearPredictor, what: &str) -> Result<&'a OrthoBasis> {
    pred.meta
        .basis
        .as_ref()
        .ok_or_else(|| SsdaError::InvalidArgument(format!("{} carries no {what} basis", pred.name())))
}

/// FT-DIP from moments: fine-tune inside `span(Σ̂0⁻¹V̂)` around the DIP anchor.
pub fn ft_dip_moments(
    dip: &LinearPredictor,
    sigma_target: &Mat,
    target: &Moments,
    rho: f64,
) -> Result<LinearPredictor> {
    let v = require_basis(dip, "DIP")?.clone();
    let q = match &dip.meta.complement {
        Some(q) => q.clone(),
        None => orthonormal_complement(&v),
    };
    let c = SubspaceConstraint::with_complement(v, q, sigma_target.clone(), dip.clone(), rho)?;
    Ok(solve_subspace_moments(target, &c)?.renamed("FT-DIP"))
}

/// FT-DIP with `Σ̂0` from unlabeled target data.
pub fn ft_dip(
    dip: &LinearPredictor,
    tar_labeled: &Dataset,
    tar_unlabeled: &Dataset,
    rho: f64,
) -> Result<LinearPredictor> {
    ft_dip_moments(dip, &tar_unlabeled.second_moment(), &Moments::from_dataset(tar_labeled)?, rho)
}

/// `V̂_aug`: orthonormalised `[ŵ⁽¹⁾, V̂_aw]`.
pub fn cip_augmented_basis(cip: &LinearPredictor) -> Result<OrthoBasis> {
    let v = require_basis(cip, "CIP")?;
    let w1 = cip
        .meta
        .anticausal_first
        .as_ref()
        .ok_or_else(|| SsdaError::InvalidArgument(format!("{} carries no ŵ⁽¹⁾", cip.name())))?;
    augment_basis(w1, v, AUGMENT_TOL)
}

/// FT-CIP from moments, with `Σ̂` the first source's second moment.
pub fn ft_cip_moments(
    cip: &LinearPredictor,
    sigma_source1: &Mat,
    target: &Moments,
    rho: f64,
) -> Result<LinearPredictor> {
    let v_aug = cip_augmented_basis(cip)?;
    let c = SubspaceConstraint::new(v_aug, sigma_source1.clone(), cip.clone(), rho)?;
    Ok(solve_subspace_moments(target, &c)?.renamed("FT-CIP"))
}

/// FT-CIP: `(r+1)`-dimensional fine-tuning with `Σ̂⁽¹⁾` from unlabeled source-1 data.
pub fn ft_cip(
    cip: &LinearPredictor,
    src_unlabeled_1: &Dataset,
    tar_labeled: &Dataset,
    rho: f64,
) -> Result<LinearPredictor> {
    ft_cip_moments(cip, &src_unlabeled_1.second_moment(), &Moments::from_dataset(tar_labeled)?, rho)
}

/// FT-CIP-Tar from moments, with `Σ̂` the target second moment.
pub fn ft_cip_tar_moments(
    cip: &LinearPredictor,
    sigma_target: &Mat,
    target: &Moments,
    rho: f64,
) -> Result<LinearPredictor> {
    let v = require_basis(cip, "CIP")?.clone();
    let c = SubspaceConstraint::new(v, sigma_target.clone(), cip.clone(), rho)?;
    Ok(solve_subspace_moments(target, &c)?.renamed("FT-CIP-Tar"))
}

/// FT-CIP-Tar: `r`-dimensional fine-tuning with `Σ̂⁽⁰⁾` from unlabeled target data.
pub fn ft_cip_tar(
    cip: &LinearPredictor,
    tar_unlabeled: &Dataset,
    tar_labeled: &Dataset,
    rho: f64,
) -> Result<LinearPredictor> {
    ft_cip_tar_moments(cip, &tar_unlabeled.second_moment(), &Moments::from_dataset(tar_labeled)?, rho)
}

/// `δᵀGδ − 2hᵀδ + λ‖δ‖₁`.
fn l1_objective(g: &Mat, h: &Vector, lambda: f64, delta: &Vector) -> f64 {
    delta.dot(&(g * delta)) - 2.0 * h.dot(delta) + lambda * delta.lp_norm(1)
}

/// Re-solves the stationarity equations on the support found by FISTA and keeps the
/// result only if it satisfies the KKT conditions and does not raise the objective.
fn polish_l1(g: &Mat, h: &Vector, lambda: f64, delta: &Vector, anchor: &Vector, rho: f64) -> Option<Vector> {
    let d = delta.len();
    let support: Vec<usize> = (0..d).filter(|&i| delta[i] != 0.0).collect();
    let mut polished = Vector::zeros(d);
    if !support.is_empty() {
        let k = support.len();
        let g_ss = Mat::from_fn(k, k, |a, b| g[(support[a], support[b])]);
        let rhs = Vector::from_fn(k, |a, _| h[support[a]] - 0.5 * lambda * delta[support[a]].signum());
        let sol = g_ss.lu().solve(&rhs)?;
        for (a, &i) in support.iter().enumerate() {
            if sol[a] * delta[i].signum() <= 0.0 {
                return None;
            }
            polished[i] = sol[a];
        }
    }
    let grad = (g * &polished - h) * 2.0;
    let slack = 1e-9 * lambda.max(grad.amax()).max(1.0);
    let kkt_ok = (0..d).all(|i| polished[i] != 0.0 || grad[i].abs() <= lambda + slack);
    if !kkt_ok || (anchor + &polished).norm() > rho {
        return None;
    }
    let before = l1_objective(g, h, lambda, delta);
    let after = l1_objective(g, h, lambda, &polished);
    (after <= before + 1e-12 * before.abs().max(1.0)).then_some(polished)
}

/// FISTA with adaptive restart on `δ = β − anchor`.
fn solve_l1(g: &Mat, h: &Vector, anchor: &Vector, lambda: f64, rho: f64, meta: &mut PredictorMeta) -> Vector {
    let d = h.len();
    let lip = {
        let l = lambda_max_sym(&(g * 2.0));
        if l > 0.0 {
            l
        } else {
            1.0
        }
    };
    let step = 1.0 / lip;
    let to_ball = |delta: Vector| -> Vector {
        if rho.is_finite() {
            project_ball(&(anchor + &delta), rho) - anchor
        } else {
            delta
        }
    };
    let mut delta = to_ball(Vector::zeros(d));
    let mut y = delta.clone();
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=FISTA_MAX_ITER {
        iterations = it;
        let grad = (g * &y - h) * 2.0;
        let next = to_ball(soft_threshold(&(&y - grad * step), lambda * step));
        let change = (&next - &delta).amax();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (&next - &delta) * ((t - 1.0) / t_next);
        // gradient-based restart: drop momentum when it points uphill
        if (&y - &next).dot(&(&next - &delta)) > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            t = t_next;
            y = &next + momentum;
        }
        delta = next;
        if change < FISTA_TOL {
            converged = true;
            break;
        }
    }
    meta.iterations = Some(iterations);
    meta.converged = Some(converged);
    if let Some(p) = polish_l1(g, h, lambda, &delta, anchor, rho) {
        return p;
    }
    delta
}

/// Closed-form ridge step in `δ`, with a multiplier search when the ball binds.
fn solve_l2(g: &Mat, h: &Vector, anchor: &Vector, lambda: f64, rho: f64, meta: &mut PredictorMeta) -> Result<Vector> {
    let d = h.len();
    let k = g + Mat::identity(d, d) * lambda;
    let (delta, jitter) = spd_solve_vec(&k, h)?;
    meta.jitter |= jitter;
    if (anchor + &delta).norm() <= rho {
        meta.cap_active = Some(false);
        return Ok(delta);
    }
    // (K + μI)δ = h − μa, so a + δ = (K + μI)⁻¹(Ka + h)
    let z = &k * anchor + h;
    let eig = SymmetricEigen::new(linalg::symmetrize(&k));
    let (mu, shifted) = bisect_shift(&eig, &z, rho);
    meta.cap_active = Some(true);
    meta.multiplier = Some(mu);
    Ok(shifted - anchor)
}

/// Anchored fine-tuning from target moments:
/// `min βᵀGβ − 2cᵀβ + λ·pen(β − β̂_LS)` subject to `‖β‖₂ ≤ ρ`.
pub fn ft_ols_moments(ls: &LinearPredictor, target: &Moments, p: &AnchoredPenalty) -> Result<LinearPredictor> {
    let d = ls.dim();
    if target.dim() != d {
        return Err(SsdaError::Dimension("anchor and target moments differ in dimension".into()));
    }
    let anchor = ls.beta();
    let h = &target.cross - &target.gram * anchor;
    let mut meta = PredictorMeta::default();
    meta.set_hyper("lambda", p.lambda);
    meta.set_hyper("ball_rho", p.ball_rho);
    let (delta, name) = match p.norm {
        PenaltyNorm::L1 => (solve_l1(&target.gram, &h, anchor, p.lambda, p.ball_rho, &mut meta), "FT-OLS-L1"),
        PenaltyNorm::L2 => (solve_l2(&target.gram, &h, anchor, p.lambda, p.ball_rho, &mut meta)?, "FT-OLS-L2"),
    };
    Ok(LinearPredictor::new(name, anchor + delta)?.with_meta(meta))
}

/// FT-OLS-Src: anchored ℓ1 or ℓ2 fine-tuning on labeled target data.
pub fn ft_ols_anchored(ls: &LinearPredictor, tar_labeled: &Dataset, p: &AnchoredPenalty) -> Result<LinearPredictor> {
    ft_ols_moments(ls, &Moments::from_dataset(tar_labeled)?, p)
}

/// Geometric grid of `points` values over `[lo, hi] · ‖XᵀY‖∞/n` of `tar_labeled`.
pub fn lambda_grid(tar_labeled: &Dataset, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(SsdaError::InvalidArgument(format!("bad λ grid [{lo}, {hi}] × {points}")));
    }
    let scale = tar_labeled.cross_moment()?.amax();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    if points == 1 {
        return Ok(vec![lo * scale]);
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|k| lo * scale * (ratio * k as f64).exp()).collect())
}

/// The default grid: 20 points over `[1e-4, 1e2] · ‖XᵀY‖∞/n`.
pub fn default_lambda_grid(tar_labeled: &Dataset) -> Result<Vec<f64>> {
    lambda_grid(tar_labeled, 1e-4, 1e2, 20)
}

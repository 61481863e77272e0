//! Unsupervised baselines (OLS, pooled OLS, DIP, CIP) and the population oracle.
//!
//! Every estimator has a population counterpart that consumes exact moments instead of
//! samples; both routes share the same constrained least-squares kernel, which solves
//! `min (β − ·)ᵀ G (β − ·)` over `β = Q u` by reparameterisation.

use crate::error::{Result, SsdaError};
use crate::io::fmt17;
use crate::linalg::{lstsq_min_norm, spd_solve, spd_solve_vec};
use crate::scm::{population_moments, Dataset, DomainParams, EnvironmentSet, Intervention, PopulationMoments};
use crate::subspace::{orthonormal_complement, top_abs_eigvecs, top_left_singvecs, BasisOrigin, OrthoBasis};
use crate::{Mat, Vector};

/// Diagnostics and hyperparameters attached to a fitted predictor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictorMeta {
    pub hyperparameters: Vec<(String, f64)>,
    pub rank_deficient: bool,
    /// A factorisation needed diagonal jitter.
    pub jitter: bool,
    /// `V̂` for DIP, `V̂_aw` for CIP, the fine-tuning basis for FT methods.
    pub basis: Option<OrthoBasis>,
    pub complement: Option<OrthoBasis>,
    /// `Σ̂_X⁽⁰⁾` used by DIP to build its subspace.
    pub sigma_target: Option<Mat>,
    /// `ŵ⁽¹⁾`, the anticausal regression of the first source.
    pub anticausal_first: Option<Vector>,
    pub anticausal_all: Vec<Vector>,
    /// Rows of each source used for the subspace half of a split fit.
    pub split_sizes: Vec<usize>,
    pub identity_residual: Option<f64>,
    pub closed_form_residual: Option<f64>,
    pub constraint_dropped: bool,
    pub cap_active: Option<bool>,
    pub alpha: Option<Vector>,
    pub multiplier: Option<f64>,
    pub fine_tune_dim: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub source_index: Option<usize>,
}

impl PredictorMeta {
    pub fn hyper(&self, key: &str) -> Option<f64> {
        self.hyperparameters.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn set_hyper(&mut self, key: &str, value: f64) {
        match self.hyperparameters.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.hyperparameters.push((key.to_string(), value)),
        }
    }
}

/// A linear predictor `x ↦ βᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    name: String,
    beta: Vector,
    pub meta: PredictorMeta,
}

impl LinearPredictor {
    pub fn new(name: impl Into<String>, beta: Vector) -> Result<Self> {
        let name = name.into();
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(SsdaError::Numerical(format!("{name}: coefficients are not finite")));
        }
        Ok(Self { name, beta, meta: PredictorMeta::default() })
    }

    pub fn with_meta(mut self, meta: PredictorMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn predict(&self, x: &Mat) -> Vector {
        x * &self.beta
    }

    /// `name,β_1,...,β_d` with 17 significant digits.
    pub fn csv_line(&self) -> String {
        let mut parts = vec![self.name.clone()];
        parts.extend(self.beta.iter().map(|&v| fmt17(v)));
        parts.join(",")
    }
}

/// Second moments `G = E[XXᵀ]` and `c = E[XY]`, empirical or exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub gram: Mat,
    pub cross: Vector,
}

impl Moments {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Ok(Self { gram: data.second_moment(), cross: data.cross_moment()? })
    }

    pub fn from_population(pm: &PopulationMoments) -> Self {
        Self { gram: pm.sigma_x.clone(), cross: pm.exy.clone() }
    }

    pub fn dim(&self) -> usize {
        self.cross.len()
    }

    /// Uniform average of several domains' moments.
    pub fn pooled(parts: &[Moments]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| SsdaError::InvalidArgument("no moments to pool".into()))?;
        let d = first.dim();
        if parts.iter().any(|m| m.dim() != d) {
            return Err(SsdaError::Dimension("pooled moments differ in dimension".into()));
        }
        let k = parts.len() as f64;
        let mut gram = Mat::zeros(d, d);
        let mut cross = Vector::zeros(d);
        for m in parts {
            gram += &m.gram;
            cross += &m.cross;
        }
        Ok(Self { gram: gram / k, cross: cross / k })
    }
}

/// `Q (QᵀGQ)⁻¹ Qᵀc`, the least-squares fit restricted to `span(Q)`.
/// Returns the coefficients and whether jitter was applied.
pub fn constrained_ls(m: &Moments, q: &OrthoBasis) -> Result<(Vector, bool)> {
    let d = m.dim();
    if q.dim() != d {
        return Err(SsdaError::Dimension("basis and moments differ in dimension".into()));
    }
    if q.rank() == 0 {
        return Ok((Vector::zeros(d), false));
    }
    let qm = q.cols();
    let inner = qm.tr_mul(&(&m.gram * qm));
    let rhs = qm.tr_mul(&m.cross);
    let (u, jitter) = spd_solve_vec(&inner, &rhs)?;
    Ok((qm * u, jitter))
}

/// Least squares on one labeled dataset; minimum-norm solution when `XᵀX` is singular.
pub fn ols_fit(data: &Dataset) -> Result<LinearPredictor> {
    let sol = lstsq_min_norm(data.x(), data.labels()?)?;
    let mut meta = PredictorMeta { rank_deficient: sol.rank_deficient, ..Default::default() };
    meta.set_hyper("rank", sol.rank as f64);
    Ok(LinearPredictor::new("OLS", sol.beta)?.with_meta(meta))
}

/// Minimises `(1/M) Σ_m (1/n_m) ‖Y⁽ᵐ⁾ − X⁽ᵐ⁾β‖²`.
pub fn ols_pool_fit(datasets: &[Dataset]) -> Result<LinearPredictor> {
    let first = datasets.first().ok_or_else(|| SsdaError::InvalidArgument("no datasets to pool".into()))?;
    let d = first.dim();
    if datasets.iter().any(|ds| ds.dim() != d) {
        return Err(SsdaError::Dimension("pooled datasets differ in dimension".into()));
    }
    let total: usize = datasets.iter().map(Dataset::n).sum();
    let m = datasets.len() as f64;
    let mut x = Mat::zeros(total, d);
    let mut y = Vector::zeros(total);
    let mut row = 0;
    for ds in datasets {
        let labels = ds.labels()?;
        let w = 1.0 / (m * ds.n() as f64).sqrt();
        x.rows_mut(row, ds.n()).copy_from(&(ds.x() * w));
        y.rows_mut(row, ds.n()).copy_from(&(labels * w));
        row += ds.n();
    }
    let sol = lstsq_min_norm(&x, &y)?;
    let meta = PredictorMeta { rank_deficient: sol.rank_deficient, ..Default::default() };
    Ok(LinearPredictor::new("OLS-Pool", sol.beta)?.with_meta(meta))
}

/// DIP-cov from moments: match covariances outside the top-`r` directions of `Σ0 − Σ1`.
pub fn dip_from_moments(sigma_target: &Mat, sigma_source: &Mat, source: &Moments, r: usize) -> Result<LinearPredictor> {
    let d = source.dim();
    if r >= d {
        return Err(SsdaError::InvalidArgument(format!("DIP needs r < d, got r = {r}, d = {d}")));
    }
    let v = top_abs_eigvecs(&(sigma_target - sigma_source), r)?;
    let q = orthonormal_complement(&v);
    let (beta, jitter) = constrained_ls(source, &q)?;
    let mut meta = PredictorMeta { jitter, ..Default::default() };
    meta.set_hyper("r", r as f64);
    meta.set_hyper("gap", v.gap());
    meta.basis = Some(v);
    meta.complement = Some(q);
    meta.sigma_target = Some(sigma_target.clone());
    Ok(LinearPredictor::new("DIP", beta)?.with_meta(meta))
}

/// Finite-sample DIP-cov with the first source.
pub fn dip_cov_fit(
    src_labeled: &Dataset,
    src_unlabeled: &Dataset,
    tar_unlabeled: &Dataset,
    r: usize,
) -> Result<LinearPredictor> {
    let d = src_labeled.dim();
    if src_unlabeled.dim() != d || tar_unlabeled.dim() != d {
        return Err(SsdaError::Dimension("DIP inputs differ in dimension".into()));
    }
    let sigma0 = tar_unlabeled.second_moment();
    let sigma1 = src_unlabeled.second_moment();
    dip_from_moments(&sigma0, &sigma1, &Moments::from_dataset(src_labeled)?, r)
}

/// Population DIP-cov of a CA environment.
///
/// Also records `‖β_DIP − (I − Σ0⁻¹V(VᵀΣ0⁻¹V)⁻¹Vᵀ) β*‖₂` in `meta.identity_residual`.
pub fn dip_population(env: &EnvironmentSet) -> Result<LinearPredictor> {
    let r = match env.intervention() {
        Intervention::Ca { rank } => *rank,
        other => {
            return Err(SsdaError::InvalidArgument(format!(
                "population DIP-cov needs a CA environment, got {}",
                other.name()
            )))
        }
    };
    let pm0 = population_moments(env.target());
    let pm1 = population_moments(&env.sources()[0]);
    let mut pred = dip_from_moments(&pm0.sigma_x, &pm1.sigma_x, &Moments::from_population(&pm1), r)?;

    let beta_star = pm0.beta_ls()?;
    let v = pred.meta.basis.as_ref().map(|b| b.cols().clone()).unwrap_or_else(|| Mat::zeros(env.dim(), 0));
    let projected = if v.ncols() == 0 {
        beta_star
    } else {
        let s_inv_v = spd_solve(&pm0.sigma_x, &v)?.x;
        let inner = v.tr_mul(&s_inv_v);
        let coef = spd_solve_vec(&inner, &v.tr_mul(&beta_star))?.0;
        &beta_star - s_inv_v * coef
    };
    pred.meta.identity_residual = Some((pred.beta() - projected).norm());
    Ok(pred)
}

/// Population DIP with the single mean-matching constraint `βᵀ(E X⁽¹⁾ − E X⁽⁰⁾) = 0`.
pub fn dip_mean_population(env: &EnvironmentSet) -> Result<LinearPredictor> {
    if *env.intervention() != Intervention::MeanShift {
        return Err(SsdaError::InvalidArgument("mean-matching DIP needs a MeanShift environment".into()));
    }
    let d = env.dim();
    let pm0 = population_moments(env.target());
    let pm1 = population_moments(&env.sources()[0]);
    let diff = &pm1.mean_x - &pm0.mean_x;
    let source = Moments::from_population(&pm1);
    let norm = diff.norm();
    let mut meta = PredictorMeta::default();
    let q = if norm > 0.0 {
        let v = OrthoBasis::new(Mat::from_column_slice(d, 1, (diff / norm).as_slice()), BasisOrigin::Augmented)?;
        let q = orthonormal_complement(&v);
        meta.basis = Some(v);
        q
    } else {
        meta.constraint_dropped = true;
        OrthoBasis::new(Mat::identity(d, d), BasisOrigin::Complement)?
    };
    let (beta, jitter) = constrained_ls(&source, &q)?;
    meta.jitter = jitter;
    meta.complement = Some(q);
    Ok(LinearPredictor::new("DIP-mean", beta)?.with_meta(meta))
}

/// `ŵ = XᵀY / ‖Y‖²`, the regression of `X` on `Y`.
pub fn anticausal_regress(data: &Dataset) -> Result<Vector> {
    let y = data.labels()?;
    let yy = y.norm_squared();
    if !(yy > 0.0) {
        return Err(SsdaError::InvalidArgument("anticausal regression needs a nonzero Y".into()));
    }
    Ok(data.x().tr_mul(y) / yy)
}

/// CIP-mean from per-source `ŵ⁽ᵐ⁾` and per-source risk moments.
pub fn cip_from_parts(w_hats: &[Vector], risk_moments: &[Moments], r: usize) -> Result<LinearPredictor> {
    let m = w_hats.len();
    if m < 2 || risk_moments.len() != m {
        return Err(SsdaError::InvalidArgument(format!("CIP needs M ≥ 2 matched sources, got {m}")));
    }
    if r > m - 1 {
        return Err(SsdaError::InvalidArgument(format!("CIP needs r ≤ M − 1, got r = {r}, M = {m}")));
    }
    let d = w_hats[0].len();
    let mut p = Mat::zeros(d, m - 1);
    for k in 1..m {
        p.set_column(k - 1, &(&w_hats[k] - &w_hats[k - 1]));
    }
    let v = top_left_singvecs(&p, r)?;
    let q = orthonormal_complement(&v);
    let pooled = Moments::pooled(risk_moments)?;
    let (beta, jitter) = constrained_ls(&pooled, &q)?;
    let mut meta = PredictorMeta { jitter, ..Default::default() };
    meta.set_hyper("r", r as f64);
    meta.set_hyper("gap", v.gap());
    meta.basis = Some(v);
    meta.complement = Some(q);
    meta.anticausal_first = Some(w_hats[0].clone());
    meta.anticausal_all = w_hats.to_vec();
    Ok(LinearPredictor::new("CIP", beta)?.with_meta(meta))
}

/// Finite-sample CIP-mean over `M ≥ 2` labeled sources.
///
/// Each source is split by row index: the first `⌊n/2⌋` rows estimate `ŵ⁽ᵐ⁾`, the rest
/// (including any odd row) enter the pooled risk.
pub fn cip_mean_fit(src_datasets: &[Dataset], r: usize) -> Result<LinearPredictor> {
    if src_datasets.len() < 2 {
        return Err(SsdaError::InvalidArgument("CIP needs at least two sources".into()));
    }
    let d = src_datasets[0].dim();
    let mut w_hats = Vec::with_capacity(src_datasets.len());
    let mut risk = Vec::with_capacity(src_datasets.len());
    let mut sizes = Vec::with_capacity(src_datasets.len());
    for ds in src_datasets {
        if ds.dim() != d {
            return Err(SsdaError::Dimension("CIP sources differ in dimension".into()));
        }
        let (first, second) = ds.split_at(ds.n() / 2)?;
        w_hats.push(anticausal_regress(&first)?);
        risk.push(Moments::from_dataset(&second)?);
        sizes.push(first.n());
    }
    let mut pred = cip_from_parts(&w_hats, &risk, r)?;
    pred.meta.split_sizes = sizes;
    Ok(pred)
}

/// Population CIP-mean: `ŵ⁽ᵐ⁾ = E[XY]/E[Y²]` and exact pooled moments.
pub fn cip_population(env: &EnvironmentSet, r: usize) -> Result<LinearPredictor> {
    let pms: Vec<PopulationMoments> = env.sources().iter().map(population_moments).collect();
    let w_hats: Vec<Vector> = pms.iter().map(|pm| &pm.exy / pm.var_y).collect();
    let risk: Vec<Moments> = pms.iter().map(Moments::from_population).collect();
    cip_from_parts(&w_hats, &risk, r)
}

/// `ν² / (1 + ν² bᵀΣ_ε⁻¹b) · (I − B)ᵀ Σ_ε⁻¹ b`, valid for unconfounded, unshifted domains.
pub fn oracle_closed_form(params: &DomainParams) -> Result<Vector> {
    if params.confounder().is_some() || params.mean_shift().is_some() {
        return Err(SsdaError::Unsupported("closed-form oracle needs an unconfounded, unshifted domain".into()));
    }
    let d = params.dim();
    let nu2 = params.noise_var_y();
    let (sb, _) = spd_solve_vec(params.noise_cov_x(), params.b())?;
    let factor = nu2 / (1.0 + nu2 * params.b().dot(&sb));
    let i_minus_b = Mat::identity(d, d) - params.connectivity();
    Ok(i_minus_b.transpose() * sb * factor)
}

/// `β* = Σ_X⁽⁰⁾⁻¹ E[X⁽⁰⁾Y⁽⁰⁾]`, cross-checked against the closed form where it applies.
pub fn oracle_population(target: &DomainParams) -> Result<LinearPredictor> {
    let pm = population_moments(target);
    let beta = pm.beta_ls()?;
    let mut meta = PredictorMeta::default();
    if target.confounder().is_none() && target.mean_shift().is_none() {
        let cf = oracle_closed_form(target)?;
        let resid = (&beta - &cf).amax();
        if resid > 1e-9 * beta.amax().max(1.0) {
            return Err(SsdaError::Numerical(format!("oracle routes disagree (max difference {resid:.3e})")));
        }
        meta.closed_form_residual = Some(resid);
    }
    Ok(LinearPredictor::new("Oracle", beta)?.with_meta(meta))
}

/// Largest `|β_i|` outside `support` (0-based).
pub fn off_support_max(v: &Vector, support: &[usize]) -> f64 {
    v.iter().enumerate().filter(|(i, _)| !support.contains(i)).fold(0.0_f64, |m, (_, x)| m.max(x.abs()))
}

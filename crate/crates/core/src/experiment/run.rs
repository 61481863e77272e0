//! Monte-Carlo trials: one environment and one set of samples per trial, every requested
//! method fitted on them, excess risks recorded per method.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Result, SsdaError};
use crate::estimators::{cip_mean_fit, dip_cov_fit, ols_fit, ols_pool_fit, oracle_population, LinearPredictor};
use crate::finetune::{lambda_grid, PenaltyNorm};
use crate::masft::{
    build_candidate_suite, empirical_risk, masft_select, pick_by_validation, tune_anchored, CandidateKind,
    CandidateSuite, DomainData, SelectionReport, SsdaData, SuiteConfig,
};
use crate::rng::{derive_seed, Role};
use crate::scm::{
    make_aw_environments, make_ca_environments, make_sc_environments, population_moments, sample_labeled,
    sample_unlabeled, Dataset, DomainParams, EnvironmentSet,
};
use crate::{Mat, Vector};

use super::config::{LambdaGrid, Method, RiskRoute, Scenario, SimConfig};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SSDA_THREADS";

/// `(β − β*)ᵀ Σ_X⁽⁰⁾ (β − β*)` before clamping.
pub fn excess_risk_population_raw(pred: &LinearPredictor, target: &DomainParams) -> Result<f64> {
    let oracle = oracle_population(target)?;
    let pm = population_moments(target);
    if pred.dim() != target.dim() {
        return Err(SsdaError::Dimension("predictor and target differ in dimension".into()));
    }
    let diff = pred.beta() - oracle.beta();
    Ok(diff.dot(&(&pm.sigma_x * &diff)))
}

/// Population excess risk, clamped at 0.
pub fn excess_risk_population(pred: &LinearPredictor, target: &DomainParams) -> Result<f64> {
    Ok(excess_risk_population_raw(pred, target)?.max(0.0))
}

/// Test risk of `pred` minus test risk of `oracle`, before clamping.
pub fn excess_risk_empirical_raw(pred: &LinearPredictor, test: &Dataset, oracle: &LinearPredictor) -> Result<f64> {
    Ok(empirical_risk(pred, test)? - empirical_risk(oracle, test)?)
}

/// Empirical excess risk, clamped at 0.
pub fn excess_risk_empirical(pred: &LinearPredictor, test: &Dataset, oracle: &LinearPredictor) -> Result<f64> {
    Ok(excess_risk_empirical_raw(pred, test, oracle)?.max(0.0))
}

/// One method's outcome in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCell {
    pub method: Method,
    /// Population excess risk, or the empirical one on the empirical route; NaN on failure.
    pub excess_risk: f64,
    /// Only filled on the `both` route.
    pub excess_risk_empirical: Option<f64>,
    /// True for the method family MASFT picked.
    pub selected: bool,
    pub wallclock_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub cells: Vec<MethodCell>,
    pub selection: Option<SelectionReport>,
    /// Magnitudes of the negative raw excess risks that were clamped to 0.
    pub clamps: Vec<f64>,
    pub ols_tar_rank_deficient: bool,
}

impl TrialResult {
    pub fn cell(&self, m: Method) -> Option<&MethodCell> {
        self.cells.iter().find(|c| c.method == m)
    }
}

/// All trials of a run, sorted by trial index.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    /// Resolved config (dimension and source count taken from the environment file
    /// for custom runs).
    pub config: SimConfig,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub mean: f64,
    /// Sample standard deviation; NaN with fewer than two finite values.
    pub std: f64,
    /// Trials with a finite excess risk.
    pub n_trials: usize,
}

impl ResultsTable {
    pub fn values(&self, m: Method) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.cell(m)).map(|c| c.excess_risk).collect()
    }

    /// Mean and sample standard deviation over finite per-trial values.
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.config
            .methods
            .iter()
            .map(|&method| {
                let v: Vec<f64> = self.values(method).into_iter().filter(|x| x.is_finite()).collect();
                let (mean, std) = mean_std(&v);
                SummaryRow { method, mean, std, n_trials: v.len() }
            })
            .collect()
    }

    pub fn mean(&self, m: Method) -> f64 {
        let v: Vec<f64> = self.values(m).into_iter().filter(|x| x.is_finite()).collect();
        mean_std(&v).0
    }

    pub fn clamp_events(&self) -> usize {
        self.trials.iter().map(|t| t.clamps.len()).sum()
    }

    pub fn cell_count(&self) -> usize {
        self.trials.iter().map(|t| t.cells.len()).sum()
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Worker count from `SSDA_THREADS`; `None` leaves the choice to rayon.
pub fn worker_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(SsdaError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        _ => Ok(None),
    }
}

/// Resolves a custom environment and validates the config.
pub fn prepare(cfg: &SimConfig) -> Result<(SimConfig, Option<EnvironmentSet>)> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let env = if cfg.scenario == Scenario::Custom {
        let path = cfg.env_file.clone().expect("validated");
        let text = std::fs::read_to_string(&path).map_err(|e| SsdaError::io(&path, e))?;
        let env = super::envfile::read_env(&text, &path.display().to_string())?;
        cfg.d = env.dim();
        cfg.m_sources = env.num_sources();
        if cfg.r >= cfg.d {
            return Err(SsdaError::Config("r must be < d".into()));
        }
        Some(env)
    } else {
        None
    };
    Ok((cfg, env))
}

/// Runs every trial (in parallel, capped by `SSDA_THREADS`) and returns them in trial order.
pub fn run_simulation(cfg: &SimConfig) -> Result<ResultsTable> {
    let (cfg, env) = prepare(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| SsdaError::Numerical(format!("thread pool: {e}")))?;
    let mut trials: Vec<TrialResult> = pool.install(|| {
        (0..cfg.trials).into_par_iter().map(|t| run_trial(&cfg, env.as_ref(), t)).collect::<Result<Vec<_>>>()
    })?;
    trials.sort_by_key(|t| t.trial);
    Ok(ResultsTable { config: cfg, trials })
}

pub fn trial_environment(cfg: &SimConfig, trial: usize) -> Result<EnvironmentSet> {
    let seed = derive_seed(cfg.base_seed, trial as u64, 0, Role::Environment);
    match cfg.scenario {
        Scenario::Ca => make_ca_environments(cfg.d, cfg.r, cfg.m_sources, seed),
        Scenario::Sc => make_sc_environments(cfg.d, cfg.r, cfg.m_sources, seed),
        Scenario::Aw => make_aw_environments(cfg.d, cfg.r, cfg.m_sources, seed),
        Scenario::Custom => Err(SsdaError::InvalidArgument("custom environments are read, not generated".into())),
    }
}

/// Samples of one trial. Source `m` (1-based) uses domain tag `m`, the target tag 0.
pub fn trial_data(cfg: &SimConfig, env: &EnvironmentSet, trial: usize) -> Result<SsdaData> {
    let seed = |tag: usize, role| derive_seed(cfg.base_seed, trial as u64, tag as u64, role);
    let sources = env
        .sources()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let tag = i + 1;
            Ok(DomainData {
                labeled: sample_labeled(p, cfg.n_src_labeled, seed(tag, Role::Labeled))?.with_tag(tag),
                unlabeled: sample_unlabeled(p, cfg.n_src_unlabeled, seed(tag, Role::Unlabeled))?.with_tag(tag),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let target = env.target();
    Ok(SsdaData {
        sources,
        target_labeled: sample_labeled(target, cfg.n_tar_labeled, seed(0, Role::Labeled))?,
        target_unlabeled: Some(sample_unlabeled(target, cfg.n_tar_unlabeled, seed(0, Role::Unlabeled))?),
        validation: sample_labeled(target, cfg.n_val, seed(0, Role::Validation))?,
    })
}

/// `⌈d · n⁽⁰⁾ / r⌉`.
pub fn more_data_size(cfg: &SimConfig) -> usize {
    (cfg.d * cfg.n_tar_labeled).div_ceil(cfg.r.max(1))
}

struct Scorer<'a> {
    target: &'a DomainParams,
    sigma0: Mat,
    beta_star: Vector,
    empirical: Option<(Dataset, LinearPredictor)>,
    route: RiskRoute,
}

impl Scorer<'_> {
    /// `(primary, empirical-on-both, clamp magnitudes)`.
    fn score(&self, pred: &LinearPredictor) -> Result<(f64, Option<f64>, Vec<f64>)> {
        if pred.dim() != self.target.dim() {
            return Err(SsdaError::Dimension("predictor and target differ in dimension".into()));
        }
        let mut clamps = Vec::new();
        let mut clamp = |raw: f64| {
            if raw < 0.0 {
                clamps.push(-raw);
            }
            raw.max(0.0)
        };
        let pop = || {
            let diff = pred.beta() - &self.beta_star;
            diff.dot(&(&self.sigma0 * &diff))
        };
        let emp = || -> Result<f64> {
            let (test, oracle) = self.empirical.as_ref().expect("test sets sampled");
            excess_risk_empirical_raw(pred, test, oracle)
        };
        Ok(match self.route {
            RiskRoute::Population => (clamp(pop()), None, clamps),
            RiskRoute::Empirical => (clamp(emp()?), None, clamps),
            RiskRoute::Both => {
                let p = clamp(pop());
                let e = clamp(emp()?);
                (p, Some(e), clamps)
            }
        })
    }
}

fn kind_method(kind: CandidateKind) -> Method {
    match kind {
        CandidateKind::FtDip => Method::FtDip,
        CandidateKind::FtOlsSrc => Method::FtOlsL1,
        CandidateKind::FtCip => Method::FtCip,
        CandidateKind::FtCipTar => Method::FtCipTar,
    }
}

fn from_suite(
    suite: &std::result::Result<CandidateSuite, String>,
    kind: CandidateKind,
    val: &Dataset,
) -> Result<LinearPredictor> {
    let suite = suite.as_ref().map_err(|e| SsdaError::Numerical(e.clone()))?;
    let (i, _) = suite
        .best_of_kind(kind, val)
        .ok_or_else(|| SsdaError::InvalidArgument(format!("no {} candidate in the suite", kind_method(kind))))?;
    suite.candidates()[i].fit.clone().map_err(SsdaError::Numerical)
}

/// Runs one trial; a pure function of `(cfg, trial)`.
pub fn run_trial(cfg: &SimConfig, fixed_env: Option<&EnvironmentSet>, trial: usize) -> Result<TrialResult> {
    let generated;
    let env = match fixed_env {
        Some(e) => e,
        None => {
            generated = trial_environment(cfg, trial)?;
            &generated
        }
    };
    let data = trial_data(cfg, env, trial)?;
    let target = env.target();
    let seed = |role| derive_seed(cfg.base_seed, trial as u64, 0, role);

    let empirical = if cfg.risk.needs_test_sets() {
        let oracle_sample = sample_labeled(target, cfg.n_test, seed(Role::Oracle))?;
        let test = sample_labeled(target, cfg.n_test, seed(Role::Test))?;
        Some((test, ols_fit(&oracle_sample)?.renamed("oracle")))
    } else {
        None
    };
    let scorer = Scorer {
        target,
        sigma0: population_moments(target).sigma_x,
        beta_star: oracle_population(target)?.beta().clone(),
        empirical,
        route: cfg.risk,
    };

    let r_dip = cfg.r.min(cfg.d - 1);
    let r_cip = cfg.r.min(env.num_sources().saturating_sub(1));
    let grid = match &cfg.lambda_grid {
        LambdaGrid::Relative { lo, hi, points } => lambda_grid(&data.target_labeled, *lo, *hi, *points)?,
        LambdaGrid::Explicit(v) => v.clone(),
    };
    let tar_u = data.target_unlabeled.as_ref().expect("sampled above");
    let src_labeled: Vec<Dataset> = data.sources.iter().map(|s| s.labeled.clone()).collect();

    let wants_suite = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::FtDip | Method::FtOlsL1 | Method::FtCip | Method::FtCipTar | Method::Masft));
    let suite_cfg = SuiteConfig {
        dip_ranks: vec![r_dip],
        cip_ranks: vec![r_cip],
        lambda_grid: Some(grid.clone()),
        rho: cfg.rho,
        include_cip_tar: cfg.include_cip_tar,
    };
    let suite_start = Instant::now();
    let suite =
        if wants_suite { Some(build_candidate_suite(&data, &suite_cfg).map_err(|e| e.to_string())) } else { None };
    let suite_ms = suite_start.elapsed().as_secs_f64() * 1e3;
    let selection = match &suite {
        Some(Ok(s)) if cfg.methods.contains(&Method::Masft) => Some(masft_select(s, &data.validation)),
        _ => None,
    };
    let selected_method = match (&suite, &selection) {
        (Some(Ok(s)), Some(Ok(sel))) => Some(kind_method(s.candidates()[sel.index].kind)),
        _ => None,
    };

    let mut cells = Vec::with_capacity(cfg.methods.len());
    let mut clamps = Vec::new();
    let mut ols_tar_rank_deficient = false;
    for &method in &cfg.methods {
        let start = Instant::now();
        let fit: Result<LinearPredictor> = match method {
            Method::OlsTar => ols_fit(&data.target_labeled),
            Method::OlsSrc => ols_fit(&data.sources[0].labeled),
            Method::OlsPool => ols_pool_fit(&src_labeled),
            Method::Dip => dip_cov_fit(&data.sources[0].labeled, &data.sources[0].unlabeled, tar_u, r_dip),
            Method::Cip => cip_mean_fit(&src_labeled, r_cip),
            Method::FtDip | Method::FtOlsL1 | Method::FtCip | Method::FtCipTar => {
                let kind = match method {
                    Method::FtDip => CandidateKind::FtDip,
                    Method::FtOlsL1 => CandidateKind::FtOlsSrc,
                    Method::FtCip => CandidateKind::FtCip,
                    _ => CandidateKind::FtCipTar,
                };
                from_suite(suite.as_ref().expect("built when requested"), kind, &data.validation)
            }
            Method::FtOlsL2 => {
                let fits = data
                    .sources
                    .iter()
                    .map(|s| {
                        let ls = ols_fit(&s.labeled)?;
                        tune_anchored(
                            &ls,
                            &data.target_labeled,
                            &data.validation,
                            PenaltyNorm::L2,
                            &grid,
                            f64::INFINITY,
                        )
                    })
                    .collect();
                pick_by_validation(fits, &data.validation)
            }
            Method::Masft => match &selection {
                Some(Ok(sel)) => Ok(sel.predictor.clone()),
                Some(Err(e)) => Err(SsdaError::Numerical(e.to_string())),
                None => Err(SsdaError::Numerical(
                    suite.as_ref().and_then(|s| s.as_ref().err().cloned()).unwrap_or_else(|| "no suite".into()),
                )),
            },
            Method::OlsTarMoreData => {
                sample_labeled(target, more_data_size(cfg), seed(Role::MoreData)).and_then(|d| ols_fit(&d))
            }
        };
        let mut elapsed = start.elapsed().as_secs_f64() * 1e3;
        if matches!(method, Method::FtDip | Method::FtOlsL1 | Method::FtCip | Method::FtCipTar | Method::Masft) {
            elapsed += suite_ms;
        }
        if method == Method::OlsTar {
            ols_tar_rank_deficient = fit.as_ref().is_ok_and(|p| p.meta.rank_deficient);
        }
        let cell = match fit.and_then(|p| scorer.score(&p)) {
            Ok((risk, emp, c)) => {
                clamps.extend(c);
                MethodCell {
                    method,
                    excess_risk: risk,
                    excess_risk_empirical: emp,
                    selected: selected_method == Some(method),
                    wallclock_ms: cfg.timing.then_some(elapsed),
                    error: None,
                }
            }
            Err(e) => MethodCell {
                method,
                excess_risk: f64::NAN,
                excess_risk_empirical: (cfg.risk == RiskRoute::Both).then_some(f64::NAN),
                selected: false,
                wallclock_ms: cfg.timing.then_some(elapsed),
                error: Some(e.to_string()),
            },
        };
        cells.push(cell);
    }
    let selection = selection.and_then(|s| s.ok()).map(|s| s.report);
    Ok(TrialResult { trial, cells, selection, clamps, ols_tar_rank_deficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::DomainParams;

    #[test]
    fn unit_shift_under_stretched_covariance_costs_two() {
        // Σ = I + e₁e₁ᵀ, β = β* + e₁
        let sigma = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let target = DomainParams::new(Mat::zeros(2, 2), Vector::zeros(2), sigma, 1.0).unwrap();
        let star = oracle_population(&target).unwrap();
        let pred = LinearPredictor::new("p", star.beta() + Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((excess_risk_population(&pred, &target).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(excess_risk_population(&star, &target).unwrap(), 0.0);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_std(&[1.0]).1.is_nan());
    }

    #[test]
    fn more_data_size_rounds_up() {
        let mut cfg = SimConfig::defaults(Scenario::Ca);
        cfg.d = 20;
        cfg.n_tar_labeled = 20;
        cfg.r = 3;
        assert_eq!(more_data_size(&cfg), 134);
    }
}

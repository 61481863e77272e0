//! Multi adaptive-start fine-tuning: fit several fine-tuned candidates, keep the one with
//! the lowest validation risk.
//!
//! The same validation set also tunes each candidate's hyperparameters (λ, and the rank
//! when several are offered). Candidates that fail to fit stay in the suite with infinite
//! risk, and ties go to the lowest list index.

use std::io::Write;

use crate::error::{Result, SsdaError};
use crate::estimators::{cip_mean_fit, dip_cov_fit, ols_fit, LinearPredictor};
use crate::finetune::{default_lambda_grid, ft_cip, ft_cip_tar, ft_dip, ft_ols_anchored, AnchoredPenalty, PenaltyNorm};
use crate::io::fmt17;
use crate::scm::Dataset;

/// Labeled and unlabeled samples of one source domain.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
}

/// Everything observed in one SSDA problem.
#[derive(Debug, Clone)]
pub struct SsdaData {
    pub sources: Vec<DomainData>,
    pub target_labeled: Dataset,
    pub target_unlabeled: Option<Dataset>,
    pub validation: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    /// DIP ranks to try; more than one means the rank is tuned on validation.
    pub dip_ranks: Vec<usize>,
    pub cip_ranks: Vec<usize>,
    /// λ values for FT-OLS-Src; `None` uses [`default_lambda_grid`] on the target sample.
    pub lambda_grid: Option<Vec<f64>>,
    pub rho: f64,
    pub include_cip_tar: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { dip_ranks: vec![1], cip_ranks: vec![1], lambda_grid: None, rho: f64::INFINITY, include_cip_tar: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    FtDip,
    FtOlsSrc,
    FtCip,
    FtCipTar,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub name: String,
    pub kind: CandidateKind,
    /// 1-based source index for single-source candidates.
    pub source: Option<usize>,
    pub fit: std::result::Result<LinearPredictor, String>,
}

#[derive(Debug, Clone, Default)]
pub struct CandidateSuite {
    candidates: Vec<Candidate>,
}

impl CandidateSuite {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].iter().any(|p| p.name == c.name) {
                return Err(SsdaError::InvalidArgument(format!("duplicate candidate name '{}'", c.name)));
            }
        }
        Ok(Self { candidates })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Best-by-validation candidate of one kind, as `(index, risk)`.
    pub fn best_of_kind(&self, kind: CandidateKind, val: &Dataset) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.candidates.iter().enumerate().filter(|(_, c)| c.kind == kind) {
            let risk = candidate_risk(c, val);
            if best.is_none_or(|(_, r)| risk < r) {
                best = Some((i, risk));
            }
        }
        best
    }
}

/// `(1/n) Σ (yᵢ − βᵀxᵢ)²`.
pub fn empirical_risk(pred: &LinearPredictor, data: &Dataset) -> Result<f64> {
    let y = data.labels()?;
    if pred.dim() != data.dim() {
        return Err(SsdaError::Dimension(format!("predictor has dimension {}, data has {}", pred.dim(), data.dim())));
    }
    Ok((y - pred.predict(data.x())).norm_squared() / data.n() as f64)
}

/// Validation risk of a candidate; failed or unusable fits score `+∞`.
pub fn candidate_risk(c: &Candidate, val: &Dataset) -> f64 {
    match &c.fit {
        Ok(p) => match empirical_risk(p, val) {
            Ok(r) if r.is_finite() => r,
            _ => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    }
}

/// Keeps the fit with the lowest validation risk; ties go to the earliest.
pub fn pick_by_validation(fits: Vec<Result<LinearPredictor>>, val: &Dataset) -> Result<LinearPredictor> {
    let mut best: Option<(f64, LinearPredictor)> = None;
    let mut last_err = None;
    for fit in fits {
        match fit {
            Ok(p) => {
                let risk = empirical_risk(&p, val)?;
                if best.as_ref().is_none_or(|(r, _)| risk < *r) {
                    best = Some((risk, p));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, p)), _) => Ok(p),
        (None, Some(e)) => Err(e),
        (None, None) => Err(SsdaError::InvalidArgument("nothing to choose from".into())),
    }
}

/// Anchored fine-tuning with λ chosen on `val` from `grid`.
pub fn tune_anchored(
    ls: &LinearPredictor,
    tar_labeled: &Dataset,
    val: &Dataset,
    norm: PenaltyNorm,
    grid: &[f64],
    ball_rho: f64,
) -> Result<LinearPredictor> {
    let fits = grid
        .iter()
        .map(|&lambda| ft_ols_anchored(ls, tar_labeled, &AnchoredPenalty::with_ball(lambda, norm, ball_rho)?))
        .collect();
    pick_by_validation(fits, val)
}

fn resolve_grid(cfg: &SuiteConfig, data: &SsdaData) -> Result<Vec<f64>> {
    match &cfg.lambda_grid {
        Some(g) if !g.is_empty() => Ok(g.clone()),
        _ => default_lambda_grid(&data.target_labeled),
    }
}

fn fit_ft_dip(data: &SsdaData, src: &DomainData, cfg: &SuiteConfig) -> Result<LinearPredictor> {
    let tar_u = data
        .target_unlabeled
        .as_ref()
        .ok_or_else(|| SsdaError::InvalidArgument("FT-DIP needs unlabeled target data".into()))?;
    let fits = cfg
        .dip_ranks
        .iter()
        .map(|&r| {
            let dip = dip_cov_fit(&src.labeled, &src.unlabeled, tar_u, r)?;
            ft_dip(&dip, &data.target_labeled, tar_u, cfg.rho)
        })
        .collect();
    pick_by_validation(fits, &data.validation)
}

/// `FT-DIP⁽¹..ᴹ⁾`, `FT-OLS-Src⁽¹..ᴹ⁾`, then `FT-CIP` (M ≥ 2) and `FT-CIP-Tar` (M ≥ 2,
/// unlabeled target present, enabled in `cfg`).
pub fn build_candidate_suite(data: &SsdaData, cfg: &SuiteConfig) -> Result<CandidateSuite> {
    if data.sources.is_empty() {
        return Err(SsdaError::InvalidArgument("the suite needs at least one source".into()));
    }
    let grid = resolve_grid(cfg, data)?;
    let m = data.sources.len();
    let mut candidates = Vec::with_capacity(2 * m + 2);
    let as_cell = |r: Result<LinearPredictor>| r.map_err(|e| e.to_string());

    for (i, src) in data.sources.iter().enumerate() {
        let fit = fit_ft_dip(data, src, cfg).map(|p| tag_source(p, i + 1));
        candidates.push(Candidate {
            name: format!("FT-DIP^({})", i + 1),
            kind: CandidateKind::FtDip,
            source: Some(i + 1),
            fit: as_cell(fit),
        });
    }
    for (i, src) in data.sources.iter().enumerate() {
        let fit = ols_fit(&src.labeled)
            .and_then(|ls| {
                tune_anchored(&ls, &data.target_labeled, &data.validation, PenaltyNorm::L1, &grid, f64::INFINITY)
            })
            .map(|p| tag_source(p, i + 1));
        candidates.push(Candidate {
            name: format!("FT-OLS-Src^({})", i + 1),
            kind: CandidateKind::FtOlsSrc,
            source: Some(i + 1),
            fit: as_cell(fit),
        });
    }
    if m >= 2 {
        let labeled: Vec<Dataset> = data.sources.iter().map(|s| s.labeled.clone()).collect();
        let cips: Vec<Result<LinearPredictor>> = cfg.cip_ranks.iter().map(|&r| cip_mean_fit(&labeled, r)).collect();
        let ft: Vec<Result<LinearPredictor>> = cips
            .iter()
            .map(|cip| match cip {
                Ok(c) => ft_cip(c, &data.sources[0].unlabeled, &data.target_labeled, cfg.rho),
                Err(e) => Err(SsdaError::InvalidArgument(format!("CIP failed: {e}"))),
            })
            .collect();
        candidates.push(Candidate {
            name: "FT-CIP".into(),
            kind: CandidateKind::FtCip,
            source: None,
            fit: as_cell(pick_by_validation(ft, &data.validation)),
        });
        if cfg.include_cip_tar {
            if let Some(tar_u) = &data.target_unlabeled {
                let ft: Vec<Result<LinearPredictor>> = cips
                    .iter()
                    .map(|cip| match cip {
                        Ok(c) => ft_cip_tar(c, tar_u, &data.target_labeled, cfg.rho),
                        Err(e) => Err(SsdaError::InvalidArgument(format!("CIP failed: {e}"))),
                    })
                    .collect();
                candidates.push(Candidate {
                    name: "FT-CIP-Tar".into(),
                    kind: CandidateKind::FtCipTar,
                    source: None,
                    fit: as_cell(pick_by_validation(ft, &data.validation)),
                });
            }
        }
    }
    CandidateSuite::new(candidates)
}

fn tag_source(mut p: LinearPredictor, source: usize) -> LinearPredictor {
    p.meta.source_index = Some(source);
    p
}

/// Per-candidate validation risks and the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub rows: Vec<(String, f64, bool)>,
}

impl SelectionReport {
    /// `candidate,validation_risk,selected`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "candidate,validation_risk,selected")?;
        for (name, risk, selected) in &self.rows {
            writeln!(w, "{name},{},{selected}", fmt17(*risk))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// 0-based position in the suite.
    pub index: usize,
    pub predictor: LinearPredictor,
    pub report: SelectionReport,
}

/// Argmin of validation risk over the suite.
pub fn masft_select(suite: &CandidateSuite, val: &Dataset) -> Result<Selection> {
    if suite.is_empty() {
        return Err(SsdaError::InvalidArgument("cannot select from an empty suite".into()));
    }
    let risks: Vec<f64> = suite.candidates.iter().map(|c| candidate_risk(c, val)).collect();
    let mut index = 0;
    for (i, &r) in risks.iter().enumerate() {
        if r < risks[index] {
            index = i;
        }
    }
    let predictor = match &suite.candidates[index].fit {
        Ok(p) => p.clone(),
        Err(e) => return Err(SsdaError::Numerical(format!("every candidate failed; first error: {e}"))),
    };
    let rows =
        suite.candidates.iter().zip(&risks).enumerate().map(|(i, (c, &r))| (c.name.clone(), r, i == index)).collect();
    Ok(Selection { index, predictor, report: SelectionReport { rows } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Mat, Vector};

    fn val() -> Dataset {
        Dataset::labeled(Mat::identity(2, 2), Vector::from_vec(vec![1.0, 2.0]), 0, 0).unwrap()
    }

    fn cand(name: &str, beta: [f64; 2]) -> Candidate {
        Candidate {
            name: name.into(),
            kind: CandidateKind::FtDip,
            source: None,
            fit: Ok(LinearPredictor::new(name, Vector::from_vec(beta.to_vec())).unwrap()),
        }
    }

    #[test]
    fn zero_predictor_risk_is_mean_square() {
        let p = LinearPredictor::new("z", Vector::zeros(2)).unwrap();
        assert_eq!(empirical_risk(&p, &val()).unwrap(), 2.5);
    }

    #[test]
    fn picks_lower_risk_and_breaks_ties_by_index() {
        let suite = CandidateSuite::new(vec![cand("a", [0.0, 0.0]), cand("b", [1.0, 2.0])]).unwrap();
        assert_eq!(masft_select(&suite, &val()).unwrap().index, 1);
        let tied = CandidateSuite::new(vec![cand("a", [1.0, 1.0]), cand("b", [1.0, 1.0])]).unwrap();
        assert_eq!(masft_select(&tied, &val()).unwrap().index, 0);
    }

    #[test]
    fn failed_candidates_score_infinity() {
        let mut bad = cand("bad", [0.0, 0.0]);
        bad.fit = Err("boom".into());
        let suite = CandidateSuite::new(vec![bad, cand("ok", [0.0, 0.0])]).unwrap();
        let sel = masft_select(&suite, &val()).unwrap();
        assert_eq!(sel.index, 1);
        assert!(sel.report.rows[0].1.is_infinite());
    }

    #[test]
    fn empty_suite_and_duplicate_names_are_errors() {
        assert!(masft_select(&CandidateSuite::default(), &val()).is_err());
        assert!(CandidateSuite::new(vec![cand("a", [0.0, 0.0]), cand("a", [1.0, 0.0])]).is_err());
    }

    #[test]
    fn report_csv_header() {
        let suite = CandidateSuite::new(vec![cand("a", [0.0, 0.0])]).unwrap();
        let mut buf = Vec::new();
        masft_select(&suite, &val()).unwrap().report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("candidate,validation_risk,selected\na,"));
    }
}

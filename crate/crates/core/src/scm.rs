//! Anticausal linear SCMs: `Y = ε_Y`, `X = B X + b Y + ε_X`, so `X = H(bY + ε_X)` with
//! `H = (I − B)⁻¹`.
//!
//! A confounded domain draws a hidden `Z ~ N(0, I_r)` and uses `ε_X = W Z + ξ_X`,
//! `ε_Y = w_Yᵀ Z + ξ_Y`. A mean-shifted domain adds a deterministic vector to `X`.
//! Second moments are uncentered throughout: `Σ_X = E[X Xᵀ]`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SsdaError};
use crate::io::{fmt17, parse_f64};
use crate::linalg::{self, lstsq_min_norm};
use crate::{Mat, Vector};

const LABELED_STREAM: u64 = 0;
const UNLABELED_STREAM: u64 = 1;

/// Hidden confounder loadings of a CA-shifted domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Confounder {
    w: Mat,
    w_y: Vector,
}

impl Confounder {
    /// `W` is `d × r` and must have full column rank; `w_Y` has length `r`.
    pub fn new(w: Mat, w_y: Vector) -> Result<Self> {
        if w.ncols() != w_y.len() {
            return Err(SsdaError::Dimension(format!("W has {} columns but w_Y has length {}", w.ncols(), w_y.len())));
        }
        if w.ncols() > 0 {
            let sv = w.singular_values();
            let max = sv.max();
            let min = sv.min();
            if w.ncols() > w.nrows() || !(min > 1e-10 * max) {
                return Err(SsdaError::Construction("W must have full column rank".into()));
            }
        }
        Ok(Self { w, w_y })
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    pub fn w_y(&self) -> &Vector {
        &self.w_y
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }
}

/// One domain's structural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams {
    connectivity: Mat,
    b: Vector,
    noise_cov_x: Mat,
    noise_var_y: f64,
    confounder: Option<Confounder>,
    mean_shift: Option<Vector>,
    h: Mat,
    noise_chol: Mat,
}

impl DomainParams {
    pub fn new(connectivity: Mat, b: Vector, noise_cov_x: Mat, noise_var_y: f64) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(SsdaError::Dimension("dimension must be at least 1".into()));
        }
        if connectivity.shape() != (d, d) || noise_cov_x.shape() != (d, d) {
            return Err(SsdaError::Dimension(format!(
                "B is {:?} and Σ_εX is {:?}, expected ({d}, {d})",
                connectivity.shape(),
                noise_cov_x.shape()
            )));
        }
        if !connectivity.iter().chain(b.iter()).chain(noise_cov_x.iter()).all(|v| v.is_finite()) {
            return Err(SsdaError::Construction("parameters must be finite".into()));
        }
        if !(noise_var_y > 0.0 && noise_var_y.is_finite()) {
            return Err(SsdaError::Construction("noise_var_y must be positive".into()));
        }
        let asym = (&noise_cov_x - noise_cov_x.transpose()).amax();
        if asym > 1e-12 * noise_cov_x.amax().max(1.0) {
            return Err(SsdaError::Construction("noise_cov_x must be symmetric".into()));
        }
        let noise_chol = nalgebra::linalg::Cholesky::new(linalg::symmetrize(&noise_cov_x))
            .ok_or_else(|| SsdaError::Construction("noise_cov_x must be positive definite".into()))?
            .l();

        let i_minus_b = Mat::identity(d, d) - &connectivity;
        let h = i_minus_b
            .clone()
            .lu()
            .solve(&Mat::identity(d, d))
            .filter(|h| h.iter().all(|v| v.is_finite()))
            .ok_or_else(|| SsdaError::Construction("I − B is singular".into()))?;
        let resid = (&i_minus_b * &h - Mat::identity(d, d)).amax();
        if resid > 1e-8 {
            return Err(SsdaError::Construction(format!(
                "I − B is numerically singular (inverse residual {resid:.3e})"
            )));
        }
        Ok(Self { connectivity, b, noise_cov_x, noise_var_y, confounder: None, mean_shift: None, h, noise_chol })
    }

    /// Unit noise: `Σ_εX = I`, `ν_Y² = 1`.
    pub fn standard(connectivity: Mat, b: Vector) -> Result<Self> {
        let d = b.len();
        Self::new(connectivity, b, Mat::identity(d, d), 1.0)
    }

    pub fn with_confounder(mut self, confounder: Confounder) -> Result<Self> {
        if confounder.w.nrows() != self.dim() {
            return Err(SsdaError::Dimension(format!(
                "W has {} rows, domain dimension is {}",
                confounder.w.nrows(),
                self.dim()
            )));
        }
        self.confounder = Some(confounder);
        Ok(self)
    }

    pub fn with_mean_shift(mut self, mean: Vector) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(SsdaError::Dimension("mean shift length differs from dimension".into()));
        }
        self.mean_shift = Some(mean);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn connectivity(&self) -> &Mat {
        &self.connectivity
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn noise_cov_x(&self) -> &Mat {
        &self.noise_cov_x
    }

    pub fn noise_var_y(&self) -> f64 {
        self.noise_var_y
    }

    pub fn confounder(&self) -> Option<&Confounder> {
        self.confounder.as_ref()
    }

    pub fn mean_shift(&self) -> Option<&Vector> {
        self.mean_shift.as_ref()
    }

    /// `H = (I − B)⁻¹`.
    pub fn h(&self) -> &Mat {
        &self.h
    }

    /// `H b`, the regression of `X` on `Y` in an unconfounded domain.
    pub fn hb(&self) -> Vector {
        &self.h * &self.b
    }
}

/// Exact moments of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    pub sigma_x: Mat,
    pub exy: Vector,
    pub var_y: f64,
    pub mean_x: Vector,
}

impl PopulationMoments {
    /// Population least-squares coefficient `Σ_X⁻¹ E[XY]`.
    pub fn beta_ls(&self) -> Result<Vector> {
        Ok(linalg::spd_solve_vec(&self.sigma_x, &self.exy)?.0)
    }

    /// Expected squared loss `E[(Y − βᵀX)²]`.
    pub fn risk(&self, beta: &Vector) -> f64 {
        self.var_y - 2.0 * beta.dot(&self.exy) + beta.dot(&(&self.sigma_x * beta))
    }
}

pub fn population_moments(params: &DomainParams) -> PopulationMoments {
    let d = params.dim();
    let nu2 = params.noise_var_y;
    let b = &params.b;
    let mut inner = &params.noise_cov_x + b * b.transpose() * nu2;
    let mut y_load = b * nu2;
    let mut var_y = nu2;
    if let Some(c) = &params.confounder {
        let a = b * c.w_y.transpose() + &c.w;
        inner += &a * a.transpose();
        y_load = b * (nu2 + c.w_y.norm_squared()) + &c.w * &c.w_y;
        var_y += c.w_y.norm_squared();
    }
    let mut sigma_x = linalg::symmetrize(&(&params.h * inner * params.h.transpose()));
    let mean_x = match &params.mean_shift {
        Some(mu) => {
            sigma_x += mu * mu.transpose();
            mu.clone()
        }
        None => Vector::zeros(d),
    };
    PopulationMoments { sigma_x, exy: &params.h * y_load, var_y, mean_x }
}

/// Intervention family relating the target to the first source.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    /// Confounded additive shift of the given rank.
    Ca {
        rank: usize,
    },
    /// Sparse connectivity shift on the listed (0-based) columns of `B`.
    Sc {
        support: Vec<usize>,
    },
    /// Anticausal weight shift with a rank-`rank` span of source differences.
    Aw {
        rank: usize,
    },
    None,
    MeanShift,
}

impl Intervention {
    pub fn name(&self) -> &'static str {
        match self {
            Intervention::Ca { .. } => "ca",
            Intervention::Sc { .. } => "sc",
            Intervention::Aw { .. } => "aw",
            Intervention::None => "none",
            Intervention::MeanShift => "mean_shift",
        }
    }

    /// Rank of the shift (`|S|` for SC, 0 when not applicable).
    pub fn rank(&self) -> usize {
        match self {
            Intervention::Ca { rank } | Intervention::Aw { rank } => *rank,
            Intervention::Sc { support } => support.len(),
            Intervention::None | Intervention::MeanShift => 0,
        }
    }
}

/// `M` source domains plus one target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSet {
    sources: Vec<DomainParams>,
    target: DomainParams,
    intervention: Intervention,
    dim: usize,
}

impl EnvironmentSet {
    pub fn new(sources: Vec<DomainParams>, target: DomainParams, intervention: Intervention) -> Result<Self> {
        let dim = target.dim();
        if sources.is_empty() {
            return Err(SsdaError::Construction("at least one source domain is required".into()));
        }
        if sources.iter().any(|s| s.dim() != dim) {
            return Err(SsdaError::Dimension("all domains must share the dimension".into()));
        }
        let first = &sources[0];
        match &intervention {
            Intervention::Ca { rank } => {
                if first.connectivity != target.connectivity || first.b != target.b {
                    return Err(SsdaError::Construction("CA: target must share B and b with source 1".into()));
                }
                if sources.iter().any(|s| s.confounder.is_some()) {
                    return Err(SsdaError::Construction("CA: only the target carries a confounder".into()));
                }
                let target_rank = target.confounder.as_ref().map_or(0, Confounder::rank);
                if target_rank != *rank {
                    return Err(SsdaError::Construction(format!(
                        "CA: declared rank {rank}, confounder rank {target_rank}"
                    )));
                }
            }
            Intervention::Sc { support } => {
                if first.b != target.b {
                    return Err(SsdaError::Construction("SC: target must share b with source 1".into()));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) || support.iter().any(|&j| j >= dim) {
                    return Err(SsdaError::Construction("SC: support must be sorted, unique and < d".into()));
                }
                for j in 0..dim {
                    let same = first.connectivity.column(j) == target.connectivity.column(j);
                    let in_support = support.binary_search(&j).is_ok();
                    if same == in_support {
                        return Err(SsdaError::Construction(format!(
                            "SC: column {j} {} but is {}in the support",
                            if same { "is unchanged" } else { "changed" },
                            if in_support { "" } else { "not " }
                        )));
                    }
                }
            }
            Intervention::Aw { .. } => {
                if sources.iter().any(|s| s.connectivity != target.connectivity) {
                    return Err(SsdaError::Construction("AW: all domains must share B".into()));
                }
                let resid = aw_span_residual(&sources, &target)?;
                let scale = (target.b() - first.b()).norm().max(1.0);
                if resid > 1e-8 * scale {
                    return Err(SsdaError::Construction(format!(
                        "AW: b⁽⁰⁾ − b⁽¹⁾ is not in the span of source differences (residual {resid:.3e})"
                    )));
                }
            }
            Intervention::None | Intervention::MeanShift => {}
        }
        Ok(Self { sources, target, intervention, dim })
    }

    pub fn sources(&self) -> &[DomainParams] {
        &self.sources
    }

    pub fn target(&self) -> &DomainParams {
        &self.target
    }

    pub fn intervention(&self) -> &Intervention {
        &self.intervention
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }
}

/// Least-squares residual of `b⁽⁰⁾ − b⁽¹⁾` on `{b⁽ᵐ⁾ − b⁽¹⁾ : m ≥ 2}`.
fn aw_span_residual(sources: &[DomainParams], target: &DomainParams) -> Result<f64> {
    let d = target.dim();
    let b1 = sources[0].b();
    let goal = target.b() - b1;
    if sources.len() < 2 {
        return Ok(goal.norm());
    }
    let mut diffs = Mat::zeros(d, sources.len() - 1);
    for (k, s) in sources[1..].iter().enumerate() {
        diffs.set_column(k, &(s.b() - b1));
    }
    let coef = lstsq_min_norm(&diffs, &goal)?.beta;
    Ok((&diffs * coef - goal).norm())
}

fn draw(rng: &mut ChaCha8Rng, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    var.sqrt() * z
}

fn strictly_lower(rng: &mut ChaCha8Rng, d: usize, var: f64) -> Mat {
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        for j in 0..i {
            m[(i, j)] = draw(rng, var);
        }
    }
    m
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, var: f64) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| draw(rng, var)))
}

fn check_rank(d: usize, r: usize, what: &str) -> Result<()> {
    if d < 2 || r < 1 || r >= d {
        return Err(SsdaError::Construction(format!("{what}: need 1 ≤ r < d, got r = {r}, d = {d}")));
    }
    Ok(())
}

/// Confounded additive shift: target shares `B⁽¹⁾, b⁽¹⁾` and adds a rank-`r_ca` confounder.
pub fn make_ca_environments(d: usize, r_ca: usize, m_sources: usize, rng_seed: u64) -> Result<EnvironmentSet> {
    check_rank(d, r_ca, "CA")?;
    if m_sources < 1 {
        return Err(SsdaError::Construction("CA: at least one source".into()));
    }
    let df = d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sources = Vec::with_capacity(m_sources);
    for _ in 0..m_sources {
        let bm = strictly_lower(&mut rng, d, 9.0 / df);
        let b = gaussian_vec(&mut rng, d, 0.25 / df);
        sources.push(DomainParams::standard(bm, b)?);
    }
    let var = 25.0 / r_ca as f64;
    let mut w = Mat::zeros(d, r_ca);
    for i in 0..d {
        for j in 0..r_ca {
            w[(i, j)] = draw(&mut rng, var);
        }
    }
    let w_y = gaussian_vec(&mut rng, r_ca, var);
    let target = DomainParams::standard(sources[0].connectivity.clone(), sources[0].b.clone())?
        .with_confounder(Confounder::new(w, w_y)?)?;
    EnvironmentSet::new(sources, target, Intervention::Ca { rank: r_ca })
}

/// Sparse connectivity shift: the first `r_sc` columns of the target's `B` are perturbed.
pub fn make_sc_environments(d: usize, r_sc: usize, m_sources: usize, rng_seed: u64) -> Result<EnvironmentSet> {
    check_rank(d, r_sc, "SC")?;
    if m_sources < 1 {
        return Err(SsdaError::Construction("SC: at least one source".into()));
    }
    let df = d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sources = Vec::with_capacity(m_sources);
    for _ in 0..m_sources {
        let bm = strictly_lower(&mut rng, d, 0.25 / df);
        let b = gaussian_vec(&mut rng, d, 4.0 / df);
        sources.push(DomainParams::standard(bm, b)?);
    }
    let b0 = sources[0].b.clone();
    let mut b_tar = sources[0].connectivity.clone();
    for j in 0..r_sc {
        for i in (j + 1)..d {
            b_tar[(i, j)] += b0[i] + draw(&mut rng, 1.0 / df);
        }
    }
    let target = DomainParams::standard(b_tar, b0)?;
    EnvironmentSet::new(sources, target, Intervention::Sc { support: (0..r_sc).collect() })
}

/// Number of non-invariant coordinates used by the AW generator.
pub fn aw_noninvariant_dim(d: usize) -> usize {
    (7 * d).div_ceil(10)
}

/// Anticausal weight shift: `b⁽ᵐ⁾ = [U ζ⁽ᵐ⁾; b_inv]` with a shared `B`.
pub fn make_aw_environments(d: usize, r_aw: usize, m_sources: usize, rng_seed: u64) -> Result<EnvironmentSet> {
    if r_aw < 1 {
        return Err(SsdaError::Construction("AW: r must be at least 1".into()));
    }
    if m_sources < r_aw + 1 || m_sources > d {
        return Err(SsdaError::Construction(format!(
            "AW: need r + 1 ≤ M ≤ d, got r = {r_aw}, M = {m_sources}, d = {d}"
        )));
    }
    let k = aw_noninvariant_dim(d);
    if r_aw > k {
        return Err(SsdaError::Construction(format!("AW: r = {r_aw} exceeds the {k} non-invariant coordinates")));
    }
    let df = d as f64;
    let rf = r_aw as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let shared_b = strictly_lower(&mut rng, d, 9.0 / df);
    let mut u = Mat::zeros(k, r_aw);
    for i in 0..k {
        for j in 0..r_aw {
            u[(i, j)] = draw(&mut rng, 1.0 / df);
        }
    }
    let b_inv = gaussian_vec(&mut rng, d - k, 1.0 / df);
    let assemble = |zeta: &Vector| -> Vector {
        let top = &u * zeta;
        Vector::from_iterator(d, top.iter().chain(b_inv.iter()).cloned())
    };
    let mut sources = Vec::with_capacity(m_sources);
    for _ in 0..m_sources {
        let zeta = gaussian_vec(&mut rng, r_aw, 16.0 / rf).abs();
        sources.push(DomainParams::standard(shared_b.clone(), assemble(&zeta))?);
    }
    let zeta0 = gaussian_vec(&mut rng, r_aw, 0.25 / rf).abs();
    let target = DomainParams::standard(shared_b, assemble(&zeta0))?;
    EnvironmentSet::new(sources, target, Intervention::Aw { rank: r_aw })
}

/// A block of samples from one domain. `y` is absent for unlabeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Mat,
    y: Option<Vector>,
    domain_tag: usize,
    seed: u64,
}

impl Dataset {
    pub fn labeled(x: Mat, y: Vector, domain_tag: usize, seed: u64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SsdaError::Dimension(format!("X has {} rows, y has {}", x.nrows(), y.len())));
        }
        Self::check_rows(&x)?;
        Ok(Self { x, y: Some(y), domain_tag, seed })
    }

    pub fn unlabeled(x: Mat, domain_tag: usize, seed: u64) -> Result<Self> {
        Self::check_rows(&x)?;
        Ok(Self { x, y: None, domain_tag, seed })
    }

    fn check_rows(x: &Mat) -> Result<()> {
        if x.nrows() == 0 {
            return Err(SsdaError::InvalidArgument("a dataset needs at least one row".into()));
        }
        Ok(())
    }

    pub fn with_tag(mut self, domain_tag: usize) -> Self {
        self.domain_tag = domain_tag;
        self
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn y(&self) -> Option<&Vector> {
        self.y.as_ref()
    }

    pub fn is_labeled(&self) -> bool {
        self.y.is_some()
    }

    /// The labels, or an error for unlabeled data.
    pub fn labels(&self) -> Result<&Vector> {
        self.y
            .as_ref()
            .ok_or_else(|| SsdaError::InvalidArgument(format!("dataset of domain {} is unlabeled", self.domain_tag)))
    }

    pub fn domain_tag(&self) -> usize {
        self.domain_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `XᵀX / n`.
    pub fn second_moment(&self) -> Mat {
        linalg::second_moment(&self.x)
    }

    /// `XᵀY / n`.
    pub fn cross_moment(&self) -> Result<Vector> {
        Ok(linalg::cross_moment(&self.x, self.labels()?))
    }

    /// Drops the labels.
    pub fn without_labels(&self) -> Dataset {
        Dataset { x: self.x.clone(), y: None, domain_tag: self.domain_tag, seed: self.seed }
    }

    /// Rows `[0, k)` and `[k, n)`. Both parts must be nonempty.
    pub fn split_at(&self, k: usize) -> Result<(Dataset, Dataset)> {
        let n = self.n();
        if k == 0 || k >= n {
            return Err(SsdaError::InvalidArgument(format!("cannot split {n} rows at {k}")));
        }
        let head = self.x.rows(0, k).into_owned();
        let tail = self.x.rows(k, n - k).into_owned();
        let (yh, yt) = match &self.y {
            Some(y) => (Some(y.rows(0, k).into_owned()), Some(y.rows(k, n - k).into_owned())),
            None => (None, None),
        };
        Ok((
            Dataset { x: head, y: yh, domain_tag: self.domain_tag, seed: self.seed },
            Dataset { x: tail, y: yt, domain_tag: self.domain_tag, seed: self.seed },
        ))
    }

    /// Writes `x_1,...,x_d[,y]` followed by one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        if self.y.is_some() {
            header.push("y".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut row: Vec<String> = (0..d).map(|j| fmt17(self.x[(i, j)])).collect();
            if let Some(y) = &self.y {
                row.push(fmt17(y[i]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Dataset::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R, domain_tag: usize) -> Result<Dataset> {
        let ctx = "dataset csv";
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| SsdaError::Parse { context: ctx.into(), message: "empty file".into() })?
            .map_err(|e| SsdaError::Parse { context: ctx.into(), message: e.to_string() })?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let labeled = cols.last() == Some(&"y");
        let d = cols.len() - usize::from(labeled);
        for (j, c) in cols.iter().take(d).enumerate() {
            if *c != format!("x_{}", j + 1) {
                return Err(SsdaError::Parse { context: ctx.into(), message: format!("unexpected column '{c}'") });
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| SsdaError::Parse { context: ctx.into(), message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(SsdaError::Parse {
                    context: format!("{ctx}:{}", lineno + 2),
                    message: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            for f in &fields[..d] {
                xs.push(parse_f64(f, ctx)?);
            }
            if labeled {
                ys.push(parse_f64(fields[d], ctx)?);
            }
        }
        let n = xs.len() / d.max(1);
        let x = Mat::from_row_slice(n, d, &xs);
        if labeled {
            Dataset::labeled(x, Vector::from_vec(ys), domain_tag, 0)
        } else {
            Dataset::unlabeled(x, domain_tag, 0)
        }
    }
}

fn sample_rows(params: &DomainParams, n: usize, seed: u64, stream: u64) -> Result<(Mat, Vector)> {
    if n == 0 {
        return Err(SsdaError::InvalidArgument("sample size must be at least 1".into()));
    }
    let d = params.dim();
    let r = params.confounder.as_ref().map_or(0, Confounder::rank);
    let nu = params.noise_var_y.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut y = Vector::zeros(n);
    let mut z = Mat::zeros(n, r);
    let mut xi = Mat::zeros(n, d);
    for i in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        y[i] = nu * g;
        for k in 0..r {
            z[(i, k)] = rng.sample(StandardNormal);
        }
        for j in 0..d {
            xi[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // ε_X rows: ξ Lᵀ with L the Cholesky factor of Σ_εX
    let mut eps = xi * params.noise_chol.transpose();
    if let Some(c) = &params.confounder {
        y += &z * &c.w_y;
        eps += &z * c.w.transpose();
    }
    eps += &y * params.b.transpose();
    let mut x = eps * params.h.transpose();
    if let Some(mu) = &params.mean_shift {
        for mut row in x.row_iter_mut() {
            row += mu.transpose();
        }
    }
    Ok((x, y))
}

/// Draws `n` labeled rows. Identical `(params, n, seed)` gives bit-identical data.
pub fn sample_labeled(params: &DomainParams, n: usize, seed: u64) -> Result<Dataset> {
    let (x, y) = sample_rows(params, n, seed, LABELED_STREAM)?;
    Dataset::labeled(x, y, 0, seed)
}

/// Draws `n` unlabeled rows from a ChaCha stream separate from [`sample_labeled`]'s.
pub fn sample_unlabeled(params: &DomainParams, n: usize, seed: u64) -> Result<Dataset> {
    let (x, _) = sample_rows(params, n, seed, UNLABELED_STREAM)?;
    Dataset::unlabeled(x, 0, seed)
}

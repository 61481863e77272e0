//! Simulation configuration and its flat `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Result, SsdaError};
use crate::io::{fmt17, parse_f64, parse_f64_list, parse_key_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Ca,
    Sc,
    Aw,
    /// Environment read from an `env_file`.
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Ca => "ca",
            Scenario::Sc => "sc",
            Scenario::Aw => "aw",
            Scenario::Custom => "custom",
        }
    }
}

impl FromStr for Scenario {
    type Err = SsdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ca" => Ok(Scenario::Ca),
            "sc" => Ok(Scenario::Sc),
            "aw" => Ok(Scenario::Aw),
            "custom" => Ok(Scenario::Custom),
            other => Err(SsdaError::Config(format!("unknown scenario '{other}' (expected ca, sc, aw or custom)"))),
        }
    }
}

/// Methods the harness can run, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    OlsTar,
    OlsSrc,
    OlsPool,
    Dip,
    Cip,
    FtDip,
    FtOlsL1,
    FtOlsL2,
    FtCip,
    FtCipTar,
    Masft,
    OlsTarMoreData,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::OlsTar,
        Method::OlsSrc,
        Method::OlsPool,
        Method::Dip,
        Method::Cip,
        Method::FtDip,
        Method::FtOlsL1,
        Method::FtOlsL2,
        Method::FtCip,
        Method::FtCipTar,
        Method::Masft,
        Method::OlsTarMoreData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::OlsTar => "OLS-Tar",
            Method::OlsSrc => "OLS-Src",
            Method::OlsPool => "OLS-Pool",
            Method::Dip => "DIP",
            Method::Cip => "CIP",
            Method::FtDip => "FT-DIP",
            Method::FtOlsL1 => "FT-OLS-L1",
            Method::FtOlsL2 => "FT-OLS-L2",
            Method::FtCip => "FT-CIP",
            Method::FtCipTar => "FT-CIP-Tar",
            Method::Masft => "MASFT",
            Method::OlsTarMoreData => "OLS-Tar-MoreData",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SsdaError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| SsdaError::Config(format!("unknown method '{t}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskRoute {
    Population,
    Empirical,
    Both,
}

impl RiskRoute {
    pub fn name(self) -> &'static str {
        match self {
            RiskRoute::Population => "population",
            RiskRoute::Empirical => "empirical",
            RiskRoute::Both => "both",
        }
    }

    pub fn needs_test_sets(self) -> bool {
        !matches!(self, RiskRoute::Population)
    }
}

impl FromStr for RiskRoute {
    type Err = SsdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "population" => Ok(RiskRoute::Population),
            "empirical" => Ok(RiskRoute::Empirical),
            "both" => Ok(RiskRoute::Both),
            other => Err(SsdaError::Config(format!("unknown risk route '{other}'"))),
        }
    }
}

/// λ values for the anchored fine-tuning methods.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `points` geometric values over `[lo, hi] · ‖XᵀY‖∞/n` of the target sample.
    Relative {
        lo: f64,
        hi: f64,
        points: usize,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub d: usize,
    pub r: usize,
    pub m_sources: usize,
    pub n_src_labeled: usize,
    pub n_src_unlabeled: usize,
    pub n_tar_labeled: usize,
    pub n_tar_unlabeled: usize,
    pub n_val: usize,
    /// Size of each of the oracle and test samples on the empirical risk route.
    pub n_test: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub lambda_grid: LambdaGrid,
    pub rho: f64,
    pub risk: RiskRoute,
    pub include_cip_tar: bool,
    /// Record per-method wall-clock times (makes `trials.csv` run-dependent).
    pub timing: bool,
    pub env_file: Option<PathBuf>,
    pub out_path: PathBuf,
}

impl SimConfig {
    /// Paper-scale defaults for a scenario (`d = 100`).
    pub fn defaults(scenario: Scenario) -> Self {
        let (r, m, n_src, n_tar_u) = match scenario {
            Scenario::Ca | Scenario::Custom => (5, 4, 6000, 10000),
            Scenario::Sc => (10, 4, 10000, 10000),
            Scenario::Aw => (4, 11, 6000, 10000),
        };
        Self {
            scenario,
            d: 100,
            r,
            m_sources: m,
            n_src_labeled: n_src,
            n_src_unlabeled: n_src,
            n_tar_labeled: 100,
            n_tar_unlabeled: n_tar_u,
            n_val: 100,
            n_test: 50000,
            trials: 20,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            lambda_grid: LambdaGrid::Relative { lo: 1e-4, hi: 1e2, points: 20 },
            rho: f64::INFINITY,
            risk: RiskRoute::Population,
            include_cip_tar: true,
            timing: false,
            env_file: None,
            out_path: PathBuf::from("results"),
        }
    }

    /// Divides every sample size by `divisor` (rounding, at least 1).
    pub fn scale_sizes(&mut self, divisor: usize) {
        let f = |n: usize| ((n as f64 / divisor as f64).round() as usize).max(1);
        self.n_src_labeled = f(self.n_src_labeled);
        self.n_src_unlabeled = f(self.n_src_unlabeled);
        self.n_tar_labeled = f(self.n_tar_labeled);
        self.n_tar_unlabeled = f(self.n_tar_unlabeled);
        self.n_val = f(self.n_val);
        self.n_test = f(self.n_test);
    }

    /// Builds a config from key/value pairs: `scenario` picks the defaults, the
    /// remaining keys override them in order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let scenario = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "scenario" || k == "sim")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Scenario::Ca);
        let mut cfg = Self::defaults(scenario);
        for (k, v) in pairs {
            if k != "scenario" && k != "sim" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str, context: &str) -> Result<Self> {
        Self::from_pairs(&parse_key_values(text, context)?)
    }

    /// Sets one key. Unknown keys are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| SsdaError::Config(format!("{key}: '{v}' is not a nonnegative integer")))
        };
        let boolean = |v: &str| -> Result<bool> {
            match v.trim() {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                other => Err(SsdaError::Config(format!("{key}: '{other}' is not a boolean"))),
            }
        };
        let real = |v: &str| parse_f64(v, key).map_err(|e| SsdaError::Config(e.to_string()));
        match key {
            "scenario" | "sim" => self.scenario = value.parse()?,
            "d" => self.d = int(value)?,
            "r" => self.r = int(value)?,
            "sources" | "m_sources" => self.m_sources = int(value)?,
            "n_src" => self.n_src_labeled = int(value)?,
            "n_src_u" => self.n_src_unlabeled = int(value)?,
            "n_tar" => self.n_tar_labeled = int(value)?,
            "n_tar_u" => self.n_tar_unlabeled = int(value)?,
            "n_val" => self.n_val = int(value)?,
            "n_test" => self.n_test = int(value)?,
            "trials" => self.trials = int(value)?,
            "seed" => {
                self.base_seed = value
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| SsdaError::Config(format!("seed: '{value}' is not a 64-bit unsigned integer")))?
            }
            "methods" => {
                let v = value.trim();
                self.methods = if v.eq_ignore_ascii_case("all") {
                    Method::ALL.to_vec()
                } else {
                    let mut ms: Vec<Method> = v.split(',').map(str::parse).collect::<Result<_>>()?;
                    ms.sort();
                    ms.dedup();
                    ms
                };
            }
            "lambda_grid" => {
                let v = value.trim();
                self.lambda_grid = if v.eq_ignore_ascii_case("auto") {
                    LambdaGrid::Relative { lo: 1e-4, hi: 1e2, points: 20 }
                } else {
                    LambdaGrid::Explicit(parse_f64_list(v, key).map_err(|e| SsdaError::Config(e.to_string()))?)
                };
            }
            "lambda_lo" | "lambda_hi" | "lambda_points" => {
                let (mut lo, mut hi, mut points) = match self.lambda_grid {
                    LambdaGrid::Relative { lo, hi, points } => (lo, hi, points),
                    LambdaGrid::Explicit(_) => (1e-4, 1e2, 20),
                };
                match key {
                    "lambda_lo" => lo = real(value)?,
                    "lambda_hi" => hi = real(value)?,
                    _ => points = int(value)?,
                }
                self.lambda_grid = LambdaGrid::Relative { lo, hi, points };
            }
            "rho" => self.rho = real(value)?,
            "risk" => self.risk = value.parse()?,
            "include_cip_tar" => self.include_cip_tar = boolean(value)?,
            "timing" => self.timing = boolean(value)?,
            "env_file" => self.env_file = Some(PathBuf::from(value.trim())),
            "out" | "out_path" => self.out_path = PathBuf::from(value.trim()),
            other => return Err(SsdaError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_src", self.n_src_labeled),
            ("n_src_u", self.n_src_unlabeled),
            ("n_tar", self.n_tar_labeled),
            ("n_tar_u", self.n_tar_unlabeled),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
            ("trials", self.trials),
        ];
        for (name, v) in sizes {
            if v < 1 {
                return Err(SsdaError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.scenario == Scenario::Custom {
            if self.env_file.is_none() {
                return Err(SsdaError::Config("scenario custom needs env_file".into()));
            }
        } else {
            if self.d < 2 {
                return Err(SsdaError::Config("d must be at least 2".into()));
            }
            if self.r >= self.d {
                return Err(SsdaError::Config("r must be < d".into()));
            }
            if self.m_sources < 1 {
                return Err(SsdaError::Config("sources must be at least 1".into()));
            }
        }
        if self.r < 1 {
            return Err(SsdaError::Config("r must be at least 1".into()));
        }
        if self.scenario == Scenario::Aw && (self.m_sources < self.r + 1 || self.m_sources > self.d) {
            return Err(SsdaError::Config("aw needs r + 1 ≤ sources ≤ d".into()));
        }
        if self.methods.is_empty() {
            return Err(SsdaError::Config("no methods selected".into()));
        }
        match &self.lambda_grid {
            LambdaGrid::Relative { lo, hi, points } => {
                if !(*lo > 0.0 && hi >= lo && *points >= 1) {
                    return Err(SsdaError::Config("lambda grid needs 0 < lo ≤ hi and points ≥ 1".into()));
                }
            }
            LambdaGrid::Explicit(v) => {
                if v.is_empty() || v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(SsdaError::Config("lambda_grid values must be finite and ≥ 0".into()));
                }
            }
        }
        if !(self.rho > 0.0) {
            return Err(SsdaError::Config("rho must be positive".into()));
        }
        Ok(())
    }

    /// Every setting as `key = value` lines, readable back by [`SimConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("scenario = {}", self.scenario.name()),
            format!("d = {}", self.d),
            format!("r = {}", self.r),
            format!("sources = {}", self.m_sources),
            format!("n_src = {}", self.n_src_labeled),
            format!("n_src_u = {}", self.n_src_unlabeled),
            format!("n_tar = {}", self.n_tar_labeled),
            format!("n_tar_u = {}", self.n_tar_unlabeled),
            format!("n_val = {}", self.n_val),
            format!("n_test = {}", self.n_test),
            format!("trials = {}", self.trials),
            format!("seed = {}", self.base_seed),
            format!("methods = {}", self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")),
        ];
        match &self.lambda_grid {
            LambdaGrid::Relative { lo, hi, points } => {
                lines.push(format!("lambda_lo = {}", fmt17(*lo)));
                lines.push(format!("lambda_hi = {}", fmt17(*hi)));
                lines.push(format!("lambda_points = {points}"));
            }
            LambdaGrid::Explicit(v) => {
                lines.push(format!("lambda_grid = {}", v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(",")));
            }
        }
        lines.push(format!("rho = {}", fmt17(self.rho)));
        lines.push(format!("risk = {}", self.risk.name()));
        lines.push(format!("include_cip_tar = {}", self.include_cip_tar));
        lines.push(format!("timing = {}", self.timing));
        if let Some(p) = &self.env_file {
            lines.push(format!("env_file = {}", p.display()));
        }
        lines.push(format!("out = {}", self.out_path.display()));
        lines.join("\n") + "\n"
    }
}

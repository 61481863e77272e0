//! Flat `key = value` form of an [`EnvironmentSet`].
//!
//! ```text
//! dim = 3
//! sources = 2
//! intervention = sc          # ca | sc | aw | none | mean_shift
//! support = 1,3              # sc only, 1-based columns
//! rank = 2                   # ca and aw only
//! source.1.B = ...           # d·d values, row-major
//! source.1.b = ...
//! source.1.noise_cov_x = ... # optional, defaults to the identity
//! source.1.noise_var_y = 1   # optional, defaults to 1
//! source.1.mean_shift = ...  # optional
//! target.B = ...
//! target.W = ...             # optional d·k confounder loadings, row-major
//! target.w_y = ...           # required with W
//! ```
//!
//! Every domain section (`source.m.*`, `target.*`) takes the same keys.

use std::collections::BTreeMap;

use crate::error::{Result, SsdaError};
use crate::io::{join_f64, parse_f64, parse_f64_list, parse_key_values};
use crate::scm::{Confounder, DomainParams, EnvironmentSet, Intervention};
use crate::{Mat, Vector};

fn row_major(m: &Mat) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

fn write_domain(lines: &mut Vec<String>, prefix: &str, p: &DomainParams) {
    lines.push(format!("{prefix}.B = {}", join_f64(row_major(p.connectivity()))));
    lines.push(format!("{prefix}.b = {}", join_f64(p.b().iter().copied())));
    lines.push(format!("{prefix}.noise_cov_x = {}", join_f64(row_major(p.noise_cov_x()))));
    lines.push(format!("{prefix}.noise_var_y = {}", join_f64([p.noise_var_y()])));
    if let Some(c) = p.confounder() {
        lines.push(format!("{prefix}.W = {}", join_f64(row_major(c.w()))));
        lines.push(format!("{prefix}.w_y = {}", join_f64(c.w_y().iter().copied())));
    }
    if let Some(mu) = p.mean_shift() {
        lines.push(format!("{prefix}.mean_shift = {}", join_f64(mu.iter().copied())));
    }
}

/// Serialises `env` with 17 significant digits, so [`read_env`] restores it exactly.
pub fn write_env(env: &EnvironmentSet) -> String {
    let mut lines = vec![
        format!("dim = {}", env.dim()),
        format!("sources = {}", env.num_sources()),
        format!("intervention = {}", env.intervention().name()),
    ];
    match env.intervention() {
        Intervention::Ca { rank } | Intervention::Aw { rank } => lines.push(format!("rank = {rank}")),
        Intervention::Sc { support } => lines
            .push(format!("support = {}", support.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(","))),
        Intervention::None | Intervention::MeanShift => {}
    }
    for (m, s) in env.sources().iter().enumerate() {
        write_domain(&mut lines, &format!("source.{}", m + 1), s);
    }
    write_domain(&mut lines, "target", env.target());
    lines.join("\n") + "\n"
}

struct Fields<'a> {
    map: BTreeMap<&'a str, &'a str>,
    context: &'a str,
}

impl<'a> Fields<'a> {
    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<&'a str> {
        self.take(key)
            .ok_or_else(|| SsdaError::Parse { context: self.context.into(), message: format!("missing key '{key}'") })
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.trim().parse().map_err(|_| SsdaError::Parse {
            context: self.context.into(),
            message: format!("{key}: '{v}' is not a nonnegative integer"),
        })
    }

    fn list(&mut self, key: &str, len: usize) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.take(key) else { return Ok(None) };
        let values = parse_f64_list(v, key)?;
        if values.len() != len {
            return Err(SsdaError::Parse {
                context: self.context.into(),
                message: format!("{key}: expected {len} values, got {}", values.len()),
            });
        }
        Ok(Some(values))
    }
}

fn read_domain(f: &mut Fields<'_>, prefix: &str, d: usize) -> Result<DomainParams> {
    let missing = |key: &str| SsdaError::Parse { context: f.context.into(), message: format!("missing key '{key}'") };
    let b_key = format!("{prefix}.B");
    let conn = f.list(&b_key, d * d)?.ok_or_else(|| missing(&b_key))?;
    let v_key = format!("{prefix}.b");
    let b = f.list(&v_key, d)?.ok_or_else(|| missing(&v_key))?;
    let noise = f.list(&format!("{prefix}.noise_cov_x"), d * d)?;
    let var_y = match f.take(&format!("{prefix}.noise_var_y")) {
        Some(v) => parse_f64(v, "noise_var_y")?,
        None => 1.0,
    };
    let noise = noise.map_or_else(|| Mat::identity(d, d), |v| Mat::from_row_slice(d, d, &v));
    let mut params = DomainParams::new(Mat::from_row_slice(d, d, &conn), Vector::from_vec(b), noise, var_y)?;

    let w = f.take(&format!("{prefix}.W"));
    let w_y = f.take(&format!("{prefix}.w_y"));
    match (w, w_y) {
        (Some(w), Some(w_y)) => {
            let w = parse_f64_list(w, "W")?;
            let w_y = parse_f64_list(w_y, "w_y")?;
            let k = w_y.len();
            if k == 0 || w.len() != d * k {
                return Err(SsdaError::Parse {
                    context: f.context.into(),
                    message: format!("{prefix}.W must hold d·k = {} values for k = {k}", d * k),
                });
            }
            params = params.with_confounder(Confounder::new(Mat::from_row_slice(d, k, &w), Vector::from_vec(w_y))?)?;
        }
        (None, None) => {}
        _ => {
            return Err(SsdaError::Parse {
                context: f.context.into(),
                message: format!("{prefix}.W and {prefix}.w_y go together"),
            })
        }
    }
    if let Some(mu) = f.list(&format!("{prefix}.mean_shift"), d)? {
        params = params.with_mean_shift(Vector::from_vec(mu))?;
    }
    Ok(params)
}

/// Parses the text produced by [`write_env`] (or written by hand). Unknown keys are errors.
pub fn read_env(text: &str, context: &str) -> Result<EnvironmentSet> {
    let pairs = parse_key_values(text, context)?;
    let mut f = Fields { map: pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(), context };
    let d = f.usize("dim")?;
    let m = f.usize("sources")?;
    if d == 0 || m == 0 {
        return Err(SsdaError::Parse { context: context.into(), message: "dim and sources must be positive".into() });
    }
    let kind = f.require("intervention")?.trim().to_ascii_lowercase();
    let intervention = match kind.as_str() {
        "ca" => Intervention::Ca { rank: f.usize("rank")? },
        "aw" => Intervention::Aw { rank: f.usize("rank")? },
        "sc" => {
            let raw = f.require("support")?;
            let mut support = Vec::new();
            for tok in raw.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let j: usize = tok.parse().map_err(|_| SsdaError::Parse {
                    context: context.into(),
                    message: format!("support: '{tok}' is not a column number"),
                })?;
                if j == 0 || j > d {
                    return Err(SsdaError::Parse {
                        context: context.into(),
                        message: format!("support: column {j} is outside 1..{d}"),
                    });
                }
                support.push(j - 1);
            }
            Intervention::Sc { support }
        }
        "none" => Intervention::None,
        "mean_shift" => Intervention::MeanShift,
        other => {
            return Err(SsdaError::Parse {
                context: context.into(),
                message: format!("unknown intervention '{other}'"),
            })
        }
    };
    let sources = (1..=m).map(|i| read_domain(&mut f, &format!("source.{i}"), d)).collect::<Result<Vec<_>>>()?;
    let target = read_domain(&mut f, "target", d)?;
    if let Some(key) = f.map.keys().next() {
        return Err(SsdaError::Parse { context: context.into(), message: format!("unknown key '{key}'") });
    }
    EnvironmentSet::new(sources, target, intervention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{make_aw_environments, make_ca_environments, make_sc_environments};

    #[test]
    fn generated_environments_round_trip_exactly() {
        for env in [
            make_ca_environments(5, 2, 3, 1).unwrap(),
            make_sc_environments(5, 2, 2, 2).unwrap(),
            make_aw_environments(5, 2, 3, 3).unwrap(),
        ] {
            let back = read_env(&write_env(&env), "env").unwrap();
            assert_eq!(back, env);
        }
    }

    #[test]
    fn defaults_and_errors() {
        let text =
            "dim = 1\nsources = 1\nintervention = none\nsource.1.B = 0\nsource.1.b = 1\ntarget.B = 0\ntarget.b = 2\n";
        let env = read_env(text, "t").unwrap();
        assert_eq!(env.target().noise_var_y(), 1.0);
        assert!(read_env(&format!("{text}extra = 1\n"), "t").is_err());
        assert!(read_env(&text.replace("target.b = 2", "target.b = 2,3"), "t").is_err());
    }
}

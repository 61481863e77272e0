//! CSV tables and the run metadata file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SsdaError};
use crate::io::fmt17;

use super::config::{RiskRoute, Scenario};
use super::run::ResultsTable;

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SELECTION_FILE: &str = "masft_selection.csv";
pub const META_FILE: &str = "run.meta";

/// First line of every CSV: the noise settings and route behind the numbers.
pub fn provenance_line(table: &ResultsTable) -> String {
    let cfg = &table.config;
    let noise = if cfg.scenario == Scenario::Custom {
        "noise=env_file".to_string()
    } else {
        "noise_cov_x=identity noise_var_y=1".to_string()
    };
    format!(
        "# scenario={} d={} r={} sources={} seed={} {noise} risk={}",
        cfg.scenario.name(),
        cfg.d,
        cfg.r,
        cfg.m_sources,
        cfg.base_seed,
        cfg.risk.name()
    )
}

/// `trial,method,excess_risk,selected,wallclock_ms`, plus `excess_risk_empirical` on the
/// `both` route. `wallclock_ms` is empty unless timing is on.
pub fn write_trials_csv<W: Write>(table: &ResultsTable, mut w: W) -> std::io::Result<()> {
    let both = table.config.risk == RiskRoute::Both;
    writeln!(w, "{}", provenance_line(table))?;
    write!(w, "trial,method,excess_risk,selected,wallclock_ms")?;
    if both {
        write!(w, ",excess_risk_empirical")?;
    }
    writeln!(w)?;
    for t in &table.trials {
        for c in &t.cells {
            let ms = c.wallclock_ms.map(fmt17).unwrap_or_default();
            write!(w, "{},{},{},{},{ms}", t.trial, c.method, fmt17(c.excess_risk), c.selected)?;
            if both {
                write!(w, ",{}", fmt17(c.excess_risk_empirical.unwrap_or(f64::NAN)))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// `method,mean,std,n_trials`.
pub fn write_summary_csv<W: Write>(table: &ResultsTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", provenance_line(table))?;
    writeln!(w, "method,mean,std,n_trials")?;
    for row in table.summary() {
        writeln!(w, "{},{},{},{}", row.method, fmt17(row.mean), fmt17(row.std), row.n_trials)?;
    }
    Ok(())
}

/// `trial,candidate,validation_risk,selected` for every trial that ran MASFT.
pub fn write_selection_csv<W: Write>(table: &ResultsTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", provenance_line(table))?;
    writeln!(w, "trial,candidate,validation_risk,selected")?;
    for t in &table.trials {
        if let Some(report) = &t.selection {
            for (name, risk, selected) in &report.rows {
                writeln!(w, "{},{name},{},{selected}", t.trial, fmt17(*risk))?;
            }
        }
    }
    Ok(())
}

/// Resolved config followed by run diagnostics, all as `key = value`.
pub fn meta_text(table: &ResultsTable) -> String {
    let mut s = table.config.to_text();
    let clamps: Vec<f64> = table.trials.iter().flat_map(|t| t.clamps.iter().copied()).collect();
    let max_clamp = clamps.iter().copied().fold(0.0, f64::max);
    let deficient = table.trials.iter().filter(|t| t.ols_tar_rank_deficient).count();
    let failures: Vec<String> = table
        .trials
        .iter()
        .flat_map(|t| t.cells.iter().filter(|c| c.error.is_some()).map(move |c| format!("{}:{}", t.trial, c.method)))
        .collect();
    s.push_str("# diagnostics\n");
    s.push_str("noise_cov_x_default = identity\nnoise_var_y_default = 1\n");
    s.push_str(&format!("cells = {}\n", table.cell_count()));
    s.push_str(&format!("clamp_events = {}\n", clamps.len()));
    s.push_str(&format!("clamp_max = {}\n", fmt17(max_clamp)));
    s.push_str(&format!("ols_tar_rank_deficient_trials = {deficient}\n"));
    s.push_str(&format!("failed_cells = {}\n", failures.len()));
    if !failures.is_empty() {
        s.push_str(&format!("failed = {}\n", failures.join(",")));
    }
    s
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| SsdaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| SsdaError::io(path, e))
}

/// Writes `trials.csv`, `summary.csv`, `run.meta` and, when MASFT ran,
/// `masft_selection.csv` into `dir` (created if missing).
pub fn write_outputs(table: &ResultsTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SsdaError::io(dir, e))?;
    write_file(&dir.join(TRIALS_FILE), |w| write_trials_csv(table, w))?;
    write_file(&dir.join(SUMMARY_FILE), |w| write_summary_csv(table, w))?;
    if table.trials.iter().any(|t| t.selection.is_some()) {
        write_file(&dir.join(SELECTION_FILE), |w| write_selection_csv(table, w))?;
    }
    let meta = dir.join(META_FILE);
    fs::write(&meta, meta_text(table)).map_err(|e| SsdaError::io(&meta, e))
}

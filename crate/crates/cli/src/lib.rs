//! Argument handling for the `ssda` binary.
//!
//! Settings come from an optional `--config` file of `key = value` lines, then from
//! flags, which override the file. Exit codes: 0 on success, 1 for usage or config
//! errors, 2 when the run itself fails.

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use ssda_core::experiment::{run_simulation, write_outputs, ResultsTable, SimConfig};
use ssda_core::io::parse_key_values;
use ssda_core::SsdaError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ssda", about = "Run semi-supervised domain adaptation simulations", version)]
struct Args {
    /// Scenario: ca, sc, aw, or custom (with --env-file).
    #[arg(long)]
    sim: Option<String>,
    #[arg(long)]
    d: Option<String>,
    /// Shift rank (r_ca, |S| or r_aw).
    #[arg(long)]
    r: Option<String>,
    /// Number of source domains.
    #[arg(long)]
    sources: Option<String>,
    #[arg(long = "n-src")]
    n_src: Option<String>,
    #[arg(long = "n-src-u")]
    n_src_u: Option<String>,
    #[arg(long = "n-tar")]
    n_tar: Option<String>,
    #[arg(long = "n-tar-u")]
    n_tar_u: Option<String>,
    #[arg(long = "n-val")]
    n_val: Option<String>,
    /// Size of the oracle and test samples on the empirical risk route.
    #[arg(long = "n-test")]
    n_test: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated method names, or `all`.
    #[arg(long)]
    methods: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// population, empirical or both.
    #[arg(long)]
    risk: Option<String>,
    /// Cap on the subspace fine-tuning radius.
    #[arg(long)]
    rho: Option<String>,
    /// Environment file for --sim custom.
    #[arg(long = "env-file")]
    env_file: Option<String>,
    /// Record per-method wall-clock times in trials.csv.
    #[arg(long)]
    timing: bool,
    /// Suppress the summary table on stdout.
    #[arg(long)]
    quiet: bool,
}

impl Args {
    fn pairs(&self) -> Vec<(String, String)> {
        let flags = [
            ("scenario", &self.sim),
            ("d", &self.d),
            ("r", &self.r),
            ("sources", &self.sources),
            ("n_src", &self.n_src),
            ("n_src_u", &self.n_src_u),
            ("n_tar", &self.n_tar),
            ("n_tar_u", &self.n_tar_u),
            ("n_val", &self.n_val),
            ("n_test", &self.n_test),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("methods", &self.methods),
            ("out", &self.out),
            ("risk", &self.risk),
            ("rho", &self.rho),
            ("env_file", &self.env_file),
        ];
        let mut pairs: Vec<(String, String)> =
            flags.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect();
        if self.timing {
            pairs.push(("timing".into(), "true".into()));
        }
        pairs
    }
}

/// Resolves the config from `argv` (program name first) without running anything.
pub fn resolve_config(argv: &[String]) -> Result<SimConfig, CliError> {
    let args = Args::try_parse_from(argv).map_err(CliError::Usage)?;
    resolve(&args)
}

fn resolve(args: &Args) -> Result<SimConfig, CliError> {
    let mut pairs = Vec::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(SsdaError::Config(format!("cannot read {}: {e}", path.display()))))?;
        pairs = parse_key_values(&text, &path.display().to_string()).map_err(CliError::Config)?;
    }
    pairs.extend(args.pairs());
    let cfg = SimConfig::from_pairs(&pairs).map_err(CliError::Config)?;
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Config(SsdaError),
    Runtime(SsdaError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) if !e.use_stderr() => EXIT_OK,
            CliError::Usage(_) | CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Human-readable summary: one line per method with mean ± std over trials.
pub fn format_summary(table: &ResultsTable) -> String {
    let mut s = format!(
        "scenario {}  d={}  r={}  sources={}  trials={}\n",
        table.config.scenario.name(),
        table.config.d,
        table.config.r,
        table.config.m_sources,
        table.config.trials
    );
    s.push_str(&format!("{:<18} {:>12} {:>12} {:>6}\n", "method", "mean", "std", "n"));
    for row in table.summary() {
        s.push_str(&format!("{:<18} {:>12.5e} {:>12.5e} {:>6}\n", row.method.name(), row.mean, row.std, row.n_trials));
    }
    s
}

/// Entry point of the binary; returns the process exit code.
pub fn cli_main(argv: &[String]) -> i32 {
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = CliError::Usage(e);
            if let CliError::Usage(e) = &code {
                let _ = e.print();
            }
            return code.exit_code();
        }
    };
    let outcome = resolve(&args).and_then(|cfg| {
        let table =
            run_simulation(&cfg).map_err(|e| if e.is_config() { CliError::Config(e) } else { CliError::Runtime(e) })?;
        write_outputs(&table, &table.config.out_path).map_err(CliError::Runtime)?;
        Ok(table)
    });
    match outcome {
        Ok(table) => {
            if !args.quiet {
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(format_summary(&table).as_bytes());
                let _ = writeln!(out, "wrote {}", table.config.out_path.display());
            }
            EXIT_OK
        }
        Err(e) => {
            match &e {
                CliError::Usage(u) => {
                    let _ = u.print();
                }
                CliError::Config(c) | CliError::Runtime(c) => eprintln!("error: {}", bare_message(c)),
            }
            e.exit_code()
        }
    }
}

/// The message without the "config error:" style prefix.
fn bare_message(e: &SsdaError) -> String {
    match e {
        SsdaError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

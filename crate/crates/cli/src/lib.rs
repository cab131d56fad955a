//! Batch front-end: ingest → estimate → mfpca → export, plus simulate,
//! validate and oracle-check.
//!
//! Exit codes: 0 success, 1 I/O or usage failure, 2 invalid input,
//! 3 numerical failure. Errors are printed on stderr as one JSON object per line.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use catmfpca::{Error, GridPolicy, Mode, SchemeTag, Solver};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::*;
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "catmfpca", version, about = "Functional PCA of categorical trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an event CSV and its sidecar into a panel file.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        /// Panel JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Ingestion report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Keep raw time scales; skip protocol normalization.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Check the structural invariants of a panel file.
    Validate {
        #[arg(long)]
        panel: PathBuf,
    },
    /// Estimate, decompose and export.
    Mfpca {
        #[arg(long)]
        panel: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Draw a synthetic panel and write it as an event CSV plus sidecar.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Compare the optimized estimators with brute-force oracles.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        panels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Flags mirroring [`RunConfig`]; each one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with a RunConfig.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expected protocol: TDS or TCATA.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// equal | trace_normalizing | inverse_mean_probability
    #[arg(long)]
    pub weights: Option<SchemeTag>,
    /// Explicit comma-separated weights, one per state.
    #[arg(long, value_delimiter = ',')]
    pub weight_values: Option<Vec<f64>>,
    /// exact | capped:M | uniform:M
    #[arg(long)]
    pub grid: Option<GridPolicy>,
    #[arg(long, conflicts_with = "variance_fraction")]
    pub components: Option<usize>,
    #[arg(long)]
    pub variance_fraction: Option<f64>,
    /// dense | gram
    #[arg(long)]
    pub solver: Option<Solver>,
    #[arg(long)]
    pub tick: Option<f64>,
    /// Multiple of √λ in the variation bands.
    #[arg(long)]
    pub band_scale: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> catmfpca::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if self.mode.is_some() {
            c.mode = self.mode;
        }
        if let Some(w) = self.weights {
            c.weights = w;
            if w != SchemeTag::Custom {
                c.weight_values = None;
            }
        }
        if let Some(v) = &self.weight_values {
            c.weight_values = Some(v.clone());
            c.weights = SchemeTag::Custom;
        }
        if let Some(g) = self.grid {
            c.grid = g;
        }
        if let Some(k) = self.components {
            c.components = Some(k);
            c.variance_fraction = None;
        }
        if let Some(f) = self.variance_fraction {
            c.variance_fraction = Some(f);
            c.components = None;
        }
        if let Some(s) = self.solver {
            c.solver = s;
        }
        if let Some(t) = self.tick {
            c.tick = t;
        }
        if let Some(b) = self.band_scale {
            c.band_scale = b;
        }
        if self.out_dir.is_some() {
            c.out_dir = self.out_dir.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::Internal(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    code: i32,
    message: String,
}

/// One JSON line describing `err`.
pub fn error_line(err: &Error) -> String {
    serde_json::to_string(&ErrorLine {
        error: err.kind(),
        code: exit_code(err),
        message: err.to_string(),
    })
    .expect("plain struct serializes")
}

fn print_json<T: Serialize>(out: &mut impl Write, value: &T) -> catmfpca::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Runs a parsed command, writing normal output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut impl Write) -> catmfpca::Result<i32> {
    match cli.command {
        Command::Ingest {
            events,
            sidecar,
            out: panel_out,
            report,
            raw,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let (panel, rep) = cmd_ingest(&events, &sidecar, &cfg, raw, &panel_out, report.as_deref())?;
            writeln!(
                out,
                "{} trajectories ({}), {} warnings, {} rejected",
                panel.len(),
                panel.mode(),
                rep.warnings,
                rep.rejected.len()
            )?;
            Ok(0)
        }
        Command::Validate { panel } => {
            let rep = cmd_validate(&panel)?;
            print_json(out, &rep)?;
            Ok(if rep.violations.is_empty() { 0 } else { 2 })
        }
        Command::Mfpca { panel, opts } => {
            let cfg = opts.resolve()?;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("mfpca_out"));
            let outcome = cmd_mfpca(&panel, &cfg, &dir)?;
            write!(out, "{}", outcome.text)?;
            Ok(0)
        }
        Command::Simulate {
            spec,
            n,
            seed,
            out: events,
            sidecar,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let panel = cmd_simulate(&spec, n, seed.unwrap_or(cfg.seed), &events, &sidecar)?;
            writeln!(out, "{} trajectories written to {}", panel.len(), events.display())?;
            Ok(0)
        }
        Command::OracleCheck { panels, seed } => {
            let rep = cmd_oracle_check(panels, seed)?;
            print_json(out, &rep)?;
            Ok(if rep.passed { 0 } else { 3 })
        }
    }
}

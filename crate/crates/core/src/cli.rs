//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, Command, RunConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::experiments::{run_solve, run_sweep, run_validate};
use crate::output::{csv_string, manifest_path, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "mec-uplink",
    version,
    about = "Reliability-aware compression and outage design for an edge uplink"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Minimize the latency quantile subject to an outage threshold.
    SolveP1(CommonArgs),
    /// Minimize outage subject to a latency-quantile budget.
    SolveP2(CommonArgs),
    /// Minimize outage subject to a mean-latency budget.
    SolveBaseline(CommonArgs),
    /// Solve along an axis for every clock and reliability level.
    Sweep(CommonArgs),
    /// Monte Carlo check of a design point against the analytic model.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Key-value config file; the bundled reference config when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output path; a `.manifest.json` is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed for simulation; overrides the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated reliability levels.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Comma-separated processor clocks in GHz.
    #[arg(long = "fr-ghz", value_delimiter = ',')]
    pub fr_ghz: Option<Vec<f64>>,
    /// name:min:max:points:lin|log, e.g. eps_th:1e-5:0.5:40:log
    #[arg(long)]
    pub axis: Option<String>,
}

impl CliCommand {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::SolveP1(a) => (Command::SolveP1, a),
            CliCommand::SolveP2(a) => (Command::SolveP2, a),
            CliCommand::SolveBaseline(a) => (Command::SolveBaseline, a),
            CliCommand::Sweep(a) => (Command::Sweep, a),
            CliCommand::Validate(a) => (Command::Validate, a),
        }
    }
}

fn arg_error(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        line: 0,
        key: key.into(),
        msg: msg.into(),
    }
}

/// Load the config and apply command-line overrides.
pub fn build_config(command: Command, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| arg_error("--config", format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::reference(),
    };
    cfg.command = Some(command);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rho) = &args.rho {
        cfg.rho_th = rho.clone();
    }
    if let Some(fr) = &args.fr_ghz {
        cfg.clocks_hz = fr.iter().map(|f| f * 1e9).collect();
        if let Some(&first) = cfg.clocks_hz.first() {
            cfg.params.clock_hz = first;
        }
    }
    if let Some(axis) = &args.axis {
        cfg.axis = Some(
            axis.parse::<SweepAxis>()
                .map_err(|m| arg_error("--axis", m))?,
        );
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// What a run produced.
#[derive(Debug)]
pub struct Outcome {
    pub csv: String,
    pub manifest: Manifest,
    pub any_infeasible: bool,
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    let (csv, gamma0, rows, any_infeasible) = match command {
        Command::Sweep => {
            let r = run_sweep(cfg)?;
            (csv_string(&r.rows)?, r.gamma0, r.rows.len(), false)
        }
        Command::Validate => {
            let r = run_validate(cfg)?;
            (csv_string(&r.rows)?, r.gamma0, r.rows.len(), false)
        }
        single => {
            let r = run_solve(cfg, single)?;
            let infeasible = r.rows.iter().any(|row| !row.feasible);
            (csv_string(&r.rows)?, r.gamma0, r.rows.len(), infeasible)
        }
    };
    let manifest = Manifest::new(cfg, command, gamma0, &csv, rows);
    Ok(Outcome {
        csv,
        manifest,
        any_infeasible,
    })
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Argument(_) => EXIT_CONFIG,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_NUMERIC,
    }
}

/// Parse, run, write outputs; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (command, args) = cli.command.split();
    let cfg = match build_config(command, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let outcome = match execute(command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let written = match &cfg.output {
        Some(path) => std::fs::write(path, &outcome.csv)
            .and_then(|_| {
                let json = outcome.manifest.to_json().map_err(std::io::Error::other)?;
                std::fs::write(manifest_path(path), json)
            })
            .map_err(Error::from),
        None => {
            print!("{}", outcome.csv);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }
    if outcome.any_infeasible {
        eprintln!("error: at least one single solve is infeasible");
        return EXIT_INFEASIBLE;
    }
    EXIT_OK
}

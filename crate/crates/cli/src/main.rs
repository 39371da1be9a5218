use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harvest_core::entanglement::{assemble_pt, peres_test};
use harvest_core::experiments::{ablation_study, fit_sweep, optimize_grid, sweep_negativity, ExperimentError};
use harvest_core::kernels::{amplitudes, KernelError};
use serde::Serialize;
use thiserror::Error;

mod config;
mod oracle;
mod output;

use config::RunConfig;
use output::{num, opt_num, write_csv, write_json};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("quadrature did not converge: {0}")]
    NotConverged(String),
    #[error("{0} oracle check(s) failed")]
    Oracle(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::NotConverged(_) => 2,
            CliError::Config(_) => 3,
            CliError::Oracle(_) => 4,
            CliError::Kernel(KernelError::Detector(_) | KernelError::Geometry(_) | KernelError::Window(_)) => 3,
            CliError::Experiment(ExperimentError::Spec(_)) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "harvest", version, about = "Vacuum entanglement between two localized detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the optimizer seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Emission, exchange and cross-emission amplitudes (JSON).
    Amplitudes,
    /// The entanglement condition margin (JSON).
    Condition,
    /// Partially transposed state and negativity (JSON).
    Negativity,
    /// Per-separation optimization and best negativity (CSV).
    Sweep,
    /// Window optimization with full evaluation logs (JSON).
    Optimize,
    /// Full versus ablated Dirac kernel (CSV).
    Ablate,
    /// Brute-force and normalization oracle suite (CSV).
    OracleCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Amplitudes => "amplitudes",
            Command::Condition => "condition",
            Command::Negativity => "negativity",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Ablate => "ablate",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Serialize)]
struct ConditionOut {
    margin: f64,
    margin_err: f64,
    entangled: bool,
    converged: bool,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None if matches!(cli.command, Command::OracleCheck) => Ok(RunConfig::default()),
        None => Err(CliError::Config("--config is required for this command".into())),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load(cli)?;
    let out = cli.out.as_deref();
    let name = cli.command.name();
    match cli.command {
        Command::Amplitudes | Command::Condition | Command::Negativity => {
            let (g, da, db) = cfg.pair()?;
            let opts = if matches!(cli.command, Command::Amplitudes) { cfg.kernel.both_paths() } else { cfg.kernel };
            let r = amplitudes(&da, &db, &g, cfg.model, &opts)?;
            let converged = r.converged();
            match cli.command {
                Command::Amplitudes => write_json(out, name, &cfg, &r)?,
                Command::Condition => {
                    let m = r.amplitudes.margin();
                    let res = ConditionOut {
                        margin: m.value,
                        margin_err: m.error,
                        entangled: m.value > 3.0 * m.error,
                        converged,
                    };
                    write_json(out, name, &cfg, &res)?
                }
                _ => {
                    let pt = assemble_pt(&r.amplitudes).map_err(|e| CliError::Config(e.to_string()))?;
                    write_json(out, name, &cfg, &peres_test(&pt))?
                }
            }
            if !converged {
                return Err(CliError::NotConverged(format!("{name}: at least one amplitude integral")));
            }
        }
        Command::Sweep => {
            let spec = cfg.sweep(cli.seed)?;
            cfg.sweep = Some(spec.clone());
            let table = sweep_negativity(&spec)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            match fit_sweep(&table) {
                Ok(f) => eprintln!("decay fit: log N = {} - {} (L/T)^{} (rms {})", f.log_a, f.c, f.p, f.rms),
                Err(e) => eprintln!("decay fit: {e}"),
            }
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let p = r.params;
                    vec![
                        num(r.l_over_t),
                        num(r.margin),
                        num(r.margin_err),
                        num(r.negativity),
                        num(r.negativity_err),
                        r.found.to_string(),
                        p.and_then(|p| p.order()).map(|n| n.to_string()).unwrap_or_default(),
                        opt_num(p.and_then(|p| p.speedup())),
                        opt_num(p.and_then(|p| p.smoothing())),
                        opt_num(p.map(|p| p.window_b.modulation)),
                        opt_num(p.map(|p| p.gap_a)),
                        opt_num(p.map(|p| p.gap_b)),
                        opt_num(p.map(|p| p.window_a.amplitude)),
                        opt_num(p.map(|p| p.window_b.amplitude)),
                    ]
                })
                .collect();
            write_csv(out, name, &cfg, &SWEEP_HEADER, &rows)?;
        }
        Command::Optimize => {
            let spec = cfg.sweep(cli.seed)?;
            cfg.sweep = Some(spec.clone());
            let results = optimize_grid(&spec)?;
            write_json(out, name, &cfg, &results)?;
        }
        Command::Ablate => {
            let spec = cfg.sweep(cli.seed)?;
            cfg.sweep = Some(spec.clone());
            let rep = ablation_study(&spec)?;
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.l_over_t),
                        num(r.full_margin),
                        num(r.full_margin_err),
                        r.full_found.to_string(),
                        num(r.ablated_margin),
                        num(r.ablated_margin_err),
                        r.ablated_found.to_string(),
                        num(r.emission_rel_diff),
                        rep.ablated_budget.to_string(),
                    ]
                })
                .collect();
            write_csv(out, name, &cfg, &ABLATE_HEADER, &rows)?;
        }
        Command::OracleCheck => {
            let rows = oracle::run(&cfg.oracle, &cfg.kernel)?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.check.clone(),
                        opt_num(r.omega_t),
                        opt_num(r.l_over_t),
                        num(r.value),
                        num(r.reference),
                        num(r.rel_diff),
                        num(r.tolerance),
                        if r.pass { "pass" } else { "FAIL" }.to_string(),
                    ]
                })
                .collect();
            write_csv(out, name, &cfg, &ORACLE_HEADER, &table)?;
            if failed > 0 {
                return Err(CliError::Oracle(failed));
            }
        }
    }
    Ok(())
}

pub const SWEEP_HEADER: [&str; 14] = [
    "L_over_T",
    "margin",
    "margin_err",
    "negativity",
    "negativity_err",
    "found",
    "order",
    "speedup",
    "smoothing",
    "modulation_b",
    "gap_a",
    "gap_b",
    "amplitude_a",
    "amplitude_b",
];

pub const ABLATE_HEADER: [&str; 9] = [
    "L_over_T",
    "full_margin",
    "full_margin_err",
    "full_found",
    "ablated_margin",
    "ablated_margin_err",
    "ablated_found",
    "emission_rel_diff",
    "ablated_budget",
];

pub const ORACLE_HEADER: [&str; 8] =
    ["check", "omega_t", "L_over_T", "value", "reference", "rel_diff", "tolerance", "result"];

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

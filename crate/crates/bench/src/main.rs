use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tdtrotter::OracleConfig;
use tdtrotter_bench::ops::{evolve, export_gates, matrix_csv, Model};
use tdtrotter_bench::{run, Experiment, SweepConfig};

#[derive(Parser)]
#[command(name = "tdtrotter-bench", version, about = "Product-formula benchmarks for time-dependent two-term generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-window error against δt at fixed μ (Landau–Zener).
    DtSweep(Common),
    /// Single-window error across μ with δt = 0.1/√(1+μ²) (Landau–Zener).
    MuSweep(Common),
    /// Global error of composed evolutions on the transverse-field Ising chain.
    IsingBench(Common),
    /// Spectral-to-Frobenius error ratio over the δt grid.
    NormRatio(Common),
    /// Write the Ising gate program of a composed evolution as JSON lines.
    ExportGates {
        #[command(flatten)]
        common: Common,
        /// Number of composed steps.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        t_initial: f64,
    },
    /// Composed evolution; prints the propagator as CSV.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModelKind::LandauZener)]
        model: ModelKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        t_initial: f64,
        /// Also report the error against the oracle on stderr.
        #[arg(long)]
        compare: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    LandauZener,
    Ising,
}

/// Flags shared by every subcommand; each overrides the matching config-file key.
#[derive(Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated formula ids, or "all".
    #[arg(long)]
    formulas: Option<String>,
    /// both | A_to_X | A_to_Y
    #[arg(long)]
    assignment: Option<String>,
    #[arg(long)]
    oracle_tol: Option<f64>,
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    /// Comma list or logspace(a, b, n).
    #[arg(long)]
    dt_grid: Option<String>,
    /// Comma list or logspace(a, b, n).
    #[arg(long)]
    mu_grid: Option<String>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    j: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hz: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hx: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    fit_min_n: Option<usize>,
    /// Skip the assertions; exit code reflects only run errors.
    #[arg(long)]
    no_check: bool,
}

impl Common {
    fn build(&self, experiment: Experiment) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::defaults(experiment);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let num = |x: Option<f64>| x.map(|v| v.to_string());
        let overrides = [
            ("formulas", self.formulas.clone()),
            ("assignment", self.assignment.clone()),
            ("oracle_tol", num(self.oracle_tol)),
            ("mu", num(self.mu)),
            ("dt_grid", self.dt_grid.clone()),
            ("mu_grid", self.mu_grid.clone()),
            ("n_grid", self.n_grid.clone()),
            ("sites", self.sites.map(|v| v.to_string())),
            ("j", num(self.j)),
            ("hz", num(self.hz)),
            ("hx", num(self.hx)),
            ("t_final", num(self.t_final)),
            ("fit_min_n", self.fit_min_n.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if self.no_check {
            cfg.check = false;
        }
        Ok(cfg)
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn single_formula(cfg: &SweepConfig) -> Result<tdtrotter::FormulaId> {
    match cfg.formulas.as_slice() {
        [id] => Ok(*id),
        _ => bail!("select exactly one formula with --formulas"),
    }
}

fn sweep(common: &Common, experiment: Experiment) -> Result<bool> {
    let cfg = common.build(experiment)?;
    let report = run(&cfg)?;
    let mut out = writer(cfg.out.as_deref())?;
    out.write_all(report.to_csv().as_bytes())?;
    out.flush()?;
    if !report.checks.is_empty() {
        eprint!("{}", report.summary_table());
    }
    Ok(report.all_passed())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::DtSweep(c) => sweep(&c, Experiment::DtSweep),
        Command::MuSweep(c) => sweep(&c, Experiment::MuSweep),
        Command::IsingBench(c) => sweep(&c, Experiment::IsingBench),
        Command::NormRatio(c) => sweep(&c, Experiment::NormRatio),
        Command::ExportGates { common, n, t_initial } => {
            let cfg = common.build(Experiment::IsingBench)?;
            let id = single_formula(&cfg)?;
            cfg.ising.validate()?;
            let mut out = writer(cfg.out.as_deref())?;
            let count = export_gates(&mut out, id, &cfg.ising, n, t_initial, cfg.t_final)?;
            out.flush()?;
            eprintln!("wrote {count} gates");
            Ok(true)
        }
        Command::Evolve { common, model, n, t_initial, compare } => {
            let cfg = common.build(Experiment::IsingBench)?;
            let id = single_formula(&cfg)?;
            let model = match model {
                ModelKind::Ising => Model::Ising(cfg.ising),
                ModelKind::LandauZener => match cfg.assignments.as_slice() {
                    [a] => Model::LandauZener(*a),
                    _ => bail!("select one assignment with --assignment for the Landau–Zener model"),
                },
            };
            let oracle = OracleConfig::with_tol(cfg.oracle_tol);
            let result = evolve(&model, id, t_initial, cfg.t_final, n, compare.then_some(&oracle))?;
            let mut out = writer(cfg.out.as_deref())?;
            out.write_all(matrix_csv(&result.propagator).as_bytes())?;
            out.flush()?;
            if let Some(e) = result.error {
                eprintln!("eps_frobenius={:e} eps_spectral={:e}", e.frobenius, e.spectral);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

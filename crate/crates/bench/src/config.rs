//! Sweep configuration: defaults, then a `key=value` file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tdtrotter::models::Assignment;
use tdtrotter::reference::DEFAULT_ORACLE_TOL;
use tdtrotter::{FormulaId, IsingParams};

use crate::BenchError;

/// Minimum grid size for experiments that fit a slope.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    DtSweep,
    MuSweep,
    IsingBench,
    NormRatio,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::DtSweep => "dt-sweep",
            Experiment::MuSweep => "mu-sweep",
            Experiment::IsingBench => "ising-bench",
            Experiment::NormRatio => "norm-ratio",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Default δt grid: 8 log-spaced points over `[0.02, 0.4]`.
pub fn default_dt_grid() -> Vec<f64> {
    log_grid(0.02, 0.4, 8)
}

/// Default μ grid: eight points per decade over `[1e-2, 1e2]`.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, 33)
}

pub const DEFAULT_N_GRID: [usize; 7] = [5, 10, 20, 50, 100, 200, 400];

pub const DEFAULT_FORMULAS: [FormulaId; 4] = [FormulaId::Midpoint, FormulaId::Mft, FormulaId::NineExp, FormulaId::Suzuki4];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub formulas: Vec<FormulaId>,
    pub assignments: Vec<Assignment>,
    /// Window centre for the δt grid.
    pub mu: f64,
    pub dt_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub ising: IsingParams,
    pub t_final: f64,
    pub oracle_tol: f64,
    /// Ising points with `N` below this are excluded from fits and orderings.
    pub fit_min_n: usize,
    /// μ-sweep points at or above this form the large-μ tail.
    pub mu_tail_min: f64,
    /// μ-sweep points at or below this form the small-μ region.
    pub mu_small_max: f64,
    /// Evaluate assertions and report them through the exit code.
    pub check: bool,
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        SweepConfig {
            experiment,
            formulas: DEFAULT_FORMULAS.to_vec(),
            assignments: Assignment::ALL.to_vec(),
            mu: 1.0,
            dt_grid: default_dt_grid(),
            mu_grid: default_mu_grid(),
            n_grid: DEFAULT_N_GRID.to_vec(),
            ising: IsingParams::benchmark(),
            t_final: std::f64::consts::PI,
            oracle_tol: DEFAULT_ORACLE_TOL,
            fit_min_n: 20,
            mu_tail_min: 30.0,
            mu_small_max: 0.1,
            check: true,
            out: None,
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        let bad = |reason: String| BenchError::BadValue { key: key.to_string(), value: value.to_string(), reason };
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "formulas" => self.formulas = parse_formulas(v).map_err(bad)?,
            "assignment" => self.assignments = parse_assignments(v).map_err(bad)?,
            "mu" => self.mu = parse_num(v).map_err(bad)?,
            "dt_grid" => self.dt_grid = parse_grid(v).map_err(bad)?,
            "mu_grid" => self.mu_grid = parse_grid(v).map_err(bad)?,
            "n_grid" => self.n_grid = parse_list(v).map_err(bad)?,
            "sites" | "l" => self.ising.l = parse_num(v).map_err(bad)?,
            "j" => self.ising.j = parse_num(v).map_err(bad)?,
            "hz" => self.ising.hz = parse_num(v).map_err(bad)?,
            "hx" => self.ising.hx = parse_num(v).map_err(bad)?,
            "t_final" => self.t_final = parse_num(v).map_err(bad)?,
            "oracle_tol" => self.oracle_tol = parse_num(v).map_err(bad)?,
            "fit_min_n" => self.fit_min_n = parse_num(v).map_err(bad)?,
            "mu_tail_min" => self.mu_tail_min = parse_num(v).map_err(bad)?,
            "mu_small_max" => self.mu_small_max = parse_num(v).map_err(bad)?,
            "check" => self.check = parse_num(v).map_err(bad)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(BenchError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every setting of a `key=value` file. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), BenchError> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(BenchError::MalformedLine { line: idx + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io { path: path.to_path_buf(), source: e })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.formulas.is_empty() {
            return Err(BenchError::InvalidConfig("no formulas selected".into()));
        }
        if !(self.oracle_tol.is_finite() && self.oracle_tol > 0.0) {
            return Err(BenchError::InvalidConfig(format!("oracle_tol must be positive, got {}", self.oracle_tol)));
        }
        match self.experiment {
            Experiment::DtSweep | Experiment::NormRatio => {
                if !self.mu.is_finite() {
                    return Err(BenchError::InvalidConfig("mu must be finite".into()));
                }
                check_grid("dt_grid", &self.dt_grid)
            }
            Experiment::MuSweep => check_grid("mu_grid", &self.mu_grid),
            Experiment::IsingBench => {
                self.ising.validate().map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
                if !(self.t_final.is_finite() && self.t_final > 0.0) {
                    return Err(BenchError::InvalidConfig("t_final must be positive".into()));
                }
                let grid: Vec<f64> = self.n_grid.iter().map(|&n| n as f64).collect();
                check_grid("n_grid", &grid)
            }
        }
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<(), BenchError> {
    let invalid = |reason: &str| Err(BenchError::InvalidGrid { name: name.to_string(), reason: reason.to_string() });
    if grid.len() < MIN_FIT_POINTS {
        return invalid("needs at least 4 points");
    }
    if grid.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return invalid("entries must be finite and positive");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("entries must be strictly increasing");
    }
    Ok(())
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(s.trim())).collect()
}

/// Comma list, or `logspace(a, b, n)`.
pub fn parse_grid(v: &str) -> Result<Vec<f64>, String> {
    let v = v.trim();
    if let Some(args) = v.strip_prefix("logspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err("logspace takes (start, stop, count)".into());
        }
        let (a, b, n): (f64, f64, usize) = (parse_num(parts[0])?, parse_num(parts[1])?, parse_num(parts[2])?);
        if !(a > 0.0 && b > 0.0) || n == 0 {
            return Err("logspace needs positive bounds and count".into());
        }
        return Ok(log_grid(a, b, n));
    }
    parse_list(v)
}

pub fn parse_formulas(v: &str) -> Result<Vec<FormulaId>, String> {
    if v.eq_ignore_ascii_case("all") {
        return Ok(FormulaId::ALL.to_vec());
    }
    let mut out: Vec<FormulaId> = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id: FormulaId = part.parse().map_err(|e: tdtrotter::FormulaError| e.to_string())?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    if out.is_empty() {
        return Err("empty formula list".into());
    }
    Ok(out)
}

pub fn parse_assignments(v: &str) -> Result<Vec<Assignment>, String> {
    if v.eq_ignore_ascii_case("both") {
        return Ok(Assignment::ALL.to_vec());
    }
    v.parse::<Assignment>().map(|a| vec![a]).map_err(|e| e.to_string())
}

//! Ground-truth propagators, error metrics, multi-step composition and
//! log-log order fitting.

use thiserror::Error;

use crate::format_decimal;
use crate::formulas::{self, FormulaConfig, FormulaError, FormulaId, Slot};
use crate::linalg::{frobenius_norm, spectral_norm, CMatrix, LinalgError, C64};
use crate::magnus::{omega_matrices, MagnusError, SlotExp, TwoTermGenerator};
use crate::quadrature::Window;

pub const DEFAULT_ORACLE_TOL: f64 = 1e-12;
pub const MIN_ORACLE_TOL: f64 = 1e-13;
pub const DEFAULT_FIT_FLOOR: f64 = 1e-14;
/// Oracle paths must agree within this multiple of the tolerance.
pub const ORACLE_AGREEMENT_FACTOR: f64 = 10.0;
/// Starting sub-step for the automatic MST cross-check, as `h·‖A‖₂`.
pub const CROSS_CHECK_START_H: f64 = 0.1;
pub const CROSS_CHECK_MAX_STEPS: usize = 1 << 17;
const RK_MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("oracle tolerance must be >= {MIN_ORACLE_TOL:e}, got {0:e}")]
    InvalidTolerance(f64),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("Runge-Kutta exceeded {0} steps")]
    TooManySteps(usize),
    #[error("oracle paths disagree: deviation {deviation:e} > allowed {allowed:e}")]
    OracleDisagreement { deviation: f64, allowed: f64 },
    #[error("fine MST cross-check did not settle below {tol:e} by N = {steps} (last change {change:e})")]
    CrossCheckNotConverged { steps: usize, change: f64, tol: f64 },
    #[error("composed evolution needs N >= 1")]
    InvalidSteps,
    #[error("step {step}: {source}")]
    StepFailed { step: usize, source: FormulaError },
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Magnus(#[from] MagnusError),
    #[error("order fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("{count} point(s) have eps <= {threshold:e} (10x the roundoff floor); use a larger dt range")]
    BelowFloor { count: usize, threshold: f64 },
    #[error("order fit needs positive finite (dt, eps), got ({dt}, {eps})")]
    InvalidPoint { dt: f64, eps: f64 },
}

impl ReferenceError {
    pub fn code(&self) -> &'static str {
        match self {
            ReferenceError::InvalidTolerance(_) => "invalid_tolerance",
            ReferenceError::StepUnderflow { .. } => "step_underflow",
            ReferenceError::TooManySteps(_) => "too_many_steps",
            ReferenceError::OracleDisagreement { .. } => "oracle_disagreement",
            ReferenceError::CrossCheckNotConverged { .. } => "cross_check_not_converged",
            ReferenceError::InvalidSteps => "invalid_steps",
            ReferenceError::StepFailed { source, .. } => source.code(),
            ReferenceError::Formula(e) => e.code(),
            ReferenceError::Linalg(_) => "linalg_error",
            ReferenceError::Magnus(_) => "magnus_error",
            ReferenceError::TooFewPoints(_) => "too_few_points",
            ReferenceError::BelowFloor { .. } => "below_floor",
            ReferenceError::InvalidPoint { .. } => "invalid_point",
        }
    }
}

/// How the Runge–Kutta oracle is cross-validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossCheck {
    /// Double the MST step count until successive results settle.
    Auto,
    /// Fixed number of MST sub-steps.
    Steps(usize),
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub tol: f64,
    pub cross_check: CrossCheck,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { tol: DEFAULT_ORACLE_TOL, cross_check: CrossCheck::Auto }
    }
}

impl OracleConfig {
    pub fn with_tol(tol: f64) -> Self {
        OracleConfig { tol, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    Frobenius,
    Spectral,
}

fn apply_slot(gen: &TwoTermGenerator, slot: Slot, c: f64, s: &CMatrix) -> CMatrix {
    match gen.slot_exp(slot) {
        SlotExp::Diagonal(d) => s.scale_rows(&d.iter().map(|z| z * c).collect::<Vec<_>>()),
        SlotExp::Local(local) => local.mul(s).scale_real(c),
        _ => (gen.operator(slot) * s).scale_real(c),
    }
}

/// `A(t) · S`.
fn rhs(gen: &TwoTermGenerator, t: f64, s: &CMatrix) -> CMatrix {
    let a = apply_slot(gen, Slot::X, gen.xfn().eval(t), s);
    a.add_scaled(C64::new(1.0, 0.0), &apply_slot(gen, Slot::Y, gen.yfn().eval(t), s))
}

/// Upper bound on `max_t ‖A(t)‖₂` over `[t0, t1]`, from 65 samples.
fn generator_scale(gen: &TwoTermGenerator, t0: f64, t1: f64) -> f64 {
    let (nx, ny) = (gen.slot_exp(Slot::X).norm_bound(), gen.slot_exp(Slot::Y).norm_bound());
    (0..=64)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / 64.0;
            gen.xfn().eval(t).abs() * nx + gen.yfn().eval(t).abs() * ny
        })
        .fold(0.0, f64::max)
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus fourth-order weights
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// `S(t1, t0)` by adaptive Dormand–Prince 5(4) only.
pub fn runge_kutta_propagator(gen: &TwoTermGenerator, t0: f64, t1: f64, tol: f64) -> Result<CMatrix, ReferenceError> {
    if !(tol >= MIN_ORACLE_TOL) {
        return Err(ReferenceError::InvalidTolerance(tol));
    }
    let n = gen.dim();
    let mut s = CMatrix::identity(n);
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(s);
    }
    let dir = span.signum();
    let per_time = tol / (span.abs() * n as f64);
    let scale = generator_scale(gen, t0, t1).max(1e-300);
    let mut h = (0.05 / scale).min(span.abs()) * dir;
    let mut t = t0;
    let mut k1 = rhs(gen, t, &s);
    for _ in 0..RK_MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(s);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut ks = vec![k1.clone()];
        for stage in 1..7 {
            let mut y = s.clone();
            for (j, &a) in DP_A[stage].iter().enumerate() {
                if a != 0.0 {
                    y = y.add_scaled(C64::new(h * a, 0.0), &ks[j]);
                }
            }
            if stage == 6 {
                // the last stage point is the fifth-order solution
                let k7 = rhs(gen, t + h, &y);
                ks.push(k7);
                let mut err = CMatrix::zeros(n);
                for (j, &e) in DP_E.iter().enumerate() {
                    if e != 0.0 {
                        err = err.add_scaled(C64::new(h * e, 0.0), &ks[j]);
                    }
                }
                let err_norm = frobenius_norm(&err);
                let allowed = per_time * h.abs();
                if err_norm <= allowed {
                    t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
                    s = y;
                    k1 = ks.pop().expect("seven stages");
                }
                let factor = if err_norm == 0.0 { 5.0 } else { (0.9 * (allowed / err_norm).powf(0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if h.abs() < 1e-14 * span.abs().max(t.abs()) {
                    return Err(ReferenceError::StepUnderflow { t, h });
                }
                break;
            }
            ks.push(rhs(gen, t + DP_C[stage] * h, &y));
        }
    }
    Err(ReferenceError::TooManySteps(RK_MAX_STEPS))
}

/// Sixth-order step on one window: MST where its preconditions hold,
/// otherwise `exp(Ω₁ + Ω₂ + Ω₃ + Ω₄)`.
fn sixth_order_step(gen: &TwoTermGenerator, w: &Window, acc: CMatrix) -> Result<CMatrix, ReferenceError> {
    match formulas::mst(gen, w) {
        Ok((sched, _)) => Ok(formulas::apply(&sched, gen, acc)?),
        Err(FormulaError::IrregularBeta { .. } | FormulaError::IllConditioned { .. }) => {
            let [o1, o2, o3, o4] = omega_matrices(gen, w)?;
            let sum = &(&(&o1 + &o2) + &o3) + &o4;
            Ok(&crate::linalg::expm(&sum)? * &acc)
        }
        Err(e) => Err(e.into()),
    }
}

/// Composed sixth-order evolution with `n` equal sub-steps.
pub fn fine_mst_propagator(gen: &TwoTermGenerator, t0: f64, t1: f64, n: usize) -> Result<CMatrix, ReferenceError> {
    if n == 0 {
        return Err(ReferenceError::InvalidSteps);
    }
    let mut acc = CMatrix::identity(gen.dim());
    let h = (t1 - t0) / n as f64;
    for k in 0..n {
        let a = t0 + k as f64 * h;
        let b = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
        acc = sixth_order_step(gen, &Window { mu: 0.5 * (a + b), dt: b - a }, acc)?;
    }
    Ok(acc)
}

fn auto_cross_check(gen: &TwoTermGenerator, t0: f64, t1: f64, tol: f64) -> Result<CMatrix, ReferenceError> {
    let scale = generator_scale(gen, t0, t1);
    let mut n = ((t1 - t0).abs() * scale / CROSS_CHECK_START_H).ceil().max(1.0) as usize;
    let mut prev = fine_mst_propagator(gen, t0, t1, n)?;
    let mut change = f64::INFINITY;
    while 2 * n <= CROSS_CHECK_MAX_STEPS {
        n *= 2;
        let next = fine_mst_propagator(gen, t0, t1, n)?;
        change = frobenius_norm(&(&next - &prev));
        if change <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(ReferenceError::CrossCheckNotConverged { steps: n, change, tol })
}

/// `S(t1, t0) = 𝒯 exp ∫_{t0}^{t1} A(s) ds` with default settings.
pub fn exact_propagator(gen: &TwoTermGenerator, t0: f64, t1: f64, tol: f64) -> Result<CMatrix, ReferenceError> {
    exact_propagator_with(gen, t0, t1, &OracleConfig::with_tol(tol))
}

/// Runge–Kutta propagator, cross-validated against a fine composed
/// sixth-order evolution unless disabled.
pub fn exact_propagator_with(gen: &TwoTermGenerator, t0: f64, t1: f64, cfg: &OracleConfig) -> Result<CMatrix, ReferenceError> {
    let rk = runge_kutta_propagator(gen, t0, t1, cfg.tol)?;
    if t0 == t1 {
        return Ok(rk);
    }
    let check = match cfg.cross_check {
        CrossCheck::Off => return Ok(rk),
        CrossCheck::Steps(n) => fine_mst_propagator(gen, t0, t1, n)?,
        CrossCheck::Auto => auto_cross_check(gen, t0, t1, cfg.tol)?,
    };
    let deviation = frobenius_norm(&(&rk - &check));
    let allowed = ORACLE_AGREEMENT_FACTOR * cfg.tol;
    if deviation > allowed {
        return Err(ReferenceError::OracleDisagreement { deviation, allowed });
    }
    Ok(rk)
}

pub fn matrix_norm(m: &CMatrix, norm: Norm) -> f64 {
    match norm {
        Norm::Frobenius => frobenius_norm(m),
        Norm::Spectral => spectral_norm(m),
    }
}

/// `‖exact − approx‖` in both norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub frobenius: f64,
    pub spectral: f64,
}

pub fn error_norms(exact: &CMatrix, approx: &CMatrix) -> ErrorNorms {
    let d = exact - approx;
    ErrorNorms { frobenius: frobenius_norm(&d), spectral: spectral_norm(&d) }
}

/// Single-window error of a formula against the oracle.
pub fn trotter_error(gen: &TwoTermGenerator, id: FormulaId, w: &Window, norm: Norm) -> Result<f64, ReferenceError> {
    trotter_error_with(gen, id, w, norm, &OracleConfig::default(), &FormulaConfig::default())
}

pub fn trotter_error_with(
    gen: &TwoTermGenerator,
    id: FormulaId,
    w: &Window,
    norm: Norm,
    oracle: &OracleConfig,
    fcfg: &FormulaConfig,
) -> Result<f64, ReferenceError> {
    let exact = exact_propagator_with(gen, w.start(), w.end(), oracle)?;
    let approx = formulas::evaluate(&formulas::build_with(id, gen, w, fcfg)?, gen)?;
    Ok(matrix_norm(&(&exact - &approx), norm))
}

/// `T(t_N, t_{N−1}) ⋯ T(t_1, t_0)` with `t_k = t_i + k (t_f − t_i)/N`.
pub fn composed_evolution(gen: &TwoTermGenerator, id: FormulaId, t_i: f64, t_f: f64, n: usize) -> Result<CMatrix, ReferenceError> {
    composed_evolution_with(gen, id, t_i, t_f, n, &FormulaConfig::default())
}

pub fn composed_evolution_with(
    gen: &TwoTermGenerator,
    id: FormulaId,
    t_i: f64,
    t_f: f64,
    n: usize,
    fcfg: &FormulaConfig,
) -> Result<CMatrix, ReferenceError> {
    let mut acc = CMatrix::identity(gen.dim());
    for (idx, w) in step_windows(t_i, t_f, n)?.iter().enumerate() {
        let failed = |source| ReferenceError::StepFailed { step: idx + 1, source };
        let sched = formulas::build_with(id, gen, w, fcfg).map_err(failed)?;
        acc = formulas::apply(&sched, gen, acc).map_err(failed)?;
    }
    Ok(acc)
}

/// The `N` windows `[t_{k−1}, t_k]`, earliest first.
pub fn step_windows(t_i: f64, t_f: f64, n: usize) -> Result<Vec<Window>, ReferenceError> {
    if n == 0 {
        return Err(ReferenceError::InvalidSteps);
    }
    let dt = (t_f - t_i) / n as f64;
    Ok((0..n).map(|k| Window { mu: t_i + (k as f64 + 0.5) * dt, dt }).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares slope of `log eps` against `log dt`.
pub fn order_fit(points: &[(f64, f64)]) -> Result<OrderFit, ReferenceError> {
    order_fit_with_floor(points, DEFAULT_FIT_FLOOR)
}

pub fn order_fit_with_floor(points: &[(f64, f64)], floor: f64) -> Result<OrderFit, ReferenceError> {
    if points.len() < 4 {
        return Err(ReferenceError::TooFewPoints(points.len()));
    }
    if let Some(&(dt, eps)) = points.iter().find(|(dt, eps)| !(*dt > 0.0 && dt.is_finite() && eps.is_finite() && *eps >= 0.0)) {
        return Err(ReferenceError::InvalidPoint { dt, eps });
    }
    let threshold = 10.0 * floor;
    let count = points.iter().filter(|p| p.1 <= threshold).count();
    if count > 0 {
        return Err(ReferenceError::BelowFloor { count, threshold });
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(OrderFit { slope, intercept, r2 })
}

pub const ERROR_RECORD_HEADER: &str = "formula,mu,dt,N,n_exponentials,n_gates,eps_frobenius,eps_spectral";

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub formula: FormulaId,
    pub mu: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_exponentials: usize,
    pub n_gates: usize,
    pub eps_frobenius: f64,
    pub eps_spectral: f64,
}

impl ErrorRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.formula,
            format_decimal(self.mu),
            format_decimal(self.dt),
            self.n_steps,
            self.n_exponentials,
            self.n_gates,
            format_decimal(self.eps_frobenius),
            format_decimal(self.eps_spectral)
        )
    }
}

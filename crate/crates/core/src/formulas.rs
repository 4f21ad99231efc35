//! Product formulas for two-term generators, emitted as exponent schedules.
//!
//! A schedule lists `(slot, coeff)` pairs left to right in the written
//! product order: the leftmost factor acts last in time. `evaluate` returns
//! `e^{c₀ Z_{s₀}} e^{c₁ Z_{s₁}} ⋯`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::format_decimal;
use crate::linalg::{CMatrix, LinalgError};
use crate::magnus::{beta_set, BetaSet, MagnusError, TwoTermGenerator, BETA2_FLOOR_REL};
use crate::quadrature::{integrate, QuadratureError, Window};

pub use crate::magnus::Slot;

/// Forest–Ruth–Suzuki `s = (2 − 2^{1/3})⁻¹`.
pub fn frs_s() -> f64 {
    1.0 / (2.0 - 2f64.cbrt())
}

/// Fourth-order Suzuki fractal weight `w = (4 − 4^{1/3})⁻¹`.
pub fn suzuki_w() -> f64 {
    1.0 / (4.0 - 4f64.cbrt())
}

pub const OMELYAN_XI: f64 = 0.1786178958448091;
pub const OMELYAN_LAMBDA: f64 = -0.2123418310626054;
pub const OMELYAN_CHI: f64 = -0.0662645826698185;

pub const YOSHIDA_A: [f64; 3] = [0.39225680523878, 0.5100434119184585, -0.4710533854097566];
pub const YOSHIDA_B: [f64; 3] = [0.78451361047756, 0.235573213359357, -1.17767998417887];
/// Tabulated closure values; the working values are recomputed from the sums.
pub const YOSHIDA_A4_TABULATED: f64 = 0.0687531682525181;
pub const YOSHIDA_B4_TABULATED: f64 = 1.31518632068391;

/// Numeric coefficients of the MST matching polynomials, named after the
/// monomial they multiply.
pub mod mst_poly {
    // c12
    pub const C12_U1B1: f64 = 0.804600434314477;
    pub const C12_U3B1: f64 = -0.21548638952244;
    pub const C12_U2B2: f64 = -0.56902722095512;
    pub const C12_U4B2: f64 = 1.0;
    // c112
    pub const C112_B2U2U2: f64 = -0.28451361047756;
    pub const C112_U1B1U2: f64 = 0.804600434314477;
    pub const C112_U4B2U2: f64 = -0.56902722095512;
    pub const C112_ZB1B1: f64 = -0.157118466580002;
    pub const C112_U1U4B1: f64 = 0.804600434314477;
    pub const C112_U3U4B1: f64 = -0.21548638952244;
    pub const C112_U4U4B2: f64 = 0.5;
    pub const C112_WB1B2: f64 = -0.161938460199746;
    // c212
    pub const C212_B1U1U1: f64 = 0.402300217157238;
    pub const C212_U3B1U1: f64 = 0.804600434314477;
    pub const C212_WB2B2: f64 = -0.161938460199745;
    pub const C212_U3U3B1: f64 = -0.10774319476122;
    pub const C212_U2U3B2: f64 = -0.56902722095512;
    pub const C212_ZB1B2: f64 = -0.489977318150775;
    // c1112
    pub const C1112_U1B1B1B1: f64 = -0.0118215295615413;
    pub const C1112_U3B1B1B1: f64 = 0.00856168382290096;
    pub const C1112_U2B2B1B1: f64 = 0.0562690326323137;
    // c2212
    pub const C2212_U2B2B2B2: f64 = 0.0160325321433039;
    pub const C2212_U1B1B2B2: f64 = 0.0641595078732893;
    pub const C2212_U3B1B2B2: f64 = 0.065376134206464;
    // c1212
    pub const C1212_U1B2B1B1: f64 = 0.0115567664079044;
    pub const C1212_U3B2B1B1: f64 = 0.0538195677848599;
    pub const C1212_U2B2B2B1: f64 = 0.112538065264628;
}

/// Remedies for a degenerate `β₂`, in priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Remedy {
    /// Exchange the slot assignment so the regular coefficient sits in Y.
    SwapAssignment,
    /// Drop the `e^{±uX}` conjugation (`u = 0`).
    ZeroDecoration,
    /// Use a smaller step.
    ShrinkStep,
}

pub const DEGENERATE_REMEDIES: [Remedy; 3] = [Remedy::SwapAssignment, Remedy::ZeroDecoration, Remedy::ShrinkStep];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error(transparent)]
    Magnus(MagnusError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(
        "{formula}: |beta2| = {beta2:e} below floor {floor:e}; remedies: {}swap the assignment, \
         set u = 0, or shrink dt",
        if *beta1_regular { "" } else { "(beta1 is degenerate too) " }
    )]
    DegenerateBeta2 { formula: FormulaId, beta2: f64, floor: f64, beta1_regular: bool },
    #[error("mst: |{name}| = {value:e} is below the regularity gate {floor:e}")]
    IrregularBeta { name: &'static str, value: f64, floor: f64 },
    #[error("mst: {system} system ill-conditioned (cond = {cond:e}) at beta1/beta2 = {ratio:e}")]
    IllConditioned { system: &'static str, cond: f64, ratio: f64 },
    #[error("unknown formula '{0}'")]
    UnknownFormula(String),
    #[error("invalid schedule json: {0}")]
    Json(String),
    #[error("schedule dimension {schedule} does not match generator {generator}")]
    Mismatch { schedule: usize, generator: usize },
}

impl From<MagnusError> for FormulaError {
    fn from(e: MagnusError) -> Self {
        match e {
            MagnusError::Linalg(l) => FormulaError::Linalg(l),
            MagnusError::Quadrature(q) => FormulaError::Quadrature(q),
            other => FormulaError::Magnus(other),
        }
    }
}

impl FormulaError {
    pub fn remedies(&self) -> &'static [Remedy] {
        match self {
            FormulaError::DegenerateBeta2 { .. } => &DEGENERATE_REMEDIES,
            _ => &[],
        }
    }

    /// Short machine-readable code for CSV status columns.
    pub fn code(&self) -> &'static str {
        match self {
            FormulaError::Magnus(_) => "magnus_error",
            FormulaError::Linalg(_) => "linalg_error",
            FormulaError::Quadrature(_) => "quadrature_error",
            FormulaError::DegenerateBeta2 { .. } => "degenerate_beta2",
            FormulaError::IrregularBeta { .. } => "irregular_beta",
            FormulaError::IllConditioned { .. } => "ill_conditioned",
            FormulaError::UnknownFormula(_) => "unknown_formula",
            FormulaError::Json(_) => "bad_json",
            FormulaError::Mismatch { .. } => "mismatch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormulaId {
    Midpoint,
    HdR,
    Mft,
    NineExp,
    Suzuki4,
    Mst,
}

impl FormulaId {
    pub const ALL: [FormulaId; 6] =
        [FormulaId::Midpoint, FormulaId::HdR, FormulaId::Mft, FormulaId::NineExp, FormulaId::Suzuki4, FormulaId::Mst];

    pub fn as_str(self) -> &'static str {
        match self {
            FormulaId::Midpoint => "midpoint",
            FormulaId::HdR => "hdr",
            FormulaId::Mft => "mft",
            FormulaId::NineExp => "nine-exp",
            FormulaId::Suzuki4 => "suzuki4",
            FormulaId::Mst => "mst",
        }
    }

    /// Number of exponentials per step.
    pub fn n_exponentials(self) -> usize {
        match self {
            FormulaId::Midpoint | FormulaId::HdR => 3,
            FormulaId::Mft => 7,
            FormulaId::NineExp => 9,
            FormulaId::Suzuki4 => 11,
            FormulaId::Mst => 15,
        }
    }

    /// Order of the global error (local error is one higher).
    pub fn order(self) -> u32 {
        match self {
            FormulaId::Midpoint | FormulaId::HdR => 2,
            FormulaId::Mft | FormulaId::NineExp | FormulaId::Suzuki4 => 4,
            FormulaId::Mst => 6,
        }
    }

    /// Whether `T(reversed window) = T(window)⁻¹` holds.
    pub fn is_symmetric(self) -> bool {
        self != FormulaId::HdR
    }
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormulaId {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| *c != '-' && *c != '_').collect();
        Ok(match norm.as_str() {
            "midpoint" | "mid" => FormulaId::Midpoint,
            "hdr" => FormulaId::HdR,
            "mft" | "7exp" => FormulaId::Mft,
            "nineexp" | "9exp" => FormulaId::NineExp,
            "suzuki4" | "suzuki" => FormulaId::Suzuki4,
            "mst" | "15exp" => FormulaId::Mst,
            _ => return Err(FormulaError::UnknownFormula(s.to_string())),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub slot: Slot,
    pub coeff: f64,
}

impl Step {
    pub fn x(coeff: f64) -> Self {
        Step { slot: Slot::X, coeff }
    }

    pub fn y(coeff: f64) -> Self {
        Step { slot: Slot::Y, coeff }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentSchedule {
    pub formula: FormulaId,
    pub window: Window,
    pub steps: Vec<Step>,
}

impl ExponentSchedule {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of the coefficients sitting in `slot`.
    pub fn slot_sum(&self, slot: Slot) -> f64 {
        self.steps.iter().filter(|s| s.slot == slot).map(|s| s.coeff).sum()
    }

    pub fn to_json(&self) -> String {
        let steps: Vec<String> = self
            .steps
            .iter()
            .map(|s| format!("{{\"slot\":\"{}\",\"coeff\":{}}}", s.slot, format_decimal(s.coeff)))
            .collect();
        format!(
            "{{\"formula\":\"{}\",\"mu\":{},\"dt\":{},\"steps\":[{}]}}",
            self.formula,
            format_decimal(self.window.mu),
            format_decimal(self.window.dt),
            steps.join(",")
        )
    }

    pub fn from_json(text: &str) -> Result<Self, FormulaError> {
        let bad = |m: &str| FormulaError::Json(m.to_string());
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| FormulaError::Json(e.to_string()))?;
        let formula: FormulaId = v["formula"].as_str().ok_or_else(|| bad("missing formula"))?.parse()?;
        let mu = v["mu"].as_f64().ok_or_else(|| bad("missing mu"))?;
        let dt = v["dt"].as_f64().ok_or_else(|| bad("missing dt"))?;
        let steps = v["steps"]
            .as_array()
            .ok_or_else(|| bad("missing steps"))?
            .iter()
            .map(|s| {
                let slot = match s["slot"].as_str() {
                    Some("X") => Slot::X,
                    Some("Y") => Slot::Y,
                    _ => return Err(bad("slot must be \"X\" or \"Y\"")),
                };
                let coeff = s["coeff"].as_f64().ok_or_else(|| bad("missing coeff"))?;
                Ok(Step { slot, coeff })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExponentSchedule { formula, window: Window { mu, dt }, steps })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplittingName {
    ForestRuthSuzuki,
    OmelyanFR,
    Yoshida6,
}

/// Time-independent splitting `e^{a₁X} e^{b₁Y} e^{a₂X} ⋯` with `a` one
/// longer than `b`; both lists are given in full, palindromic.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingCoeffs {
    pub name: SplittingName,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SplittingCoeffs {
    pub fn forest_ruth() -> Self {
        let s = frs_s();
        SplittingCoeffs {
            name: SplittingName::ForestRuthSuzuki,
            a: vec![s / 2.0, (1.0 - s) / 2.0, (1.0 - s) / 2.0, s / 2.0],
            b: vec![s, 1.0 - 2.0 * s, s],
        }
    }

    pub fn omelyan() -> Self {
        let a1 = OMELYAN_XI;
        let a2 = OMELYAN_CHI;
        let a3 = 1.0 - 2.0 * (OMELYAN_CHI + OMELYAN_XI);
        let b1 = (1.0 - 2.0 * OMELYAN_LAMBDA) / 2.0;
        let b2 = OMELYAN_LAMBDA;
        SplittingCoeffs { name: SplittingName::OmelyanFR, a: vec![a1, a2, a3, a2, a1], b: vec![b1, b2, b2, b1] }
    }

    pub fn yoshida6() -> Self {
        let [a1, a2, a3] = YOSHIDA_A;
        let [b1, b2, b3] = YOSHIDA_B;
        let a4 = 0.5 - (a1 + a2 + a3);
        let b4 = 1.0 - 2.0 * (b1 + b2 + b3);
        assert!((a4 - YOSHIDA_A4_TABULATED).abs() < 1e-13 && (b4 - YOSHIDA_B4_TABULATED).abs() < 1e-13);
        SplittingCoeffs {
            name: SplittingName::Yoshida6,
            a: vec![a1, a2, a3, a4, a4, a3, a2, a1],
            b: vec![b1, b2, b3, b4, b3, b2, b1],
        }
    }

    /// Steps for `e^{a₁β₁X} e^{b₁β₂Y} ⋯`.
    pub fn steps(&self, beta1: f64, beta2: f64) -> Vec<Step> {
        let mut out = Vec::with_capacity(self.a.len() + self.b.len());
        for (k, a) in self.a.iter().enumerate() {
            out.push(Step::x(a * beta1));
            if let Some(b) = self.b.get(k) {
                out.push(Step::y(b * beta2));
            }
        }
        out
    }
}

/// What to do when `|β₂|` falls under the floor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    #[default]
    Error,
    /// Fall back to `u = 0` (the undecorated time-independent splitting).
    ZeroU,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormulaConfig {
    /// Relative floor on `|β₂|/|δt|` for `u = β₁₂/β₂`.
    pub beta2_floor_rel: f64,
    /// Relative regularity gate on `|βᵢ|/|δt|` for MST.
    pub mst_regular_rel: f64,
    /// Largest accepted condition number of the MST linear systems.
    pub mst_max_cond: f64,
    pub degenerate: DegeneratePolicy,
}

impl Default for FormulaConfig {
    fn default() -> Self {
        FormulaConfig { beta2_floor_rel: BETA2_FLOOR_REL, mst_regular_rel: 1e-6, mst_max_cond: 1e12, degenerate: DegeneratePolicy::Error }
    }
}

/// MST corrections; `u`'s are `O(δt²)`, `w`, `z` are `O(δt³)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MstDecoration {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
    pub w: f64,
    pub z: f64,
}

impl MstDecoration {
    pub fn max_u(&self) -> f64 {
        [self.u1, self.u2, self.u3, self.u4].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sum adjacent steps that share a slot. Zero coefficients are kept.
pub fn merge_adjacent(steps: &[Step]) -> Vec<Step> {
    let mut out: Vec<Step> = Vec::with_capacity(steps.len());
    for s in steps {
        match out.last_mut() {
            Some(last) if last.slot == s.slot => last.coeff += s.coeff,
            _ => out.push(*s),
        }
    }
    out
}

fn schedule(formula: FormulaId, w: &Window, steps: Vec<Step>) -> ExponentSchedule {
    ExponentSchedule { formula, window: *w, steps }
}

pub fn midpoint(gen: &TwoTermGenerator, w: &Window) -> ExponentSchedule {
    let x = gen.xfn().eval(w.mu);
    let y = gen.yfn().eval(w.mu);
    schedule(FormulaId::Midpoint, w, vec![Step::x(x * w.dt / 2.0), Step::y(y * w.dt), Step::x(x * w.dt / 2.0)])
}

pub fn hdr(gen: &TwoTermGenerator, w: &Window) -> Result<ExponentSchedule, FormulaError> {
    let late = integrate(gen.xfn(), w.mu, w.mu + w.dt / 2.0)?;
    let mid = integrate(gen.yfn(), w.start(), w.end())?;
    let early = integrate(gen.xfn(), w.start(), w.mu)?;
    Ok(schedule(FormulaId::HdR, w, vec![Step::x(late), Step::y(mid), Step::x(early)]))
}

fn decoration_u(formula: FormulaId, b: &BetaSet, cfg: &FormulaConfig) -> Result<f64, FormulaError> {
    let floor = cfg.beta2_floor_rel * b.window.width();
    if b.b2.abs() < floor {
        return match cfg.degenerate {
            DegeneratePolicy::ZeroU => Ok(0.0),
            DegeneratePolicy::Error => Err(FormulaError::DegenerateBeta2 {
                formula,
                beta2: b.b2,
                floor,
                beta1_regular: b.b1.abs() >= floor,
            }),
        };
    }
    Ok(b.beta12()? / b.b2)
}

/// Diagnostic `|u|/δt²` of the MFT/9-exp conjugation.
pub fn u_ratio(gen: &TwoTermGenerator, w: &Window) -> Result<f64, FormulaError> {
    let b = beta_set(gen, w, 4)?;
    let u = decoration_u(FormulaId::Mft, &b, &FormulaConfig::default())?;
    Ok(u.abs() / (w.dt * w.dt))
}

fn conjugated(formula: FormulaId, split: SplittingCoeffs, b: &BetaSet, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    let u = decoration_u(formula, b, cfg)?;
    let mut steps = split.steps(b.b1, b.b2);
    let last = steps.len() - 1;
    steps[0].coeff += u;
    steps[last].coeff -= u;
    Ok(schedule(formula, &b.window, steps))
}

pub fn mft(gen: &TwoTermGenerator, w: &Window) -> Result<ExponentSchedule, FormulaError> {
    mft_with(gen, w, &FormulaConfig::default())
}

pub fn mft_with(gen: &TwoTermGenerator, w: &Window, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    mft_from_betas(&beta_set(gen, w, 4)?, cfg)
}

/// MFT from precomputed coefficients (order ≥ 4).
pub fn mft_from_betas(b: &BetaSet, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    conjugated(FormulaId::Mft, SplittingCoeffs::forest_ruth(), b, cfg)
}

pub fn nine_exp(gen: &TwoTermGenerator, w: &Window) -> Result<ExponentSchedule, FormulaError> {
    nine_exp_with(gen, w, &FormulaConfig::default())
}

pub fn nine_exp_with(gen: &TwoTermGenerator, w: &Window, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    nine_exp_from_betas(&beta_set(gen, w, 4)?, cfg)
}

pub fn nine_exp_from_betas(b: &BetaSet, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    conjugated(FormulaId::NineExp, SplittingCoeffs::omelyan(), b, cfg)
}

pub fn suzuki4(gen: &TwoTermGenerator, w: &Window) -> ExponentSchedule {
    let p = suzuki_w();
    let widths = [p, p, 1.0 - 4.0 * p, p, p];
    let mut start = w.start();
    let mut subs = Vec::with_capacity(5);
    for f in widths {
        let dt = f * w.dt;
        subs.push(Window { mu: start + dt / 2.0, dt });
        start += dt;
    }
    let raw: Vec<Step> = subs.iter().rev().flat_map(|sw| midpoint(gen, sw).steps).collect();
    schedule(FormulaId::Suzuki4, w, merge_adjacent(&raw))
}

/// Gaussian elimination with partial pivoting after row equilibration.
/// Returns the solution and a 1-norm condition estimate of the scaled system.
fn solve_small<const N: usize>(mut a: [[f64; N]; N], mut rhs: [f64; N]) -> Option<([f64; N], f64)> {
    for r in 0..N {
        let s = a[r].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 || !s.is_finite() {
            return None;
        }
        for v in a[r].iter_mut() {
            *v /= s;
        }
        rhs[r] /= s;
    }
    let norm = (0..N).map(|c| (0..N).map(|r| a[r][c].abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut lu = a;
    let mut perm: [usize; N] = std::array::from_fn(|i| i);
    for k in 0..N {
        let p = (k..N).max_by(|&i, &j| lu[i][k].abs().total_cmp(&lu[j][k].abs()))?;
        if lu[p][k] == 0.0 {
            return None;
        }
        lu.swap(k, p);
        perm.swap(k, p);
        for i in k + 1..N {
            let f = lu[i][k] / lu[k][k];
            lu[i][k] = f;
            for j in k + 1..N {
                lu[i][j] -= f * lu[k][j];
            }
        }
    }
    let lu_solve = |b: [f64; N]| {
        let mut y: [f64; N] = std::array::from_fn(|i| b[perm[i]]);
        for i in 0..N {
            for j in 0..i {
                y[i] -= lu[i][j] * y[j];
            }
        }
        for i in (0..N).rev() {
            for j in i + 1..N {
                y[i] -= lu[i][j] * y[j];
            }
            y[i] /= lu[i][i];
        }
        y
    };
    let mut inv_norm = 0.0f64;
    for c in 0..N {
        let mut e = [0.0; N];
        e[c] = 1.0;
        inv_norm = inv_norm.max(lu_solve(e).iter().map(|v| v.abs()).sum());
    }
    Some((lu_solve(rhs), norm * inv_norm))
}

/// Solve the MST matching equations for the decoration.
pub fn mst_decoration(b: &BetaSet, cfg: &FormulaConfig) -> Result<MstDecoration, FormulaError> {
    use mst_poly::*;
    let (b1, b2) = (b.b1, b.b2);
    let gate = cfg.mst_regular_rel * b.window.width();
    for (name, value) in [("beta1", b1), ("beta2", b2)] {
        if value.abs() < gate {
            return Err(FormulaError::IrregularBeta { name, value, floor: gate });
        }
    }
    let ratio = b1 / b2;
    let ill = |system, cond| FormulaError::IllConditioned { system, cond, ratio };

    // unknowns ordered (u1, u2, u3)
    let a = [
        [C1112_U1B1B1B1 * b1.powi(3), C1112_U2B2B1B1 * b2 * b1 * b1, C1112_U3B1B1B1 * b1.powi(3)],
        [C2212_U1B1B2B2 * b1 * b2 * b2, C2212_U2B2B2B2 * b2.powi(3), C2212_U3B1B2B2 * b1 * b2 * b2],
        [C1212_U1B2B1B1 * b2 * b1 * b1, C1212_U2B2B2B1 * b2 * b2 * b1, C1212_U3B2B1B1 * b2 * b1 * b1],
    ];
    let rhs = [b.beta1112()?, b.beta2212()?, b.beta1212()? + b.beta2112()?];
    let ([u1, u2, u3], cond) = solve_small(a, rhs).ok_or_else(|| ill("u1-u3", f64::INFINITY))?;
    if !(cond <= cfg.mst_max_cond) {
        return Err(ill("u1-u3", cond));
    }
    let u4 = (b.beta12()? - C12_U1B1 * u1 * b1 - C12_U3B1 * u3 * b1 - C12_U2B2 * u2 * b2) / (C12_U4B2 * b2);

    // c112 and c212 are affine in (w, z)
    let k112 = C112_B2U2U2 * b2 * u2 * u2
        + C112_U1B1U2 * u1 * b1 * u2
        + C112_U4B2U2 * u4 * b2 * u2
        + C112_U1U4B1 * u1 * u4 * b1
        + C112_U3U4B1 * u3 * u4 * b1
        + C112_U4U4B2 * u4 * u4 * b2;
    let k212 = C212_B1U1U1 * b1 * u1 * u1
        + C212_U3B1U1 * u3 * b1 * u1
        + C212_U3U3B1 * u3 * u3 * b1
        + C212_U2U3B2 * u2 * u3 * b2;
    let m = [[C112_WB1B2 * b1 * b2, C112_ZB1B1 * b1 * b1], [C212_WB2B2 * b2 * b2, C212_ZB1B2 * b1 * b2]];
    let rhs2 = [b.beta112()? - k112, b.beta212()? - k212];
    let ([w, z], cond2) = solve_small(m, rhs2).ok_or_else(|| ill("w-z", f64::INFINITY))?;
    if !(cond2 <= cfg.mst_max_cond) {
        return Err(ill("w-z", cond2));
    }
    Ok(MstDecoration { u1, u2, u3, u4, w, z })
}

pub fn mst(gen: &TwoTermGenerator, w: &Window) -> Result<(ExponentSchedule, MstDecoration), FormulaError> {
    mst_with(gen, w, &FormulaConfig::default())
}

pub fn mst_with(gen: &TwoTermGenerator, w: &Window, cfg: &FormulaConfig) -> Result<(ExponentSchedule, MstDecoration), FormulaError> {
    mst_from_betas(&beta_set(gen, w, 6)?, cfg)
}

/// MST from precomputed coefficients (order 6).
pub fn mst_from_betas(b: &BetaSet, cfg: &FormulaConfig) -> Result<(ExponentSchedule, MstDecoration), FormulaError> {
    let d = mst_decoration(b, cfg)?;
    let y = SplittingCoeffs::yoshida6();
    let (a, bb) = (&y.a, &y.b);
    let (b1, b2) = (b.b1, b.b2);
    let steps = vec![
        Step::x(a[0] * b1 + d.u4),
        Step::y(bb[0] * b2 + d.u3),
        Step::x(a[1] * b1 + d.u2),
        Step::y(bb[1] * b2 + d.u1 - d.z),
        Step::x(a[2] * b1 - d.w),
        Step::y(bb[2] * b2 + d.z),
        Step::x(a[3] * b1 + d.w),
        Step::y(bb[3] * b2),
        Step::x(a[4] * b1 + d.w),
        Step::y(bb[4] * b2 + d.z),
        Step::x(a[5] * b1 - d.w),
        Step::y(bb[5] * b2 - d.u1 - d.z),
        Step::x(a[6] * b1 - d.u2),
        Step::y(bb[6] * b2 - d.u3),
        Step::x(a[7] * b1 - d.u4),
    ];
    Ok((schedule(FormulaId::Mst, &b.window, steps), d))
}

pub fn build(id: FormulaId, gen: &TwoTermGenerator, w: &Window) -> Result<ExponentSchedule, FormulaError> {
    build_with(id, gen, w, &FormulaConfig::default())
}

pub fn build_with(id: FormulaId, gen: &TwoTermGenerator, w: &Window, cfg: &FormulaConfig) -> Result<ExponentSchedule, FormulaError> {
    match id {
        FormulaId::Midpoint => Ok(midpoint(gen, w)),
        FormulaId::HdR => hdr(gen, w),
        FormulaId::Mft => mft_with(gen, w, cfg),
        FormulaId::NineExp => nine_exp_with(gen, w, cfg),
        FormulaId::Suzuki4 => Ok(suzuki4(gen, w)),
        FormulaId::Mst => mst_with(gen, w, cfg).map(|(s, _)| s),
    }
}

/// `∏ e^{cₖ Z_{sₖ}}` in written order.
pub fn evaluate(schedule: &ExponentSchedule, gen: &TwoTermGenerator) -> Result<CMatrix, FormulaError> {
    apply(schedule, gen, CMatrix::identity(gen.dim()))
}

/// `evaluate(schedule) · m`.
pub fn apply(schedule: &ExponentSchedule, gen: &TwoTermGenerator, m: CMatrix) -> Result<CMatrix, FormulaError> {
    if m.dim() != gen.dim() {
        return Err(FormulaError::Mismatch { schedule: m.dim(), generator: gen.dim() });
    }
    let mut acc = m;
    for s in schedule.steps.iter().rev() {
        acc = gen.slot_exp(s.slot).apply(s.coeff, &acc)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, frobenius_norm, C64};
    use crate::quadrature::ScalarFn;

    fn sx() -> CMatrix {
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }
    fn sz() -> CMatrix {
        CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }
    fn lz() -> TwoTermGenerator {
        TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::constant(1.0), ScalarFn::identity()).unwrap()
    }
    fn constants(x: f64, y: f64) -> TwoTermGenerator {
        TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::constant(x), ScalarFn::constant(y)).unwrap()
    }
    fn generic() -> TwoTermGenerator {
        TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::new(|t: f64| 1.0 + 0.5 * t.sin()), ScalarFn::new(|t: f64| t + 0.3 * t * t)).unwrap()
    }
    fn all(gen: &TwoTermGenerator, w: &Window) -> Vec<ExponentSchedule> {
        FormulaId::ALL.iter().map(|&id| build(id, gen, w).unwrap()).collect()
    }

    #[test]
    fn step_counts_and_alternation() {
        let w = Window::new(1.0, 0.1).unwrap();
        for s in all(&lz(), &w) {
            assert_eq!(s.len(), s.formula.n_exponentials(), "{}", s.formula);
            assert!(s.steps.windows(2).all(|p| p[0].slot != p[1].slot));
            assert_eq!(s.steps[0].slot, Slot::X);
        }
    }

    #[test]
    fn exponent_sums_match_first_order_betas() {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        // linear coefficients: point-value formulas integrate exactly too
        let w = Window::new(1.0, 0.2).unwrap();
        let b = beta_set(&lz(), &w, 2).unwrap();
        for s in all(&lz(), &w) {
            assert!(close(s.slot_sum(Slot::X), b.b1) && close(s.slot_sum(Slot::Y), b.b2), "{}", s.formula);
        }
        // nonlinear coefficients: exact for the integral-based formulas only
        let g = generic();
        let w = Window::new(0.9, 0.2).unwrap();
        let b = beta_set(&g, &w, 2).unwrap();
        for s in all(&g, &w) {
            let exact = close(s.slot_sum(Slot::X), b.b1) && close(s.slot_sum(Slot::Y), b.b2);
            match s.formula {
                FormulaId::Midpoint | FormulaId::Suzuki4 => {
                    assert!(!exact);
                    assert!((s.slot_sum(Slot::Y) - b.b2).abs() < 0.1 * w.dt.powi(3), "{}", s.formula);
                }
                _ => assert!(exact, "{}", s.formula),
            }
        }
    }

    #[test]
    fn midpoint_examples() {
        let s = midpoint(&constants(1.0, 1.0), &Window::new(0.0, 0.2).unwrap());
        assert_eq!(s.steps, vec![Step::x(0.1), Step::y(0.2), Step::x(0.1)]);
        let g = TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::identity(), ScalarFn::constant(1.0)).unwrap();
        let s = midpoint(&g, &Window::new(0.0, 0.2).unwrap());
        assert_eq!(s.len(), 3);
        assert_eq!(s.steps[0].coeff, 0.0);
    }

    #[test]
    fn hdr_examples() {
        let w = Window::new(0.4, 0.3).unwrap();
        let a = hdr(&constants(1.0, 1.0), &w).unwrap();
        let b = midpoint(&constants(1.0, 1.0), &w);
        for (p, q) in a.steps.iter().zip(&b.steps) {
            assert!((p.coeff - q.coeff).abs() < 1e-15);
        }
        // x(t) = t about μ = 0: halves integrate to ±δt²/8
        let g = TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::identity(), ScalarFn::constant(1.0)).unwrap();
        let dt = 0.2;
        let s = hdr(&g, &Window::new(0.0, dt).unwrap()).unwrap();
        assert!((s.steps[0].coeff - dt * dt / 8.0).abs() < 1e-16);
        assert!((s.steps[2].coeff + dt * dt / 8.0).abs() < 1e-16);
    }

    #[test]
    fn mft_u_for_landau_zener() {
        let w = Window::new(1.0, 0.1).unwrap();
        let s = mft(&lz(), &w).unwrap();
        let sc = frs_s();
        let u = s.steps[0].coeff - sc * 0.1 / 2.0;
        assert!((u - (-8.333333333333333e-4)).abs() < 1e-12 * 8.3e-4, "u={u}");
        assert!((s.steps[6].coeff - (sc * 0.1 / 2.0 - u)).abs() < 1e-15);
        assert!((u_ratio(&lz(), &w).unwrap() - 8.333333333333333e-4 / 0.01).abs() < 1e-9);
    }

    #[test]
    fn degenerate_beta2_reports_remedies() {
        let w = Window::new(0.0, 0.1).unwrap();
        let err = mft(&lz(), &w).unwrap_err();
        assert!(matches!(err, FormulaError::DegenerateBeta2 { beta1_regular: true, .. }), "{err}");
        assert_eq!(err.remedies(), &DEGENERATE_REMEDIES);
        assert_eq!(err.code(), "degenerate_beta2");
        let cfg = FormulaConfig { degenerate: DegeneratePolicy::ZeroU, ..Default::default() };
        let s = nine_exp_with(&lz(), &w, &cfg).unwrap();
        let plain = SplittingCoeffs::omelyan().steps(0.1, 0.0);
        for (p, q) in s.steps.iter().zip(&plain) {
            assert!((p.coeff - q.coeff).abs() < 1e-15);
        }
    }

    #[test]
    fn time_independent_reductions() {
        let g = constants(0.7, -1.3);
        let dt = 0.25;
        let w = Window::new(2.0, dt).unwrap();
        let (b1, b2) = (0.7 * dt, -1.3 * dt);
        for (sched, split) in [
            (mft(&g, &w).unwrap(), SplittingCoeffs::forest_ruth()),
            (nine_exp(&g, &w).unwrap(), SplittingCoeffs::omelyan()),
            (mst(&g, &w).unwrap().0, SplittingCoeffs::yoshida6()),
        ] {
            let expect = split.steps(b1, b2);
            assert_eq!(sched.steps.len(), expect.len());
            for (p, q) in sched.steps.iter().zip(&expect) {
                assert_eq!(p.slot, q.slot);
                assert!((p.coeff - q.coeff).abs() < 1e-13, "{:?}", split.name);
            }
        }
        let (_, d) = mst(&g, &w).unwrap();
        for v in [d.u1, d.u2, d.u3, d.u4, d.w, d.z] {
            assert!(v.abs() <= 1e-12 * dt * dt, "{d:?}");
        }
    }

    #[test]
    fn splitting_consistency_sums() {
        for s in [SplittingCoeffs::forest_ruth(), SplittingCoeffs::omelyan(), SplittingCoeffs::yoshida6()] {
            assert!((s.a.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{:?}", s.name);
            assert!((s.b.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{:?}", s.name);
        }
        let o = SplittingCoeffs::omelyan();
        assert!((2.0 * o.a[0] + 2.0 * o.a[1] + o.a[2] - 1.0).abs() < 1e-14);
        assert!((2.0 * o.b[0] + 2.0 * o.b[1] - 1.0).abs() < 1e-14);
    }

    fn local_slope(id: FormulaId, g: &TwoTermGenerator) -> f64 {
        let a = &g.z1().add_scaled(C64::new(1.0, 0.0), g.z2());
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&dt| {
                let s = build(id, g, &Window::new(0.0, dt).unwrap()).unwrap();
                let exact = expm(&a.scale_real(dt)).unwrap();
                (dt, frobenius_norm(&(&evaluate(&s, g).unwrap() - &exact)))
            })
            .collect();
        crate::reference::order_fit_with_floor(&pts, 1e-300).unwrap().slope
    }

    #[test]
    fn constant_coefficient_orders_guard_transcription() {
        let g = constants(1.0, 1.0);
        for (id, want) in [(FormulaId::Midpoint, 3.0), (FormulaId::Mft, 5.0), (FormulaId::NineExp, 5.0), (FormulaId::Suzuki4, 5.0)] {
            let s = local_slope(id, &g);
            assert!((s - want).abs() < 0.2, "{id}: {s}");
        }
        let s = local_slope(FormulaId::Mst, &g);
        assert!((s - 7.0).abs() < 0.3, "mst: {s}");
    }

    #[test]
    fn symmetric_formulas_invert_under_reversal() {
        let g = generic();
        let w = Window::new(0.8, 0.3).unwrap();
        for id in FormulaId::ALL.into_iter().filter(|f| f.is_symmetric()) {
            let fwd = evaluate(&build(id, &g, &w).unwrap(), &g).unwrap();
            let back = evaluate(&build(id, &g, &w.reversed()).unwrap(), &g).unwrap();
            let defect = frobenius_norm(&(&(&back * &fwd) - &CMatrix::identity(2)));
            assert!(defect < 1e-11, "{id}: {defect}");
        }
    }

    #[test]
    fn evaluate_basics() {
        let g = lz();
        let empty = ExponentSchedule { formula: FormulaId::Midpoint, window: Window::new(0.0, 1.0).unwrap(), steps: vec![] };
        assert_eq!(evaluate(&empty, &g).unwrap(), CMatrix::identity(2));
        for s in all(&g, &Window::new(1.0, 0.3).unwrap()) {
            let t = evaluate(&s, &g).unwrap();
            assert!(frobenius_norm(&(&(&t.adjoint() * &t) - &CMatrix::identity(2))) <= 1e-12);
        }
    }

    #[test]
    fn merge_examples() {
        let merged = merge_adjacent(&[Step::x(0.1), Step::x(0.2), Step::y(0.3)]);
        assert_eq!(merged.len(), 2);
        assert!((merged[0].coeff - 0.3).abs() < 1e-16);
        assert_eq!(merge_adjacent(&merged), merged);
        assert_eq!(merge_adjacent(&[Step::x(0.0), Step::y(0.0)]).len(), 2);
    }

    #[test]
    fn suzuki_constant_values() {
        let p = suzuki_w();
        let s = suzuki4(&constants(1.0, 1.0), &Window::new(0.0, 1.0).unwrap());
        let expect = [p / 2.0, p, p, p, (1.0 - 3.0 * p) / 2.0, 1.0 - 4.0 * p, (1.0 - 3.0 * p) / 2.0, p, p, p, p / 2.0];
        for (st, e) in s.steps.iter().zip(expect) {
            assert!((st.coeff - e).abs() < 1e-15);
        }
    }

    #[test]
    fn json_roundtrip_and_names() {
        let s = mst(&generic(), &Window::new(0.5, 0.2).unwrap()).unwrap().0;
        let back = ExponentSchedule::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["formula"], "mst");
        assert_eq!(v["steps"][0]["slot"], "X");
        for id in FormulaId::ALL {
            assert_eq!(id.as_str().parse::<FormulaId>().unwrap(), id);
        }
        assert_eq!("9exp".parse::<FormulaId>().unwrap(), FormulaId::NineExp);
        assert!("bogus".parse::<FormulaId>().is_err());
        assert!(ExponentSchedule::from_json("{\"formula\":\"mft\"}").is_err());
    }

    #[test]
    fn mst_decoration_is_antisymmetric_in_u() {
        let (s, d) = mst(&generic(), &Window::new(0.6, 0.2).unwrap()).unwrap();
        assert!(d.max_u() > 0.0);
        let y = SplittingCoeffs::yoshida6().steps(1.0, 1.0);
        let b = beta_set(&generic(), &Window::new(0.6, 0.2).unwrap(), 2).unwrap();
        let dev: Vec<f64> = s
            .steps
            .iter()
            .zip(&y)
            .map(|(st, base)| st.coeff - base.coeff * if st.slot == Slot::X { b.b1 } else { b.b2 })
            .collect();
        for k in 0..7 {
            let (l, r) = (dev[k], dev[14 - k]);
            match k {
                0..=2 => assert!((l + r).abs() < 1e-15, "{k}"),
                4..=6 => assert!((l - r).abs() < 1e-15, "{k}"),
                _ => assert!((l + r + 2.0 * d.z).abs() < 1e-15),
            }
        }
    }

    #[test]
    fn mst_rejects_irregular_beta() {
        let g = TwoTermGenerator::from_hamiltonian(&sx(), &sz(), ScalarFn::identity(), ScalarFn::constant(1.0)).unwrap();
        let err = mst(&g, &Window::new(0.0, 0.1).unwrap()).unwrap_err();
        assert!(matches!(err, FormulaError::IrregularBeta { name: "beta1", .. }), "{err}");
    }

    #[test]
    fn small_solver_reports_singularity() {
        assert!(solve_small([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0]).is_none_or(|(_, c)| c > 1e12));
        let (x, c) = solve_small([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]).unwrap();
        assert_eq!(x, [1.0, 2.0]);
        assert!(c < 2.0);
    }
}

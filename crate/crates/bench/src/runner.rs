//! Experiment runners. Sweep points run in parallel; rows come out in grid order.

use rayon::prelude::*;
use tdtrotter::formulas::{self, FormulaConfig};
use tdtrotter::models::{gate_count, ising_chain, landau_zener, Assignment};
use tdtrotter::reference::{composed_evolution_with, error_norms, exact_propagator_with, order_fit, OrderFit, ReferenceError};
use tdtrotter::{CMatrix, ErrorRecord, FormulaId, OracleConfig, TwoTermGenerator, Window};

use crate::config::{Experiment, SweepConfig};
use crate::report::{Check, DataRow, FitAxis, FitRow, Report, Row};
use crate::BenchError;

/// Fits only use points whose error is at least this multiple of the oracle tolerance.
pub const ORACLE_MARGIN: f64 = 100.0;
/// Allowed relative spread of `ε_S/ε_F` around its per-formula mean.
pub const NORM_RATIO_SPREAD: f64 = 0.2;
/// Accepted range of the large-μ MFT error ratio between assignments.
pub const MU_ASSIGNMENT_RATIO: (f64, f64) = (5.0, 20.0);
/// Relative slack on region boundaries, so log-grid rounding does not drop endpoints.
const BOUNDARY_SLACK: f64 = 1e-9;
/// The assignment whose `β₂ = μ δt` vanishes as `μ → 0`.
pub const WRONG_ASSIGNMENT: Assignment = Assignment::TermAToX;

/// Expected local (single-window) order and its tolerance.
pub fn local_slope_target(id: FormulaId) -> (f64, f64) {
    match id {
        FormulaId::Midpoint | FormulaId::HdR => (3.0, 0.15),
        FormulaId::Mft | FormulaId::NineExp | FormulaId::Suzuki4 => (5.0, 0.2),
        FormulaId::Mst => (7.0, 0.3),
    }
}

/// Expected slope of global error against gate count, and its tolerance.
pub fn global_slope_target(id: FormulaId) -> (f64, f64) {
    let (local, tol) = local_slope_target(id);
    (-(local - 1.0), tol)
}

/// Minimum `r²` for a local-order fit.
pub const MIN_R2: f64 = 0.999;

pub fn run(cfg: &SweepConfig) -> Result<Report, BenchError> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        Experiment::DtSweep => run_dt_sweep(cfg),
        Experiment::MuSweep => run_mu_sweep(cfg),
        Experiment::IsingBench => run_ising_bench(cfg),
        Experiment::NormRatio => run_norm_ratio(cfg),
    })
}

fn oracle_cfg(cfg: &SweepConfig) -> OracleConfig {
    OracleConfig::with_tol(cfg.oracle_tol)
}

/// Error of one single-window formula against a precomputed oracle.
fn window_row(
    gen: &TwoTermGenerator,
    assignment: Assignment,
    id: FormulaId,
    w: &Window,
    exact: &Result<CMatrix, ReferenceError>,
) -> DataRow {
    let mut record = ErrorRecord {
        formula: id,
        mu: w.mu,
        dt: w.dt,
        n_steps: 1,
        n_exponentials: id.n_exponentials(),
        n_gates: 0,
        eps_frobenius: f64::NAN,
        eps_spectral: f64::NAN,
    };
    let status = match exact {
        Err(e) => e.code().to_string(),
        Ok(exact) => match formulas::build_with(id, gen, w, &FormulaConfig::default()).and_then(|s| formulas::evaluate(&s, gen)) {
            Ok(approx) => {
                let e = error_norms(exact, &approx);
                record.eps_frobenius = e.frobenius;
                record.eps_spectral = e.spectral;
                "ok".to_string()
            }
            Err(e) => e.code().to_string(),
        },
    };
    DataRow { assignment: Some(assignment), record, n_gates_per_l: None, ratio: None, status }
}

/// Rows for every `(assignment, formula, window)`, grouped by assignment then formula.
fn window_rows(cfg: &SweepConfig, windows: &[Window]) -> Vec<Vec<Vec<DataRow>>> {
    let gens: Vec<(Assignment, TwoTermGenerator)> = cfg.assignments.iter().map(|&a| (a, landau_zener(a))).collect();
    let oracle = oracle_cfg(cfg);
    gens.par_iter()
        .map(|(a, gen)| {
            let exact: Vec<_> = windows.par_iter().map(|w| exact_propagator_with(gen, w.start(), w.end(), &oracle)).collect();
            cfg.formulas
                .par_iter()
                .map(|&id| windows.par_iter().zip(&exact).map(|(w, ex)| window_row(gen, *a, id, w, ex)).collect())
                .collect()
        })
        .collect()
}

/// Log-log fit of `eps_frobenius` against `x`, keeping points clear of the oracle floor.
fn fit_rows(rows: &[DataRow], x: impl Fn(&DataRow) -> f64, oracle_tol: f64) -> Result<OrderFit, ReferenceError> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.ok() && r.record.eps_frobenius >= ORACLE_MARGIN * oracle_tol).map(|r| (x(r), r.record.eps_frobenius)).collect();
    order_fit(&pts)
}

fn slope_check(name: String, fit: &FitRow, target: f64, tol: f64, min_r2: Option<f64>) -> Check {
    match &fit.fit {
        Ok(f) => {
            let slope_ok = (f.slope - target).abs() <= tol;
            let r2_ok = min_r2.is_none_or(|m| f.r2 >= m);
            Check::new(name, slope_ok && r2_ok, format!("slope {:.4} (target {target} ± {tol}), r² {:.6}", f.slope, f.r2))
        }
        Err(code) => Check::new(name, false, format!("fit failed: {code}")),
    }
}

pub fn run_dt_sweep(cfg: &SweepConfig) -> Report {
    let windows: Vec<Window> = cfg.dt_grid.iter().map(|&dt| Window { mu: cfg.mu, dt }).collect();
    let grouped = window_rows(cfg, &windows);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (a, per_formula) in cfg.assignments.iter().zip(grouped) {
        for (&id, data) in cfg.formulas.iter().zip(per_formula) {
            let fit = FitRow::new(Some(*a), id, FitAxis::Dt, fit_rows(&data, |r| r.record.dt, cfg.oracle_tol));
            let (target, tol) = local_slope_target(id);
            checks.push(slope_check(format!("local_order[{id},{a}]"), &fit, target, tol, Some(MIN_R2)));
            rows.extend(data.into_iter().map(Row::Data));
            rows.push(Row::Fit(fit));
        }
    }
    Report { experiment: Experiment::DtSweep, rows, checks: if cfg.check { checks } else { Vec::new() } }
}

/// `δt = 0.1 / ‖H(μ)‖` for the Landau–Zener Hamiltonian.
pub fn mu_sweep_dt(mu: f64) -> f64 {
    0.1 / (1.0 + mu * mu).sqrt()
}

pub fn run_mu_sweep(cfg: &SweepConfig) -> Report {
    let windows: Vec<Window> = cfg.mu_grid.iter().map(|&mu| Window { mu, dt: mu_sweep_dt(mu) }).collect();
    let grouped = window_rows(cfg, &windows);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut tail_eps: Vec<(Assignment, FormulaId, Vec<(f64, f64)>)> = Vec::new();
    for (&a, per_formula) in cfg.assignments.iter().zip(grouped) {
        for (&id, data) in cfg.formulas.iter().zip(per_formula) {
            let tail: Vec<DataRow> = data.iter().filter(|r| r.record.mu >= cfg.mu_tail_min * (1.0 - BOUNDARY_SLACK)).cloned().collect();
            let fit = FitRow::new(Some(a), id, FitAxis::Mu, fit_rows(&tail, |r| r.record.mu, cfg.oracle_tol));
            if id == FormulaId::Mft {
                checks.push(slope_check(format!("large_mu_slope[{id},{a}]"), &fit, -1.0, 0.15, None));
            }
            if a == WRONG_ASSIGNMENT && matches!(id, FormulaId::Mft | FormulaId::NineExp) {
                checks.push(small_mu_divergence(&data, cfg.mu_small_max, id, a));
            }
            tail_eps.push((a, id, tail.iter().filter(|r| r.ok()).map(|r| (r.record.mu, r.record.eps_frobenius)).collect()));
            rows.extend(data.into_iter().map(Row::Data));
            rows.push(Row::Fit(fit));
        }
    }
    let mft = |a: Assignment| tail_eps.iter().find(|(b, id, _)| *b == a && *id == FormulaId::Mft).map(|t| &t.2);
    if let (Some(wrong), Some(right)) = (mft(WRONG_ASSIGNMENT), mft(WRONG_ASSIGNMENT.other())) {
        checks.push(assignment_ratio_check(wrong, right));
    }
    Report { experiment: Experiment::MuSweep, rows, checks: if cfg.check { checks } else { Vec::new() } }
}

/// Error must grow strictly as μ decreases through the small-μ region.
fn small_mu_divergence(data: &[DataRow], mu_max: f64, id: FormulaId, a: Assignment) -> Check {
    let name = format!("small_mu_divergence[{id},{a}]");
    let pts: Vec<&DataRow> = data.iter().filter(|r| r.record.mu <= mu_max * (1.0 + BOUNDARY_SLACK)).collect();
    if pts.len() < 2 || pts.iter().any(|r| !r.ok()) {
        return Check::new(name, false, format!("{} usable points below μ = {mu_max}", pts.iter().filter(|r| r.ok()).count()));
    }
    let monotone = pts.windows(2).all(|w| w[0].record.eps_frobenius > w[1].record.eps_frobenius);
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    Check::new(
        name,
        monotone,
        format!("ε = {:.3e} at μ = {:.3e}, {:.3e} at μ = {:.3e}", lo.record.eps_frobenius, lo.record.mu, hi.record.eps_frobenius, hi.record.mu),
    )
}

/// Ratio of the two MFT assignment errors, geometric mean over the large-μ tail.
fn assignment_ratio_check(wrong: &[(f64, f64)], right: &[(f64, f64)]) -> Check {
    let name = "large_mu_assignment_ratio[mft]";
    let ratios: Vec<f64> = wrong
        .iter()
        .filter_map(|&(mu, e)| right.iter().find(|p| p.0 == mu).map(|&(_, r)| if e > r { e / r } else { r / e }))
        .collect();
    if ratios.is_empty() {
        return Check::new(name, false, "no matched tail points");
    }
    let gmean = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let (lo, hi) = MU_ASSIGNMENT_RATIO;
    Check::new(name, (lo..=hi).contains(&gmean), format!("ratio {gmean:.3} over {} points (range [{lo}, {hi}])", ratios.len()))
}

pub fn run_norm_ratio(cfg: &SweepConfig) -> Report {
    let windows: Vec<Window> = cfg.dt_grid.iter().map(|&dt| Window { mu: cfg.mu, dt }).collect();
    let grouped = window_rows(cfg, &windows);
    let mut rows = Vec::new();
    let mut per_formula: Vec<(FormulaId, Vec<f64>, bool)> = cfg.formulas.iter().map(|&id| (id, Vec::new(), true)).collect();
    for groups in grouped {
        for (fi, data) in groups.into_iter().enumerate() {
            for mut row in data {
                if row.ok() && row.record.eps_frobenius > 0.0 {
                    let ratio = row.record.eps_spectral / row.record.eps_frobenius;
                    row.ratio = Some(ratio);
                    per_formula[fi].1.push(ratio);
                } else {
                    per_formula[fi].2 = false;
                }
                rows.push(Row::Data(row));
            }
        }
    }
    let mut checks = Vec::new();
    for (id, ratios, complete) in per_formula {
        checks.push(norm_ratio_check(id, &ratios, complete));
    }
    Report { experiment: Experiment::NormRatio, rows, checks: if cfg.check { checks } else { Vec::new() } }
}

fn norm_ratio_check(id: FormulaId, ratios: &[f64], complete: bool) -> Check {
    let name = format!("norm_ratio[{id}]");
    if !complete || ratios.is_empty() {
        return Check::new(name, false, "some points failed");
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (min, max) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let spread = ((max - mean) / mean).max((mean - min) / mean);
    let pass = spread <= NORM_RATIO_SPREAD && max <= 1.0 + 1e-12;
    Check::new(name, pass, format!("ε_S/ε_F in [{min:.4}, {max:.4}], mean {mean:.4}, spread ±{:.1}%", 100.0 * spread))
}

pub fn run_ising_bench(cfg: &SweepConfig) -> Report {
    let p = cfg.ising;
    let gen = ising_chain(&p).expect("validated parameters");
    let points: Vec<(FormulaId, usize)> = cfg.formulas.iter().flat_map(|&id| cfg.n_grid.iter().map(move |&n| (id, n))).collect();
    let (exact, evolutions) = rayon::join(
        || exact_propagator_with(&gen, 0.0, cfg.t_final, &oracle_cfg(cfg)),
        || {
            points
                .par_iter()
                .map(|&(id, n)| composed_evolution_with(&gen, id, 0.0, cfg.t_final, n, &FormulaConfig::default()))
                .collect::<Vec<_>>()
        },
    );
    let data: Vec<DataRow> = points
        .iter()
        .zip(evolutions)
        .map(|(&(id, n), approx)| {
            let n_gates = gate_count(id, p.l, n);
            let mut record = ErrorRecord {
                formula: id,
                mu: 0.5 * cfg.t_final,
                dt: cfg.t_final / n as f64,
                n_steps: n,
                n_exponentials: id.n_exponentials() * n,
                n_gates,
                eps_frobenius: f64::NAN,
                eps_spectral: f64::NAN,
            };
            let status = match (&exact, approx) {
                (Err(e), _) => e.code().to_string(),
                (_, Err(e)) => e.code().to_string(),
                (Ok(exact), Ok(approx)) => {
                    let e = error_norms(exact, &approx);
                    record.eps_frobenius = e.frobenius;
                    record.eps_spectral = e.spectral;
                    "ok".to_string()
                }
            };
            DataRow { assignment: None, record, n_gates_per_l: Some(n_gates / p.l), ratio: None, status }
        })
        .collect();

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut curves: Vec<(FormulaId, Vec<(f64, f64)>)> = Vec::new();
    for (&id, chunk) in cfg.formulas.iter().zip(data.chunks(cfg.n_grid.len())) {
        let asymptotic: Vec<DataRow> = chunk.iter().filter(|r| r.record.n_steps >= cfg.fit_min_n).cloned().collect();
        let fit = FitRow::new(None, id, FitAxis::Gates, fit_rows(&asymptotic, |r| r.record.n_gates as f64, cfg.oracle_tol));
        let (target, tol) = global_slope_target(id);
        checks.push(slope_check(format!("global_order[{id}]"), &fit, target, tol, None));
        curves.push((id, asymptotic.iter().filter(|r| r.ok()).map(|r| (r.record.n_gates as f64, r.record.eps_frobenius)).collect()));
        rows.extend(chunk.iter().cloned().map(Row::Data));
        rows.push(Row::Fit(fit));
    }
    let curve = |id: FormulaId| curves.iter().find(|c| c.0 == id).map(|c| c.1.as_slice());
    if let (Some(nine), Some(suzuki)) = (curve(FormulaId::NineExp), curve(FormulaId::Suzuki4)) {
        checks.push(ordering_check("ordering[nine-exp<suzuki4]", nine, suzuki));
    }
    if let (Some(mft), Some(suzuki)) = (curve(FormulaId::Mft), curve(FormulaId::Suzuki4)) {
        checks.push(ordering_check("ordering[suzuki4<mft]", suzuki, mft));
    }
    Report { experiment: Experiment::IsingBench, rows, checks: if cfg.check { checks } else { Vec::new() } }
}

/// Piecewise-linear interpolation of `log ε` in `log x`; `None` outside the curve.
pub fn interpolate_loglog(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let lx = x.ln();
    curve.windows(2).find_map(|w| {
        let (x0, x1) = (w[0].0.ln(), w[1].0.ln());
        if lx < x0.min(x1) || lx > x0.max(x1) {
            return None;
        }
        let s = if x1 == x0 { 0.0 } else { (lx - x0) / (x1 - x0) };
        Some((w[0].1.ln() + s * (w[1].1.ln() - w[0].1.ln())).exp())
    })
}

/// `lower` lies strictly below `upper` at every gate count of either curve
/// inside their common range.
pub fn ordering_check(name: &str, lower: &[(f64, f64)], upper: &[(f64, f64)]) -> Check {
    let mut matched = 0;
    let mut worst = 0.0f64;
    for &(x, _) in lower.iter().chain(upper) {
        if let (Some(a), Some(b)) = (interpolate_loglog(lower, x), interpolate_loglog(upper, x)) {
            matched += 1;
            worst = worst.max(a / b);
        }
    }
    let pass = matched > 0 && worst < 1.0;
    Check::new(name, pass, format!("{matched} matched gate counts, worst ratio {worst:.3}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_interpolation_is_exact_on_power_laws() {
        let curve: Vec<(f64, f64)> = [10.0, 20.0, 50.0].iter().map(|&x: &f64| (x, 3.0 * x.powi(-4))).collect();
        let y = interpolate_loglog(&curve, 30.0).unwrap();
        assert!((y / (3.0 * 30f64.powi(-4)) - 1.0).abs() < 1e-12);
        assert!(interpolate_loglog(&curve, 5.0).is_none());
        assert!(interpolate_loglog(&curve, 60.0).is_none());
    }

    #[test]
    fn ordering_uses_common_range_only() {
        let low: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&x: &f64| (x, x.powi(-2))).collect();
        let high: Vec<(f64, f64)> = [15.0, 30.0, 80.0].iter().map(|&x: &f64| (x, 2.0 * x.powi(-2))).collect();
        let c = ordering_check("t", &low, &high);
        assert!(c.pass, "{}", c.detail);
        assert!(!ordering_check("t", &high, &low).pass);
        assert!(!ordering_check("t", &low, &[(100.0, 1.0), (200.0, 0.5)]).pass);
    }

    #[test]
    fn slope_targets() {
        assert_eq!(global_slope_target(FormulaId::Midpoint), (-2.0, 0.15));
        assert_eq!(global_slope_target(FormulaId::Suzuki4), (-4.0, 0.2));
        assert_eq!(local_slope_target(FormulaId::Mst), (7.0, 0.3));
    }

    #[test]
    fn mu_sweep_step_matches_hamiltonian_norm() {
        assert!((mu_sweep_dt(0.0) - 0.1).abs() < 1e-16);
        assert!((mu_sweep_dt(3f64.sqrt()) - 0.05).abs() < 1e-15);
    }
}

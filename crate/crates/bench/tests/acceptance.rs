//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use tdtrotter::formulas::{self, build, evaluate, merge_adjacent, suzuki4, u_ratio, FormulaConfig, SplittingCoeffs};
use tdtrotter::linalg::frobenius_norm;
use tdtrotter::magnus::beta_set;
use tdtrotter::models::{
    gate_count, gate_program_matrix, ising_chain, landau_zener, read_gate_program, sigma_x, sigma_z, Assignment,
};
use tdtrotter::reference::{composed_evolution, fine_mst_propagator, order_fit, runge_kutta_propagator};
use tdtrotter::{CMatrix, FormulaId, IsingParams, ScalarFn, Slot, TwoTermGenerator, Window};
use tdtrotter_bench::config::{log_grid, Experiment, SweepConfig};
use tdtrotter_bench::ops::export_gates;
use tdtrotter_bench::report::{DataRow, Report};
use tdtrotter_bench::run;
use tdtrotter_bench::runner::ordering_check;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Report) -> Result<Report, String> {
    let start = Instant::now();
    let report = f();
    let took = start.elapsed();
    ensure(took < limit, || format!("runtime {took:.1?} exceeds {limit:?}"))?;
    Ok(report)
}

fn sweep(experiment: Experiment, edit: impl FnOnce(&mut SweepConfig)) -> Report {
    let mut cfg = SweepConfig::defaults(experiment);
    edit(&mut cfg);
    run(&cfg).expect("valid configuration")
}

fn rows_of(report: &Report, id: FormulaId, a: Option<Assignment>) -> Vec<&DataRow> {
    report.data().filter(|r| r.record.formula == id && r.assignment == a).collect()
}

fn slope_of(rows: &[&DataRow], x: impl Fn(&DataRow) -> f64) -> Result<(f64, f64), String> {
    ensure(rows.iter().all(|r| r.ok()), || format!("failed rows: {:?}", rows.iter().filter(|r| !r.ok()).map(|r| &r.status).collect::<Vec<_>>()))?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (x(r), r.record.eps_frobenius)).collect();
    let fit = order_fit(&pts).map_err(|e| e.to_string())?;
    Ok((fit.slope, fit.r2))
}

fn local_order() -> Outcome {
    let report = timed(Duration::from_secs(10), || sweep(Experiment::DtSweep, |_| {}))?;
    let mut worst = 0.0f64;
    for a in Assignment::ALL {
        for (id, want, tol) in [(FormulaId::Midpoint, 3.0, 0.15), (FormulaId::Mft, 5.0, 0.2), (FormulaId::NineExp, 5.0, 0.2), (FormulaId::Suzuki4, 5.0, 0.2)] {
            let (s, r2) = slope_of(&rows_of(&report, id, Some(a)), |r| r.record.dt)?;
            ensure((s - want).abs() <= tol && r2 >= 0.999, || format!("{id} {a}: slope {s:.4}, r² {r2:.6}"))?;
            worst = worst.max((s - want).abs());
        }
    }
    Ok(format!("8 fits, max slope deviation {worst:.3}"))
}

fn mst_order() -> Outcome {
    let report = timed(Duration::from_secs(10), || {
        sweep(Experiment::DtSweep, |c| {
            c.formulas = vec![FormulaId::Mst];
            c.dt_grid = log_grid(0.05, 0.4, 8);
        })
    })?;
    let mut slopes = Vec::new();
    for a in Assignment::ALL {
        let (s, _) = slope_of(&rows_of(&report, FormulaId::Mst, Some(a)), |r| r.record.dt)?;
        ensure((s - 7.0).abs() <= 0.3, || format!("{a}: slope {s:.4}"))?;
        slopes.push(format!("{a} {s:.3}"));
    }
    Ok(format!("slopes {}", slopes.join(", ")))
}

fn time_independent_reduction() -> Outcome {
    let mut checked = 0;
    for &(x, y) in &[(1.0, 1.0), (0.7, -1.3), (-2.0, 0.4)] {
        let g = TwoTermGenerator::from_hamiltonian(&sigma_x(), &sigma_z(), ScalarFn::constant(x), ScalarFn::constant(y)).unwrap();
        for &(mu, dt) in &[(0.0, 0.1), (2.0, 0.25), (-1.0, 0.4)] {
            let w = Window::new(mu, dt).unwrap();
            let (b1, b2) = (x * dt, y * dt);
            let (mst, deco) = formulas::mst(&g, &w).map_err(|e| e.to_string())?;
            let pairs = [
                (formulas::mft(&g, &w).map_err(|e| e.to_string())?, SplittingCoeffs::forest_ruth()),
                (formulas::nine_exp(&g, &w).map_err(|e| e.to_string())?, SplittingCoeffs::omelyan()),
                (mst, SplittingCoeffs::yoshida6()),
            ];
            for (sched, split) in pairs {
                let expect = split.steps(b1, b2);
                ensure(sched.steps.len() == expect.len(), || format!("{}: {} vs {} steps", sched.formula, sched.steps.len(), expect.len()))?;
                for (p, q) in sched.steps.iter().zip(&expect) {
                    ensure(p.slot == q.slot && (p.coeff - q.coeff).abs() <= 1e-13, || {
                        format!("{} at x={x}, y={y}, dt={dt}: {} vs {}", sched.formula, p.coeff, q.coeff)
                    })?;
                }
                checked += 1;
            }
            let u = u_ratio(&g, &w).map_err(|e| e.to_string())?;
            ensure(u <= 1e-12, || format!("|u|/δt² = {u:e}"))?;
            let max = [deco.u1, deco.u2, deco.u3, deco.u4, deco.w, deco.z].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ensure(max <= 1e-12 * dt * dt, || format!("MST decoration {max:e} at dt={dt}"))?;
        }
    }
    Ok(format!("{checked} schedules match the splitting coefficients"))
}

fn mu_sweep() -> Outcome {
    let report = timed(Duration::from_secs(60), || sweep(Experiment::MuSweep, |_| {}))?;
    let tail = |a: Assignment| -> Vec<&DataRow> { rows_of(&report, FormulaId::Mft, Some(a)).into_iter().filter(|r| r.record.mu >= 30.0 * (1.0 - 1e-9)).collect() };
    let mut slopes = Vec::new();
    for a in Assignment::ALL {
        let (s, _) = slope_of(&tail(a), |r| r.record.mu)?;
        ensure((s + 1.0).abs() <= 0.15, || format!("MFT {a} large-μ slope {s:.4}"))?;
        slopes.push(s);
    }
    let wrong = Assignment::TermAToX;
    for id in [FormulaId::Mft, FormulaId::NineExp] {
        let small: Vec<&DataRow> = rows_of(&report, id, Some(wrong)).into_iter().filter(|r| r.record.mu <= 0.1 * (1.0 + 1e-9)).collect();
        ensure(small.len() >= 4 && small.iter().all(|r| r.ok()), || format!("{id}: {} usable small-μ points", small.len()))?;
        ensure(small.windows(2).all(|w| w[0].record.eps_frobenius > w[1].record.eps_frobenius), || format!("{id} error not monotone as μ → 0"))?;
    }
    let (tw, tr) = (tail(wrong), tail(wrong.other()));
    let logs: Vec<f64> = tw.iter().zip(&tr).map(|(p, q)| (p.record.eps_frobenius / q.record.eps_frobenius).abs().ln().abs()).collect();
    let ratio = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    ensure((5.0..=20.0).contains(&ratio), || format!("assignment ratio {ratio:.3}"))?;
    Ok(format!("tail slopes {:.3}/{:.3}, assignment ratio {ratio:.2}", slopes[0], slopes[1]))
}

fn ising_benchmark() -> Outcome {
    let report = timed(Duration::from_secs(300), || sweep(Experiment::IsingBench, |_| {}))?;
    let asymptotic = |id: FormulaId| -> Vec<&DataRow> { rows_of(&report, id, None).into_iter().filter(|r| r.record.n_steps >= 20).collect() };
    let mut slopes = Vec::new();
    for (id, want, tol) in [(FormulaId::Midpoint, -2.0, 0.15), (FormulaId::Mft, -4.0, 0.2), (FormulaId::NineExp, -4.0, 0.2), (FormulaId::Suzuki4, -4.0, 0.2)] {
        let (s, _) = slope_of(&asymptotic(id), |r| r.record.n_gates as f64)?;
        ensure((s - want).abs() <= tol, || format!("{id}: slope {s:.4}"))?;
        slopes.push(format!("{id} {s:.2}"));
    }
    let curve = |id: FormulaId| -> Vec<(f64, f64)> { asymptotic(id).iter().map(|r| (r.record.n_gates as f64, r.record.eps_frobenius)).collect() };
    for (name, lower, upper) in [("9-exp < Suzuki4", FormulaId::NineExp, FormulaId::Suzuki4), ("Suzuki4 < MFT", FormulaId::Suzuki4, FormulaId::Mft)] {
        let c = ordering_check(name, &curve(lower), &curve(upper));
        ensure(c.pass, || format!("{name}: {}", c.detail))?;
    }
    let l = IsingParams::benchmark().l;
    for (id, per) in [(FormulaId::Midpoint, 5), (FormulaId::Mft, 10), (FormulaId::NineExp, 13), (FormulaId::Suzuki4, 15)] {
        for r in rows_of(&report, id, None) {
            let n = r.record.n_steps;
            ensure(gate_count(id, l, n) == per * l * n && r.record.n_gates == per * l * n, || format!("{id} N={n}: {} gates", r.record.n_gates))?;
        }
    }
    Ok(format!("slopes {}; orderings hold; gate counts 5/10/13/15·LN", slopes.join(", ")))
}

fn norm_robustness() -> Outcome {
    let report = sweep(Experiment::NormRatio, |_| {});
    let mut spreads = Vec::new();
    for id in report.data().map(|r| r.record.formula).collect::<std::collections::BTreeSet<_>>() {
        let rows: Vec<&DataRow> = report.data().filter(|r| r.record.formula == id).collect();
        ensure(rows.iter().all(|r| r.ok()), || format!("{id}: failed rows"))?;
        for r in &rows {
            ensure(r.record.eps_spectral <= r.record.eps_frobenius, || format!("{id}: ε_S > ε_F at δt={}", r.record.dt))?;
        }
        let ratios: Vec<f64> = rows.iter().map(|r| r.record.eps_spectral / r.record.eps_frobenius).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios.iter().map(|r| (r - mean).abs() / mean).fold(0.0, f64::max);
        ensure(spread <= 0.2, || format!("{id}: ratio spread ±{:.1}%", 100.0 * spread))?;
        spreads.push(spread);
    }
    Ok(format!("{} formulas, max ratio spread ±{:.2}%", spreads.len(), 100.0 * spreads.iter().fold(0.0f64, |m, &s| m.max(s))))
}

fn unitarity_defect(m: &CMatrix) -> f64 {
    frobenius_norm(&(&(&m.adjoint() * m) - &CMatrix::identity(m.dim())))
}

fn invariant_suite() -> Outcome {
    let generic =
        TwoTermGenerator::from_hamiltonian(&sigma_x(), &sigma_z(), ScalarFn::new(|t| 1.0 + 0.5 * t.sin()), ScalarFn::new(|t| t.cos() + 0.3 * t))
            .unwrap();
    let lz: Vec<TwoTermGenerator> = Assignment::ALL.iter().map(|&a| landau_zener(a)).collect();

    for g in lz.iter().chain([&generic]) {
        for &(mu, dt) in &[(1.0, 0.3), (0.4, 0.1), (-0.7, 0.2)] {
            let w = Window::new(mu, dt).unwrap();
            for id in FormulaId::ALL.into_iter().filter(|f| f.is_symmetric()) {
                let fwd = evaluate(&build(id, g, &w).map_err(|e| e.to_string())?, g).unwrap();
                let back = evaluate(&build(id, g, &w.reversed()).map_err(|e| e.to_string())?, g).unwrap();
                let d = frobenius_norm(&(&(&back * &fwd) - &CMatrix::identity(2)));
                ensure(d <= 1e-11, || format!("time reversal {id}: {d:e}"))?;
            }
        }
    }

    let ising = ising_chain(&IsingParams::benchmark().with_sites(4).unwrap()).unwrap();
    for (g, t_f, n) in [(&lz[0], 3.0, 40), (&lz[1], 3.0, 40), (&generic, 2.0, 25), (&ising, std::f64::consts::PI, 30)] {
        for id in FormulaId::ALL {
            let m = composed_evolution(g, id, 0.0, t_f, n).map_err(|e| format!("{id}: {e}"))?;
            let d = unitarity_defect(&m);
            ensure(d <= 1e-10, || format!("unitarity {id}: {d:e}"))?;
        }
    }

    for g in &lz {
        for (t0, t1) in [(0.95, 1.05), (0.5, 1.5)] {
            let rk = runge_kutta_propagator(g, t0, t1, 1e-12).map_err(|e| e.to_string())?;
            let fine = fine_mst_propagator(g, t0, t1, 1 << 14).map_err(|e| e.to_string())?;
            let d = frobenius_norm(&(&rk - &fine));
            ensure(d <= 1e-11, || format!("dual oracle on [{t0}, {t1}]: {d:e}"))?;
        }
    }

    let dts = [0.2, 0.1, 0.05, 0.025];
    let fit = |f: &dyn Fn(f64) -> f64| order_fit(&dts.iter().map(|&dt| (dt, f(dt).abs())).collect::<Vec<_>>()).unwrap().slope;
    let betas = |dt: f64| beta_set(&generic, &Window::new(0.4, dt).unwrap(), 6).unwrap();
    for (name, want, s) in [
        ("β12", 3.0, fit(&|dt| betas(dt).b12.unwrap())),
        ("β112", 5.0, fit(&|dt| betas(dt).b112.unwrap())),
        ("β1112", 5.0, fit(&|dt| betas(dt).b1112.unwrap())),
    ] {
        ensure((s - want).abs() <= 0.1, || format!("{name} slope {s:.4}"))?;
    }

    for g in &lz {
        let w = Window::new(1.3, 0.2).unwrap();
        let b = beta_set(g, &w, 2).unwrap();
        for id in FormulaId::ALL {
            let s = build(id, g, &w).map_err(|e| e.to_string())?;
            let (ex, ey) = ((s.slot_sum(Slot::X) - b.b1).abs(), (s.slot_sum(Slot::Y) - b.b2).abs());
            ensure(ex <= 1e-12 * b.b1.abs() && ey <= 1e-12 * b.b2.abs(), || format!("exponent sums {id}: {ex:e}, {ey:e}"))?;
        }
    }

    let s = suzuki4(&generic, &Window::new(0.5, 0.2).unwrap());
    ensure(s.steps.len() == 11 && merge_adjacent(&s.steps).len() == 11, || format!("Suzuki4 has {} steps", s.steps.len()))?;

    let p = IsingParams::benchmark().with_sites(3).unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for id in FormulaId::ALL {
        let path = dir.path().join(format!("{id}.jsonl"));
        let mut file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
        export_gates(&mut file, id, &p, 4, 0.0, 1.5).map_err(|e| e.to_string())?;
        drop(file);
        let (_, gates) = read_gate_program(&std::fs::read_to_string(&path).unwrap()).map_err(|e| e.to_string())?;
        let replay = gate_program_matrix(&gates, 3).map_err(|e| e.to_string())?;
        let direct = composed_evolution(&ising_chain(&p).unwrap(), id, 0.0, 1.5, 4).map_err(|e| e.to_string())?;
        let d = frobenius_norm(&(&replay - &direct));
        ensure(d <= 1e-9, || format!("gate roundtrip {id}: {d:e}"))?;
    }
    Ok("reversal, unitarity, dual oracle, β slopes, exponent sums, Suzuki merge, gate roundtrip".into())
}

fn beta12_closed_form() -> Outcome {
    let g = landau_zener(Assignment::TermAToX);
    let mut worst = 0.0f64;
    for dt in [0.05, 0.1, 0.2] {
        let b = beta_set(&g, &Window::new(1.0, dt).unwrap(), 4).unwrap().b12.unwrap();
        let want = -dt.powi(3) / 12.0;
        let rel = (b - want).abs() / want.abs();
        ensure(rel <= 1e-12, || format!("β12 at δt={dt}: {b:e} vs {want:e}"))?;
        worst = worst.max(rel);
    }
    let dts = log_grid(0.02, 0.4, 8);
    let cfg = FormulaConfig::default();
    let mut fits = Vec::new();
    for a in Assignment::ALL {
        let g = landau_zener(a);
        for flip in [false, true] {
            let pts: Vec<(f64, f64)> = dts
                .iter()
                .map(|&dt| {
                    let w = Window::new(1.0, dt).unwrap();
                    let mut b = beta_set(&g, &w, 4).unwrap();
                    if flip {
                        b.b12 = b.b12.map(|v| -v);
                    }
                    let approx = evaluate(&formulas::mft_from_betas(&b, &cfg).unwrap(), &g).unwrap();
                    let exact = runge_kutta_propagator(&g, w.start(), w.end(), 1e-13).unwrap();
                    (dt, frobenius_norm(&(&exact - &approx)))
                })
                .collect();
            let s = order_fit(&pts).map_err(|e| e.to_string())?.slope;
            let want = if flip { 3.0 } else { 5.0 };
            ensure((s - want).abs() <= 0.2, || format!("MFT {a} flip={flip}: slope {s:.4}"))?;
            fits.push(s);
        }
    }
    Ok(format!("max rel. error {worst:.1e}; MFT slopes {:.2}/{:.2} correct, {:.2}/{:.2} flipped", fits[0], fits[2], fits[1], fits[3]))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 local order (dt-sweep)", local_order),
        ("2 MST order", mst_order),
        ("3 time-independent reduction", time_independent_reduction),
        ("4 mu-sweep", mu_sweep),
        ("5 Ising benchmark", ising_benchmark),
        ("6 norm robustness", norm_robustness),
        ("7 invariant suite", invariant_suite),
        ("8 beta12 closed form and sign", beta12_closed_form),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({took:.1?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({took:.1?}): {detail}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a failure status if any criterion fails.
//!
//! Tolerances below are fixed harness constants.

use std::f64::consts::PI;
use std::sync::Arc;
use std::thread;

use graphwave_core::closed_form::{
    evaluate_wave, h_integral, mass_curve_r, monotone_window, solve_omega_in_window, ClosedFormWave,
};
use graphwave_core::evolution::{evolve, orbit_distance, stability_experiment, Perturbation, StabilityTrace};
use graphwave_core::ground_state::{minimize_with, scaling_energy_curve, FlowOptions, MinimizerResult};
use graphwave_core::spectral::{ground_state, GroundStatePair, DEFAULT_TOL};
use graphwave_core::{make_star, Discretization, Error, StarGraphSpec};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn star(n: usize, gamma: f64, l: f64, h: f64) -> Arc<Discretization> {
    let g = make_star(StarGraphSpec { n, gamma, truncation: l }).expect("star graph");
    Discretization::build(&g, h).expect("discretization")
}

fn pair(d: &Arc<Discretization>) -> GroundStatePair {
    ground_state(d, DEFAULT_TOL).expect("ground state")
}

fn linear_ground_state() -> Outcome {
    let err = |h: f64| (pair(&star(3, 1.0, 40.0, h)).lambda0 - 1.0 / 9.0).abs();
    let (e1, e2) = (err(0.01), err(0.005));
    let ratio = e1 / e2;
    outcome(
        1,
        "linear ground state",
        e1 <= 1e-4 && ratio >= 3.5,
        format!("|λ₀ − 1/9| = {e1:.3e} at h = 0.01, error ratio under halving {ratio:.2}"),
    )
}

fn closed_form_stationarity() -> Outcome {
    let w = ClosedFormWave::new(3, 1.0, 5.0, 1.0, 0).unwrap();
    let measure = |h: f64| {
        let d = star(3, 1.0, 40.0, h);
        let phi = evaluate_wave(&w, &d).unwrap();
        let re: Vec<f64> = phi.values().iter().map(|z| z.re).collect();
        let a = d.form_matrix().matvec(&re);
        let m = d.mass_weights();
        let sup = re.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let residual = (0..re.len())
            .map(|i| (a[i] + w.omega * m[i] * re[i] - m[i] * re[i].powf(w.p)).abs())
            .fold(0.0, f64::max)
            / sup;
        let balance: f64 = (0..3)
            .map(|e| {
                let v = phi.edge_values(e);
                (v[1].re - v[0].re) / h
            })
            .sum::<f64>()
            + w.gamma * re[0];
        (residual, balance.abs())
    };
    let (r1, b1) = measure(0.02);
    let (r2, b2) = measure(0.01);
    let (r3, b3) = measure(0.005);
    let (q1, q2) = (r1 / r2, r2 / r3);
    let (s1, s2) = (b1 / b2, b2 / b3);
    outcome(
        2,
        "closed-form stationarity",
        q1 >= 3.5 && q2 >= 3.5 && s1 >= 1.8 && s2 >= 1.8,
        format!("residual ratios {q1:.2}, {q2:.2}; vertex balance ratios {s1:.2}, {s2:.2}"),
    )
}

fn mass_curve_cross_check() -> Outcome {
    let win = monotone_window(3, 1.0, 6.0, 10.0, 400).unwrap();
    let d = star(3, 1.0, 40.0, 0.01);
    let lo = win.threshold * 1.01;
    let hi = win.omega_end;
    let mut worst = 0.0f64;
    for k in 0..10 {
        let omega = lo * (hi / lo).powf(k as f64 / 9.0);
        let w = ClosedFormWave::new(3, 1.0, 6.0, omega, 0).unwrap();
        let mass = evaluate_wave(&w, &d).unwrap().mass();
        worst = worst.max((mass - mass_curve_r(3, 1.0, 6.0, omega).unwrap()).abs());
    }
    let h0 = (h_integral(0.0, 5.0).unwrap() - PI / 2.0).abs();
    outcome(
        3,
        "mass-curve cross-check",
        worst <= 1e-4 && h0 <= 1e-10,
        format!(
            "window (γ²/N², {:.4}] for p = 6, max |mass − R| = {worst:.3e}, |h(0) − π/2| = {h0:.1e}",
            win.omega_end
        ),
    )
}

/// Minimizers shared by criteria 4 to 7.
struct MinimizerSet {
    lambda0: f64,
    oracle_run: std::result::Result<MinimizerResult, String>,
    sweep: Vec<(f64, std::result::Result<MinimizerResult, String>)>,
}

const ORACLE_MASS: f64 = 1.0;

fn minimizer_set() -> MinimizerSet {
    let d = star(3, 1.0, 40.0, 0.01);
    let gs = pair(&d);
    let opts = FlowOptions::default();
    let run = |c: f64| minimize_with(&gs, 6.0, c, 1.0, &opts).map_err(|e| e.to_string());
    let oracle_run = run(ORACLE_MASS);
    // geometric grid from 1 down to 0.1
    let sweep = (0..8)
        .map(|k| {
            let c = 0.1f64.powf(k as f64 / 7.0);
            (c, run(c))
        })
        .collect();
    MinimizerSet {
        lambda0: gs.lambda0,
        oracle_run,
        sweep,
    }
}

fn minimizer_vs_oracle(set: &MinimizerSet) -> Outcome {
    let res = match &set.oracle_run {
        Ok(r) => r,
        Err(e) => return outcome(4, "minimizer vs closed form", false, e.clone()),
    };
    let omega = solve_omega_in_window(3, 1.0, 6.0, ORACLE_MASS, 10.0).unwrap();
    let d = res.phi.discretization();
    let exact = evaluate_wave(&ClosedFormWave::new(3, 1.0, 6.0, omega, 0).unwrap(), d).unwrap();
    let (dist, _) = orbit_distance(&res.phi, &exact).unwrap();
    let rel = dist / exact.h1_norm_sq().sqrt();
    outcome(
        4,
        "minimizer vs closed form",
        rel <= 1e-3,
        format!("c = {ORACLE_MASS}, ω(c) = {omega:.8}, relative H¹ orbit distance {rel:.3e}"),
    )
}

fn converged(set: &MinimizerSet) -> Vec<&MinimizerResult> {
    set.oracle_run
        .iter()
        .chain(set.sweep.iter().filter_map(|(_, r)| r.as_ref().ok()))
        .collect()
}

fn multiplier_bounds(set: &MinimizerSet) -> Outcome {
    let mut omegas = Vec::new();
    for (c, r) in &set.sweep {
        match r {
            Ok(r) => omegas.push((*c, r.omega)),
            Err(e) => return outcome(5, "multiplier bounds", false, format!("c = {c}: {e}")),
        }
    }
    let l0 = set.lambda0;
    let above = omegas.iter().all(|&(_, w)| w > l0 + 1e-8);
    // the grid runs from large to small c, so ω must not increase along it
    let monotone = omegas.windows(2).all(|p| p[1].1 <= p[0].1 + 1e-6);
    let (c_min, w_min) = *omegas.last().unwrap();
    let close = w_min - l0 <= 0.05 * l0;
    outcome(
        5,
        "multiplier bounds",
        above && monotone && close,
        format!(
            "ω − λ₀ from {:.3e} (c = 1) to {:.3e} (c = {c_min:.2}); all above λ₀: {above}, monotone: {monotone}",
            omegas[0].1 - l0,
            w_min - l0
        ),
    )
}

fn strict_energy_inequality(set: &MinimizerSet) -> Outcome {
    let runs = converged(set);
    let margins: Vec<f64> = runs.iter().map(|r| -0.5 * r.lambda0 * r.c - r.energy).collect();
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        6,
        "strict energy inequality",
        runs.len() == 9 && min > 0.0,
        format!("{} minimizers, smallest margin −λ₀c/2 − E = {min:.3e}", runs.len()),
    )
}

fn structure(set: &MinimizerSet) -> Outcome {
    let runs = converged(set);
    let ok = runs
        .iter()
        .all(|r| r.diagnostics.phase_constant_ok && r.diagnostics.positivity_ok);
    let worst_im = runs
        .iter()
        .map(|r| {
            let rot = num_complex::Complex64::from_polar(1.0, -r.diagnostics.theta);
            r.phi.values().iter().map(|v| (v * rot).im.abs()).fold(0.0, f64::max) / r.phi.sup_norm()
        })
        .fold(0.0, f64::max);
    outcome(
        7,
        "phase constancy and positivity",
        runs.len() == 9 && ok,
        format!("{} minimizers, max gauged |Im φ|/‖φ‖∞ = {worst_im:.1e}", runs.len()),
    )
}

fn supercritical_scaling() -> Outcome {
    let d = star(3, 1.0, 40.0, 0.01);
    let phi = pair(&d).scaled_psi0(4.0);
    let curve = scaling_energy_curve(7.0, &phi, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    let decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
    let (e1, e8) = (curve[0].1, curve[3].1);
    let values: Vec<String> = curve.iter().map(|(l, e)| format!("E({l}) = {e:.4}")).collect();
    outcome(
        8,
        "supercritical scaling",
        decreasing && e8 < e1 - 10.0 * e1.abs(),
        values.join(", "),
    )
}

fn conservation() -> Outcome {
    let d = star(3, 1.0, 40.0, 0.01);
    let w = ClosedFormWave::new(3, 1.0, 5.0, 1.0, 0).unwrap();
    let phi = evaluate_wave(&w, &d).unwrap();
    let drifts = |dt: f64| {
        let (_, tr) = evolve(&phi, Some(5.0), dt, 5.0, 1).expect("evolution");
        let (m0, e0) = (tr.mass[0], tr.energy[0]);
        let md = tr.mass.iter().map(|m| ((m - m0) / m0).abs()).fold(0.0, f64::max);
        let ed = tr.energy.iter().map(|e| ((e - e0) / e0).abs()).fold(0.0, f64::max);
        (md, ed)
    };
    let (m1, e1) = drifts(1e-3);
    let (m2, e2) = drifts(5e-4);
    let ratio = e1 / e2;
    outcome(
        9,
        "conservation",
        m1.max(m2) <= 1e-10 && e1 <= 1e-6 && (3.0..=5.0).contains(&ratio),
        format!("mass drift {:.1e}, energy drift {e1:.3e} (dt = 1e-3), ratio under halving {ratio:.2}", m1.max(m2)),
    )
}

/// Least-squares slope of the distance over the second half of the run.
fn late_slope(trace: &StabilityTrace) -> f64 {
    let start = trace.times.len() / 2;
    let t = &trace.times[start..];
    let y = &trace.orbit_distance[start..];
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let var: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    cov / var
}

fn orbital_stability() -> Outcome {
    let d = star(3, 1.0, 40.0, 0.01);
    let gs = pair(&d);
    let reference = match minimize_with(&gs, 6.0, 0.5, 1.0, &FlowOptions::default()) {
        Ok(r) => r.phi,
        Err(e) => return outcome(10, "orbital stability", false, e.to_string()),
    };
    let delta = 1e-2;
    let t_end = 20.0;
    let norm = reference.h1_norm_sq().sqrt();
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, pert) in [
        ("bump", Perturbation::EigenfunctionBump { delta }),
        ("noise", Perturbation::MultiplicativeNoise { delta, seed: 2024 }),
    ] {
        match stability_experiment(&reference, 6.0, &pert, t_end, 0.005, 20) {
            Ok(trace) => {
                let sup = trace.sup_distance() / (delta * norm);
                let growth = late_slope(&trace) * 0.5 * t_end / (delta * norm);
                pass &= sup <= 5.0 && growth <= 1.0;
                detail.push(format!("{label}: sup dist {sup:.2e}·δ‖φ‖, late trend {growth:+.2e}·δ‖φ‖"));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{label}: {e}"));
            }
        }
    }
    outcome(10, "orbital stability", pass, detail.join("; "))
}

fn feasibility_gate() -> Outcome {
    let d = star(3, 1.0, 40.0, 0.02);
    let gs = pair(&d);
    let c_max = 1.0 / gs.lambda0;
    let opts = FlowOptions::default();
    let over = matches!(minimize_with(&gs, 6.0, 1.01 * c_max, 1.0, &opts), Err(Error::Infeasible { .. }));
    let near = match minimize_with(&gs, 7.0, 0.99 * c_max, 1.0, &opts) {
        Ok(r) => (r.g_norm_sq <= 1.0, format!("converged with ‖φ‖²_G = {:.4}", r.g_norm_sq)),
        Err(Error::BallExit { iteration, g_norm_sq, .. }) => {
            (true, format!("ball exit at iterate {iteration}, ‖u‖²_G = {g_norm_sq:.4}"))
        }
        Err(e) => (false, e.to_string()),
    };
    outcome(
        11,
        "feasibility gate",
        over && near.0,
        format!("c > r/λ₀ rejected: {over}; c = 0.99·r/λ₀, p = 7: {}", near.1),
    )
}

fn main() {
    let mut results: Vec<Outcome> = thread::scope(|s| {
        let a = s.spawn(|| vec![linear_ground_state(), closed_form_stationarity(), mass_curve_cross_check()]);
        let b = s.spawn(|| {
            let set = minimizer_set();
            vec![
                minimizer_vs_oracle(&set),
                multiplier_bounds(&set),
                strict_energy_inequality(&set),
                structure(&set),
            ]
        });
        let c = s.spawn(|| vec![supercritical_scaling(), feasibility_gate()]);
        let d = s.spawn(|| vec![conservation()]);
        let e = s.spawn(|| vec![orbital_stability()]);
        [a, b, c, d, e]
            .into_iter()
            .flat_map(|h| h.join().expect("criterion panicked"))
            .collect()
    });
    results.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}  {:<32} {}", o.id, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

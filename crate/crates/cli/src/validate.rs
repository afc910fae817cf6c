//! Star-graph oracle checks behind `graphwave validate`.

use std::f64::consts::PI;
use std::sync::Arc;

use graphwave_core::closed_form::{
    evaluate_wave, h_integral, mass_curve_r, monotone_window, solve_omega_for_mass, ClosedFormWave,
};
use graphwave_core::evolution::orbit_distance;
use graphwave_core::ground_state::{minimize_with, FlowOptions};
use graphwave_core::spectral::{ground_state, DEFAULT_TOL};
use graphwave_core::{Discretization, Error, MetricGraph};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::Ctx;
use crate::{CliError, CliResult, ValidateArgs};

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    /// Human-readable acceptance rule.
    rule: &'static str,
    pass: bool,
}

fn check(name: &'static str, value: f64, rule: &'static str, pass: bool) -> Check {
    Check { name, value, rule, pass }
}

fn disc(g: &MetricGraph, h: f64) -> CliResult<Arc<Discretization>> {
    Ok(Discretization::build(g, h)?)
}

/// `(max-norm stationary residual / ‖φ‖∞, |Σ∂φ + γφ(v₀)|)` of a sampled wave.
fn wave_defects(w: &ClosedFormWave, d: &Arc<Discretization>) -> CliResult<(f64, f64)> {
    let phi = evaluate_wave(w, d)?;
    let re: Vec<f64> = phi.values().iter().map(|z| z.re).collect();
    let a = d.form_matrix().matvec(&re);
    let m = d.mass_weights();
    let sup = re.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let residual = (0..re.len())
        .map(|i| (a[i] + w.omega * m[i] * re[i] - m[i] * re[i].abs().powf(w.p - 1.0) * re[i]).abs())
        .fold(0.0, f64::max)
        / sup;
    let mut balance = w.gamma * re[0];
    for e in 0..w.n {
        let v = phi.edge_values(e);
        balance += (v[1].re - v[0].re) / d.grids()[e].step;
    }
    Ok((residual, balance.abs()))
}

pub(crate) fn run(ctx: &mut Ctx, a: &ValidateArgs) -> CliResult<Value> {
    let g = ctx.load_graph(&a.graph)?;
    let (n, gamma) = g
        .as_star()
        .ok_or_else(|| Error::Domain("validate needs a potential-free star graph".into()))?;
    if !(gamma > 0.0) {
        return Err(Error::Assumption("the star coupling must be attractive (γ > 0)".into()).into());
    }
    let (h, p) = (a.h, a.p);
    let exact = gamma * gamma / (n * n) as f64;
    let coarse = disc(&g, h)?;
    let fine = disc(&g, 0.5 * h)?;
    let gs = ground_state(&coarse, DEFAULT_TOL)?;
    let gs_fine = ground_state(&fine, DEFAULT_TOL)?;
    let mut checks = Vec::new();

    let err = (gs.lambda0 - exact).abs();
    let err_fine = (gs_fine.lambda0 - exact).abs();
    checks.push(check("lambda0 relative error", err / exact, "≤ 1e-3", err <= 1e-3 * exact));
    checks.push(check("lambda0 error ratio under halving", err / err_fine, "≥ 3.5", err / err_fine >= 3.5));

    // the standing wave whose frequency is nine times the threshold
    let w = ClosedFormWave::new(n, gamma, p, 9.0 * exact, 0)?;
    let (r1, b1) = wave_defects(&w, &coarse)?;
    let (r2, b2) = wave_defects(&w, &fine)?;
    checks.push(check("closed-form residual ratio under halving", r1 / r2, "≥ 3.5", r1 / r2 >= 3.5));
    checks.push(check("vertex balance ratio under halving", b1 / b2, "≥ 1.8", b1 / b2 >= 1.8));

    let mass = evaluate_wave(&w, &coarse)?.mass();
    let r = mass_curve_r(n, gamma, p, w.omega)?;
    checks.push(check("sampled mass vs R(ω)", (mass - r).abs(), "≤ 1e-4", (mass - r).abs() <= 1e-4));
    let h0 = (h_integral(0.0, 5.0)? - 0.5 * PI).abs();
    checks.push(check("h(0) at p = 5 vs π/2", h0, "≤ 1e-10", h0 <= 1e-10));

    if p >= 5.0 {
        let win = monotone_window(n, gamma, p, 50.0 * exact, 400)?;
        let omega = exact + 0.5 * (win.omega_end - exact).min(exact);
        let c = mass_curve_r(n, gamma, p, omega)?;
        let recovered = solve_omega_for_mass(n, gamma, p, c, (exact, win.omega_end))?;
        let oracle = evaluate_wave(&ClosedFormWave::new(n, gamma, p, recovered, 0)?, &coarse)?;
        match minimize_with(&gs, p, c, 1.0, &FlowOptions::default()) {
            Ok(res) => {
                let (dist, _) = orbit_distance(&res.phi, &oracle)?;
                let rel = dist / oracle.h1_norm_sq().sqrt();
                checks.push(check("minimizer relative H1 distance to closed form", rel, "≤ 1e-3", rel <= 1e-3));
                let margin = -0.5 * res.lambda0 * c - res.energy;
                checks.push(check("energy margin below -λ₀c/2", margin, "> 0", margin > 0.0));
                let dg = res.diagnostics;
                let structure = dg.positivity_ok && dg.phase_constant_ok;
                checks.push(check("minimizer positive up to phase", f64::from(u8::from(structure)), "= 1", structure));
            }
            Err(e) => {
                eprintln!("minimizer failed: {e}");
                checks.push(check("minimizer converged", 0.0, "= 1", false));
            }
        }
    }

    let mut csv = ctx.csv("validation.csv")?;
    csv.write_record(["check", "value", "rule", "pass"])?;
    eprintln!("{:<48} {:>12}  {:<8} result", "check", "value", "rule");
    for c in &checks {
        csv.write_record([c.name, &c.value.to_string(), c.rule, if c.pass { "pass" } else { "fail" }])?;
        eprintln!(
            "{:<48} {:>12.4e}  {:<8} {}",
            c.name,
            c.value,
            c.rule,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    csv.flush()?;

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if !failed.is_empty() {
        return Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(json!({
        "n": n,
        "gamma": gamma,
        "p": p,
        "lambda0": gs.lambda0,
        "checks": checks,
        "all_passed": true,
    }))
}

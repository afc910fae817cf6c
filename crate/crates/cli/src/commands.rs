use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use graphwave_core::closed_form::{evaluate_wave, mass_curve_r, monotone_window, ClosedFormWave};
use graphwave_core::evolution::{evolve, stability_experiment, Perturbation};
use graphwave_core::ground_state::{energy, lagrange_multiplier, minimize_with, FlowOptions};
use graphwave_core::spectral::{ground_state, spectral_gap_report, DEFAULT_TOL};
use graphwave_core::{make_star, parse_graph, Discretization, GraphFunction, MetricGraph, StarGraphSpec};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::manifest::{graph_hash, RunManifest};
use crate::{
    envelope, validate, CliError, CliResult, Cli, ClosedFormArgs, Command, EvolveArgs, MassCurveArgs, MinimizeArgs,
    PerturbationMode, SpectrumArgs, StabilityArgs, SweepArgs,
};

/// Output directory plus the list of files written so far.
pub(crate) struct Ctx {
    out: PathBuf,
    seed: u64,
    artifacts: Vec<String>,
    graph_sha256: Option<String>,
}

impl Ctx {
    fn path(&mut self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out)?;
        self.artifacts.push(name.to_string());
        Ok(self.out.join(name))
    }

    pub(crate) fn csv(&mut self, name: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
        let path = self.path(name)?;
        Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
    }

    fn function(&mut self, name: &str, u: &GraphFunction) -> CliResult<()> {
        let path = self.path(name)?;
        u.write_csv(BufWriter::new(File::create(path)?))?;
        Ok(())
    }

    pub(crate) fn load_graph(&mut self, path: &Path) -> CliResult<MetricGraph> {
        let text = fs::read_to_string(path)?;
        let g = parse_graph(&text)?;
        self.graph_sha256 = Some(graph_hash(&g));
        Ok(g)
    }
}

pub(crate) fn run(cli: &Cli) -> CliResult<Value> {
    let started = Utc::now();
    let mut ctx = Ctx {
        out: cli.common.out.clone(),
        seed: cli.common.seed,
        artifacts: Vec::new(),
        graph_sha256: None,
    };
    let (params, result) = match &cli.command {
        Command::Spectrum(a) => (json!(a), spectrum(&mut ctx, a)),
        Command::Minimize(a) => (json!(a), minimize(&mut ctx, a)),
        Command::ClosedForm(a) => (json!(a), closed_form(&mut ctx, a)),
        Command::MassCurve(a) => (json!(a), mass_curve(&mut ctx, a)),
        Command::Evolve(a) => (json!(a), evolve_cmd(&mut ctx, a)),
        Command::Stability(a) => (json!(a), stability(&mut ctx, a)),
        Command::Validate(a) => (json!(a), validate::run(&mut ctx, a)),
        Command::Sweep(a) => (json!(a), sweep(&mut ctx, a)),
    };
    let name = cli.command.name();
    // a failed run that already wrote artifacts still gets its manifest
    if result.is_ok() || !ctx.artifacts.is_empty() {
        fs::create_dir_all(&ctx.out)?;
        let mut manifest = RunManifest::new(name, params, ctx.graph_sha256.clone(), ctx.seed, started);
        manifest.artifacts = ctx.artifacts.clone();
        manifest.write(&ctx.out)?;
    }
    let body = result?;
    let mut summary = envelope(name, body);
    summary["out"] = json!(ctx.out.display().to_string());
    summary["artifacts"] = json!(ctx.artifacts);
    Ok(summary)
}

fn build(g: &MetricGraph, h: f64) -> CliResult<Arc<Discretization>> {
    Ok(Discretization::build(g, h)?)
}

fn read_function(d: &Arc<Discretization>, path: &Path) -> CliResult<GraphFunction> {
    Ok(GraphFunction::read_csv(d, File::open(path)?)?)
}

fn spectrum(ctx: &mut Ctx, a: &SpectrumArgs) -> CliResult<Value> {
    let g = ctx.load_graph(&a.graph)?;
    let d = build(&g, a.h)?;
    let gs = ground_state(&d, a.tol)?;
    if let Some(path) = &a.dump_psi0 {
        gs.psi0.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let report = spectral_gap_report(&gs);
    Ok(json!({
        "lambda0": gs.lambda0,
        "gap": gs.gap,
        "residual": gs.residual,
        "iterations": gs.iterations,
        "nodes": d.len(),
        "isolation_not_certified": report.isolation_not_certified,
        "gap_threshold": report.threshold,
    }))
}

fn minimize(ctx: &mut Ctx, a: &MinimizeArgs) -> CliResult<Value> {
    let g = ctx.load_graph(&a.graph)?;
    let d = build(&g, a.h)?;
    let gs = ground_state(&d, DEFAULT_TOL)?;
    let init = a.init.as_deref().map(|p| read_function(&d, p)).transpose()?;
    let opts = FlowOptions {
        tau: a.tau,
        tol: a.tol,
        max_iter: a.max_iter,
        init,
        eig_tol: DEFAULT_TOL,
    };
    let res = minimize_with(&gs, a.p, a.c, a.r, &opts)?;
    ctx.function("minimizer.csv", &res.phi)?;
    Ok(json!({
        "energy": res.energy,
        "energy_breakdown": energy(&res.phi, a.p),
        "omega": res.omega,
        "lambda0": res.lambda0,
        "c": res.c,
        "r": res.r,
        "c_max": res.r / res.lambda0,
        "g_norm_sq": res.g_norm_sq,
        "iterations": res.iterations,
        "gradient_residual": res.gradient_residual,
        "tau": res.tau,
        "diagnostics": res.diagnostics,
    }))
}

fn closed_form(ctx: &mut Ctx, a: &ClosedFormArgs) -> CliResult<Value> {
    let w = ClosedFormWave::new(a.n, a.gamma, a.p, a.omega, a.j)?;
    let g = make_star(StarGraphSpec {
        n: a.n,
        gamma: a.gamma,
        truncation: a.truncation,
    })?;
    let d = build(&g, a.h)?;
    let phi = evaluate_wave(&w, &d)?;
    ctx.function("profile.csv", &phi)?;
    let r = if a.j == 0 {
        Some(mass_curve_r(a.n, a.gamma, a.p, a.omega)?)
    } else {
        None
    };
    Ok(json!({
        "a_j": w.shift(),
        "rapidity": w.rapidity(),
        "threshold": w.threshold(),
        "vertex_value": w.vertex_value(),
        "mass": phi.mass(),
        "mass_curve_r": r,
        "energy": energy(&phi, a.p).total,
        "multiplier": lagrange_multiplier(&phi, a.p)?,
    }))
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::Usage(format!("--omega-range expects LO:HI, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn mass_curve(ctx: &mut Ctx, a: &MassCurveArgs) -> CliResult<Value> {
    if a.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    if a.n < 2 {
        return Err(graphwave_core::Error::Domain(format!("a star needs at least 2 edges, got {}", a.n)).into());
    }
    let threshold = a.gamma * a.gamma / (a.n * a.n) as f64;
    let (lo, hi) = match &a.omega_range {
        Some(s) => parse_range(s)?,
        None => (threshold * (1.0 + 1e-6), 20.0 * threshold),
    };
    if !(lo > threshold) {
        return Err(graphwave_core::Error::Domain(format!(
            "ω range must start above the threshold γ²/N² = {threshold}, got {lo}"
        ))
        .into());
    }
    // grid log-spaced in the distance to the threshold
    let (s0, s1) = ((lo - threshold).ln(), (hi - threshold).ln());
    let mut w = ctx.csv("mass_curve.csv")?;
    w.write_record(["omega", "R"])?;
    for i in 0..a.points {
        let omega = threshold + (s0 + (s1 - s0) * i as f64 / (a.points - 1) as f64).exp();
        let r = mass_curve_r(a.n, a.gamma, a.p, omega)?;
        w.write_record([omega.to_string(), r.to_string()])?;
    }
    w.flush()?;
    let win = monotone_window(a.n, a.gamma, a.p, hi, 400)?;
    Ok(json!({
        "threshold": threshold,
        "omega_range": [lo, hi],
        "points": a.points,
        "window": {
            "omega_end": win.omega_end,
            "r_end": win.r_end,
            "bounded": win.bounded,
        },
    }))
}

fn initial_state(d: &Arc<Discretization>, init: Option<&Path>, c: f64) -> CliResult<GraphFunction> {
    match init {
        Some(p) => read_function(d, p),
        None => Ok(ground_state(d, DEFAULT_TOL)?.scaled_psi0(c)),
    }
}

fn evolve_cmd(ctx: &mut Ctx, a: &EvolveArgs) -> CliResult<Value> {
    let g = ctx.load_graph(&a.graph)?;
    let d = build(&g, a.h)?;
    let u0 = initial_state(&d, a.init.as_deref(), a.c)?;
    let p = if a.linear { None } else { a.p };
    let dt = a.dt.unwrap_or(0.5 * a.h);
    let (state, trace) = evolve(&u0, p, dt, a.t_end, a.sample_every)?;
    let mut w = ctx.csv("trace.csv")?;
    w.write_record(["t", "mass", "energy", "sup_norm"])?;
    for i in 0..trace.times.len() {
        w.write_record([
            trace.times[i].to_string(),
            trace.mass[i].to_string(),
            trace.energy[i].to_string(),
            trace.sup_norm[i].to_string(),
        ])?;
    }
    w.flush()?;
    ctx.function("final.csv", &state.u)?;
    let drift = |v: &[f64]| v.iter().map(|x| ((x - v[0]) / v[0]).abs()).fold(0.0, f64::max);
    Ok(json!({
        "final_t": state.t,
        "dt": state.dt,
        "samples": trace.times.len(),
        "mass_drift": drift(&trace.mass),
        "energy_drift": drift(&trace.energy),
        "final_sup_norm": state.u.sup_norm(),
    }))
}

fn stability(ctx: &mut Ctx, a: &StabilityArgs) -> CliResult<Value> {
    let g = ctx.load_graph(&a.graph)?;
    let d = build(&g, a.h)?;
    let reference = match &a.reference {
        Some(p) => read_function(&d, p)?,
        None => {
            let gs = ground_state(&d, DEFAULT_TOL)?;
            let res = minimize_with(&gs, a.p, a.c, a.r, &FlowOptions::default())?;
            ctx.function("reference.csv", &res.phi)?;
            res.phi
        }
    };
    let pert = match a.mode {
        PerturbationMode::Bump => Perturbation::EigenfunctionBump { delta: a.delta },
        PerturbationMode::Noise => Perturbation::MultiplicativeNoise {
            delta: a.delta,
            seed: ctx.seed,
        },
    };
    let dt = a.dt.unwrap_or(0.5 * a.h);
    let trace = stability_experiment(&reference, a.p, &pert, a.t_end, dt, a.sample_every)?;
    let mut w = ctx.csv("stability.csv")?;
    w.write_record(["t", "orbit_distance", "mass_drift", "energy_drift"])?;
    for i in 0..trace.times.len() {
        w.write_record([
            trace.times[i].to_string(),
            trace.orbit_distance[i].to_string(),
            trace.mass_drift[i].to_string(),
            trace.energy_drift[i].to_string(),
        ])?;
    }
    w.flush()?;
    let norm = reference.h1_norm_sq().sqrt();
    let sup = trace.sup_distance();
    Ok(json!({
        "perturbation": pert,
        "reference_h1_norm": norm,
        "sup_orbit_distance": sup,
        "sup_over_delta_norm": if a.delta > 0.0 { Some(sup / (a.delta * norm)) } else { None },
        "final_mass_drift": trace.mass_drift.last(),
        "final_energy_drift": trace.energy_drift.last(),
    }))
}

fn mass_grid(a: &SweepArgs) -> CliResult<Vec<f64>> {
    if !a.c.is_empty() {
        return Ok(a.c.clone());
    }
    let (lo, hi) = match (a.c_min, a.c_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(CliError::Usage("sweep needs --c or both --c-min and --c-max".into())),
    };
    if a.points == 0 {
        return Err(CliError::Usage("sweep grid is empty (--points 0)".into()));
    }
    if !(lo > 0.0 && hi >= lo) {
        return Err(CliError::Usage(format!("invalid mass range [{lo}, {hi}]")));
    }
    if a.points == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..a.points)
        .map(|k| lo * (hi / lo).powf(k as f64 / (a.points - 1) as f64))
        .collect())
}

fn sweep(ctx: &mut Ctx, a: &SweepArgs) -> CliResult<Value> {
    let masses = mass_grid(a)?;
    if a.p.is_empty() {
        return Err(CliError::Usage("sweep needs at least one --p".into()));
    }
    let g = ctx.load_graph(&a.graph)?;
    let d = build(&g, a.h)?;
    let gs = ground_state(&d, DEFAULT_TOL)?;
    let grid: Vec<(f64, f64)> = a.p.iter().flat_map(|&p| masses.iter().map(move |&c| (p, c))).collect();
    let opts = FlowOptions {
        tol: a.tol,
        ..FlowOptions::default()
    };
    let results: Vec<_> = grid
        .par_iter()
        .map(|&(p, c)| (p, c, minimize_with(&gs, p, c, a.r, &opts)))
        .collect();

    let mut w = ctx.csv("sweep.csv")?;
    w.write_record([
        "p",
        "c",
        "status",
        "omega",
        "energy",
        "g_norm_sq",
        "iterations",
        "residual",
        "positivity_ok",
        "phase_constant_ok",
        "de_inequality_ok",
        "ball_interior_ok",
        "error",
    ])?;
    let mut ok = 0;
    for (p, c, res) in &results {
        match res {
            Ok(r) => {
                ok += 1;
                let dg = r.diagnostics;
                w.write_record([
                    p.to_string(),
                    c.to_string(),
                    "ok".into(),
                    r.omega.to_string(),
                    r.energy.to_string(),
                    r.g_norm_sq.to_string(),
                    r.iterations.to_string(),
                    r.gradient_residual.to_string(),
                    dg.positivity_ok.to_string(),
                    dg.phase_constant_ok.to_string(),
                    dg.de_inequality_ok.to_string(),
                    dg.ball_interior_ok.to_string(),
                    String::new(),
                ])?;
            }
            Err(e) => {
                let mut row = vec![p.to_string(), c.to_string(), "failed".into()];
                row.extend(std::iter::repeat(String::new()).take(9));
                row.push(e.to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(json!({
        "lambda0": gs.lambda0,
        "points": results.len(),
        "converged": ok,
        "failed": results.len() - ok,
    }))
}

//! Time integration of `i∂ₜu = Hu − |u|^{p−1}u` and the orbital stability
//! experiment.
//!
//! The integrator is the relaxation Crank–Nicolson scheme: the nonlinearity
//! `|u|^{p−1}` is replaced by an auxiliary field living on half steps,
//! `γ^{n+1/2} = 2|u^n|^{p−1} − γ^{n−1/2}`, which makes every step a single
//! linear solve with a complex symmetric matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::GraphFunction;
use crate::error::{Error, Result};
use crate::ground_state::energy;
use crate::sparse::Ldlt;
use crate::spectral::{ground_state, DEFAULT_TOL};

/// Sup-norm growth factor past which a run is declared to be blowing up.
pub const OVERFLOW_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub u: GraphFunction,
    /// `γ^{n−1/2}` at every node.
    pub gamma_relax: Vec<f64>,
    /// Negative for backward runs.
    pub dt: f64,
    /// `None` switches the nonlinearity off.
    pub p: Option<f64>,
    guard: f64,
    linear: Option<Arc<LinearCache>>,
}

fn relax_field(u: &[Complex64], p: Option<f64>) -> Vec<f64> {
    match p {
        Some(p) => u.iter().map(|v| v.norm().powf(p - 1.0)).collect(),
        None => vec![0.0; u.len()],
    }
}

impl EvolutionState {
    pub fn new(u: GraphFunction, dt: f64, p: Option<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got dt = {dt}")));
        }
        if let Some(p) = p {
            if !(p > 1.0) {
                return Err(Error::Domain(format!("nonlinearity exponent must exceed 1, got p = {p}")));
            }
        }
        let sup = u.sup_norm();
        if !(sup > 0.0 && sup.is_finite()) {
            return Err(Error::Domain("initial state must be nonzero and finite".into()));
        }
        Ok(Self {
            t: 0.0,
            gamma_relax: relax_field(u.values(), p),
            u,
            dt,
            p,
            guard: OVERFLOW_FACTOR * sup,
            linear: None,
        })
    }

    /// The same state run backwards in time, with the auxiliary field
    /// re-initialized from the current `u`.
    pub fn reversed(&self) -> Self {
        Self {
            gamma_relax: relax_field(self.u.values(), self.p),
            dt: -self.dt,
            ..self.clone()
        }
    }
}

/// Factorization of the step matrix for the linear equation, which does not
/// change between steps.
#[derive(Debug)]
struct LinearCache {
    dt: f64,
    factor: Ldlt<Complex64>,
}

/// Advances `state` by one step.
pub fn step(state: &mut EvolutionState) -> Result<()> {
    let d = state.u.discretization().clone();
    let m = d.mass_weights();
    let a = d.form_matrix();
    let dt = state.dt;
    let u = state.u.values();

    if let Some(p) = state.p {
        for (g, v) in state.gamma_relax.iter_mut().zip(u) {
            *g = 2.0 * v.norm().powf(p - 1.0) - *g;
        }
    }
    let g = &state.gamma_relax;

    // rhs = (iM/dt + A/2 − Mγ/2) u
    let au = a.matvec(u);
    let mut rhs: Vec<Complex64> = (0..u.len())
        .map(|i| u[i] * Complex64::new(-0.5 * m[i] * g[i], m[i] / dt) + au[i] * 0.5)
        .collect();

    let build = || -> Result<Ldlt<Complex64>> {
        let shift: Vec<Complex64> = (0..m.len())
            .map(|i| Complex64::new(0.5 * m[i] * g[i], m[i] / dt))
            .collect();
        Ldlt::factor(&a.combine(Complex64::new(-0.5, 0.0), &shift), d.envelope())
    };
    if state.p.is_some() {
        build()?.solve_in_place(&mut rhs);
    } else {
        let cache = match &state.linear {
            Some(c) if c.dt == dt => c.clone(),
            _ => Arc::new(LinearCache { dt, factor: build()? }),
        };
        cache.factor.solve_in_place(&mut rhs);
        state.linear = Some(cache);
    }

    state.t += dt;
    let sup = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(sup <= state.guard) {
        return Err(Error::BlowUp { t: state.t, sup_norm: sup });
    }
    state.u.values_mut().copy_from_slice(&rhs);
    Ok(())
}

/// `(min_θ ‖u − e^{iθ}φ‖_{H¹}, θ_opt)`.
pub fn orbit_distance(u: &GraphFunction, phi_ref: &GraphFunction) -> Result<(f64, f64)> {
    if phi_ref.h1_norm_sq() == 0.0 {
        return Err(Error::Domain("orbit distance to the zero function".into()));
    }
    if u.values().len() != phi_ref.values().len() {
        return Err(Error::Domain("functions live on different discretizations".into()));
    }
    let theta = phi_ref.h1_inner(u).arg();
    let rot = Complex64::from_polar(1.0, theta);
    let diff: Vec<Complex64> = u
        .values()
        .iter()
        .zip(phi_ref.values())
        .map(|(a, b)| a - rot * b)
        .collect();
    let dist = GraphFunction::new(u.discretization().clone(), diff)?.h1_norm_sq().sqrt();
    Ok((dist, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Perturbation {
    /// `φ(1 + δη)` with `η` a random smooth field, `|η| ≤ 1`.
    MultiplicativeNoise { delta: f64, seed: u64 },
    /// `φ + δ‖φ‖_{L²} ψ₀`.
    EigenfunctionBump { delta: f64 },
}

impl Perturbation {
    pub fn delta(&self) -> f64 {
        match *self {
            Perturbation::MultiplicativeNoise { delta, .. } | Perturbation::EigenfunctionBump { delta } => delta,
        }
    }
}

const NOISE_MODES: usize = 6;

/// Perturbs `phi` and rescales the result back to the mass of `phi`.
pub fn perturb(phi: &GraphFunction, pert: &Perturbation) -> Result<GraphFunction> {
    let d = phi.discretization();
    let c = phi.mass();
    if c == 0.0 {
        return Err(Error::Domain("cannot perturb the zero function".into()));
    }
    if !(pert.delta() >= 0.0) {
        return Err(Error::Domain(format!("perturbation size must be nonnegative, got {}", pert.delta())));
    }
    let mut out = match *pert {
        Perturbation::MultiplicativeNoise { delta, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fields: Vec<(f64, Vec<(f64, f64)>)> = d
                .grids()
                .iter()
                .map(|grid| {
                    let len = grid.step * grid.elements() as f64;
                    let modes: Vec<(f64, f64)> = (0..NOISE_MODES)
                        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
                        .collect();
                    (len, modes)
                })
                .collect();
            let eta = |e: usize, x: f64| {
                let (len, modes) = &fields[e];
                let norm: f64 = modes.iter().map(|m| m.0.abs()).sum();
                let s: f64 = modes
                    .iter()
                    .enumerate()
                    .map(|(k, &(amp, phase))| amp * ((k + 1) as f64 * PI * x / len + phase).sin())
                    .sum();
                s / norm.max(f64::MIN_POSITIVE)
            };
            let values = d
                .locations()
                .iter()
                .zip(phi.values())
                .map(|(&(e, x), v)| v * (1.0 + delta * eta(e, x)))
                .collect();
            GraphFunction::new(d.clone(), values)?
        }
        Perturbation::EigenfunctionBump { delta } => {
            let psi0 = ground_state(d, DEFAULT_TOL)?.psi0;
            let s = delta * c.sqrt();
            let values = phi
                .values()
                .iter()
                .zip(psi0.values())
                .map(|(a, b)| a + b * s)
                .collect();
            GraphFunction::new(d.clone(), values)?
        }
    };
    let s = (c / out.mass()).sqrt();
    for v in out.values_mut() {
        *v *= s;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StabilityTrace {
    pub times: Vec<f64>,
    pub orbit_distance: Vec<f64>,
    pub mass_drift: Vec<f64>,
    pub energy_drift: Vec<f64>,
}

impl StabilityTrace {
    pub fn sup_distance(&self) -> f64 {
        self.orbit_distance.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub sup_norm: Vec<f64>,
}

/// Number of steps and the adjusted step that land exactly on `t_end`.
fn step_plan(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("final time must be nonnegative, got T = {t_end}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got dt = {dt}")));
    }
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((n, if n == 0 { dt } else { t_end / n as f64 }))
}

/// Runs `n` steps and calls `sample` on the initial state and after every
/// `every`-th step (and the last one).
fn run(
    state: &mut EvolutionState,
    n: usize,
    every: usize,
    mut sample: impl FnMut(&EvolutionState) -> Result<()>,
) -> Result<()> {
    let every = every.max(1);
    sample(state)?;
    for k in 1..=n {
        step(state)?;
        if k % every == 0 || k == n {
            sample(state)?;
        }
    }
    Ok(())
}

/// Integrates to time `t_end` recording mass, energy and sup-norm.
pub fn evolve(
    u0: &GraphFunction,
    p: Option<f64>,
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<(EvolutionState, EvolutionTrace)> {
    let (n, dt) = step_plan(t_end, dt)?;
    let mut state = EvolutionState::new(u0.clone(), dt, p)?;
    let mut trace = EvolutionTrace::default();
    let q = p.unwrap_or(1.0);
    run(&mut state, n, sample_every, |s| {
        trace.times.push(s.t);
        trace.mass.push(s.u.mass());
        trace.energy.push(if p.is_some() {
            energy(&s.u, q).total
        } else {
            0.5 * s.u.quadratic_form()
        });
        trace.sup_norm.push(s.u.sup_norm());
        Ok(())
    })?;
    Ok((state, trace))
}

/// Evolves a perturbation of `phi_ref` and follows its distance to the
/// phase orbit of `phi_ref`.
pub fn stability_experiment(
    phi_ref: &GraphFunction,
    p: f64,
    pert: &Perturbation,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<StabilityTrace> {
    let u0 = perturb(phi_ref, pert)?;
    let (n, dt) = step_plan(t_end, dt)?;
    let mut state = EvolutionState::new(u0, dt, Some(p))?;
    let m0 = state.u.mass();
    let e0 = energy(&state.u, p).total;
    let mut trace = StabilityTrace::default();
    run(&mut state, n, sample_every, |s| {
        trace.times.push(s.t);
        trace.orbit_distance.push(orbit_distance(&s.u, phi_ref)?.0);
        trace.mass_drift.push((s.u.mass() - m0) / m0);
        trace.energy_drift.push((energy(&s.u, p).total - e0) / e0.abs());
        Ok(())
    })?;
    Ok(trace)
}

//! Mass-constrained local minimizers of the energy
//!
//! ```text
//! E(u) = ½𝔉[u] − (1/(p+1)) ‖u‖^{p+1}_{p+1}
//! ```
//!
//! over `S(c) ∩ B(r)`, where `S(c)` fixes `‖u‖²_{L²} = c` and `B(r)` bounds
//! `‖u‖²_G = 𝔉[u] + 2λ₀‖u‖²_{L²}`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{Discretization, GraphFunction};
use crate::error::{Error, Result};
use crate::sparse::Ldlt;
use crate::spectral::{ground_state, GroundStatePair, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `½𝔉[u]`.
    pub kinetic_potential: f64,
    /// `−‖u‖^{p+1}_{p+1}/(p+1)`.
    pub nonlinear: f64,
    pub total: f64,
}

pub fn energy(u: &GraphFunction, p: f64) -> EnergyBreakdown {
    energy_of(u.discretization(), u.values(), p)
}

fn energy_of(d: &Discretization, u: &[Complex64], p: f64) -> EnergyBreakdown {
    let kinetic_potential = 0.5 * d.form_of(u);
    let nonlinear = -d.power_sum_of(u, p + 1.0) / (p + 1.0);
    EnergyBreakdown {
        kinetic_potential,
        nonlinear,
        total: kinetic_potential + nonlinear,
    }
}

/// Largest mass `r/λ₀` for which `S(c) ∩ B(r)` is nonempty.
pub fn feasibility_bound(lambda0: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("ball radius must be positive, got r = {r}")));
    }
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("λ₀ must be positive, got {lambda0}")));
    }
    Ok(r / lambda0)
}

/// `ω = (‖φ‖^{p+1}_{p+1} − 𝔉[φ]) / ‖φ‖²_{L²}`.
pub fn lagrange_multiplier(phi: &GraphFunction, p: f64) -> Result<f64> {
    let mass = phi.mass();
    if mass == 0.0 {
        return Err(Error::Domain("Lagrange multiplier of the zero function".into()));
    }
    let d = phi.discretization();
    Ok(multiplier_of(d, phi.values(), p, mass))
}

/// `E(v) − E(u)` from differences, so that changes far below the size of
/// `E` itself are resolved.
fn energy_delta(d: &Discretization, u: &[Complex64], v: &[Complex64], p: f64) -> f64 {
    let diff: Vec<Complex64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
    let sum: Vec<Complex64> = v.iter().zip(u).map(|(a, b)| a + b).collect();
    let form = d.form_matrix().real_bilinear(&diff, &sum);
    let q = p + 1.0;
    let power: f64 = v
        .iter()
        .zip(u)
        .zip(d.mass_weights())
        .map(|((a, b), m)| m * (a.norm().powf(q) - b.norm().powf(q)))
        .sum();
    0.5 * form - power / q
}

fn multiplier_of(d: &Discretization, u: &[Complex64], p: f64, mass: f64) -> f64 {
    (d.power_sum_of(u, p + 1.0) - d.form_of(u)) / mass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Recovered global phase `θ̂`, in `(−π, π]`.
    pub theta: f64,
    pub positivity_ok: bool,
    pub phase_constant_ok: bool,
    pub de_inequality_ok: bool,
    pub ball_interior_ok: bool,
}

impl Diagnostics {
    pub fn all_ok(&self) -> bool {
        self.positivity_ok && self.phase_constant_ok && self.de_inequality_ok && self.ball_interior_ok
    }
}

const PHASE_TOL: f64 = 1e-8;
const INTERIOR_SLACK: f64 = 1e-9;

/// Checks that `φ = e^{iθ}ρ` with `ρ > 0`, that `‖φ‖²_G ≤ rc`, and that the
/// energy lies strictly below `−λ₀c/2`.
pub fn structure_diagnostics(
    phi: &GraphFunction,
    psi0: &GraphFunction,
    lambda0: f64,
    c: f64,
    r: f64,
    energy: f64,
) -> Diagnostics {
    let overlap: Complex64 = phi
        .values()
        .iter()
        .zip(psi0.values())
        .zip(phi.discretization().mass_weights())
        .map(|((a, b), m)| a * b.re * *m)
        .sum();
    let theta = overlap.arg();
    let rot = Complex64::from_polar(1.0, -theta);
    let sup = phi.sup_norm();
    let mut max_im = 0.0f64;
    let mut min_re = f64::INFINITY;
    for v in phi.values() {
        let w = v * rot;
        max_im = max_im.max(w.im.abs());
        min_re = min_re.min(w.re);
    }
    Diagnostics {
        theta,
        positivity_ok: min_re > 0.0,
        phase_constant_ok: max_im <= PHASE_TOL * sup,
        de_inequality_ok: energy < -0.5 * lambda0 * c,
        ball_interior_ok: phi.g_norm_sq(lambda0) <= r * c * (1.0 + INTERIOR_SLACK),
    }
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Pseudo-time step; defaults to `1/(2λ₀)`.
    pub tau: Option<f64>,
    /// Target for the stationary-equation residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; defaults to `√c ψ₀`. Rescaled to mass `c`.
    pub init: Option<GraphFunction>,
    pub eig_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            tau: None,
            tol: 1e-8,
            max_iter: 20_000,
            init: None,
            eig_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizerResult {
    pub phi: GraphFunction,
    pub c: f64,
    pub r: f64,
    pub p: f64,
    pub lambda0: f64,
    pub energy: f64,
    pub omega: f64,
    pub g_norm_sq: f64,
    pub iterations: usize,
    pub gradient_residual: f64,
    /// Energy of every accepted iterate, starting with the initial state.
    pub energy_history: Vec<f64>,
    pub tau: f64,
    pub diagnostics: Diagnostics,
}

pub fn minimize(d: &Arc<Discretization>, p: f64, c: f64, r: f64, opts: &FlowOptions) -> Result<MinimizerResult> {
    let pair = ground_state(d, opts.eig_tol)?;
    minimize_with(&pair, p, c, r, opts)
}

/// Stationary residual `‖M⁻¹g‖_{L²}/‖u‖_{L²}` with `g = Au − M|u|^{p−1}u + ωMu`.
fn residual_of(d: &Discretization, u: &[Complex64], p: f64, omega: f64) -> (Vec<Complex64>, f64) {
    let m = d.mass_weights();
    let mut g = d.form_matrix().matvec(u);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..u.len() {
        g[i] += m[i] * (omega - u[i].norm().powf(p - 1.0)) * u[i];
        num += g[i].norm_sqr() / m[i];
        den += m[i] * u[i].norm_sqr();
    }
    (g, (num / den).sqrt())
}

fn renormalize(d: &Discretization, u: &mut [Complex64], c: f64) {
    let s = (c / d.mass_of(u)).sqrt();
    for v in u.iter_mut() {
        *v *= s;
    }
}

/// Normalized gradient flow started from the ground state of `pair`.
///
/// Each step solves `(M/τ + A)v = (M/τ)u + M|u|^{p−1}u − ω(u)Mu` and rescales
/// `v` to mass `c`. With `ω(u)` the current multiplier the right-hand side
/// equals `(M/τ + A)u − g`, so `v = u − (M/τ + A)⁻¹g` is a preconditioned
/// projected gradient step and stationary states are exact fixed points.
/// A step that raises the energy is retried with `τ` halved.
pub fn minimize_with(pair: &GroundStatePair, p: f64, c: f64, r: f64, opts: &FlowOptions) -> Result<MinimizerResult> {
    if !(p >= 5.0) {
        return Err(Error::Domain(format!("minimization needs p ≥ 5, got {p}")));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("mass must be positive, got c = {c}")));
    }
    let lambda0 = pair.lambda0;
    let c_max = feasibility_bound(lambda0, r)?;
    if c > c_max {
        return Err(Error::Infeasible { c, c_max });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let d = pair.psi0.discretization().clone();
    let mut tau = opts.tau.unwrap_or(0.5 / lambda0);
    if !(tau > 0.0) {
        return Err(Error::Config(format!("pseudo-time step must be positive, got {tau}")));
    }

    let mut u: Vec<Complex64> = match &opts.init {
        Some(f) => {
            if !Arc::ptr_eq(f.discretization(), &d) && f.values().len() != d.len() {
                return Err(Error::Domain("initial state lives on another discretization".into()));
            }
            f.values().to_vec()
        }
        None => pair.psi0.values().to_vec(),
    };
    if d.mass_of(&u) == 0.0 {
        return Err(Error::Domain("initial state is zero".into()));
    }
    renormalize(&d, &mut u, c);

    let m = d.mass_weights().to_vec();
    let a = d.form_matrix();
    let factor = |tau: f64| -> Result<Ldlt<f64>> {
        let shift: Vec<f64> = m.iter().map(|w| w / tau).collect();
        Ldlt::factor(&a.combine(1.0, &shift), d.envelope())
    };
    let mut k = factor(tau)?;

    let ball = |u: &[Complex64], iteration: usize, e: f64| -> Result<f64> {
        let g = d.form_of(u) + 2.0 * lambda0 * d.mass_of(u);
        if g > r {
            Err(Error::BallExit {
                iteration,
                g_norm_sq: g,
                r,
                energy: e,
            })
        } else {
            Ok(g)
        }
    };

    let mut e = energy_of(&d, &u, p).total;
    let mut g_norm = ball(&u, 0, e)?;
    let mut history = vec![e];
    let mut residuals = Vec::new();
    let mut omega = multiplier_of(&d, &u, p, c);
    let (mut grad, mut res) = residual_of(&d, &u, p, omega);
    residuals.push(res);

    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
                history: residuals,
            });
        }
        iterations += 1;
        let mut halvings = 0;
        let candidate = loop {
            // (M/τ + A)u − g
            let mut rhs = a.matvec(&u);
            for i in 0..u.len() {
                rhs[i] += u[i] * (m[i] / tau) - grad[i];
            }
            k.solve_in_place(&mut rhs);
            renormalize(&d, &mut rhs, c);
            let delta = energy_delta(&d, &u, &rhs, p);
            if delta <= 1e-12 {
                break (rhs, e + delta);
            }
            halvings += 1;
            if halvings > 40 {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: res,
                    history: residuals,
                });
            }
            tau *= 0.5;
            k = factor(tau)?;
        };
        u = candidate.0;
        e = candidate.1;
        g_norm = ball(&u, iterations, e)?;
        history.push(e);
        omega = multiplier_of(&d, &u, p, c);
        (grad, res) = residual_of(&d, &u, p, omega);
        residuals.push(res);
    }

    e = energy_of(&d, &u, p).total;
    let phi = GraphFunction::new(d.clone(), u)?;
    let diagnostics = structure_diagnostics(&phi, &pair.psi0, lambda0, c, r, e);
    Ok(MinimizerResult {
        phi,
        c,
        r,
        p,
        lambda0,
        energy: e,
        omega,
        g_norm_sq: g_norm,
        iterations,
        gradient_residual: res,
        energy_history: history,
        tau,
        diagnostics,
    })
}

/// Linear interpolation of one edge's samples at distance `y`, zero past the
/// last grid point.
fn interpolate_edge(d: &Discretization, u: &[Complex64], e: usize, y: f64) -> Complex64 {
    let grid = &d.grids()[e];
    let n = grid.elements();
    let s = y / grid.step;
    if s >= n as f64 {
        return if s == n as f64 { u[grid.nodes[n]] } else { Complex64::new(0.0, 0.0) };
    }
    let k = s.floor() as usize;
    let t = s - k as f64;
    u[grid.nodes[k]] * (1.0 - t) + u[grid.nodes[k + 1]] * t
}

/// Energies of the mass-preserving dilations `λ^{1/2}φ(λx)` of a star-graph
/// function, each resampled on the same grid and rescaled to the mass of `φ`.
pub fn scaling_energy_curve(p: f64, phi: &GraphFunction, lambdas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let d = phi.discretization();
    if d.graph().as_star().is_none() {
        return Err(Error::Domain("dilations are defined on star graphs only".into()));
    }
    let c = phi.mass();
    if c == 0.0 {
        return Err(Error::Domain("cannot dilate the zero function".into()));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda >= 1.0) {
            return Err(Error::Domain(format!(
                "dilation factor must be at least 1 so the support stays in the truncated domain, got {lambda}"
            )));
        }
        let amp = lambda.sqrt();
        let mut v: Vec<Complex64> = d
            .locations()
            .iter()
            .map(|&(e, x)| interpolate_edge(d, phi.values(), e, lambda * x) * amp)
            .collect();
        renormalize(d, &mut v, c);
        out.push((lambda, energy_of(d, &v, p).total));
    }
    Ok(out)
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{evaluate_wave, profile_f, solve_omega_in_window, ClosedFormWave};
    use crate::graph::{make_star, StarGraphSpec};
    use crate::quad::adaptive_simpson;

    fn star(n: usize, gamma: f64, l: f64, h: f64) -> Arc<Discretization> {
        let g = make_star(StarGraphSpec { n, gamma, truncation: l }).unwrap();
        Discretization::build(&g, h).unwrap()
    }

    #[test]
    fn energy_of_zero_and_ground_state() {
        let d = star(3, 1.0, 40.0, 0.02);
        let z = energy(&GraphFunction::zeros(&d), 6.0);
        assert_eq!((z.kinetic_potential, z.nonlinear, z.total), (0.0, 0.0, 0.0));
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let c = 2.0;
        let e = energy(&pair.scaled_psi0(c), 6.0);
        assert!((e.kinetic_potential + 0.5 * pair.lambda0 * c).abs() < 1e-9);
        assert!(e.total < -0.5 * pair.lambda0 * c);
        assert_eq!(e.total, e.kinetic_potential + e.nonlinear);
    }

    /// `½∫f′² − ½γf(a)² − ∫f^{p+1}/(p+1)` summed over the edges by quadrature
    /// of the analytic profile.
    fn analytic_energy(w: &ClosedFormWave) -> f64 {
        let a = w.shift();
        let (p, omega) = (w.p, w.omega);
        let df = |x: f64| {
            let beta = 0.5 * (p - 1.0) * omega.sqrt();
            -omega.sqrt() * (beta * x).tanh() * profile_f(x, p, omega)
        };
        let per_edge = adaptive_simpson(
            |x| 0.5 * df(x + a).powi(2) - profile_f(x + a, p, omega).powf(p + 1.0) / (p + 1.0),
            0.0,
            40.0,
            1e-13,
        );
        w.n as f64 * per_edge - 0.5 * w.gamma * w.vertex_value().powi(2)
    }

    #[test]
    fn closed_form_energy_converges() {
        let w = ClosedFormWave::new(3, 1.0, 5.0, 1.0, 0).unwrap();
        let exact = analytic_energy(&w);
        let err: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| (energy(&evaluate_wave(&w, &star(3, 1.0, 40.0, h)).unwrap(), 5.0).total - exact).abs())
            .collect();
        assert!(err[1] < 1e-3 && err[0] / err[1] > 3.5, "{err:?}");
    }

    #[test]
    fn feasibility_examples() {
        assert!((feasibility_bound(1.0 / 9.0, 1.0).unwrap() - 9.0).abs() < 1e-14);
        assert_eq!(feasibility_bound(1.0, 1.0).unwrap(), 1.0);
        assert!(feasibility_bound(1.0, 0.0).is_err());
        assert!(feasibility_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn multiplier_of_closed_form_and_ground_state() {
        let w = ClosedFormWave::new(3, 1.0, 5.0, 1.0, 0).unwrap();
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let phi = evaluate_wave(&w, &star(3, 1.0, 40.0, h)).unwrap();
                (lagrange_multiplier(&phi, 5.0).unwrap() - 1.0).abs()
            })
            .collect();
        assert!(errs[1] < 1e-3 && errs[0] / errs[1] > 3.0, "{errs:?}");

        let d = star(3, 1.0, 40.0, 0.02);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let phi = pair.scaled_psi0(2.0);
        let expect = pair.lambda0 + phi.lp_norm(7.0).powi(7) / 2.0;
        assert!((lagrange_multiplier(&phi, 6.0).unwrap() - expect).abs() < 1e-9);
        assert!(lagrange_multiplier(&GraphFunction::zeros(&d), 6.0).is_err());
    }

    #[test]
    fn minimizer_matches_closed_form() {
        let d = star(3, 1.0, 40.0, 0.01);
        let c = 1.0;
        let res = minimize(&d, 6.0, c, 1.0, &FlowOptions::default()).unwrap();
        assert!((res.phi.mass() - c).abs() < 1e-10);
        assert!(res.gradient_residual <= 1e-8);
        assert!(res.g_norm_sq <= 1.0);
        assert!(res.diagnostics.all_ok(), "{:?}", res.diagnostics);
        assert!(res.omega > res.lambda0);
        for w in res.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }

        let omega = solve_omega_in_window(3, 1.0, 6.0, c, 10.0).unwrap();
        let exact = evaluate_wave(&ClosedFormWave::new(3, 1.0, 6.0, omega, 0).unwrap(), &d).unwrap();
        let diff = res.phi.map(|z| z).values().iter().zip(exact.values()).map(|(a, b)| a - b).collect();
        let diff = GraphFunction::new(d.clone(), diff).unwrap();
        let rel = (diff.h1_norm_sq() / exact.h1_norm_sq()).sqrt();
        assert!(rel < 1e-3, "relative H¹ error {rel}");
        assert!((res.omega - omega).abs() < 1e-3);
    }

    #[test]
    fn infeasible_and_invalid_inputs() {
        let d = star(3, 1.0, 40.0, 0.05);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let opts = FlowOptions::default();
        assert!(matches!(minimize_with(&pair, 6.0, 10.0, 1.0, &opts), Err(Error::Infeasible { .. })));
        assert!(matches!(minimize_with(&pair, 3.0, 1.0, 1.0, &opts), Err(Error::Domain(_))));
        assert!(matches!(minimize_with(&pair, 6.0, -1.0, 1.0, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn large_mass_is_reported_not_returned() {
        let d = star(3, 1.0, 40.0, 0.02);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let c = 0.99 / pair.lambda0;
        let opts = FlowOptions {
            max_iter: 2000,
            ..FlowOptions::default()
        };
        match minimize_with(&pair, 7.0, c, 1.0, &opts) {
            Err(Error::BallExit { g_norm_sq, r, .. }) => assert!(g_norm_sq > r),
            Err(Error::NonConvergence { .. }) => {}
            other => panic!("expected a typed failure, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_examples() {
        let d = star(3, 1.0, 30.0, 0.05);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let c = 1.0;
        let phi = pair.scaled_psi0(c);
        let e = energy(&phi, 6.0).total;
        let base = structure_diagnostics(&phi, &pair.psi0, pair.lambda0, c, 1.0, e);
        assert!(base.all_ok() && base.theta.abs() < 1e-14);

        let rotated = phi.scaled(Complex64::from_polar(1.0, PI / 3.0));
        let diag = structure_diagnostics(&rotated, &pair.psi0, pair.lambda0, c, 1.0, e);
        assert!(diag.phase_constant_ok && diag.positivity_ok);
        assert!((diag.theta - PI / 3.0).abs() < 1e-8);

        let signed = GraphFunction::from_fn(&d, |e, x| {
            Complex64::new(if e == 0 { (-0.2 * x).exp() * (1.0 - x) } else { (-0.2 * x).exp() }, 0.0)
        });
        let diag = structure_diagnostics(&signed, &pair.psi0, pair.lambda0, c, 1.0, e);
        assert!(!diag.positivity_ok);
    }

    #[test]
    fn gauge_equivariance() {
        let d = star(3, 1.0, 30.0, 0.05);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let theta = 0.7;
        let plain = minimize_with(&pair, 6.0, 1.0, 1.0, &FlowOptions::default()).unwrap();
        let opts = FlowOptions {
            init: Some(pair.psi0.scaled(Complex64::from_polar(1.0, theta))),
            ..FlowOptions::default()
        };
        let turned = minimize_with(&pair, 6.0, 1.0, 1.0, &opts).unwrap();
        assert!((turned.diagnostics.theta - theta).abs() < 1e-8);
        for (a, b) in plain.phi.values().iter().zip(turned.phi.values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-8);
        }
    }

    #[test]
    fn dilation_curve() {
        let d = star(3, 1.0, 40.0, 0.01);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let phi = pair.scaled_psi0(4.0);
        let curve = scaling_energy_curve(7.0, &phi, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].1 < w[0].1, "{curve:?}");
        }
        assert!(curve[3].1 < 2.0 * curve[2].1);
        assert!(scaling_energy_curve(7.0, &phi, &[0.5]).is_err());
        // the identity dilation reproduces the energy
        assert!((curve[0].1 - energy(&phi, 7.0).total).abs() < 1e-12);
    }

    #[test]
    fn subcritical_dilation_turns_up() {
        let d = star(3, 1.0, 40.0, 0.01);
        let pair = ground_state(&d, DEFAULT_TOL).unwrap();
        let phi = pair.scaled_psi0(1.0);
        let curve = scaling_energy_curve(3.0, &phi, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        let last = curve.len() - 1;
        assert!(curve[last].1 > curve[last - 1].1, "{curve:?}");
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}

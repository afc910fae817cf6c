//! Exact standing waves on the star graph with a δ coupling of strength `γ`
//! at the centre and no potential.
//!
//! On each half-line the wave is a shifted copy of the whole-line soliton
//!
//! ```text
//! f(x) = [((p+1)ω/2) sech²(((p−1)√ω/2) x)]^{1/(p−1)}
//! ```
//!
//! Branch `j` puts the bump out on `j` edges and the decaying tail on the
//! remaining `N − j`; the shift is fixed by the δ condition at the vertex.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{Discretization, GraphFunction};
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

pub fn profile_f(x: f64, p: f64, omega: f64) -> f64 {
    let beta = 0.5 * (p - 1.0) * omega.sqrt();
    let sech = 1.0 / (beta * x).cosh();
    (0.5 * (p + 1.0) * omega * sech * sech).powf(1.0 / (p - 1.0))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("nonlinearity exponent must exceed 1, got p = {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormWave {
    pub n: usize,
    pub gamma: f64,
    pub p: f64,
    pub omega: f64,
    pub j: usize,
}

impl ClosedFormWave {
    pub fn new(n: usize, gamma: f64, p: f64, omega: f64, j: usize) -> Result<Self> {
        check_exponent(p)?;
        if n < 2 {
            return Err(Error::Domain(format!("a star needs at least 2 edges, got {n}")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("coupling must be positive, got γ = {gamma}")));
        }
        if 2 * j >= n {
            return Err(Error::Domain(format!(
                "branch index must lie in [0, {}], got j = {j}",
                (n - 1) / 2
            )));
        }
        let w = Self { n, gamma, p, omega, j };
        if !(omega > w.threshold()) {
            return Err(Error::Domain(format!(
                "ω below existence threshold for branch j = {j}: ω = {omega} must exceed γ²/(N−2j)² = {}",
                w.threshold()
            )));
        }
        Ok(w)
    }

    /// `γ²/(N−2j)²`.
    pub fn threshold(&self) -> f64 {
        let k = (self.n - 2 * self.j) as f64;
        self.gamma * self.gamma / (k * k)
    }

    /// `artanh(γ/((N−2j)√ω))`, the shift measured in units of the soliton
    /// width.
    pub fn rapidity(&self) -> f64 {
        let k = (self.n - 2 * self.j) as f64;
        (self.gamma / (k * self.omega.sqrt())).atanh()
    }

    /// Distance `a_j` between the vertex and the soliton centre.
    pub fn shift(&self) -> f64 {
        2.0 * self.rapidity() / ((self.p - 1.0) * self.omega.sqrt())
    }

    /// Value on edge `edge` (0-based) at distance `x` from the vertex.
    pub fn value(&self, edge: usize, x: f64) -> f64 {
        let a = self.shift();
        if edge < self.j {
            profile_f(x - a, self.p, self.omega)
        } else {
            profile_f(x + a, self.p, self.omega)
        }
    }

    pub fn vertex_value(&self) -> f64 {
        profile_f(self.shift(), self.p, self.omega)
    }
}

/// Samples the wave on a star discretization.
pub fn evaluate_wave(w: &ClosedFormWave, d: &Arc<Discretization>) -> Result<GraphFunction> {
    let (n, alpha) = d
        .graph()
        .as_star()
        .ok_or_else(|| Error::Domain("closed-form waves need a potential-free star graph".into()))?;
    if n != w.n {
        return Err(Error::Domain(format!("wave has N = {} edges but the graph has {n}", w.n)));
    }
    if (alpha - w.gamma).abs() > 1e-12 * w.gamma.max(1.0) {
        return Err(Error::Domain(format!(
            "wave has γ = {} but the vertex coupling is {alpha}",
            w.gamma
        )));
    }
    Ok(GraphFunction::from_fn(d, |e, x| Complex64::new(w.value(e, x), 0.0)))
}

/// `h(x) = ∫ₓ¹ (1−t²)^{(3−p)/(p−1)} dt` for `0 ≤ x < 1`.
///
/// With `1 − t = u^k`, `k = (p−1)/2`, the endpoint singularity cancels
/// against the Jacobian and the integrand becomes `k(2 − u^k)^e`, bounded
/// and smooth on `[0, (1−x)^{1/k}]`.
pub fn h_integral(x: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if !(0.0..1.0).contains(&x) {
        return Err(Error::Domain(format!("h(x) needs 0 ≤ x < 1, got x = {x}")));
    }
    let k = 0.5 * (p - 1.0);
    let e = (3.0 - p) / (p - 1.0);
    let upper = (1.0 - x).powf(1.0 / k);
    Ok(adaptive_simpson(|u| k * (2.0 - u.powf(k)).powf(e), 0.0, upper, 1e-13))
}

/// Mass `R(ω)` of the ground branch `j = 0`.
pub fn mass_curve_r(n: usize, gamma: f64, p: f64, omega: f64) -> Result<f64> {
    let w = ClosedFormWave::new(n, gamma, p, omega, 0)?;
    Ok(mass_unchecked(&w))
}

fn mass_unchecked(w: &ClosedFormWave) -> f64 {
    let (n, p, omega) = (w.n as f64, w.p, w.omega);
    let x = w.gamma / (n * omega.sqrt());
    2.0 * n / (p - 1.0)
        * (0.5 * (p + 1.0)).powf(2.0 / (p - 1.0))
        * omega.powf((5.0 - p) / (2.0 * (p - 1.0)))
        * h_integral(x, p).unwrap_or(0.0)
}

/// Initial stretch of frequencies above threshold on which `R` increases.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneWindow {
    pub threshold: f64,
    /// Last grid frequency before `R` first fails to increase.
    pub omega_end: f64,
    pub r_end: f64,
    /// False when `R` kept increasing up to the end of the scanned range.
    pub bounded: bool,
    pub samples: Vec<(f64, f64)>,
}

/// Scans `R` on `points` frequencies whose distance to the threshold is
/// log-spaced from `10⁻⁸·threshold` to `omega_max − threshold`.
pub fn monotone_window(n: usize, gamma: f64, p: f64, omega_max: f64, points: usize) -> Result<MonotoneWindow> {
    let threshold = gamma * gamma / (n as f64 * n as f64);
    if !(omega_max > threshold) || points < 3 {
        return Err(Error::Domain(format!(
            "scan needs omega_max > {threshold} and at least 3 points"
        )));
    }
    let lo = (1e-8 * threshold).ln();
    let hi = (omega_max - threshold).ln();
    let mut samples = Vec::with_capacity(points);
    for i in 0..points {
        let s = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let omega = threshold + s.exp();
        samples.push((omega, mass_curve_r(n, gamma, p, omega)?));
    }
    let mut end = samples.len() - 1;
    let mut bounded = false;
    for i in 1..samples.len() {
        if samples[i].1 <= samples[i - 1].1 {
            end = i - 1;
            bounded = true;
            break;
        }
    }
    Ok(MonotoneWindow {
        threshold,
        omega_end: samples[end].0,
        r_end: samples[end].1,
        bounded,
        samples,
    })
}

/// Frequency `ω(c)` with `R(ω(c)) = c` inside `bracket`.
///
/// `R` is sampled across the bracket first; any decrease is reported as an
/// error rather than returning a root on the wrong branch.
pub fn solve_omega_for_mass(n: usize, gamma: f64, p: f64, c: f64, bracket: (f64, f64)) -> Result<f64> {
    check_exponent(p)?;
    let threshold = gamma * gamma / (n as f64 * n as f64);
    let (lo, hi) = bracket;
    if !(lo >= threshold && hi > lo) {
        return Err(Error::Domain(format!(
            "invalid bracket [{lo}, {hi}]: need γ²/N² = {threshold} ≤ ω_lo < ω_hi"
        )));
    }
    let r = |omega: f64| -> Result<f64> {
        if omega <= threshold {
            Ok(0.0)
        } else {
            mass_curve_r(n, gamma, p, omega)
        }
    };
    const CHECKS: usize = 64;
    let mut prev = r(lo)?;
    let r_lo = prev;
    for i in 1..=CHECKS {
        let omega = lo + (hi - lo) * i as f64 / CHECKS as f64;
        let v = r(omega)?;
        if v <= prev {
            return Err(Error::Domain(format!(
                "outside monotone window ω*: R decreases near ω = {omega:.6}"
            )));
        }
        prev = v;
    }
    let r_hi = prev;
    if !(r_lo < c && c < r_hi) {
        return Err(Error::Domain(format!(
            "root bracket does not straddle c = {c}: R(ω_lo) = {r_lo}, R(ω_hi) = {r_hi}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-13 * b {
        let m = 0.5 * (a + b);
        if r(m)? < c {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// `ω(c)` using the detected monotone window as the bracket.
pub fn solve_omega_in_window(n: usize, gamma: f64, p: f64, c: f64, omega_max: f64) -> Result<f64> {
    let win = monotone_window(n, gamma, p, omega_max, 400)?;
    solve_omega_for_mass(n, gamma, p, c, (win.threshold, win.omega_end))
}

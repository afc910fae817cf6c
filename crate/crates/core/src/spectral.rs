//! Bottom of the spectrum of the discretized operator.
//!
//! The generalized problem `Aψ = μMψ` (lumped `M`) is solved by
//! shift-and-invert iteration. Shifts are placed with Sylvester's law of
//! inertia: the number of negative pivots of `A − σM` counts the eigenvalues
//! below `σ`, so bisection brackets `μ₁` (and `μ₂`) before any iteration
//! starts and the shift is guaranteed to sit below the wanted eigenvalue.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{Discretization, GraphFunction};
use crate::error::{Error, Result};
use crate::sparse::{Ldlt, SymMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone)]
pub struct GroundStatePair {
    /// `−λ₀` is the smallest eigenvalue.
    pub lambda0: f64,
    /// Positive, `‖ψ₀‖²_{L²} = 1`.
    pub psi0: GraphFunction,
    /// `μ₂ − μ₁`.
    pub gap: f64,
    pub iterations: usize,
    /// `‖Aψ₀ + λ₀Mψ₀‖ / ‖Mψ₀‖`.
    pub residual: f64,
    pub tol: f64,
}

impl GroundStatePair {
    /// `√c ψ₀`, the canonical point of `S(c)`.
    pub fn scaled_psi0(&self, c: f64) -> GraphFunction {
        self.psi0.scaled(Complex64::new(c.sqrt(), 0.0))
    }
}

struct Pencil<'a> {
    a: &'a SymMatrix<f64>,
    disc: &'a Discretization,
}

impl Pencil<'_> {
    fn shifted(&self, sigma: f64) -> SymMatrix<f64> {
        let shift: Vec<f64> = self.disc.mass_weights().iter().map(|m| -sigma * m).collect();
        self.a.combine(1.0, &shift)
    }

    fn factor(&self, sigma: f64) -> Result<Ldlt<f64>> {
        Ldlt::factor(&self.shifted(sigma), self.disc.envelope())
    }

    /// Eigenvalues strictly below `sigma`.
    fn count_below(&self, sigma: f64) -> usize {
        let mut s = sigma;
        for _ in 0..8 {
            match self.factor(s) {
                Ok(f) => return f.negative_pivots(),
                // exactly singular: the count is the same an ulp away
                Err(_) => s -= f64::EPSILON * s.abs().max(1.0) * 16.0,
            }
        }
        self.disc.len()
    }

    /// Gershgorin interval of `M^{-1/2} A M^{-1/2}`.
    fn bounds(&self) -> (f64, f64) {
        let m = self.disc.mass_weights();
        let mut radius = vec![0.0; m.len()];
        for &(i, j, v) in self.a.upper() {
            let r = v.abs() / (m[i] * m[j]).sqrt();
            radius[i] += r;
            radius[j] += r;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m.len() {
            let c = self.a.diag()[i] / m[i];
            lo = lo.min(c - radius[i]);
            hi = hi.max(c + radius[i]);
        }
        (lo, hi)
    }

    /// Smallest `σ` (to relative precision) at which at least `k`
    /// eigenvalues lie below, given `count_below(lo) < k ≤ count_below(hi)`.
    fn bisect(&self, k: usize, mut lo: f64, mut hi: f64) -> (f64, f64) {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
                break;
            }
            if self.count_below(mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    }

    fn rayleigh(&self, x: &[f64]) -> f64 {
        let ax = self.a.matvec(x);
        let num: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(self.disc.mass_weights()).map(|(a, m)| m * a * a).sum();
        num / den
    }

    fn residual(&self, x: &[f64], mu: f64) -> f64 {
        let ax = self.a.matvec(x);
        let m = self.disc.mass_weights();
        let mut r2 = 0.0;
        let mut mx2 = 0.0;
        for i in 0..x.len() {
            let mx = m[i] * x[i];
            r2 += (ax[i] - mu * mx).powi(2);
            mx2 += mx * mx;
        }
        (r2 / mx2).sqrt()
    }

    /// Inverse iteration at shift `sigma`, M-orthogonal to `deflate`.
    fn inverse_iteration(
        &self,
        sigma: f64,
        start: Vec<f64>,
        deflate: Option<&[f64]>,
        tol: f64,
    ) -> Result<(Vec<f64>, f64, usize, f64)> {
        let f = self.factor(sigma)?;
        let m = self.disc.mass_weights();
        let m_dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(m).map(|((x, y), w)| w * x * y).sum() };
        let mut x = start;
        let mut mu = f64::NAN;
        let mut res = f64::INFINITY;
        for it in 1..=MAX_ITER {
            let mut y: Vec<f64> = x.iter().zip(m).map(|(a, w)| a * w).collect();
            f.solve_in_place(&mut y);
            if let Some(d) = deflate {
                let proj = m_dot(&y, d);
                for (yi, di) in y.iter_mut().zip(d) {
                    *yi -= proj * di;
                }
            }
            let norm = m_dot(&y, &y).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Solver("inverse iteration collapsed".into()));
            }
            x = y.into_iter().map(|v| v / norm).collect();
            mu = self.rayleigh(&x);
            res = self.residual(&x, mu);
            if res <= tol {
                return Ok((x, mu, it, res));
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_ITER,
            residual: res,
            history: vec![mu, res],
        })
    }
}

/// Smallest eigenpair `(−λ₀, ψ₀)` and the distance to the next eigenvalue.
pub fn ground_state(d: &Arc<Discretization>, tol: f64) -> Result<GroundStatePair> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("eigen-solver tolerance must be positive, got {tol}")));
    }
    let pencil = Pencil {
        a: d.form_matrix(),
        disc: d,
    };
    if pencil.count_below(0.0) == 0 {
        return Err(Error::Assumption(
            "no negative ground energy below the essential spectrum (λ₀ ≤ 0)".into(),
        ));
    }
    let (glo, ghi) = pencil.bounds();
    let margin = 1e-8 * (ghi - glo).abs().max(1.0);
    let lo = glo - margin;
    let (lo1, hi1) = pencil.bisect(1, lo, 0.0);
    let scale = hi1.abs().max(1e-300);

    let sigma1 = lo1 - 1e-7 * scale;
    let start = vec![1.0; d.len()];
    let (mut psi, mu1, it1, res1) = pencil.inverse_iteration(sigma1, start, None, tol)?;

    let n = d.len();
    let (mu2, it2) = if n < 2 {
        (f64::INFINITY, 0)
    } else {
        let (lo2, hi2) = pencil.bisect(2, lo1, ghi + margin);
        let sigma2 = lo2 - 1e-7 * hi2.abs().max(scale);
        // alternating start to overlap the second mode
        let start: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        match pencil.inverse_iteration(sigma2.max(mu1 + 0.5 * (lo2 - mu1)), start, Some(&psi), tol) {
            Ok((_, mu2, it, _)) => (mu2, it),
            Err(_) => (0.5 * (lo2 + hi2), 0),
        }
    };

    let big = psi
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let sign = big.signum();
    let mass: f64 = psi.iter().zip(d.mass_weights()).map(|(v, m)| m * v * v).sum();
    let s = sign / mass.sqrt();
    for v in &mut psi {
        *v *= s;
    }

    Ok(GroundStatePair {
        lambda0: -mu1,
        psi0: GraphFunction::from_real(d, &psi)?,
        gap: mu2 - mu1,
        iterations: it1 + it2,
        residual: res1,
        tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralGapReport {
    pub lambda0: f64,
    pub gap: f64,
    pub threshold: f64,
    /// Raised when the gap is below `10·tol`.
    pub isolation_not_certified: bool,
}

/// Flags a gap that is numerically indistinguishable from zero. A truncated
/// domain turns the essential spectrum into a dense set of eigenvalues near
/// 0, so an isolated `−λ₀` shows a gap comparable to `λ₀` itself.
pub fn spectral_gap_report(pair: &GroundStatePair) -> SpectralGapReport {
    gap_report(pair.lambda0, pair.gap, pair.tol)
}

pub fn gap_report(lambda0: f64, gap: f64, tol: f64) -> SpectralGapReport {
    let threshold = 10.0 * tol;
    SpectralGapReport {
        lambda0,
        gap,
        threshold,
        isolation_not_certified: !(gap >= threshold),
    }
}

//! Normalized standing waves of the nonlinear Schrödinger equation
//!
//! ```text
//! i ∂ₜu = Hu − |u|^{p−1}u
//! ```
//!
//! on metric graphs, where `H = −d²/dx² + W` carries δ-type couplings at the
//! vertices. The crate computes the linear ground state `(λ₀, ψ₀)`, solves the
//! mass-constrained local minimization of the energy inside the ball
//! `‖u‖²_G ≤ r`, evaluates exact star-graph standing waves, and integrates the
//! time-dependent equation to probe orbital stability.

pub mod closed_form;
pub mod discretization;
pub mod error;
pub mod evolution;
pub mod graph;
pub mod ground_state;
pub mod quad;
pub mod sparse;
pub mod spectral;

pub use closed_form::{evaluate_wave, mass_curve_r, ClosedFormWave};
pub use discretization::{Discretization, GraphFunction};
pub use error::{Error, Result};
pub use graph::{make_star, parse_graph, MetricGraph, PotentialSpec, StarGraphSpec};
pub use ground_state::{minimize, EnergyBreakdown, FlowOptions, MinimizerResult};
pub use spectral::{ground_state, GroundStatePair};

pub use num_complex::Complex64;


//! Benchmark fixtures shared by the criterion targets.

use std::sync::Arc;

use graphwave_core::{make_star, Discretization, StarGraphSpec};

/// Three-edge star with unit coupling, truncated at 40.
pub fn star3(h: f64) -> Arc<Discretization> {
    let g = make_star(StarGraphSpec { n: 3, gamma: 1.0, truncation: 40.0 }).expect("valid star");
    Discretization::build(&g, h).expect("valid step")
}

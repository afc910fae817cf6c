use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The graph configuration is malformed; `field` names the offending entry.
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    /// A standing assumption on the graph or operator does not hold.
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Discretization or solver parameters are unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `S(c) ∩ B(r)` is empty.
    #[error("infeasible mass: S(c)∩B(r) is empty iff c > r/λ₀ (c = {c}, r/λ₀ = {c_max})")]
    Infeasible { c: f64, c_max: f64 },

    /// A gradient-flow iterate left the ball `B(r)`.
    #[error("iterate {iteration} left the ball: ‖u‖²_G = {g_norm_sq} > r = {r}")]
    BallExit {
        iteration: usize,
        g_norm_sq: f64,
        r: f64,
        energy: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("blow-up suspected at t = {t}: sup-norm {sup_norm:.3e}")]
    BlowUp { t: f64, sup_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of an iterative or linear solver, as opposed to bad
    /// input or a violated precondition.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Solver(_) | Error::BlowUp { .. }
        )
    }
}

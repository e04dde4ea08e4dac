use thiserror::Error;

/// Errors raised by the channel model, the solvers and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario has no users")]
    NoUsers,

    #[error("zero-forcing needs fewer information users ({n_iu}) than access points ({n_ap})")]
    TooManyInformationUsers { n_iu: usize, n_ap: usize },

    #[error("AP grid ({rows}x{cols}, spacing {spacing} m) does not fit the room")]
    GridDoesNotFit { rows: usize, cols: usize, spacing: f64 },

    #[error("degenerate channel: Gram matrix condition number {condition:.3e}")]
    DegenerateChannel { condition: f64 },

    #[error("linearization singular: expansion bias at AP {ap} reaches the upper bias limit")]
    LinearizationSingular { ap: usize },

    #[error("bias out of linear range at AP {ap}: {bias:.6e} A")]
    BiasOutOfRange { ap: usize, bias: f64 },

    #[error("negative message power for user {user}")]
    NegativePower { user: usize },

    #[error("dual state yields unbounded power for user {user}")]
    UnboundedPower { user: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no root bracketed in [{lo}, {hi}]")]
    NoRootBracketed { lo: f64, hi: f64 },

    #[error("root finder did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GwpError {
    #[error("width matrix Q is singular (condition estimate {cond:.3e})")]
    SingularWidth { cond: f64 },

    #[error("trap is radially unstable: omega_c^2 = {omega_c_sq:.6e} <= 2 omega_3^2 = {two_omega_3_sq:.6e}")]
    UnstableTrap { omega_c_sq: f64, two_omega_3_sq: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("field model `{model}` lacks capability: {what}")]
    Capability { model: String, what: String },

    #[error("non-finite field value at node {node:?}, t = {t}")]
    Evaluation { t: f64, node: Vec<f64> },

    #[error("{quantity} has imaginary residual {residual:.3e} above tolerance {tol:.1e}")]
    ImaginaryResidual { quantity: &'static str, residual: f64, tol: f64 },

    #[error("non-finite state at step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File { path: std::path::PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GwpError>;

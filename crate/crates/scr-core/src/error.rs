//! Error taxonomy shared by every module.

use crate::resonance::ResonanceFit;

/// Unified error type for all toolkit operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The circuit eigenproblem produced a negative eigenvalue beyond tolerance.
    #[error("unstable circuit: {0}")]
    UnstableCircuit(String),
    /// The coupled electron-resonator stiffness lost positive definiteness.
    #[error("unstable coupling: {0}")]
    UnstableCoupling(String),
    /// Coincident electrons or a singular matrix.
    #[error("singular configuration: {0}")]
    Singular(String),
    /// A trace contains no identifiable dip.
    #[error("no resonance: {0}")]
    NoResonance(String),
    /// Mode tracking is ambiguous this close to the avoided crossing.
    #[error("near resonance: {0}")]
    NearResonance(String),
    /// An iterative routine exhausted its budget.
    #[error("did not converge: {0}")]
    Convergence(String),
    /// The resonance fit exhausted its budget; carries the best parameters seen.
    #[error("fit did not converge: {message}")]
    FitConvergence {
        message: String,
        best: Box<ResonanceFit>,
    },
    /// Malformed input that failed to parse against a schema.
    #[error("parse error: {0}")]
    Parse(String),
    /// Well-formed input holding out-of-domain values.
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

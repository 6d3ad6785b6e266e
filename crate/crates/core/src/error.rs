//! Crate-wide error type.
//!
//! One enum covers all modules; variants are grouped by the kind of failure so
//! callers (notably the CLI) can map them onto coarse outcome classes:
//! usage/domain errors, verification failures, and numerical failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operands or arguments refer to different variable spaces, or an index
    /// is out of range for the polynomial's variables.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Text input could not be parsed. `position` is a byte offset.
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// An exponent in the input was negative.
    #[error("negative exponent at byte {position}")]
    NegativeExponent { position: usize },

    /// A name in the input is not a known variable.
    #[error("unknown symbol `{name}` at byte {position}")]
    UnknownSymbol { name: String, position: usize },

    /// Division where the divisor is not a nonzero constant.
    #[error("division by a non-constant or zero polynomial at byte {position}")]
    BadDivisor { position: usize },

    /// A scalar parameter lies outside its admissible range.
    #[error("parameter `{name}` = {value} outside {expected}")]
    ParameterOutOfRange {
        name: String,
        value: f64,
        expected: String,
    },

    /// Requested builtin system does not exist.
    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    /// Operation requires a Hamiltonian (symplectic) system.
    #[error("system `{0}` is not symplectic; operation requires a Hamiltonian system")]
    NonSymplectic(String),

    /// Operation is not defined for this system or configuration.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Integrator configuration or sample grid is invalid.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A state or derivative stopped being finite where finiteness is required.
    #[error("non-finite state: {0}")]
    NonFinite(String),

    /// A momentum bracket could not be expressed in the momentum components.
    #[error("closure failed: {{j_{index}, h}} is not expressible in the momentum components up to degree {max_degree}")]
    ClosureFailed { index: usize, max_degree: u32 },

    /// The derivative of an invariant observable is not expressible in the
    /// invariant generators.
    #[error("reduction failed: derivative of the observable is not expressible in the invariant generators up to degree {max_degree}")]
    NotReducible { max_degree: u32 },

    /// The observable handed to a descent check is not built from the
    /// invariant generators.
    #[error("observable is not a function of the invariant generators")]
    NonInvariant,

    /// All momentum components vanish where the moving-line construction
    /// needs a direction.
    #[error("degenerate momentum: the translational momentum vanishes, no line direction exists")]
    DegenerateMomentum,

    /// A lift handed to the second reconstruction violates its defining
    /// constraints beyond the configured threshold.
    #[error("inconsistent lift: residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    InconsistentLift { residual: f64, threshold: f64 },

    /// The designated splitting of the Hamiltonian does not Poisson-commute.
    #[error("split failure: the invariant and collective parts do not commute")]
    NonCommutingSplit,
}

pub type Result<T> = std::result::Result<T, Error>;

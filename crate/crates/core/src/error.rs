use thiserror::Error;

pub type Result<T> = std::result::Result<T, SyncError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    /// A configuration field failed validation.
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The Nguyen-Le ratio observable divides by a (near) zero subcarrier.
    #[error("degenerate observation at subcarrier {subcarrier}: |X1(k)R0(k)| = {magnitude:e}")]
    DegenerateObservation { subcarrier: i64, magnitude: f64 },

    #[error("non-finite cost at (eps = {eps}, eta = {eta})")]
    NonFiniteCost { eps: f64, eta: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The 2x2 Fisher information is not positive definite.
    #[error("singular Fisher information (determinant {det:e})")]
    SingularInformation { det: f64 },

    #[error("records span more than one SNR ({first} dB and {other} dB)")]
    MixedSnr { first: f64, other: f64 },
}

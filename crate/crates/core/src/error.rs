use thiserror::Error;

/// Errors raised by the low-rank kernels, the substep solvers and the steppers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlraError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {context} at step {step}, stage {stage}")]
    NumericalBlowup {
        context: &'static str,
        step: usize,
        stage: usize,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("step rejected {retries} times (last rank {rank}, eta {eta:.3e}, theta {theta:.3e})")]
    RetriesExhausted {
        retries: usize,
        rank: usize,
        eta: f64,
        theta: f64,
    },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<DlraError>,
    },
}

pub type Result<T> = std::result::Result<T, DlraError>;

pub(crate) fn check_dims(context: &'static str, expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(DlraError::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        })
    }
}

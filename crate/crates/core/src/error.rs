use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dim {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator is not positive: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPositive { eigenvalue: f64, tolerance: f64 },

    #[error("map is not injective: vectors are linearly dependent ({which})")]
    NotInjective { which: &'static str },

    #[error("observation is off the support: residual {residual:e} exceeds {tolerance:e}")]
    InconsistentObservation { residual: f64, tolerance: f64 },

    #[error("only {accepted} samples accepted, need at least {required}")]
    TooFewAccepted { accepted: usize, required: usize },

    #[error("x lies in the subspace: |x_perp| = {norm:e} <= {tolerance:e}")]
    XInSubspace { norm: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dim {
            context,
            expected,
            found,
        })
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("bandwidth tuning failed: {0}")]
    Tuning(String),

    #[error(
        "eigensolver did not converge after {iterations} operator applications \
         ({converged} of {wanted} pairs converged, worst residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        converged: usize,
        wanted: usize,
        residual: f64,
    },

    #[error("ill-conditioned spectral solve: {0}")]
    IllConditioned(String),

    #[error("memory guard: {0}")]
    MemoryGuard(String),

    #[error("evolution step {step} (t = {time}): {source}")]
    Evolution {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs or parameters).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Tuning(_)
            | Error::NoConvergence { .. }
            | Error::IllConditioned(_)
            | Error::DegenerateInput(_) => true,
            Error::Evolution { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

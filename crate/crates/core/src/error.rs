use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("moment tensor is infeasible: {0}")]
    InfeasibleMoment(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("kinetic step unstable after {halvings} step halvings (min f = {min_value:e})")]
    Stability { halvings: usize, min_value: f64 },

    #[error("director collapsed to zero at site {site}")]
    Singularity { site: usize },

    #[error("closure failed at site {site}: {source}")]
    Closure {
        site: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleMoment(_)
                | Error::Convergence { .. }
                | Error::Stability { .. }
                | Error::Singularity { .. }
                | Error::Closure { .. }
                | Error::Numerical(_)
                | Error::Consistency(_)
                | Error::Domain(_)
        )
    }
}

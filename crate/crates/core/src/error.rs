use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// A grid layout violated one of its structural rules.
    #[error("invalid layout: {0}")]
    Layout(String),

    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("soft value iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solver failed at theta index {index}: {source}")]
    ThetaSlice {
        index: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LabError::Layout(_) | LabError::Config(_) | LabError::Domain(_)
        )
    }
}

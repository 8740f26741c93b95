use thiserror::Error;

pub type Result<T, E = DrpError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrpError {
    /// A scalar parameter fell outside its admissible range.
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    /// A pass left the blow-up radius or produced a non-finite sample.
    #[error("pass escaped at grid index {index} (t = {time})")]
    Escape { index: usize, time: f64 },

    #[error("non-finite Jacobian entry {entry} at t = {time}")]
    Linearization { time: f64, entry: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl DrpError {
    pub(crate) fn domain(name: &'static str, value: f64, range: &'static str) -> Self {
        DrpError::Domain { name, value, range }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid trial set: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTrialSet(Vec<crate::spike_data::Violation>),

    #[error("invalid window [{a}, {b}]: need b > a")]
    InvalidWindow { a: f64, b: f64 },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("delta {delta} must satisfy 0 < delta < (b-a)/2 = {half_width}")]
    InvalidDelta { delta: f64, half_width: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration of {size} tuples exceeds cap {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("coincidence function is not symmetric")]
    Asymmetric,

    #[error("zero estimated intensity for neuron {neuron}")]
    ZeroIntensity { neuron: usize },

    #[error("degenerate variance estimate sigma^2 = {sigma2}")]
    DegenerateVariance { sigma2: f64 },

    #[error("hawkes simulation exceeded {cap} events in one trial")]
    Explosion { cap: usize },
}

impl Error {
    /// Statistical degeneracies (as opposed to usage or I/O failures).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::ZeroIntensity { .. } | Error::DegenerateVariance { .. }
        )
    }
}

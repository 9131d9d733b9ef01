use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} outside the schedule [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },

    #[error("disorder draw has {got} entries, expected {expected}")]
    DrawLength { expected: usize, got: usize },

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error(
        "in-gap pair not separated from the bulk at t = {t}: separation {separation:.3e}"
    )]
    GapCollapse { t: f64, separation: f64 },

    #[error(
        "propagation not converged: doubling the steps changed probabilities by {change:.3e}; \
         try n_steps >= {suggested_steps}"
    )]
    NotConverged { change: f64, suggested_steps: usize },

    #[error("two-boson space of dimension {dimension} exceeds the limit {limit}")]
    DimensionOverflow { dimension: usize, limit: usize },

    #[error("trajectory lacks the `{0}` observable")]
    MissingObservable(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

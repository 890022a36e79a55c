use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no sign change across bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("{what}: tolerance not reached after {iterations} iterations")]
    MaxIterExceeded { what: &'static str, iterations: usize },

    #[error("integrand is not finite at x = {at}")]
    NonFinite { at: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what}: quadrature {quadrature} disagrees with closed form {closed_form}")]
    Consistency {
        what: &'static str,
        quadrature: f64,
        closed_form: f64,
    },

    #[error("scan cap {cap} reached while H(M) >= C; raise the cap to certify the largest M")]
    ScanCapHit { cap: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

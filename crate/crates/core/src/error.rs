use thiserror::Error;

pub type Result<T> = std::result::Result<T, FlmmError>;

#[derive(Debug, Error)]
pub enum FlmmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate domain [{lo}, {hi}]")]
    DegenerateDomain { lo: f64, hi: f64 },

    #[error("point {t} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },

    #[error("derivative order {requested} exceeds what the {basis} basis supports (max {max})")]
    DerivativeOrder {
        basis: String,
        requested: usize,
        max: usize,
    },

    #[error("unknown {family} strategy `{name}` (known: {known})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        known: String,
    },

    #[error("matrix is not positive definite: pivot {index} = {pivot:e} (smallest pivot seen {smallest:e})")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        smallest: f64,
    },

    #[error("non-finite update at EM iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("no finite GCV score on the grid")]
    NoFiniteScore,
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(FlmmError::InvalidArgument(msg.into()))
}

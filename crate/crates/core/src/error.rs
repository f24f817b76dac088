use core::fmt;

/// Errors raised by model validation, the ODE engine and the barrier solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    NonPositiveSigma(f64),
    NonPositiveQ(f64),
    BetaNotAboveOne(f64),
    /// A parameter was NaN or infinite; carries the parameter name.
    NonFinite(&'static str),
    NotConcave { at: f64 },
    NotNondecreasing { at: f64 },
    NegativeAtZero(f64),
    /// The cap coefficients do not match the requested kind.
    BadCoefficients(&'static str),
    NegativeArgument(f64),
    ArgumentOutOfRange { x: f64, lo: f64, hi: f64 },
    /// The truncated domain is too short for the far-field condition to be forgotten.
    DomainTooSmall { x_max: f64 },
    /// The Riccati sweep produced a non-finite value.
    IntegrationFailed { at: f64 },
    OutOfDomain { x: f64, x_max: f64 },
    SingularDenominator { b: f64 },
    NoBracketFound { lo: f64, hi: f64 },
    InconsistentDiscriminants { vd_prime_zero: f64, beta: f64, vc_zero: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonPositiveSigma(v) => write!(f, "sigma must be > 0 (got {v})"),
            Error::NonPositiveQ(v) => write!(f, "q must be > 0 (got {v})"),
            Error::BetaNotAboveOne(v) => write!(f, "beta must be > 1 (got {v})"),
            Error::NonFinite(name) => write!(f, "{name} must be finite"),
            Error::NotConcave { at } => write!(f, "rate cap is not concave near x = {at}"),
            Error::NotNondecreasing { at } => {
                write!(f, "rate cap is not nondecreasing near x = {at}")
            }
            Error::NegativeAtZero(v) => write!(f, "rate cap must satisfy F(0) >= 0 (got {v})"),
            Error::BadCoefficients(why) => write!(f, "bad rate cap coefficients: {why}"),
            Error::NegativeArgument(x) => write!(f, "argument must be >= 0 (got {x})"),
            Error::ArgumentOutOfRange { x, lo, hi } => {
                write!(f, "argument {x} outside [{lo}, {hi}]")
            }
            Error::DomainTooSmall { x_max } => {
                write!(f, "x_max = {x_max} is too small for the far-field condition")
            }
            Error::IntegrationFailed { at } => write!(f, "ODE integration diverged near x = {at}"),
            Error::OutOfDomain { x, x_max } => write!(f, "x = {x} outside solved domain [0, {x_max}]"),
            Error::SingularDenominator { b } => write!(f, "singular coefficient denominator at b = {b}"),
            Error::NoBracketFound { lo, hi } => write!(f, "no sign change found in ({lo}, {hi}]"),
            Error::InconsistentDiscriminants { vd_prime_zero, beta, vc_zero } => write!(
                f,
                "regime discriminants disagree: V_d'(0+) - beta = {}, V_c(0) = {vc_zero}",
                vd_prime_zero - beta
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    DegeneratePolytope,
    InfeasibleChop { eps: f64, bound: f64 },
    NonDelzantVertex(usize),
    UnknownVertex(usize),
    UnknownWeight(String),
    ConvexityViolation { min_eigenvalue: f64 },
    LegendreFailure { residual: f64 },
    MismatchedPolytopes,
    IncompatibleGrids,
    NonPositiveWeight { value: f64 },
    NotDominated,
    NonFanoNormalization,
    Singular(&'static str),
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegeneratePolytope => write!(f, "degenerate polytope"),
            Error::InfeasibleChop { eps, bound } => {
                write!(f, "infeasible chop: eps = {eps} outside [0, {bound})")
            }
            Error::NonDelzantVertex(v) => write!(f, "vertex {v} is not Delzant"),
            Error::UnknownVertex(v) => write!(f, "no vertex with id {v}"),
            Error::UnknownWeight(n) => write!(f, "unknown weight '{n}'"),
            Error::ConvexityViolation { min_eigenvalue } => {
                write!(f, "convexity violation (min Hessian eigenvalue {min_eigenvalue:e})")
            }
            Error::LegendreFailure { residual } => {
                write!(f, "Legendre inversion failed (residual {residual:e})")
            }
            Error::MismatchedPolytopes => write!(f, "mismatched polytopes"),
            Error::IncompatibleGrids => write!(f, "incompatible grids"),
            Error::NonPositiveWeight { value } => write!(f, "weight not positive on P (value {value:e})"),
            Error::NotDominated => write!(f, "measure not dominated by reference on grid support"),
            Error::NonFanoNormalization => write!(f, "polytope is not in anticanonical (Fano) normalization"),
            Error::Singular(what) => write!(f, "singular {what}"),
            Error::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

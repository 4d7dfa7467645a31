use alloc::string::String;
use core::fmt;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Branch table does not describe a valid piecewise-monotone map.
    MalformedMap(String),
    /// Requested depth resolves intervals below the working tolerance.
    ResolutionLimit { depth: usize, width: f64 },
    /// Point sits on a partition boundary where the itinerary is ambiguous.
    Boundary { x: f64, depth: usize },
    /// Root finder failed to bracket or converge.
    NoConvergence(String),
    /// Parameters outside the admissible range of an operation.
    InvalidParameter(String),
    /// A computation refused to run because a precondition failed.
    Refused(String),
    /// Graph-level failure (unrealizable path, missing component, path cap).
    Graph(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedMap(m) => write!(f, "malformed map: {m}"),
            Error::ResolutionLimit { depth, width } => {
                write!(f, "depth {depth} reaches resolution limit (width {width:e})")
            }
            Error::Boundary { x, depth } => {
                write!(f, "point {x} lies on a depth-{depth} partition boundary")
            }
            Error::NoConvergence(m) => write!(f, "no convergence: {m}"),
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::Refused(m) => write!(f, "refused: {m}"),
            Error::Graph(m) => write!(f, "graph error: {m}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

use crate::lattice::Site;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("stencil at site {0} leaves the computational window")]
    OutOfWindow(Site),

    #[error("field support reaches site {0}, closer than {1} hops to the window boundary")]
    SupportTooCloseToBoundary(Site, i64),

    #[error("atomistic region reaches site {0}, too close to the window boundary")]
    TooCloseToBoundary(Site),

    #[error("iterative solve stalled at relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: usize },

    #[error("point-symmetry violation: kappa[{0}] != kappa[{1}]")]
    SymmetryViolation(usize, usize),

    #[error("degenerate bond of length {0:e}")]
    DegenerateBond(f64),

    #[error("invalid potential parameter: {0}")]
    InvalidParameter(String),

    #[error("element and site forms of the Cauchy-Born energy disagree: {element} vs {site}")]
    FormMismatch { element: f64, site: f64 },

    #[error("partition is not admissible: {0} violating interface sites")]
    InadmissiblePartition(usize),

    #[error("interface is not planar")]
    NotPlanar,

    #[error("patch-test constraint system is infeasible; worst residual {max_residual:e} over {rows} rows")]
    Infeasible { max_residual: f64, rows: usize },

    #[error("no admissible corrector: residual {0:e} exceeds tolerance")]
    NoCorrector(f64),

    #[error("corrector identity fails with residual {0:e}")]
    CorrectorMismatch(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

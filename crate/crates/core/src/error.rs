use crate::puzzle::PieceId;

/// Errors raised by the analysis pipeline.
///
/// Variants mirror the failure modes of each stage; bounded verdicts
/// (`no_up_to`, `never_lands_up_to`, ...) are ordinary return values, not errors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("critical point root finding did not converge (residuals {residuals:?})")]
    RootFinding { residuals: Vec<f64> },

    #[error("V is disconnected: level {level_r} is at or below the Green level {critical_level} of an escaping critical point")]
    VDisconnected { level_r: f64, critical_level: f64 },

    #[error("every critical point escapes; the filled set has no critical component")]
    NoBoundedCritical,

    #[error("set-up failed validation: {0}")]
    SetupInvalid(String),

    #[error("depth {depth} has a component of {cells} cells (< {min_cells}); greatest fully resolved depth is {resolved_depth}")]
    ResolutionExhausted { depth: usize, cells: usize, min_cells: usize, resolved_depth: usize },

    #[error("piece {0} has no resolvable image")]
    ImageUnresolved(PieceId),

    #[error("point {re}+{im}i falls on a boundary cell at depth {depth}; refine the grid")]
    AmbiguousCell { re: f64, im: f64, depth: usize },

    #[error("depth {requested} exceeds tree depth {max_depth}")]
    DepthExhausted { requested: usize, max_depth: usize },

    #[error("orbit of the tableau origin escapes before depth {depth}")]
    OrbitEscaped { depth: usize },

    #[error(
        "periodicity confidence too low: depth extent {depth_extent} leaves fewer than {confidence} certified rows"
    )]
    ConfidenceTooLow { depth_extent: usize, confidence: usize },

    #[error("decomposition property {property} violated for classes {classes:?}")]
    PViolation { property: &'static str, classes: Vec<Vec<usize>> },

    #[error("children census for critical point {critical} is inconclusive: {census:?}")]
    Inconclusive { critical: usize, census: Vec<usize> },

    #[error("no normalizing depth <= {max_depth}; pair ({from}, {to}) still interacts")]
    NotFound { max_depth: usize, from: usize, to: usize },

    #[error("piece union members {0} and {1} overlap")]
    NotDisjoint(PieceId, PieceId),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

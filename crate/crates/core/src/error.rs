use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown domain tag `{0}`")]
    UnknownDomain(String),
    #[error("the structured generator cannot produce {target} elements on the {domain} domain")]
    UnachievableElementCount { domain: &'static str, target: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("degenerate boundary edge {0} (zero length)")]
    DegenerateEdge(usize),
    #[error("point ({x}, {y}) lies within 1e-12 of a boundary node")]
    PointAtNode { x: f64, y: f64 },
    #[error("point ({x}, {y}) is not strictly outside the closed domain")]
    PointInsideDomain { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("the problem uses the log-growth radiation condition; the scaled system needs the far-field constant variant")]
    RadiationMismatch,
    #[error("linear solve failed: {0}")]
    Singular(String),
    #[error("problem data failed validation: {0}")]
    InvalidProblem(String),
    #[error("no exact solution is available for this problem")]
    NoExactSolution,
    #[error("all refinement indicators are zero; nothing to mark")]
    ZeroIndicators,
    #[error("theta must lie in (0, 1], got {0}")]
    InvalidTheta(f64),
    #[error("the upwind indicator needs a solution computed with the upwind scheme")]
    NotUpwind,
    #[error(
        "reliability hypothesis violated: (1 - eps) * alpha_min - C_K / 4 = {margin} <= 0; \
         alpha_min must exceed C_K / (4 (1 - eps)) = {threshold}"
    )]
    ReliabilityHypothesis { margin: f64, threshold: f64 },
    #[error("eps must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("quasi-monotonicity is only defined for scalar piecewise-constant diffusion")]
    MatrixDiffusion,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

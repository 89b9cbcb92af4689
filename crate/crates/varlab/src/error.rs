use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain")]
    EmptyDomain,
    #[error("domain not connected ({components} components)")]
    DomainNotConnected { components: usize },
    #[error("cube adjacency graph disconnected: orphan component of {size} cubes containing cube level {level} anchor ({ax}, {ay})")]
    TreeDisconnected { size: usize, level: u32, ax: i64, ay: i64 },
    #[error("no Whitney cubes at this resolution")]
    NoCubes,
    #[error("dual exponent unbounded: p = {p} at cell {cell}")]
    DualUnbounded { cell: usize, p: f64 },
    #[error("alpha = {alpha} outside the admissible range ({branch})")]
    AlphaRange { alpha: f64, branch: String },
    #[error("exponent out of range: {0}")]
    ExponentRange(String),
    #[error("Luxemburg bisection did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("stencil undefined: cell {cell} has no neighbor along axis {axis}")]
    StencilUndefined { cell: usize, axis: usize },
    #[error("empty region")]
    EmptyRegion,
    #[error("exponent ordering violated at cell {cell}: {lower} > {upper}")]
    Ordering { cell: usize, lower: f64, upper: f64 },
    #[error("off-diagonal exponent relation violated at cell {cell}: {detail}")]
    OffDiagonal { cell: usize, detail: String },
    #[error("degenerate corpus: every trial has zero source norm")]
    DegenerateCorpus,
    #[error("{} cells not covered by any U_t (first: {:?})", .cells.len(), .cells.first())]
    Uncovered { cells: Vec<usize> },
    #[error("nonzero mean: |integral| = {integral:e} exceeds {bound:e}")]
    NonzeroMean { integral: f64, bound: f64 },
    #[error("oscillation hypothesis fails on node {node}; split it with partition_for_oscillation")]
    OscillationHypothesis { node: usize },
    #[error("refine grid: continuity radius {delta} is below the cell size {h}")]
    RefineGrid { delta: f64, h: f64 },
    #[error("domain closure is not contained in the ball")]
    NotInBall,
    #[error("function is not compactly supported: nonzero at boundary cell {cell}")]
    NotCompact { cell: usize },
    #[error("function is supported outside the covered region at cell {cell}")]
    OutsideCovering { cell: usize },
    #[error("alpha = 1 forces a constant exponent; the weighted inequality is only meaningful for alpha < 1")]
    AlphaOne,
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

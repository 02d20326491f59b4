use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure must contain at least one point")]
    NoPoints,
    #[error("invalid dimensions: intrinsic {intrinsic}, ambient {ambient}")]
    Dimensions { intrinsic: usize, ambient: usize },
    #[error("coordinate buffer of length {len} is not a multiple of dimension {dim}")]
    Shape { len: usize, dim: usize },
    #[error("weight count {weights} does not match point count {points}")]
    WeightCount { weights: usize, points: usize },
    #[error("point {index}: weight {value} must be positive and finite")]
    Weight { index: usize, value: f64 },
    #[error("point {index}: non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("resolution {h} must be positive, finite and not exceed the support diameter {diameter}")]
    Resolution { h: f64, diameter: f64 },
    #[error("generator produced a non-finite {what} at {at:?}")]
    NonFiniteValue { what: &'static str, at: Vec<f64> },
    #[error("grid resolution {grid} is below 2 points per axis")]
    GridTooCoarse { grid: usize },
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
    #[error("restriction to {region} is empty")]
    EmptyMeasure { region: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("expected {expected} data rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("no probe radii supplied")]
    NoRadii,
    #[error("probe radius {r} outside [{lo}, {hi}]")]
    Radius { r: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("depth {requested} is finer than the 4h floor; maximal admissible depth is {max_admissible}")]
    DepthTooFine { requested: u32, max_admissible: u32 },
    #[error("unknown cube id {0}")]
    UnknownCube(usize),
    #[error("dilation factor {0} must be at least 1")]
    Dilation(f64),
    #[error("lattice axiom violated: {0}")]
    Axiom(String),
}

#[derive(Debug, Error)]
pub enum FlatError {
    #[error("plane frame is not orthonormal (Gram deviation {0:e})")]
    Frame(f64),
    #[error("plane dimension mismatch: {0}")]
    PlaneShape(String),
    #[error("plane does not meet the ball")]
    PlaneMissesBall,
    #[error("grid step {g} exceeds radius/8 = {limit}")]
    GridStep { g: f64, limit: f64 },
    #[error("combined support of {size} points exceeds the cap {cap}")]
    SupportCap { size: usize, cap: usize },
    #[error("ball contains no support points")]
    EmptyBall,
    #[error("linear program failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Error)]
pub enum CoefficientError {
    #[error("missing records for cubes {0:?}")]
    MissingRecords(Vec<usize>),
    #[error("unsupported exponent p = {0}")]
    Exponent(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Flat(#[from] FlatError),
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("field carrier {found:016x} does not match measure {expected:016x}")]
    CarrierMismatch { expected: u64, found: u64 },
    #[error("component {component} outside 1..={dim}")]
    Component { component: usize, dim: usize },
    #[error("bump validation failed: {0}")]
    Bump(String),
    #[error("truncation radius must be positive, got {0}")]
    Truncation(f64),
    #[error("layer {j} outside the admissible range {lo}..={hi}")]
    Layer { j: i32, lo: i32, hi: i32 },
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("unknown check id {0:?}")]
    UnknownCheck(String),
    #[error("no admitted pairs ({0})")]
    NoAdmittedPairs(String),
    #[error("check {check} needs {what}")]
    Prerequisite { check: String, what: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

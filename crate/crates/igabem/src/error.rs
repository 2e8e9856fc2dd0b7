use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("breakpoints must be strictly increasing (violated at index {0})")]
    NonMonotone(usize),
    #[error("multiplicity {mult} of node {index} is out of bounds")]
    Multiplicity { index: usize, mult: usize },
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weight {0} is not positive")]
    NonPositiveWeight(usize),
    #[error("seam weights differ for a closed knot vector")]
    SeamWeights,
    #[error("invalid knot vector: {0}")]
    Invalid(String),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("derivative of a degree-0 B-spline is not defined")]
    DegreeZeroDerivative,
    #[error("fine knot vector does not refine the coarse one")]
    NotNested,
    #[error("rational weights are not supported here")]
    Rational,
    #[error("no refinement requested")]
    NoRefinement,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix is not positive definite")]
    NotSpd,
    #[error("non-positive diagonal entry {value} at index {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("index {0} in the local set has no support on new knots")]
    LocalSet(usize),
    #[error("conjugate gradients broke down at iteration {0}")]
    Breakdown(usize),
    #[error("conjugate gradients did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("quadrature order {0} is below the minimum of 2")]
    QuadratureOrder(usize),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

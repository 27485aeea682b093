//! Error types shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("degenerate affine map: |a| = {modulus} below the zero threshold")]
    DegenerateMap { modulus: f64 },
    #[error("point maps onto the logarithm branch cut near {value}")]
    OnSlit { value: Complex64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("lattice generators are real-dependent")]
    DegenerateLattice,
    #[error("piece {piece} has empty interior")]
    EmptyPiece { piece: usize },
    #[error("piece id {piece} out of range")]
    UnknownPiece { piece: usize },
    #[error("edge index {edge} out of range on piece {piece}")]
    UnknownEdge { piece: usize, edge: usize },
    #[error("unsupported gluing geometry: {0}")]
    UnsupportedGluing(String),
    #[error("malformed surface file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("start position is outside the requested piece")]
    StartOutsidePiece,
    #[error("zero initial velocity")]
    ZeroVelocity,
    #[error("loop is not closed")]
    LoopNotClosed,
    #[error("loop passes through a singularity")]
    LoopHitsSingularity,
    #[error("cusp detected at loop corner {corner}")]
    CuspDetected { corner: usize },
    #[error("loop leg {leg} leaves its piece")]
    LegLeavesPiece { leg: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("change of variable has non-invertible 1-jet")]
    NonInvertibleJet,
    #[error("truncation order {order} is below the pole order")]
    TruncationTooLow { order: i64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrregularError {
    #[error("leading coefficient is numerically zero")]
    DegenerateLeadingCoefficient,
    #[error("pole order must be at least 2, got {0}")]
    OrderTooLow(usize),
    #[error("point is outside piece {0}")]
    OutsidePiece(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraftError {
    #[error("slit is not a geodesic on the surface")]
    SlitNotGeodesic,
    #[error("slit crosses itself")]
    SlitSelfCrossing,
    #[error("slit endpoint has unsupported singularity type: {0}")]
    BadEndpointType(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelaunayError {
    #[error("seed lies on a singularity")]
    SeedOnSingularity,
    #[error("disk growth escaped to a half-plane regime")]
    HalfPlaneRegime,
    #[error("egress is unbounded; pivot degenerates to a rotation")]
    NoBoundedPencil,
    #[error("spine traversal exceeded the pivot budget of {budget}")]
    SpineTraversalCapped { budget: usize },
    #[error("surface is exceptional (2g+n = {complexity} ≤ 2)")]
    ExceptionalSkip { complexity: i64 },
    #[error("component classification failed: {0}")]
    UnclassifiedComponent(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GammaError {
    #[error("gamma pole at non-positive integer {0}")]
    PoleOfGamma(f64),
    #[error("quadrature failed to converge (estimate {estimate})")]
    QuadratureNotConverged { estimate: f64 },
    #[error("requested construction is unrealizable: needs at least {needed} Fuchsian points")]
    UnrealizableCase { needed: u32 },
}

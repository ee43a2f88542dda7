//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative density {0}")]
    NegativeDensity(f64),

    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    BadDimension(usize),

    #[error("inadmissible field: {0}")]
    InadmissibleField(String),

    #[error("block factor {block} does not divide cells per axis {n}")]
    IncompatiblePartition { block: usize, n: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("inadmissible block {0}: zero mean density with nonzero momentum")]
    InadmissibleBlock(usize),

    #[error("degenerate viscosity model: shear and bulk coefficients both zero")]
    DegenerateViscosity,

    #[error("all-vacuum field")]
    VacuumField,

    #[error("timestep rejected: update produced negative density")]
    TimestepRejected,

    #[error("solver stalled: timestep {0:e} below minimum")]
    SolverStall(f64),

    #[error("time {0} is not a snapshot time")]
    NotASnapshotTime(f64),

    #[error("sequence has {0} members, need at least 3")]
    SequenceTooShort(usize),

    #[error("sequence epsilons are not strictly decreasing")]
    NonDecreasingEpsilons,

    #[error("kinetic constraint infeasible: Lambda = {lambda} below required {required}")]
    InfeasibleConstraint { lambda: f64, required: f64 },

    #[error("patch blocks do not partition the domain: {0}")]
    BadPatchCover(String),

    #[error("block motion violates zero initial/end state (max |m| = {0:e})")]
    EndStateViolation(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("ensemble members disagree: {0}")]
    EnsembleMismatch(String),

    #[error("combination weight {0} outside [0, 1]")]
    BadLambda(f64),

    #[error("reference density {0} below floor {1}")]
    ReferenceDensityBelowFloor(f64, f64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("container format: {0}")]
    Container(String),
}

use alloc::string::String;

use crate::geometry::ContactRef;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("value count {actual} does not match grid size {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("grids do not match")]
    GridMismatch,
    #[error("point ({0}, {1}, {2}) mm lies outside the sampled domain")]
    OutOfDomain(f64, f64, f64),
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("tensor at voxel {voxel} is not positive semi-definite (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemiDefinite { voxel: usize, min_eigenvalue: f64 },
    #[error("invalid lead: {0}")]
    InvalidLead(String),
    #[error("lead {lead} lies outside the grid")]
    LeadOutsideGrid { lead: usize },
    #[error("leads {first} and {second} overlap at voxel {voxel}")]
    LeadOverlap { first: usize, second: usize, voxel: usize },
    #[error("contact {0} is not resolved by the grid (no voxel centers inside it)")]
    UnresolvedContact(ContactRef),
    #[error("contact {0} is not present in the conductor map")]
    UnknownContact(ContactRef),
    #[error("degenerate axis: {0}")]
    DegenerateAxis(String),
    #[error("invalid stimulation setting: {0}")]
    InvalidSetting(String),
    #[error("unknown tissue label {0}")]
    UnknownLabel(u32),
    #[error("invalid tissue table: {0}")]
    InvalidTissueTable(String),
    #[error("system has no Dirichlet surface and is singular")]
    SingularSystem,
    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),
    #[error("solver did not converge: relative residual {relative_residual} after {iterations} iterations")]
    NotConverged { iterations: usize, relative_residual: f64 },
    #[error("contact {0} is not floating")]
    NotFloating(ContactRef),
    #[error("solutions were computed on different conductor structures")]
    StructureMismatch,
    #[error("invalid evaluation setup: {0}")]
    InvalidEvaluation(String),
    #[error("pulse width {pulse_width} us outside table span [{min}, {max}]")]
    PulseWidthOutOfSpan { pulse_width: f64, min: f64, max: f64 },
    #[error("invalid threshold table: {0}")]
    InvalidThresholdTable(String),
    #[error("activation field lacks {0} data")]
    MissingData(&'static str),
    #[error("axon sampling differs between fields at node {0}")]
    AxonMismatch(usize),
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("masks were built for different metrics")]
    MetricMismatch,
    #[error("target region is empty")]
    EmptyTarget,
    #[error("invalid optimization setup: {0}")]
    InvalidOptimization(String),
    #[error("configuration {0} has no unit field in the bank")]
    MissingConfiguration(String),
    #[error("instance too large for exhaustive search ({0} combinations)")]
    InstanceTooLarge(u64),
}

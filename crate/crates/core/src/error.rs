//! Error taxonomy shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building trees or running solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A mark's per-step arrival probability `q_j * dt` reached 1.
    #[error("invalid intensity: mark {mark} has q*dt = {q_dt:.6} >= 1 at step {step}")]
    InvalidIntensity { mark: usize, step: usize, q_dt: f64 },

    /// The time grid has no steps.
    #[error("empty grid: at least one time step is required")]
    EmptyGrid,

    /// The grid instants are not strictly increasing, or dt <= 0 somewhere.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An adapted process is missing a value on a node it claims to cover.
    #[error("incomplete process: no value on node {node} (layer {layer})")]
    IncompleteProcess { node: usize, layer: usize },

    /// Input to the martingale decomposition was not conditionally centered.
    #[error("not a martingale increment: conditional mean {mean:.3e} at node {node}")]
    NotAMartingaleIncrement { node: usize, mean: f64 },

    /// A mark-indexed vector has the wrong number of entries.
    #[error("mark dimension error: expected {expected} mark components, got {got}")]
    MarkDimensionError { expected: usize, got: usize },

    /// The implicit step is not monotone: 1 - alpha*dt - beta*dA <= 0.
    #[error(
        "non-monotone step at layer {layer}: 1 - alpha*dt - beta*dA = {margin:.3e} <= 0; \
         use a smaller time step"
    )]
    NonMonotoneStep { layer: usize, margin: f64 },

    /// The scalar root finder could not bracket or converge.
    #[error("solver failure at node {node}: {reason}")]
    SolverFailure { node: usize, reason: String },

    /// A penalization schedule must be strictly increasing.
    #[error("invalid schedule: n-list must be strictly increasing and nonempty")]
    InvalidSchedule,

    /// The requested operation needs a barrier that the data does not carry.
    #[error("missing barrier: {0}")]
    MissingBarrier(String),

    /// Exhaustive policy enumeration would exceed the configured cap.
    #[error("enumeration too large: {count} adapted policies exceed cap {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    /// A stopping rule is undefined on a reachable node.
    #[error("invalid stopping time: no decision on node {node} (layer {layer})")]
    InvalidStoppingTime { node: usize, layer: usize },

    /// contraction_rate needs at least three Picard iterates.
    #[error("insufficient history: contraction rate needs >= 3 iterates, got {got}")]
    InsufficientHistory { got: usize },

    /// Unknown weighted-space identifier, or a space/component mismatch.
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    /// A comparison-theorem hypothesis fails at a concrete node.
    #[error("precondition violated: {condition} at node {node} (value {value:.6e})")]
    PreconditionViolated { condition: String, node: usize, value: f64 },

    /// The tree construction would exceed the node budget.
    #[error("tree too large: {nodes} nodes exceed limit {limit}")]
    TreeTooLarge { nodes: u128, limit: u128 },

    /// Problem data is inconsistent with the tree or the assumptions.
    #[error("invalid data: {0}")]
    InvalidData(String),
}

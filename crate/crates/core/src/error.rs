//! Error types shared across the crate.
//!
//! Diagnostic payloads are stored as `f64` regardless of the working scalar
//! so the error enum stays non-generic.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A constructor or operation received a value outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Total utilization must be strictly below the server count.
    #[error("unstable model: total utilization {rho_total} must be strictly below {n_servers} servers")]
    Unstable { rho_total: f64, n_servers: u32 },

    /// A sensing/imperfection transform pushed the model over the stability
    /// boundary even though the input model was stable.
    #[error("refinement-induced instability: refined utilization {rho_prime} is not strictly below {n_servers} servers")]
    RefinementInstability { rho_prime: f64, n_servers: u32 },

    /// Delay quantities are undefined when a class generates no traffic.
    #[error("delay undefined at zero arrival rate")]
    UndefinedDelay,

    /// The adaptive truncation search hit its hard cap before reaching the
    /// requested tail tolerance.
    #[error("truncation cap exceeded: achieved tail mass {achieved_tail_mass:e} above tolerance {tail_tolerance:e}")]
    TruncationCapExceeded {
        achieved_tail_mass: f64,
        tail_tolerance: f64,
    },

    /// An explicitly supplied truncation leaves more boundary mass than its
    /// own tolerance allows.
    #[error("truncation too small: boundary mass {achieved_tail_mass:e} above tolerance {tail_tolerance:e}")]
    TruncationInsufficient {
        achieved_tail_mass: f64,
        tail_tolerance: f64,
    },

    /// The stationary solve could not reach the requested balance residual
    /// within the iteration budget.
    #[error("stationary solve did not converge: residual {residual:e} above tolerance {tolerance:e}")]
    SolverDidNotConverge { residual: f64, tolerance: f64 },

    /// Mixing parameters live in [0, 1].
    #[error("mixing parameter {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    /// The two priority vertices coincide, so no mixing segment exists.
    #[error("degenerate achievable region: the two priority vertices coincide")]
    DegenerateRegion,

    /// The primary threshold demands a waiting time below what absolute
    /// priority already achieves.
    #[error("primary threshold {th_pu} at or below the best achievable waiting time {vertex_a}")]
    PuThresholdImpossible { th_pu: f64, vertex_a: f64 },

    /// The primary threshold exceeds the worst-case waiting time, so the
    /// constraint never binds and the frontier construction does not apply.
    #[error("primary threshold {th_pu} at or above the worst-case waiting time {vertex_b}; constraint never binds")]
    PuThresholdNonBinding { th_pu: f64, vertex_b: f64 },

    /// No mixing parameter satisfies both thresholds; they must be relaxed.
    #[error("infeasible thresholds: no mixing parameter satisfies both waiting-time targets")]
    InfeasibleThresholds,

    /// A simulation run exceeded its event budget before collecting the
    /// requested number of departures.
    #[error("event budget exceeded after {events} events")]
    EventBudgetExceeded { events: u64 },

    /// The simulation configuration violates its invariants.
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
}

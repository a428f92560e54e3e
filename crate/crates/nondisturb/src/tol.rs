//! Central numerical tolerances.
//!
//! Every threshold used by more than one module lives here so that the
//! relations between them stay auditable: solver accuracy sits well below
//! the gap target, which sits well below every verdict threshold.

/// Largest accepted deviation from Hermiticity before construction fails.
pub const HERMITICITY: f64 = 1e-9;

/// PSD slack: min eigenvalue must be at least `-PSD_REL * max(1, op_norm)`.
pub const PSD_REL: f64 = 1e-8;

/// Entrywise slack for POVM completeness and channel trace preservation.
pub const COMPLETENESS: f64 = 1e-8;

/// Primal/dual feasibility tolerance requested from the conic solver.
pub const SOLVER_FEAS: f64 = 1e-9;

/// Duality gap at which the conic solver may stop iterating. Certified
/// claims quote the measured gap, not this target, so it only needs to sit
/// below `SDP_GAP`.
pub const SOLVER_GAP: f64 = 1e-8;

/// Duality gap below which an SDP optimum counts as certified.
pub const SDP_GAP: f64 = 1e-7;

/// Disturbance values below this are verdicts of nondisturbance.
pub const NONDISTURBING: f64 = 1e-6;

/// Joint-measurability margin above `-JM_MARGIN` is a verdict of feasibility.
pub const JM_MARGIN: f64 = 1e-8;

/// NSIT/AoT condition defect below this counts as satisfied.
pub const CONDITION: f64 = 1e-8;

/// Frobenius residual below which span membership holds.
pub const SPAN_RESIDUAL: f64 = 1e-8;

/// Commutator norm below which two operators count as commuting.
pub const COMMUTATOR: f64 = 1e-9;

/// Elementwise slack for probability normalization per setting string.
pub const PROB_NORM: f64 = 1e-9;

/// Max eigenvalue must reach `1 - REPEATABLE` for the repeatability check.
pub const REPEATABLE: f64 = 1e-8;

/// Conditional weights of a post-processing kernel must sum to 1 this tightly.
pub const KERNEL_STOCHASTIC: f64 = 1e-12;

/// Transported-instrument disturbance may exceed the original by at most this.
pub const FREE_OP_MARGIN: f64 = 1e-7;

/// See-saw stops when a sweep improves the objective by less than this.
pub const SEESAW_IMPROVE: f64 = 1e-7;

/// See-saw accepts a step only if the objective regresses by less than this.
pub const SEESAW_MONOTONE: f64 = 1e-9;

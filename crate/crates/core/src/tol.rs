//! Numeric tolerances shared across the crate.
//!
//! Every cutoff used by a solver lives here so that tests and the CLI agree
//! on what "zero" means.

/// Kernel rows must sum to one within this.
pub const KERNEL_ROW: f64 = 1e-12;
/// Policy rows must sum to one within this.
pub const POLICY_ROW: f64 = 1e-12;
/// Maximum allowed residual of the Poisson equation after evaluation.
pub const POISSON: f64 = 1e-9;
/// Stationary distributions satisfy `nu P = nu` within this.
pub const STATIONARY: f64 = 1e-10;
/// A pair is weakly optimal when its Bellman gap is below this.
pub const WKOPT: f64 = 1e-9;
/// Strictness margin used to realize open constraints as closed ones.
pub const ZETA: f64 = 1e-9;
/// Margin used when materializing confusing certificates, chosen large
/// enough that the certificate survives the `WKOPT` classification of the
/// modified model.
pub const CERT_MARGIN: f64 = 1e-5;
/// Feasibility/optimality tolerance of the LP solver.
pub const LP: f64 = 1e-9;
/// Hitting-time value iteration stops below this sup-norm change.
pub const HITTING: f64 = 1e-10;
/// Dual bisections stop below this interval width.
pub const BISECT: f64 = 1e-10;
/// The cutting-plane loop accepts a measure when every policy constraint
/// holds within this.
pub const CUT_GAP: f64 = 1e-6;
/// Maximum cutting-plane rounds before flagging non-convergence.
pub const MAX_ROUNDS: usize = 500;
/// Deterministic-policy enumeration guard.
pub const ENUM_GUARD: u64 = 1_000_000;
/// Membership tolerance for invariant-measure systems.
pub const INVARIANT: f64 = 1e-9;

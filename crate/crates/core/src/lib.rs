//! Sequential testing of a Brownian drift with soft-classification penalties.
//!
//! An observer watches X_t = alpha theta t + sigma W_t with hidden
//! theta in {0, 1} and may stop at any time tau, paying c tau plus a
//! penalty g(Pi_tau) on the posterior probability Pi_t = P(theta = 1 | X).
//! For concave penalties with g(0) = g(1) = 0 the optimal rule is the
//! first exit of the posterior from an interval (A*, B*), found here by
//! reducing the free-boundary problem to a common-tangent equation for
//! H = g - (2/K) Psi, with K = alpha^2 / (c sigma^2).
//!
//! Modules:
//! - [`penalty`]: penalty abstraction, shipped losses, assumption checks;
//! - [`analysis`]: the generator, Psi, H, and the inflection fence pi_*, pi^*;
//! - [`solver`]: tangent solver, value function, stop/continue decisions;
//! - [`envelope`]: convex-envelope route, independent of the solver, and
//!   the only one applicable to the kinked classic penalty;
//! - [`sensitivity`]: dA*/dK and dB*/dK, K-sweeps, limit and bound checks;
//! - [`montecarlo`]: exact-in-distribution posterior simulation and Bayes
//!   risk estimation for arbitrary two-boundary rules.

pub mod analysis;
pub mod envelope;
pub mod error;
pub mod montecarlo;
pub mod penalty;
pub mod sensitivity;
pub mod solver;

mod roots;

pub use analysis::{
    apply_generator, generator_image, h, h1, h2, psi, psi1, psi2, u_boundaries, ProblemParams,
    UBoundaries,
};
pub use envelope::{convex_envelope, AffineSegment, EnvelopeResult};
pub use error::{Error, Result};
pub use montecarlo::{
    dt_risk_allowance, estimate_risk, simulate_posterior_path, RiskEstimate, SimConfig,
};
pub use penalty::{AssumptionCheck, PenaltySpec, ValidationReport, Violation};
pub use sensitivity::{
    boundary_derivatives, check_asymptotic_bounds, check_limits, sweep, BoundReport, BoundRow,
    LimitReport, SweepRow,
};
pub use solver::{
    residuals, solve, BoundarySolution, SolveMethod, StopDecision, TwoBoundarySolution,
    ValueFunction,
};

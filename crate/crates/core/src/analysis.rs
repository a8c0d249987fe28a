//! Core analytic objects of the solution.
//!
//! The posterior of the testing problem diffuses on (0, 1) with generator
//! proportional to A, where (Af)(pi) = (1/2) pi^2 (1-pi)^2 f''(pi). Three
//! functions built on A drive everything downstream:
//!
//! - Psi(pi) = (1 - 2 pi) ln(pi / (1 - pi)), the particular solution with
//!   A(Psi) = -1/2 identically, so 2/K * A(Psi) = -1/K;
//! - H(pi) = g(pi) - (2/K) Psi(pi), whose common tangents / convex envelope
//!   encode the stopping boundaries;
//! - the set U = { Ag < -1/K } with boundary points pi_* < pi^*, which
//!   fence the concave stretch of H.
//!
//! All derivatives are analytic; finite-difference consistency is enforced
//! in tests because Psi' and Psi'' blow up near the endpoints where naive
//! differencing would be meaningless.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_unit_open, Error, Result};
use crate::penalty::PenaltySpec;
use crate::roots::{bisect, DOMAIN_CLIP};

/// Signal, noise and observation-cost parameters.
///
/// Only the combination K = alpha^2 / (cost * sigma^2) enters the
/// boundaries; with unit cost it is the squared signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    alpha: f64,
    sigma: f64,
    cost: f64,
    k: f64,
}

impl ProblemParams {
    /// Builds parameters from drift magnitude, noise level and observation
    /// cost. `alpha` must be nonzero, `sigma` and `cost` positive.
    pub fn new(alpha: f64, sigma: f64, cost: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::invalid(
                "alpha",
                format!("must be nonzero, got {alpha}"),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {sigma}"),
            ));
        }
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::invalid(
                "cost",
                format!("must be positive, got {cost}"),
            ));
        }
        Ok(Self {
            alpha,
            sigma,
            cost,
            k: alpha * alpha / (cost * sigma * sigma),
        })
    }

    /// Canonical parametrization from K alone: alpha = sqrt(K), sigma = 1,
    /// cost = 1. K is kept exactly as given, so threshold comparisons like
    /// K <= 1/beta are not disturbed by the sqrt/square round trip.
    pub fn from_k(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid("K", format!("must be positive, got {k}")));
        }
        Ok(Self {
            alpha: k.sqrt(),
            sigma: 1.0,
            cost: 1.0,
            k,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// K = alpha^2 / (cost * sigma^2).
    pub fn k(&self) -> f64 {
        self.k
    }
}

/// Boundary points of U = { pi : Ag(pi) < -1/K }.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UBoundaries {
    interval: Option<(f64, f64)>,
}

impl UBoundaries {
    pub fn nonempty(&self) -> bool {
        self.interval.is_some()
    }

    /// (pi_*, pi^*) when U is nonempty.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.interval
    }
}

/// Applies the operator A to a function given its second derivative:
/// (Af)(pi) = (1/2) pi^2 (1-pi)^2 f''(pi).
pub fn apply_generator<F>(f2: F, pi: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    ensure_unit_open(pi)?;
    Ok(0.5 * pi * pi * (1.0 - pi) * (1.0 - pi) * f2(pi))
}

/// Generator image Ag of a penalty.
pub fn generator_image(p: &PenaltySpec, pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    Ok(p.ag_raw(pi))
}

pub(crate) fn psi_raw(pi: f64) -> f64 {
    (1.0 - 2.0 * pi) * (pi / (1.0 - pi)).ln()
}

pub(crate) fn psi1_raw(pi: f64) -> f64 {
    -2.0 * (pi / (1.0 - pi)).ln() + (1.0 - 2.0 * pi) / (pi * (1.0 - pi))
}

pub(crate) fn psi2_raw(pi: f64) -> f64 {
    let q = pi * (1.0 - pi);
    -2.0 / q - (1.0 - 2.0 * pi + 2.0 * pi * pi) / (q * q)
}

/// Psi(pi) = (1 - 2 pi) ln(pi / (1 - pi)); nonpositive, symmetric about 1/2,
/// diverging to -inf at both endpoints.
pub fn psi(pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    Ok(psi_raw(pi))
}

/// First derivative Psi'(pi) = -2 ln(pi/(1-pi)) + (1-2pi)/(pi(1-pi)).
pub fn psi1(pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    Ok(psi1_raw(pi))
}

/// Second derivative of Psi; satisfies (1/2) pi^2 (1-pi)^2 Psi'' = -1/2.
pub fn psi2(pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    Ok(psi2_raw(pi))
}

/// H(pi) = g(pi) - (2/K) Psi(pi).
pub fn h(p: &PenaltySpec, params: &ProblemParams, pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    Ok(HEval::new(p, params).h(pi))
}

/// H'(pi); requires a smooth penalty.
pub fn h1(p: &PenaltySpec, params: &ProblemParams, pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    require_smooth(p, "h1")?;
    Ok(HEval::new(p, params).h1(pi))
}

/// H''(pi); requires a smooth penalty.
pub fn h2(p: &PenaltySpec, params: &ProblemParams, pi: f64) -> Result<f64> {
    ensure_unit_open(pi)?;
    require_smooth(p, "h2")?;
    Ok(HEval::new(p, params).h2(pi))
}

pub(crate) fn require_smooth(p: &PenaltySpec, operation: &'static str) -> Result<()> {
    if p.is_smooth() {
        Ok(())
    } else {
        Err(Error::NonSmoothPenalty {
            penalty: p.name().to_owned(),
            operation,
        })
    }
}

/// Cached evaluator for H and its derivatives; used in the hot loops of
/// the solver and envelope modules.
pub(crate) struct HEval<'p> {
    p: &'p PenaltySpec,
    two_over_k: f64,
}

impl<'p> HEval<'p> {
    pub(crate) fn new(p: &'p PenaltySpec, params: &ProblemParams) -> Self {
        Self {
            p,
            two_over_k: 2.0 / params.k(),
        }
    }

    pub(crate) fn h(&self, pi: f64) -> f64 {
        self.p.g_raw(pi) - self.two_over_k * psi_raw(pi)
    }

    pub(crate) fn h1(&self, pi: f64) -> f64 {
        self.p.g1_raw(pi) - self.two_over_k * psi1_raw(pi)
    }

    pub(crate) fn h2(&self, pi: f64) -> f64 {
        self.p.g2_raw(pi) - self.two_over_k * psi2_raw(pi)
    }
}

/// Locates the boundary points pi_* < pi^* of U = { Ag < -1/K }.
///
/// Empty (no interval) when Ag(pi0) >= -1/K: the signal is too weak for a
/// continuation region. Otherwise the two roots of Ag + 1/K are bracketed
/// on each side of pi0 and bisected to a 1e-12 bracket; they lie strictly
/// inside (0, 1) because Ag vanishes at both endpoints.
pub fn u_boundaries(p: &PenaltySpec, params: &ProblemParams) -> Result<UBoundaries> {
    require_smooth(p, "u_boundaries")?;
    let inv_k = 1.0 / params.k();
    let pi0 = p.pi0();
    if p.ag_raw(pi0) >= -inv_k {
        return Ok(UBoundaries { interval: None });
    }
    let f = |x: f64| p.ag_raw(x) + inv_k;
    let lo = bisect(f, DOMAIN_CLIP, pi0, 1e-12, "u_boundaries lower root")?;
    let hi = bisect(f, pi0, 1.0 - DOMAIN_CLIP, 1e-12, "u_boundaries upper root")?;
    Ok(UBoundaries {
        interval: Some((lo, hi)),
    })
}

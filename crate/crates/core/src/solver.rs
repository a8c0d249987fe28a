//! Free-boundary solver via the common-tangent reduction.
//!
//! On the continuation region the value function solves
//! (A V)(pi) = -1/K with smooth fit V = g, V' = g' at both boundaries.
//! Writing H = g - (2/K) Psi turns the four boundary conditions into two
//! equations for the pair (A, B):
//!
//!   H(B) - H(A) = H'(A) (B - A)      (secant = tangent slope)
//!   H'(A) = H'(B)                    (equal slopes)
//!
//! i.e. a common tangent line of H touching once in each convex flank.
//! H' is strictly increasing on (0, pi_*), strictly decreasing on
//! (pi_*, pi^*), and strictly increasing on (pi^*, 1), with H'(0+) = -inf
//! and H'(1-) = +inf, which yields unique search brackets
//! [pi_under, pi_*] and [pi^*, pi_over] and a unique tangency pair inside
//! them. Both loops below are plain bisection on strictly monotone
//! functions.

use crate::analysis::{psi_raw, require_smooth, u_boundaries, HEval, ProblemParams};
use crate::envelope::convex_envelope;
use crate::error::{ensure_unit_open, Error, Result};
use crate::penalty::PenaltySpec;
use crate::roots::{bisect, bisect_with_left_search, bisect_with_right_search, DOMAIN_CLIP};

/// How a two-boundary solution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Nested bisection on the common-tangent equations.
    CommonTangent,
    /// Contacts of the affine segment of the convex envelope of H
    /// (fallback when the tangent equations lost their sign change to
    /// rounding, and the only route for non-smooth penalties).
    Envelope,
}

/// A solved two-boundary stopping rule and its tangent-line data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBoundarySolution {
    /// Lower stopping boundary A*.
    pub a_star: f64,
    /// Upper stopping boundary B*.
    pub b_star: f64,
    /// Lower boundary point pi_* of U = { Ag < -1/K }.
    pub pi_star_lo: f64,
    /// Upper boundary point pi^* of U.
    pub pi_star_hi: f64,
    /// Left end pi_under of the A-search bracket: H'(pi_under) = H'(pi^*).
    pub pi_under: f64,
    /// Right end pi_over of the B-search bracket: H'(pi_over) = H'(pi_*).
    pub pi_over: f64,
    /// Common tangent slope H'(A*) = H'(B*).
    pub slope: f64,
    /// Tangent value at 0: H(A*) - A* H'(A*).
    pub intercept: f64,
    pub method: SolveMethod,
}

/// Solution of the free-boundary problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySolution {
    /// V = g everywhere; stop immediately. Occurs iff Ag(pi0) >= -1/K.
    Degenerate,
    TwoBoundary(TwoBoundarySolution),
}

impl BoundarySolution {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, BoundarySolution::Degenerate)
    }

    pub fn two_boundary(&self) -> Option<&TwoBoundarySolution> {
        match self {
            BoundarySolution::Degenerate => None,
            BoundarySolution::TwoBoundary(sol) => Some(sol),
        }
    }
}

/// Stop-or-continue decision for a posterior level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Stop,
    Continue,
}

pub(crate) struct TangentProblem<'p> {
    pub(crate) he: HEval<'p>,
    pub(crate) pi_star_lo: f64,
    pub(crate) pi_star_hi: f64,
    pub(crate) pi_under: f64,
    pub(crate) pi_over: f64,
    tol: f64,
}

impl<'p> TangentProblem<'p> {
    fn new(p: &'p PenaltySpec, params: &ProblemParams, tol: f64) -> Result<Option<Self>> {
        let u = u_boundaries(p, params)?;
        let Some((pi_star_lo, pi_star_hi)) = u.bounds() else {
            return Ok(None);
        };
        let he = HEval::new(p, params);
        let h1_at_lo = he.h1(pi_star_lo);
        let h1_at_hi = he.h1(pi_star_hi);
        // H' decreases across (pi_*, pi^*), so its value at pi^* is below
        // the value at pi_*; each level is hit once more in the opposite
        // convex flank.
        let pi_under = bisect_with_left_search(
            |x| he.h1(x) - h1_at_hi,
            pi_star_lo,
            DOMAIN_CLIP,
            tol,
            "pi_under bracket",
        )?;
        let pi_over = bisect_with_right_search(
            |x| he.h1(x) - h1_at_lo,
            pi_star_hi,
            1.0 - DOMAIN_CLIP,
            tol,
            "pi_over bracket",
        )?;
        Ok(Some(Self {
            he,
            pi_star_lo,
            pi_star_hi,
            pi_under,
            pi_over,
            tol,
        }))
    }

    /// The unique B in [pi^*, pi_over] with H'(B) = H'(a). Falls back to
    /// the nearer endpoint if rounding pushed H'(a) just outside the
    /// attained range.
    pub(crate) fn b_of_a(&self, a: f64) -> f64 {
        let target = self.he.h1(a);
        match bisect(
            |x| self.he.h1(x) - target,
            self.pi_star_hi,
            self.pi_over,
            self.tol,
            "inner H' match",
        ) {
            Ok(b) => b,
            Err(_) => {
                let d_lo = (self.he.h1(self.pi_star_hi) - target).abs();
                let d_hi = (self.he.h1(self.pi_over) - target).abs();
                if d_lo <= d_hi {
                    self.pi_star_hi
                } else {
                    self.pi_over
                }
            }
        }
    }

    /// Secant mismatch S(a) = H(B(a)) - H(a) - H'(a) (B(a) - a); the
    /// common tangent is its unique zero, and S decreases strictly in a.
    pub(crate) fn secant_mismatch(&self, a: f64) -> f64 {
        let b = self.b_of_a(a);
        self.he.h(b) - self.he.h(a) - self.he.h1(a) * (b - a)
    }

    fn solve_symmetric(&self) -> Result<(f64, f64)> {
        // With g symmetric, H'(1/2) = 0 and the tangency pair is the
        // mirror pair (A, 1 - A) where H' vanishes in the left flank.
        let a = bisect(
            |x| self.he.h1(x),
            self.pi_under,
            self.pi_star_lo,
            self.tol,
            "symmetric tangency",
        )?;
        Ok((a, 1.0 - a))
    }

    fn solve_general(&self) -> Result<(f64, f64)> {
        let (mut lo, mut hi) = (self.pi_under, self.pi_star_lo);
        let mut s_lo = self.secant_mismatch(lo);
        let mut s_hi = self.secant_mismatch(hi);
        if s_lo.signum() == s_hi.signum() {
            // Tangency at a bracket end can lose its sign change to
            // floating point; widen once and retry.
            lo = (lo - 1e-10).max(DOMAIN_CLIP);
            hi = (hi + 1e-10).min(self.pi_star_hi);
            s_lo = self.secant_mismatch(lo);
            s_hi = self.secant_mismatch(hi);
            if s_lo.signum() == s_hi.signum() {
                return Err(Error::SolverFailure {
                    details: format!(
                        "no sign change of the secant mismatch on [{lo}, {hi}]: \
                         S = {s_lo} and {s_hi}"
                    ),
                });
            }
        }
        let a = bisect(
            |x| self.secant_mismatch(x),
            lo,
            hi,
            self.tol,
            "outer tangency",
        )?;
        Ok((a, self.b_of_a(a)))
    }
}

/// Solves the free-boundary problem for a smooth penalty.
///
/// Returns [`BoundarySolution::Degenerate`] when Ag(pi0) >= -1/K (stop
/// immediately, V = g). Otherwise locates the unique common tangent of H,
/// using the mirror-pair shortcut for symmetric penalties and nested
/// bisection in general; if the outer equation loses its sign change to
/// rounding the boundaries are recovered from the convex envelope and the
/// result is flagged [`SolveMethod::Envelope`].
pub fn solve(p: &PenaltySpec, params: &ProblemParams, tol: f64) -> Result<BoundarySolution> {
    require_smooth(p, "solve")?;
    if !(1e-14..=1e-6).contains(&tol) {
        return Err(Error::invalid(
            "tol",
            format!("must lie in [1e-14, 1e-6], got {tol}"),
        ));
    }
    let Some(problem) = TangentProblem::new(p, params, tol)? else {
        return Ok(BoundarySolution::Degenerate);
    };

    let primary = if p.is_symmetric() {
        problem.solve_symmetric()
    } else {
        problem.solve_general()
    };
    let (tangency, method) = match primary {
        Ok(pair) => (pair, SolveMethod::CommonTangent),
        // A tangency pinned to a bracket end can defeat the sign tests in
        // floating point; the envelope contacts are still well defined.
        Err(Error::SolverFailure { .. }) | Err(Error::BracketingFailure { .. }) => {
            let env = convex_envelope(p, params, 1_000_000)?;
            (env.boundaries()?, SolveMethod::Envelope)
        }
        Err(e) => return Err(e),
    };

    let (a_star, b_star) = tangency;
    let slope = match method {
        SolveMethod::CommonTangent => problem.he.h1(a_star),
        // Chord slope is the better-conditioned estimate for grid contacts.
        SolveMethod::Envelope => (problem.he.h(b_star) - problem.he.h(a_star)) / (b_star - a_star),
    };
    let intercept = problem.he.h(a_star) - a_star * slope;
    Ok(BoundarySolution::TwoBoundary(TwoBoundarySolution {
        a_star,
        b_star,
        pi_star_lo: problem.pi_star_lo,
        pi_star_hi: problem.pi_star_hi,
        pi_under: problem.pi_under,
        pi_over: problem.pi_over,
        slope,
        intercept,
        method,
    }))
}

/// Residuals of the tangent/secant equations at a solved pair:
/// (|H'(A*) - H'(B*)|, |H(B*) - H(A*) - H'(A*)(B* - A*)|).
pub fn residuals(p: &PenaltySpec, params: &ProblemParams, sol: &TwoBoundarySolution) -> (f64, f64) {
    let he = HEval::new(p, params);
    let tangent = (he.h1(sol.a_star) - he.h1(sol.b_star)).abs();
    let secant =
        (he.h(sol.b_star) - he.h(sol.a_star) - he.h1(sol.a_star) * (sol.b_star - sol.a_star)).abs();
    (tangent, secant)
}

/// The value function assembled from a boundary solution.
///
/// V(pi) = g(pi) outside (A*, B*) and
/// V(pi) = (2/K) Psi(pi) + slope * pi + intercept inside.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    penalty: PenaltySpec,
    params: ProblemParams,
    solution: BoundarySolution,
}

impl ValueFunction {
    /// Solves the free-boundary problem and wraps the result.
    pub fn solve(penalty: PenaltySpec, params: ProblemParams, tol: f64) -> Result<Self> {
        let solution = solve(&penalty, &params, tol)?;
        Ok(Self {
            penalty,
            params,
            solution,
        })
    }

    pub fn solution(&self) -> &BoundarySolution {
        &self.solution
    }

    pub fn penalty(&self) -> &PenaltySpec {
        &self.penalty
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    /// Evaluates V; continuous and C1 across the boundaries by smooth fit.
    pub fn value_at(&self, pi: f64) -> Result<f64> {
        ensure_unit_open(pi)?;
        match &self.solution {
            BoundarySolution::Degenerate => self.penalty.g(pi),
            BoundarySolution::TwoBoundary(sol) => {
                if pi <= sol.a_star || pi >= sol.b_star {
                    self.penalty.g(pi)
                } else {
                    let two_over_k = 2.0 / self.params.k();
                    Ok(two_over_k * psi_raw(pi) + sol.slope * pi + sol.intercept)
                }
            }
        }
    }

    /// Smallest optimal rule: continue iff the posterior is strictly
    /// inside (A*, B*); a degenerate solution always stops.
    pub fn decision(&self, pi: f64) -> Result<StopDecision> {
        ensure_unit_open(pi)?;
        Ok(match &self.solution {
            BoundarySolution::Degenerate => StopDecision::Stop,
            BoundarySolution::TwoBoundary(sol) => {
                if pi > sol.a_star && pi < sol.b_star {
                    StopDecision::Continue
                } else {
                    StopDecision::Stop
                }
            }
        })
    }
}

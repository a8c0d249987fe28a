//! Terminal penalty functions induced by soft-classification losses.
//!
//! A loss L(theta, pi) on {0,1} x [0,1] induces the expected terminal
//! penalty g(pi) = pi*L(1,pi) + (1-pi)*L(0,pi), a nonnegative concave
//! function with g(0) = g(1) = 0. The shipped instances are:
//!
//! - cross-entropy: g(pi) = -a1*pi*ln(pi) - a2*(1-pi)*ln(1-pi)
//! - L1 loss:       g(pi) = 2*pi*(1-pi)
//! - L2 loss:       g(pi) = pi*(1-pi)
//! - classic:       g(pi) = min(a1*pi, a2*(1-pi))   (kinked, hard decision)
//!
//! Besides the evaluators g, g', g'' each spec carries the minimizer `pi0`
//! of the generator image Ag(pi) = (1/2) pi^2 (1-pi)^2 g''(pi), which is
//! required to be strictly unimodal (decreasing then increasing) for the
//! tangent solver to apply. `validate_assumptions` machine-checks these
//! shape conditions on a grid.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_unit_open, Error, Result};
use crate::roots::{golden_section_min, DOMAIN_CLIP};

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A penalty function together with its derivatives and shape metadata.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Clone)]
pub struct PenaltySpec {
    name: String,
    g: EvalFn,
    g1: EvalFn,
    g2: EvalFn,
    pi0: f64,
    smooth: bool,
    symmetric: bool,
}

impl fmt::Debug for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PenaltySpec")
            .field("name", &self.name)
            .field("pi0", &self.pi0)
            .field("smooth", &self.smooth)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl PenaltySpec {
    /// Penalty value g(pi). Errors outside the open unit interval: the
    /// derivatives diverge at the endpoints and silent clamping hides bugs.
    pub fn g(&self, pi: f64) -> Result<f64> {
        ensure_unit_open(pi)?;
        Ok((self.g)(pi))
    }

    /// First derivative g'(pi).
    pub fn g1(&self, pi: f64) -> Result<f64> {
        ensure_unit_open(pi)?;
        Ok((self.g1)(pi))
    }

    /// Second derivative g''(pi).
    pub fn g2(&self, pi: f64) -> Result<f64> {
        ensure_unit_open(pi)?;
        Ok((self.g2)(pi))
    }

    /// Continuous extension of g: the limits g(0+) = g(1-) = 0 at and
    /// beyond the endpoints, g(pi) inside.
    pub fn g_extended(&self, pi: f64) -> f64 {
        if pi <= 0.0 || pi >= 1.0 {
            0.0
        } else {
            (self.g)(pi)
        }
    }

    /// Minimizer of the generator image Ag on (0, 1).
    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    /// True iff g is twice continuously differentiable on (0, 1).
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// True iff g(pi) = g(1 - pi).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// max |Ag| over [0, 1]; attained at `pi0` by unimodality. Boundaries
    /// exist exactly when K > 1/beta.
    pub fn beta(&self) -> f64 {
        self.ag_raw(self.pi0).abs()
    }

    pub(crate) fn g_raw(&self, pi: f64) -> f64 {
        (self.g)(pi)
    }

    pub(crate) fn g1_raw(&self, pi: f64) -> f64 {
        (self.g1)(pi)
    }

    pub(crate) fn g2_raw(&self, pi: f64) -> f64 {
        (self.g2)(pi)
    }

    /// Generator image (Ag)(pi) = (1/2) pi^2 (1-pi)^2 g''(pi), unchecked.
    pub(crate) fn ag_raw(&self, pi: f64) -> f64 {
        0.5 * pi * pi * (1.0 - pi) * (1.0 - pi) * (self.g2)(pi)
    }

    fn require_positive(name: &'static str, value: f64) -> Result<()> {
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(
                name,
                format!("must be positive, got {value}"),
            ))
        }
    }

    fn detect_symmetry(g: &EvalFn) -> bool {
        (1..100).all(|i| {
            let pi = i as f64 / 100.0;
            let (a, b) = (g(pi), g(1.0 - pi));
            (a - b).abs() <= 1e-12 * (1.0 + a.abs())
        })
    }

    /// Asymmetric cross-entropy penalty
    /// g(pi) = -a1*pi*ln(pi) - a2*(1-pi)*ln(1-pi).
    ///
    /// Ag(pi) = -(1/2) pi (1-pi) (a1*(1-pi) + a2*pi), so pi0 solves the
    /// quadratic 3(a1-a2) x^2 - (4a1-2a2) x + a1 = 0 (or 1/2 when a1 = a2).
    pub fn cross_entropy(a1: f64, a2: f64) -> Result<Self> {
        Self::require_positive("a1", a1)?;
        Self::require_positive("a2", a2)?;
        let pi0 = if a1 == a2 {
            0.5
        } else {
            let disc = (a1 * a1 - a1 * a2 + a2 * a2).sqrt();
            let den = 3.0 * (a1 - a2);
            let roots = [
                ((2.0 * a1 - a2) + disc) / den,
                ((2.0 * a1 - a2) - disc) / den,
            ];
            roots
                .into_iter()
                .find(|r| *r > 0.0 && *r < 1.0)
                .expect("one quadratic root lies in (0, 1) for positive a1, a2")
        };
        Ok(Self {
            name: format!("ce:{a1},{a2}"),
            g: Arc::new(move |p: f64| -a1 * p * p.ln() - a2 * (1.0 - p) * (1.0 - p).ln()),
            g1: Arc::new(move |p: f64| -a1 * (p.ln() + 1.0) + a2 * ((1.0 - p).ln() + 1.0)),
            g2: Arc::new(move |p: f64| -a1 / p - a2 / (1.0 - p)),
            pi0,
            smooth: true,
            symmetric: a1 == a2,
        })
    }

    /// Penalty induced by the L1 loss: g(pi) = 2 pi (1-pi).
    pub fn l1() -> Self {
        Self {
            name: "l1".to_owned(),
            g: Arc::new(|p: f64| 2.0 * p * (1.0 - p)),
            g1: Arc::new(|p: f64| 2.0 - 4.0 * p),
            g2: Arc::new(|_| -4.0),
            pi0: 0.5,
            smooth: true,
            symmetric: true,
        }
    }

    /// Penalty induced by the L2 loss: g(pi) = pi (1-pi), half the L1 penalty.
    pub fn l2() -> Self {
        Self {
            name: "l2".to_owned(),
            g: Arc::new(|p: f64| p * (1.0 - p)),
            g1: Arc::new(|p: f64| 1.0 - 2.0 * p),
            g2: Arc::new(|_| -2.0),
            pi0: 0.5,
            smooth: true,
            symmetric: true,
        }
    }

    /// Classic hard-classification penalty g(pi) = min(a1*pi, a2*(1-pi))
    /// with a kink at pi = a2/(a1+a2). Not smooth: the tangent solver
    /// rejects it and the envelope route must be used instead.
    pub fn classic(a1: f64, a2: f64) -> Result<Self> {
        Self::require_positive("a1", a1)?;
        Self::require_positive("a2", a2)?;
        let kink = a2 / (a1 + a2);
        Ok(Self {
            name: format!("classic:{a1},{a2}"),
            g: Arc::new(move |p: f64| (a1 * p).min(a2 * (1.0 - p))),
            g1: Arc::new(move |p: f64| if p < kink { a1 } else { -a2 }),
            g2: Arc::new(|_| 0.0),
            pi0: kink,
            smooth: false,
            symmetric: a1 == a2,
        })
    }

    /// User-defined smooth penalty. `pi0` is located by golden-section
    /// minimization of Ag, valid whenever the unimodality assumption holds;
    /// call [`PenaltySpec::validate_assumptions`] to machine-check it.
    pub fn custom<G, G1, G2>(name: impl Into<String>, g: G, g1: G1, g2: G2) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        G1: Fn(f64) -> f64 + Send + Sync + 'static,
        G2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let g: EvalFn = Arc::new(g);
        let g2: EvalFn = Arc::new(g2);
        let ag = {
            let g2 = Arc::clone(&g2);
            move |p: f64| 0.5 * p * p * (1.0 - p) * (1.0 - p) * g2(p)
        };
        let pi0 = golden_section_min(ag, 1e-6, 1.0 - 1e-6, 1e-10);
        let symmetric = Self::detect_symmetry(&g);
        Ok(Self {
            name: name.into(),
            g,
            g1: Arc::new(g1),
            g2,
            pi0,
            smooth: true,
            symmetric,
        })
    }

    /// Parses the CLI penalty grammar: `ce:a1,a2` | `l1` | `l2` | `classic:a1,a2`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: String| Error::invalid("penalty", reason);
        match spec {
            "l1" => return Ok(Self::l1()),
            "l2" => return Ok(Self::l2()),
            _ => {}
        }
        let (family, args) = spec
            .split_once(':')
            .ok_or_else(|| bad(format!("unknown penalty '{spec}'")))?;
        let (a1, a2) = args
            .split_once(',')
            .ok_or_else(|| bad(format!("expected '{family}:a1,a2', got '{spec}'")))?;
        let a1: f64 = a1
            .trim()
            .parse()
            .map_err(|_| bad(format!("cannot parse '{a1}' as a number")))?;
        let a2: f64 = a2
            .trim()
            .parse()
            .map_err(|_| bad(format!("cannot parse '{a2}' as a number")))?;
        match family {
            "ce" => Self::cross_entropy(a1, a2),
            "classic" => Self::classic(a1, a2),
            _ => Err(bad(format!("unknown penalty family '{family}'"))),
        }
    }

    /// Samples the shape assumptions on a uniform grid: nonnegativity and
    /// concavity of g, vanishing endpoint limits, and strict unimodality of
    /// Ag around its minimizer. Reports the first violating point per check.
    pub fn validate_assumptions(&self, grid_size: usize) -> Result<ValidationReport> {
        if !self.smooth {
            return Err(Error::NonSmoothPenalty {
                penalty: self.name.clone(),
                operation: "validate_assumptions",
            });
        }
        if grid_size < 100 {
            return Err(Error::invalid(
                "grid_size",
                format!("must be at least 100, got {grid_size}"),
            ));
        }

        let lo = DOMAIN_CLIP;
        let hi = 1.0 - DOMAIN_CLIP;
        let step = (hi - lo) / (grid_size - 1) as f64;
        let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();

        let mut checks = Vec::new();

        let nonneg = grid
            .iter()
            .find(|&&p| self.g_raw(p) < 0.0)
            .map(|&p| Violation::at(p, format!("g({p}) = {} < 0", self.g_raw(p))));
        checks.push(AssumptionCheck::new("g-nonnegative", nonneg));

        let concave = grid
            .iter()
            .find(|&&p| self.g2_raw(p) > 0.0)
            .map(|&p| Violation::at(p, format!("g''({p}) = {} > 0", self.g2_raw(p))));
        checks.push(AssumptionCheck::new("g-concave", concave));

        // g(0+) = g(1-) = 0 and Ag -> 0 at both endpoints, probed at fixed
        // offsets with tolerances scaled to the leading log divergence.
        let mut endpoint = None;
        for (p, tol) in [(1e-9, 1e-6), (1.0 - 1e-9, 1e-6)] {
            if self.g_raw(p).abs() > tol {
                endpoint = Some(Violation::at(p, format!("|g({p})| > {tol}")));
                break;
            }
        }
        if endpoint.is_none() {
            for (p, tol) in [
                (1e-3, 1e-2),
                (1e-6, 1e-5),
                (1.0 - 1e-3, 1e-2),
                (1.0 - 1e-6, 1e-5),
            ] {
                if self.ag_raw(p).abs() > tol {
                    endpoint = Some(Violation::at(p, format!("|Ag({p})| > {tol}")));
                    break;
                }
            }
        }
        checks.push(AssumptionCheck::new("endpoint-limits", endpoint));

        // Unimodality of Ag: decreasing up to the grid minimum, increasing
        // after it. A rounding-level tie (symmetric neighbors of pi0 give
        // bit-equal values) is not a violation.
        let ag: Vec<f64> = grid.iter().map(|&p| self.ag_raw(p)).collect();
        let min_idx = ag
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut unimodal = None;
        for i in 1..grid.len() {
            let diff = ag[i] - ag[i - 1];
            let noise = 1e-13 * (1.0 + ag[i].abs().max(ag[i - 1].abs()));
            let violates = if i <= min_idx {
                diff > noise
            } else {
                diff < -noise
            };
            if violates {
                unimodal = Some(Violation::at(
                    grid[i],
                    format!(
                        "Ag not {} at {} (Ag = {} after {})",
                        if i > min_idx {
                            "increasing"
                        } else {
                            "decreasing"
                        },
                        grid[i],
                        ag[i],
                        ag[i - 1]
                    ),
                ));
                break;
            }
        }
        checks.push(AssumptionCheck::new("generator-unimodal", unimodal));

        Ok(ValidationReport { grid_size, checks })
    }
}

/// Location and description of the first grid point violating a check.
#[derive(Debug, Clone)]
pub struct Violation {
    pub pi: f64,
    pub detail: String,
}

impl Violation {
    fn at(pi: f64, detail: String) -> Self {
        Self { pi, detail }
    }
}

/// Outcome of a single assumption check.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub violation: Option<Violation>,
}

impl AssumptionCheck {
    fn new(name: &'static str, violation: Option<Violation>) -> Self {
        Self { name, violation }
    }

    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Grid-sampled report of the shape assumption checks.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(AssumptionCheck::passed)
    }

    /// First failing check, if any.
    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| !c.passed())
    }
}

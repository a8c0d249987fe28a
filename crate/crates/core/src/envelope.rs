//! Convex-envelope route to the stopping boundaries.
//!
//! The shifted value function V - (2/K) Psi is the largest convex minorant
//! of H = g - (2/K) Psi on (0, 1). Sampling H on a fine grid and taking the
//! lower convex hull therefore recovers the boundaries as the contact
//! points of the hull's affine bridge, independently of the tangent
//! equations. This is also the only route for the kinked classic penalty,
//! which the tangent solver rejects.
//!
//! H diverges to +inf at 0 and 1 (Psi -> -inf), so the grid is clipped to
//! [1e-9, 1 - 1e-9]; the divergence guarantees interior contacts once the
//! grid is fine enough.

use crate::analysis::{HEval, ProblemParams};
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;
use crate::roots::bisect;

const GRID_EPS: f64 = 1e-9;

/// A maximal interval where the envelope runs strictly below H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSegment {
    pub left_contact: f64,
    pub right_contact: f64,
    pub slope: f64,
    pub(crate) left_index: usize,
    pub(crate) right_index: usize,
}

/// Sampled convex envelope of H.
#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    penalty: PenaltySpec,
    params: ProblemParams,
    /// Sample abscissae, strictly increasing over [1e-9, 1 - 1e-9].
    pub grid: Vec<f64>,
    /// Lower convex hull of H evaluated at the grid points.
    pub envelope_values: Vec<f64>,
    pub affine_segments: Vec<AffineSegment>,
}

/// Lower convex hull of a poly-line given by sorted abscissae; returns the
/// indices of hull vertices (monotone chain, collinear points dropped).
fn lower_hull_indices(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(64);
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Samples H on an `n`-point grid and computes its lower convex hull.
///
/// For a kinked penalty the kink abscissa is inserted into the grid
/// exactly, since a hull contact may sit there. Requires `n >= 1000`.
pub fn convex_envelope(
    p: &PenaltySpec,
    params: &ProblemParams,
    n: usize,
) -> Result<EnvelopeResult> {
    if n < 1000 {
        return Err(Error::invalid(
            "n",
            format!("grid must have at least 1000 points, got {n}"),
        ));
    }
    let lo = GRID_EPS;
    let hi = 1.0 - GRID_EPS;
    let step = (hi - lo) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    if !p.is_smooth() {
        let kink = p.pi0();
        if let Err(pos) = grid.binary_search_by(|x| x.total_cmp(&kink)) {
            grid.insert(pos, kink);
        }
    }

    let he = HEval::new(p, params);
    let h_values: Vec<f64> = grid.iter().map(|&x| he.h(x)).collect();
    let hull = lower_hull_indices(&grid, &h_values);

    let mut envelope_values = vec![0.0; grid.len()];
    let mut affine_segments = Vec::new();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        envelope_values[a] = h_values[a];
        let slope = (h_values[b] - h_values[a]) / (grid[b] - grid[a]);
        let mut max_gap = 0.0f64;
        for i in a + 1..b {
            envelope_values[i] = h_values[a] + slope * (grid[i] - grid[a]);
            max_gap = max_gap.max(h_values[i] - envelope_values[i]);
        }
        // A bridge is real only if H rises visibly above the chord
        // somewhere inside; at the exact degeneracy threshold H is flat to
        // rounding near pi0 and the hull sheds noise-level micro-segments.
        let significant = max_gap > 1e-12 * (1.0 + h_values[a].abs());
        if b - a >= 2 && significant {
            affine_segments.push(AffineSegment {
                left_contact: grid[a],
                right_contact: grid[b],
                slope,
                left_index: a,
                right_index: b,
            });
        }
    }
    if let Some(&last) = hull.last() {
        envelope_values[last] = h_values[last];
    }

    Ok(EnvelopeResult {
        penalty: p.clone(),
        params: *params,
        grid,
        envelope_values,
        affine_segments,
    })
}

impl EnvelopeResult {
    pub fn penalty(&self) -> &PenaltySpec {
        &self.penalty
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    /// Stopping boundaries as the contacts of the single affine segment.
    ///
    /// For a smooth penalty each contact is sharpened by one bisection of
    /// H' - slope inside its grid cell. Zero segments signal a degenerate
    /// problem; several signal a disconnected continuation region, which
    /// is reported but not solved.
    pub fn boundaries(&self) -> Result<(f64, f64)> {
        match self.affine_segments.len() {
            0 => Err(Error::EnvelopeDegenerate),
            1 => {
                let seg = self.affine_segments[0];
                if !self.penalty.is_smooth() {
                    return Ok((seg.left_contact, seg.right_contact));
                }
                let he = HEval::new(&self.penalty, &self.params);
                let refine = |idx: usize, contact: f64| -> f64 {
                    let lo = if idx > 0 { self.grid[idx - 1] } else { contact };
                    let hi = if idx + 1 < self.grid.len() {
                        self.grid[idx + 1]
                    } else {
                        contact
                    };
                    bisect(|x| he.h1(x) - seg.slope, lo, hi, 1e-13, "contact refine")
                        .unwrap_or(contact)
                };
                Ok((
                    refine(seg.left_index, seg.left_contact),
                    refine(seg.right_index, seg.right_contact),
                ))
            }
            k => Err(Error::EnvelopeMultiRegion { segments: k }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, BoundarySolution};

    const N: usize = 100_000;

    fn envelope(p: &PenaltySpec, k: f64, n: usize) -> EnvelopeResult {
        let params = ProblemParams::from_k(k).unwrap();
        convex_envelope(p, &params, n).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        let p = PenaltySpec::l1();
        let params = ProblemParams::from_k(16.0).unwrap();
        assert!(convex_envelope(&p, &params, 999).is_err());
    }

    #[test]
    fn hull_of_convex_points_is_identity() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x - 0.4).powi(2)).collect();
        let hull = lower_hull_indices(&xs, &ys);
        assert_eq!(hull.len(), xs.len());
    }

    #[test]
    fn degenerate_regime_has_no_segment() {
        // K = 4 < 8 = 1/beta: H is convex, envelope equals H.
        let p = PenaltySpec::cross_entropy(1.0, 1.0).unwrap();
        let env = envelope(&p, 4.0, 2000);
        assert!(env.affine_segments.is_empty());
        let he = HEval::new(&p, env.params());
        for (&x, &e) in env.grid.iter().zip(&env.envelope_values) {
            assert!((e - he.h(x)).abs() <= 1e-15, "envelope != H at {x}");
        }
        assert!(matches!(env.boundaries(), Err(Error::EnvelopeDegenerate)));
    }

    #[test]
    fn envelope_minorizes_h_and_is_convex() {
        let p = PenaltySpec::cross_entropy(1.0, 1.0).unwrap();
        let env = envelope(&p, 16.0, 20_000);
        let he = HEval::new(&p, env.params());
        for (&x, &e) in env.grid.iter().zip(&env.envelope_values) {
            assert!(e <= he.h(x) + 1e-12, "envelope above H at {x}");
        }
        for w in env.envelope_values.windows(3) {
            assert!(
                w[2] - 2.0 * w[1] + w[0] >= -1e-12,
                "concave kink in envelope"
            );
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn envelope_is_idempotent() {
        let p = PenaltySpec::l1();
        let env = envelope(&p, 16.0, 20_000);
        let hull = lower_hull_indices(&env.grid, &env.envelope_values);
        // Re-hulling the envelope keeps every value (up to interpolation
        // rounding): reconstruct and compare.
        let mut rebuilt = env.envelope_values.clone();
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            let slope =
                (env.envelope_values[b] - env.envelope_values[a]) / (env.grid[b] - env.grid[a]);
            for i in a..=b {
                rebuilt[i] = env.envelope_values[a] + slope * (env.grid[i] - env.grid[a]);
            }
        }
        for (r, e) in rebuilt.iter().zip(&env.envelope_values) {
            assert!((r - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn smooth_contacts_agree_with_tangent_solver() {
        for (p, ks) in [
            (
                PenaltySpec::cross_entropy(1.0, 1.0).unwrap(),
                [10.0, 16.0, 50.0, 200.0],
            ),
            (PenaltySpec::l1(), [10.0, 16.0, 50.0, 200.0]),
        ] {
            for k in ks {
                let params = ProblemParams::from_k(k).unwrap();
                let env = convex_envelope(&p, &params, N).unwrap();
                assert_eq!(env.affine_segments.len(), 1, "{} K={k}", p.name());
                let (a_env, b_env) = env.boundaries().unwrap();
                let sol = match solve(&p, &params, 1e-12).unwrap() {
                    BoundarySolution::TwoBoundary(sol) => sol,
                    BoundarySolution::Degenerate => unreachable!(),
                };
                let tol = 5.0 / N as f64;
                assert!(
                    (a_env - sol.a_star).abs() <= tol,
                    "{} K={k}: {a_env} vs {}",
                    p.name(),
                    sol.a_star
                );
                assert!((b_env - sol.b_star).abs() <= tol);
            }
        }
    }

    #[test]
    fn symmetric_contacts_mirror_about_half() {
        let p = PenaltySpec::l1();
        let env = envelope(&p, 16.0, N);
        let (a, b) = env.boundaries().unwrap();
        assert!((a + b - 1.0).abs() <= 2.0 / N as f64);
    }

    #[test]
    fn contacts_bracket_u_interval() {
        let p = PenaltySpec::cross_entropy(1.0, 1.0).unwrap();
        let params = ProblemParams::from_k(16.0).unwrap();
        let env = convex_envelope(&p, &params, N).unwrap();
        let (a, b) = env.boundaries().unwrap();
        let (lo, hi) = crate::analysis::u_boundaries(&p, &params)
            .unwrap()
            .bounds()
            .unwrap();
        assert!(a <= lo && b >= hi);
    }

    #[test]
    fn classic_penalty_boundaries() {
        // Independent check: the symmetric classic boundary solves
        // Psi'(A) = K/2, giving A = 0.167031420930 at K = 16 and
        // A = 0.379876354741 at K = 4.
        let p = PenaltySpec::classic(1.0, 1.0).unwrap();
        for (k, expected) in [(16.0, 0.167031420930), (4.0, 0.379876354741)] {
            let env = envelope(&p, k, N);
            assert_eq!(env.affine_segments.len(), 1);
            let (a, b) = env.boundaries().unwrap();
            let tol = 2.0 * 1.0 / N as f64;
            assert!((a - expected).abs() <= tol, "K={k}: {a} vs {expected}");
            assert!((b - (1.0 - expected)).abs() <= tol);
        }
        // Kink abscissa is inserted into the grid exactly.
        let env = envelope(&p, 16.0, N);
        assert!(env.grid.binary_search_by(|x| x.total_cmp(&0.5)).is_ok());
        // Classic has a nonempty continuation region at any K.
        for k in [0.5, 2.0, 8.0] {
            let env = envelope(&p, k, 10_000);
            assert_eq!(env.affine_segments.len(), 1, "K={k}");
        }
    }

    #[test]
    fn value_reconstruction_from_envelope() {
        // 2/K Psi + envelope reproduces the value function on the grid.
        let p = PenaltySpec::cross_entropy(1.0, 1.0).unwrap();
        let params = ProblemParams::from_k(16.0).unwrap();
        let n = 50_000;
        let env = convex_envelope(&p, &params, n).unwrap();
        let vf = crate::solver::ValueFunction::solve(p, params, 1e-12).unwrap();
        let two_over_k = 2.0 / params.k();
        let tol_scale = 5.0 / n as f64;
        for (&x, &e) in env.grid.iter().zip(&env.envelope_values) {
            let reconstructed = two_over_k * crate::analysis::psi_raw(x) + e;
            let v = vf.value_at(x).unwrap();
            assert!(
                (reconstructed - v).abs() <= tol_scale * (1.0 + v.abs()),
                "mismatch at {x}: {reconstructed} vs {v}"
            );
        }
    }

    #[test]
    fn disconnected_continuation_region_is_detected() {
        // Concave penalty whose curvature is pinched into two Cauchy bumps
        // at 0.3 and 0.7; its Ag is bimodal, so for moderate K the set
        // { Ag < -1/K } splits and the envelope needs two bridges.
        let s = 0.02;
        let f = move |u: f64| u * (u / s).atan() - (s / 2.0) * (u * u + s * s).ln();
        let g_raw = move |x: f64| -(f(x - 0.3) + f(x - 0.7));
        let offset = -g_raw(0.0);
        let p = PenaltySpec::custom(
            "double-well",
            move |x: f64| g_raw(x) + offset,
            move |x: f64| -(((x - 0.3) / s).atan() + ((x - 0.7) / s).atan()),
            move |x: f64| -(s / ((x - 0.3).powi(2) + s * s) + s / ((x - 0.7).powi(2) + s * s)),
        )
        .unwrap();
        let params = ProblemParams::from_k(4.0).unwrap();
        let env = convex_envelope(&p, &params, 50_000).unwrap();
        assert_eq!(env.affine_segments.len(), 2);
        assert!(matches!(
            env.boundaries(),
            Err(Error::EnvelopeMultiRegion { segments: 2 })
        ));
        // Bridges sit around the curvature bumps.
        let left = env.affine_segments[0];
        let right = env.affine_segments[1];
        assert!(left.left_contact < 0.3 && 0.3 < left.right_contact);
        assert!(right.left_contact < 0.7 && 0.7 < right.right_contact);
        assert!(left.right_contact < right.left_contact);
    }
}

//! Implementations of the solve / sweep / simulate / validate commands.
//!
//! Exit-code contract: 0 ok, 1 usage or parameter error, 2 degenerate
//! problem, 3 validation failure, so scripts can branch without parsing
//! text.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use seqtest::envelope::EnvelopeResult;
use seqtest::penalty::PenaltySpec;
use seqtest::solver::{BoundarySolution, SolveMethod, TwoBoundarySolution};
use seqtest::{
    analysis, convex_envelope, dt_risk_allowance, estimate_risk, residuals, solve, sweep,
    ProblemParams, RiskEstimate, SimConfig, SweepRow, ValueFunction,
};

use crate::manifest::RunManifest;
use crate::output::{fmt12, fmt12_opt};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DEGENERATE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;

pub struct CliError(pub String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type CmdResult = Result<u8, CliError>;

/// Output format for `solve`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Serialize)]
struct SolveReport {
    manifest: RunManifest,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
    a_star: Option<f64>,
    b_star: Option<f64>,
    pi_star_lo: Option<f64>,
    pi_star_hi: Option<f64>,
    pi_under: Option<f64>,
    pi_over: Option<f64>,
    slope: Option<f64>,
    intercept: Option<f64>,
}

impl SolveReport {
    fn degenerate(manifest: RunManifest) -> Self {
        Self {
            manifest,
            degenerate: true,
            method: None,
            a_star: None,
            b_star: None,
            pi_star_lo: None,
            pi_star_hi: None,
            pi_under: None,
            pi_over: None,
            slope: None,
            intercept: None,
        }
    }

    fn from_solution(manifest: RunManifest, sol: &TwoBoundarySolution) -> Self {
        Self {
            manifest,
            degenerate: false,
            method: Some(method_name(sol.method)),
            a_star: Some(sol.a_star),
            b_star: Some(sol.b_star),
            pi_star_lo: Some(sol.pi_star_lo),
            pi_star_hi: Some(sol.pi_star_hi),
            pi_under: Some(sol.pi_under),
            pi_over: Some(sol.pi_over),
            slope: Some(sol.slope),
            intercept: Some(sol.intercept),
        }
    }
}

fn method_name(method: SolveMethod) -> &'static str {
    match method {
        SolveMethod::CommonTangent => "tangent",
        SolveMethod::Envelope => "envelope",
    }
}

/// Boundaries of a kinked penalty via the envelope, with the tangent line
/// recovered from the chord of H between the contacts.
fn envelope_solution(
    p: &PenaltySpec,
    params: &ProblemParams,
    n: usize,
) -> Result<SolveReport, CliError> {
    let env = convex_envelope(p, params, n)?;
    match env.boundaries() {
        Ok((a, b)) => {
            let h_a = analysis::h(p, params, a)?;
            let h_b = analysis::h(p, params, b)?;
            let slope = (h_b - h_a) / (b - a);
            Ok(SolveReport {
                manifest: RunManifest::new("solve", p.name(), params, None),
                degenerate: false,
                method: Some("envelope"),
                a_star: Some(a),
                b_star: Some(b),
                pi_star_lo: None,
                pi_star_hi: None,
                pi_under: None,
                pi_over: None,
                slope: Some(slope),
                intercept: Some(h_a - a * slope),
            })
        }
        Err(seqtest::Error::EnvelopeDegenerate) => Ok(SolveReport::degenerate(RunManifest::new(
            "solve",
            p.name(),
            params,
            None,
        ))),
        Err(e) => Err(e.into()),
    }
}

const SOLVE_CSV_HEADER: &str =
    "K,A,B,pi_lo,pi_hi,pi_under,pi_over,slope,intercept,degenerate,method";

fn print_solve_report(report: &SolveReport, format: Format) -> Result<(), CliError> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Csv => {
            println!("{SOLVE_CSV_HEADER}");
            println!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt12(report.manifest.k),
                fmt12_opt(report.a_star),
                fmt12_opt(report.b_star),
                fmt12_opt(report.pi_star_lo),
                fmt12_opt(report.pi_star_hi),
                fmt12_opt(report.pi_under),
                fmt12_opt(report.pi_over),
                fmt12_opt(report.slope),
                fmt12_opt(report.intercept),
                report.degenerate,
                report.method.unwrap_or(""),
            );
        }
        Format::Text => {
            let field = |v: Option<f64>| fmt12_opt(v);
            println!("penalty    = {}", report.manifest.penalty);
            println!("K          = {}", fmt12(report.manifest.k));
            println!("degenerate = {}", report.degenerate);
            if let Some(m) = report.method {
                println!("method     = {m}");
            }
            println!("A*         = {}", field(report.a_star));
            println!("B*         = {}", field(report.b_star));
            println!("pi_*       = {}", field(report.pi_star_lo));
            println!("pi^*       = {}", field(report.pi_star_hi));
            println!("pi_under   = {}", field(report.pi_under));
            println!("pi_over    = {}", field(report.pi_over));
            println!("slope      = {}", field(report.slope));
            println!("intercept  = {}", field(report.intercept));
        }
    }
    Ok(())
}

pub fn cmd_solve(
    penalty: &str,
    params: ProblemParams,
    tol: f64,
    format: Format,
    grid_n: usize,
) -> CmdResult {
    let p = PenaltySpec::parse(penalty)?;
    let report = if p.is_smooth() {
        let manifest = RunManifest::new("solve", p.name(), &params, None);
        match solve(&p, &params, tol)? {
            BoundarySolution::Degenerate => SolveReport::degenerate(manifest),
            BoundarySolution::TwoBoundary(sol) => SolveReport::from_solution(manifest, &sol),
        }
    } else {
        envelope_solution(&p, &params, grid_n)?
    };
    print_solve_report(&report, format)?;
    Ok(if report.degenerate {
        EXIT_DEGENERATE
    } else {
        EXIT_OK
    })
}

pub const SWEEP_CSV_HEADER: &str = "K,A,B,pi_lo,pi_hi,dA_dK,dB_dK,degenerate";

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt12(r.k),
            fmt12_opt(r.a_star),
            fmt12_opt(r.b_star),
            fmt12_opt(r.pi_star_lo),
            fmt12_opt(r.pi_star_hi),
            fmt12_opt(r.da_dk),
            fmt12_opt(r.db_dk),
            r.a_star.is_none() && !r.failed,
        ));
    }
    out
}

pub fn cmd_sweep(
    penalty: &str,
    k_min: f64,
    k_max: f64,
    points: usize,
    log_spacing: bool,
    out: Option<&Path>,
    tol: f64,
) -> CmdResult {
    let p = PenaltySpec::parse(penalty)?;
    if points == 0 {
        return Err(CliError("--points must be at least 1".into()));
    }
    let strictly_ordered = k_min.partial_cmp(&k_max) == Some(std::cmp::Ordering::Less);
    if points > 1 && !strictly_ordered {
        return Err(CliError(format!(
            "need --K-min < --K-max, got {k_min} and {k_max}"
        )));
    }
    if log_spacing && k_min <= 0.0 {
        return Err(CliError("--log requires positive --K-min".into()));
    }
    let grid: Vec<f64> = if points == 1 {
        vec![k_min]
    } else if log_spacing {
        let ratio = (k_max / k_min).ln();
        (0..points)
            .map(|i| k_min * (ratio * i as f64 / (points - 1) as f64).exp())
            .collect()
    } else {
        (0..points)
            .map(|i| k_min + (k_max - k_min) * i as f64 / (points - 1) as f64)
            .collect()
    };

    let rows = sweep(&p, &grid, tol)?;
    let csv = sweep_csv(&rows);
    let manifest = RunManifest::new("sweep", p.name(), &ProblemParams::from_k(grid[0])?, None);
    match out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| CliError(format!("cannot write {path:?}: {e}")))?;
            let manifest_path = manifest_sidecar(path);
            fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
                .map_err(|e| CliError(format!("cannot write {manifest_path:?}: {e}")))?;
        }
        None => {
            print!("{csv}");
            eprintln!("{}", serde_json::to_string(&manifest)?);
        }
    }
    Ok(EXIT_OK)
}

fn manifest_sidecar(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

#[derive(Serialize)]
struct PerturbedEstimate {
    a: f64,
    b: f64,
    estimate: RiskEstimate,
}

#[derive(Serialize)]
struct SimulateReport {
    manifest: RunManifest,
    config: SimConfig,
    degenerate: bool,
    a_star: Option<f64>,
    b_star: Option<f64>,
    /// Exact value function at the prior.
    value: f64,
    /// Declared discretization allowance for comparing mean_risk to value.
    dt_allowance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimal: Option<RiskEstimate>,
    /// Exact risk g(prior) when the problem is degenerate (no simulation).
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbations: Option<Vec<PerturbedEstimate>>,
}

/// Interpolates the envelope at `pi` and adds back (2/K) Psi: the value
/// function of the envelope route.
fn envelope_value_at(
    env: &EnvelopeResult,
    params: &ProblemParams,
    pi: f64,
) -> Result<f64, CliError> {
    let grid = &env.grid;
    let idx = match grid.binary_search_by(|x| x.total_cmp(&pi)) {
        Ok(i) => return Ok(env.envelope_values[i] + 2.0 / params.k() * analysis::psi(pi)?),
        Err(i) => i.clamp(1, grid.len() - 1),
    };
    let (x0, x1) = (grid[idx - 1], grid[idx]);
    let w = (pi - x0) / (x1 - x0);
    let e = env.envelope_values[idx - 1] * (1.0 - w) + env.envelope_values[idx] * w;
    Ok(e + 2.0 / params.k() * analysis::psi(pi)?)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    penalty: &str,
    params: ProblemParams,
    prior: f64,
    paths: usize,
    dt: f64,
    t_max: Option<f64>,
    seed: u64,
    perturb: Option<f64>,
) -> CmdResult {
    let p = PenaltySpec::parse(penalty)?;
    let t_max = t_max.unwrap_or_else(|| SimConfig::default_t_max(params.cost()));
    let cfg = SimConfig::new(prior, paths, dt, t_max, seed)?;
    let manifest = RunManifest::new("simulate", p.name(), &params, Some(seed));

    // Locate boundaries and the exact value at the prior.
    let (boundaries, value) = if p.is_smooth() {
        let vf = ValueFunction::solve(p.clone(), params, 1e-12)?;
        let value = vf.value_at(prior)?;
        (
            vf.solution().two_boundary().map(|s| (s.a_star, s.b_star)),
            value,
        )
    } else {
        let env = convex_envelope(&p, &params, 1_000_000)?;
        match env.boundaries() {
            Ok((a, b)) => (Some((a, b)), envelope_value_at(&env, &params, prior)?),
            Err(seqtest::Error::EnvelopeDegenerate) => (None, p.g(prior)?),
            Err(e) => return Err(e.into()),
        }
    };

    let Some((a_star, b_star)) = boundaries else {
        let report = SimulateReport {
            manifest,
            config: cfg,
            degenerate: true,
            a_star: None,
            b_star: None,
            value,
            dt_allowance: dt_risk_allowance(&params, dt),
            optimal: None,
            analytic_risk: Some(p.g(prior)?),
            perturbations: None,
        };
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(EXIT_DEGENERATE);
    };

    let optimal = estimate_risk(&params, &p, a_star, b_star, &cfg)?;
    let perturbations = match perturb {
        None => None,
        Some(delta) => {
            let clamp = |x: f64| x.clamp(1e-9, 1.0 - 1e-9);
            let rules = [
                (clamp(a_star - delta), b_star),
                ((a_star + delta).min(b_star), b_star),
                (a_star, (b_star - delta).max(a_star)),
                (a_star, clamp(b_star + delta)),
            ];
            let mut entries = Vec::with_capacity(rules.len());
            for (a, b) in rules {
                entries.push(PerturbedEstimate {
                    a,
                    b,
                    estimate: estimate_risk(&params, &p, a, b, &cfg)?,
                });
            }
            Some(entries)
        }
    };

    let report = SimulateReport {
        manifest,
        config: cfg,
        degenerate: false,
        a_star: Some(a_star),
        b_star: Some(b_star),
        value,
        dt_allowance: dt_risk_allowance(&params, dt),
        optimal: Some(optimal),
        analytic_risk: None,
        perturbations,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn cmd_validate(penalty: &str, params: ProblemParams, tol: f64, grid_n: usize) -> CmdResult {
    let p = PenaltySpec::parse(penalty)?;
    let mut checks: Vec<Check> = Vec::new();

    if p.is_smooth() {
        let report = p.validate_assumptions(1000)?;
        checks.push(Check {
            name: "assumptions",
            passed: report.passed(),
            detail: match report.first_failure() {
                None => "shape conditions hold on a 1000-point grid".into(),
                Some(check) => format!(
                    "{} violated: {}",
                    check.name,
                    check
                        .violation
                        .as_ref()
                        .map_or(String::new(), |v| v.detail.clone())
                ),
            },
        });
    } else {
        checks.push(Check {
            name: "assumptions",
            passed: true,
            detail: "skipped (non-smooth penalty)".into(),
        });
    }

    let solver_solution = if p.is_smooth() {
        match solve(&p, &params, tol) {
            Ok(sol) => {
                let detail = match &sol {
                    BoundarySolution::Degenerate => "degenerate (stop immediately)".to_owned(),
                    BoundarySolution::TwoBoundary(s) => format!(
                        "A* = {}, B* = {} ({})",
                        fmt12(s.a_star),
                        fmt12(s.b_star),
                        method_name(s.method)
                    ),
                };
                checks.push(Check {
                    name: "solve",
                    passed: true,
                    detail,
                });
                Some(sol)
            }
            Err(e) => {
                checks.push(Check {
                    name: "solve",
                    passed: false,
                    detail: e.to_string(),
                });
                None
            }
        }
    } else {
        checks.push(Check {
            name: "solve",
            passed: true,
            detail: "skipped (non-smooth penalty, envelope route only)".into(),
        });
        None
    };

    let envelope = match convex_envelope(&p, &params, grid_n) {
        Ok(env) => {
            checks.push(Check {
                name: "envelope",
                passed: true,
                detail: format!("{} affine segment(s)", env.affine_segments.len()),
            });
            Some(env)
        }
        Err(e) => {
            checks.push(Check {
                name: "envelope",
                passed: false,
                detail: e.to_string(),
            });
            None
        }
    };

    if let (Some(sol), Some(env)) = (&solver_solution, &envelope) {
        let agreement = match (sol, env.boundaries()) {
            (BoundarySolution::Degenerate, Err(seqtest::Error::EnvelopeDegenerate)) => Check {
                name: "agreement",
                passed: true,
                detail: "both routes degenerate".into(),
            },
            (BoundarySolution::TwoBoundary(s), Ok((a_env, b_env))) => {
                let tol_agree = (5.0 / grid_n as f64).max(1e-9);
                let (da, db) = ((s.a_star - a_env).abs(), (s.b_star - b_env).abs());
                Check {
                    name: "agreement",
                    passed: da <= tol_agree && db <= tol_agree,
                    detail: format!(
                        "|dA| = {:.2e}, |dB| = {:.2e} (tol {:.2e})",
                        da, db, tol_agree
                    ),
                }
            }
            (BoundarySolution::Degenerate, Ok(_)) => Check {
                name: "agreement",
                passed: false,
                detail: "solver degenerate but envelope found a segment".into(),
            },
            (BoundarySolution::TwoBoundary(_), Err(e)) => Check {
                name: "agreement",
                passed: false,
                detail: format!("solver found boundaries but envelope failed: {e}"),
            },
            (_, Err(e)) => Check {
                name: "agreement",
                passed: false,
                detail: e.to_string(),
            },
        };
        checks.push(agreement);

        if let BoundarySolution::TwoBoundary(s) = sol {
            let (r_tangent, r_secant) = residuals(&p, &params, s);
            let scale = analysis::h2(&p, &params, s.a_star)?.abs().max(1.0);
            let bound = 1e-10 * scale;
            checks.push(Check {
                name: "residuals",
                passed: r_tangent <= bound && r_secant <= bound,
                detail: format!(
                    "tangent {:.2e}, secant {:.2e} (bound {:.2e})",
                    r_tangent, r_secant, bound
                ),
            });
        }
    }

    println!("{:<12} {:<6} detail", "check", "status");
    for c in &checks {
        println!(
            "{:<12} {:<6} {}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    if let Some(first_fail) = checks.iter().find(|c| !c.passed) {
        let mut stderr = std::io::stderr().lock();
        let _ = writeln!(stderr, "validation failed: {}", first_fail.name);
        return Ok(EXIT_VALIDATION);
    }
    Ok(EXIT_OK)
}

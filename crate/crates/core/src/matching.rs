//! Phase-plane matching at an interior abscissa `x0`.
//!
//! Solutions continued from the origin trace a curve parametrized by
//! `u(0) = c`; solutions continued from `x = 1` trace a second curve
//! parametrized by `u(1) = b`. Every crossing of the two curves is a C^1 －
//! and since both branches are analytic, an analytic — matching, i.e. a
//! global solution on the unit interval. The family structure is read off
//! from how the `b`-curve sits relative to the wrapping point of the
//! `c`-curve's spiral.

use rayon::prelude::*;
use serde::Serialize;

use std::io::{self, Write};

use crate::continuation::{integrate, monitor, IntegrateOpts, Trajectory};
use crate::equation::GeneralEquation;
use crate::error::{Error, Result};
use crate::expansion::{expand_at_one, expand_at_zero, LocalSolution};
use crate::series::PhasePoint;

/// Which endpoint a phase curve is continued from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    /// From the origin, parametrized by `u(0) = c`.
    C0,
    /// From `x = 1`, parametrized by `u(1) = b`.
    C1,
}

/// Options shared by curve tracing, refinement, and classification.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceOptions {
    /// Endpoint offset where series hand over to the integrator; shrinks
    /// automatically when a series' trust radius demands it.
    pub epsilon: f64,
    pub series_order: usize,
    pub integrate: IntegrateOpts,
    /// Record Lyapunov diagnostics along every traced branch.
    pub monitor: bool,
    /// Relative phase-plane band around the wrapping point that counts as
    /// "the b-curve passes through it".
    pub p_inf_band: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            series_order: 40,
            integrate: IntegrateOpts::default(),
            monitor: false,
            p_inf_band: 1e-3,
        }
    }
}

/// A family of phase states at a fixed abscissa, one per parameter value.
/// Parameters whose continuation failed (blow-up, step underflow, series
/// overflow) are listed in `failures` and carry no point.
#[derive(Clone, Debug)]
pub struct PhaseCurve {
    pub which: CurveKind,
    pub x0: f64,
    pub params: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub failures: Vec<f64>,
    /// Total Lyapunov violations over the monitored branches, when
    /// monitoring ran.
    pub lyapunov_violations: Option<usize>,
}

impl PhaseCurve {
    /// Index pairs of consecutive points that are adjacent in the traced
    /// grid; pairs spanning a failed parameter are not polyline segments.
    fn segments(&self) -> Vec<(usize, usize)> {
        (0..self.params.len().saturating_sub(1))
            .filter(|&i| {
                let (lo, hi) = (self.params[i], self.params[i + 1]);
                !self.failures.iter().any(|&f| f > lo && f < hi)
            })
            .map(|i| (i, i + 1))
            .collect()
    }

    /// Index and distance of the grid point closest to `target`.
    pub fn closest_to(&self, target: &PhasePoint) -> Option<(usize, f64)> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.distance(target)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }

    /// CSV export with columns `which,param,u,du`.
    pub fn write_csv<W: Write>(&self, mut w: W, with_header: bool) -> io::Result<()> {
        if with_header {
            writeln!(w, "which,param,u,du")?;
        }
        let tag = match self.which {
            CurveKind::C0 => "C0",
            CurveKind::C1 => "C1",
        };
        for (p, pt) in self.params.iter().zip(&self.points) {
            writeln!(w, "{},{},{},{}", tag, p, pt.u, pt.du)?;
        }
        Ok(())
    }
}

/// Continues one parameter value from its endpoint to `x0` and keeps the
/// whole trajectory.
pub fn continue_branch(
    eq: &GeneralEquation,
    which: CurveKind,
    x0: f64,
    param: f64,
    opts: &TraceOptions,
) -> Result<(LocalSolution, Trajectory)> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::Domain(format!(
            "matching abscissa must lie inside (0,1), got {x0}"
        )));
    }
    let sol = match which {
        CurveKind::C0 => expand_at_zero(eq, param, opts.series_order)?,
        CurveKind::C1 => expand_at_one(eq, param, opts.series_order)?,
    };
    let room = match which {
        CurveKind::C0 => x0 / 2.0,
        CurveKind::C1 => (1.0 - x0) / 2.0,
    };
    let eps = opts.epsilon.min(0.5 * sol.trust_radius()).min(room);
    let start = sol.phase_state(eps)?;
    let x_s = match which {
        CurveKind::C0 => eps,
        CurveKind::C1 => 1.0 - eps,
    };
    let traj = integrate(eq, x_s, start, x0, &opts.integrate)?;
    if !traj.reached_target() {
        return Err(Error::IntegrationFailed(format!(
            "branch {which:?} at parameter {param} terminated with {:?} at x = {}",
            traj.terminated,
            traj.last_x()
        )));
    }
    Ok((sol, traj))
}

/// The phase state a parameter value reaches at `x0`.
pub fn curve_point(
    eq: &GeneralEquation,
    which: CurveKind,
    x0: f64,
    param: f64,
    opts: &TraceOptions,
) -> Result<PhasePoint> {
    continue_branch(eq, which, x0, param, opts).map(|(_, traj)| traj.last_point())
}

/// Whether an error only concerns a single parameter value (recorded as a
/// curve failure) rather than the equation as a whole.
fn is_param_local(err: &Error) -> bool {
    matches!(
        err,
        Error::IntegrationFailed(_)
            | Error::NonFiniteCoefficient(_)
            | Error::OutsideTrustRadius { .. }
    )
}

/// Traces a phase curve over a sorted parameter grid, fanning out across
/// parameters. Per-parameter blow-ups land in `failures`; structural errors
/// (resonance, degenerate expansion, invalid abscissa) are fatal.
pub fn trace_curve(
    eq: &GeneralEquation,
    which: CurveKind,
    x0: f64,
    grid: &[f64],
    opts: &TraceOptions,
) -> Result<PhaseCurve> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::Domain(format!(
            "matching abscissa must lie inside (0,1), got {x0}"
        )));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("parameter grid must be sorted".into()));
    }
    let results: Vec<(f64, Result<(PhasePoint, Option<usize>)>)> = grid
        .par_iter()
        .map(|&param| {
            let outcome = continue_branch(eq, which, x0, param, opts).map(|(_, traj)| {
                let violations = if opts.monitor {
                    monitor(eq, &traj).violations()
                } else {
                    None
                };
                (traj.last_point(), violations)
            });
            (param, outcome)
        })
        .collect();

    let mut curve = PhaseCurve {
        which,
        x0,
        params: Vec::new(),
        points: Vec::new(),
        failures: Vec::new(),
        lyapunov_violations: None,
    };
    let mut monitored_total: Option<usize> = None;
    for (param, outcome) in results {
        match outcome {
            Ok((point, violations)) => {
                curve.params.push(param);
                curve.points.push(point);
                if let Some(v) = violations {
                    monitored_total = Some(monitored_total.unwrap_or(0) + v);
                }
            }
            Err(e) if is_param_local(&e) => curve.failures.push(param),
            Err(e) => return Err(e),
        }
    }
    curve.lyapunov_violations = monitored_total;
    Ok(curve)
}

/// Log-spaced grid on `(0, c_max]` with the trivial branch prepended.
/// Uniform spacing in `ln c` matches the spiral's winding rate.
pub fn log_c_grid(c_max: f64, points: usize) -> Vec<f64> {
    assert!(c_max > 0.0 && points >= 2);
    let lo = 0.02f64.min(c_max / 100.0);
    let mut grid = vec![0.0];
    let n = points - 1;
    for i in 0..n {
        let t = i as f64 / (n - 1).max(1) as f64;
        grid.push(lo * (c_max / lo).powf(t));
    }
    grid
}

/// Uniform grid on `[0, b_max]`.
pub fn linear_b_grid(b_max: f64, points: usize) -> Vec<f64> {
    assert!(b_max > 0.0 && points >= 2);
    (0..points)
        .map(|i| b_max * i as f64 / (points - 1) as f64)
        .collect()
}

/// A refined crossing of the two phase curves.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Intersection {
    pub c_star: f64,
    pub b_star: f64,
    pub point: PhasePoint,
    /// Phase-plane distance between the two branches after refinement.
    pub refine_residual: f64,
}

fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Candidate crossing of two polyline segments, with interpolation fractions
/// along each. Endpoint touches count.
fn segment_crossing(
    a1: &PhasePoint,
    a2: &PhasePoint,
    b1: &PhasePoint,
    b2: &PhasePoint,
) -> Option<(f64, f64)> {
    let r = (a2.u - a1.u, a2.du - a1.du);
    let s = (b2.u - b1.u, b2.du - b1.du);
    let denom = cross2(r.0, r.1, s.0, s.1);
    let qp = (b1.u - a1.u, b1.du - a1.du);
    let scale = (r.0.hypot(r.1)) * (s.0.hypot(s.1));
    if denom.abs() <= 1e-14 * scale.max(1e-300) {
        return None;
    }
    let t = cross2(qp.0, qp.1, s.0, s.1) / denom;
    let u = cross2(qp.0, qp.1, r.0, r.1) / denom;
    let tol = 1e-9;
    if (-tol..=1.0 + tol).contains(&t) && (-tol..=1.0 + tol).contains(&u) {
        Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// Finds the crossings of the two curves: a segment-pair sweep collects
/// candidates, each candidate is polished by a damped Newton iteration on
/// `F(c, b) = C0(c) - C1(b)` with finite-difference curve tangents, and the
/// converged roots are deduplicated in parameter space. Candidates whose
/// refinement fails to converge are dropped.
pub fn find_intersections(
    eq: &GeneralEquation,
    c_curve: &PhaseCurve,
    b_curve: &PhaseCurve,
    opts: &TraceOptions,
) -> Vec<Intersection> {
    assert_eq!(c_curve.x0, b_curve.x0, "curves must share the abscissa");
    let x0 = c_curve.x0;

    let mut candidates = Vec::new();
    for &(i, i2) in &c_curve.segments() {
        for &(j, j2) in &b_curve.segments() {
            if let Some((t, u)) = segment_crossing(
                &c_curve.points[i],
                &c_curve.points[i2],
                &b_curve.points[j],
                &b_curve.points[j2],
            ) {
                let c = c_curve.params[i] + t * (c_curve.params[i2] - c_curve.params[i]);
                let b = b_curve.params[j] + u * (b_curve.params[j2] - b_curve.params[j]);
                candidates.push((c, b));
            }
        }
    }

    let c_span = grid_span(&c_curve.params);
    let b_span = grid_span(&b_curve.params);
    let refined: Vec<Intersection> = candidates
        .par_iter()
        .filter_map(|&(c, b)| refine_crossing(eq, x0, c, b, c_span, b_span, opts))
        .collect();

    let mut out: Vec<Intersection> = Vec::new();
    let mut sorted = refined;
    sorted.sort_by(|a, b| a.c_star.partial_cmp(&b.c_star).unwrap());
    for hit in sorted {
        let dup = out.iter().any(|kept| {
            (kept.c_star - hit.c_star).abs() <= 1e-6 * (1.0 + hit.c_star.abs())
                && (kept.b_star - hit.b_star).abs() <= 1e-6 * (1.0 + hit.b_star.abs())
        });
        if !dup {
            out.push(hit);
        }
    }
    out
}

fn grid_span(params: &[f64]) -> (f64, f64) {
    let lo = params.first().copied().unwrap_or(0.0);
    let hi = params.last().copied().unwrap_or(0.0);
    let margin = 0.1 * (hi - lo).abs().max(1.0);
    (lo - margin, hi + margin)
}

fn refine_crossing(
    eq: &GeneralEquation,
    x0: f64,
    c0: f64,
    b0: f64,
    c_span: (f64, f64),
    b_span: (f64, f64),
    opts: &TraceOptions,
) -> Option<Intersection> {
    let eval = |c: f64, b: f64| -> Option<(PhasePoint, PhasePoint)> {
        let p0 = curve_point(eq, CurveKind::C0, x0, c, opts).ok()?;
        let p1 = curve_point(eq, CurveKind::C1, x0, b, opts).ok()?;
        Some((p0, p1))
    };
    let residual = |pair: &(PhasePoint, PhasePoint)| pair.0.distance(&pair.1);

    let (mut c, mut b) = (c0, b0);
    let mut pair = eval(c, b)?;
    for _ in 0..30 {
        let scale = 1.0 + pair.0.norm().max(pair.1.norm());
        if residual(&pair) <= 1e-9 * scale {
            return Some(Intersection {
                c_star: c,
                b_star: b,
                point: PhasePoint {
                    u: 0.5 * (pair.0.u + pair.1.u),
                    du: 0.5 * (pair.0.du + pair.1.du),
                },
                refine_residual: residual(&pair),
            });
        }
        // finite-difference tangents of both curves
        let hc = 1e-6 * (1.0 + c.abs());
        let hb = 1e-6 * (1.0 + b.abs());
        let c_plus = curve_point(eq, CurveKind::C0, x0, c + hc, opts).ok()?;
        let c_minus = curve_point(eq, CurveKind::C0, x0, c - hc, opts).ok()?;
        let b_plus = curve_point(eq, CurveKind::C1, x0, b + hb, opts).ok()?;
        let b_minus = curve_point(eq, CurveKind::C1, x0, b - hb, opts).ok()?;
        let j00 = (c_plus.u - c_minus.u) / (2.0 * hc);
        let j10 = (c_plus.du - c_minus.du) / (2.0 * hc);
        let j01 = -(b_plus.u - b_minus.u) / (2.0 * hb);
        let j11 = -(b_plus.du - b_minus.du) / (2.0 * hb);
        let det = j00 * j11 - j01 * j10;
        if det.abs() < 1e-300 {
            return None;
        }
        let f0 = pair.0.u - pair.1.u;
        let f1 = pair.0.du - pair.1.du;
        let dc = (j11 * f0 - j01 * f1) / det;
        let db = (-j10 * f0 + j00 * f1) / det;

        // backtracking damping
        let mut advanced = false;
        let mut lambda = 1.0;
        for _ in 0..6 {
            let c_new = (c - lambda * dc).clamp(c_span.0, c_span.1);
            let b_new = (b - lambda * db).clamp(b_span.0, b_span.1);
            if let Some(next) = eval(c_new, b_new) {
                if residual(&next) < residual(&pair) {
                    c = c_new;
                    b = b_new;
                    pair = next;
                    advanced = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !advanced {
            return None;
        }
    }
    // converged iff the loop exited through the residual check
    let scale = 1.0 + pair.0.norm().max(pair.1.norm());
    if residual(&pair) <= 1e-9 * scale {
        Some(Intersection {
            c_star: c,
            b_star: b,
            point: PhasePoint {
                u: 0.5 * (pair.0.u + pair.1.u),
                du: 0.5 * (pair.0.du + pair.1.du),
            },
            refine_residual: residual(&pair),
        })
    } else {
        None
    }
}

/// A matched pair of continued branches.
#[derive(Clone, Debug)]
pub struct GlobalSolution {
    pub c_star: f64,
    pub b_star: f64,
    pub x0: f64,
    pub left: Trajectory,
    pub right: Trajectory,
    pub left_series: LocalSolution,
    pub right_series: LocalSolution,
    /// `max(|du|, |ddu'|)` gap between the branches at `x0`.
    pub mismatch: f64,
}

/// Re-runs both continuations at a refined crossing and checks the realized
/// mismatch at `x0`. A mismatch beyond `1e-7 (1 + |u(x0)|)` means the curve
/// discretization was too coarse for this crossing.
pub fn assemble(
    eq: &GeneralEquation,
    x0: f64,
    hit: &Intersection,
    opts: &TraceOptions,
) -> Result<GlobalSolution> {
    let (left_series, left) = continue_branch(eq, CurveKind::C0, x0, hit.c_star, opts)?;
    let (right_series, right) = continue_branch(eq, CurveKind::C1, x0, hit.b_star, opts)?;
    let pl = left.last_point();
    let pr = right.last_point();
    let mismatch = (pl.u - pr.u).abs().max((pl.du - pr.du).abs());
    let tolerance = 1e-7 * (1.0 + pl.u.abs());
    if mismatch > tolerance {
        return Err(Error::MatchDegraded {
            mismatch,
            tolerance,
        });
    }
    Ok(GlobalSolution {
        c_star: hit.c_star,
        b_star: hit.b_star,
        x0,
        left,
        right,
        left_series,
        right_series,
        mismatch,
    })
}

/// The four qualitative outcomes of the matching picture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyCase {
    /// The b-curve passes through the wrapping point of the spiral; crossings
    /// accumulate without bound as the data grows.
    CountableFamily,
    /// Finitely many crossings away from the wrapping point.
    FiniteFamily,
    /// Only the trivial and the constant solution survive.
    SpecialOnly,
    /// Only the trivial solution.
    TrivialOnly,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Evidence {
    /// Refined minimum phase-plane distance of the b-curve to the wrapping
    /// point, absolute and relative to the wrapping point's norm.
    pub c1_p_inf_distance: f64,
    pub c1_p_inf_distance_rel: f64,
    pub intersection_count: usize,
    /// Largest coefficient-constraint residual of the singular solution.
    pub matching_residual: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FamilyClassification {
    pub case: FamilyCase,
    pub evidence: Evidence,
}

/// Classifies the solution family. Requires the wrapping point to exist;
/// its distance to the b-curve is refined by a golden-section search in the
/// parameter, so the verdict does not hinge on grid placement.
pub fn classify(
    eq: &GeneralEquation,
    x0: f64,
    _c_curve: &PhaseCurve,
    b_curve: &PhaseCurve,
    intersections: &[Intersection],
    opts: &TraceOptions,
) -> Result<FamilyClassification> {
    let p_inf = eq.wrapping_point(x0)?;
    let residual = eq
        .matching_residuals()?
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));

    let (best, grid_dist) = b_curve
        .closest_to(&p_inf)
        .ok_or_else(|| Error::Domain("empty b-curve".into()))?;
    let lo = b_curve.params[best.saturating_sub(1)];
    let hi = b_curve.params[(best + 1).min(b_curve.params.len() - 1)];
    let dist_at = |b: f64| -> f64 {
        curve_point(eq, CurveKind::C1, x0, b, opts)
            .map(|p| p.distance(&p_inf))
            .unwrap_or(f64::INFINITY)
    };
    let refined_dist = if hi > lo {
        golden_min(dist_at, lo, hi, 60).min(grid_dist)
    } else {
        grid_dist
    };
    let rel = refined_dist / p_inf.norm();

    let count = intersections.len();
    let equilibria = equilibrium_values(eq);
    let id_tol = 1e-5;
    let is_trivial = |h: &Intersection| h.c_star.abs() < id_tol && h.b_star.abs() < id_tol;
    let is_special = |h: &Intersection| {
        equilibria.iter().any(|&u0| {
            (h.c_star - u0).abs() < id_tol * (1.0 + u0.abs())
                && (h.b_star - u0).abs() < id_tol * (1.0 + u0.abs())
        })
    };

    let case = if rel < opts.p_inf_band && residual < 1e-10 {
        FamilyCase::CountableFamily
    } else if intersections.iter().any(|h| !is_trivial(h) && !is_special(h)) {
        FamilyCase::FiniteFamily
    } else if intersections.iter().any(is_special) {
        FamilyCase::SpecialOnly
    } else {
        FamilyCase::TrivialOnly
    };

    Ok(FamilyClassification {
        case,
        evidence: Evidence {
            c1_p_inf_distance: refined_dist,
            c1_p_inf_distance_rel: rel,
            intersection_count: count,
            matching_residual: residual,
        },
    })
}

/// Nonzero constant equilibria `r + delta u^(p-1) = 0`, available when
/// `r(x)` is constant.
pub fn equilibrium_values(eq: &GeneralEquation) -> Vec<f64> {
    let Some(r) = eq.constant_r() else {
        return Vec::new();
    };
    let base = -r / eq.delta();
    let deg = eq.power() - 1;
    let mut out = Vec::new();
    if deg % 2 == 0 {
        if base > 0.0 {
            let root = base.powf(1.0 / deg as f64);
            out.push(-root);
            out.push(root);
        }
    } else if base != 0.0 {
        out.push(base.signum() * base.abs().powf(1.0 / deg as f64));
    }
    out
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2)
}

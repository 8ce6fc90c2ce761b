//! Numerical continuation of phase states across the interior of `(0, 1)`:
//! an embedded Dormand-Prince 5(4) stepper with PI step-size control,
//! blow-up detection, and Lyapunov-function monitoring.
//!
//! Integration never starts or ends at the endpoints themselves; the series
//! expansions own the singular neighborhoods.

use std::io::{self, Write};

use serde::Serialize;

use crate::equation::GeneralEquation;
use crate::error::{Error, Result};
use crate::series::PhasePoint;

/// Integrator options. Defaults: relative tolerance `1e-10`, absolute
/// `1e-12`, blow-up bound `1e8`, minimum step `1e-14`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub bound: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_min: 1e-14,
            bound: 1e8,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Why an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    ReachedTarget,
    BlowUp,
    StepUnderflow,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Sample {
    pub x: f64,
    pub u: f64,
    pub du: f64,
}

/// An accepted-step record of one continuation run. `x` is strictly
/// monotone in the direction of integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub direction: Direction,
    pub terminated: Termination,
}

impl Trajectory {
    pub fn reached_target(&self) -> bool {
        self.terminated == Termination::ReachedTarget
    }

    pub fn last_x(&self) -> f64 {
        self.samples.last().expect("nonempty trajectory").x
    }

    pub fn last_point(&self) -> PhasePoint {
        let s = self.samples.last().expect("nonempty trajectory");
        PhasePoint { u: s.u, du: s.du }
    }

    /// CSV export with columns `x,u,du,H`. The `H` column is left empty when
    /// no Lyapunov values are supplied.
    pub fn write_csv<W: Write>(&self, mut w: W, h_values: Option<&[f64]>) -> io::Result<()> {
        writeln!(w, "x,u,du,H")?;
        for (i, s) in self.samples.iter().enumerate() {
            match h_values.and_then(|h| h.get(i)) {
                Some(h) => writeln!(w, "{},{},{},{}", s.x, s.u, s.du, h)?,
                None => writeln!(w, "{},{},{},", s.x, s.u, s.du)?,
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// b - bhat, for the embedded error estimate
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller, stabilized
const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FACC1: f64 = 5.0; // 1 / min scale
const FACC2: f64 = 0.1; // 1 / max scale

type State = [f64; 2];

fn axpy2(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One integration over `[x_s, x_t]` of `y' = rhs(x, y)`, recording every
/// accepted step. Used for the general equation and for the unperturbed
/// Lane-Emden core alike.
pub(crate) fn integrate_system<F>(
    rhs: F,
    x_s: f64,
    start: State,
    x_t: f64,
    opts: &IntegrateOpts,
) -> Trajectory
where
    F: Fn(f64, &State) -> State,
{
    let span = x_t - x_s;
    let dir_sign = span.signum();
    let direction = if dir_sign >= 0.0 {
        Direction::Forward
    } else {
        Direction::Backward
    };

    let mut samples = vec![Sample {
        x: x_s,
        u: start[0],
        du: start[1],
    }];
    let mut x = x_s;
    let mut y = start;
    let mut k1 = rhs(x, &y);
    // conservative near the singular endpoints, where the scale is x itself;
    // the controller grows it immediately on smooth stretches
    let x_scale = x_s.abs().max(1e-3 * span.abs());
    let mut h = dir_sign * 0.01 * x_scale.min(span.abs());
    let mut facold: f64 = 1e-4;

    for _ in 0..opts.max_steps {
        if (x_t - x) * dir_sign <= 0.0 {
            return Trajectory {
                samples,
                direction,
                terminated: Termination::ReachedTarget,
            };
        }
        let mut last = false;
        if (x + h - x_t) * dir_sign >= 0.0 {
            h = x_t - x;
            last = true;
        }
        if h.abs() < opts.h_min && !last {
            return Trajectory {
                samples,
                direction,
                terminated: Termination::StepUnderflow,
            };
        }

        let k2 = rhs(x + C2 * h, &axpy2(&y, h, &[(A21, &k1)]));
        let k3 = rhs(x + C3 * h, &axpy2(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            x + C4 * h,
            &axpy2(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            x + C5 * h,
            &axpy2(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            x + h,
            &axpy2(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy2(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = rhs(x + h, &y_new);

        let mut err_sq = 0.0;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (0.5 * err_sq).sqrt();

        if err.is_finite() && err <= 1.0 {
            // accepted
            x += h;
            y = y_new;
            k1 = k7; // FSAL
            samples.push(Sample {
                x,
                u: y[0],
                du: y[1],
            });
            if !y[0].is_finite()
                || !y[1].is_finite()
                || y[0].abs() > opts.bound
                || y[1].abs() > opts.bound
            {
                return Trajectory {
                    samples,
                    direction,
                    terminated: Termination::BlowUp,
                };
            }
            if last {
                return Trajectory {
                    samples,
                    direction,
                    terminated: Termination::ReachedTarget,
                };
            }
            let fac11 = err.max(1e-16).powf(EXPO1);
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(FACC2, FACC1);
            h /= fac;
            facold = err.max(1e-4);
        } else {
            // rejected; a non-finite error estimate also lands here
            let shrink = if err.is_finite() {
                (err.powf(EXPO1) / SAFE).min(FACC1)
            } else {
                FACC1
            };
            h /= shrink;
            if h.abs() < opts.h_min {
                return Trajectory {
                    samples,
                    direction,
                    terminated: Termination::StepUnderflow,
                };
            }
        }
    }
    Trajectory {
        samples,
        direction,
        terminated: Termination::StepUnderflow,
    }
}

/// Continues a phase state of the general equation from `x_s` to `x_t`.
/// Blow-up and step underflow come back as termination statuses, not errors;
/// an invalid span is an error.
pub fn integrate(
    eq: &GeneralEquation,
    x_s: f64,
    start: PhasePoint,
    x_t: f64,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    if !(x_s > 0.0 && x_s < 1.0 && x_t > 0.0 && x_t < 1.0) {
        return Err(Error::Domain(format!(
            "integration span must lie inside (0,1), got [{x_s}, {x_t}]"
        )));
    }
    if x_s == x_t {
        return Err(Error::Domain("empty integration span".into()));
    }
    Ok(integrate_system(
        |x, y| eq.rhs(x, y[0], y[1]),
        x_s,
        [start.u, start.du],
        x_t,
        opts,
    ))
}

/// Continues a phase state through an ordered list of abscissas, landing on
/// each one exactly. Fails if any leg terminates early.
pub fn integrate_to_points(
    eq: &GeneralEquation,
    x_s: f64,
    start: PhasePoint,
    targets: &[f64],
    opts: &IntegrateOpts,
) -> Result<Vec<(f64, PhasePoint)>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut x = x_s;
    let mut state = start;
    for &t in targets {
        if t == x {
            out.push((t, state));
            continue;
        }
        let traj = integrate(eq, x, state, t, opts)?;
        if !traj.reached_target() {
            return Err(Error::IntegrationFailed(format!(
                "terminated with {:?} at x = {} while heading for {t}",
                traj.terminated,
                traj.last_x()
            )));
        }
        state = traj.last_point();
        x = t;
        out.push((t, state));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lyapunov monitoring

/// The Lyapunov function
/// `H = p(x)/2 u'^2 + delta/(p+1) u^(p+1) + r/2 u^2`,
/// defined when `r(x)` is a constant.
pub fn lyapunov_h(eq: &GeneralEquation, x: f64, pt: &PhasePoint) -> Result<f64> {
    let r = eq.constant_r().ok_or(Error::NonconstantR)?;
    let p1 = eq.power() as i32 + 1;
    Ok(eq.p_at(x) / 2.0 * pt.du * pt.du
        + eq.delta() / p1 as f64 * pt.u.powi(p1)
        + r / 2.0 * pt.u * pt.u)
}

/// Lyapunov values along a trajectory, one per sample.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovTrace {
    pub values: Vec<f64>,
    /// Increases of `H` toward larger `x` beyond `1e-9 (1 + |H|)`.
    pub violations: usize,
}

/// Outcome of Lyapunov monitoring. Monitoring is diagnostic: when its
/// hypotheses fail (non-constant `r`, or the decay condition
/// `p'(x)/2 - q(x) < 0` does not hold on the span) it is skipped, not fatal.
#[derive(Clone, Debug)]
pub enum MonitorOutcome {
    Trace(LyapunovTrace),
    Skipped(String),
}

impl MonitorOutcome {
    pub fn violations(&self) -> Option<usize> {
        match self {
            MonitorOutcome::Trace(t) => Some(t.violations),
            MonitorOutcome::Skipped(_) => None,
        }
    }
}

pub fn monitor(eq: &GeneralEquation, traj: &Trajectory) -> MonitorOutcome {
    if eq.constant_r().is_none() {
        return MonitorOutcome::Skipped("r(x) is not constant".into());
    }
    let (lo, hi) = match traj.direction {
        Direction::Forward => (traj.samples[0].x, traj.last_x()),
        Direction::Backward => (traj.last_x(), traj.samples[0].x),
    };
    // decay condition sampled over the span
    const SAMPLES: usize = 256;
    for i in 0..=SAMPLES {
        let x = lo + (hi - lo) * i as f64 / SAMPLES as f64;
        if eq.p_prime_at(x) / 2.0 - eq.q_at(x) >= 0.0 {
            return MonitorOutcome::Skipped(format!(
                "decay condition p'(x)/2 - q(x) < 0 fails at x = {x}"
            ));
        }
    }
    let values: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| lyapunov_h(eq, s.x, &PhasePoint { u: s.u, du: s.du }).expect("r is constant"))
        .collect();
    let mut violations = 0;
    for w in values.windows(2) {
        let (toward_larger_x, at_smaller_x) = match traj.direction {
            Direction::Forward => (w[1], w[0]),
            Direction::Backward => (w[0], w[1]),
        };
        if toward_larger_x > at_smaller_x + 1e-9 * (1.0 + at_smaller_x.abs()) {
            violations += 1;
        }
    }
    MonitorOutcome::Trace(LyapunovTrace { values, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::ProfileEquation;
    use crate::expansion::{expand_at_one, expand_at_zero};
    use approx::assert_relative_eq;

    fn fig3() -> ProfileEquation {
        ProfileEquation::new(2.0, -25.0 / 12.0, 0.25, 1.0, 7).unwrap()
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        let opts = IntegrateOpts::default();
        let traj = integrate_system(
            |_, y| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            std::f64::consts::PI,
            &opts,
        );
        assert!(traj.reached_target());
        let end = traj.last_point();
        assert_relative_eq!(end.u, -1.0, epsilon = 1e-9);
        assert!(end.du.abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_spans() {
        let eq = fig3().embed();
        let p = PhasePoint::new(1.0, 0.0);
        assert!(integrate(&eq, 0.0, p, 0.5, &IntegrateOpts::default()).is_err());
        assert!(integrate(&eq, 0.5, p, 1.0, &IntegrateOpts::default()).is_err());
        assert!(integrate(&eq, 0.5, p, 0.5, &IntegrateOpts::default()).is_err());
    }

    #[test]
    fn zero_start_stays_zero() {
        let eq = fig3().embed();
        let traj = integrate(
            &eq,
            0.01,
            PhasePoint::new(0.0, 0.0),
            0.99,
            &IntegrateOpts::default(),
        )
        .unwrap();
        assert!(traj.reached_target());
        let end = traj.last_point();
        assert_eq!(end.u, 0.0);
        assert_eq!(end.du, 0.0);
    }

    #[test]
    fn constant_solution_is_an_equilibrium() {
        let eq1 = fig3();
        let u0 = eq1.constant_solution().unwrap();
        let traj = integrate(
            &eq1.embed(),
            0.01,
            PhasePoint::new(u0, 0.0),
            0.99,
            &IntegrateOpts::default(),
        )
        .unwrap();
        assert!(traj.reached_target());
        let end = traj.last_point();
        assert_relative_eq!(end.u, u0, epsilon = 1e-9);
        assert!(end.du.abs() < 1e-9);
    }

    #[test]
    fn tracks_the_singular_solution() {
        // the matching condition holds for fig3, so u = amplitude x^(-1/3)
        // solves the full equation; start from its exact phase state
        let eq = fig3().embed();
        let s = eq.singular_solution().unwrap();
        let u_inf = |x: f64| s.amplitude * x.powf(s.exponent);
        let start = eq.wrapping_point(0.3).unwrap();
        let probes = [0.5, 0.7, 0.9];
        let got = integrate_to_points(&eq, 0.3, start, &probes, &IntegrateOpts::default()).unwrap();
        for (x, pt) in got {
            assert_relative_eq!(pt.u, u_inf(x), max_relative = 1e-7);
            assert_relative_eq!(pt.du, s.exponent * u_inf(x) / x, max_relative = 1e-7);
        }
    }

    #[test]
    fn series_and_integrator_agree_on_the_overlap() {
        let eq = fig3().embed();
        let eps = 0.01;
        for c in [0.5, 1.0, 1.8] {
            let sol = expand_at_zero(&eq, c, 40).unwrap();
            let start = sol.phase_state(eps).unwrap();
            let probes: Vec<f64> = (1..=8).map(|i| eps + eps * i as f64 / 8.0).collect();
            let got =
                integrate_to_points(&eq, eps, start, &probes, &IntegrateOpts::default()).unwrap();
            for (x, pt) in got {
                let series_pt = sol.series().evaluate_with_derivative(x);
                assert!(
                    (pt.u - series_pt.u).abs() < 1e-8,
                    "c={c}, x={x}: {} vs {}",
                    pt.u,
                    series_pt.u
                );
            }
        }
    }

    #[test]
    fn backward_continuation_from_the_right_endpoint() {
        let eq = fig3().embed();
        let sol = expand_at_one(&eq, 0.5, 40).unwrap();
        let start = sol.phase_state(0.01).unwrap();
        let traj = integrate(&eq, 0.99, start, 0.5, &IntegrateOpts::default()).unwrap();
        assert!(traj.reached_target());
        assert_eq!(traj.direction, Direction::Backward);
        assert!(traj.samples.windows(2).all(|w| w[1].x < w[0].x));
    }

    #[test]
    fn step_halving_converges() {
        let eq = fig3().embed();
        let sol = expand_at_zero(&eq, 1.0, 40).unwrap();
        let start = sol.phase_state(0.01).unwrap();
        let reference = {
            let opts = IntegrateOpts {
                rtol: 1e-13,
                atol: 1e-14,
                ..Default::default()
            };
            integrate(&eq, 0.01, start, 0.9, &opts).unwrap().last_point()
        };
        let mut errors = Vec::new();
        for rtol in [1e-5, 1e-7, 1e-9, 1e-11] {
            let opts = IntegrateOpts {
                rtol,
                atol: rtol * 1e-2,
                ..Default::default()
            };
            let end = integrate(&eq, 0.01, start, 0.9, &opts).unwrap().last_point();
            errors.push(end.distance(&reference));
        }
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {errors:?}");
        }
    }

    #[test]
    fn detects_blow_up() {
        // delta < 0 removes the restoring sign; moderate data blows up fast
        let eq = ProfileEquation::new(2.0, 0.0, 0.0, -1.0, 7).unwrap().embed();
        let traj = integrate(
            &eq,
            0.01,
            PhasePoint::new(3.0, 0.0),
            0.99,
            &IntegrateOpts::default(),
        )
        .unwrap();
        assert_eq!(traj.terminated, Termination::BlowUp);
        assert!(traj.last_x() < 0.99);
    }

    #[test]
    fn lyapunov_values() {
        let eq = fig3().embed();
        // at x=0, u=1, u'=0: -gamma/2 + delta/(p+1) = -1/8 + 1/8 = 0
        let h = lyapunov_h(&eq, 0.0, &PhasePoint::new(1.0, 0.0)).unwrap();
        assert!(h.abs() < 1e-15);
        // at x=1 the kinetic term vanishes regardless of u'
        let h1 = lyapunov_h(&eq, 1.0, &PhasePoint::new(0.0, 123.0)).unwrap();
        assert_eq!(h1, 0.0);
        assert!(lyapunov_h(&eq, 0.5, &PhasePoint::new(0.0, 0.0)).unwrap() == 0.0);
    }

    #[test]
    fn lyapunov_rejects_nonconstant_r() {
        // c_(-1) = 1/2 puts a pole into r(x); matching condition not needed here
        let eq = crate::equation::GeneralEquation::new(
            2.0,
            1.0,
            3,
            vec![0.0, -1.0],
            vec![0.0, 0.0],
            vec![0.5, 0.0],
        )
        .unwrap();
        assert!(matches!(
            lyapunov_h(&eq, 0.5, &PhasePoint::new(1.0, 0.0)),
            Err(Error::NonconstantR)
        ));
    }

    #[test]
    fn monitor_constant_solution_flat() {
        let eq1 = fig3();
        let u0 = eq1.constant_solution().unwrap();
        let eq = eq1.embed();
        let traj = integrate(
            &eq,
            0.01,
            PhasePoint::new(u0, 0.0),
            0.99,
            &IntegrateOpts::default(),
        )
        .unwrap();
        match monitor(&eq, &traj) {
            MonitorOutcome::Trace(t) => {
                assert_eq!(t.violations, 0);
                assert_eq!(t.values.len(), traj.samples.len());
                let h0 = t.values[0];
                for h in &t.values {
                    assert_relative_eq!(*h, h0, epsilon = 1e-9);
                }
            }
            MonitorOutcome::Skipped(why) => panic!("unexpected skip: {why}"),
        }
    }

    #[test]
    fn monitor_decay_along_forward_run() {
        let eq = fig3().embed();
        let sol = expand_at_zero(&eq, 1.0, 40).unwrap();
        let start = sol.phase_state(0.01).unwrap();
        let traj = integrate(&eq, 0.01, start, 0.99, &IntegrateOpts::default()).unwrap();
        let out = monitor(&eq, &traj);
        assert_eq!(out.violations(), Some(0));
    }

    #[test]
    fn monitor_skips_when_decay_condition_fails() {
        // beta = -4: alpha + (1+beta)x^2 changes sign inside the interval
        let eq = ProfileEquation::new(2.0, -4.0, 0.25, 1.0, 7).unwrap().embed();
        let traj = integrate(
            &eq,
            0.01,
            PhasePoint::new(0.5, 0.0),
            0.99,
            &IntegrateOpts::default(),
        )
        .unwrap();
        assert!(matches!(monitor(&eq, &traj), MonitorOutcome::Skipped(_)));
    }

    #[test]
    fn csv_export_shape() {
        let eq = fig3().embed();
        let traj = integrate(
            &eq,
            0.1,
            PhasePoint::new(0.5, 0.0),
            0.2,
            &IntegrateOpts::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,u,du,H"));
        assert!(text.trim_end().lines().count() == traj.samples.len() + 1);
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }
}

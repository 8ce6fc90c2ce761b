//! Closed-form asymptotic quantities of the unperturbed Lane-Emden core
//! `u'' + (alpha/x) u' + delta u^p = 0`, the large-data rescaling map onto
//! it, and an empirical fit that extracts the log-periodic oscillation
//! frequency and envelope decay from numerical solutions.

use serde::Serialize;

use crate::continuation::{integrate, integrate_system, IntegrateOpts, Trajectory};
use crate::equation::{singular_solution_parts, EndpointPolys, GeneralEquation};
use crate::error::{Error, Result};
use crate::expansion::{expand_at_zero, solve_recurrence};
use crate::series::{PhasePoint, PowerSeries};

/// Oscillation regime of the Lane-Emden tail for given `(p, alpha)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AsymptoticRegime {
    pub power: u32,
    pub alpha: f64,
    /// The discriminant; oscillatory decay toward the power-law tail
    /// requires it negative.
    pub f_val: f64,
    /// Critical power `(alpha+3)/(alpha-1)`; undefined at `alpha = 1`.
    pub p_q: Option<f64>,
    /// Log-periodic frequency `sqrt(-f)/(2(p-1))`, real exactly when
    /// `f_val < 0`.
    pub omega: Option<f64>,
    /// `p` odd, away from the critical power, with `f_val < 0`.
    pub oscillatory: bool,
}

/// Evaluates the oscillation discriminant, the critical power, and the
/// tail frequency.
pub fn regime(power: u32, alpha: f64) -> AsymptoticRegime {
    let p = power as f64;
    let f_val = (alpha - 1.0) * (alpha - 1.0)
        + p * p * (9.0 - 10.0 * alpha + alpha * alpha)
        - 2.0 * p * (-3.0 - 6.0 * alpha + alpha * alpha);
    let p_q = if alpha == 1.0 {
        None
    } else {
        Some((alpha + 3.0) / (alpha - 1.0))
    };
    let omega = if f_val < 0.0 {
        Some((-f_val).sqrt() / (2.0 * (p - 1.0)))
    } else {
        None
    };
    let oscillatory =
        power % 2 == 1 && f_val < 0.0 && p_q.map_or(true, |pq| (p - pq).abs() > 1e-12);
    AsymptoticRegime {
        power,
        alpha,
        f_val,
        p_q,
        omega,
        oscillatory,
    }
}

/// Decay exponent of the relative oscillation envelope,
/// `(alpha + 3 + p(1 - alpha)) / (2(p - 1))`.
pub fn envelope_exponent(power: u32, alpha: f64) -> f64 {
    let p = power as f64;
    (alpha + 3.0 + p * (1.0 - alpha)) / (2.0 * (p - 1.0))
}

/// Local analytic Lane-Emden solution about the origin with `u(0) = a0`:
/// `a_1 = 0`, `a_(k+2) = -delta c_k / ((k+2)(k+1+alpha))` with `c_k` the
/// Cauchy-power coefficients of the partial series.
pub fn le_series(alpha: f64, delta: f64, power: u32, a0: f64, order: usize) -> PowerSeries {
    assert!(alpha > 0.0, "alpha must be positive");
    // the equation multiplied by x: x u'' + alpha u' + delta x u^p = 0
    let polys = EndpointPolys {
        mp: vec![0.0, 1.0],
        mq: vec![alpha],
        mr: vec![0.0],
        mn: vec![0.0, delta],
    };
    let coeffs =
        solve_recurrence(&polys, power, a0, order).expect("positive alpha keeps denominators alive");
    PowerSeries::new(0.0, coeffs).expect("finite recurrence output")
}

/// Integrates the Lane-Emden core between two positive abscissas.
pub fn integrate_le(
    alpha: f64,
    delta: f64,
    power: u32,
    y_s: f64,
    start: PhasePoint,
    y_t: f64,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    if !(y_s > 0.0 && y_t > 0.0 && y_s != y_t) {
        return Err(Error::Domain(format!(
            "Lane-Emden span must be positive, got [{y_s}, {y_t}]"
        )));
    }
    let p = power as i32;
    Ok(integrate_system(
        move |y, s| [s[1], -alpha / y * s[1] - delta * s[0].powi(p)],
        y_s,
        [start.u, start.du],
        y_t,
        opts,
    ))
}

/// Maps a state of the full equation with `u(0) = c` onto Lane-Emden
/// variables: `w = u/c`, `y = c^((p-1)/2) x`, `w' = u' / c^((p+1)/2)`.
pub fn rescale_to_le(power: u32, c: f64, x: f64, pt: PhasePoint) -> (f64, PhasePoint) {
    assert!(c > 0.0, "rescaling needs positive data");
    let scale = c.powf((power as f64 - 1.0) / 2.0);
    (
        scale * x,
        PhasePoint {
            u: pt.u / c,
            du: pt.du / (c * scale),
        },
    )
}

/// Inverse of [`rescale_to_le`].
pub fn rescale_from_le(power: u32, c: f64, y: f64, pt: PhasePoint) -> (f64, PhasePoint) {
    assert!(c > 0.0, "rescaling needs positive data");
    let scale = c.powf((power as f64 - 1.0) / 2.0);
    (
        y / scale,
        PhasePoint {
            u: pt.u * c,
            du: pt.du * c * scale,
        },
    )
}

/// Fitted envelope parameters of the oscillatory Lane-Emden tail
/// `u = b_inf x^(-2/(p-1)) (1 + A_0 x^e sin(omega ln x + phi))`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeFit {
    pub omega_hat: f64,
    pub decay_hat: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub fit_window: (f64, f64),
    /// RMS misfit of the reduced signal over the window.
    pub residual: f64,
}

/// Extracts frequency, envelope decay, amplitude, and phase from a forward
/// Lane-Emden trajectory.
///
/// The reduced signal `s(x) = u x^(2/(p-1)) / b_inf - 1` vanishes exactly at
/// `omega ln x + phi = m pi` regardless of the envelope, so the frequency
/// comes from regressing the phase marks `m pi` on the crossing positions in
/// `t = ln x` (corrections shift consecutive crossings in opposite
/// directions and cancel in the regression). The decay exponent is the
/// median of period-paired log-envelope differences, which cancels periodic
/// contamination exactly across one full period. Amplitude and phase come
/// from a final linear least squares at the fitted frequency and decay.
///
/// Data before the first zero crossing belongs to the pre-asymptotic
/// transient and is only used to locate that crossing.
pub fn fit_envelope(
    traj: &Trajectory,
    regime: &AsymptoticRegime,
    delta: f64,
    window_lo: Option<f64>,
) -> Result<EnvelopeFit> {
    if !regime.oscillatory {
        return Err(Error::InsufficientOscillations(
            "regime is not oscillatory".into(),
        ));
    }
    let tail = singular_solution_parts(regime.alpha, delta, regime.power)?;
    if tail.amplitude == 0.0 {
        return Err(Error::AmplitudeUndefined("zero tail amplitude".into()));
    }
    let x_lo = window_lo.unwrap_or(0.0);
    // (t, s) with t = ln x
    let pts: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.x >= x_lo && s.x > 0.0)
        .map(|s| {
            (
                s.x.ln(),
                s.u * s.x.powf(-tail.exponent) / tail.amplitude - 1.0,
            )
        })
        .collect();
    if pts.len() < 16 {
        return Err(Error::InsufficientOscillations(format!(
            "only {} samples above x = {x_lo}",
            pts.len()
        )));
    }

    // zero crossings of s in t, linearly interpolated
    let mut crossings = Vec::new();
    for w in pts.windows(2) {
        let (t0, s0) = w[0];
        let (t1, s1) = w[1];
        if s0 == 0.0 {
            crossings.push(t0);
        } else if s0 * s1 < 0.0 {
            crossings.push(t0 - s0 * (t1 - t0) / (s1 - s0));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::InsufficientOscillations(format!(
            "{} zero crossings; need at least 3",
            crossings.len()
        )));
    }
    let phase_marks: Vec<(f64, f64)> = crossings
        .iter()
        .enumerate()
        .map(|(m, &t)| (t, m as f64 * std::f64::consts::PI))
        .collect();
    let omega_hat = least_squares_slope(&phase_marks);
    if !(omega_hat.is_finite() && omega_hat > 0.0) {
        return Err(Error::InsufficientOscillations(format!(
            "crossing regression produced frequency {omega_hat}"
        )));
    }
    let phi_hat = {
        let n = phase_marks.len() as f64;
        let st: f64 = phase_marks.iter().map(|p| p.0).sum();
        let sm: f64 = phase_marks.iter().map(|p| p.1).sum();
        (sm - omega_hat * st) / n
    };

    // period-paired envelope differences from the first crossing on
    let t_first = crossings[0];
    let period = 2.0 * std::f64::consts::PI / omega_hat;
    let interp = |t_q: f64| -> Option<f64> {
        let i = pts.partition_point(|p| p.0 < t_q);
        if i == 0 || i >= pts.len() {
            return None;
        }
        let (t0, s0) = pts[i - 1];
        let (t1, s1) = pts[i];
        Some(s0 + (s1 - s0) * (t_q - t0) / (t1 - t0))
    };
    let mut rates: Vec<f64> = Vec::new();
    for &(t, s) in pts.iter().filter(|p| p.0 >= t_first) {
        let sn = (omega_hat * t + phi_hat).sin();
        if sn.abs() < 0.6 {
            continue;
        }
        let Some(s_later) = interp(t + period) else {
            continue;
        };
        // the crossing index is only known modulo one half-period, so the
        // reconstructed envelope may be globally negated; the ratio is not
        let (e0, e1) = (s / sn, s_later / sn);
        if e0 * e1 > 0.0 {
            rates.push((e1 / e0).ln() / period);
        }
    }
    if rates.len() < 8 {
        return Err(Error::InsufficientOscillations(format!(
            "{} period-paired envelope samples; need at least 8",
            rates.len()
        )));
    }
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let decay_hat = rates[rates.len() / 2];

    // A_0 and phi at fixed (omega, decay): s e^(-d t) = P sin + Q cos,
    // over the oscillatory window only
    let fit_pts: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 >= t_first).collect();
    let (mut spp, mut spq, mut sqq, mut bp, mut bq) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, s) in &fit_pts {
        let target = s * (-decay_hat * t).exp();
        let (sn, cs) = (omega_hat * t).sin_cos();
        spp += sn * sn;
        spq += sn * cs;
        sqq += cs * cs;
        bp += sn * target;
        bq += cs * target;
    }
    let det = spp * sqq - spq * spq;
    let p_coef = (sqq * bp - spq * bq) / det;
    let q_coef = (spp * bq - spq * bp) / det;
    let amplitude = p_coef.hypot(q_coef);
    let phase = q_coef.atan2(p_coef);

    let mut rss = 0.0;
    for &(t, s) in &fit_pts {
        let model = amplitude * (decay_hat * t).exp() * (omega_hat * t + phase).sin();
        rss += (s - model) * (s - model);
    }
    let residual = (rss / fit_pts.len() as f64).sqrt();

    Ok(EnvelopeFit {
        omega_hat,
        decay_hat,
        amplitude,
        phase,
        fit_window: (fit_pts[0].0.exp(), fit_pts[fit_pts.len() - 1].0.exp()),
        residual,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Lane-Emden value `w(y)` for data `w(0) = 1`, by series handoff plus
/// integration when the probe lies beyond the trusted series range.
fn le_w_at(
    alpha: f64,
    delta: f64,
    power: u32,
    y: f64,
    order: usize,
    opts: &IntegrateOpts,
) -> Result<f64> {
    let series = le_series(alpha, delta, power, 1.0, order);
    let radius = series.radius_estimate().min(1e6);
    if y <= 0.25 * radius {
        return Ok(series.evaluate(y));
    }
    let eps = (0.25 * radius).min(y / 2.0);
    let start = series.evaluate_with_derivative(eps);
    let traj = integrate_le(alpha, delta, power, eps, start, y, opts)?;
    if !traj.reached_target() {
        return Err(Error::IntegrationFailed(format!(
            "Lane-Emden reference stopped at y = {}",
            traj.last_x()
        )));
    }
    Ok(traj.last_point().u)
}

/// Deviation `|w_full(y) - w_LE(y)|` at a fixed rescaled abscissa for each
/// datum in `c_list`: the full equation is expanded at the origin with
/// `u(0) = c`, continued to `x = y/c^((p-1)/2)`, rescaled onto Lane-Emden
/// variables, and compared against the unperturbed reference.
pub fn large_c_convergence(
    eq: &GeneralEquation,
    y_probe: f64,
    c_list: &[f64],
    order: usize,
    opts: &IntegrateOpts,
) -> Result<Vec<f64>> {
    if y_probe <= 0.0 {
        return Err(Error::Domain(format!(
            "probe must be positive, got {y_probe}"
        )));
    }
    let w_le = le_w_at(eq.alpha(), eq.delta(), eq.power(), y_probe, order, opts)?;
    let gamma_s = (eq.power() as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(c_list.len());
    for &c in c_list {
        if c <= 0.0 {
            return Err(Error::Domain(format!("data must be positive, got {c}")));
        }
        let sol = expand_at_zero(eq, c, order)?;
        let x_target = y_probe / c.powf(gamma_s);
        let trust = sol.trust_radius();
        let w_full = if x_target <= 0.5 * trust {
            sol.series().evaluate(x_target) / c
        } else {
            let eps = (0.5 * trust).min(0.01).min(x_target / 2.0);
            let start = sol.phase_state(eps)?;
            let traj = integrate(eq, eps, start, x_target, opts)?;
            if !traj.reached_target() {
                return Err(Error::IntegrationFailed(format!(
                    "full equation stopped at x = {} for c = {c}",
                    traj.last_x()
                )));
            }
            traj.last_point().u / c
        };
        out.push((w_full - w_le).abs());
    }
    Ok(out)
}

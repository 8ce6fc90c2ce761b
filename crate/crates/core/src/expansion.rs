//! Local power-series solutions at the two singular endpoints.
//!
//! Both expansions come from one mechanical engine: the equation is
//! multiplied through by `x` (at the origin) or rewritten in `y = 1 - x` and
//! multiplied by `(1 - y)` (at the right endpoint), which clears every pole
//! term and leaves four polynomial multipliers. Equating coefficients order
//! by order then yields the series, one free parameter per endpoint.

use serde::Serialize;

use crate::equation::{EndpointPolys, GeneralEquation};
use crate::error::{Error, Result};
use crate::series::{PhasePoint, PowerSeries};

/// Which fixed singularity a local solution is anchored at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Endpoint {
    /// Series in `x` about `x = 0`, parametrized by `u(0)`.
    Zero,
    /// Series in `y = 1 - x` about `x = 1`, parametrized by `u(1)`.
    One,
}

/// A truncated local solution at one endpoint, in the local variable.
#[derive(Clone, Debug)]
pub struct LocalSolution {
    endpoint: Endpoint,
    parameter: f64,
    series: PowerSeries,
    trust_radius: f64,
}

impl LocalSolution {
    fn new(endpoint: Endpoint, parameter: f64, series: PowerSeries) -> Self {
        // no lower floor here: large data shrinks the convergence radius
        // like c^(-(p-1)/2) and evaluating past it hands garbage to the
        // integrator
        let trust_radius = if series.order() >= 8 {
            0.5 * series.radius_estimate()
        } else {
            0.01
        };
        Self {
            endpoint,
            parameter,
            series,
            trust_radius,
        }
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    /// The free datum: `u(0)` at [`Endpoint::Zero`], `u(1)` at [`Endpoint::One`].
    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    /// The series in the local variable (`x` or `y = 1 - x`).
    pub fn series(&self) -> &PowerSeries {
        &self.series
    }

    /// Numerically trusted evaluation range in the local variable.
    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    /// The abscissa at local offset `t`.
    pub fn abscissa(&self, t: f64) -> f64 {
        match self.endpoint {
            Endpoint::Zero => t,
            Endpoint::One => 1.0 - t,
        }
    }

    /// Phase state `(u, u')` at `x = eps` or `x = 1 - eps`. The offset must
    /// stay within half the trust radius.
    pub fn phase_state(&self, eps: f64) -> Result<PhasePoint> {
        let limit = 0.5 * self.trust_radius;
        if !(eps > 0.0 && eps <= limit) {
            return Err(Error::OutsideTrustRadius { offset: eps, limit });
        }
        Ok(self.phase_state_unchecked(eps))
    }

    /// Phase state without the trust-radius guard.
    pub fn phase_state_unchecked(&self, eps: f64) -> PhasePoint {
        let pt = self.series.evaluate_with_derivative(eps);
        match self.endpoint {
            Endpoint::Zero => pt,
            // chain rule: du/dx = -du/dy
            Endpoint::One => PhasePoint {
                u: pt.u,
                du: -pt.du,
            },
        }
    }
}

/// Resonance diagnostics of the x=1 expansion.
///
/// When the resonance parameter is a nonnegative integer the recurrence
/// denominator vanishes and solvability imposes polynomial constraints on
/// the leading coefficients. Only the leading constraint
/// `d0 (C + delta d0^(p-1)) = 0` is solved here; the full constraint system
/// for higher resonance orders is detection-only.
#[derive(Clone, Debug, Serialize)]
pub struct ResonanceReport {
    pub k_res: f64,
    pub is_resonant: bool,
    /// Real roots of the leading constraint, in ascending order; always
    /// contains 0.
    pub leading_roots: Vec<f64>,
}

fn resonant_order(k_res: f64) -> Option<usize> {
    let rounded = k_res.round();
    if rounded >= 0.0 && (k_res - rounded).abs() < 1e-9 {
        Some(rounded as usize)
    } else {
        None
    }
}

/// Detects resonance at x=1 and reports the real roots of the leading
/// constraint polynomial.
pub fn resonance_report(eq: &GeneralEquation) -> Result<ResonanceReport> {
    let d = eq.derived_constants()?;
    let mut roots = vec![0.0];
    // d0 (C + delta d0^(p-1)) = 0; the nonzero roots satisfy
    // d0^(p-1) = -C/delta
    let base = -d.c_const / eq.delta();
    let deg = eq.power() - 1;
    if deg % 2 == 0 {
        if base > 0.0 {
            let r = base.powf(1.0 / deg as f64);
            roots.push(-r);
            roots.push(r);
        }
    } else if base != 0.0 {
        roots.push(base.signum() * base.abs().powf(1.0 / deg as f64));
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(ResonanceReport {
        k_res: d.k_res,
        is_resonant: resonant_order(d.k_res).is_some(),
        leading_roots: roots,
    })
}

/// Analytic solution at `x = 0` with `u(0) = c`, truncated at `order`.
pub fn expand_at_zero(eq: &GeneralEquation, c: f64, order: usize) -> Result<LocalSolution> {
    assert!(order >= 4, "expansion order must be at least 4");
    let coeffs = solve_recurrence(&eq.zero_polys(), eq.power(), c, order)?;
    Ok(LocalSolution::new(
        Endpoint::Zero,
        c,
        PowerSeries::new(0.0, coeffs)?,
    ))
}

/// Analytic solution at `x = 1` with `u(1) = b`, truncated at `order`, as a
/// series in `y = 1 - x`. Fails with [`Error::ResonantParameter`] when the
/// resonance parameter is a nonnegative integer; those solutions require the
/// constraint handling reported by [`resonance_report`].
pub fn expand_at_one(eq: &GeneralEquation, b: f64, order: usize) -> Result<LocalSolution> {
    assert!(order >= 4, "expansion order must be at least 4");
    let constants = eq.derived_constants()?;
    if let Some(k) = resonant_order(constants.k_res) {
        return Err(Error::ResonantParameter {
            k: constants.k_res,
            order: k,
        });
    }
    let coeffs = solve_recurrence(&eq.one_polys(), eq.power(), b, order)?;
    Ok(LocalSolution::new(
        Endpoint::One,
        b,
        PowerSeries::new(0.0, coeffs)?,
    ))
}

/// Solves `mp u'' + mq u' + mr u + mn u^p = 0` order by order for the series
/// coefficients of `u`, given the zeroth coefficient.
///
/// The `t^m` coefficient of the equation is linear in `h_(m+1)` with factor
/// `(m+1) (mp[1] m + mq[0])`; everything else involves only `h_0..h_m`.
pub(crate) fn solve_recurrence(
    polys: &EndpointPolys,
    power: u32,
    h0: f64,
    order: usize,
) -> Result<Vec<f64>> {
    debug_assert_eq!(polys.mp[0], 0.0, "second-derivative multiplier keeps no constant");
    let scale = polys.mp[1].abs() + polys.mq[0].abs();
    let mut h = Vec::with_capacity(order + 1);
    h.push(h0);
    for m in 0..order {
        let mf = m as f64;
        let den = (mf + 1.0) * (polys.mp[1] * mf + polys.mq[0]);
        if den.abs() <= 1e-300 * scale.max(1.0) {
            return Err(Error::RecurrenceBreakdown {
                order: m + 1,
                denominator: den,
            });
        }
        // u^p coefficients of the partial series; index m only needs h_0..h_m
        let partial = PowerSeries::new(0.0, h.clone())?;
        let nonlinear = partial.pow(power);

        let mut acc = 0.0;
        for (i, &mp) in polys.mp.iter().enumerate().skip(2).take(m.max(1)) {
            if i > m {
                break;
            }
            let j = m - i; // u'' index
            acc += mp * ((j + 2) * (j + 1)) as f64 * h[j + 2];
        }
        for (i, &mq) in polys.mq.iter().enumerate().skip(1) {
            if i > m {
                break;
            }
            let j = m - i; // u' index
            acc += mq * (j + 1) as f64 * h[j + 1];
        }
        for (i, &mr) in polys.mr.iter().enumerate() {
            if i > m {
                break;
            }
            acc += mr * h[m - i];
        }
        for (i, &mn) in polys.mn.iter().enumerate() {
            if i > m {
                break;
            }
            acc += mn * nonlinear.coeff(m - i);
        }
        let next = -acc / den;
        if !next.is_finite() {
            return Err(Error::NonFiniteCoefficient(m + 1));
        }
        h.push(next);
    }
    Ok(h)
}

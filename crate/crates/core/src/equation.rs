//! Data model for the perturbed equation
//! `p(x) u'' + q(x) u' + r(x) u + delta u^p = 0`
//! with `p(x) = 1 + sum a_k x^(k+2)`, `q(x) = alpha/x + sum b_k x^(k+1)`,
//! `r(x) = c_(-1)/x + sum_(k>=0) c_k x^k`, indices running over `k = -1..n`.
//!
//! The x=1 singularity is enforced through `p(1) = 0`. Derived quantities
//! (the power-law singular solution, its coefficient constraints, and the
//! leading constants of the x=1 expansion) live here as well. The x=1
//! constants are obtained by performing the `y = 1 - x` substitution
//! mechanically on coefficient vectors rather than by transcribed formulas.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::PhasePoint;

/// Tolerance for identities that hold exactly by construction.
pub const TOL_EXACT: f64 = 1e-14;
/// Tolerance for floating-point derived conditions.
pub const TOL_DERIVED: f64 = 1e-12;

// ---------------------------------------------------------------------------
// polynomial helpers (coefficient vectors, index = power)

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `s(1 - y)` as a polynomial in `y`.
pub(crate) fn poly_at_one_minus(s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    // (1 - y)^i expanded with a running Pascal row
    for (i, &coeff) in s.iter().enumerate() {
        let mut binom = 1.0;
        for j in 0..=i {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            out[j] += coeff * sign * binom;
            binom = binom * (i - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Real `deg`-th root of `base`, when one exists.
fn real_root(base: f64, deg: u32) -> Option<f64> {
    if deg % 2 == 0 {
        if base < 0.0 {
            None
        } else {
            Some(base.powf(1.0 / deg as f64))
        }
    } else {
        Some(base.signum() * base.abs().powf(1.0 / deg as f64))
    }
}

// ---------------------------------------------------------------------------

/// The factored form `p(x) = (1 - x) * pbar(x)` of the second-derivative
/// polynomial. `pbar` is stored as its full coefficient vector; the constant
/// term must be 1 and every root must lie outside the open unit disk, so the
/// only singularity of the equation on `[0, 1]` besides `x = 0` is `x = 1`.
#[derive(Clone, Debug)]
pub struct FactoredP {
    pbar: Vec<f64>,
}

impl FactoredP {
    pub fn new(pbar: Vec<f64>) -> Result<Self> {
        if pbar.is_empty() {
            return Err(Error::InvalidEquation("pbar must be nonempty".into()));
        }
        if pbar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEquation("pbar has non-finite entries".into()));
        }
        if (pbar[0] - 1.0).abs() > TOL_EXACT {
            return Err(Error::InvalidEquation(format!(
                "pbar(0) must equal 1, got {}",
                pbar[0]
            )));
        }
        for root in polynomial_roots(&pbar) {
            // the worked example carries a root exactly on the unit circle,
            // so only roots strictly inside are rejected
            if root.norm() < 1.0 - 1e-9 {
                return Err(Error::InvalidEquation(format!(
                    "pbar root {root} lies inside the unit disk"
                )));
            }
        }
        Ok(Self { pbar })
    }

    pub fn pbar(&self) -> &[f64] {
        &self.pbar
    }

    /// Coefficient list `a_(-1)..a_n` of the expanded `p(x) = (1 - x) pbar(x)`.
    pub fn expand(&self) -> Vec<f64> {
        poly_mul(&[1.0, -1.0], &self.pbar)[1..].to_vec()
    }
}

/// Complex roots via the companion-matrix eigenvalues.
fn polynomial_roots(coeffs: &[f64]) -> Vec<nalgebra::Complex<f64>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
        if i + 1 < deg {
            m[(i + 1, i)] = 1.0;
        }
    }
    m.complex_eigenvalues().iter().copied().collect()
}

// ---------------------------------------------------------------------------

/// Coefficient data of the general perturbed equation.
#[derive(Clone, Debug)]
pub struct GeneralEquation {
    alpha: f64,
    delta: f64,
    power: u32,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl GeneralEquation {
    /// Builds and validates an equation from raw coefficient lists, each
    /// running over `k = -1..n`. `p(1) = 0` must hold within [`TOL_EXACT`]
    /// and `p` must be positive on `[0, 1)`.
    pub fn new(
        alpha: f64,
        delta: f64,
        power: u32,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidEquation(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(delta.is_finite() && delta != 0.0) {
            return Err(Error::InvalidEquation(format!(
                "delta must be nonzero, got {delta}"
            )));
        }
        if power < 2 {
            return Err(Error::InvalidEquation(format!(
                "nonlinearity power must exceed 1, got {power}"
            )));
        }
        if a.is_empty() || a.len() != b.len() || a.len() != c.len() {
            return Err(Error::InvalidEquation(format!(
                "coefficient lists must share a nonzero length, got {}/{}/{}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        for v in a.iter().chain(&b).chain(&c) {
            if !v.is_finite() {
                return Err(Error::InvalidEquation(
                    "coefficient lists must be finite".into(),
                ));
            }
        }
        let eq = Self {
            alpha,
            delta,
            power,
            a,
            b,
            c,
        };
        let scale = 1.0 + eq.a.iter().map(|v| v.abs()).sum::<f64>();
        let p1 = eq.p_at(1.0);
        if p1.abs() > TOL_EXACT * scale {
            return Err(Error::InvalidEquation(format!(
                "no singularity at x=1: p(1) = {p1}, expected 0"
            )));
        }
        // dense interior sampling plus the sign just left of 1
        const SAMPLES: usize = 1024;
        for i in 0..SAMPLES {
            let x = i as f64 / SAMPLES as f64;
            if eq.p_at(x) <= 0.0 {
                return Err(Error::InvalidEquation(format!(
                    "p(x) must stay positive on [0,1); p({x}) = {}",
                    eq.p_at(x)
                )));
            }
        }
        if eq.p_at(1.0 - 1e-8) <= 0.0 {
            return Err(Error::InvalidEquation(
                "p(x) turns nonpositive near x=1".into(),
            ));
        }
        Ok(eq)
    }

    /// Builds the equation from the factored form of `p`.
    pub fn from_factored(
        alpha: f64,
        delta: f64,
        power: u32,
        pbar: &FactoredP,
        b: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        Self::new(alpha, delta, power, pbar.expand(), b, c)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    /// Coefficients `a_(-1)..a_n` of `p(x)`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Coefficients `b_(-1)..b_n` of `q(x)` beyond the `alpha/x` pole.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Coefficients `c_(-1)..c_n` of `r(x)`.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn p_at(&self, x: f64) -> f64 {
        // p(x) = 1 + x * (a_(-1) + a_0 x + ...)
        1.0 + x * horner(&self.a, x)
    }

    pub fn p_prime_at(&self, x: f64) -> f64 {
        let d: Vec<f64> = self
            .a
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1) as f64 * v)
            .collect();
        horner(&d, x)
    }

    pub fn q_at(&self, x: f64) -> f64 {
        self.alpha / x + horner(&self.b, x)
    }

    pub fn r_at(&self, x: f64) -> f64 {
        self.c[0] / x + horner(&self.c[1..], x)
    }

    /// `Some(r)` when `r(x)` is the constant `r` (no pole, no x-dependence).
    pub fn constant_r(&self) -> Option<f64> {
        if self.c[0] == 0.0 && self.c.iter().skip(2).all(|&v| v == 0.0) {
            Some(self.c.get(1).copied().unwrap_or(0.0))
        } else {
            None
        }
    }

    /// First-order system right-hand side `(u', v')` at `(x, u, v)`.
    pub fn rhs(&self, x: f64, u: f64, v: f64) -> [f64; 2] {
        let nonlinear = self.delta * u.powi(self.power as i32);
        [
            v,
            -(self.q_at(x) * v + self.r_at(x) * u + nonlinear) / self.p_at(x),
        ]
    }

    /// Raw residual of `(u, u', u'')` in the equation, together with the
    /// magnitude of its largest term for relative comparisons.
    pub fn residual(&self, x: f64, u: f64, du: f64, ddu: f64) -> (f64, f64) {
        let t1 = self.p_at(x) * ddu;
        let t2 = self.q_at(x) * du;
        let t3 = self.r_at(x) * u;
        let t4 = self.delta * u.powi(self.power as i32);
        let scale = t1.abs().max(t2.abs()).max(t3.abs()).max(t4.abs());
        (t1 + t2 + t3 + t4, scale)
    }

    /// The power-law solution `u = amplitude * x^exponent` at `x = 0`.
    pub fn singular_solution(&self) -> Result<SingularSolution> {
        singular_solution_parts(self.alpha, self.delta, self.power)
    }

    /// Residuals `a(a-1) a_k + a b_k + c_k` for `k = -1..n`, with `a` the
    /// singular-solution exponent. The singular solution solves the full
    /// equation exactly when every residual vanishes.
    pub fn matching_residuals(&self) -> Result<Vec<f64>> {
        let s = self.singular_solution()?;
        let a = s.exponent;
        Ok((0..self.a.len())
            .map(|i| a * (a - 1.0) * self.a[i] + a * self.b[i] + self.c[i])
            .collect())
    }

    /// Phase-plane image `(u_inf(x0), u_inf'(x0))` of the singular solution.
    pub fn wrapping_point(&self, x0: f64) -> Result<PhasePoint> {
        if !(x0 > 0.0 && x0 <= 1.0) {
            return Err(Error::Domain(format!(
                "wrapping point needs 0 < x0 <= 1, got {x0}"
            )));
        }
        let s = self.singular_solution()?;
        Ok(PhasePoint {
            u: s.amplitude * x0.powf(s.exponent),
            du: s.exponent * s.amplitude * x0.powf(s.exponent - 1.0),
        })
    }

    /// Leading constants of the x=1 expansion, derived by substituting
    /// `y = 1 - x` on coefficient vectors and clearing the `1/(1-y)` poles.
    pub fn derived_constants(&self) -> Result<DerivedConstants> {
        let polys = self.one_polys();
        let a_lead = polys.mp[1];
        let b_const = -polys.mq[0];
        let c_const = polys.mr[0];
        let scale = 1.0
            + self
                .a
                .iter()
                .enumerate()
                .map(|(i, v)| (i + 2) as f64 * v.abs())
                .sum::<f64>();
        if a_lead.abs() <= TOL_DERIVED * scale {
            return Err(Error::DegenerateExpansion);
        }
        Ok(DerivedConstants {
            a_lead,
            b_const,
            c_const,
            k_res: b_const / a_lead,
        })
    }

    /// Equation polynomials multiplied through by `x`, clearing the poles at
    /// the origin. Feeds the x=0 series recurrence.
    pub(crate) fn zero_polys(&self) -> EndpointPolys {
        let mut mp = Vec::with_capacity(self.a.len() + 2);
        mp.push(0.0);
        mp.push(1.0);
        mp.extend_from_slice(&self.a);
        let mut mq = Vec::with_capacity(self.b.len() + 1);
        mq.push(self.alpha);
        mq.extend_from_slice(&self.b);
        EndpointPolys {
            mp,
            mq,
            mr: self.c.clone(),
            mn: vec![0.0, self.delta],
        }
    }

    /// Equation polynomials in `y = 1 - x`, multiplied through by `(1 - y)`,
    /// clearing the poles at `x = 1`. Feeds the x=1 series recurrence.
    pub(crate) fn one_polys(&self) -> EndpointPolys {
        // p(1 - y); the constant term is p(1) = 0 by construction
        let mut p_full = Vec::with_capacity(self.a.len() + 1);
        p_full.push(1.0);
        p_full.extend_from_slice(&self.a);
        let mut py = poly_at_one_minus(&p_full);
        py[0] = 0.0;
        let mp = poly_mul(&[1.0, -1.0], &py);

        // (1 - y) q(1 - y) = alpha + sum b_k (1 - y)^(k+2)
        let mut qb = vec![0.0];
        qb.extend_from_slice(&self.b);
        let mut qy = poly_at_one_minus(&qb);
        qy[0] += self.alpha;
        let mq = qy.iter().map(|&v| -v).collect();

        // (1 - y) r(1 - y) = c_(-1) + sum_(k>=0) c_k (1 - y)^(k+1)
        let mut rc = vec![0.0];
        rc.extend_from_slice(&self.c[1..]);
        let mut ry = poly_at_one_minus(&rc);
        ry[0] += self.c[0];

        EndpointPolys {
            mp,
            mq,
            mr: ry,
            mn: vec![self.delta, -self.delta],
        }
    }
}

/// Pole-cleared equation polynomials at one endpoint, in the local variable.
/// The series recurrence solves `mp u'' + mq u' + mr u + mn u^p = 0`
/// order by order; `mp[0] == 0` always.
pub(crate) struct EndpointPolys {
    pub mp: Vec<f64>,
    pub mq: Vec<f64>,
    pub mr: Vec<f64>,
    pub mn: Vec<f64>,
}

/// Exponent and amplitude of the singular power-law solution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SingularSolution {
    /// `-2/(p-1)`.
    pub exponent: f64,
    /// `(2 [alpha (p-1) - (p+1)] / (delta (p-1)^2))^(1/(p-1))`.
    pub amplitude: f64,
}

pub(crate) fn singular_solution_parts(
    alpha: f64,
    delta: f64,
    power: u32,
) -> Result<SingularSolution> {
    let p = power as f64;
    let base = 2.0 * (alpha * (p - 1.0) - (p + 1.0)) / (delta * (p - 1.0) * (p - 1.0));
    let amplitude = real_root(base, power - 1).ok_or_else(|| {
        Error::AmplitudeUndefined(format!(
            "no real (p-1)-th root: 2[alpha(p-1)-(p+1)]/(delta(p-1)^2) = {base} with even degree {}",
            power - 1
        ))
    })?;
    Ok(SingularSolution {
        exponent: -2.0 / (p - 1.0),
        amplitude,
    })
}

/// Leading constants of the x=1 expansion.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivedConstants {
    /// Coefficient of `y` in `p(1-y)`; the recurrence's leading factor.
    #[serde(rename = "A")]
    pub a_lead: f64,
    /// Constant term of `(1-y) q(1-y)`.
    #[serde(rename = "B")]
    pub b_const: f64,
    /// Constant term of `(1-y) r(1-y)`.
    #[serde(rename = "C")]
    pub c_const: f64,
    /// Resonance parameter `B / A`.
    pub k_res: f64,
}

// ---------------------------------------------------------------------------

/// The four-parameter profile equation
/// `(1 - x^2) u'' + (alpha/x + beta x) u' - gamma u + delta u^p = 0`,
/// the worked example of the general form (self-similar profiles of
/// power-nonlinearity wave equations).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProfileEquation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub power: u32,
}

impl ProfileEquation {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, power: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidEquation(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(delta.is_finite() && delta != 0.0) {
            return Err(Error::InvalidEquation(format!(
                "delta must be nonzero, got {delta}"
            )));
        }
        if !(beta.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidEquation(
                "beta and gamma must be finite".into(),
            ));
        }
        if power < 2 || power % 2 == 0 {
            return Err(Error::InvalidEquation(format!(
                "power must be an odd integer above 1, got {power}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            power,
        })
    }

    /// Embeds into the general form: `n = 0`, `a = [0, -1]`, `b = [0, beta]`,
    /// `c = [0, -gamma]` (the equation carries `-gamma u`, so `r` contributes
    /// `c_0 = -gamma`).
    pub fn embed(&self) -> GeneralEquation {
        GeneralEquation::new(
            self.alpha,
            self.delta,
            self.power,
            vec![0.0, -1.0],
            vec![0.0, self.beta],
            vec![0.0, -self.gamma],
        )
        .expect("profile embedding is always a valid general equation")
    }

    /// The constant solution `u_0 = (gamma/delta)^(1/(p-1))`, when real.
    pub fn constant_solution(&self) -> Result<f64> {
        let ratio = self.gamma / self.delta;
        real_root(ratio, self.power - 1).ok_or(Error::NoConstantSolution)
    }
}

/// The `gamma` for which the singular power-law solution solves the profile
/// equation: `gamma = (2/(1-p)) ((p+1)/(p-1) + beta)`.
pub fn matching_gamma(beta: f64, power: u32) -> f64 {
    let p = power as f64;
    2.0 / (1.0 - p) * ((p + 1.0) / (p - 1.0) + beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn fig3_profile() -> ProfileEquation {
        ProfileEquation::new(2.0, -25.0 / 12.0, 0.25, 1.0, 7).unwrap()
    }

    #[test]
    fn profile_embedding_coefficients() {
        let eq = fig3_profile().embed();
        assert_eq!(eq.a(), &[0.0, -1.0]);
        assert_eq!(eq.b(), &[0.0, -25.0 / 12.0]);
        assert_eq!(eq.c(), &[0.0, -0.25]);
        assert_eq!(eq.p_at(0.5), 0.75);
        assert_relative_eq!(eq.q_at(0.5), 2.0 / 0.5 - 25.0 / 24.0);
        assert_eq!(eq.r_at(0.7), -0.25);
        assert_eq!(eq.constant_r(), Some(-0.25));
    }

    #[test]
    fn rejects_missing_singularity() {
        // pure Lane-Emden data: p(1) = 1, no x=1 singularity
        let err = GeneralEquation::new(2.0, 1.0, 5, vec![0.0], vec![0.0], vec![0.0]);
        assert!(matches!(err, Err(Error::InvalidEquation(msg)) if msg.contains("x=1")));
    }

    #[test]
    fn rejects_interior_zero_of_p() {
        // p(x) = (1 - 2x)(1 + x) = 1 - x - 2x^2 vanishes at x = 1/2
        let err = GeneralEquation::new(2.0, 1.0, 5, vec![-0.5, -1.5], vec![0.0; 2], vec![0.0; 2]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_scalars() {
        assert!(ProfileEquation::new(-1.0, 0.0, 0.0, 1.0, 7).is_err());
        assert!(ProfileEquation::new(2.0, 0.0, 0.0, 0.0, 7).is_err());
        assert!(ProfileEquation::new(2.0, 0.0, 0.0, 1.0, 6).is_err());
    }

    #[test]
    fn singular_solution_values() {
        // alpha=2, delta=1, p=7: amplitude (2/9)^(1/6), exponent -1/3
        let s = singular_solution_parts(2.0, 1.0, 7).unwrap();
        assert_relative_eq!(s.exponent, -1.0 / 3.0);
        assert_relative_eq!(s.amplitude, (2.0f64 / 9.0).powf(1.0 / 6.0), epsilon = 1e-15);
        // invariant from the defining relation
        let p = 7.0f64;
        assert_relative_eq!(
            s.amplitude.powi(6) * 1.0 * (p - 1.0) * (p - 1.0),
            2.0 * (2.0 * (p - 1.0) - (p + 1.0)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn singular_solution_degenerate_and_undefined() {
        // alpha(p-1) = p+1 gives a zero amplitude
        let s = singular_solution_parts(2.0, 1.0, 3).unwrap();
        assert_eq!(s.amplitude, 0.0);
        // negative base with an even root degree
        assert!(matches!(
            singular_solution_parts(1.0, 1.0, 7),
            Err(Error::AmplitudeUndefined(_))
        ));
        // alpha=3, delta=1, p=3: amplitude 1, exponent -1
        let s = singular_solution_parts(3.0, 1.0, 3).unwrap();
        assert_relative_eq!(s.amplitude, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.exponent, -1.0);
    }

    #[test]
    fn matching_residuals_vanish_for_matched_profile() {
        let eq = fig3_profile().embed();
        let res = eq.matching_residuals().unwrap();
        assert_eq!(res.len(), 2);
        for r in res {
            assert!(r.abs() < 1e-15, "residual {r}");
        }
    }

    #[test]
    fn matching_residual_measures_gamma_offset() {
        // beta = -29/12 with gamma still 1/4: residual at k=0 equals
        // gamma_required - gamma
        let beta = -29.0 / 12.0;
        let eq = ProfileEquation::new(2.0, beta, 0.25, 1.0, 7).unwrap().embed();
        let res = eq.matching_residuals().unwrap();
        let expected = matching_gamma(beta, 7) - 0.25;
        assert_relative_eq!(res[1], expected, max_relative = 1e-12);
        assert_relative_eq!(matching_gamma(beta, 7), 13.0 / 36.0, max_relative = 1e-14);
    }

    #[test]
    fn matching_gamma_values() {
        assert_relative_eq!(matching_gamma(-25.0 / 12.0, 7), 0.25, max_relative = 1e-14);
        // bracket vanishes at beta = -(p+1)/(p-1)
        assert_relative_eq!(matching_gamma(-8.0 / 6.0, 7), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn wrapping_point_figure_values() {
        let eq = fig3_profile().embed();
        let p_inf = eq.wrapping_point(0.5).unwrap();
        let u = 2.0f64.sqrt() / 3.0f64.powf(1.0 / 3.0);
        let du = -2.0 * 2.0f64.sqrt() / (3.0 * 3.0f64.powf(1.0 / 3.0));
        assert_relative_eq!(p_inf.u, u, max_relative = 1e-12);
        assert_relative_eq!(p_inf.du, du, max_relative = 1e-12);
        assert_relative_eq!(p_inf.u, 0.98056, max_relative = 1e-4);
        assert_relative_eq!(p_inf.du, -0.65371, max_relative = 1e-4);
    }

    #[test]
    fn wrapping_point_at_one_and_derivative_relation() {
        let eq = fig3_profile().embed();
        let s = eq.singular_solution().unwrap();
        let at_one = eq.wrapping_point(1.0).unwrap();
        assert_relative_eq!(at_one.u, s.amplitude);
        assert_relative_eq!(at_one.du, s.exponent * s.amplitude);
        // second component carries exactly exponent/x0 times the first
        for x0 in [0.3, 0.5, 0.8] {
            let p = eq.wrapping_point(x0).unwrap();
            assert_relative_eq!(p.du, s.exponent * p.u / x0, max_relative = 1e-14);
        }
        // alpha=3, delta=1, p=3 at x0=0.5: u_inf = 1/x -> (2, -4)
        let eq3 = GeneralEquation::new(
            3.0,
            1.0,
            3,
            vec![0.0, -1.0],
            vec![0.0, 0.0],
            vec![0.0, 2.0],
        );
        // that coefficient choice satisfies the matching condition:
        // a(a-1) a_0 + a b_0 + c_0 = (-1)(-2)(-1) + 0 + 2 = 0
        let eq3 = eq3.unwrap();
        assert!(eq3.matching_residuals().unwrap()[1].abs() < 1e-14);
        let p = eq3.wrapping_point(0.5).unwrap();
        assert_relative_eq!(p.u, 2.0, max_relative = 1e-13);
        assert_relative_eq!(p.du, -4.0, max_relative = 1e-13);
    }

    #[test]
    fn singular_solution_residual_in_full_equation() {
        // with the matching condition satisfied, u_inf solves the equation
        let eq = fig3_profile().embed();
        let s = eq.singular_solution().unwrap();
        for i in 0..50 {
            let x = 0.1 + 0.8 * i as f64 / 49.0;
            let u = s.amplitude * x.powf(s.exponent);
            let du = s.exponent * u / x;
            let ddu = s.exponent * (s.exponent - 1.0) * u / (x * x);
            let (res, scale) = eq.residual(x, u, du, ddu);
            assert!(
                res.abs() < 1e-10 * scale,
                "residual {res} at x={x}, scale {scale}"
            );
        }
    }

    #[test]
    fn derived_constants_profile() {
        // y-form of the profile equation is y(2-y)u'' - (...)u' ...:
        // leading constants 2 and alpha + beta, resonance (alpha+beta)/2
        let eq = fig3_profile().embed();
        let d = eq.derived_constants().unwrap();
        assert_relative_eq!(d.a_lead, 2.0, epsilon = 1e-15);
        assert_relative_eq!(d.b_const, 2.0 - 25.0 / 12.0, max_relative = 1e-14);
        assert_relative_eq!(d.c_const, -0.25, epsilon = 1e-15);
        assert_relative_eq!(d.k_res, -1.0 / 24.0, max_relative = 1e-13);
    }

    #[test]
    fn derived_constants_degenerate() {
        // p(x) = (1-x)^2 passes construction but has a_lead = 0
        let eq = GeneralEquation::new(2.0, 1.0, 3, vec![-2.0, 1.0], vec![0.0; 2], vec![0.0; 2])
            .unwrap();
        assert!(matches!(
            eq.derived_constants(),
            Err(Error::DegenerateExpansion)
        ));
    }

    #[test]
    fn constant_solution_values() {
        let eq = fig3_profile();
        assert_relative_eq!(
            eq.constant_solution().unwrap(),
            0.25f64.powf(1.0 / 6.0),
            epsilon = 1e-15
        );
        let same = ProfileEquation::new(2.0, 0.0, 0.7, 0.7, 5).unwrap();
        assert_relative_eq!(same.constant_solution().unwrap(), 1.0);
        let zero = ProfileEquation::new(2.0, 0.0, 0.0, 1.0, 5).unwrap();
        assert_eq!(zero.constant_solution().unwrap(), 0.0);
        let none = ProfileEquation::new(2.0, 0.0, -1.0, 1.0, 5).unwrap();
        assert!(matches!(
            none.constant_solution(),
            Err(Error::NoConstantSolution)
        ));
    }

    #[test]
    fn factored_form_expansion() {
        // pbar = 1 + x reproduces p(x) = 1 - x^2
        let f = FactoredP::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(f.expand(), vec![0.0, -1.0]);
        let eq = GeneralEquation::from_factored(
            2.0,
            1.0,
            7,
            &f,
            vec![0.0, -25.0 / 12.0],
            vec![0.0, -0.25],
        )
        .unwrap();
        assert_eq!(eq.a(), &[0.0, -1.0]);
    }

    #[test]
    fn factored_form_rejects_inner_roots() {
        // pbar = 1 - 2x has a root at 1/2, inside the unit disk
        assert!(FactoredP::new(vec![1.0, -2.0]).is_err());
        // constant pbar = 1 has no roots at all
        assert!(FactoredP::new(vec![1.0]).is_ok());
        // complex pair: 1 + x^2/4 has roots at +-2i, fine
        assert!(FactoredP::new(vec![1.0, 0.0, 0.25]).is_ok());
    }

    #[test]
    fn gamma_for_matching_zeroes_the_k0_residual_uniquely() {
        let beta = -25.0 / 12.0;
        let g = matching_gamma(beta, 7);
        for (gamma, expect_zero) in [(g, true), (g + 0.1, false), (g - 0.1, false)] {
            let eq = ProfileEquation::new(2.0, beta, gamma, 1.0, 7).unwrap().embed();
            let r = eq.matching_residuals().unwrap()[1];
            assert_eq!(r.abs() < 1e-13, expect_zero, "gamma {gamma} residual {r}");
        }
    }

    #[test]
    fn mechanical_substitution_helpers() {
        // s(x) = 1 + 2x + x^2 composed with 1 - y: s(1-y) = 4 - 4y + y^2
        let out = poly_at_one_minus(&[1.0, 2.0, 1.0]);
        assert_eq!(out, vec![4.0, -4.0, 1.0]);
        let prod = poly_mul(&[1.0, -1.0], &[2.0, 1.0]);
        assert_eq!(prod, vec![2.0, -1.0, -1.0]);
    }
}

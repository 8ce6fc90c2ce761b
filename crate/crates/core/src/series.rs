//! Truncated power-series arithmetic: Cauchy products, integer powers,
//! differentiation, evaluation, and a heuristic convergence-radius estimate.
//!
//! All local solutions in this crate are carried as [`PowerSeries`] values.
//! Operations are pure; a constructed series is never mutated.

use serde::Serialize;

use crate::error::{Error, Result};

/// A phase-plane state `(u, u')` at some abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub u: f64,
    pub du: f64,
}

impl PhasePoint {
    pub fn new(u: f64, du: f64) -> Self {
        Self { u, du }
    }

    /// Euclidean distance to another phase point.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (self.u - other.u).hypot(self.du - other.du)
    }

    /// Distance from the origin.
    pub fn norm(&self) -> f64 {
        self.u.hypot(self.du)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.du.is_finite()
    }
}

/// Truncated formal power series `sum_k coeffs[k] (x - center)^k`.
///
/// The coefficient vector holds exactly `order + 1` finite entries;
/// construction rejects NaN and infinities.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries {
    center: f64,
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn new(center: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        if let Some(bad) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoefficient(bad));
        }
        Ok(Self { center, coeffs })
    }

    /// The zero series of the given truncation degree.
    pub fn zero(center: f64, order: usize) -> Self {
        Self {
            center,
            coeffs: vec![0.0; order + 1],
        }
    }

    /// A constant as a series of the given truncation degree.
    pub fn constant(center: f64, value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = value;
        Self { center, coeffs }
    }

    /// Truncation degree `N`; the series has `N + 1` coefficients.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient `k`, or zero beyond the truncation degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Truncated Cauchy product. Both factors must share a center; the result
    /// is truncated at the smaller of the two degrees.
    pub fn mul(&self, other: &PowerSeries) -> Result<PowerSeries> {
        if self.center != other.center {
            return Err(Error::CenterMismatch(self.center, other.center));
        }
        let order = self.order().min(other.order());
        let mut coeffs = vec![0.0; order + 1];
        for (m, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=m {
                acc += self.coeffs[j] * other.coeffs[m - j];
            }
            *c = acc;
        }
        Ok(PowerSeries {
            center: self.center,
            coeffs,
        })
    }

    /// `p`-th power truncated at this series' degree.
    ///
    /// Uses the fast single-pass recurrence when the leading coefficient is
    /// nonzero and falls back to repeated multiplication otherwise, so
    /// trivial-solution data (`u == 0`) never fails here.
    ///
    /// # Panics
    /// Panics if `exponent == 0`.
    pub fn pow(&self, exponent: u32) -> PowerSeries {
        assert!(exponent >= 1, "pow requires a positive exponent");
        match self.cauchy_pow(exponent) {
            Ok(s) => s,
            Err(_) => self.pow_by_mul(exponent),
        }
    }

    /// `p`-th power by the Cauchy recurrence
    /// `c_0 = a_0^p`, `c_m = (1/(m a_0)) sum_{l=1}^{m} (l p - m + l) a_l c_{m-l}`.
    ///
    /// Fails with [`Error::ZeroLeadingCoefficient`] when `a_0 == 0`.
    pub fn cauchy_pow(&self, exponent: u32) -> Result<PowerSeries> {
        assert!(exponent >= 1, "pow requires a positive exponent");
        let a0 = self.coeffs[0];
        if a0 == 0.0 {
            return Err(Error::ZeroLeadingCoefficient);
        }
        let p = exponent as f64;
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        out[0] = a0.powi(exponent as i32);
        for m in 1..=n {
            let mut acc = 0.0;
            for l in 1..=m {
                let lf = l as f64;
                acc += (lf * p - m as f64 + lf) * self.coeffs[l] * out[m - l];
            }
            out[m] = acc / (m as f64 * a0);
        }
        Ok(PowerSeries {
            center: self.center,
            coeffs: out,
        })
    }

    fn pow_by_mul(&self, exponent: u32) -> PowerSeries {
        let mut acc = self.clone();
        for _ in 1..exponent {
            acc = acc.mul(self).expect("same center");
        }
        acc
    }

    /// Termwise derivative; the truncation degree drops by one.
    /// An order-0 input yields the zero series of order 0.
    pub fn differentiate(&self) -> PowerSeries {
        if self.order() == 0 {
            return PowerSeries::zero(self.center, 0);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &a)| k as f64 * a)
            .collect();
        PowerSeries {
            center: self.center,
            coeffs,
        }
    }

    /// Horner evaluation of the truncated polynomial at `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let t = x - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, &a| acc * t + a)
    }

    /// Value and first derivative at `x` in a single Horner pass.
    pub fn evaluate_with_derivative(&self, x: f64) -> PhasePoint {
        let t = x - self.center;
        let mut v = 0.0;
        let mut d = 0.0;
        for &a in self.coeffs.iter().rev() {
            d = d * t + v;
            v = v * t + a;
        }
        PhasePoint { u: v, du: d }
    }

    /// Heuristic convergence-radius estimate from the decay of the tail
    /// coefficients (least-squares root test over the last half of the
    /// vector, skipping exact zeros). Returns `f64::INFINITY` when the tail
    /// vanishes, e.g. for a polynomial.
    ///
    /// # Panics
    /// Panics if the truncation degree is below 8; shorter tails carry no
    /// usable decay signal.
    pub fn radius_estimate(&self) -> f64 {
        let n = self.order();
        assert!(n >= 8, "radius estimate needs order >= 8");
        let lo = n / 2;
        let pts: Vec<(f64, f64)> = (lo..=n)
            .filter(|&k| self.coeffs[k] != 0.0)
            .map(|k| (k as f64, self.coeffs[k].abs().ln()))
            .collect();
        if pts.len() < 3 {
            return f64::INFINITY;
        }
        // slope of ln|a_k| over k ~ ln(1/R)
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = m * sxx - sx * sx;
        if denom == 0.0 {
            return f64::INFINITY;
        }
        let slope = (m * sxy - sx * sy) / denom;
        (-slope).exp()
    }
}

//! Radial exponential weights `ω = e^{-η}` with `η(r) = A (1 - r)^{-α}`.
//!
//! The radius function is fixed to the canonical representative
//! `τ(r) = (1 - r)^{(α + 2) / 2}`, which is comparable to `(Δη)^{-1/2}`
//! near the boundary. Every comparability constant reported elsewhere in the
//! crate refers to this choice of `τ`.
//!
//! Weight values are carried as `log ω = -η`; `ω(0.999)` for `A = α = 1`
//! is `e^{-1000}`, which underflows an `f64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("radius {0} is outside [0, 1)")]
    Domain(f64),
    #[error("weight is not in class W: {0}")]
    ClassViolation(String),
    #[error("cannot parse weight spec {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// The weight family `η(r) = A (1 - r)^{-α}`, `A > 0`, `α > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    a: f64,
    alpha: f64,
}

impl WeightSpec {
    pub fn new(a: f64, alpha: f64) -> Result<Self, WeightError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(WeightError::ClassViolation(format!(
                "scale A must be positive and finite, got {a}"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(WeightError::ClassViolation(format!(
                "exponent alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self { a, alpha })
    }

    /// `A = α = 1`, i.e. `ω(z) = e^{-1/(1-|z|)}`.
    pub fn standard() -> Self {
        Self { a: 1.0, alpha: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Exponent `β = (α + 2) / 2` of the canonical radius function.
    pub fn tau_exponent(&self) -> f64 {
        0.5 * (self.alpha + 2.0)
    }

    fn check(r: f64) -> Result<(), WeightError> {
        if (0.0..1.0).contains(&r) {
            Ok(())
        } else {
            Err(WeightError::Domain(r))
        }
    }

    pub fn eta(&self, r: f64) -> Result<f64, WeightError> {
        Self::check(r)?;
        Ok(self.eta_unchecked(r))
    }

    pub fn eta_prime(&self, r: f64) -> Result<f64, WeightError> {
        Self::check(r)?;
        Ok(self.a * self.alpha * (1.0 - r).powf(-self.alpha - 1.0))
    }

    pub fn eta_second(&self, r: f64) -> Result<f64, WeightError> {
        Self::check(r)?;
        Ok(self.a * self.alpha * (self.alpha + 1.0) * (1.0 - r).powf(-self.alpha - 2.0))
    }

    /// `Δη = η'' + η'/r` for `0 < r < 1`.
    pub fn laplacian_eta(&self, r: f64) -> Result<f64, WeightError> {
        if !(r > 0.0 && r < 1.0) {
            return Err(WeightError::Domain(r));
        }
        Ok(self.eta_second(r)? + self.eta_prime(r)? / r)
    }

    /// `log ω(r) = -η(r)`.
    pub fn log_omega(&self, r: f64) -> Result<f64, WeightError> {
        Ok(-self.eta(r)?)
    }

    /// `ω(r)`; underflows to zero close to the boundary, prefer [`Self::log_omega`].
    pub fn omega(&self, r: f64) -> Result<f64, WeightError> {
        Ok((-self.eta(r)?).exp())
    }

    pub fn tau(&self, r: f64) -> Result<f64, WeightError> {
        Self::check(r)?;
        Ok(self.tau_unchecked(r))
    }

    pub fn tau_prime(&self, r: f64) -> Result<f64, WeightError> {
        Self::check(r)?;
        let beta = self.tau_exponent();
        Ok(-beta * (1.0 - r).powf(beta - 1.0))
    }

    #[inline]
    pub(crate) fn eta_unchecked(&self, r: f64) -> f64 {
        self.a * (1.0 - r).powf(-self.alpha)
    }

    #[inline]
    pub(crate) fn tau_unchecked(&self, r: f64) -> f64 {
        (1.0 - r).powf(self.tau_exponent())
    }

    /// `η` as a function of the distance `s = 1 - r` to the boundary, for
    /// callers that know `s` more accurately than `r`.
    #[inline]
    pub fn eta_at_gap(&self, s: f64) -> f64 {
        self.a * s.powf(-self.alpha)
    }

    #[inline]
    pub fn tau_at_gap(&self, s: f64) -> f64 {
        s.powf(self.tau_exponent())
    }

    /// Arclength of the radial segment `[0, r]` in the metric `|dz| / τ`:
    /// `u(r) = ((1 - r)^{1-β} - 1) / (β - 1)`.
    #[inline]
    pub fn radial_arclength(&self, r: f64) -> f64 {
        let beta = self.tau_exponent();
        ((1.0 - r).powf(1.0 - beta) - 1.0) / (beta - 1.0)
    }

    /// Inverse of [`Self::radial_arclength`].
    pub fn radius_at_arclength(&self, u: f64) -> f64 {
        let beta = self.tau_exponent();
        1.0 - (1.0 + (beta - 1.0) * u).powf(1.0 / (1.0 - beta))
    }

    /// The smallest integer `m >= 1` with `τ(r) / (1 - r)^m` bounded below.
    pub fn contact_exponent(&self) -> u32 {
        self.tau_exponent().ceil().max(1.0) as u32
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "weight A={} alpha={}", self.a, self.alpha)
    }
}

/// Parses `weight A=<float> alpha=<float>`; the leading `weight` keyword and
/// the key order are optional.
impl FromStr for WeightSpec {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: &str| WeightError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let mut a = None;
        let mut alpha = None;
        for (i, tok) in s.split_whitespace().enumerate() {
            if i == 0 && tok == "weight" {
                continue;
            }
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| parse_err("expected key=value"))?;
            let value: f64 = value
                .parse()
                .map_err(|_| parse_err(&format!("bad number for {key}")))?;
            match key {
                "A" | "a" => a = Some(value),
                "alpha" => alpha = Some(value),
                _ => return Err(parse_err(&format!("unknown key {key}"))),
            }
        }
        match (a, alpha) {
            (Some(a), Some(alpha)) => WeightSpec::new(a, alpha),
            _ => Err(parse_err("both A and alpha are required")),
        }
    }
}

/// Comparability constants of `τ`: `τ(z) < c1 (1 - |z|)`,
/// `|τ(z) - τ(w)| <= c2 |z - w|`, and `m_τ = min(1, 1/c1, 1/c2) / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauConstants {
    pub c1: f64,
    pub c2: f64,
    pub m_tau: f64,
    /// Disk-size parameter, `δ ∈ (0, m_τ]`; defaults to `m_τ / 2`.
    pub delta: f64,
    /// Observed range of `τ(r)² Δη(r)` on `[1/2, 1)`.
    pub tau_sq_laplacian: (f64, f64),
}

impl TauConstants {
    pub fn from_c1_c2(c1: f64, c2: f64) -> Self {
        let m_tau = 1.0_f64.min(1.0 / c1).min(1.0 / c2) / 4.0;
        Self {
            c1,
            c2,
            m_tau,
            delta: 0.5 * m_tau,
            tau_sq_laplacian: (f64::NAN, f64::NAN),
        }
    }
}

/// Measures the class-W constants of `spec` on a radial grid of `grid_size`
/// points and checks the class conditions.
pub fn validate_class_w(spec: &WeightSpec, grid_size: usize) -> Result<TauConstants, WeightError> {
    if grid_size < 100 {
        return Err(WeightError::ClassViolation(format!(
            "validation grid needs at least 100 points, got {grid_size}"
        )));
    }
    if !(spec.alpha > 0.0 && spec.a > 0.0) {
        return Err(WeightError::ClassViolation(format!(
            "A and alpha must be positive (A={}, alpha={})",
            spec.a, spec.alpha
        )));
    }

    // Grid in s = 1 - r, geometric toward the boundary plus uniform in r,
    // so both r = 0 and r -> 1 are represented.
    let mut radii: Vec<f64> = (0..grid_size)
        .map(|i| i as f64 / grid_size as f64)
        .chain((1..=grid_size).map(|i| 1.0 - 10f64.powf(-12.0 * i as f64 / grid_size as f64)))
        .collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let mut sup_ratio = 0.0_f64;
    let mut sup_slope = 0.0_f64;
    for &r in &radii {
        let t = spec.tau_unchecked(r);
        sup_ratio = sup_ratio.max(t / (1.0 - r));
        sup_slope = sup_slope.max(spec.tau_prime(r)?.abs());
    }
    // Chord slopes between consecutive grid points must respect the
    // derivative bound as well.
    for w in radii.windows(2) {
        let slope = (spec.tau_unchecked(w[1]) - spec.tau_unchecked(w[0])).abs() / (w[1] - w[0]);
        if slope > sup_slope * (1.0 + 1e-9) {
            return Err(WeightError::ClassViolation(format!(
                "tau chord slope {slope} exceeds derivative bound {sup_slope}"
            )));
        }
    }

    let near_one = 1.0 - 1e-12;
    if spec.tau_unchecked(near_one) > 1e-6 || spec.tau_prime(near_one)?.abs() > 1e-3 {
        return Err(WeightError::ClassViolation(
            "tau or tau' does not vanish at the boundary".into(),
        ));
    }

    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &r in radii.iter().filter(|&&r| r >= 0.5) {
        let t = spec.tau_unchecked(r);
        let v = t * t * spec.laplacian_eta(r)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(WeightError::ClassViolation(format!(
            "tau^2 * laplacian(eta) not bounded away from 0 and infinity: [{lo}, {hi}]"
        )));
    }

    // Strict inequality tau < c1 (1 - r).
    let c1 = sup_ratio * (1.0 + 1e-9);
    let mut constants = TauConstants::from_c1_c2(c1, sup_slope);
    constants.tau_sq_laplacian = (lo, hi);
    Ok(constants)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn eta_values() {
        let w = WeightSpec::standard();
        assert_eq!(w.eta(0.0).unwrap(), 1.0);
        assert!(close(w.eta(0.5).unwrap(), 2.0, 1e-15));
        assert!(close(w.eta(0.999).unwrap(), 1000.0, 1e-12));
        assert!(matches!(w.eta(1.0), Err(WeightError::Domain(_))));
        assert!(matches!(w.eta(-0.1), Err(WeightError::Domain(_))));
    }

    #[test]
    fn tau_values() {
        let w = WeightSpec::standard();
        assert_eq!(w.tau(0.0).unwrap(), 1.0);
        assert!(close(w.tau(0.75).unwrap(), 0.125, 1e-15));
        // tau^2 * laplacian(eta) -> 2 for A = alpha = 1
        let r = 1.0 - 1e-6;
        let t = w.tau(r).unwrap();
        assert!(close(t * t * w.laplacian_eta(r).unwrap(), 2.0, 1e-5));
    }

    #[test]
    fn class_constants_alpha_one() {
        let c = validate_class_w(&WeightSpec::standard(), 1000).unwrap();
        assert!(close(c.c2, 1.5, 1e-12));
        assert!(c.c1 > 1.0 && c.c1 < 1.0 + 1e-6);
        assert!(close(c.m_tau, 1.0 / 6.0, 1e-12));
        assert!(close(c.delta, 1.0 / 12.0, 1e-12));
        assert!(c.tau_sq_laplacian.0 > 0.0 && c.tau_sq_laplacian.1 < 10.0);
    }

    #[test]
    fn class_alpha_two_and_negative() {
        let w = WeightSpec::new(1.0, 2.0).unwrap();
        assert!(validate_class_w(&w, 200).is_ok());
        assert!(close(w.tau(0.5).unwrap(), 0.25, 1e-15));
        assert!(matches!(
            WeightSpec::new(1.0, -0.5),
            Err(WeightError::ClassViolation(_))
        ));
        assert!(validate_class_w(&w, 10).is_err());
    }

    #[test]
    fn parse_weight_grammar() {
        let w: WeightSpec = "weight A=2 alpha=0.5".parse().unwrap();
        assert_eq!((w.a(), w.alpha()), (2.0, 0.5));
        let w: WeightSpec = "alpha=1 A=1".parse().unwrap();
        assert_eq!(w, WeightSpec::standard());
        assert!("weight A=1".parse::<WeightSpec>().is_err());
        assert!("weight A=1 alpha=x".parse::<WeightSpec>().is_err());
        assert_eq!(w.to_string().parse::<WeightSpec>().unwrap(), w);
    }

    #[test]
    fn radial_arclength_closed_form() {
        let w = WeightSpec::standard();
        assert!(close(w.radial_arclength(0.75), 2.0, 1e-14));
        let r = w.radius_at_arclength(2.0);
        assert!(close(r, 0.75, 1e-14));
    }

    #[test]
    fn contact_exponent_from_alpha() {
        assert_eq!(WeightSpec::standard().contact_exponent(), 2);
        assert_eq!(WeightSpec::new(1.0, 2.0).unwrap().contact_exponent(), 2);
        assert_eq!(WeightSpec::new(1.0, 2.5).unwrap().contact_exponent(), 3);
    }
}

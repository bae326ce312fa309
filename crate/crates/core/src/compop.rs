//! Polynomial self-maps of the disk and the boundary functionals that decide
//! boundedness, compactness and compactness of differences of composition
//! operators.
//!
//! Limits `|z| -> 1` are approximated by suprema over circles of increasing
//! radius; the verdict extrapolates the last three suprema.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::R_MAX_DEFAULT;
use crate::metric::{self, GeodesicOptions, MetricError};
use crate::quad::{mc_disk, McEstimate};
use crate::weights::{validate_class_w, WeightError, WeightSpec};

pub const BOUNDARY_SAMPLES: usize = 4096;
pub const ANGULAR_SAMPLES_DEFAULT: usize = 1024;
/// Default `ε` of the perturbed template; the template needs `0 < ε < 1/128`.
pub const SEC4_EPS_DEFAULT: f64 = 0.0078;
/// A profile decays when its extrapolated limit is below this fraction of
/// its recent maximum.
pub const DECAY_FRACTION: f64 = 0.05;
/// Exact `ρ_τ` evaluations per circle and functional before the supremum is
/// reported as a bracket.
const EXACT_BUDGET: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompopError {
    #[error("not a self-map: max |φ| on the boundary samples is {0}")]
    NotSelfMap(f64),
    #[error("invalid map `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("φ({0}) reaches the unit circle")]
    BoundaryTouch(Complex64),
    #[error("invalid radii: {0}")]
    Radii(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Default radii `1 - 2^{-k}`, `k = 3..=9`.
pub fn default_radii() -> Vec<f64> {
    (3..=9).map(|k| 1.0 - 0.5f64.powi(k)).collect()
}

mod dd {
    //! Double-double arithmetic for polynomial evaluation near the circle,
    //! where differences of nearby maps fall below double rounding.
    use num_complex::Complex64;

    #[derive(Debug, Clone, Copy, Default)]
    pub struct Dd {
        pub hi: f64,
        pub lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    impl Dd {
        pub fn new(x: f64) -> Self {
            Self { hi: x, lo: 0.0 }
        }

        pub fn add(self, o: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, o.hi);
            let (t, f) = two_sum(self.lo, o.lo);
            let (s, e) = fast_two_sum(s, e + t);
            let (hi, lo) = fast_two_sum(s, e + f);
            Dd { hi, lo }
        }

        pub fn neg(self) -> Dd {
            Dd {
                hi: -self.hi,
                lo: -self.lo,
            }
        }

        pub fn mul_f(self, b: f64) -> Dd {
            let p = self.hi * b;
            let e = self.hi.mul_add(b, -p) + self.lo * b;
            let (hi, lo) = fast_two_sum(p, e);
            Dd { hi, lo }
        }

        pub fn mul(self, o: Dd) -> Dd {
            let p = self.hi * o.hi;
            let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
            let (hi, lo) = fast_two_sum(p, e);
            Dd { hi, lo }
        }

        pub fn value(self) -> f64 {
            self.hi + self.lo
        }
    }

    #[derive(Debug, Clone, Copy, Default)]
    pub struct DdC {
        pub re: Dd,
        pub im: Dd,
    }

    impl DdC {
        pub fn from_c(z: Complex64) -> Self {
            Self {
                re: Dd::new(z.re),
                im: Dd::new(z.im),
            }
        }

        pub fn add(self, o: DdC) -> DdC {
            DdC {
                re: self.re.add(o.re),
                im: self.im.add(o.im),
            }
        }

        pub fn sub(self, o: DdC) -> DdC {
            self.add(DdC {
                re: o.re.neg(),
                im: o.im.neg(),
            })
        }

        pub fn mul_c(self, z: Complex64) -> DdC {
            DdC {
                re: self.re.mul_f(z.re).add(self.im.mul_f(z.im).neg()),
                im: self.re.mul_f(z.im).add(self.im.mul_f(z.re)),
            }
        }

        pub fn scale(self, s: f64) -> DdC {
            DdC {
                re: self.re.mul_f(s),
                im: self.im.mul_f(s),
            }
        }

        pub fn norm_sqr(self) -> Dd {
            self.re.mul(self.re).add(self.im.mul(self.im))
        }

        pub fn value(self) -> Complex64 {
            Complex64::new(self.re.value(), self.im.value())
        }
    }

    /// `1 - |w|`, accurate when `|w|` is close to 1.
    pub fn gap(w: DdC) -> f64 {
        let one_minus_sq = Dd::new(1.0).add(w.norm_sqr().neg()).value();
        one_minus_sq / (1.0 + w.value().norm())
    }
}

use dd::DdC;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Poly,
    /// `(1 + z²)/2 + ε (1 - z²)^5`; `ε = 0` is `(1 + z²)/2`.
    HalfOnePlusZ2(f64),
}

/// A polynomial self-map of the disk.
#[derive(Debug, Clone, Serialize)]
pub struct SelfMap {
    coeffs: Vec<Complex64>,
    name: Option<String>,
    #[serde(skip)]
    form: Form,
}

impl SelfMap {
    /// Checks the self-map property on [`BOUNDARY_SAMPLES`] boundary points.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self, CompopError> {
        let mut coeffs = coeffs;
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(CompopError::Parse {
                input: format!("{coeffs:?}"),
                reason: "coefficients must be finite".into(),
            });
        }
        while coeffs.len() > 1 && *coeffs.last().unwrap() == Complex64::new(0.0, 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Self::checked(Self {
            coeffs,
            name: None,
            form: Form::Poly,
        })
    }

    fn checked(map: Self) -> Result<Self, CompopError> {
        let m = map.max_boundary_modulus();
        if m > 1.0 + 1e-12 {
            return Err(CompopError::NotSelfMap(m));
        }
        Ok(map)
    }

    pub fn identity() -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]).unwrap()
    }

    pub fn constant(c: Complex64) -> Result<Self, CompopError> {
        if c.norm() >= 1.0 {
            return Err(CompopError::NotSelfMap(c.norm()));
        }
        Self::new(vec![c])
    }

    /// `z ↦ c z`.
    pub fn scaled(c: Complex64) -> Result<Self, CompopError> {
        Self::new(vec![Complex64::new(0.0, 0.0), c])
    }

    /// `(1 + z²)/2`.
    pub fn half_one_plus_z2() -> Self {
        Self::sec4_family(0.0)
    }

    /// `(1 + z²)/2 + ε (1 - z²)^5` for `0 < ε < 1/128`.
    pub fn sec4_psi(eps: f64) -> Result<Self, CompopError> {
        if !(eps > 0.0 && eps < 1.0 / 128.0) {
            return Err(CompopError::Parse {
                input: format!("map template sec4_psi eps={eps}"),
                reason: "eps must lie in (0, 1/128)".into(),
            });
        }
        Ok(Self::sec4_family(eps))
    }

    fn sec4_family(eps: f64) -> Self {
        // (1 - z²)^5 = Σ C(5, j) (-1)^j z^{2j}
        let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
        let mut coeffs = vec![Complex64::new(0.0, 0.0); if eps == 0.0 { 3 } else { 11 }];
        coeffs[0] += 0.5;
        coeffs[2] += 0.5;
        if eps != 0.0 {
            for (j, b) in binom.iter().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                coeffs[2 * j] += sign * b * eps;
            }
        }
        let name = if eps == 0.0 {
            "half_one_plus_z2".to_string()
        } else {
            format!("sec4_psi eps={eps}")
        };
        Self {
            coeffs,
            name: Some(name),
            form: Form::HalfOnePlusZ2(eps),
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn eval_dd(&self, z: Complex64) -> DdC {
        match self.form {
            Form::HalfOnePlusZ2(eps) => {
                let sq = DdC::from_c(z).mul_c(z);
                let base = sq.add(DdC::from_c(Complex64::new(1.0, 0.0))).scale(0.5);
                if eps == 0.0 {
                    base
                } else {
                    let one = Complex64::new(1.0, 0.0);
                    let t = (one - z) * (one + z);
                    base.add(DdC::from_c(eps * t.powi(5)))
                }
            }
            Form::Poly => {
                let mut acc = DdC::from_c(*self.coeffs.last().unwrap());
                for c in self.coeffs.iter().rev().skip(1) {
                    acc = acc.mul_c(z).add(DdC::from_c(*c));
                }
                acc
            }
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_dd(z).value()
    }

    /// `other(z) - self(z)`, accurate even when far below `|self(z)|`.
    pub fn difference(&self, other: &SelfMap, z: Complex64) -> Complex64 {
        if let (Form::HalfOnePlusZ2(a), Form::HalfOnePlusZ2(b)) = (self.form, other.form) {
            let one = Complex64::new(1.0, 0.0);
            return (b - a) * ((one - z) * (one + z)).powi(5);
        }
        other.eval_dd(z).sub(self.eval_dd(z)).value()
    }

    /// `φ(z)` together with `1 - |φ(z)|` computed without cancellation.
    pub fn image(&self, z: Complex64) -> (Complex64, f64) {
        let w = self.eval_dd(z);
        (w.value(), dd::gap(w))
    }

    /// Coefficients of the `order`-th derivative.
    pub fn derivative_coeffs(&self, order: usize) -> Vec<Complex64> {
        if order > self.degree() {
            return vec![Complex64::new(0.0, 0.0)];
        }
        (order..self.coeffs.len())
            .map(|k| self.coeffs[k] * falling(k, order))
            .collect()
    }

    pub fn derivative(&self, order: usize, z: Complex64) -> Complex64 {
        horner(&self.derivative_coeffs(order), z)
    }

    /// `φ_s = (1 - s) φ + s ψ`.
    pub fn interpolate(phi: &SelfMap, psi: &SelfMap, s: f64) -> SelfMap {
        if let (Form::HalfOnePlusZ2(a), Form::HalfOnePlusZ2(b)) = (phi.form, psi.form) {
            return Self::sec4_family((1.0 - s) * a + s * b);
        }
        let n = phi.coeffs.len().max(psi.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        let coeffs = (0..n)
            .map(|k| {
                (1.0 - s) * phi.coeffs.get(k).copied().unwrap_or(zero) + s * psi.coeffs.get(k).copied().unwrap_or(zero)
            })
            .collect();
        // |φ_s| <= max(|φ|, |ψ|), so the self-map check cannot fail.
        SelfMap {
            coeffs,
            name: None,
            form: Form::Poly,
        }
    }

    /// `e^{iθ} φ(e^{-iθ} z)`.
    pub fn rotated(&self, theta: f64) -> SelfMap {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * Complex64::from_polar(1.0, theta * (1.0 - k as f64)))
            .collect();
        SelfMap {
            coeffs,
            name: None,
            form: Form::Poly,
        }
    }

    pub fn max_boundary_modulus(&self) -> f64 {
        (0..BOUNDARY_SAMPLES)
            .map(|j| {
                let z = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / BOUNDARY_SAMPLES as f64);
                self.eval(z).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn falling(k: usize, n: usize) -> f64 {
    ((k - n + 1)..=k).map(|j| j as f64).product()
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn fmt_complex(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("{}{:+}i", c.re, c.im)
    }
}

impl fmt::Display for SelfMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.form, &self.name) {
            (Form::HalfOnePlusZ2(_), Some(name)) => write!(f, "map template {name}"),
            _ => {
                let list: Vec<String> = self.coeffs.iter().map(|c| fmt_complex(*c)).collect();
                write!(f, "map poly {}", list.join(","))
            }
        }
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let s = s.trim();
    let bad = || format!("`{s}` is not a complex number");
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().map(|x| Complex64::new(x, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Result<f64, String> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => {
            let re = body[..k].parse::<f64>().map_err(|_| bad())?;
            Ok(Complex64::new(re, imag(&body[k..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

impl FromStr for SelfMap {
    type Err = CompopError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| CompopError::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let mut tokens: Vec<&str> = input.split_whitespace().collect();
        if tokens.first() == Some(&"map") {
            tokens.remove(0);
        }
        match tokens.first().copied() {
            Some("poly") => {
                let list = tokens[1..].join("");
                if list.is_empty() {
                    return Err(err("expected coefficients after `poly`"));
                }
                let coeffs = list
                    .split(',')
                    .map(parse_complex)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| err(&e))?;
                let mut map = SelfMap::new(coeffs)?;
                map.name = None;
                Ok(map)
            }
            Some("template") => match tokens.get(1).copied() {
                Some("half_one_plus_z2") if tokens.len() == 2 => Ok(SelfMap::half_one_plus_z2()),
                Some("sec4_psi") => {
                    let eps = match tokens.get(2) {
                        None => SEC4_EPS_DEFAULT,
                        Some(t) => t
                            .strip_prefix("eps=")
                            .and_then(|v| v.parse::<f64>().ok())
                            .ok_or_else(|| err("expected `eps=<float>`"))?,
                    };
                    SelfMap::sec4_psi(eps)
                }
                _ => Err(err("unknown template (half_one_plus_z2, sec4_psi eps=<float>)")),
            },
            _ => Err(err("expected `map poly c0,c1,...` or `map template <name>`")),
        }
    }
}

fn gap_of(z: Complex64) -> f64 {
    dd::gap(DdC::from_c(z))
}

/// `log(ω(z) / ω(φ(z))) = η(|φ(z)|) - η(|z|)`.
pub fn weight_ratio(spec: &WeightSpec, map: &SelfMap, z: Complex64) -> Result<f64, CompopError> {
    let gz = gap_of(z);
    if !(gz > 0.0) {
        return Err(WeightError::Domain(z.norm()).into());
    }
    let (_, gw) = map.image(z);
    if !(gw > 0.0) {
        return Err(CompopError::BoundaryTouch(z));
    }
    Ok(spec.eta_at_gap(gw) - spec.eta_at_gap(gz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    DecaysToZero,
    BoundedNonvanishing,
    Unbounded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::DecaysToZero => "decays-to-zero",
            Verdict::BoundedNonvanishing => "bounded-nonvanishing",
            Verdict::Unbounded => "unbounded",
        })
    }
}

/// Values of a functional along a fixed direction.
#[derive(Debug, Clone, Serialize)]
pub struct AngularSlice {
    pub theta: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub radii: Vec<f64>,
    /// Supremum of the functional over each circle.
    pub sup_values: Vec<f64>,
    pub log_sup: Vec<f64>,
    /// Upper bound of each supremum; differs from `sup_values` only when the
    /// exact-evaluation budget ran out.
    pub sup_upper: Vec<f64>,
    /// Angle at which each supremum was found.
    pub sup_angles: Vec<f64>,
    pub angular_slices: Vec<AngularSlice>,
    /// Limit of the suprema extrapolated from the last three radii.
    pub limit_estimate: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy)]
pub struct CriterionOptions {
    pub angular_samples: usize,
    /// Number of equally spaced directions reported as slices.
    pub slices: usize,
    pub geodesic: GeodesicOptions,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            angular_samples: ANGULAR_SAMPLES_DEFAULT,
            slices: 8,
            geodesic: GeodesicOptions::default(),
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<(), CompopError> {
    if radii.len() < 3 {
        return Err(CompopError::Radii("at least three radii are needed for a trend".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CompopError::Radii("radii must increase".into()));
    }
    if !(radii[0] > 0.0 && radii[radii.len() - 1] <= R_MAX_DEFAULT) {
        return Err(CompopError::Radii(format!("radii must lie in (0, {R_MAX_DEFAULT}]")));
    }
    Ok(())
}

/// Verdict from the last three log-suprema, plus the extrapolated limit.
///
/// The suprema are rescaled by their maximum. Increments that do not shrink
/// while increasing mean unbounded growth; otherwise the geometric
/// (Aitken) extrapolation of the limit decides between decay to zero and a
/// nonzero bound.
pub fn trend_verdict(log_sup: &[f64]) -> (Verdict, f64) {
    let n = log_sup.len();
    let tail = &log_sup[n.saturating_sub(3)..];
    if tail.iter().any(|l| *l == f64::INFINITY) {
        return (Verdict::Unbounded, f64::INFINITY);
    }
    let lmax = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return (Verdict::DecaysToZero, 0.0);
    }
    let s: Vec<f64> = tail.iter().map(|l| (l - lmax).exp()).collect();
    if s.len() < 3 {
        return (Verdict::BoundedNonvanishing, lmax.exp());
    }
    let d1 = s[1] - s[0];
    let d2 = s[2] - s[1];
    if d1 > 0.0 && d2 >= d1 {
        return (Verdict::Unbounded, f64::INFINITY);
    }
    let q = if d1 != 0.0 { d2 / d1 } else { 0.0 };
    let limit = if q > 0.0 && q < 1.0 { s[2] + d2 * q / (1.0 - q) } else { s[2] };
    let verdict = if limit <= DECAY_FRACTION { Verdict::DecaysToZero } else { Verdict::BoundedNonvanishing };
    (verdict, limit.max(0.0) * lmax.exp())
}

fn angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// Maximizes `f` on `[center - half, center + half]` by golden section.
fn polish<F: Fn(f64) -> f64>(f: F, center: f64, half: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (center - half, center + half);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..40 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 { (x1, f1) } else { (x2, f2) }
}

fn assemble(radii: &[f64], rows: Vec<(f64, f64, f64)>, slices: Vec<AngularSlice>) -> CriterionReport {
    let log_sup: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (verdict, limit_estimate) = trend_verdict(&log_sup);
    CriterionReport {
        radii: radii.to_vec(),
        sup_values: log_sup.iter().map(|l| l.exp()).collect(),
        sup_upper: rows.iter().map(|r| r.1.exp()).collect(),
        sup_angles: rows.iter().map(|r| r.2).collect(),
        log_sup,
        angular_slices: slices,
        limit_estimate,
        verdict,
    }
}

/// Per-circle suprema of `ω(z) / ω(φ(z))`. The map induces a bounded
/// operator iff the suprema stay bounded, a compact one iff they decay.
pub fn boundedness_profile(
    spec: &WeightSpec,
    map: &SelfMap,
    radii: &[f64],
    opts: &CriterionOptions,
) -> Result<CriterionReport, CompopError> {
    check_radii(radii)?;
    let thetas = angles(opts.angular_samples);
    let rows = radii
        .iter()
        .map(|&r| {
            let f = |t: f64| weight_ratio(spec, map, Complex64::from_polar(r, t));
            let vals = thetas.par_iter().map(|&t| f(t)).collect::<Result<Vec<_>, _>>()?;
            let (j, &best) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            let step = 2.0 * PI / thetas.len() as f64;
            let (t, v) = polish(|t| f(t).unwrap_or(f64::NEG_INFINITY), thetas[j], step);
            let (l, t) = if v > best { (v, t) } else { (best, thetas[j]) };
            Ok((l, l, t))
        })
        .collect::<Result<Vec<_>, CompopError>>()?;
    let slices = (0..opts.slices)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / opts.slices as f64;
            let values = radii
                .iter()
                .map(|&r| Ok(weight_ratio(spec, map, Complex64::from_polar(r, theta))?.exp()))
                .collect::<Result<_, CompopError>>()?;
            Ok(AngularSlice { theta, values })
        })
        .collect::<Result<_, CompopError>>()?;
    Ok(assemble(radii, rows, slices))
}

#[derive(Debug, Clone, Serialize)]
pub struct DifferenceReport {
    /// `ρ_τ(φ(z), ψ(z)) (ω(z)/ω(φ(z)) + ω(z)/ω(ψ(z)))`.
    pub combined: CriterionReport,
    /// `ρ_τ(φ(z), ψ(z)) ω(z)/ω(φ(z))`.
    pub phi_term: CriterionReport,
    /// `ρ_τ(φ(z), ψ(z)) ω(z)/ω(ψ(z))`.
    pub psi_term: CriterionReport,
    pub phi_profile: CriterionReport,
    pub psi_profile: CriterionReport,
}

/// Data at one sample point that needs no geodesic.
#[derive(Clone, Copy)]
struct Cheap {
    log_phi: f64,
    log_psi: f64,
    rho_lo: f64,
    rho_hi: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct PairEval<'a> {
    spec: &'a WeightSpec,
    phi: &'a SelfMap,
    psi: &'a SelfMap,
    opts: &'a GeodesicOptions,
}

impl PairEval<'_> {
    fn cheap(&self, z: Complex64) -> Result<Cheap, CompopError> {
        let log_phi = weight_ratio(self.spec, self.phi, z)?;
        let log_psi = weight_ratio(self.spec, self.psi, z)?;
        let a = self.phi.eval(z);
        let delta = self.phi.difference(self.psi, z);
        let (rho_lo, rho_hi) = metric::rho_bounds_displaced(self.spec, a, delta);
        Ok(Cheap {
            log_phi,
            log_psi,
            rho_lo,
            rho_hi,
        })
    }

    fn rho(&self, z: Complex64) -> Result<f64, CompopError> {
        let a = self.phi.eval(z);
        let delta = self.phi.difference(self.psi, z);
        Ok(metric::rho_tau_displaced(self.spec, a, delta, self.opts)?)
    }
}

/// Branch and bound over the circle samples for the functional
/// `weight(i) + log ρ_i`, using the cheap bracket of `ρ` and at most
/// [`EXACT_BUDGET`] new exact evaluations. Returns `(sup, upper, index)`.
fn bb_sup(
    weight: &[f64],
    cheap: &[Cheap],
    cache: &mut HashMap<usize, f64>,
    exact: &(dyn Fn(usize) -> Result<f64, CompopError> + Sync),
) -> Result<(f64, f64, usize), CompopError> {
    let upper: Vec<f64> = weight.iter().zip(cheap).map(|(w, c)| w + c.rho_hi.ln()).collect();
    let lower: Vec<f64> = weight.iter().zip(cheap).map(|(w, c)| w + c.rho_lo.ln()).collect();
    let mut order: Vec<usize> = (0..weight.len()).collect();
    order.sort_by(|&a, &b| upper[b].total_cmp(&upper[a]));
    let mut best = f64::NEG_INFINITY;
    let mut arg = order[0];
    for (&i, &l) in order.iter().zip(order.iter().map(|&i| &lower[i])) {
        if l > best {
            best = l;
            arg = i;
        }
    }
    let batch = rayon::current_num_threads().max(4);
    let mut spent = 0;
    let mut pos = 0;
    while pos < order.len() && upper[order[pos]] > best + 1e-9 && spent < EXACT_BUDGET {
        let chunk: Vec<usize> = order[pos..].iter().copied().take(batch).collect();
        pos += chunk.len();
        let todo: Vec<usize> = chunk
            .iter()
            .copied()
            .filter(|i| !cache.contains_key(i) && cheap[*i].rho_lo < cheap[*i].rho_hi)
            .collect();
        spent += todo.len();
        let got = todo.par_iter().map(|&i| exact(i).map(|v| (i, v))).collect::<Result<Vec<_>, _>>()?;
        cache.extend(got);
        for &i in &chunk {
            let rho = cache.get(&i).copied().unwrap_or(cheap[i].rho_hi);
            let v = weight[i] + rho.ln();
            if v > best {
                best = v;
                arg = i;
            }
        }
    }
    let rest = order[pos..].iter().map(|&i| upper[i]).fold(f64::NEG_INFINITY, f64::max);
    Ok((best, best.max(rest), arg))
}

/// Per-circle suprema of `ρ_τ(φ(z), ψ(z)) (ω(z)/ω(φ(z)) + ω(z)/ω(ψ(z)))`.
/// Decay to zero is equivalent to compactness of `C_φ - C_ψ` when both
/// operators are bounded.
pub fn difference_criterion(
    spec: &WeightSpec,
    phi: &SelfMap,
    psi: &SelfMap,
    radii: &[f64],
    opts: &CriterionOptions,
) -> Result<DifferenceReport, CompopError> {
    check_radii(radii)?;
    let phi_profile = boundedness_profile(spec, phi, radii, opts)?;
    let psi_profile = boundedness_profile(spec, psi, radii, opts)?;
    for (label, p) in [("φ", &phi_profile), ("ψ", &psi_profile)] {
        if p.verdict == Verdict::Unbounded {
            return Err(CompopError::Hypothesis(format!("C_{label} is not bounded")));
        }
    }
    let eval = PairEval {
        spec,
        phi,
        psi,
        opts: &opts.geodesic,
    };
    let thetas = angles(opts.angular_samples);
    let step = 2.0 * PI / thetas.len() as f64;
    let mut rows: [Vec<(f64, f64, f64)>; 3] = Default::default();
    for &r in radii {
        let at = |t: f64| Complex64::from_polar(r, t);
        let cheap = thetas.par_iter().map(|&t| eval.cheap(at(t))).collect::<Result<Vec<_>, _>>()?;
        let weights: [Vec<f64>; 3] = [
            cheap.iter().map(|c| log_add(c.log_phi, c.log_psi)).collect(),
            cheap.iter().map(|c| c.log_phi).collect(),
            cheap.iter().map(|c| c.log_psi).collect(),
        ];
        let mut cache = HashMap::new();
        let exact = |i: usize| eval.rho(at(thetas[i]));
        for (k, w) in weights.iter().enumerate() {
            let (mut best, mut upper, i) = bb_sup(w, &cheap, &mut cache, &exact)?;
            let mut theta = thetas[i];
            let pick = |c: &Cheap| match k {
                0 => log_add(c.log_phi, c.log_psi),
                1 => c.log_phi,
                _ => c.log_psi,
            };
            if best > f64::NEG_INFINITY {
                let cheap_upper = |t: f64| eval.cheap(at(t)).map_or(f64::NEG_INFINITY, |c| pick(&c) + c.rho_hi.ln());
                let (t, u) = polish(cheap_upper, theta, step);
                if u > best {
                    let c = eval.cheap(at(t))?;
                    let v = pick(&c) + eval.rho(at(t))?.ln();
                    if v > best {
                        best = v;
                        theta = t;
                        upper = upper.max(best);
                    }
                }
            }
            rows[k].push((best, upper, theta));
        }
    }
    let slice_angles: Vec<f64> = (0..opts.slices).map(|k| 2.0 * PI * k as f64 / opts.slices as f64).collect();
    let slice_rows: Vec<Vec<(f64, f64, f64)>> = slice_angles
        .par_iter()
        .map(|&theta| {
            radii
                .iter()
                .map(|&r| {
                    let z = Complex64::from_polar(r, theta);
                    let c = eval.cheap(z)?;
                    let rho = if c.rho_lo == c.rho_hi { c.rho_hi } else { eval.rho(z)? };
                    Ok((
                        rho * (c.log_phi.exp() + c.log_psi.exp()),
                        rho * c.log_phi.exp(),
                        rho * c.log_psi.exp(),
                    ))
                })
                .collect::<Result<Vec<_>, CompopError>>()
        })
        .collect::<Result<_, _>>()?;
    let slices = |k: usize| -> Vec<AngularSlice> {
        slice_angles
            .iter()
            .zip(&slice_rows)
            .map(|(&theta, row)| AngularSlice {
                theta,
                values: row.iter().map(|v| [v.0, v.1, v.2][k]).collect(),
            })
            .collect()
    };
    let [c0, c1, c2] = rows;
    Ok(DifferenceReport {
        combined: assemble(radii, c0, slices(0)),
        phi_term: assemble(radii, c1, slices(1)),
        psi_term: assemble(radii, c2, slices(2)),
        phi_profile,
        psi_profile,
    })
}

/// Default sample set for [`essential_norm_lower`]: 64 angles on each of
/// the default radii.
pub fn default_boundary_samples() -> Vec<Complex64> {
    default_radii()
        .iter()
        .flat_map(|&r| angles(64).into_iter().map(move |t| Complex64::from_polar(r, t)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EssentialNormLower {
    /// Largest `ω(z)/ω(φ(z)) + ω(z)/ω(ψ(z))` over samples with `ρ > 0.99`;
    /// zero when no sample qualifies.
    pub value: f64,
    pub qualifying: usize,
    pub samples: usize,
}

/// Restricted limsup of the weight-ratio sum over points where
/// `ρ_τ(φ(z), ψ(z)) > 0.99`.
pub fn essential_norm_lower(
    spec: &WeightSpec,
    phi: &SelfMap,
    psi: &SelfMap,
    samples: &[Complex64],
    opts: &GeodesicOptions,
) -> Result<EssentialNormLower, CompopError> {
    let eval = PairEval { spec, phi, psi, opts };
    let rows = samples
        .par_iter()
        .map(|&z| {
            let c = eval.cheap(z)?;
            let qualifies = if c.rho_lo > 0.99 {
                true
            } else if c.rho_hi <= 0.99 {
                false
            } else {
                eval.rho(z)? > 0.99
            };
            Ok(qualifies.then(|| c.log_phi.exp() + c.log_psi.exp()))
        })
        .collect::<Result<Vec<_>, CompopError>>()?;
    let kept: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(EssentialNormLower {
        value: kept.iter().copied().fold(0.0, f64::max),
        qualifying: kept.len(),
        samples: samples.len(),
    })
}

/// Default radii for [`angular_derivative`]: `1 - 2^{-k}`, `k = 5..=10`.
pub fn angular_radii() -> Vec<f64> {
    (5..=10).map(|k| 1.0 - 0.5f64.powi(k)).collect()
}

/// `|φ'(ζ)| = liminf (1 - |φ(z)|)/(1 - |z|)`, estimated along the radius to
/// `ζ` by polynomial (Neville) extrapolation to `1 - r = 0`. Returns
/// `+∞` when `|φ(ζ)| < 1`.
pub fn angular_derivative(map: &SelfMap, zeta: Complex64, radii: &[f64]) -> Result<f64, CompopError> {
    if (zeta.norm() - 1.0).abs() > 1e-12 {
        return Err(CompopError::Hypothesis(format!("ζ = {zeta} is not unimodular")));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(CompopError::Radii("radii must lie in (0, 1)".into()));
    }
    if map.image(zeta).1 > 1e-9 {
        return Ok(f64::INFINITY);
    }
    let h: Vec<f64> = radii.iter().map(|r| 1.0 - r).collect();
    let mut q: Vec<f64> = radii.iter().zip(&h).map(|(&r, h)| map.image(zeta * r).1 / h).collect();
    if q.iter().any(|v| !v.is_finite() || *v > 1e8) {
        return Ok(f64::INFINITY);
    }
    // Neville's scheme evaluated at h = 0.
    let n = q.len();
    for k in 1..n {
        for i in 0..n - k {
            q[i] = (h[i + k] * q[i] - h[i] * q[i + 1]) / (h[i + k] - h[i]);
        }
    }
    Ok(q[0])
}

/// Index of the first derivative order `n <= max_order` where `φ^{(n)}(ζ)`
/// and `ψ^{(n)}(ζ)` differ, if any.
pub fn order_data_mismatch(phi: &SelfMap, psi: &SelfMap, zeta: Complex64, max_order: usize) -> Option<usize> {
    (0..=max_order).find(|&n| {
        let scale: f64 = phi
            .coeffs
            .iter()
            .enumerate()
            .chain(psi.coeffs.iter().enumerate())
            .filter(|(k, _)| *k >= n)
            .map(|(k, c)| c.norm() * falling(k, n))
            .sum();
        let diff = (phi.derivative(n, zeta) - psi.derivative(n, zeta)).norm();
        diff > 1e-12 * scale.max(1.0)
    })
}

/// True iff `φ` and `ψ` have the same `M`-order data at `ζ`.
pub fn order_data_check(phi: &SelfMap, psi: &SelfMap, zeta: Complex64, max_order: usize) -> bool {
    order_data_mismatch(phi, psi, zeta, max_order).is_none()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactStatus {
    Holds,
    Fails,
    /// No image point fell into the neighborhood.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContactOrder {
    pub status: ContactStatus,
    /// Infimum of `(1 - |w|)/|ζ - w|^k` over sampled image points near `ζ`.
    pub inf: f64,
    /// Image point where the infimum was attained.
    pub at: Option<Complex64>,
    pub in_neighborhood: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ContactOptions {
    /// Approximate number of disk samples.
    pub samples: usize,
    /// Radius of the neighborhood of `ζ`.
    pub neighborhood: f64,
    /// The order of contact is at most `k` when the infimum exceeds this.
    pub threshold: f64,
}

impl Default for ContactOptions {
    fn default() -> Self {
        Self {
            samples: 1 << 18,
            neighborhood: 0.2,
            threshold: 1e-6,
        }
    }
}

/// Samples `w = φ(z)` near the unimodular point `ζ` and returns the infimum
/// of `(1 - |w|)/|ζ - w|^k`. The image has order of contact at most `k` at
/// `ζ` when the infimum is positive (above the threshold).
///
/// The sample set is `z = (1 - h) e^{iθ}` with `h` log-spaced in
/// `[1e-12, 1/2]`, so tangential approaches to the circle are represented.
pub fn contact_order_check(map: &SelfMap, zeta: Complex64, k: f64, opts: &ContactOptions) -> Result<ContactOrder, CompopError> {
    if (zeta.norm() - 1.0).abs() > 1e-12 || !(k > 0.0) {
        return Err(CompopError::Hypothesis("need |ζ| = 1 and k > 0".into()));
    }
    let n_h = 64;
    let n_t = (opts.samples / n_h).max(64);
    let rows: Vec<(f64, Complex64, usize)> = (0..n_h)
        .into_par_iter()
        .map(|i| {
            let h = 10f64.powf(-12.0 + (12.0 - 2f64.log10()) * i as f64 / (n_h - 1) as f64);
            let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0), 0);
            for j in 0..n_t {
                let z = Complex64::from_polar(1.0 - h, 2.0 * PI * j as f64 / n_t as f64);
                let (w, gap) = map.image(z);
                let dist = (zeta - w).norm();
                if dist < opts.neighborhood && dist > 0.0 {
                    best.2 += 1;
                    let v = gap / dist.powf(k);
                    if v < best.0 {
                        best.0 = v;
                        best.1 = w;
                    }
                }
            }
            best
        })
        .collect();
    let count: usize = rows.iter().map(|r| r.2).sum();
    let best = rows.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    if count == 0 {
        return Ok(ContactOrder {
            status: ContactStatus::Inconclusive,
            inf: f64::NAN,
            at: None,
            in_neighborhood: 0,
        });
    }
    Ok(ContactOrder {
        status: if best.0 > opts.threshold { ContactStatus::Holds } else { ContactStatus::Fails },
        inf: best.0,
        at: Some(best.1),
        in_neighborhood: count,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproachProfile {
    /// Angle between the approach direction and the inward normal at `ζ`.
    pub angle: f64,
    /// Distances `|z - ζ|` of the sample points.
    pub h: Vec<f64>,
    /// `ρ_τ(φ(z), ψ(z))` at those points.
    pub rho: Vec<f64>,
    pub decays: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaTauReport {
    pub m: u32,
    pub big_m: u32,
    pub order_data: bool,
    /// Order of contact at most `M/m` at `φ(ζ)`.
    pub contact: ContactOrder,
    pub hypotheses_hold: bool,
    pub approaches: Vec<ApproachProfile>,
    pub decays: bool,
}

/// Checks the hypotheses (same `M`-order data at `ζ`, order of contact at
/// most `M/m` at `φ(ζ)`) and measures `ρ_τ(φ(z), ψ(z))` along a radial and
/// two oblique approaches to `ζ`. `m` defaults to the smallest integer with
/// `τ(r)/(1 - r)^m` bounded below.
pub fn omegatau_check(
    spec: &WeightSpec,
    phi: &SelfMap,
    psi: &SelfMap,
    zeta: Complex64,
    m: Option<u32>,
    big_m: u32,
    opts: &GeodesicOptions,
) -> Result<OmegaTauReport, CompopError> {
    let m = m.unwrap_or_else(|| spec.contact_exponent());
    let order_data = order_data_check(phi, psi, zeta, big_m as usize);
    let image = phi.eval(zeta);
    let contact = if (image.norm() - 1.0).abs() < 1e-9 {
        contact_order_check(phi, image / image.norm(), big_m as f64 / m as f64, &ContactOptions::default())?
    } else {
        ContactOrder {
            status: ContactStatus::Inconclusive,
            inf: f64::NAN,
            at: None,
            in_neighborhood: 0,
        }
    };
    let hs: Vec<f64> = (3..=12).map(|k| 0.5f64.powi(k)).collect();
    let eval = PairEval { spec, phi, psi, opts };
    let approaches = [0.0, PI / 3.0, -PI / 3.0]
        .into_iter()
        .map(|angle| {
            let dir = Complex64::from_polar(1.0, angle);
            let rho = hs
                .iter()
                .map(|&h| eval.rho(zeta * (1.0 - h * dir)))
                .collect::<Result<Vec<_>, _>>()?;
            let n = rho.len();
            let max = rho.iter().copied().fold(0.0, f64::max);
            let decays = rho[n - 1] <= rho[n - 2] && rho[n - 2] <= rho[n - 3] && rho[n - 1] <= 1e-3 * max.max(f64::MIN_POSITIVE);
            Ok(ApproachProfile {
                angle,
                h: hs.clone(),
                rho,
                decays: decays || max == 0.0,
            })
        })
        .collect::<Result<Vec<_>, CompopError>>()?;
    Ok(OmegaTauReport {
        m,
        big_m,
        order_data,
        hypotheses_hold: order_data && contact.status == ContactStatus::Holds,
        decays: approaches.iter().all(|a| a.decays),
        contact,
        approaches,
    })
}

/// `δ = m_τ / 2` for the canonical `τ`.
pub fn default_delta(spec: &WeightSpec) -> Result<f64, CompopError> {
    Ok(validate_class_w(spec, 1000)?.delta)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlesonEstimate {
    /// `μ(D(ξ, δτ(ξ))) / τ(ξ)²`.
    pub ratio: f64,
    pub std_err: f64,
    /// Samples whose image fell in the disk.
    pub hits: usize,
    pub samples: usize,
    pub delta: f64,
    pub radius: f64,
}

/// Monte Carlo estimate of `μ_{u,φ,p}(D(ξ, δτ(ξ))) / τ(ξ)²` with
/// `μ(E) = ∫_{φ^{-1}(E)} |u|^p ω^p / ω(φ)^p dA`, for `δ = m_τ/2`.
pub fn carleson_ratio<U>(
    spec: &WeightSpec,
    u: &U,
    map: &SelfMap,
    p: f64,
    xi: Complex64,
    mc_samples: usize,
    seed: u64,
) -> Result<CarlesonEstimate, CompopError>
where
    U: Fn(Complex64) -> f64 + Sync,
{
    if !(p > 0.0) || mc_samples < 1000 {
        return Err(CompopError::Hypothesis("need p > 0 and at least 1000 samples".into()));
    }
    let delta = default_delta(spec)?;
    let tau = spec.tau(xi.norm())?;
    let radius = delta * tau;
    let inside = |z: Complex64| (map.eval(z) - xi).norm() < radius;
    let est: McEstimate = mc_disk(seed, mc_samples, |z| {
        if !inside(z) {
            return 0.0;
        }
        let lr = weight_ratio(spec, map, z).unwrap_or(f64::INFINITY);
        u(z).abs().powf(p) * (p * lr).exp()
    });
    let hits = mc_disk(seed, mc_samples, |z| if inside(z) { 1.0 } else { 0.0 });
    Ok(CarlesonEstimate {
        ratio: est.mean / (tau * tau),
        std_err: est.std_err / (tau * tau),
        hits: (hits.mean * mc_samples as f64).round() as usize,
        samples: mc_samples,
        delta,
        radius,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformBound {
    pub s_values: Vec<f64>,
    /// `sup ω(z)/ω(φ_s(z))` over the sample points for each `s`.
    pub sup_ratio: Vec<f64>,
    /// `sup ω/ω∘φ + sup ω/ω∘ψ`.
    pub bound: f64,
    /// Points where `ω/ω∘φ_s > ω/ω∘φ + ω/ω∘ψ` beyond rounding.
    pub pointwise_violations: usize,
    pub holds: bool,
}

/// Checks `ω(z)/ω(φ_s(z)) <= ω(z)/ω(φ(z)) + ω(z)/ω(ψ(z))` for
/// `φ_s = (1 - s)φ + sψ` at every sample point, and that the suprema over
/// `s` stay below the sum of the endpoint suprema.
pub fn uniform_bound_check(
    spec: &WeightSpec,
    phi: &SelfMap,
    psi: &SelfMap,
    s_values: &[f64],
    points: &[Complex64],
) -> Result<UniformBound, CompopError> {
    let ends = points
        .par_iter()
        .map(|&z| Ok((weight_ratio(spec, phi, z)?, weight_ratio(spec, psi, z)?)))
        .collect::<Result<Vec<_>, CompopError>>()?;
    let sup = |f: &dyn Fn(&(f64, f64)) -> f64| ends.iter().map(f).fold(f64::NEG_INFINITY, f64::max).exp();
    let bound = sup(&|e| e.0) + sup(&|e| e.1);
    let mut violations = 0;
    let mut sup_ratio = Vec::with_capacity(s_values.len());
    for &s in s_values {
        let map = SelfMap::interpolate(phi, psi, s);
        let ls = points
            .par_iter()
            .map(|&z| weight_ratio(spec, &map, z))
            .collect::<Result<Vec<_>, _>>()?;
        violations += ls
            .iter()
            .zip(&ends)
            .filter(|(l, e)| **l > log_add(e.0, e.1) + 1e-9 * (1.0 + l.abs()))
            .count();
        sup_ratio.push(ls.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp());
    }
    let holds = violations == 0 && sup_ratio.iter().all(|v| *v <= bound * (1.0 + 1e-9));
    Ok(UniformBound {
        s_values: s_values.to_vec(),
        sup_ratio,
        bound,
        pointwise_violations: violations,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parse_and_display_round_trip() {
        let m: SelfMap = "map poly 0.1-0.2i,0.5,1e-3i".parse().unwrap();
        assert_eq!(m.coeffs(), &[c(0.1, -0.2), c(0.5, 0.0), c(0.0, 1e-3)]);
        let back: SelfMap = m.to_string().parse().unwrap();
        assert_eq!(back.coeffs(), m.coeffs());
        let t: SelfMap = "map template sec4_psi eps=0.005".parse().unwrap();
        assert_eq!(t.to_string(), "map template sec4_psi eps=0.005");
        assert!("map poly 2".parse::<SelfMap>().is_err());
        assert!("map template sec4_psi eps=0.0078125".parse::<SelfMap>().is_err());
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1e-3-2.5e-2i").unwrap(), c(1e-3, -2.5e-2));
    }

    #[test]
    fn template_matches_expanded_polynomial() {
        let t = SelfMap::sec4_psi(0.0078).unwrap();
        let p = SelfMap::new(t.coeffs().to_vec()).unwrap();
        for z in [c(0.3, 0.4), c(-0.9, 0.1), c(0.99, 0.0)] {
            assert!((t.eval(z) - p.eval(z)).norm() < 1e-15);
        }
    }

    #[test]
    fn difference_is_accurate_near_one() {
        let phi = SelfMap::half_one_plus_z2();
        let psi = SelfMap::sec4_psi(0.0078).unwrap();
        let poly_phi = SelfMap::new(phi.coeffs().to_vec()).unwrap();
        let poly_psi = SelfMap::new(psi.coeffs().to_vec()).unwrap();
        let r = 0.995;
        let exact = 0.0078 * ((1.0 - r) * (1.0 + r) as f64).powi(5);
        let d = phi.difference(&psi, c(r, 0.0));
        assert!((d.re - exact).abs() < 1e-14 * exact);
        // compensated Horner on the expanded coefficients, limited only by
        // the rounding of the coefficients themselves
        let d = poly_phi.difference(&poly_psi, c(r, 0.0));
        assert!((d.re - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn derivatives_are_exact() {
        let m = SelfMap::half_one_plus_z2();
        assert_eq!(m.derivative(1, c(1.0, 0.0)), c(1.0, 0.0));
        assert_eq!(m.derivative(2, c(0.3, 0.0)), c(1.0, 0.0));
        assert_eq!(m.derivative(3, c(0.3, 0.0)), c(0.0, 0.0));
    }

    #[test]
    fn weight_ratio_values() {
        let spec = WeightSpec::standard();
        let phi = SelfMap::half_one_plus_z2();
        assert!((weight_ratio(&spec, &phi, c(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        for r in [0.9, 0.99, 0.999] {
            let l = weight_ratio(&spec, &phi, c(r, 0.0)).unwrap();
            assert!((l - 1.0 / (1.0 + r)).abs() < 1e-11, "{r}: {l}");
        }
        assert_eq!(weight_ratio(&spec, &SelfMap::identity(), c(0.5, 0.3)).unwrap(), 0.0);
    }

    #[test]
    fn verdict_rules() {
        let radii = default_radii();
        let bounded: Vec<f64> = radii.iter().map(|r| 1.0 / (1.0 + r)).collect();
        assert_eq!(trend_verdict(&bounded).0, Verdict::BoundedNonvanishing);
        let growing: Vec<f64> = radii.iter().map(|r| 1.0 / (1.0 - r)).collect();
        assert_eq!(trend_verdict(&growing).0, Verdict::Unbounded);
        let decaying: Vec<f64> = radii.iter().map(|r| 3.5 * (1.0 - r * r).ln()).collect();
        assert_eq!(trend_verdict(&decaying).0, Verdict::DecaysToZero);
        assert_eq!(trend_verdict(&[f64::NEG_INFINITY; 3]).0, Verdict::DecaysToZero);
    }

    #[test]
    fn angular_derivative_values() {
        let radii = angular_radii();
        let one = c(1.0, 0.0);
        let a = angular_derivative(&SelfMap::half_one_plus_z2(), one, &radii).unwrap();
        assert!((a - 1.0).abs() < 1e-9, "{a}");
        let a = angular_derivative(&SelfMap::identity(), c(0.6, 0.8), &radii).unwrap();
        assert!((a - 1.0).abs() < 1e-9);
        let half = SelfMap::scaled(c(0.5, 0.0)).unwrap();
        assert_eq!(angular_derivative(&half, one, &radii).unwrap(), f64::INFINITY);
    }

    #[test]
    fn order_data() {
        let phi = SelfMap::half_one_plus_z2();
        let psi = SelfMap::sec4_psi(0.0078).unwrap();
        for zeta in [c(1.0, 0.0), c(-1.0, 0.0)] {
            assert!(order_data_check(&phi, &psi, zeta, 4));
            assert_eq!(order_data_mismatch(&phi, &psi, zeta, 5), Some(5));
        }
        let id = SelfMap::identity();
        let sq = SelfMap::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(order_data_check(&id, &sq, c(1.0, 0.0), 0));
        assert!(!order_data_check(&id, &sq, c(1.0, 0.0), 1));
    }
}

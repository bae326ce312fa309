//! Moment tables and the reproducing kernel.
//!
//! The monomials are orthogonal for a radial weight, so with
//! `m_n = ‖z^n‖² = 2∫_0^1 r^{2n+1} ω(r)² dr` the kernel is
//! `K(z, w) = Σ (z w̄)^n / m_n`. For `A = α = 1`, `log m_n ≈ -4√n`, so the
//! table is stored as `log m_n` and every sum is carried out with a running
//! max-shift.
//!
//! Tail bounds: `m_n` is a log-convex sequence (Cauchy-Schwarz on the radial
//! measure), so the term ratio `x m_n / m_{n+1}` of `Σ x^n / m_n` is
//! nonincreasing and the tail after `n0` is bounded by a geometric series
//! with ratio `x m_{n0-1} / m_{n0}`.

use std::cell::RefCell;
use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::quad::{self, BoundaryMap, QuadOptions};
use crate::weights::{WeightError, WeightSpec};

/// Largest table depth the crate will build.
pub const N_MAX_DEFAULT: usize = 200_000;
/// Largest modulus at which kernel quantities are expected to be requested.
pub const R_MAX_DEFAULT: f64 = 0.999;
/// Relative accuracy of the moment quadrature.
pub const MOMENT_TOL_DEFAULT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("point {0} is not inside the unit disk")]
    Domain(Complex64),
    #[error("moment quadrature for n = {n} did not converge (estimated relative error {rel_err:e})")]
    Quadrature { n: usize, rel_err: f64 },
    #[error("kernel series truncated after {terms} terms with relative tail bound {tail_bound:e}")]
    Truncated { terms: usize, tail_bound: f64 },
    #[error("|K(z, w)| is below the rounding floor of its series (sum of moduli e^{log_abs_sum})")]
    Cancellation { log_abs_sum: f64 },
    #[error("2D quadrature did not converge: {0}")]
    NotConverged(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// `log m_n` for `n = 0..=N` with per-entry relative error estimates.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    spec: WeightSpec,
    tol: f64,
    log_m: Vec<f64>,
    rel_err: Vec<f64>,
}

/// Computes `log m_n` by integrating in `t = -log(1 - r)`, where the
/// integrand is `exp(g(t))` with
/// `g(t) = log 2 + (2n+1) log(1 - e^{-t}) - 2A e^{αt} - t`, a concave function.
/// The integral runs over the window where `g` is within 60 of its maximum.
fn log_moment(spec: &WeightSpec, n: usize, tol: f64) -> Result<(f64, f64), KernelError> {
    let a = spec.a();
    let alpha = spec.alpha();
    let k = (2 * n + 1) as f64;
    let g = |t: f64| LN_2 + k * (-(-t).exp_m1()).ln() - 2.0 * a * (alpha * t).exp() - t;
    let dg = |t: f64| k / t.exp_m1() - 2.0 * a * alpha * (alpha * t).exp() - 1.0;

    let mut hi = 1.0;
    while dg(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dg(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let g_max = g(t_star);
    let level = g_max - 60.0;

    let bisect = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if g(mid) > level {
                inside = mid;
            } else {
                outside = mid;
            }
            if (inside - outside).abs() <= 1e-13 * inside.abs().max(1e-30) {
                break;
            }
        }
        outside
    };
    // g(t) <= log 2 - 2A + (2n+1) log t near 0, far below the level at 1e-30.
    let t_left = bisect(t_star, 1e-30);
    let mut step = 1.0;
    while g(t_star + step) > level {
        step *= 2.0;
    }
    let t_right = bisect(t_star, t_star + step);

    let opts = QuadOptions {
        rel_tol: tol,
        abs_tol: 0.0,
        max_panels: 2000,
        initial_panels: 8,
    };
    let res = quad::adaptive(|t: f64| (g(t) - g_max).exp(), t_left, t_right, &opts);
    let rel_err = res.abs_err / res.value;
    if !res.converged || !(res.value > 0.0) {
        return Err(KernelError::Quadrature { n, rel_err });
    }
    Ok((g_max + res.value.ln(), rel_err))
}

impl MomentTable {
    /// Moments `m_0, ..., m_N` to relative accuracy `tol`.
    pub fn compute(spec: &WeightSpec, n_max: usize, tol: f64) -> Result<Self, KernelError> {
        let mut table = Self {
            spec: *spec,
            tol,
            log_m: Vec::new(),
            rel_err: Vec::new(),
        };
        table.extend_to(n_max)?;
        Ok(table)
    }

    /// A table deep enough for kernel sums with `|z w̄| <= radius²` at
    /// relative accuracy `tol`; fails past [`N_MAX_DEFAULT`].
    pub fn covering(spec: &WeightSpec, radius: f64, tol: f64) -> Result<Self, KernelError> {
        let mut table = Self::compute(spec, 255, MOMENT_TOL_DEFAULT)?;
        table.ensure_radius(radius, tol)?;
        Ok(table)
    }

    /// Extends the table until it covers `radius` (see [`Self::covering`]).
    pub fn ensure_radius(&mut self, radius: f64, tol: f64) -> Result<(), KernelError> {
        if !(0.0..1.0).contains(&radius) {
            return Err(KernelError::Domain(Complex64::new(radius, 0.0)));
        }
        if radius == 0.0 {
            return Ok(());
        }
        let log_x = 2.0 * radius.ln();
        loop {
            if let Some(rel) = self.diag_tail_relative(log_x) {
                if rel <= tol.min(1e-16) {
                    return Ok(());
                }
            }
            let len = self.len();
            if len >= N_MAX_DEFAULT + 1 {
                let tail_bound = self.diag_tail_relative(log_x).unwrap_or(f64::INFINITY);
                return Err(KernelError::Truncated {
                    terms: len,
                    tail_bound,
                });
            }
            self.extend_to((len + len / 2).min(N_MAX_DEFAULT))?;
        }
    }

    /// Relative size of the tail of `Σ x^n / m_n` past the end of the table.
    fn diag_tail_relative(&self, log_x: f64) -> Option<f64> {
        let n0 = self.len() - 1;
        let log_tail = self.log_tail_bound(log_x, n0, 0)?;
        let mut sum = LogSum::new();
        for n in 0..n0 {
            sum.add(n as f64 * log_x - self.log_m[n]);
        }
        Some((log_tail - sum.log()).exp())
    }

    /// Computes missing entries up to degree `n_max` inclusive.
    pub fn extend_to(&mut self, n_max: usize) -> Result<(), KernelError> {
        let start = self.log_m.len();
        if n_max < start {
            return Ok(());
        }
        let spec = self.spec;
        let tol = self.tol;
        let new: Vec<(f64, f64)> = (start..=n_max)
            .into_par_iter()
            .map(|n| log_moment(&spec, n, tol))
            .collect::<Result<_, _>>()?;
        for (lm, e) in new {
            self.log_m.push(lm);
            self.rel_err.push(e);
        }
        Ok(())
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Number of entries, `N + 1`.
    pub fn len(&self) -> usize {
        self.log_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_m.is_empty()
    }

    pub fn log_m(&self, n: usize) -> f64 {
        self.log_m[n]
    }

    pub fn log_moments(&self) -> &[f64] {
        &self.log_m
    }

    /// Estimated relative quadrature error of `m_n`.
    pub fn rel_err(&self, n: usize) -> f64 {
        self.rel_err[n]
    }

    /// Log of an upper bound for `Σ_{n >= n0} n^k x^n / m_n`, or `None`
    /// when the ratio bound at `n0` is not below one or `n0` is outside the
    /// table.
    pub fn log_tail_bound(&self, log_x: f64, n0: usize, k: u32) -> Option<f64> {
        if n0 == 0 || n0 >= self.len() {
            return None;
        }
        let nf = n0 as f64;
        let log_q = log_x + self.log_m[n0 - 1] - self.log_m[n0] + k as f64 * (1.0 / nf).ln_1p();
        if log_q >= 0.0 {
            return None;
        }
        let log_first = k as f64 * nf.ln() + nf * log_x - self.log_m[n0];
        // Slack for the quadrature error in the moment ratios.
        Some(log_first - (-log_q.exp_m1()).ln() + 1e-6)
    }
}

/// Sum of positive terms given by their logarithms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    shift: f64,
    acc: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.shift {
            self.acc = self.acc * (self.shift - log_term).exp() + 1.0;
            self.shift = log_term;
        } else {
            self.acc += (log_term - self.shift).exp();
        }
    }

    pub(crate) fn log(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.acc.ln()
        }
    }
}

/// `K(z, w)` in polar log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub log_abs: f64,
    pub phase: f64,
    pub terms_used: usize,
    /// Bound on the neglected tail relative to `|K(z, w)|`.
    pub tail_bound: f64,
}

impl KernelValue {
    /// The kernel as a complex number; overflows for points near the boundary.
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.log_abs.exp(), self.phase)
    }
}

fn check_point(z: Complex64) -> Result<(), KernelError> {
    if z.re.is_finite() && z.im.is_finite() && z.norm() < 1.0 {
        Ok(())
    } else {
        Err(KernelError::Domain(z))
    }
}

/// `K(z, w) = Σ (z w̄)^n / m_n`, summed until the tail is below
/// `tol · |K(z, w)|`.
///
/// For well separated points close to the boundary `|K(z, w)|` can be
/// smaller than the rounding error of the partial sums; that case is reported
/// as [`KernelError::Cancellation`].
pub fn kernel(table: &MomentTable, z: Complex64, w: Complex64, tol: f64) -> Result<KernelValue, KernelError> {
    let sum = kernel_sum(table, z, w, tol)?;
    if sum.value.tail_bound > tol {
        return Err(KernelError::Cancellation {
            log_abs_sum: sum.log_abs_sum,
        });
    }
    Ok(sum.value)
}

pub(crate) struct KernelSum {
    pub value: KernelValue,
    /// `log Σ |z w̄|^n / m_n`.
    pub log_abs_sum: f64,
}

impl KernelSum {
    /// Relative rounding level of the computed value.
    pub fn rounding(&self) -> f64 {
        1e-16 * (self.value.terms_used as f64).sqrt() * (self.log_abs_sum - self.value.log_abs).exp()
    }
}

pub(crate) fn kernel_sum(table: &MomentTable, z: Complex64, w: Complex64, tol: f64) -> Result<KernelSum, KernelError> {
    check_point(z)?;
    check_point(w)?;
    let x = z * w.conj();
    if x == Complex64::new(0.0, 0.0) {
        return Ok(KernelSum {
            value: KernelValue {
                log_abs: -table.log_m(0),
                phase: 0.0,
                terms_used: 1,
                tail_bound: 0.0,
            },
            log_abs_sum: -table.log_m(0),
        });
    }
    let log_x = x.norm().ln();
    let theta = x.arg();
    let mut shift = -table.log_m(0);
    let mut acc = Complex64::new(1.0, 0.0);
    let mut abs_sum = LogSum::new();
    abs_sum.add(shift);
    let len = table.len();
    let mut last_tail = f64::INFINITY;
    for n in 1..len {
        let l = n as f64 * log_x - table.log_m(n);
        if l > shift {
            acc *= (shift - l).exp();
            shift = l;
        }
        acc += Complex64::from_polar((l - shift).exp(), n as f64 * theta);
        abs_sum.add(l);
        if n % 16 == 0 || n + 1 == len {
            if let Some(log_tail) = table.log_tail_bound(log_x, n + 1, 0) {
                let log_abs = shift + acc.norm().ln();
                last_tail = (log_tail - log_abs).exp();
                // Past the rounding floor of the partial sums the tail cannot
                // be resolved any further.
                let floor = (log_tail - abs_sum.log()).exp() <= 1e-17;
                if last_tail <= tol || floor {
                    return Ok(KernelSum {
                        value: KernelValue {
                            log_abs,
                            phase: acc.arg(),
                            terms_used: n + 1,
                            tail_bound: last_tail,
                        },
                        log_abs_sum: abs_sum.log(),
                    });
                }
            }
        }
    }
    Err(KernelError::Truncated {
        terms: len,
        tail_bound: last_tail,
    })
}

/// `log K(z, z) = 2 log ‖K_z‖`.
pub fn log_kernel_diag(table: &MomentTable, z: Complex64, tol: f64) -> Result<f64, KernelError> {
    check_point(z)?;
    let r = z.norm();
    if r == 0.0 {
        return Ok(-table.log_m(0));
    }
    let log_x = 2.0 * r.ln();
    let mut sum = LogSum::new();
    for n in 0..table.len() {
        sum.add(n as f64 * log_x - table.log_m(n));
        if n % 16 == 15 {
            if let Some(t) = table.log_tail_bound(log_x, n + 1, 0) {
                if t - sum.log() <= tol.ln() {
                    return Ok(sum.log());
                }
            }
        }
    }
    let tail_bound = table
        .log_tail_bound(log_x, table.len() - 1, 0)
        .map_or(f64::INFINITY, |t| (t - sum.log()).exp());
    Err(KernelError::Truncated {
        terms: table.len(),
        tail_bound,
    })
}

/// Natural log of `‖K_z‖`.
pub fn log_kernel_norm(table: &MomentTable, z: Complex64) -> Result<f64, KernelError> {
    Ok(0.5 * log_kernel_diag(table, z, 1e-14)?)
}

/// `log ‖K_a - K_b‖² = log Σ |a^n - b^n|² / m_n`, `-∞` when `a = b`.
///
/// The differences are generated by `D_{n+1} = a D_n + b^n (a - b)`, scaled
/// by `R^n` with `R = max(|a|, |b|)`, so the series has positive terms and no
/// cancellation between kernel norms occurs even for `a ≈ b`.
pub fn log_kernel_diff_norm_sq(table: &MomentTable, a: Complex64, b: Complex64, tol: f64) -> Result<f64, KernelError> {
    check_point(a)?;
    check_point(b)?;
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    let big_r = a.norm().max(b.norm());
    let log_r = big_r.ln();
    let a_s = a / big_r;
    let b_s = b / big_r;
    let delta = (a - b) / big_r;
    let log_delta = delta.norm().ln();
    // n = 0 term vanishes; D_1 = a - b.
    let mut d = delta;
    let mut beta = b_s;
    let mut sum = LogSum::new();
    let log_x = 2.0 * log_r;
    for n in 1..table.len() {
        sum.add(n as f64 * log_x + 2.0 * d.norm().ln() - table.log_m(n));
        d = a_s * d + beta * delta;
        beta *= b_s;
        if n % 16 == 15 {
            // |a^n - b^n| <= min(2, n |a - b| / R) R^n
            let t0 = table.log_tail_bound(log_x, n + 1, 0).map(|t| t + 2.0 * LN_2);
            let t2 = table.log_tail_bound(log_x, n + 1, 2).map(|t| t + 2.0 * log_delta);
            let t = match (t0, t2) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            if let Some(t) = t {
                if t - sum.log() <= tol.ln() {
                    return Ok(sum.log());
                }
            }
        }
    }
    Err(KernelError::Truncated {
        terms: table.len(),
        tail_bound: f64::INFINITY,
    })
}

/// `‖f_{z,w}‖` for the test function `f_{z,w}(ξ) = ω(z) K(ξ, z) (ξ - w)`.
///
/// Computed from the monomial expansion: the coefficient of `ξ^k` is
/// `b_k = z̄^{k-1}/m_{k-1} - w z̄^k/m_k`, so
/// `‖f‖² = ω(z)² Σ m_k |b_k|² = ω(z)² (|w|²/m_0 + Σ_{k>=1} |z|^{2(k-1)} |q_k - w z̄|² / m_k)`
/// with `q_k = m_k / m_{k-1}`.
pub fn test_function_norm(table: &MomentTable, z: Complex64, w: Complex64) -> Result<f64, KernelError> {
    check_point(z)?;
    check_point(w)?;
    let spec = table.spec();
    let log_omega_sq = -2.0 * spec.eta(z.norm())?;
    let wz = w * z.conj();
    let mut sum = LogSum::new();
    if w != Complex64::new(0.0, 0.0) {
        sum.add(2.0 * w.norm().ln() - table.log_m(0));
    }
    let r = z.norm();
    if r == 0.0 {
        // Only k = 1 survives beyond k = 0.
        sum.add(table.log_m(1) - 2.0 * table.log_m(0));
        return Ok((0.5 * (log_omega_sq + sum.log())).exp());
    }
    let log_x = 2.0 * r.ln();
    for k in 1..table.len() {
        let q = (table.log_m(k) - table.log_m(k - 1)).exp();
        let c = Complex64::new(q, 0.0) - wz;
        sum.add((k - 1) as f64 * log_x + 2.0 * c.norm().ln() - table.log_m(k));
        if k % 16 == 0 {
            // |q_k - w z̄| <= 2
            if let Some(t) = table.log_tail_bound(log_x, k + 1, 0) {
                if t + 2.0 * LN_2 - log_x - sum.log() <= (1e-14f64).ln() {
                    return Ok((0.5 * (log_omega_sq + sum.log())).exp());
                }
            }
        }
    }
    Err(KernelError::Truncated {
        terms: table.len(),
        tail_bound: f64::INFINITY,
    })
}

/// `log Σ x^n / m_n` for `0 <= x < 1`, `+∞` when the table is too short.
fn log_abs_series(table: &MomentTable, x: f64) -> f64 {
    if x == 0.0 {
        return -table.log_m(0);
    }
    log_kernel_diag(table, Complex64::new(x.sqrt(), 0.0), 1e-3).unwrap_or(f64::INFINITY)
}

/// Index band `[lo, hi]` of `Σ x^n / m_n` holding all terms within
/// `e^{-drop}` of the largest one, with the tail past `hi` below that level.
fn significant_band(table: &MomentTable, log_x: f64, drop: f64) -> Result<(usize, usize, f64), KernelError> {
    let len = table.len();
    let term = |n: usize| n as f64 * log_x - table.log_m(n);
    let mut peak = 0;
    let mut peak_val = term(0);
    let mut n = 1;
    while n < len {
        let v = term(n);
        if v < peak_val {
            break;
        }
        peak = n;
        peak_val = v;
        n += 1;
    }
    let mut lo = peak;
    while lo > 0 && term(lo - 1) > peak_val - drop {
        lo -= 1;
    }
    let mut hi = peak;
    loop {
        if hi + 1 >= len {
            return Err(KernelError::Truncated {
                terms: len,
                tail_bound: f64::INFINITY,
            });
        }
        if let Some(t) = table.log_tail_bound(log_x, hi + 1, 0) {
            if t < peak_val - drop {
                break;
            }
        }
        hi += 1;
    }
    Ok((lo, hi, peak_val))
}

/// `(∫_D |K(z, ξ)|^p ω(ξ)^p dA(ξ)) · ω(z)^p τ(z)^{2(p-1)}`.
///
/// Circle means of `|K(z, ·)|^p` come from FFT samples of the kernel on the
/// circle; the radial integral uses the log-layer map. Rotation invariance
/// lets `z` be taken on the positive real axis.
pub fn kernel_lp_ratio(table: &MomentTable, z: Complex64, p: f64, tol: f64) -> Result<f64, KernelError> {
    check_point(z)?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(KernelError::NotConverged(format!("exponent p = {p} must be positive")));
    }
    let spec = *table.spec();
    let s = z.norm();
    let offset = -p * spec.eta(s)? + 2.0 * (p - 1.0) * spec.tau(s)?.ln();
    let failure = RefCell::new(None);
    let planner = RefCell::new(FftPlanner::<f64>::new());

    let integrand = |rho: f64| -> f64 {
        // Cheap bound mean |F|^p <= (Σ |c_n|)^p; skip the FFT where the
        // integrand is negligible against an O(1) result.
        let log_bound = log_abs_series(table, s * rho) * p - p * spec.eta_unchecked(rho) + offset;
        if log_bound < -60.0 {
            return 0.0;
        }
        let log_mean = match log_circle_mean_abs_pow(table, s * rho, p, tol, &mut planner.borrow_mut()) {
            Ok(v) => v,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                return 0.0;
            }
        };
        2.0 * rho * (log_mean - p * spec.eta_unchecked(rho) + offset).exp()
    };
    let mut opts = QuadOptions::relative(tol);
    opts.initial_panels = 16;
    let res = quad::radial_integral_on(integrand, 0.0, quad::R_CUT_DEFAULT, BoundaryMap::LogLayer, &opts);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !res.converged {
        return Err(KernelError::NotConverged(format!(
            "radial integral at |z| = {s}: value {} error {}",
            res.value, res.abs_err
        )));
    }
    Ok(res.value)
}

/// `log` of the mean of `|Σ x^n e^{inθ} / m_n|^p` over `θ`, for real `x >= 0`.
fn log_circle_mean_abs_pow(
    table: &MomentTable,
    x: f64,
    p: f64,
    tol: f64,
    planner: &mut FftPlanner<f64>,
) -> Result<f64, KernelError> {
    if x == 0.0 {
        return Ok(-p * table.log_m(0));
    }
    let log_x = x.ln();
    let (lo, hi, peak) = significant_band(table, log_x, 36.0)?;
    let width = hi - lo + 1;
    let mut m = (2 * width).next_power_of_two().max(64);
    let mut prev: Option<f64> = None;
    loop {
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for n in 0..=hi {
            let l = n as f64 * log_x - table.log_m(n) - peak;
            if l > -60.0 {
                // Shift the band to start at 0; a common phase does not change |F|.
                let idx = (n + m - lo % m) % m;
                buf[idx] += Complex64::new(l.exp(), 0.0);
            }
        }
        planner.plan_fft_inverse(m).process(&mut buf);
        let mean = buf.iter().map(|v| v.norm().powf(p)).sum::<f64>() / m as f64;
        let log_mean = p * peak + mean.ln();
        if let Some(pv) = prev {
            if (log_mean - pv).abs() <= 0.1 * tol || m >= 1 << 22 {
                return Ok(log_mean);
            }
        }
        prev = Some(log_mean);
        m *= 2;
    }
}

/// `⟨ξ^k, K_z⟩ = ∫_D ξ^k conj(K(ξ, z)) ω(ξ)² dA(ξ)` by polar quadrature with
/// FFT-sampled circles; reproduces `z^k`.
pub fn reproducing_pairing(table: &MomentTable, z: Complex64, k: usize, tol: f64) -> Result<Complex64, KernelError> {
    check_point(z)?;
    let spec = *table.spec();
    let r = z.norm();
    let hi = if r == 0.0 {
        0
    } else {
        significant_band(table, r.ln(), 36.0)?.1
    };
    let m = (hi + k + 2).next_power_of_two().max(64);
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(m);
    let zc = z.conj();
    let circle = |rho: f64| -> Complex64 {
        // Samples of K(ρ e^{iθ_j}, z) = Σ (ρ z̄)^n e^{inθ_j} / m_n.
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let mut c = Complex64::new(1.0, 0.0);
        for (n, slot) in buf.iter_mut().enumerate().take(hi + 1) {
            *slot = c * (-table.log_m(n)).exp();
            c *= rho * zc;
        }
        fft.process(&mut buf);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in buf.iter().enumerate() {
            let e = Complex64::from_polar(1.0, 2.0 * PI * (k * j % m) as f64 / m as f64);
            acc += e * v.conj();
        }
        acc * rho.powi(k as i32) / m as f64
    };
    let opts = QuadOptions {
        initial_panels: 16,
        ..QuadOptions::relative(tol)
    };
    let res = quad::radial_integral_on(
        |rho: f64| circle(rho) * (2.0 * rho * (-2.0 * spec.eta_unchecked(rho)).exp()),
        0.0,
        quad::R_CUT_DEFAULT,
        BoundaryMap::LogLayer,
        &opts,
    );
    if !res.converged {
        return Err(KernelError::NotConverged(format!("reproducing pairing at z = {z}")));
    }
    Ok(res.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> MomentTable {
        MomentTable::compute(&WeightSpec::standard(), n, MOMENT_TOL_DEFAULT).unwrap()
    }

    #[test]
    fn moments_match_plain_quadrature() {
        let t = table(30);
        let spec = WeightSpec::standard();
        for n in [0usize, 3, 30] {
            let direct = quad::adaptive(
                |r: f64| 2.0 * r.powi(2 * n as i32 + 1) * (-2.0 * spec.eta_unchecked(r)).exp(),
                0.0,
                1.0 - 1e-9,
                &QuadOptions {
                    initial_panels: 64,
                    ..QuadOptions::relative(1e-12)
                },
            );
            let rel = (t.log_m(n).exp() - direct.value).abs() / direct.value;
            assert!(rel < 1e-10, "n = {n}: {rel}");
        }
    }

    #[test]
    fn large_degree_follows_square_root_law() {
        let spec = WeightSpec::standard();
        let (lm, err) = log_moment(&spec, 40_000, 1e-12).unwrap();
        // log m_n = -4 sqrt(n) + O(log n)
        assert!((lm + 4.0 * 200.0).abs() < 15.0, "{lm}");
        assert!(err < 1e-10);
    }

    #[test]
    fn kernel_at_origin_is_exact() {
        let t = table(10);
        let k = kernel(&t, Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.4), 1e-12).unwrap();
        assert_eq!(k.log_abs, -t.log_m(0));
        assert_eq!(k.terms_used, 1);
    }

    #[test]
    fn hermitian_symmetry() {
        let t = MomentTable::covering(&WeightSpec::standard(), 0.9, 1e-12).unwrap();
        let z = Complex64::new(0.5, 0.6);
        let w = Complex64::new(-0.2, 0.7);
        let a = kernel(&t, z, w, 1e-13).unwrap();
        let b = kernel(&t, w, z, 1e-13).unwrap();
        assert!((a.log_abs - b.log_abs).abs() < 1e-12);
        assert!((a.phase + b.phase).abs() < 1e-10);
    }

    #[test]
    fn truncation_is_reported() {
        let t = table(50);
        let z = Complex64::new(0.95, 0.0);
        match kernel(&t, z, z, 1e-12) {
            Err(KernelError::Truncated { terms, .. }) => assert_eq!(terms, 51),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn diff_norm_matches_three_term_form() {
        let t = MomentTable::covering(&WeightSpec::standard(), 0.8, 1e-12).unwrap();
        let a = Complex64::new(0.5, 0.2);
        let b = Complex64::new(-0.1, 0.6);
        let kaa = log_kernel_diag(&t, a, 1e-14).unwrap().exp();
        let kbb = log_kernel_diag(&t, b, 1e-14).unwrap().exp();
        let kab = kernel(&t, a, b, 1e-14).unwrap().value();
        let expect = kaa + kbb - 2.0 * kab.re;
        let got = log_kernel_diff_norm_sq(&t, a, b, 1e-14).unwrap().exp();
        assert!((got - expect).abs() < 1e-10 * expect);
        assert_eq!(log_kernel_diff_norm_sq(&t, a, a, 1e-14).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn lp_ratio_two_is_parseval() {
        let t = MomentTable::covering(&WeightSpec::standard(), 0.9, 1e-12).unwrap();
        let spec = WeightSpec::standard();
        for s in [0.0, 0.5, 0.8] {
            let z = Complex64::new(s, 0.0);
            let ratio = kernel_lp_ratio(&t, z, 2.0, 1e-9).unwrap();
            let expect = (log_kernel_diag(&t, z, 1e-14).unwrap() - 2.0 * spec.eta(s).unwrap()).exp()
                * spec.tau(s).unwrap().powi(2);
            assert!((ratio - expect).abs() < 1e-7 * expect, "s = {s}: {ratio} vs {expect}");
        }
    }

    #[test]
    fn reproducing_identity_small_cases() {
        let t = MomentTable::covering(&WeightSpec::standard(), 0.9, 1e-12).unwrap();
        let z = Complex64::new(0.3, -0.5);
        for k in [0usize, 1, 4] {
            let v = reproducing_pairing(&t, z, k, 1e-10).unwrap();
            let expect = z.powu(k as u32);
            assert!((v - expect).norm() < 1e-8 * expect.norm(), "k = {k}: {v} vs {expect}");
        }
    }
}

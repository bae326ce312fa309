//! Hilbert-Schmidt norms of weighted composition operators and of
//! differences `C_φ - C_ψ`, computed by two independent routes: a disk
//! integral of kernel norms, and the sum `Σ ‖(C_φ - C_ψ) e_n‖²` over the
//! monomial orthonormal basis `e_n = z^n / √m_n`.
//!
//! Disk integrals stop at `|z| = HS_R_CUT`. They are split into annuli whose
//! widths halve toward the boundary; the trend of the last annuli decides
//! between a geometric tail estimate and divergence.

use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::compop::{CompopError, SelfMap};
use crate::kernel::{self, KernelError, MomentTable};
use crate::metric::{self, GeodesicOptions, MetricError};
use crate::quad::disk_integral_annulus;
use crate::weights::WeightSpec;

pub const HS_R_CUT: f64 = 0.999;
pub const HS_TOL_DEFAULT: f64 = 1e-8;
/// Basis sums stop once three consecutive terms are below this fraction of
/// the running total.
pub const STAGNATION_FRACTION: f64 = 1e-4;
const ANGULAR_START: usize = 8;
const BASIS_N_MAX: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HsError {
    #[error("{0}")]
    Undefined(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Compop(#[from] CompopError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HsRoute {
    Integral,
    BasisSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HsStatus {
    Finite,
    /// Annulus contributions grow toward the boundary.
    Divergent,
    /// The basis sum did not stagnate within the requested truncation.
    NotStagnated,
}

#[derive(Debug, Clone, Serialize)]
pub struct HSResult {
    /// Squared HS norm; `+∞` when divergent.
    pub value_sq: f64,
    pub route: HsRoute,
    /// Basis-sum truncation `N*` (stagnation point), if reached.
    pub truncation: Option<usize>,
    /// Absolute error estimate of `value_sq`.
    pub err: f64,
    pub status: HsStatus,
    /// Integral route: contribution of each annulus. Basis route: the
    /// individual terms `‖(C_φ - C_ψ) e_n‖²`.
    pub parts: Vec<f64>,
    /// Integral route: extrapolated contribution beyond `HS_R_CUT`.
    pub tail: f64,
}

impl HSResult {
    pub fn is_finite(&self) -> bool {
        self.status == HsStatus::Finite
    }

    /// The HS norm itself.
    pub fn norm(&self) -> f64 {
        self.value_sq.sqrt()
    }
}

/// Annulus edges: `[0, 1 - 512 s]`, then widths `256 s, ..., s` with
/// `s = 1 - r_cut`.
fn annulus_edges(r_cut: f64) -> Vec<f64> {
    let s = 1.0 - r_cut;
    let mut e = vec![0.0];
    e.extend((0..=9).rev().map(|k| 1.0 - s * (1u32 << k) as f64));
    e
}

/// Integrates a vector-valued `g` annulus by annulus and applies the
/// tail/divergence rule to each component.
fn annular_integral<G>(g: G, dim: usize, tol: f64) -> Result<Vec<HSResult>, HsError>
where
    G: Fn(Complex64) -> Result<Vec<f64>, HsError> + Sync,
{
    let failure: Mutex<Option<HsError>> = Mutex::new(None);
    let f = |z: Complex64| match g(z) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().unwrap().get_or_insert(e);
            vec![0.0; dim]
        }
    };
    let edges = annulus_edges(HS_R_CUT);
    let pieces: Vec<_> = edges
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|w| disk_integral_annulus(&f, w[0], w[1], tol, ANGULAR_START))
        .collect();
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let abs_err: f64 = pieces.iter().map(|p| p.abs_err).sum();
    Ok((0..dim)
        .map(|k| {
            let parts: Vec<f64> = pieces.iter().map(|p| p.value[k]).collect();
            let n = parts.len();
            let (c1, c2, c3) = (parts[n - 3], parts[n - 2], parts[n - 1]);
            let total: f64 = parts.iter().sum();
            let (status, tail) = if c3 > 0.0 && c1 <= c2 && c2 <= c3 {
                (HsStatus::Divergent, f64::INFINITY)
            } else if c2 > 0.0 && c3 < c2 {
                let q = c3 / c2;
                (HsStatus::Finite, c3 * q / (1.0 - q))
            } else {
                (HsStatus::Finite, c3)
            };
            HSResult {
                value_sq: if status == HsStatus::Divergent { f64::INFINITY } else { total + tail },
                route: HsRoute::Integral,
                truncation: None,
                err: abs_err + tail,
                status,
                parts,
                tail,
            }
        })
        .collect())
}

/// `∫ |u|² ‖K_{φ(z)}‖² ω(z)² dA(z)`, the squared HS norm of `u C_φ`.
pub fn hs_norm_integral<U>(spec: &WeightSpec, table: &MomentTable, u: &U, map: &SelfMap) -> Result<HSResult, HsError>
where
    U: Fn(Complex64) -> Complex64 + Sync,
{
    annular_integral(
        |z| {
            let uz = u(z).norm_sqr();
            if uz == 0.0 {
                return Ok(vec![0.0]);
            }
            let lk = kernel::log_kernel_diag(table, map.eval(z), 1e-13)?;
            Ok(vec![uz * (lk - 2.0 * spec.eta_unchecked(z.norm())).exp()])
        },
        1,
        HS_TOL_DEFAULT,
    )
    .map(|mut v| v.remove(0))
}

/// `‖C_φ - C_ψ‖²_HS = ∫ ‖K_{φ(z)} - K_{ψ(z)}‖² ω(z)² dA(z)`.
///
/// The kernel difference is summed as the positive series
/// `Σ |a^n - b^n|² / m_n`, which equals `‖K_a‖² + ‖K_b‖² - 2 Re K(a, b)`
/// without the cancellation of that form.
pub fn hs_diff_integral(spec: &WeightSpec, table: &MomentTable, phi: &SelfMap, psi: &SelfMap) -> Result<HSResult, HsError> {
    annular_integral(
        |z| {
            let d = kernel::log_kernel_diff_norm_sq(table, phi.eval(z), psi.eval(z), 1e-13)?;
            Ok(vec![(d - 2.0 * spec.eta_unchecked(z.norm())).exp()])
        },
        1,
        HS_TOL_DEFAULT,
    )
    .map(|mut v| v.remove(0))
}

/// Terms `(1/m_n) ∫ |φ^n - ψ^n|² ω² dA` for `n = 0..=n_max`, by one vector
/// valued disk quadrature.
fn basis_terms(spec: &WeightSpec, table: &MomentTable, phi: &SelfMap, psi: &SelfMap, n_max: usize) -> Result<(Vec<f64>, f64), HsError> {
    if table.len() <= n_max {
        return Err(KernelError::Truncated {
            terms: table.len(),
            tail_bound: f64::INFINITY,
        }
        .into());
    }
    let g = |z: Complex64| {
        let a = phi.eval(z);
        let b = psi.eval(z);
        let log_w = -2.0 * spec.eta_unchecked(z.norm());
        let mut out = vec![0.0; n_max + 1];
        // D_n = a^n - b^n, with D_{n+1} = a D_n + b^n (a - b).
        let mut d = Complex64::new(0.0, 0.0);
        let mut bn = Complex64::new(1.0, 0.0);
        let delta = a - b;
        for (n, o) in out.iter_mut().enumerate() {
            let m = d.norm_sqr();
            if m > 0.0 {
                *o = (m.ln() + log_w - table.log_m(n)).exp();
            }
            d = a * d + bn * delta;
            bn *= b;
        }
        out
    };
    let res = disk_integral_annulus(g, 0.0, HS_R_CUT, HS_TOL_DEFAULT, ANGULAR_START);
    Ok((res.value, res.abs_err))
}

fn stagnation_point(terms: &[f64]) -> Option<usize> {
    let mut total = 0.0;
    let mut quiet = 0;
    for (n, &t) in terms.iter().enumerate() {
        total += t;
        if total > 0.0 && t < STAGNATION_FRACTION * total {
            quiet += 1;
            if quiet == 3 {
                return Some(n);
            }
        } else {
            quiet = 0;
        }
    }
    None
}

/// `Σ_{n <= n_max} ‖(C_φ - C_ψ) e_n‖²`. The stagnation point `N*` is
/// reported when it lies within `n_max`; otherwise the status is
/// [`HsStatus::NotStagnated`].
pub fn hs_diff_basis_sum(
    spec: &WeightSpec,
    table: &MomentTable,
    phi: &SelfMap,
    psi: &SelfMap,
    n_max: usize,
) -> Result<HSResult, HsError> {
    let (terms, abs_err) = basis_terms(spec, table, phi, psi, n_max)?;
    let total: f64 = terms.iter().sum();
    let truncation = if total == 0.0 { Some(0) } else { stagnation_point(&terms) };
    Ok(HSResult {
        value_sq: total,
        route: HsRoute::BasisSum,
        truncation,
        err: abs_err,
        status: if truncation.is_some() { HsStatus::Finite } else { HsStatus::NotStagnated },
        parts: terms,
        tail: 0.0,
    })
}

/// [`hs_diff_basis_sum`] with the truncation doubled from 64 until the
/// partial sums stagnate; the value is the partial sum up to `N*`.
pub fn hs_diff_basis_auto(spec: &WeightSpec, table: &MomentTable, phi: &SelfMap, psi: &SelfMap) -> Result<HSResult, HsError> {
    let mut n = 64;
    loop {
        let n_eff = n.min(table.len() - 1);
        let mut res = hs_diff_basis_sum(spec, table, phi, psi, n_eff)?;
        if let Some(stop) = res.truncation {
            res.parts.truncate(stop + 1);
            res.value_sq = res.parts.iter().sum();
            return Ok(res);
        }
        if n_eff < n || n >= BASIS_N_MAX {
            return Ok(res);
        }
        n *= 2;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoWeighted {
    /// `∫ ρ_{τ,φ,ψ}² ‖K_φ‖² ω² dA`.
    pub phi: HSResult,
    /// `∫ ρ_{τ,φ,ψ}² ‖K_ψ‖² ω² dA`.
    pub psi: HSResult,
}

/// The two integrals `∫ ρ_τ(φ, ψ)² ‖K_φ‖² ω² dA` and the same with `ψ`,
/// whose sum is comparable to `‖C_φ - C_ψ‖²_HS`.
pub fn hs_rho_weighted(
    spec: &WeightSpec,
    table: &MomentTable,
    phi: &SelfMap,
    psi: &SelfMap,
    opts: &GeodesicOptions,
) -> Result<RhoWeighted, HsError> {
    let mut v = annular_integral(
        |z| {
            let a = phi.eval(z);
            let delta = phi.difference(psi, z);
            let rho = metric::rho_tau_displaced(spec, a, delta, opts)?;
            if rho == 0.0 {
                return Ok(vec![0.0, 0.0]);
            }
            let lw = 2.0 * rho.ln() - 2.0 * spec.eta_unchecked(z.norm());
            let ka = kernel::log_kernel_diag(table, a, 1e-13)?;
            let kb = kernel::log_kernel_diag(table, a + delta, 1e-13)?;
            Ok(vec![(ka + lw).exp(), (kb + lw).exp()])
        },
        2,
        1e-6,
    )?;
    let psi_part = v.pop().unwrap();
    Ok(RhoWeighted {
        phi: v.pop().unwrap(),
        psi: psi_part,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRatio {
    /// `∫ ρ² (‖K_φ‖² + ‖K_ψ‖²) ω² dA / ‖C_φ - C_ψ‖²_HS`.
    pub ratio: f64,
    pub weighted: RhoWeighted,
    pub hs_diff: HSResult,
}

pub fn hs_equivalence_ratio(
    spec: &WeightSpec,
    table: &MomentTable,
    phi: &SelfMap,
    psi: &SelfMap,
    opts: &GeodesicOptions,
) -> Result<EquivalenceRatio, HsError> {
    let hs_diff = hs_diff_integral(spec, table, phi, psi)?;
    if !hs_diff.is_finite() || hs_diff.value_sq <= 0.0 {
        return Err(HsError::Undefined(format!(
            "‖C_φ - C_ψ‖²_HS = {} gives no ratio",
            hs_diff.value_sq
        )));
    }
    let weighted = hs_rho_weighted(spec, table, phi, psi, opts)?;
    Ok(EquivalenceRatio {
        ratio: (weighted.phi.value_sq + weighted.psi.value_sq) / hs_diff.value_sq,
        weighted,
        hs_diff,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentBound {
    /// `max ρ_τ(z_s, z_t) / ρ_τ(z, w)` over grid pairs, `z_s = (1-s) z + s w`.
    pub max_ratio: f64,
    pub argmax: (f64, f64),
    pub pairs: usize,
}

/// Largest `ρ_τ(z_s, z_t) / ρ_τ(z, w)` over pairs of the `s` grid.
pub fn segment_rho_bound(
    spec: &WeightSpec,
    z: Complex64,
    w: Complex64,
    s_grid: &[f64],
    opts: &GeodesicOptions,
) -> Result<SegmentBound, HsError> {
    if z == w {
        return Err(HsError::Undefined("z = w gives no ratio".into()));
    }
    let base = metric::rho_tau_with(spec, z, w, opts)?;
    let point = |s: f64| z + (w - z) * s;
    let pairs: Vec<(f64, f64)> = s_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| s_grid[i + 1..].iter().map(move |&t| (s, t)))
        .collect();
    // The endpoint pair gives ratio 1; a sub-segment is computed exactly
    // only when its chord bound could exceed the running maximum.
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(s, t)| metric::rho_bounds_displaced(spec, point(s), (w - z) * (t - s)).1 / base)
        .collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| upper[b].total_cmp(&upper[a]));
    let mut max_ratio = 1.0;
    let mut k = pairs.iter().position(|&p| p == (0.0, 1.0)).unwrap_or(0);
    for i in order {
        if upper[i] <= max_ratio {
            break;
        }
        let (s, t) = pairs[i];
        if (s, t) == (0.0, 1.0) {
            continue;
        }
        let r = metric::rho_tau_displaced(spec, point(s), (w - z) * (t - s), opts)? / base;
        if r > max_ratio {
            max_ratio = r;
            k = i;
        }
    }
    if pairs.is_empty() {
        return Err(HsError::Undefined("s grid needs two points".into()));
    }
    Ok(SegmentBound {
        max_ratio,
        argmax: pairs[k],
        pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PathExperiment {
    pub s_values: Vec<f64>,
    /// `‖C_{φ_s} - C_{φ_t}‖_HS` for `φ_s = (1 - s) φ + s ψ`.
    pub entries: Vec<Vec<f64>>,
    pub all_finite: bool,
    /// Largest entry between neighbouring `s` values.
    pub max_adjacent: f64,
    /// Triples violating `entry(s,t) <= entry(s,u) + entry(u,t)`.
    pub triangle_violations: usize,
    /// A divergent entry although the endpoints are HS-close.
    pub contradiction: bool,
}

/// Pairwise HS distances along the segment `φ_s = (1 - s) φ + s ψ`.
pub fn path_experiment(
    spec: &WeightSpec,
    table: &MomentTable,
    phi: &SelfMap,
    psi: &SelfMap,
    s_values: &[f64],
) -> Result<PathExperiment, HsError> {
    let mut s = s_values.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let n = s.len();
    let maps: Vec<SelfMap> = s.iter().map(|&v| SelfMap::interpolate(phi, psi, v)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| hs_diff_integral(spec, table, &maps[i], &maps[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut entries = vec![vec![0.0; n]; n];
    for (&(i, j), r) in pairs.iter().zip(&results) {
        entries[i][j] = r.norm();
        entries[j][i] = r.norm();
    }
    let all_finite = results.iter().all(HSResult::is_finite);
    let endpoints_finite = pairs
        .iter()
        .zip(&results)
        .any(|(&(i, j), r)| i == 0 && j == n - 1 && r.is_finite());
    let mut triangle_violations = 0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if entries[a][c] > (entries[a][b] + entries[b][c]) * (1.0 + 1e-6) + 1e-12 {
                    triangle_violations += 1;
                }
            }
        }
    }
    Ok(PathExperiment {
        max_adjacent: (1..n).map(|i| entries[i - 1][i]).fold(0.0, f64::max),
        s_values: s,
        entries,
        all_finite,
        triangle_violations,
        contradiction: endpoints_finite && !all_finite,
    })
}

/// Uniform `s` grid with the given number of steps on `[0, 1]`.
pub fn s_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn edges_end_at_cut() {
        let e = annulus_edges(HS_R_CUT);
        assert_eq!(e.len(), 11);
        assert!((e[e.len() - 1] - HS_R_CUT).abs() < 1e-15);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn scaled_maps_have_closed_forms() {
        let spec = WeightSpec::standard();
        let table = MomentTable::covering(&spec, 0.9, 1e-12).unwrap();
        let half = SelfMap::scaled(c(0.5)).unwrap();
        let third = SelfMap::scaled(c(1.0 / 3.0)).unwrap();
        // Σ 4^{-n} = 4/3 and Σ (2^{-n} - 3^{-n})² = 7/120
        let r = hs_norm_integral(&spec, &table, &|_| c(1.0), &half).unwrap();
        assert!((r.value_sq - 4.0 / 3.0).abs() < 1e-7, "{}", r.value_sq);
        let r = hs_diff_integral(&spec, &table, &half, &third).unwrap();
        assert!((r.value_sq - 7.0 / 120.0).abs() < 1e-8, "{}", r.value_sq);
        let b = hs_diff_basis_auto(&spec, &table, &half, &third).unwrap();
        assert!((b.value_sq - 7.0 / 120.0).abs() < 1e-5, "{}", b.value_sq);
    }

    #[test]
    fn stagnation_rule() {
        let terms = [0.0, 1.0, 0.5, 1e-5, 1e-6, 1e-7, 1e-8];
        assert_eq!(stagnation_point(&terms), Some(5));
        assert_eq!(stagnation_point(&[0.0, 1.0, 1.0]), None);
    }
}

//! Reference computations that share no code path with the production
//! routines they check.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::quad::{self, QuadOptions};
use crate::weights::WeightSpec;

/// `m_n = 2∫_0^1 r^{2n+1} ω(r)² dr` by the composite midpoint rule on
/// `points` uniform cells, with compensated summation.
pub fn midpoint_moment(spec: &WeightSpec, n: usize, points: usize) -> f64 {
    let h = 1.0 / points as f64;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for i in 0..points {
        let r = (i as f64 + 0.5) * h;
        let f = 2.0 * r.powi(2 * n as i32 + 1) * (-2.0 * spec.a() * (1.0 - r).powf(-spec.alpha())).exp();
        let y = f - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum * h
}

/// Plain left-to-right summation of `Σ_{n<terms} (z w̄)^n / m_n` from
/// explicit moments, without any rescaling.
pub fn direct_kernel_sum(moments: &[f64], z: Complex64, w: Complex64) -> Complex64 {
    let x = z * w.conj();
    let mut p = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for m in moments {
        sum += p / *m;
        p *= x;
    }
    sum
}

/// Geodesic distance of `|dz| / τ(|z|)` from Clairaut's relation: along a
/// geodesic `r sin ψ / τ(r)` is constant, with `ψ` the angle to the radial
/// direction. The constant is found by bisection on the swept angle.
pub fn clairaut_distance(spec: &WeightSpec, z: Complex64, w: Complex64) -> f64 {
    let (a, b) = (z.norm(), w.norm());
    let delta = {
        let d = (w * z.conj()).arg().abs();
        if a == 0.0 || b == 0.0 { 0.0 } else { d }
    };
    let u = |r: f64| spec.radial_arclength(r);
    if delta == 0.0 {
        return (u(a) - u(b)).abs();
    }
    let (rmin, rmax) = (a.min(b), a.max(b));
    if delta >= PI - 1e-15 {
        return u(a) + u(b);
    }
    let tau = |r: f64| spec.tau_unchecked(r);
    let g = |r: f64| r / tau(r);
    let opts = QuadOptions {
        initial_panels: 8,
        max_panels: 20_000,
        ..QuadOptions::relative(1e-12)
    };
    // ∫_{r1}^{r2} of (dθ/dr, ds/dr) with r = r1 + (r2 - r1) v², which removes
    // the inverse square root at a turning point r1.
    let pieces = |c: f64, r1: f64, r2: f64| -> (f64, f64) {
        if r2 <= r1 {
            return (0.0, 0.0);
        }
        let span = r2 - r1;
        let f = |v: f64| -> Vec<f64> {
            let r = r1 + span * v * v;
            let t = tau(r);
            let root = (r * r - c * c * t * t).max(0.0).sqrt();
            let jac = 2.0 * span * v;
            if root == 0.0 {
                return vec![0.0, 0.0];
            }
            vec![c * t / (r * root) * jac, r / (t * root) * jac]
        };
        let res = quad::adaptive(f, 0.0, 1.0, &opts);
        (res.value[0], res.value[1])
    };
    // λ in [0, 1]: monotone radius with c = λ G(rmin); λ in (1, 2): turning
    // radius r_t = (2 - λ) rmin.
    let sweep = |lambda: f64| -> (f64, f64) {
        if lambda <= 1.0 {
            pieces(lambda * g(rmin), rmin, rmax)
        } else {
            let rt = (2.0 - lambda) * rmin;
            let c = g(rt);
            let (t1, d1) = pieces(c, rt, a);
            let (t2, d2) = pieces(c, rt, b);
            (t1 + t2, d1 + d2)
        }
    };
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sweep(mid).0 < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sweep(0.5 * (lo + hi)).1
}

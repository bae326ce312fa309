//! Quadrature on the unit disk.
//!
//! All disk integrals use the normalized area measure `dA = r dr dθ / π`, so
//! the disk has total mass one and `∫ g dA = ∫_0^1 2r (mean of g on |z| = r) dr`.
//!
//! Radial integrals are computed by globally adaptive Gauss-Legendre panels
//! (order 16). The error of a panel is the difference between the rule on the
//! panel and the rule on its two halves. With [`BoundaryMap::LogLayer`] the
//! integration runs in `t = -log(1 - r)`, which spreads the boundary layer of
//! `ω(r)² = e^{-2A(1-r)^{-α}}` over an O(1) range of `t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Default upper radius for "whole disk" radial integrals.
pub const R_CUT_DEFAULT: f64 = 1.0 - 1e-15;

const GL_ORDER: usize = 16;

/// Nodes and weights of the 16-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_16() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule::<GL_ORDER>())
}

fn gauss_legendre_rule<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    let n = N as f64;
    for i in 0..N.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_N.
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[N - 1 - i] = x;
        weights[i] = w;
        weights[N - 1 - i] = w;
    }
    (nodes, weights)
}

/// Values that can be integrated: scalars, complex numbers and vectors.
pub trait QuadValue: Clone + Send + Sync {
    fn scaled(&self, w: f64) -> Self;
    fn accumulate(&mut self, other: &Self, w: f64);
    /// Size used for error control.
    fn magnitude(&self) -> f64;
    fn distance(&self, other: &Self) -> f64;
}

impl QuadValue for f64 {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn accumulate(&mut self, other: &Self, w: f64) {
        *self += other * w;
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
}

impl QuadValue for Complex64 {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn accumulate(&mut self, other: &Self, w: f64) {
        *self += other * w;
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

/// Vector values, error-controlled in the `l1` norm.
impl QuadValue for Vec<f64> {
    fn scaled(&self, w: f64) -> Self {
        self.iter().map(|v| v * w).collect()
    }
    fn accumulate(&mut self, other: &Self, w: f64) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b * w;
        }
    }
    fn magnitude(&self) -> f64 {
        self.iter().map(|v| v.abs()).sum()
    }
    fn distance(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadResult<V = f64> {
    pub value: V,
    pub abs_err: f64,
    pub panels: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    pub initial_panels: usize,
}

impl QuadOptions {
    pub fn relative(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_panels: 4000,
            initial_panels: 4,
        }
    }
}

fn gl_panel<V: QuadValue, F: Fn(f64) -> V>(f: &F, a: f64, b: f64) -> V {
    let (nodes, weights) = gauss_legendre_16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = f(mid + half * nodes[0]).scaled(weights[0] * half);
    for k in 1..GL_ORDER {
        acc.accumulate(&f(mid + half * nodes[k]), weights[k] * half);
    }
    acc
}

struct Panel<V> {
    a: f64,
    b: f64,
    /// Rule applied to each half.
    left: V,
    right: V,
    err: f64,
}

impl<V: QuadValue> Panel<V> {
    fn new<F: Fn(f64) -> V>(f: &F, a: f64, b: f64, coarse: V) -> Self {
        let m = 0.5 * (a + b);
        let left = gl_panel(f, a, m);
        let right = gl_panel(f, m, b);
        let mut fine = left.clone();
        fine.accumulate(&right, 1.0);
        let err = fine.distance(&coarse);
        Self {
            a,
            b,
            left,
            right,
            err: if err.is_finite() { err } else { f64::INFINITY },
        }
    }

    fn fine(&self) -> V {
        let mut v = self.left.clone();
        v.accumulate(&self.right, 1.0);
        v
    }
}

struct HeapEntry(f64, usize);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Globally adaptive Gauss-Legendre integration of `f` over `[a, b]`.
pub fn adaptive<V, F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult<V>
where
    V: QuadValue,
    F: Fn(f64) -> V,
{
    let n0 = opts.initial_panels.max(1);
    let width = (b - a) / n0 as f64;
    let mut panels: Vec<Panel<V>> = (0..n0)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == n0 { b } else { lo + width };
            let coarse = gl_panel(&f, lo, hi);
            Panel::new(&f, lo, hi, coarse)
        })
        .collect();
    let mut heap: BinaryHeap<HeapEntry> = panels
        .iter()
        .enumerate()
        .map(|(i, p)| HeapEntry(p.err, i))
        .collect();
    let mut live = vec![true; panels.len()];
    let mut n_live = panels.len();
    let mut total = panels[0].fine().scaled(0.0);
    let mut err = 0.0;
    for p in &panels {
        total.accumulate(&p.fine(), 1.0);
        err += p.err;
    }

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        let mut converged = err <= target && err.is_finite();
        if converged || n_live >= opts.max_panels {
            // Re-sum from the live panels to drop the drift of the running totals.
            let mut value = total.scaled(0.0);
            let mut abs_err = 0.0;
            for (p, _) in panels.iter().zip(&live).filter(|(_, l)| **l) {
                value.accumulate(&p.fine(), 1.0);
                abs_err += p.err;
            }
            converged = abs_err <= opts.abs_tol.max(opts.rel_tol * value.magnitude()) && abs_err.is_finite();
            if converged || n_live >= opts.max_panels {
                return QuadResult {
                    value,
                    abs_err,
                    panels: n_live,
                    converged,
                };
            }
            total = value;
            err = abs_err;
        }
        let HeapEntry(_, idx) = loop {
            let e = heap.pop().expect("live panels are always in the heap");
            if live[e.1] {
                break e;
            }
        };
        live[idx] = false;
        total.accumulate(&panels[idx].fine(), -1.0);
        err -= panels[idx].err;
        let (pa, pb) = (panels[idx].a, panels[idx].b);
        let m = 0.5 * (pa + pb);
        let left = Panel::new(&f, pa, m, panels[idx].left.clone());
        let right = Panel::new(&f, m, pb, panels[idx].right.clone());
        for child in [left, right] {
            total.accumulate(&child.fine(), 1.0);
            err += child.err;
            heap.push(HeapEntry(child.err, panels.len()));
            panels.push(child);
            live.push(true);
        }
        n_live += 1;
        if !err.is_finite() {
            // An infinite panel error poisons the running sum; recount.
            err = panels.iter().zip(&live).filter(|(_, l)| **l).map(|(p, _)| p.err).sum();
        }
    }
}

/// Change of variables applied to radial integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryMap {
    /// Integrate in `t = -log(1 - r)`.
    LogLayer,
    None,
}

/// `∫_lo^hi f(r) dr` with the chosen boundary map.
pub fn radial_integral_on<V, F>(
    f: F,
    lo: f64,
    hi: f64,
    map: BoundaryMap,
    opts: &QuadOptions,
) -> QuadResult<V>
where
    V: QuadValue,
    F: Fn(f64) -> V,
{
    match map {
        BoundaryMap::None => adaptive(f, lo, hi, opts),
        BoundaryMap::LogLayer => {
            let t_lo = -(-lo).ln_1p();
            let t_hi = -(-hi).ln_1p();
            adaptive(
                |t: f64| {
                    let s = (-t).exp();
                    f(1.0 - s).scaled(s)
                },
                t_lo,
                t_hi,
                opts,
            )
        }
    }
}

/// `∫_0^{R_CUT_DEFAULT} f(r) dr` to relative tolerance `tol`.
pub fn radial_integral<F>(f: F, tol: f64, map: BoundaryMap) -> QuadResult
where
    F: Fn(f64) -> f64,
{
    let mut opts = QuadOptions::relative(tol);
    if map == BoundaryMap::LogLayer {
        // Spread the initial panels over the t-range [0, ~35].
        opts.initial_panels = 16;
    }
    radial_integral_on(f, 0.0, R_CUT_DEFAULT, map, &opts)
}

/// Mean of `g` over the circle `|z| = r` by the trapezoid rule, doubling the
/// number of nodes from `n` until two successive means agree to `tol`
/// (relative) or `max_n` nodes are used. Returns the mean and whether it
/// converged.
pub fn circle_mean<V, G>(g: &G, r: f64, n: usize, max_n: usize, tol: f64) -> (V, bool)
where
    V: QuadValue,
    G: Fn(Complex64) -> V,
{
    let n = n.max(1);
    let node = |k: usize, m: usize| g(Complex64::from_polar(r, 2.0 * PI * k as f64 / m as f64));
    let mut sum = node(0, n);
    for k in 1..n {
        sum.accumulate(&node(k, n), 1.0);
    }
    let mut m = n;
    let mut mean = sum.scaled(1.0 / m as f64);
    if r == 0.0 {
        return (mean, true);
    }
    while m < max_n {
        // Nested refinement: only the odd nodes of the doubled rule are new.
        for k in 0..m {
            sum.accumulate(&node(2 * k + 1, 2 * m), 1.0);
        }
        m *= 2;
        let next = sum.scaled(1.0 / m as f64);
        let change = next.distance(&mean);
        mean = next;
        if change <= tol * mean.magnitude() || mean.magnitude() == 0.0 && change == 0.0 {
            return (mean, true);
        }
    }
    (mean, false)
}

/// `∫_D g dA` in the normalized area measure: tensor polar rule with the
/// trapezoid rule in angle (starting from `angular_n` nodes, doubled to
/// convergence) and the log-layer radial rule.
pub fn disk_integral<V, G>(g: G, tol: f64, angular_n: usize) -> QuadResult<V>
where
    V: QuadValue,
    G: Fn(Complex64) -> V,
{
    disk_integral_annulus(g, 0.0, R_CUT_DEFAULT, tol, angular_n)
}

/// Same as [`disk_integral`] restricted to the annulus `lo <= |z| <= hi`.
pub fn disk_integral_annulus<V, G>(g: G, lo: f64, hi: f64, tol: f64, angular_n: usize) -> QuadResult<V>
where
    V: QuadValue,
    G: Fn(Complex64) -> V,
{
    let angular_ok = std::cell::Cell::new(true);
    let max_n = angular_n.max(1) * 64;
    let mean = |r: f64| {
        let (m, ok) = circle_mean(&g, r, angular_n, max_n, 0.1 * tol);
        if !ok {
            angular_ok.set(false);
        }
        m.scaled(2.0 * r)
    };
    let mut opts = QuadOptions::relative(tol);
    opts.initial_panels = 8;
    let mut res = radial_integral_on(mean, lo, hi, BoundaryMap::LogLayer, &opts);
    res.converged &= angular_ok.get();
    res
}

/// `∫_lo^hi 2r c(r) dr` where `c(r)` is an already computed circle mean.
pub fn disk_integral_radial<V, C>(circle: C, lo: f64, hi: f64, opts: &QuadOptions) -> QuadResult<V>
where
    V: QuadValue,
    C: Fn(f64) -> V,
{
    radial_integral_on(|r| circle(r).scaled(2.0 * r), lo, hi, BoundaryMap::LogLayer, opts)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 8192;

/// Uniform sample of the disk under the normalized area measure.
pub fn sample_disk<R: Rng>(rng: &mut R) -> Complex64 {
    let r = rng.gen::<f64>().sqrt();
    let theta = 2.0 * PI * rng.gen::<f64>();
    Complex64::from_polar(r, theta)
}

/// Monte Carlo estimate of `∫_D f dA`. Samples are drawn in fixed chunks,
/// each from its own ChaCha stream keyed by `(seed, chunk index)`, and the
/// chunk sums are reduced in index order, so the result does not depend on
/// the thread count.
pub fn mc_disk<F>(seed: u64, n: usize, integrand: F) -> McEstimate
where
    F: Fn(Complex64) -> f64 + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(n - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = integrand(sample_disk(&mut rng));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 {
        ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_err: (var / nf).sqrt(),
        samples: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_16();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 30 is integrated exactly by a 16-point rule
        let s: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn linear_radial_integrand() {
        for map in [BoundaryMap::None, BoundaryMap::LogLayer] {
            let res = radial_integral(|r| 2.0 * r, 1e-12, map);
            assert!(res.converged);
            assert!((res.value - 1.0).abs() < 1e-12, "{map:?}: {}", res.value);
        }
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let res = radial_integral(|r| 2.0 * r / (1.0 - r).sqrt(), 1e-10, BoundaryMap::LogLayer);
        assert!(res.converged);
        // ∫_0^c 2r (1-r)^{-1/2} dr = 8/3 - 4 s^{1/2} + (4/3) s^{3/2}, s = 1 - c
        let s = 1.0 - R_CUT_DEFAULT;
        let exact = 8.0 / 3.0 - 4.0 * s.sqrt() + 4.0 / 3.0 * s.powf(1.5);
        assert!((res.value - exact).abs() < 1e-9 * exact, "{} vs {exact}", res.value);
    }

    #[test]
    fn converged_results_respect_tolerance() {
        let opts = QuadOptions::relative(1e-9);
        let res: QuadResult = adaptive(|x: f64| (10.0 * x).sin().exp(), 0.0, 3.0, &opts);
        assert!(res.converged);
        assert!(res.abs_err <= 1e-9 * res.value.abs());
    }

    #[test]
    fn panel_budget_exhaustion_is_reported() {
        let opts = QuadOptions {
            max_panels: 3,
            initial_panels: 1,
            ..QuadOptions::relative(1e-14)
        };
        let res: QuadResult = adaptive(|x: f64| (1.0 / (x + 1e-3)).sin(), 0.0, 1.0, &opts);
        assert!(!res.converged);
        assert!(res.value.is_finite());
    }

    #[test]
    fn disk_integrals_in_normalized_measure() {
        let one: QuadResult = disk_integral(|_| 1.0, 1e-12, 8);
        assert!((one.value - 1.0).abs() < 1e-12);
        let re: QuadResult = disk_integral(|z: Complex64| z.re, 1e-12, 8);
        assert!(re.value.abs() < 1e-14);
        let r2: QuadResult = disk_integral(|z: Complex64| z.norm_sqr(), 1e-12, 8);
        assert!((r2.value - 0.5).abs() < 1e-12);
        let c: QuadResult<Complex64> = disk_integral(|z: Complex64| z * z.conj() * Complex64::i(), 1e-12, 8);
        assert!((c.value - Complex64::new(0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn vector_valued_integration() {
        let opts = QuadOptions::relative(1e-12);
        let res: QuadResult<Vec<f64>> = adaptive(|x: f64| vec![1.0, x, x * x], 0.0, 1.0, &opts);
        let expect = [1.0, 0.5, 1.0 / 3.0];
        for (v, e) in res.value.iter().zip(expect) {
            assert!((v - e).abs() < 1e-13);
        }
    }

    #[test]
    fn monte_carlo_reference_values() {
        let one = mc_disk(7, 20_000, |_| 1.0);
        assert_eq!(one.mean, 1.0);
        assert_eq!(one.std_err, 0.0);

        let inner = mc_disk(11, 200_000, |z| if z.norm() < 0.5 { 1.0 } else { 0.0 });
        assert!((inner.mean - 0.25).abs() < 3.0 * inner.std_err);

        let r2 = mc_disk(13, 200_000, |z| z.norm_sqr());
        assert!((r2.mean - 0.5).abs() < 3.0 * r2.std_err);
    }

    #[test]
    fn monte_carlo_is_reproducible_across_thread_counts() {
        let f = |z: Complex64| (3.0 * z.re).sin() + z.im * z.im;
        let a = mc_disk(42, 50_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_disk(42, 50_000, f));
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }
}

//! The conformal metric `|dz| / τ(|z|)`, its geodesic distance `d_τ`, the
//! bounded distance `ρ_τ = 1 - e^{-d_τ}` and the kernel-angle (Skwarczyński)
//! distance.
//!
//! Geodesics are found in two stages. A shortest path on a polar graph
//! gives a global seed; local descent on the polyline vertices then removes
//! the metrication bias of the stencil.
//!
//! Two facts about rotationally symmetric metrics keep the graph small. A
//! minimizing path never leaves the disk `|ξ| <= max(|z|, |w|)`, because
//! `r / τ(r)` increases with `r` and radial projection onto that circle does
//! not increase length. Its argument is monotone, so after rotating `z` onto
//! the positive axis and reflecting, the path stays in the sector between the
//! two endpoint directions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{self, KernelError, MomentTable};
use crate::quad::gauss_legendre_16;
use crate::weights::WeightSpec;

/// Locality threshold `R` for `d_τ(z, w) < R`.
pub const R_LOCAL_DEFAULT: f64 = 0.5;
/// Empirical constant of the lower bound `d_τ >= C₁ |z - w| / min τ` for the
/// canonical `τ` (see [`setinclus_check`]).
pub const SETINCLUS_C1: f64 = 0.25;
pub const GRID_RESOLUTION_DEFAULT: usize = 256;
pub const REFINE_TOL_DEFAULT: f64 = 1e-5;
/// Stencil moves have coprime components up to this size (48 neighbors).
/// The largest angular gap between moves is 14°, so a straight path is
/// overestimated by at most `1/cos(7°) - 1 ≈ 0.8%`; the 16-neighbor stencil
/// (reach 2) allows 2.7%.
pub const STENCIL_REACH_DEFAULT: usize = 4;

/// Chords with cost below this are refined directly without a grid search.
const LOCAL_CHORD_COST: f64 = 0.05;
/// Below this cost the chord is accepted as the geodesic. The metric scale
/// varies by a relative `β d` across the chord, so the chord exceeds the
/// geodesic by a relative `O(d²)`, under `1e-8` here.
pub const SHORT_CHORD_COST: f64 = 1e-4;
/// Fewest angular steps across the sector.
const MIN_RAYS: usize = 32;
/// Smallest radius used when sizing radial steps near the origin.
const R_FLOOR: f64 = 0.2;
/// Radial steps are at most this fraction of the distance to the boundary.
const BOUNDARY_STEP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point {0} is not inside the unit disk")]
    Domain(Complex64),
    #[error("grid resolution {0} is too coarse (need at least 8)")]
    Resolution(usize),
    #[error("polyline descent failed: {0}")]
    Descent(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeodesicMethod {
    Grid,
    Refined,
    RadialClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicResult {
    pub distance: f64,
    pub path: Vec<Complex64>,
    pub method: GeodesicMethod,
    /// Estimated relative error; for grid results this bounds the upward bias.
    pub err: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    /// Angular grid steps per full turn.
    pub resolution: usize,
    /// Largest component of a stencil move; see [`STENCIL_REACH_DEFAULT`].
    pub stencil_reach: usize,
    /// Relative improvement at which polyline descent stops.
    pub tol: f64,
    /// Answer pairs on a common ray with the radial integral instead of the
    /// graph. Turning it off only changes pairs with an endpoint at 0, which
    /// are then searched on a sector of nominal width.
    pub radial_shortcut: bool,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            resolution: GRID_RESOLUTION_DEFAULT,
            stencil_reach: STENCIL_REACH_DEFAULT,
            tol: REFINE_TOL_DEFAULT,
            radial_shortcut: true,
        }
    }
}

fn check_point(z: Complex64) -> Result<(), MetricError> {
    if z.re.is_finite() && z.im.is_finite() && z.norm() < 1.0 {
        Ok(())
    } else {
        Err(MetricError::Domain(z))
    }
}

/// Metric length of the radial segment between radii `r1` and `r2`.
pub fn radial_cost(spec: &WeightSpec, r1: f64, r2: f64) -> f64 {
    (spec.radial_arclength(r1) - spec.radial_arclength(r2)).abs()
}

fn same_ray(a: Complex64, b: Complex64) -> bool {
    let cross = (a.conj() * b).im;
    let dot = (a.conj() * b).re;
    a == Complex64::new(0.0, 0.0)
        || b == Complex64::new(0.0, 0.0)
        || (cross.abs() <= 1e-15 * a.norm() * b.norm() && dot >= 0.0)
}

/// Metric length `∫ |dξ| / τ(|ξ|)` of the straight segment from `a` to `b`.
pub fn segment_cost(spec: &WeightSpec, a: Complex64, b: Complex64) -> f64 {
    if same_ray(a, b) {
        return radial_cost(spec, a.norm(), b.norm());
    }
    displaced_cost(spec, a, b - a)
}

/// Metric length of the segment from `a` to `a + delta`, with the
/// displacement given exactly. Use this when `delta` is far below the
/// rounding level of `a`.
pub fn displaced_cost(spec: &WeightSpec, a: Complex64, delta: Complex64) -> f64 {
    let len = delta.norm();
    if len == 0.0 {
        return 0.0;
    }
    let r_top = a.norm().max((a + delta).norm());
    // Panels shorter than a fifth of the distance to the boundary keep the
    // 16-point rule accurate for the (1 - r)^{-β} growth.
    let panels = ((len / (0.2 * (1.0 - r_top))).ceil() as usize).clamp(1, 256);
    let (x, wts) = gauss_legendre_16();
    let mut total = 0.0;
    for p in 0..panels {
        let t0 = p as f64 / panels as f64;
        let t1 = (p + 1) as f64 / panels as f64;
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t0 + t1);
        for (xi, wi) in x.iter().zip(wts) {
            let t = mid + half * xi;
            let r = (a + delta * t).norm();
            total += wi * half / spec.tau_unchecked(r);
        }
    }
    total * len
}

/// Metric length of a polyline.
pub fn path_cost(spec: &WeightSpec, path: &[Complex64]) -> f64 {
    path.windows(2).map(|s| segment_cost(spec, s[0], s[1])).sum()
}

/// Rotation and reflection taking `z` to the positive axis and `w` to the
/// upper half plane.
#[derive(Debug, Clone, Copy)]
struct Frame {
    base: Complex64,
    flip: bool,
}

impl Frame {
    fn new(z: Complex64, w: Complex64) -> (Self, f64, f64, f64) {
        let base = if z.norm() > 0.0 {
            z / z.norm()
        } else if w.norm() > 0.0 {
            w / w.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let phi = (w * base.conj()).arg();
        let flip = phi < 0.0;
        (Self { base, flip }, z.norm(), w.norm(), phi.abs())
    }

    fn to_world(self, p: Complex64) -> Complex64 {
        self.base * if self.flip { p.conj() } else { p }
    }
}

/// Lower and upper bounds on `d_τ(z, w)` from radial variation, annulus
/// separation, the straight chord and radial-arc-radial paths.
pub fn distance_bounds(spec: &WeightSpec, z: Complex64, w: Complex64) -> (f64, f64) {
    let (_, a, b, delta) = Frame::new(z, w);
    let ua = spec.radial_arclength(a);
    let ub = spec.radial_arclength(b);
    let g = |s: f64| s / spec.tau_unchecked(s);
    let rmin = a.min(b);

    // A path either dips below radius s, costing at least u(a) + u(b) - 2u(s),
    // or stays outside it and pays at least Δ s / τ(s) in angular motion.
    let mut lo = 0.0;
    let mut hi = rmin;
    for _ in 0..100 {
        let s = 0.5 * (lo + hi);
        if ua + ub - 2.0 * spec.radial_arclength(s) > delta * g(s) {
            lo = s;
        } else {
            hi = s;
        }
    }
    let s = 0.5 * (lo + hi);
    let annulus = (ua + ub - 2.0 * spec.radial_arclength(s)).min(delta * g(s));
    let lower = (ua - ub).abs().max(annulus);

    // Radial to radius s, arc, radial back: minimized by golden section.
    let rar = |s: f64| ua + ub - 2.0 * spec.radial_arclength(s) + delta * g(s);
    let (mut x0, mut x1) = (0.0, rmin);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = x1 - phi * (x1 - x0);
        let m2 = x0 + phi * (x1 - x0);
        if rar(m1) < rar(m2) {
            x1 = m2;
        } else {
            x0 = m1;
        }
    }
    let upper = segment_cost(spec, z, w).min(rar(0.5 * (x0 + x1))).min(rar(0.0)).min(rar(rmin));
    (lower, upper.max(lower))
}

/// Polar graph on the sector `0 <= θ <= Δ`.
struct SectorGrid {
    rings: Vec<f64>,
    h: f64,
    rays: usize,
    center: bool,
    moves: Vec<(usize, usize)>,
    /// `costs[i * moves.len() + m]`: cost of move `m` starting on ring `i`
    /// (the lower ring of the move). By rotational symmetry it does not
    /// depend on the ray.
    costs: Vec<f64>,
}

/// Worst-case relative overestimate of a straight path by the stencil: half
/// the largest angle between adjacent move directions.
fn stencil_bias(reach: usize) -> f64 {
    let mut angles: Vec<f64> = stencil_moves(reach)
        .iter()
        .map(|&(di, dj)| (dj as f64).atan2(di as f64))
        .collect();
    angles.sort_by(f64::total_cmp);
    let gap = angles.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    1.0 / (0.5 * gap).cos() - 1.0
}

/// Stencil moves `(ring step, ray step)` with coprime components up to
/// `reach`, one representative per pair of opposite directions in ring step.
/// `reach = 2` gives the 16-neighbor stencil, `reach = 4` the 48-neighbor one.
fn stencil_moves(reach: usize) -> Vec<(usize, usize)> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let mut moves = vec![(0, 1)];
    for di in 1..=reach {
        for dj in 0..=reach {
            if gcd(di, dj) == 1 {
                moves.push((di, dj));
            }
        }
    }
    moves
}

impl SectorGrid {
    fn build(spec: &WeightSpec, r_lo: f64, a: f64, b: f64, delta: f64, opts: &GeodesicOptions) -> Self {
        let resolution = opts.resolution;
        let h_max = 2.0 * PI / resolution as f64;
        let rays = ((delta / h_max).ceil() as usize).max(MIN_RAYS);
        let h = delta / rays as f64;
        let r_hi = a.max(b);
        let step = |r: f64| (r.max(R_FLOOR) * h).min(BOUNDARY_STEP * (1.0 - r));

        let center = r_lo <= 0.0;
        let mut rings = Vec::new();
        let mut r = if center { step(0.0) } else { r_lo };
        while r < r_hi {
            rings.push(r);
            r += step(r);
        }
        rings.push(r_hi);
        for e in [a, b] {
            if e == 0.0 {
                continue;
            }
            let idx = rings.partition_point(|&x| x < e);
            let near = [idx.checked_sub(1), Some(idx).filter(|&i| i < rings.len())];
            let closest = near
                .into_iter()
                .flatten()
                .min_by(|&i, &j| (rings[i] - e).abs().total_cmp(&(rings[j] - e).abs()));
            match closest {
                Some(i) if (rings[i] - e).abs() <= 0.5 * step(e) && rings[i] != r_hi => rings[i] = e,
                Some(i) if rings[i] == e => {}
                _ => rings.insert(idx, e),
            }
        }
        rings.sort_by(f64::total_cmp);
        rings.dedup();

        let moves = stencil_moves(opts.stencil_reach);
        let mut costs = vec![f64::INFINITY; rings.len() * moves.len()];
        for i in 0..rings.len() {
            for (m, &(di, dj)) in moves.iter().enumerate() {
                if i + di < rings.len() {
                    let p = Complex64::new(rings[i], 0.0);
                    let q = Complex64::from_polar(rings[i + di], dj as f64 * h);
                    costs[i * moves.len() + m] = segment_cost(spec, p, q);
                }
            }
        }
        Self {
            rings,
            h,
            rays,
            center,
            moves,
            costs,
        }
    }

    fn width(&self) -> usize {
        self.rays + 1
    }

    fn node_count(&self) -> usize {
        self.rings.len() * self.width() + usize::from(self.center)
    }

    fn center_node(&self) -> usize {
        self.rings.len() * self.width()
    }

    fn point(&self, node: usize) -> Complex64 {
        if self.center && node == self.center_node() {
            return Complex64::new(0.0, 0.0);
        }
        let (i, j) = (node / self.width(), node % self.width());
        Complex64::from_polar(self.rings[i], j as f64 * self.h)
    }

    fn neighbors(&self, spec: &WeightSpec, node: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let wdt = self.width();
        if self.center && node == self.center_node() {
            let c = radial_cost(spec, 0.0, self.rings[0]);
            out.extend((0..wdt).map(|j| (j, c)));
            return;
        }
        let (i, j) = (node / wdt, node % wdt);
        if self.center && i == 0 {
            out.push((self.center_node(), radial_cost(spec, 0.0, self.rings[0])));
        }
        let n_rings = self.rings.len() as isize;
        let rays = self.rays as isize;
        let nm = self.moves.len();
        for (m, &(di, dj)) in self.moves.iter().enumerate() {
            for si in [-1isize, 1] {
                if di == 0 && si < 0 {
                    continue;
                }
                for sj in [-1isize, 1] {
                    if dj == 0 && sj < 0 {
                        continue;
                    }
                    let ni = i as isize + si * di as isize;
                    let nj = j as isize + sj * dj as isize;
                    if ni < 0 || ni >= n_rings || nj < 0 || nj > rays {
                        continue;
                    }
                    let lower = (i as isize).min(ni) as usize;
                    out.push((ni as usize * wdt + nj as usize, self.costs[lower * nm + m]));
                }
            }
        }
    }
}

struct Entry(f64, usize);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0)
    }
}

/// Shortest path on the polar graph between `z` and `w`.
pub fn d_tau_grid(spec: &WeightSpec, z: Complex64, w: Complex64, resolution: usize) -> Result<GeodesicResult, MetricError> {
    let opts = GeodesicOptions {
        resolution,
        ..GeodesicOptions::default()
    };
    d_tau_grid_with(spec, z, w, &opts)
}

pub fn d_tau_grid_with(spec: &WeightSpec, z: Complex64, w: Complex64, opts: &GeodesicOptions) -> Result<GeodesicResult, MetricError> {
    check_point(z)?;
    check_point(w)?;
    let resolution = opts.resolution;
    if resolution < 8 || opts.stencil_reach < 1 {
        return Err(MetricError::Resolution(resolution));
    }
    if z == w {
        return Ok(GeodesicResult {
            distance: 0.0,
            path: vec![z],
            method: GeodesicMethod::Grid,
            err: 0.0,
        });
    }
    let through_center = z.norm() == 0.0 || w.norm() == 0.0;
    if same_ray(z, w) && (opts.radial_shortcut || !through_center) {
        return Ok(GeodesicResult {
            distance: radial_cost(spec, z.norm(), w.norm()),
            path: vec![z, w],
            method: GeodesicMethod::RadialClosedForm,
            err: 0.0,
        });
    }
    let (mut frame, a, b, mut delta) = Frame::new(z, w);
    if delta == 0.0 {
        // The center node reaches every ray, so any width will do.
        delta = MIN_RAYS as f64 * 2.0 * PI / resolution as f64;
        if a == 0.0 {
            frame.base *= Complex64::from_polar(1.0, -delta);
        }
    }
    let (_, upper) = distance_bounds(spec, z, w);
    // Deepest radius a path cheaper than the upper bound can reach.
    let ua = spec.radial_arclength(a);
    let ub = spec.radial_arclength(b);
    let u_lo = 0.5 * (ua + ub - upper);
    let r_lo = if u_lo <= 0.0 {
        0.0
    } else {
        // small margin so the bounding ring is not itself binding
        spec.radius_at_arclength(u_lo).min(a.min(b)) * (1.0 - 1e-3)
    };
    let grid = SectorGrid::build(spec, r_lo, a, b, delta, opts);
    let wdt = grid.width();
    let find = |r: f64, ray: usize| -> usize {
        if r == 0.0 {
            return grid.center_node();
        }
        let i = grid.rings.iter().position(|&x| x == r).expect("endpoint radius is a ring");
        i * wdt + ray
    };
    let source = find(a, 0);
    let target = find(b, grid.rays);

    let n = grid.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    let mut nbrs = Vec::with_capacity(20);
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == target {
            break;
        }
        grid.neighbors(spec, u, &mut nbrs);
        for &(v, c) in &nbrs {
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u;
                heap.push(Entry(nd, v));
            }
        }
    }
    if !dist[target].is_finite() {
        return Err(MetricError::Resolution(resolution));
    }
    let mut nodes = vec![target];
    while let Some(&last) = nodes.last() {
        if last == source {
            break;
        }
        nodes.push(pred[last]);
    }
    nodes.reverse();
    let mut path: Vec<Complex64> = nodes.iter().map(|&v| frame.to_world(grid.point(v))).collect();
    // Pin the endpoints exactly.
    path[0] = z;
    *path.last_mut().unwrap() = w;
    Ok(GeodesicResult {
        distance: path_cost(spec, &path),
        path,
        method: GeodesicMethod::Grid,
        err: stencil_bias(opts.stencil_reach),
    })
}

/// Points at equal metric arclength along a polyline.
fn resample(spec: &WeightSpec, path: &[Complex64], count: usize) -> Vec<Complex64> {
    let seg: Vec<f64> = path.windows(2).map(|s| segment_cost(spec, s[0], s[1])).collect();
    let total: f64 = seg.iter().sum();
    let mut out = Vec::with_capacity(count + 1);
    out.push(path[0]);
    let mut acc = 0.0;
    let mut k = 0;
    for i in 1..count {
        let target = total * i as f64 / count as f64;
        while k < seg.len() - 1 && acc + seg[k] < target {
            acc += seg[k];
            k += 1;
        }
        let t = if seg[k] > 0.0 { ((target - acc) / seg[k]).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[k] + (path[k + 1] - path[k]) * t);
    }
    out.push(*path.last().unwrap());
    out
}

/// One descent step for vertex `i`: numerical gradient of the two adjacent
/// segment costs, then golden-section search along the negative gradient.
/// Returns the decrease achieved.
fn relax_vertex(spec: &WeightSpec, v: &mut [Complex64], i: usize) -> f64 {
    let (prev, next) = (v[i - 1], v[i + 1]);
    let local = |p: Complex64| -> f64 {
        if p.norm() >= 1.0 {
            return f64::INFINITY;
        }
        segment_cost(spec, prev, p) + segment_cost(spec, p, next)
    };
    let p0 = v[i];
    let f0 = local(p0);
    let scale = (prev - p0).norm().min((next - p0).norm());
    if scale == 0.0 {
        return 0.0;
    }
    let eps = 1e-4 * scale;
    let gx = (local(p0 + eps) - local(p0 - eps)) / (2.0 * eps);
    let gy = (local(p0 + Complex64::new(0.0, eps)) - local(p0 - Complex64::new(0.0, eps))) / (2.0 * eps);
    let g = Complex64::new(gx, gy);
    if !(g.norm() > 0.0) || !g.norm().is_finite() {
        return 0.0;
    }
    let dir = -g / g.norm();
    let f = |t: f64| local(p0 + dir * t);
    let (mut lo, mut hi) = (0.0, 0.5 * scale);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut m1 = hi - phi * (hi - lo);
    let mut m2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(m1), f(m2));
    for _ in 0..40 {
        if f1 < f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - phi * (hi - lo);
            f1 = f(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + phi * (hi - lo);
            f2 = f(m2);
        }
        if hi - lo < 1e-9 * scale {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let ft = f(t);
    if ft < f0 {
        v[i] = p0 + dir * t;
        f0 - ft
    } else {
        0.0
    }
}

/// Sweeps of vertex relaxation until the relative decrease of a sweep falls
/// below `tol`.
fn descend(spec: &WeightSpec, v: &mut [Complex64], tol: f64, max_sweeps: usize) -> f64 {
    let mut cost = path_cost(spec, v);
    for _ in 0..max_sweeps {
        let mut gain = 0.0;
        for i in 1..v.len() - 1 {
            gain += relax_vertex(spec, v, i);
        }
        let new_cost = path_cost(spec, v);
        let rel = (cost - new_cost) / cost;
        cost = new_cost;
        if gain <= 0.0 || rel < tol {
            break;
        }
    }
    cost
}

fn double_vertices(v: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(2 * v.len());
    for s in v.windows(2) {
        out.push(s[0]);
        out.push(0.5 * (s[0] + s[1]));
    }
    out.push(*v.last().unwrap());
    out
}

/// Local descent on the polyline of `seed`, with vertex doubling, until the
/// relative improvement drops below `tol`. Never returns a longer path than
/// the seed.
pub fn d_tau_refine(spec: &WeightSpec, seed: &GeodesicResult, tol: f64) -> Result<GeodesicResult, MetricError> {
    let path = &seed.path;
    if path.len() < 2 || seed.distance == 0.0 || seed.method == GeodesicMethod::RadialClosedForm {
        return Ok(GeodesicResult {
            method: if seed.method == GeodesicMethod::Grid {
                GeodesicMethod::Refined
            } else {
                seed.method
            },
            ..seed.clone()
        });
    }
    let seed_cost = path_cost(spec, path);
    let mut v = if path.len() == 2 {
        let (a, b) = (path[0], path[1]);
        (0..=8).map(|i| a + (b - a) * (i as f64 / 8.0)).collect()
    } else {
        resample(spec, path, 16)
    };
    let mut cost = descend(spec, &mut v, 0.1 * tol, 500);
    let mut last_gain = f64::INFINITY;
    while v.len() < 513 {
        let mut doubled = double_vertices(&v);
        let new_cost = descend(spec, &mut doubled, 0.1 * tol, 500);
        last_gain = (cost - new_cost) / cost;
        v = doubled;
        cost = new_cost;
        if last_gain < tol {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(MetricError::Descent(format!("non-finite cost from seed {seed_cost}")));
    }
    if cost > seed_cost {
        // Resampling can only lose to the seed by the discretization of the
        // coarse start; fall back to relaxing the seed's own vertices.
        let mut v2 = path.clone();
        let c2 = descend(spec, &mut v2, 0.1 * tol, 500);
        if c2 <= seed_cost {
            v = v2;
            cost = c2;
        } else {
            v = path.clone();
            cost = seed_cost;
        }
    }
    Ok(GeodesicResult {
        distance: cost,
        path: v,
        method: GeodesicMethod::Refined,
        err: last_gain.abs().max(tol),
    })
}

/// Best available `d_τ`: closed form on a ray, refined chord for close
/// pairs, otherwise grid search followed by refinement.
pub fn d_tau(spec: &WeightSpec, z: Complex64, w: Complex64) -> Result<GeodesicResult, MetricError> {
    d_tau_with(spec, z, w, &GeodesicOptions::default())
}

pub fn d_tau_with(spec: &WeightSpec, z: Complex64, w: Complex64, opts: &GeodesicOptions) -> Result<GeodesicResult, MetricError> {
    check_point(z)?;
    check_point(w)?;
    if z == w || same_ray(z, w) {
        return d_tau_grid_with(spec, z, w, opts);
    }
    let chord = segment_cost(spec, z, w);
    if chord < SHORT_CHORD_COST {
        return Ok(GeodesicResult {
            distance: chord,
            path: vec![z, w],
            method: GeodesicMethod::Refined,
            err: chord * chord,
        });
    }
    let seed = if chord < LOCAL_CHORD_COST {
        GeodesicResult {
            distance: chord,
            path: vec![z, w],
            method: GeodesicMethod::Grid,
            err: 0.0,
        }
    } else {
        d_tau_grid_with(spec, z, w, opts)?
    };
    d_tau_refine(spec, &seed, opts.tol)
}

/// `ρ_τ = 1 - e^{-d_τ}`. When the cheap distance bounds already fix `ρ_τ`
/// to within `1e-10`, no geodesic is computed.
pub fn rho_tau(spec: &WeightSpec, z: Complex64, w: Complex64) -> Result<f64, MetricError> {
    rho_tau_with(spec, z, w, &GeodesicOptions::default())
}

pub fn rho_tau_with(spec: &WeightSpec, z: Complex64, w: Complex64, opts: &GeodesicOptions) -> Result<f64, MetricError> {
    check_point(z)?;
    check_point(w)?;
    if z == w {
        return Ok(0.0);
    }
    let (lo, hi) = distance_bounds(spec, z, w);
    if (-lo).exp() - (-hi).exp() <= 1e-10 {
        return Ok(-(-hi).exp_m1());
    }
    Ok(-(-d_tau_with(spec, z, w, opts)?.distance).exp_m1())
}

/// `ρ_τ(a, a + delta)` with the displacement given exactly, so that points
/// closer than the rounding level of `a` still get an accurate distance.
pub fn rho_tau_displaced(spec: &WeightSpec, a: Complex64, delta: Complex64, opts: &GeodesicOptions) -> Result<f64, MetricError> {
    check_point(a)?;
    check_point(a + delta)?;
    let chord = displaced_cost(spec, a, delta);
    if chord < SHORT_CHORD_COST {
        return Ok(-(-chord).exp_m1());
    }
    rho_tau_with(spec, a, a + delta, opts)
}

/// Cheap bracket `(lower, upper)` of `ρ_τ(a, a + delta)`.
pub fn rho_bounds_displaced(spec: &WeightSpec, a: Complex64, delta: Complex64) -> (f64, f64) {
    let chord = displaced_cost(spec, a, delta);
    if chord < SHORT_CHORD_COST {
        let rho = -(-chord).exp_m1();
        return (rho, rho);
    }
    let (lo, hi) = distance_bounds(spec, a, a + delta);
    (-(-lo).exp_m1(), -(-hi).exp_m1())
}

/// `𝒮(z, w) = sqrt(1 - |K(z, w)| / (‖K_z‖ ‖K_w‖))`.
///
/// Rounding can push the radicand slightly below zero; it is clamped, and a
/// violation beyond `1e-8` is flagged in the result.
pub fn skwarczynski(table: &MomentTable, z: Complex64, w: Complex64) -> Result<Skwarczynski, MetricError> {
    check_point(z)?;
    check_point(w)?;
    if z == w {
        return Ok(Skwarczynski {
            value: 0.0,
            radicand_violation: None,
        });
    }
    let k = kernel::kernel_sum(table, z, w, 1e-14)?;
    let nz = kernel::log_kernel_diag(table, z, 1e-15)?;
    let nw = kernel::log_kernel_diag(table, w, 1e-15)?;
    let log_ratio = k.value.log_abs - 0.5 * (nz + nw);
    let radicand = -log_ratio.exp_m1();
    let violation = (radicand < -1e-8).then_some(-radicand);
    Ok(Skwarczynski {
        value: radicand.max(0.0).sqrt(),
        radicand_violation: violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Skwarczynski {
    pub value: f64,
    /// Size of a negative radicand beyond `1e-8`, if one occurred.
    pub radicand_violation: Option<f64>,
}

/// `‖K_z - K_w‖² / (‖K_z‖² + ‖K_w‖²)`.
pub fn kernel_difference_ratio(table: &MomentTable, z: Complex64, w: Complex64) -> Result<f64, MetricError> {
    let d = kernel::log_kernel_diff_norm_sq(table, z, w, 1e-12)?;
    let nz = kernel::log_kernel_diag(table, z, 1e-14)?;
    let nw = kernel::log_kernel_diag(table, w, 1e-14)?;
    let m = nz.max(nw);
    let denom = m + ((nz - m).exp() + (nw - m).exp()).ln();
    Ok((d - denom).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl RatioStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            count: n,
            min: v[0],
            max: v[n - 1],
            median,
        })
    }

    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    /// Statistics of `𝒮 / ρ_τ`.
    pub stats: RatioStats,
    /// The same with `ρ_τ` recomputed at twice the grid resolution.
    pub refined: RatioStats,
    /// Relative change of the median under the refinement step.
    pub median_shift: f64,
    /// Pairs with `z = w`, left out as `0/0`.
    pub excluded: usize,
    pub ratios: Vec<f64>,
    /// Largest Cauchy-Schwarz violation of the kernel-angle radicand.
    pub max_radicand_violation: Option<f64>,
}

/// Distribution of `𝒮 / ρ_τ` over `pairs`, and its stability when the
/// geodesic grid resolution is doubled.
pub fn comparability_report(
    spec: &WeightSpec,
    table: &MomentTable,
    pairs: &[(Complex64, Complex64)],
    opts: &GeodesicOptions,
) -> Result<ComparabilityReport, MetricError> {
    let kept: Vec<_> = pairs.iter().copied().filter(|(z, w)| z != w).collect();
    let fine = GeodesicOptions {
        resolution: 2 * opts.resolution,
        ..*opts
    };
    let rows: Vec<(f64, f64, Option<f64>)> = kept
        .par_iter()
        .map(|&(z, w)| {
            let s = skwarczynski(table, z, w)?;
            let r1 = rho_tau_with(spec, z, w, opts)?;
            let r2 = rho_tau_with(spec, z, w, &fine)?;
            Ok((s.value / r1, s.value / r2, s.radicand_violation))
        })
        .collect::<Result<_, MetricError>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let refined_ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let stats = RatioStats::from_values(&ratios).ok_or(MetricError::Descent("no admissible pairs".into()))?;
    let refined = RatioStats::from_values(&refined_ratios).unwrap();
    Ok(ComparabilityReport {
        median_shift: (refined.median - stats.median).abs() / stats.median,
        stats,
        refined,
        excluded: pairs.len() - kept.len(),
        ratios,
        max_radicand_violation: rows.iter().filter_map(|r| r.2).reduce(f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Holds,
    Fails,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct SetInclusion {
    pub status: CheckStatus,
    pub distance: f64,
    /// `C₁ |z - w| / min(τ(z), τ(w))`.
    pub lower_bound: f64,
    /// `distance - lower_bound`.
    pub margin: f64,
}

/// Checks `d_τ(z, w) >= C₁ |z - w| / min(τ(z), τ(w))` for pairs with
/// `d_τ(z, w) < r_local`; other pairs are skipped. `C₁` is a property of the
/// canonical `τ`, not a universal constant.
pub fn setinclus_check(spec: &WeightSpec, z: Complex64, w: Complex64, r_local: f64, c1: f64) -> Result<SetInclusion, MetricError> {
    let d = d_tau(spec, z, w)?.distance;
    let tmin = spec.tau(z.norm()).map_err(KernelError::from)?.min(spec.tau(w.norm()).map_err(KernelError::from)?);
    let lower = c1 * (z - w).norm() / tmin;
    let status = if d >= r_local {
        CheckStatus::Skipped
    } else if d >= lower * (1.0 - 1e-12) {
        CheckStatus::Holds
    } else {
        CheckStatus::Fails
    };
    Ok(SetInclusion {
        status,
        distance: d,
        lower_bound: lower,
        margin: d - lower,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Fitted slope of `log(‖K_z‖ ‖K_w‖ / |K(z, w)|)` against `d_τ(z, w)`.
    pub sigma: f64,
    pub intercept: f64,
    pub samples: usize,
    /// Pairs dropped because `|K(z, w)|` was below the rounding floor.
    pub unresolved: usize,
}

/// Empirical decay rate of the normalized kernel in `d_τ` (least squares).
pub fn kernel_decay_fit(
    spec: &WeightSpec,
    table: &MomentTable,
    pairs: &[(Complex64, Complex64)],
) -> Result<DecayFit, MetricError> {
    let rows: Vec<Option<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(z, w)| {
            if z == w {
                return Ok(None);
            }
            let k = kernel::kernel_sum(table, z, w, 1e-12)?;
            if k.rounding() > 1e-6 {
                return Ok(None);
            }
            let y = 0.5 * (kernel::log_kernel_diag(table, z, 1e-14)? + kernel::log_kernel_diag(table, w, 1e-14)?)
                - k.value.log_abs;
            Ok(Some((d_tau(spec, z, w)?.distance, y)))
        })
        .collect::<Result<_, MetricError>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().flatten().copied().collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sigma = sxy / sxx;
    Ok(DecayFit {
        sigma,
        intercept: my - sigma * mx,
        samples: pts.len(),
        unresolved: pairs.iter().filter(|(z, w)| z != w).count() - pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn radial_closed_form() {
        let spec = WeightSpec::standard();
        let g = d_tau_grid(&spec, c(0.0, 0.0), c(0.75, 0.0), 64).unwrap();
        assert!((g.distance - 2.0).abs() < 1e-12);
        let g = d_tau_grid(&spec, c(0.0, 0.3), c(0.0, 0.6), 64).unwrap();
        assert_eq!(g.method, GeodesicMethod::RadialClosedForm);
    }

    #[test]
    fn chord_cost_of_radial_segment() {
        let spec = WeightSpec::standard();
        // off-ray chord that is nearly radial agrees with the closed form
        let a = c(0.1, 1e-9);
        let b = c(0.7, 0.0);
        let d = segment_cost(&spec, a, b);
        assert!((d - radial_cost(&spec, 0.1, 0.7)).abs() < 1e-9);
    }

    #[test]
    fn bounds_bracket_grid_and_refined() {
        let spec = WeightSpec::standard();
        let z = c(0.6, 0.1);
        let w = c(-0.3, 0.7);
        let (lo, hi) = distance_bounds(&spec, z, w);
        let g = d_tau_grid(&spec, z, w, 128).unwrap();
        let r = d_tau_refine(&spec, &g, 1e-6).unwrap();
        assert!(lo <= r.distance && r.distance <= g.distance && g.distance <= hi * (1.0 + 1e-12));
        assert_eq!(r.path[0], z);
        assert_eq!(*r.path.last().unwrap(), w);
    }

    #[test]
    fn grid_is_symmetric() {
        let spec = WeightSpec::standard();
        let z = c(0.2, 0.5);
        let w = c(0.8, -0.1);
        let a = d_tau_grid(&spec, z, w, 64).unwrap().distance;
        let b = d_tau_grid(&spec, w, z, 64).unwrap().distance;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn skwarczynski_basic() {
        let t = MomentTable::covering(&WeightSpec::standard(), 0.9, 1e-12).unwrap();
        let z = c(0.4, 0.2);
        assert_eq!(skwarczynski(&t, z, z).unwrap().value, 0.0);
        let w = c(-0.1, 0.5);
        let a = skwarczynski(&t, z, w).unwrap().value;
        let b = skwarczynski(&t, w, z).unwrap().value;
        assert!((a - b).abs() < 1e-12 && a > 0.0 && a < 1.0);
    }

    #[test]
    fn coarse_resolution_is_rejected() {
        let spec = WeightSpec::standard();
        assert!(matches!(
            d_tau_grid(&spec, c(0.1, 0.0), c(0.0, 0.1), 4),
            Err(MetricError::Resolution(4))
        ));
    }
}

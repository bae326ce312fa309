//! The acceptance suite. Every criterion recomputes its inputs from scratch
//! so its runtime can be judged on its own.

pub mod oracle;

use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compop::{self, CriterionOptions, SelfMap, Verdict, SEC4_EPS_DEFAULT};
use crate::hilbert_schmidt as hs;
use crate::kernel::{self, MomentTable, MOMENT_TOL_DEFAULT};
use crate::metric::{self, GeodesicOptions, RatioStats};
use crate::quad;
use crate::weights::WeightSpec;

/// `m_0` for `α = A = 1` from 40-digit mpmath quadrature.
pub const M0_REFERENCE: f64 = 0.0148017640453491191;

/// Seed of the pair samples used by criteria 3, 4 and 7.
pub const SUITE_SEED: u64 = 20240611;

pub const SUITE_BUDGET_SECS: f64 = 900.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub elapsed_secs: f64,
    pub budget_secs: Option<f64>,
    /// A computation that failed outright, which fails the criterion.
    pub error: Option<String>,
}

impl Outcome {
    /// One line per criterion, `PASS` or `FAIL` first.
    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        let mut line = format!(
            "{} [{}] {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_secs
        );
        if let Some(e) = &self.error {
            line.push_str(&format!(": error: {e}"));
        } else if !failed.is_empty() {
            line.push_str(&format!(": failed {}", failed.join(", ")));
        }
        line
    }
}

pub const CRITERIA: [(u8, &str, Option<f64>); 8] = [
    (1, "moment correctness", Some(10.0)),
    (2, "kernel correctness", Some(30.0)),
    (3, "geodesic oracle", Some(60.0)),
    (4, "comparability of kernel distances with rho_tau", None),
    (5, "example maps phi = (1+z^2)/2 and its perturbation", Some(300.0)),
    (6, "Hilbert-Schmidt route agreement", Some(120.0)),
    (7, "path experiment between constant maps", None),
    (8, "full suite within budget", Some(SUITE_BUDGET_SECS)),
];

type CheckResult = Result<Vec<Check>, String>;

struct Checks(Vec<Check>);

impl Checks {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Runs criteria 1 to 7.
pub fn run_criterion(id: u8) -> Option<Outcome> {
    let (_, title, budget) = CRITERIA.iter().copied().find(|c| c.0 == id && id != 8)?;
    let start = Instant::now();
    let result = match id {
        1 => moments(),
        2 => kernel_checks(),
        3 => geodesic(),
        4 => comparability(),
        5 => example(),
        6 => hs_routes(),
        7 => path(),
        _ => unreachable!(),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let (mut checks, error) = match result {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    if let Some(b) = budget {
        checks.push(Check {
            name: "runtime".into(),
            passed: elapsed <= b,
            detail: format!("{elapsed:.1} s of {b} s"),
        });
    }
    Some(Outcome {
        id,
        title: title.into(),
        passed: error.is_none() && checks.iter().all(|c| c.passed),
        checks,
        elapsed_secs: elapsed,
        budget_secs: budget,
        error,
    })
}

/// Criterion 8 from the outcomes of the others and the total wall time.
pub fn suite_outcome(outcomes: &[Outcome], elapsed_secs: f64) -> Outcome {
    let mut c = Checks::new();
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    c.push(
        "all criteria pass",
        failed.is_empty() && outcomes.len() == 7,
        if failed.is_empty() {
            format!("{} criteria", outcomes.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
    c.push(
        "runtime",
        elapsed_secs <= SUITE_BUDGET_SECS,
        format!("{elapsed_secs:.1} s of {SUITE_BUDGET_SECS} s"),
    );
    Outcome {
        id: 8,
        title: CRITERIA[7].1.into(),
        passed: c.0.iter().all(|x| x.passed),
        checks: c.0,
        elapsed_secs,
        budget_secs: Some(SUITE_BUDGET_SECS),
        error: None,
    }
}

/// Runs the whole suite, handing each outcome to `report` as it completes.
pub fn run_all(mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let start = Instant::now();
    let mut out = Vec::new();
    for id in 1..=7 {
        let o = run_criterion(id).expect("known criterion");
        report(&o);
        out.push(o);
    }
    let last = suite_outcome(&out, start.elapsed().as_secs_f64());
    report(&last);
    out.push(last);
    out
}

/// Pairs of points uniform in the disk of radius `radius`.
pub fn sample_pairs(seed: u64, count: usize, radius: f64) -> Vec<(Complex64, Complex64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let z = quad::sample_disk(&mut rng) * radius;
            let w = quad::sample_disk(&mut rng) * radius;
            (z, w)
        })
        .collect()
}

fn moments() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let table = MomentTable::compute(&spec, 200, MOMENT_TOL_DEFAULT).map_err(err)?;
    let worst = [0usize, 1, 5, 20]
        .par_iter()
        .map(|&n| {
            let o = oracle::midpoint_moment(&spec, n, 10_000_000);
            (n, rel(table.log_m(n).exp(), o))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    c.push(
        "midpoint oracle",
        worst.1 <= 1e-8,
        format!("worst relative error {:.2e} at n = {}", worst.1, worst.0),
    );
    let m0 = rel(table.log_m(0).exp(), M0_REFERENCE);
    c.push("frozen m_0", m0 <= 1e-10, format!("relative error {m0:.2e}"));

    let lm = table.log_moments();
    let slack = |n: usize| 4.0 * table.rel_err(n).max(1e-15);
    let decreasing = (1..=200).filter(|&n| lm[n] >= lm[n - 1]).count();
    c.push("monotone", decreasing == 0, format!("{decreasing} increases for n <= 200"));
    let concave = (1..200)
        .filter(|&n| lm[n - 1] + lm[n + 1] - 2.0 * lm[n] < -(slack(n - 1) + slack(n + 1) + 2.0 * slack(n)))
        .count();
    c.push("log-convex", concave == 0, format!("{concave} violations for n <= 200"));
    Ok(c.0)
}

fn kernel_checks() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    // The pairing sums (ρ z̄)^n with ρ up to 1, which needs the table past |z|².
    let table = MomentTable::covering(&spec, 0.95, 1e-14).map_err(err)?;
    let inv_m0 = (-table.log_m(0)).exp();
    let zero = Complex64::new(0.0, 0.0);
    let mut worst = 0.0f64;
    for w in [zero, Complex64::new(0.5, 0.0), Complex64::from_polar(0.9, 2.0), Complex64::from_polar(0.99, -1.0)] {
        let k = kernel::kernel(&table, zero, w, 1e-12).map_err(err)?.value();
        worst = worst.max((k - inv_m0).norm() / inv_m0);
    }
    c.push("K(0, w) = 1/m_0", worst <= 1e-12, format!("worst relative error {worst:.2e}"));

    let mut points = vec![zero];
    for r in [0.3, 0.6, 0.9] {
        for t in [0.0, 1.3, 2.9, 4.4] {
            points.push(Complex64::from_polar(r, t));
        }
    }
    let jobs: Vec<(Complex64, usize)> = points.iter().flat_map(|&z| (0..=10).map(move |k| (z, k))).collect();
    let errors = jobs
        .par_iter()
        .map(|&(z, k)| {
            let got = kernel::reproducing_pairing(&table, z, k, 1e-10)?;
            let want = z.powu(k as u32);
            // z^k vanishes at the origin; compare against 1 there.
            Ok(((got - want).norm() / want.norm().max(if z == zero { 1.0 } else { 0.0 }), z, k))
        })
        .collect::<Result<Vec<_>, kernel::KernelError>>()
        .map_err(err)?;
    let (e, z, k) = errors.into_iter().fold((0.0, zero, 0), |a, b| if b.0 > a.0 { b } else { a });
    c.push(
        "reproducing identity",
        e <= 1e-6,
        format!("worst relative error {e:.2e} at z = {z:.3}, k = {k}"),
    );
    Ok(c.0)
}

fn geodesic() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let forced = GeodesicOptions {
        radial_shortcut: false,
        ..GeodesicOptions::default()
    };
    let (z, w) = (Complex64::new(0.0, 0.0), Complex64::new(0.75, 0.0));
    let grid = metric::d_tau_grid_with(&spec, z, w, &forced).map_err(err)?;
    let refined = metric::d_tau_refine(&spec, &grid, forced.tol).map_err(err)?;
    let (eg, er) = (rel(grid.distance, 2.0), rel(refined.distance, 2.0));
    c.push("d(0, 0.75) grid", eg <= 0.01, format!("{:.8} ({eg:.2e})", grid.distance));
    c.push("d(0, 0.75) refined", er <= 1e-3, format!("{:.8} ({er:.2e})", refined.distance));
    let closed = metric::radial_cost(&spec, 0.0, 0.75);
    let ec = rel(closed, 2.0);
    c.push("d(0, 0.75) radial integral", ec <= 1e-8, format!("{closed:.10}"));

    let opts = GeodesicOptions::default();
    let pairs = sample_pairs(SUITE_SEED, 20, 0.99);
    let rows = pairs
        .par_iter()
        .map(|&(z, w)| {
            let g = metric::d_tau_grid_with(&spec, z, w, &opts)?;
            let r = metric::d_tau_refine(&spec, &g, opts.tol)?;
            Ok((g.distance, r.distance))
        })
        .collect::<Result<Vec<_>, metric::MetricError>>()
        .map_err(err)?;
    let gr = rows.iter().map(|r| rel(r.0, r.1)).fold(0.0, f64::max);
    c.push("grid vs refined, 20 pairs", gr <= 0.01, format!("worst relative gap {gr:.2e}"));
    Ok(c.0)
}

fn comparability() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let table = MomentTable::covering(&spec, 0.995, 1e-12).map_err(err)?;
    let coarse = GeodesicOptions::default();
    let fine = GeodesicOptions {
        resolution: 2 * coarse.resolution,
        ..coarse
    };
    let pairs: Vec<_> = sample_pairs(SUITE_SEED + 4, 500, 0.995)
        .into_iter()
        .filter(|(z, w)| z != w)
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(z, w)| {
            let s = metric::skwarczynski(&table, z, w)?.value;
            let k = metric::kernel_difference_ratio(&table, z, w)?;
            let r1 = metric::rho_tau_with(&spec, z, w, &coarse)?;
            let r2 = metric::rho_tau_with(&spec, z, w, &fine)?;
            Ok([s / r1, s / r2, k / (r1 * r1), k / (r2 * r2)])
        })
        .collect::<Result<Vec<_>, metric::MetricError>>()
        .map_err(err)?;
    let stats = |i: usize| RatioStats::from_values(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()).unwrap();
    for (label, i) in [("S / rho", 0), ("|K_z - K_w|^2 ratio / rho^2", 2)] {
        let a = stats(i);
        let b = stats(i + 1);
        let shift = rel(b.median, a.median);
        c.push(
            format!("{label} band"),
            a.spread() < 100.0 && b.spread() < 100.0,
            format!(
                "{} pairs, min {:.4} max {:.4} (max/min {:.2}; refined {:.2})",
                a.count,
                a.min,
                a.max,
                a.spread(),
                b.spread()
            ),
        );
        c.push(
            format!("{label} median stability"),
            shift < 0.1,
            format!("median {:.6} -> {:.6} ({shift:.2e})", a.median, b.median),
        );
    }
    Ok(c.0)
}

fn example() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let phi = SelfMap::half_one_plus_z2();
    let psi = SelfMap::sec4_psi(SEC4_EPS_DEFAULT).map_err(err)?;
    let radii = [0.9, 0.95, 0.99, 0.995];
    let opts = CriterionOptions::default();
    let report = compop::difference_criterion(&spec, &phi, &psi, &radii, &opts).map_err(err)?;

    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    let pp = &report.phi_profile.sup_values;
    let band = 0.6f64.exp();
    c.push(
        "phi circle suprema in [1, e^0.6]",
        pp.iter().all(|&v| (1.0..=band).contains(&v)),
        fmt(pp),
    );
    let one = Complex64::new(0.999, 0.0);
    let axis = compop::weight_ratio(&spec, &phi, one).map_err(err)?.exp();
    let ea = rel(axis, 0.5f64.exp());
    c.push("phi real-axis ratio at 0.999", ea <= 0.02, format!("{axis:.6} vs e^0.5 ({ea:.2e})"));

    let qp = &report.psi_profile.sup_values;
    let qmin = qp.iter().copied().fold(f64::INFINITY, f64::min);
    let qmax = qp.iter().copied().fold(0.0, f64::max);
    c.push(
        "psi circle suprema finite",
        qp.iter().all(|v| v.is_finite()) && report.psi_profile.verdict != Verdict::Unbounded,
        format!("{} (band [{qmin:.4}, {qmax:.4}])", fmt(qp)),
    );
    let axis_psi = compop::weight_ratio(&spec, &psi, one).map_err(err)?.exp();
    c.push("psi real-axis ratio at 0.999 finite", axis_psi.is_finite(), format!("{axis_psi:.6}"));

    for (label, p) in [("phi", &report.phi_profile), ("psi", &report.psi_profile)] {
        c.push(
            format!("{label} profile does not decay"),
            p.verdict != Verdict::DecaysToZero,
            format!("{} (limit {:.4})", p.verdict, p.limit_estimate),
        );
    }

    let d = &report.combined.sup_values;
    let monotone = d.windows(2).all(|w| w[1] < w[0]);
    c.push("difference criterion decreasing", monotone, fmt(d));
    let fraction = d[d.len() - 1] / d[0];
    c.push(
        "difference criterion final value",
        fraction < 0.1,
        format!("{fraction:.3e} of the value at r = 0.9"),
    );
    Ok(c.0)
}

fn constant(c: f64) -> SelfMap {
    SelfMap::constant(Complex64::new(c, 0.0)).expect("constant inside the disk")
}

fn hs_routes() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let table = MomentTable::covering(&spec, 0.9, 1e-12).map_err(err)?;
    let pairs = [
        ("0 vs 0.5", constant(0.0), constant(0.5)),
        (
            "z/2 vs z/3",
            SelfMap::scaled(Complex64::new(0.5, 0.0)).map_err(err)?,
            SelfMap::scaled(Complex64::new(1.0 / 3.0, 0.0)).map_err(err)?,
        ),
    ];
    for (label, phi, psi) in &pairs {
        let i = hs::hs_diff_integral(&spec, &table, phi, psi).map_err(err)?;
        let b = hs::hs_diff_basis_auto(&spec, &table, phi, psi).map_err(err)?;
        let e = rel(b.value_sq, i.value_sq);
        c.push(
            format!("routes agree, {label}"),
            i.is_finite() && b.is_finite() && e <= 0.02,
            format!(
                "integral {:.8e}, basis {:.8e} (N* = {:?}), gap {e:.2e}",
                i.value_sq, b.value_sq, b.truncation
            ),
        );
    }
    for cst in [0.1, 0.3, 0.5] {
        let z = Complex64::new(cst, 0.0);
        let closed = (table.log_m(0) + kernel::log_kernel_diag(&table, z, 1e-14).map_err(err)?).exp() - 1.0;
        let i = hs::hs_diff_integral(&spec, &table, &constant(0.0), &constant(cst)).map_err(err)?;
        let e = rel(i.value_sq, closed);
        c.push(
            format!("closed form m_0 K(c, c) - 1, c = {cst}"),
            e <= 0.01,
            format!("integral {:.10e}, closed form {closed:.10e} ({e:.2e})", i.value_sq),
        );
    }
    Ok(c.0)
}

fn path() -> CheckResult {
    let spec = WeightSpec::standard();
    let mut c = Checks::new();
    let table = MomentTable::covering(&spec, 0.9, 1e-12).map_err(err)?;
    let (phi, psi) = (constant(0.0), constant(0.5));
    let coarse = hs::path_experiment(&spec, &table, &phi, &psi, &hs::s_grid(4)).map_err(err)?;
    let fine = hs::path_experiment(&spec, &table, &phi, &psi, &hs::s_grid(8)).map_err(err)?;
    c.push(
        "entries finite",
        coarse.all_finite && fine.all_finite,
        format!("mesh 1/4 and 1/8, {} triangle violations", coarse.triangle_violations + fine.triangle_violations),
    );
    c.push(
        "max adjacent entry decreases",
        fine.max_adjacent < coarse.max_adjacent,
        format!("{:.6} (mesh 1/4) -> {:.6} (mesh 1/8)", coarse.max_adjacent, fine.max_adjacent),
    );

    let opts = GeodesicOptions::default();
    let mut pairs = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0))];
    pairs.extend(sample_pairs(SUITE_SEED + 7, 19, 0.95));
    let bound = |steps: usize| -> Result<f64, String> {
        let grid = hs::s_grid(steps);
        let vals = pairs
            .par_iter()
            .map(|&(z, w)| hs::segment_rho_bound(&spec, z, w, &grid, &opts).map(|b| b.max_ratio))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    };
    let (b4, b8) = (bound(4)?, bound(8)?);
    let change = rel(b8, b4);
    c.push(
        "segment bound stable",
        change <= 0.2,
        format!("{b4:.6} (mesh 1/4) -> {b8:.6} (mesh 1/8), change {change:.2e}"),
    );
    Ok(c.0)
}

use std::time::Instant;

use anyhow::Context;
use bergman_core::compop::{self, CriterionOptions, SelfMap, Verdict};
use bergman_core::hilbert_schmidt::{self as hs, HSResult};
use bergman_core::kernel::{self, MomentTable};
use bergman_core::metric::{self, GeodesicOptions};
use bergman_core::verify;
use bergman_core::weights::{self, WeightSpec};
use bergman_core::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{invalid, parse_list, Settings};
use crate::output::{num, Provenance, Sink};

pub struct Ctx<'a> {
    pub settings: &'a Settings,
    pub sink: &'a mut Sink,
    pub command: &'static str,
}

impl Ctx<'_> {
    fn prov(&self) -> Provenance {
        Provenance {
            command: self.command.to_string(),
            settings: self.settings.provenance(),
        }
    }

    fn weight(&self) -> anyhow::Result<WeightSpec> {
        let w = self
            .settings
            .parsed("weight", Some("weight A=1 alpha=1"), |s| s.parse::<WeightSpec>().map_err(|e| e.to_string()))?;
        Ok(w.expect("default given"))
    }

    fn map(&self, key: &str, default: &str) -> anyhow::Result<SelfMap> {
        Ok(self.map_opt(key, Some(default))?.expect("default given"))
    }

    /// `none` switches an optional map off.
    fn map_opt(&self, key: &str, default: Option<&str>) -> anyhow::Result<Option<SelfMap>> {
        let m = self.settings.parsed(key, default, |s| match s {
            "none" => Ok(None),
            _ => s.parse::<SelfMap>().map(Some).map_err(|e| e.to_string()),
        })?;
        Ok(m.flatten())
    }

    fn point(&self, key: &str, default: &str) -> anyhow::Result<Complex64> {
        let z = self.settings.parsed(key, Some(default), |s| {
            let z = compop::parse_complex(s)?;
            if z.norm() < 1.0 {
                Ok(z)
            } else {
                Err("point must lie inside the unit disk".into())
            }
        })?;
        Ok(z.expect("default given"))
    }

    fn radii(&self, default: Vec<f64>) -> anyhow::Result<Vec<f64>> {
        let text = default.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",");
        let r = self.settings.parsed("radii", Some(&text), parse_list)?.expect("default given");
        if r.len() < 3 || r.windows(2).any(|w| w[1] <= w[0]) || r[0] <= 0.0 || r[r.len() - 1] > kernel::R_MAX_DEFAULT {
            return Err(invalid(format!(
                "--radii needs at least three increasing values in (0, {}]",
                kernel::R_MAX_DEFAULT
            )));
        }
        Ok(r)
    }

    fn table(&self, spec: &WeightSpec, radius: f64) -> anyhow::Result<MomentTable> {
        let tol: f64 = self.settings.get("tol", 1e-12)?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("--tol must lie in (0, 1)"));
        }
        MomentTable::covering(spec, radius, tol).context("building the moment table")
    }
}

fn verdict_label(v: Verdict, difference: bool) -> &'static str {
    match (v, difference) {
        (Verdict::DecaysToZero, false) => "bounded-compact",
        (Verdict::BoundedNonvanishing, false) => "bounded-noncompact",
        (Verdict::DecaysToZero, true) => "compact",
        (Verdict::BoundedNonvanishing, true) => "noncompact",
        (Verdict::Unbounded, _) => "unbounded",
    }
}

pub fn verify_weights(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let grid: usize = ctx.settings.get("grid", 1000)?;
    if grid < 100 {
        return Err(invalid("--grid must be at least 100"));
    }
    let constants = weights::validate_class_w(&spec, grid);
    let samples: Vec<_> = [0.0, 0.5, 0.9, 0.99, 0.999]
        .iter()
        .map(|&r| {
            json!({
                "r": r,
                "eta": spec.eta(r).ok(),
                "tau": spec.tau(r).ok(),
                "tau_prime": spec.tau_prime(r).ok(),
                "laplacian_eta": spec.laplacian_eta(r).ok(),
            })
        })
        .collect();
    let ok = constants.is_ok();
    let result = json!({
        "weight": spec,
        "tau_exponent": spec.tau_exponent(),
        "contact_exponent": spec.contact_exponent(),
        "class_w": ok,
        "constants": constants.as_ref().ok(),
        "error": constants.as_ref().err().map(|e| e.to_string()),
        "samples": samples,
    });
    let prov = ctx.prov();
    ctx.sink.json("verify_weights", &prov, &result)?;
    Ok(ok)
}

pub fn kernel_probe(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let z = ctx.point("z", "0.5")?;
    let w = match ctx.settings.raw("w") {
        Some(_) => ctx.point("w", "0")?,
        None => z,
    };
    let p: Option<f64> = ctx.settings.optional("p")?;
    let tol: f64 = ctx.settings.get("tol", 1e-12)?;
    let table = ctx.table(&spec, z.norm().max(w.norm()))?;
    let k = kernel::kernel(&table, z, w, tol)?;
    let lz = kernel::log_kernel_diag(&table, z, tol)?;
    let lw = kernel::log_kernel_diag(&table, w, tol)?;
    let s = metric::skwarczynski(&table, z, w)?;
    let diff = if z == w { 0.0 } else { metric::kernel_difference_ratio(&table, z, w)? };
    let lp = match p {
        Some(p) => Some(kernel::kernel_lp_ratio(&table, z, p, 1e-8)?),
        None => None,
    };
    let result = json!({
        "z": [z.re, z.im],
        "w": [w.re, w.im],
        "log_abs": k.log_abs,
        "phase": k.phase,
        "terms_used": k.terms_used,
        "tail_bound": k.tail_bound,
        "log_kernel_zz": lz,
        "log_kernel_ww": lw,
        "skwarczynski": s.value,
        "radicand_violation": s.radicand_violation,
        "kernel_difference_ratio": diff,
        "lp_ratio": lp.map(|v| json!({"p": p, "value": v})),
    });
    let prov = ctx.prov();
    ctx.sink.json("kernel_probe", &prov, &result)?;
    Ok(true)
}

pub fn distance_field(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let from = ctx.point("from", "0")?;
    let n: usize = ctx.settings.get("grid", 21)?;
    let extent: f64 = ctx.settings.get("extent", 0.95)?;
    let resolution: usize = ctx.settings.get("resolution", metric::GRID_RESOLUTION_DEFAULT)?;
    if n < 2 || !(extent > 0.0 && extent < 1.0) || resolution < 8 {
        return Err(invalid("need --grid >= 2, --extent in (0, 1) and --resolution >= 8"));
    }
    let opts = GeodesicOptions {
        resolution,
        ..GeodesicOptions::default()
    };
    let table = ctx.table(&spec, extent.max(from.norm()))?;
    let points: Vec<Complex64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let t = |k: usize| -extent + 2.0 * extent * k as f64 / (n - 1) as f64;
            Complex64::new(t(j), t(i))
        })
        .filter(|w| w.norm() <= extent && *w != from)
        .collect();
    let rows = points
        .par_iter()
        .map(|&w| {
            let d = metric::d_tau_with(&spec, from, w, &opts)?;
            let s = metric::skwarczynski(&table, from, w)?;
            Ok(vec![num(w.re), num(w.im), num(d.distance), num(-(-d.distance).exp_m1()), num(s.value)])
        })
        .collect::<Result<Vec<_>, metric::MetricError>>()?;
    let prov = ctx.prov();
    ctx.sink.csv("distance_field", &prov, &["w_re", "w_im", "d_tau", "rho_tau", "skwarczynski"], &rows)?;
    Ok(true)
}

fn criterion_options(ctx: &Ctx) -> anyhow::Result<CriterionOptions> {
    let samples: usize = ctx.settings.get("angular-samples", compop::ANGULAR_SAMPLES_DEFAULT)?;
    if samples < 16 {
        return Err(invalid("--angular-samples must be at least 16"));
    }
    Ok(CriterionOptions {
        angular_samples: samples,
        ..CriterionOptions::default()
    })
}

pub fn criterion(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let phi = ctx.map("phi", "map template half_one_plus_z2")?;
    let psi = ctx.map_opt("psi", Some("map template sec4_psi eps=0.0078"))?;
    let radii = ctx.radii(compop::default_radii())?;
    let opts = criterion_options(ctx)?;
    let prov = ctx.prov();
    match psi {
        None => {
            let p = compop::boundedness_profile(&spec, &phi, &radii, &opts)?;
            let rows: Vec<Vec<String>> = (0..radii.len())
                .map(|i| vec![num(radii[i]), num(p.sup_values[i]), num(p.log_sup[i]), num(p.sup_angles[i])])
                .collect();
            ctx.sink.csv("criterion", &prov, &["r", "sup_value", "log_sup", "sup_angle"], &rows)?;
            let verdict = json!({
                "phi": verdict_label(p.verdict, false),
                "limit_estimate": p.limit_estimate,
                "profile": p,
            });
            ctx.sink.json("criterion", &prov, &verdict)?;
        }
        Some(psi) => {
            let d = compop::difference_criterion(&spec, &phi, &psi, &radii, &opts)?;
            let c = &d.combined;
            let rows: Vec<Vec<String>> = (0..radii.len())
                .map(|i| {
                    vec![
                        num(radii[i]),
                        num(c.sup_values[i]),
                        num(c.sup_upper[i]),
                        num(c.sup_angles[i]),
                        num(d.phi_profile.sup_values[i]),
                        num(d.psi_profile.sup_values[i]),
                    ]
                })
                .collect();
            ctx.sink.csv(
                "criterion",
                &prov,
                &["r", "sup_value", "sup_upper", "sup_angle", "phi_sup", "psi_sup"],
                &rows,
            )?;
            let verdict = json!({
                "phi": verdict_label(d.phi_profile.verdict, false),
                "psi": verdict_label(d.psi_profile.verdict, false),
                "difference": verdict_label(c.verdict, true),
                "limit_estimate": c.limit_estimate,
                "report": d,
            });
            ctx.sink.json("criterion", &prov, &verdict)?;
        }
    }
    Ok(true)
}

/// Radius covering the images of both maps, capped where tables stay cheap.
fn image_radius(maps: &[&SelfMap]) -> f64 {
    maps.iter().map(|m| m.max_boundary_modulus()).fold(0.5, f64::max).min(0.99)
}

#[derive(Serialize)]
struct HsReport {
    integral: Option<HSResult>,
    basis: Option<HSResult>,
    relative_gap: Option<f64>,
    /// `m_0 ‖K_a - K_b‖²` when both maps are constants `a`, `b`.
    closed_form: Option<f64>,
    agree: Option<bool>,
}

pub fn hsnorm(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let phi = ctx.map("phi", "map poly 0")?;
    let psi = ctx.map_opt("psi", Some("map poly 0.5"))?;
    let route: String = ctx.settings.get("route", "both".to_string())?;
    if !["integral", "basis", "both"].contains(&route.as_str()) {
        return Err(invalid(format!("--route {route}: expected integral, basis or both")));
    }
    let prov;
    let report = match &psi {
        None => {
            let table = ctx.table(&spec, image_radius(&[&phi]))?;
            prov = ctx.prov();
            let r = hs::hs_norm_integral(&spec, &table, &|_| Complex64::new(1.0, 0.0), &phi)?;
            HsReport {
                integral: Some(r),
                basis: None,
                relative_gap: None,
                closed_form: None,
                agree: None,
            }
        }
        Some(psi) => {
            let table = ctx.table(&spec, image_radius(&[&phi, psi]))?;
            prov = ctx.prov();
            let integral = match route.as_str() {
                "integral" | "both" => Some(hs::hs_diff_integral(&spec, &table, &phi, psi)?),
                _ => None,
            };
            let basis = match route.as_str() {
                "basis" | "both" => Some(hs::hs_diff_basis_auto(&spec, &table, &phi, psi)?),
                _ => None,
            };
            let closed_form = match (phi.degree(), psi.degree()) {
                (0, 0) => {
                    let (a, b) = (phi.coeffs()[0], psi.coeffs()[0]);
                    if a == b {
                        Some(0.0)
                    } else {
                        Some((table.log_m(0) + kernel::log_kernel_diff_norm_sq(&table, a, b, 1e-12)?).exp())
                    }
                }
                _ => None,
            };
            let relative_gap = match (&integral, &basis) {
                (Some(i), Some(b)) if i.is_finite() && b.is_finite() => {
                    Some((i.value_sq - b.value_sq).abs() / i.value_sq.abs().max(f64::MIN_POSITIVE))
                }
                _ => None,
            };
            HsReport {
                agree: relative_gap.map(|g| g <= 0.02),
                integral,
                basis,
                relative_gap,
                closed_form,
            }
        }
    };
    ctx.sink.json("hsnorm", &prov, &report)?;
    Ok(report.agree.unwrap_or(true))
}

pub fn path_experiment(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let phi = ctx.map("phi", "map poly 0")?;
    let psi = ctx.map("psi", "map poly 0.5")?;
    let s_values = ctx
        .settings
        .parsed("s-grid", Some("4"), |s| match s.parse::<usize>() {
            Ok(0) => Err("need at least one step".into()),
            Ok(n) => Ok(hs::s_grid(n)),
            Err(_) => {
                let v = parse_list(s)?;
                if v.len() < 2 || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    Err("expected a step count or at least two values in [0, 1]".into())
                } else {
                    Ok(v)
                }
            }
        })?
        .expect("default given");
    let table = ctx.table(&spec, image_radius(&[&phi, &psi]))?;
    let prov = ctx.prov();
    let e = hs::path_experiment(&spec, &table, &phi, &psi, &s_values)?;
    let mut header = vec!["s".to_string()];
    header.extend(e.s_values.iter().map(|s| s.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = e
        .s_values
        .iter()
        .zip(&e.entries)
        .map(|(s, row)| std::iter::once(s.to_string()).chain(row.iter().map(|v| num(*v))).collect())
        .collect();
    ctx.sink.csv("path_experiment", &prov, &header, &rows)?;
    let summary = json!({
        "s_values": e.s_values,
        "all_finite": e.all_finite,
        "max_adjacent": e.max_adjacent,
        "triangle_violations": e.triangle_violations,
        "contradiction": e.contradiction,
    });
    ctx.sink.json("path_experiment", &prov, &summary)?;
    Ok(!e.contradiction)
}

pub fn example_sec4(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let spec = ctx.weight()?;
    let eps: f64 = ctx.settings.get("eps", compop::SEC4_EPS_DEFAULT)?;
    let seed: u64 = ctx.settings.get("seed", 1)?;
    let mc: usize = ctx.settings.get("mc-samples", 200_000)?;
    let radii = ctx.radii(compop::default_radii())?;
    let opts = criterion_options(ctx)?;
    let phi = SelfMap::half_one_plus_z2();
    let psi = SelfMap::sec4_psi(eps).map_err(|e| invalid(format!("--eps {eps}: {e}")))?;
    let prov = ctx.prov();

    let d = compop::difference_criterion(&spec, &phi, &psi, &radii, &opts)?;
    let one = Complex64::new(1.0, 0.0);
    let omegatau: Vec<_> = [one, -one]
        .iter()
        .map(|&zeta| compop::omegatau_check(&spec, &phi, &psi, zeta, None, 4, &opts.geodesic))
        .collect::<Result<_, _>>()?;
    let ess = compop::essential_norm_lower(&spec, &phi, &psi, &compop::default_boundary_samples(), &opts.geodesic)?;
    let angular = [
        compop::angular_derivative(&phi, one, &compop::angular_radii())?,
        compop::angular_derivative(&psi, one, &compop::angular_radii())?,
    ];
    let points: Vec<Complex64> = radii
        .iter()
        .flat_map(|&r| (0..64).map(move |j| Complex64::from_polar(r, j as f64 * std::f64::consts::PI / 32.0)))
        .collect();
    let convex = compop::uniform_bound_check(&spec, &phi, &psi, &hs::s_grid(8), &points)?;
    let carleson = compop::carleson_ratio(&spec, &|_| 1.0, &phi, 2.0, Complex64::new(0.9, 0.0), mc, seed)?;

    let labels = (
        verdict_label(d.phi_profile.verdict, false),
        verdict_label(d.psi_profile.verdict, false),
        verdict_label(d.combined.verdict, true),
    );
    let expected = labels == ("bounded-noncompact", "bounded-noncompact", "compact");
    let hypotheses = omegatau.iter().all(|o| o.hypotheses_hold && o.decays);

    let rows: Vec<Vec<String>> = (0..radii.len())
        .map(|i| {
            vec![
                num(radii[i]),
                num(d.phi_profile.sup_values[i]),
                num(d.psi_profile.sup_values[i]),
                num(d.combined.sup_values[i]),
            ]
        })
        .collect();
    ctx.sink.csv("example_sec4", &prov, &["r", "phi_sup", "psi_sup", "difference_sup"], &rows)?;
    let result = json!({
        "verdicts": { "phi": labels.0, "psi": labels.1, "difference": labels.2 },
        "matches_expected": expected,
        "omegatau": omegatau,
        "omegatau_hypotheses_hold": hypotheses,
        "essential_norm_lower": ess,
        "angular_derivative_at_1": { "phi": angular[0], "psi": angular[1] },
        "convex_combination_bound": convex,
        "carleson_phi_at_0.9": carleson,
        "report": d,
    });
    ctx.sink.json("example_sec4", &prov, &result)?;
    Ok(expected && hypotheses)
}

pub fn verify_all(ctx: &mut Ctx) -> anyhow::Result<bool> {
    let ids: Vec<u8> = ctx
        .settings
        .parsed("only", Some("1,2,3,4,5,6,7"), |s| {
            s.split(',')
                .map(|t| match t.trim().parse::<u8>() {
                    Ok(i) if (1..=7).contains(&i) => Ok(i),
                    _ => Err(format!("`{t}` is not a criterion between 1 and 7")),
                })
                .collect()
        })?
        .expect("default given");
    let prov = ctx.prov();
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for &id in &ids {
        let o = verify::run_criterion(id).expect("criterion id checked");
        eprintln!("{}", o.summary_line());
        outcomes.push(o);
    }
    if ids.len() == 7 {
        let last = verify::suite_outcome(&outcomes, start.elapsed().as_secs_f64());
        eprintln!("{}", last.summary_line());
        outcomes.push(last);
    }
    let passed = outcomes.iter().all(|o| o.passed);
    ctx.sink.json(
        "verify_all",
        &prov,
        &json!({ "passed": passed, "elapsed_secs": start.elapsed().as_secs_f64(), "criteria": outcomes }),
    )?;
    Ok(passed)
}

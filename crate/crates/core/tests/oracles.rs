//! Production routines against independent reference computations.

use std::sync::OnceLock;

use bergman_core::compop::{self, ContactOptions, ContactStatus, SelfMap, Verdict, SEC4_EPS_DEFAULT};
use bergman_core::hilbert_schmidt as hs;
use bergman_core::kernel::{self, MomentTable};
use bergman_core::metric::{self, GeodesicOptions};
use bergman_core::quad;
use bergman_core::verify::oracle;
use bergman_core::weights::WeightSpec;
use bergman_core::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn spec() -> WeightSpec {
    WeightSpec::standard()
}

fn table() -> &'static MomentTable {
    static T: OnceLock<MomentTable> = OnceLock::new();
    T.get_or_init(|| MomentTable::covering(&spec(), 0.99, 1e-12).unwrap())
}

fn sec4() -> (SelfMap, SelfMap) {
    (SelfMap::half_one_plus_z2(), SelfMap::sec4_psi(SEC4_EPS_DEFAULT).unwrap())
}

#[test]
fn moments_match_disk_integral() {
    let s = spec();
    for n in [0usize, 3, 12] {
        let q = quad::disk_integral(
            |z: Complex64| z.norm_sqr().powi(n as i32) * s.omega(z.norm()).unwrap().powi(2),
            1e-10,
            64,
        );
        let m = table().log_m(n).exp();
        assert!(q.converged);
        assert!((q.value - m).abs() <= 1e-8 * m, "n = {n}: {} vs {m}", q.value);
    }
}

#[test]
fn kernel_matches_plain_series() {
    let moments: Vec<f64> = (0..600).map(|n| table().log_m(n).exp()).collect();
    for (z, w) in [(c(0.3, 0.1), c(-0.2, 0.4)), (c(0.5, 0.0), c(0.5, 0.0)), (c(0.0, 0.6), c(0.1, -0.55))] {
        let got = kernel::kernel(table(), z, w, 1e-14).unwrap().value();
        let want = oracle::direct_kernel_sum(&moments, z, w);
        assert!((got - want).norm() <= 1e-11 * want.norm(), "{got} vs {want}");
    }
}

#[test]
fn clairaut_agrees_with_refined_geodesic() {
    let s = spec();
    let opts = GeodesicOptions::default();
    for (z, w) in [
        (c(-0.941, -0.083), c(0.025, -0.895)),
        (c(0.709, -0.079), c(-0.786, 0.214)),
        (c(0.378, -0.768), c(-0.077, 0.953)),
    ] {
        let d = metric::d_tau_with(&s, z, w, &opts).unwrap().distance;
        let o = oracle::clairaut_distance(&s, z, w);
        assert!((d - o).abs() <= 1e-3 * o, "{z} {w}: {d} vs {o}");
    }
}

#[test]
fn radial_distance_to_three_quarters_is_two() {
    // u(r) = 2((1-r)^{-1/2} - 1) for α = 1
    let s = spec();
    let forced = GeodesicOptions {
        radial_shortcut: false,
        ..GeodesicOptions::default()
    };
    let g = metric::d_tau_grid_with(&s, c(0.0, 0.0), c(0.0, 0.75), &forced).unwrap();
    assert_eq!(g.method, metric::GeodesicMethod::Grid);
    assert!((g.distance - 2.0).abs() < 0.02);
    assert!((g.path.last().unwrap() - c(0.0, 0.75)).norm() < 1e-12);
}

#[test]
fn test_function_norm_matches_disk_quadrature() {
    let s = spec();
    let moments: Vec<f64> = (0..400).map(|n| table().log_m(n).exp()).collect();
    for (z, w) in [(c(0.3, 0.2), c(-0.1, 0.4)), (c(0.5, 0.0), c(0.45, 0.0))] {
        let oz = s.omega(z.norm()).unwrap();
        let q = quad::disk_integral(
            |x: Complex64| {
                let f = oz * oracle::direct_kernel_sum(&moments, x, z) * (x - w);
                f.norm_sqr() * s.omega(x.norm()).unwrap().powi(2)
            },
            1e-10,
            256,
        );
        let got = kernel::test_function_norm(table(), z, w).unwrap();
        assert!((got - q.value.sqrt()).abs() <= 1e-8 * got, "{got} vs {}", q.value.sqrt());
    }
}

#[test]
fn lp_ratio_four_stays_in_a_band_near_the_boundary() {
    let vals: Vec<f64> = [0.5, 0.7, 0.9, 0.95]
        .iter()
        .map(|&r| kernel::kernel_lp_ratio(table(), c(r, 0.0), 4.0, 1e-8).unwrap())
        .collect();
    let max = vals.iter().copied().fold(0.0, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max / min < 10.0, "{vals:?}");
    // The ratio is far from its boundary value at the origin.
    let at0 = kernel::kernel_lp_ratio(table(), c(0.0, 0.0), 4.0, 1e-8).unwrap();
    assert!(at0 > 50.0 * max, "{at0}");
}

#[test]
fn hs_constant_maps_match_closed_form() {
    let s = spec();
    let zero = SelfMap::constant(c(0.0, 0.0)).unwrap();
    for v in [0.2, 0.4] {
        let k = SelfMap::constant(c(v, 0.0)).unwrap();
        let closed = (table().log_m(0) + kernel::log_kernel_diag(table(), c(v, 0.0), 1e-14).unwrap()).exp() - 1.0;
        let i = hs::hs_diff_integral(&s, table(), &zero, &k).unwrap();
        let b = hs::hs_diff_basis_auto(&s, table(), &zero, &k).unwrap();
        assert!((i.value_sq - closed).abs() <= 1e-6 * closed, "{} vs {closed}", i.value_sq);
        assert!((b.value_sq - closed).abs() <= 1e-3 * closed, "{} vs {closed}", b.value_sq);
    }
}

#[test]
fn hs_norm_of_scaled_map_is_geometric() {
    // ‖C_φ e_n‖ = |c|^n for φ(z) = c z, so ‖C_φ‖²_HS = 1/(1 - |c|²)
    let s = spec();
    let map = SelfMap::scaled(c(0.0, 0.6)).unwrap();
    let r = hs::hs_norm_integral(&s, table(), &|_| c(1.0, 0.0), &map).unwrap();
    assert!((r.value_sq - 1.0 / 0.64).abs() < 1e-6, "{}", r.value_sq);
}

#[test]
fn example_profiles_and_difference() {
    let s = spec();
    let (phi, psi) = sec4();
    let radii = [0.9, 0.95, 0.99, 0.995];
    let r = compop::difference_criterion(&s, &phi, &psi, &radii, &Default::default()).unwrap();
    assert_eq!(r.phi_profile.verdict, Verdict::BoundedNonvanishing);
    assert_eq!(r.psi_profile.verdict, Verdict::BoundedNonvanishing);
    assert_eq!(r.combined.verdict, Verdict::DecaysToZero);
    // ω(r)/ω(φ(r)) → e^{1/2} along the real axis
    assert!((r.phi_profile.limit_estimate - 0.5f64.exp()).abs() < 0.01);
}

#[test]
fn real_axis_rho_follows_leading_order() {
    // ψ - φ = ε(1 - z²)^5 and τ(φ(r)) = ((1 - r²)/2)^{3/2}
    let s = spec();
    let (phi, psi) = sec4();
    for r in [0.9, 0.95, 0.99] {
        let z = c(r, 0.0);
        let rho = metric::rho_tau(&s, phi.eval(z), psi.eval(z)).unwrap();
        let lead = SEC4_EPS_DEFAULT * 2f64.powf(1.5) * (1.0 - r * r).powf(3.5);
        assert!((rho - lead).abs() < 1e-3 * lead, "r = {r}: {rho} vs {lead}");
    }
}

#[test]
fn contact_order_of_the_example_map() {
    // 1 - |φ(z)| ~ |1 - φ(z)|²/2 along the circle near 1
    let phi = SelfMap::half_one_plus_z2();
    let one = c(1.0, 0.0);
    let k2 = compop::contact_order_check(&phi, one, 2.0, &ContactOptions::default()).unwrap();
    assert_eq!(k2.status, ContactStatus::Holds);
    assert!((k2.inf - 0.5).abs() < 1e-3, "{}", k2.inf);
    let k4 = compop::contact_order_check(&phi, one, 4.0, &ContactOptions::default()).unwrap();
    assert_eq!(k4.status, ContactStatus::Holds);
    let k1 = compop::contact_order_check(&phi, one, 1.0, &ContactOptions::default()).unwrap();
    assert!(k1.inf < 1e-2 * k2.inf, "{}", k1.inf);
}

#[test]
fn omegatau_hypotheses_for_the_example() {
    let s = spec();
    let (phi, psi) = sec4();
    let r = compop::omegatau_check(&s, &phi, &psi, c(1.0, 0.0), None, 4, &GeodesicOptions::default()).unwrap();
    assert_eq!(r.m, 2);
    assert!(r.order_data && r.hypotheses_hold && r.decays);
}

#[test]
fn angular_derivatives() {
    let phi = SelfMap::half_one_plus_z2();
    let d = compop::angular_derivative(&phi, c(1.0, 0.0), &compop::angular_radii()).unwrap();
    assert!((d - 1.0).abs() < 1e-9, "{d}");
    let half = SelfMap::scaled(c(0.5, 0.0)).unwrap();
    assert_eq!(compop::angular_derivative(&half, c(1.0, 0.0), &compop::angular_radii()).unwrap(), f64::INFINITY);
}

#[test]
fn essential_norm_of_antipodal_maps() {
    let s = spec();
    let id = SelfMap::identity();
    let neg = SelfMap::scaled(c(-1.0, 0.0)).unwrap();
    let e = compop::essential_norm_lower(&s, &id, &neg, &compop::default_boundary_samples(), &GeodesicOptions::default()).unwrap();
    assert!(e.qualifying > 0);
    assert!((e.value - 2.0).abs() < 1e-12, "{}", e.value);
    let (phi, psi) = sec4();
    let e = compop::essential_norm_lower(&s, &phi, &psi, &compop::default_boundary_samples(), &GeodesicOptions::default()).unwrap();
    assert_eq!(e.qualifying, 0);
}

#[test]
fn carleson_ratio_of_identity_is_delta_squared() {
    // μ(D(ξ, δτ)) is the normalized area (δτ)², so the ratio is δ² = 1/144
    let s = spec();
    let e = compop::carleson_ratio(&s, &|_| 1.0, &SelfMap::identity(), 2.0, c(0.5, 0.0), 400_000, 7).unwrap();
    assert!((e.delta - 1.0 / 12.0).abs() < 1e-12);
    assert!((e.ratio - 1.0 / 144.0).abs() < 3.0 * e.std_err, "{} ± {}", e.ratio, e.std_err);
}

#[test]
fn convex_combination_bound_for_the_example() {
    let s = spec();
    let (phi, psi) = sec4();
    let pts: Vec<Complex64> = (0..200)
        .map(|i| Complex64::from_polar(0.999 * ((i % 20) as f64 / 20.0).sqrt().max(0.1), i as f64 * 0.7))
        .collect();
    let u = compop::uniform_bound_check(&s, &phi, &psi, &[0.0, 0.25, 0.5, 0.75, 1.0], &pts).unwrap();
    assert!(u.holds);
    assert_eq!(u.pointwise_violations, 0);
}

#[test]
fn monte_carlo_area_of_half_disk() {
    let e = quad::mc_disk(3, 100_000, |z| if z.norm() < 0.5 { 1.0 } else { 0.0 });
    assert!((e.mean - 0.25).abs() < 3.0 * e.std_err);
}

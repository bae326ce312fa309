use std::f64::consts::PI;
use std::sync::OnceLock;

use bergman_core::compop::{self, SelfMap, Verdict};
use bergman_core::hilbert_schmidt as hs;
use bergman_core::kernel::{self, MomentTable};
use bergman_core::metric::{self, GeodesicOptions};
use bergman_core::quad;
use bergman_core::weights::WeightSpec;
use bergman_core::Complex64;
use proptest::prelude::*;

fn spec() -> WeightSpec {
    WeightSpec::standard()
}

fn table() -> &'static MomentTable {
    static T: OnceLock<MomentTable> = OnceLock::new();
    T.get_or_init(|| MomentTable::covering(&spec(), 0.9, 1e-12).unwrap())
}

fn point(max_r: f64) -> impl Strategy<Value = Complex64> {
    (0.0..max_r, 0.0..2.0 * PI).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

/// `None` when the kernel is below the rounding floor of its series.
fn kern(z: Complex64, w: Complex64) -> Option<kernel::KernelValue> {
    match kernel::kernel(table(), z, w, 1e-8) {
        Ok(k) => Some(k),
        Err(kernel::KernelError::Cancellation { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_hermitian(z in point(0.9), w in point(0.9)) {
        let (Some(a), Some(b)) = (kern(z, w), kern(w, z)) else { return Ok(()) };
        let (a, b) = (a.value(), b.value());
        prop_assert!(close(a, b.conj(), 1e-12), "{a} vs {b}");
    }

    #[test]
    fn kernel_is_rotation_invariant(z in point(0.9), w in point(0.9), t in 0.0..2.0 * PI) {
        let rot = Complex64::from_polar(1.0, t);
        let (Some(a), Some(b)) = (kern(z, w), kern(rot * z, rot * w)) else { return Ok(()) };
        let (a, b) = (a.value(), b.value());
        prop_assert!(close(a, b, 1e-7), "{a} vs {b}");
    }

    #[test]
    fn kernel_satisfies_cauchy_schwarz(z in point(0.9), w in point(0.9)) {
        let Some(k) = kern(z, w) else { return Ok(()) };
        let dz = kernel::log_kernel_diag(table(), z, 1e-13).unwrap();
        let dw = kernel::log_kernel_diag(table(), w, 1e-13).unwrap();
        prop_assert!(2.0 * k.log_abs <= dz + dw + 1e-12);
    }

    #[test]
    fn skwarczynski_is_a_bounded_symmetric_distance(z in point(0.9), w in point(0.9)) {
        let a = metric::skwarczynski(table(), z, w).unwrap().value;
        let b = metric::skwarczynski(table(), w, z).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 1e-9);
        prop_assert!(metric::skwarczynski(table(), z, z).unwrap().value <= 1e-6);
    }

    #[test]
    fn weights_are_monotone(r in 0.0..0.999f64, h in 1e-6..1e-3f64) {
        let s = spec();
        let r2 = (r + h).min(0.9995);
        prop_assert!(s.eta(r2).unwrap() > s.eta(r).unwrap());
        prop_assert!(s.tau(r2).unwrap() < s.tau(r).unwrap());
        prop_assert!(s.tau(r).unwrap() > 0.0);
    }

    #[test]
    fn arclength_inverts(r in 0.0..0.999f64) {
        let s = spec();
        let back = s.radius_at_arclength(s.radial_arclength(r));
        prop_assert!((back - r).abs() <= 1e-12, "{back} vs {r}");
    }

    #[test]
    fn verdict_ignores_scale(a in -5.0..0.0f64, b in -5.0..0.0f64, c in -5.0..0.0f64, shift in -20.0..20.0f64) {
        let (v1, l1) = compop::trend_verdict(&[a, b, c]);
        let (v2, l2) = compop::trend_verdict(&[a + shift, b + shift, c + shift]);
        prop_assert_eq!(v1, v2);
        if l1.is_finite() {
            prop_assert!((l2 - l1 * shift.exp()).abs() <= 1e-9 * l2.abs().max(1e-300));
        }
    }

    #[test]
    fn geometric_decay_is_detected(q in 0.01..0.5f64, start in -3.0..3.0f64) {
        let logs: Vec<f64> = (0..4).map(|k| start + k as f64 * q.ln()).collect();
        prop_assert_eq!(compop::trend_verdict(&logs).0, Verdict::DecaysToZero);
        prop_assert_eq!(compop::trend_verdict(&[start; 4]).0, Verdict::BoundedNonvanishing);
    }

    #[test]
    fn maps_round_trip_through_text(coeffs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..5)) {
        let total: f64 = coeffs.iter().map(|(a, b)| a.hypot(*b)).sum();
        let scale = 0.99 / total.max(1.0);
        let c: Vec<Complex64> = coeffs.iter().map(|&(a, b)| Complex64::new(a * scale, b * scale)).collect();
        let map = SelfMap::new(c).unwrap();
        let back: SelfMap = map.to_string().parse().unwrap();
        prop_assert_eq!(map.coeffs(), back.coeffs());
    }

    #[test]
    fn interpolation_hits_its_endpoints(z in point(0.99), eps in 1e-4..7e-3f64) {
        let phi = SelfMap::half_one_plus_z2();
        let psi = SelfMap::sec4_psi(eps).unwrap();
        prop_assert!(close(SelfMap::interpolate(&phi, &psi, 0.0).eval(z), phi.eval(z), 1e-15));
        prop_assert!(close(SelfMap::interpolate(&phi, &psi, 1.0).eval(z), psi.eval(z), 1e-15));
    }

    #[test]
    fn identity_has_unit_weight_ratio(z in point(0.999)) {
        let r = compop::weight_ratio(&spec(), &SelfMap::identity(), z).unwrap();
        prop_assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible(seed in any::<u64>()) {
        let f = |z: Complex64| z.re * z.re;
        let a = quad::mc_disk(seed, 5000, f);
        let b = quad::mc_disk(seed, 5000, f);
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn geodesic_is_symmetric_and_bracketed(z in point(0.9), w in point(0.9)) {
        prop_assume!((z - w).norm() > 1e-3);
        let s = spec();
        let opts = GeodesicOptions::default();
        let a = metric::d_tau_with(&s, z, w, &opts).unwrap().distance;
        let b = metric::d_tau_with(&s, w, z, &opts).unwrap().distance;
        prop_assert!((a - b).abs() <= 1e-3 * a, "{a} vs {b}");
        let (lo, hi) = metric::distance_bounds(&s, z, w);
        prop_assert!(lo <= a * (1.0 + 1e-6) && a <= hi * (1.0 + 1e-6), "{lo} {a} {hi}");
        let rho = metric::rho_tau_with(&s, z, w, &opts).unwrap();
        prop_assert!((0.0..1.0).contains(&rho));
    }

    #[test]
    fn geodesic_triangle_inequality(x in point(0.85), y in point(0.85), z in point(0.85)) {
        let s = spec();
        let opts = GeodesicOptions::default();
        let d = |a, b| metric::d_tau_with(&s, a, b, &opts).unwrap().distance;
        let (xy, yz, xz) = (d(x, y), d(y, z), d(x, z));
        prop_assert!(xz <= (xy + yz) * (1.0 + 1e-3) + 1e-9, "{xz} > {xy} + {yz}");
    }

    #[test]
    fn basis_partial_sums_increase(c in 0.05..0.6f64, n in 4usize..24) {
        let s = spec();
        let zero = SelfMap::constant(Complex64::new(0.0, 0.0)).unwrap();
        let k = SelfMap::constant(Complex64::new(c, 0.0)).unwrap();
        let a = hs::hs_diff_basis_sum(&s, table(), &zero, &k, n).unwrap().value_sq;
        let b = hs::hs_diff_basis_sum(&s, table(), &zero, &k, n + 8).unwrap().value_sq;
        prop_assert!(b >= a * (1.0 - 1e-12), "{a} > {b}");
    }

    #[test]
    fn hs_difference_is_symmetric(a in 0.0..0.5f64, b in 0.0..0.5f64) {
        let s = spec();
        let p = SelfMap::scaled(Complex64::new(a, 0.0)).unwrap();
        let q = SelfMap::scaled(Complex64::new(b, 0.0)).unwrap();
        let x = hs::hs_diff_integral(&s, table(), &p, &q).unwrap().value_sq;
        let y = hs::hs_diff_integral(&s, table(), &q, &p).unwrap().value_sq;
        // Σ (a^n - b^n)² for φ = a z, ψ = b z
        let series: f64 = (1..400).map(|n| (a.powi(n) - b.powi(n)).powi(2)).sum();
        prop_assert!((x - y).abs() <= 1e-10 * x.max(1e-30));
        prop_assert!((x - series).abs() <= 1e-7 * series.max(1e-12), "{x} vs {series}");
    }
}

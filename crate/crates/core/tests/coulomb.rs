use dlag_core::coulomb::*;
use dlag_core::num;
use dlag_core::weights::WeightParams;
use dlag_core::Float;

const BITS: u32 = 400;

fn example() -> SupportInterval {
    let p = WeightParams::from_decimals("1", &[("1", "2")], BITS).unwrap();
    solve_endpoints(&p, 10, DEFAULT_SOLVER_TOL).unwrap()
}

fn bisect<F: Fn(&Float) -> Float>(mut lo: Float, mut hi: Float, f: F) -> Float {
    let flo = f(&lo);
    for _ in 0..400 {
        let mid = Float::with_val(BITS, &lo + &hi) / 2;
        let fm = f(&mid);
        if (fm.is_sign_negative()) == (flo.is_sign_negative()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Endpoints by nested bisection: `b(a)` from the second equation, then `a`
/// from the first along that curve.
fn bisection_endpoints(p: &WeightParams, n: u64) -> (Float, Float) {
    let b_of = |a: &Float| {
        bisect(Float::with_val(BITS, a + 1e-9f64), Float::with_val(BITS, 1000), |b| endpoint_residuals(p, n, a, b)[1].clone())
    };
    let a = bisect(Float::with_val(BITS, 1e-12), Float::with_val(BITS, 30), |a| {
        let b = b_of(a);
        endpoint_residuals(p, n, a, &b)[0].clone()
    });
    let b = b_of(&a);
    (a, b)
}

#[test]
fn undeformed_endpoints_match_closed_form() {
    let p = WeightParams::classical("2", BITS).unwrap();
    let s = solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL).unwrap();
    let prod = Float::with_val(BITS, &s.a * &s.b);
    let sum = Float::with_val(BITS, &s.a + &s.b);
    assert!(Float::with_val(BITS, prod - 4).abs() < 1e-30);
    assert!(Float::with_val(BITS, sum - 24).abs() < 1e-30);
}

#[test]
fn vanishing_lambda_is_continuous() {
    let p = WeightParams::from_decimals("2", &[("1", "1e-30")], BITS).unwrap();
    let s = solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL).unwrap();
    let (a, b) = undeformed_endpoints(&num::int(BITS, 2), 5);
    assert!(Float::with_val(BITS, &s.a - &a).abs() < 1e-25);
    assert!(Float::with_val(BITS, &s.b - &b).abs() < 1e-25);
}

#[test]
fn newton_agrees_with_bisection() {
    let s = example();
    let f = endpoint_residuals(&s.params, 10, &s.a, &s.b);
    assert!(f[0].clone().abs() < 1e-30 && f[1].clone().abs() < 1e-30);
    let (a, b) = bisection_endpoints(&s.params, 10);
    assert!(Float::with_val(BITS, &s.a - &a).abs() < 1e-40, "a: {} vs {}", s.a, a);
    assert!(Float::with_val(BITS, &s.b - &b).abs() < 1e-40);
    assert!(s.alternate.is_none());
}

#[test]
fn density_vanishes_at_the_edges_and_is_positive_inside() {
    let s = example();
    let eps = Float::with_val(BITS, 1e-20);
    let near_a = density(&s, &Float::with_val(BITS, &s.a + &eps)).unwrap();
    let near_b = density(&s, &Float::with_val(BITS, &s.b - &eps)).unwrap();
    assert!(near_a < 1e-8 && near_b < 1e-8);
    for (_, psi) in density_samples(&s, 50).unwrap() {
        assert!(psi > 0);
    }
}

#[test]
fn density_matches_integral_form() {
    let s = example();
    let mid = Float::with_val(BITS, &s.a + &s.b) / 2;
    let d = density(&s, &mid).unwrap();
    let q = density_by_integral(&s, &mid).unwrap();
    assert!(d > 0);
    assert!(Float::with_val(BITS, d - q).abs() < 1e-20);
}

#[test]
fn undeformed_checks_pass() {
    let p = WeightParams::classical("2", BITS).unwrap();
    let s = solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL).unwrap();
    let r = check_density(&s).unwrap();
    assert!(r.all_pass(), "{r:?}");
    assert!(r.get("normalization").unwrap().absolute < 1e-25);
}

#[test]
fn deformed_checks_pass() {
    let r = check_density(&example()).unwrap();
    assert!(r.all_pass(), "{r:?}");
    for name in ["normalization", "condition1", "condition2", "lagrange_constancy"] {
        assert!(r.get(name).unwrap().relative < 1e-15, "{name}");
    }
}

#[test]
fn perturbed_endpoint_breaks_normalization() {
    let mut s = example();
    s.b += 0.1;
    let r = check_density(&s).unwrap();
    assert!(!r.get("normalization").unwrap().passed());
    assert!(r.get("normalization").unwrap().absolute > 1e-6);
}

#[test]
fn lagrange_multiplier_tracks_resolved_endpoints() {
    let p = WeightParams::classical("2", BITS).unwrap();
    for n in [5u64, 10] {
        let s = solve_endpoints(&p, n, DEFAULT_SOLVER_TOL).unwrap();
        let (a, b) = undeformed_endpoints(&num::int(BITS, 2), n);
        // Direct arithmetic of the three remaining terms.
        let sum = Float::with_val(BITS, &a + &b);
        let root = Float::with_val(BITS, &a * &b).sqrt();
        let expected = Float::with_val(BITS, &sum / 2)
            - Float::with_val(BITS, Float::with_val(BITS, &sum + Float::with_val(BITS, &root * 2)) / 4).ln() * 2
            - Float::with_val(BITS, Float::with_val(BITS, &b - &a) / 4).ln() * (2 * n);
        assert!(Float::with_val(BITS, lagrange_multiplier(&s) - expected).abs() < 1e-30);
    }
}

#[test]
fn integral_identities_hold() {
    let r = integral_identities(&num::float(BITS, 0.3), &num::float(BITS, 7.5), &num::float(BITS, 1.25)).unwrap();
    assert!(r.all_pass(), "{r:?}");
    assert_eq!(r.len(), 10);
}

#[test]
fn large_n_density_approaches_hard_edge_law() {
    let p = WeightParams::classical("1", BITS).unwrap();
    let n = 10_000u64;
    let s = solve_endpoints(&p, n, DEFAULT_SOLVER_TOL).unwrap();
    for y in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let yf = Float::with_val(BITS, y);
        let x = Float::with_val(BITS, &yf * (4 * n));
        let psi = density(&s, &x).unwrap();
        let lim = hard_edge_density_limit(&yf).unwrap();
        assert!(Float::with_val(BITS, psi - lim).abs() < 1e-3, "y = {y}");
    }
}

use dlag_core::num;
use dlag_core::quadrature::QuadratureSettings;
use dlag_core::report::Verdict;
use dlag_core::scaling::*;
use dlag_core::Float;

const BITS: u32 = 400;

fn n1() -> ScalingBase {
    ScalingBase::from_decimals("1", &["1"], BITS).unwrap()
}

fn s(v: &[f64]) -> Vec<Float> {
    v.iter().map(|x| Float::with_val(BITS, *x)).collect()
}

#[test]
fn sigma_sequence_converges() {
    let seq = build_scaling_sequence(&n1(), &s(&[1.0]), &DEFAULT_N_LIST, &QuadratureSettings::default()).unwrap();
    assert!(seq.failures.is_empty());
    assert!(seq.converging());
    let (_, v) = seq.usable_sigma();
    for w in v.windows(3) {
        let d0 = Float::with_val(BITS, &w[1] - &w[0]).abs();
        let d1 = Float::with_val(BITS, &w[2] - &w[1]).abs();
        assert!(d0 >= d1 * 1.5f64, "differences shrink too slowly");
    }
}

#[test]
fn limit_is_stable_when_the_sequence_is_extended() {
    let base = n1();
    let mut n_list = DEFAULT_N_LIST.to_vec();
    let short = build_scaling_sequence(&base, &s(&[1.0]), &n_list, &QuadratureSettings::default()).unwrap();
    n_list.push(128);
    let long = build_scaling_sequence(&base, &s(&[1.0]), &n_list, &QuadratureSettings::default()).unwrap();
    let a = extrapolate(&short).unwrap();
    let b = extrapolate(&long).unwrap();
    assert!(!a.low_confidence && !b.low_confidence);
    let moved = Float::with_val(BITS, &a.value - &b.value).abs();
    assert!(moved <= a.error, "limit moved by {moved} > estimate {}", a.error);
    assert!(b.error < a.error);
}

#[test]
fn n1_limits_and_painleve_forms_hold_within_error_bars() {
    let base = n1();
    for sv in [0.5, 1.0, 2.0] {
        let r = scaled_pde_residuals(&base, &s(&[sv]), &ScalingConfig::default()).unwrap();
        for name in ["limr_limR[1]", "limR_sigma[1]", "limr_sigma[1]", "scaled_pde_r[1]", "scaled_sigma_pde", "sigma_piii", "scaled_pv_y"] {
            let e = r.get(name).unwrap_or_else(|| panic!("missing {name}"));
            assert_eq!(e.verdict, Verdict::Pass, "s = {sv}, {name}: {e:?}");
            assert!(e.uncertainty.as_ref().unwrap() < &1e-3);
        }
        let note = r.get("limR_sigma[1]").unwrap().note.clone().unwrap();
        assert!(note.contains("+4"), "{note}");
    }
}

#[test]
fn wrong_exponent_in_piii_is_detected() {
    let base = n1();
    let sv = s(&[1.0]);
    let jet = scaled_jet(&base, &sv, &ScalingConfig::default()).unwrap();
    let at = |b: &ScalingBase, v: usize| {
        let t = sigma_piii_terms(b, &sv[0], &jet.sigma[v], &jet.sigma_grad[v][0], &jet.sigma_hess[v][0][0]);
        num::sum(BITS, &t)
    };
    let unc = Float::with_val(BITS, at(&base, 0) - at(&base, 1)).abs();
    let mut wrong = base.clone();
    wrong.alpha = Float::with_val(BITS, 1.001);
    let miss = at(&wrong, 0).abs();
    assert!(miss > unc.clone() * 10, "miss {miss} vs uncertainty {unc}");
}

#[test]
fn n2_r_system_holds_within_error_bars() {
    let base = ScalingBase::from_decimals("1", &["0.5", "0.5"], BITS).unwrap();
    let r = scaled_pde_residuals(&base, &s(&[1.0, 2.0]), &ScalingConfig::default()).unwrap();
    for name in ["scaled_pde_r[1]", "scaled_pde_r[2]", "limr_limR[1]", "limr_limR[2]", "scaled_sigma_pde"] {
        let e = r.get(name).unwrap();
        assert_eq!(e.verdict, Verdict::Pass, "{name}: {e:?}");
    }
    assert!(r.get("sigma_piii").is_none());
}

#[test]
fn delta_operator_agrees_in_both_variables() {
    let r = delta_identity_residual(&n1(), &s(&[1.0]), 8, &ScalingConfig::default()).unwrap();
    assert!(r.all_pass(), "{r:?}");
    let base = ScalingBase::from_decimals("1", &["0.5", "0.5"], BITS).unwrap();
    let r = delta_identity_residual(&base, &s(&[1.0, 2.0]), 8, &ScalingConfig::default()).unwrap();
    assert!(r.all_pass(), "{r:?}");
}

#[test]
fn csv_lists_every_built_degree() {
    let seq = build_scaling_sequence(&n1(), &s(&[1.0]), &[4, 8, 16], &QuadratureSettings::default()).unwrap();
    let mut buf = Vec::new();
    seq.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,sigma,R_1,r_1/n");
    assert_eq!(lines.len(), 4);
}

//! Ladder-operator auxiliaries `R_{n,k}`, `r_{n,k}`, the coefficient functions
//! `A_n(z)`, `B_n(z)`, and residuals of the compatibility conditions.

use std::io::Write;

use rayon::prelude::*;
use rug::Float;

use crate::error::{Error, Result};
use crate::num;
use crate::orthopoly::{Measure, OPTable};
use crate::quadrature::QuadratureRule;
use crate::report::ResidualReport;
use crate::weights::WeightParams;

/// `R[n][k]`, `r[n][k]` for `n = 0..=n_max`, `k = 0..N` (zero-based `k`).
#[derive(Clone, Debug)]
pub struct AuxTable {
    n_max: usize,
    big_r: Vec<Vec<Float>>,
    small_r: Vec<Vec<Float>>,
    params: WeightParams,
}

impl AuxTable {
    pub fn from_parts(params: WeightParams, big_r: Vec<Vec<Float>>, small_r: Vec<Vec<Float>>) -> Result<Self> {
        if big_r.is_empty() || big_r.len() != small_r.len() {
            return Err(Error::Parameter("R and r tables must be non-empty and of equal length".into()));
        }
        let n_deg = params.len();
        if big_r.iter().chain(&small_r).any(|row| row.len() != n_deg) {
            return Err(Error::Parameter(format!("every auxiliary row must have {n_deg} entries")));
        }
        Ok(Self { n_max: big_r.len() - 1, big_r, small_r, params })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn precision_bits(&self) -> u32 {
        self.params.precision_bits()
    }

    pub fn big_r(&self, n: usize) -> &[Float] {
        &self.big_r[n]
    }

    pub fn small_r(&self, n: usize) -> &[Float] {
        &self.small_r[n]
    }

    /// `Σ_k R_{n,k}`.
    pub fn sum_big_r(&self, n: usize) -> Float {
        num::sum(self.precision_bits(), &self.big_r[n])
    }

    /// `Σ_k r_{n,k}`.
    pub fn sum_small_r(&self, n: usize) -> Float {
        num::sum(self.precision_bits(), &self.small_r[n])
    }

    /// Writes `n,k,R,r` rows (one-based `k`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "k", "R", "r"])?;
        for n in 0..=self.n_max {
            for k in 0..self.params.len() {
                w.write_record([
                    n.to_string(),
                    (k + 1).to_string(),
                    num::to_decimal(&self.big_r[n][k]),
                    num::to_decimal(&self.small_r[n][k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::Parameter(format!("degree {n} exceeds n_max = {}", self.n_max)));
        }
        Ok(())
    }
}

/// Auxiliaries by quadrature of their defining integrals.
pub fn compute_aux(params: &WeightParams, table: &OPTable, rule: &QuadratureRule) -> Result<AuxTable> {
    let measure = Measure::new(params, rule)?;
    compute_aux_on(params, table, &measure)
}

/// As [`compute_aux`] on a precomputed measure.
pub fn compute_aux_on(params: &WeightParams, table: &OPTable, measure: &Measure) -> Result<AuxTable> {
    let prec = params.precision_bits();
    let n_max = table.n_max();
    let values = poly_values(table, &measure.nodes);
    let n_def = params.len();

    let pairs: Vec<(usize, usize)> = (0..=n_max).flat_map(|n| (0..n_def).map(move |k| (n, k))).collect();
    let results: Vec<(Float, Float)> = pairs
        .par_iter()
        .map(|&(n, k)| {
            let lambda = params.lambda(k);
            if lambda.is_zero() {
                return (num::zero(prec), num::zero(prec));
            }
            let t = params.t(k);
            let inv: Vec<Float> =
                measure.nodes.iter().map(|x| Float::with_val(prec, x + t).recip()).collect();
            let big = measure.sum(prec, |i, _| Float::with_val(prec, values[n][i].square_ref()) * &inv[i]);
            let big = Float::with_val(prec, lambda * big) / &table.h()[n];
            let small = if n == 0 {
                num::zero(prec)
            } else {
                let s = measure.sum(prec, |i, _| Float::with_val(prec, &values[n][i] * &values[n - 1][i]) * &inv[i]);
                Float::with_val(prec, lambda * s) / &table.h()[n - 1]
            };
            (big, small)
        })
        .collect();

    let mut big_r = vec![Vec::with_capacity(n_def); n_max + 1];
    let mut small_r = vec![Vec::with_capacity(n_def); n_max + 1];
    for ((n, _), (b, s)) in pairs.into_iter().zip(results) {
        if !b.is_finite() || !s.is_finite() {
            return Err(Error::PrecisionExhausted { n, detail: "non-finite auxiliary quantity".into() });
        }
        big_r[n].push(b);
        small_r[n].push(s);
    }
    AuxTable::from_parts(params.clone(), big_r, small_r)
}

/// `P_n(x_i)` for `n = 0..=n_max` at every node.
pub fn poly_values(table: &OPTable, nodes: &[Float]) -> Vec<Vec<Float>> {
    let prec = table.precision_bits();
    let mut out: Vec<Vec<Float>> = Vec::with_capacity(table.n_max() + 1);
    out.push(vec![num::one(prec); nodes.len()]);
    for n in 0..table.n_max() {
        let next: Vec<Float> = nodes
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut v = Float::with_val(prec, x - &table.alpha_rec()[n]) * &out[n][i];
                if n > 0 {
                    v -= Float::with_val(prec, &table.beta_rec()[n] * &out[n - 1][i]);
                }
                v
            })
            .collect();
        out.push(next);
    }
    out
}

/// `A_n(z)` and `B_n(z)` from their partial-fraction forms.
pub fn eval_ladder_coeffs(aux: &AuxTable, n: usize, z: &Float) -> Result<(Float, Float)> {
    aux.check_degree(n)?;
    let params = aux.params();
    params.check_off_poles(z)?;
    let prec = aux.precision_bits();
    let inv_z = Float::with_val(prec, z.recip_ref());
    let mut a = Float::with_val(prec, 1 - aux.sum_big_r(n)) * &inv_z;
    let nf = num::int(prec, n as i64);
    let mut b = -(Float::with_val(prec, &nf + aux.sum_small_r(n)) * &inv_z);
    for k in 0..params.len() {
        let inv = Float::with_val(prec, z + params.t(k)).recip();
        a += Float::with_val(prec, &aux.big_r[n][k] * &inv);
        b += Float::with_val(prec, &aux.small_r[n][k] * &inv);
    }
    Ok((a, b))
}

/// Sample points for compatibility checks: midpoints between consecutive poles
/// on the negative axis, then `1`, `n`, `10 n` (duplicates removed).
pub fn default_z_samples(params: &WeightParams, n: usize) -> Vec<Float> {
    let prec = params.precision_bits();
    let mut poles: Vec<Float> = std::iter::once(num::zero(prec))
        .chain(params.shifts().into_iter().map(|t| -t))
        .collect();
    poles.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out: Vec<Float> = poles
        .windows(2)
        .map(|w| Float::with_val(prec, &w[0] + &w[1]) / 2u32)
        .collect();
    for v in [1, n.max(1), 10 * n.max(1)] {
        let f = num::int(prec, v as i64);
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Residuals of (S1), (S2), (S2') and their coefficient equations at `(n, z)`.
///
/// Needs `1 <= n <= n_max - 1` in both tables.
pub fn compatibility_residuals(table: &OPTable, aux: &AuxTable, n: usize, z: &Float, tol: f64) -> Result<ResidualReport> {
    let n_max = table.n_max().min(aux.n_max());
    if n < 1 || n + 1 > n_max {
        return Err(Error::Parameter(format!("compatibility checks need 1 <= n <= {}, got {n}", n_max.saturating_sub(1))));
    }
    let params = aux.params();
    params.check_off_poles(z)?;
    let prec = aux.precision_bits();
    let mut report = ResidualReport::new();

    let vp = params.potential_derivative_off_poles(z)?;
    let (a_n, b_n) = eval_ladder_coeffs(aux, n, z)?;
    let (a_next, b_next) = eval_ladder_coeffs(aux, n + 1, z)?;
    let (a_prev, _) = eval_ladder_coeffs(aux, n - 1, z)?;
    let al = &table.alpha_rec()[n];
    let be = &table.beta_rec()[n];
    let be_next = &table.beta_rec()[n + 1];
    let z_al = Float::with_val(prec, z - al);

    report.record_terms(
        "s1",
        &[b_next.clone(), b_n.clone(), -Float::with_val(prec, &z_al * &a_n), vp.clone()],
        tol,
    );
    report.record_terms(
        "s2",
        &[
            num::one(prec),
            Float::with_val(prec, &z_al * Float::with_val(prec, &b_next - &b_n)),
            -Float::with_val(prec, be_next * &a_next),
            Float::with_val(prec, be * &a_prev),
        ],
        tol,
    );
    let mut sum_a = num::zero(prec);
    for j in 0..n {
        sum_a += eval_ladder_coeffs(aux, j, z)?.0;
    }
    report.record_terms(
        "s2p",
        &[
            Float::with_val(prec, b_n.square_ref()),
            Float::with_val(prec, &vp * &b_n),
            sum_a,
            -(Float::with_val(prec, be * &a_n) * &a_prev),
        ],
        tol,
    );

    let alpha = params.alpha();
    let nf = num::int(prec, n as i64);
    let sr_n = aux.sum_small_r(n);
    let sr_next = aux.sum_small_r(n + 1);
    let s_big_n = aux.sum_big_r(n);
    let s_big_prev = aux.sum_big_r(n - 1);

    report.record_terms(
        "s1.1",
        &[
            Float::with_val(prec, 2 * n + 1),
            sr_next.clone(),
            sr_n.clone(),
            -Float::with_val(prec, al * Float::with_val(prec, 1 - &s_big_n)),
            alpha.clone(),
        ],
        tol,
    );
    let mut s21 = vec![
        al.clone(),
        Float::with_val(prec, al * Float::with_val(prec, &sr_next - &sr_n)),
        -be_next.clone(),
        be.clone(),
    ];
    for k in 0..params.len() {
        s21.push(Float::with_val(prec, be_next * &aux.big_r[n + 1][k]));
        s21.push(-Float::with_val(prec, be * &aux.big_r[n - 1][k]));
    }
    report.record_terms("s2.1", &s21, tol);
    report.record_terms(
        "s2p.1",
        &[
            (Float::with_val(prec, &nf + alpha) + &sr_n) * Float::with_val(prec, &nf + &sr_n),
            -(Float::with_val(prec, be * Float::with_val(prec, 1 - &s_big_n)) * Float::with_val(prec, 1 - &s_big_prev)),
        ],
        tol,
    );
    for k in 0..params.len() {
        let (t, l) = (params.t(k), params.lambda(k));
        let t_al = Float::with_val(prec, t + al);
        let (rn, rnext) = (&aux.small_r[n][k], &aux.small_r[n + 1][k]);
        report.record_terms(
            format!("s1.2[{}]", k + 1),
            &[rnext.clone(), rn.clone(), -l.clone(), Float::with_val(prec, &t_al * &aux.big_r[n][k])],
            tol,
        );
        report.record_terms(
            format!("s2.2[{}]", k + 1),
            &[
                -Float::with_val(prec, &t_al * Float::with_val(prec, rnext - rn)),
                -Float::with_val(prec, be_next * &aux.big_r[n + 1][k]),
                Float::with_val(prec, be * &aux.big_r[n - 1][k]),
            ],
            tol,
        );
        report.record_terms(
            format!("s2p.2[{}]", k + 1),
            &[
                Float::with_val(prec, rn.square_ref()),
                -Float::with_val(prec, l * rn),
                -(Float::with_val(prec, be * &aux.big_r[n][k]) * &aux.big_r[n - 1][k]),
            ],
            tol,
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{build_op_table, eval_poly};
    use crate::quadrature::{build_rule, integrate, rule_for, QuadratureSettings};

    const PREC: u32 = 333;

    fn setup(alpha: &str, pairs: &[(&str, &str)], n_max: usize) -> (OPTable, AuxTable, QuadratureRule) {
        let p = WeightParams::from_decimals(alpha, pairs, PREC).unwrap();
        let rule = rule_for(&p, n_max, &QuadratureSettings::default()).unwrap();
        let t = build_op_table(&p, n_max, &rule).unwrap();
        let a = compute_aux(&p, &t, &rule).unwrap();
        (t, a, rule)
    }

    #[test]
    fn undeformed_weight_has_vanishing_auxiliaries() {
        let (t, a, _) = setup("1", &[("1", "0"), ("2", "0")], 5);
        for n in 0..=5 {
            assert!(a.big_r(n).iter().chain(a.small_r(n)).all(|v| v.is_zero()));
        }
        let z = num::float(PREC, 2.5);
        let (az, bz) = eval_ladder_coeffs(&a, 3, &z).unwrap();
        assert!(Float::with_val(PREC, az * &z - 1u32).abs() < 1e-95);
        assert!(Float::with_val(PREC, bz * &z + 3u32).abs() < 1e-95);
        for n in 1..=4 {
            for z in default_z_samples(t.params(), n) {
                let r = compatibility_residuals(&t, &a, n, &z, 1e-30).unwrap();
                assert!(r.worst_relative() < 1e-80, "n = {n}");
            }
        }
    }

    #[test]
    fn auxiliary_invariants() {
        let (_, a, _) = setup("1.5", &[("0.4", "0.5"), ("1.1", "-0.3")], 6);
        for k in 0..2 {
            assert!(a.small_r(0)[k].is_zero());
        }
        for n in 0..=6 {
            assert!(a.big_r(n)[0] > 0);
            assert!(a.big_r(n)[1] < 0);
        }
    }

    #[test]
    fn r0_against_independent_rule() {
        let (_, a, _) = setup("1", &[("1", "1")], 3);
        // R_{0,1} = ∫ y e^{-y} dy / ∫ y (y+1) e^{-y} dy = 1/3, checked with a 400-node rule.
        let rule = build_rule(&num::one(PREC), 400, PREC).unwrap();
        let num_ = integrate(&rule, |_| num::one(PREC)).unwrap();
        let den = integrate(&rule, |y| Float::with_val(PREC, y + 1u32)).unwrap();
        let expected = num_ / den;
        assert!(Float::with_val(PREC, &a.big_r(0)[0] - &expected).abs() < 1e-30);
        assert!((Float::with_val(PREC, &a.big_r(0)[0] * 3u32) - 1u32).abs() < 1e-90);
    }

    #[test]
    fn coefficients_match_defining_integrals() {
        let (t, a, _) = setup("1", &[("1", "1")], 4);
        let p = t.params().clone();
        let n = 2;
        let z = num::int(PREC, 5);
        // The kernel (v'(z) - v'(y))/(z - y) = α/(zy) + Σ λ/((z+t)(y+t)); the 1/y part
        // is integrated against a Laguerre(α-1) rule.
        let shifted = build_rule(&Float::with_val(PREC, p.alpha() - 1u32), 60, PREC).unwrap();
        let base = build_rule(p.alpha(), 60, PREC).unwrap();
        let kernel = |y: &Float, f: &dyn Fn(&Float) -> Float| -> (Float, Float) {
            let with_y = f(y) * p.deformation_factor(y);
            let mut tail = num::zero(PREC);
            for d in p.deformations() {
                let den = Float::with_val(PREC, &z + &d.t) * Float::with_val(PREC, y + &d.t);
                tail += Float::with_val(PREC, &d.lambda / den);
            }
            (with_y.clone(), with_y * tail)
        };
        let pn2 = |y: &Float| eval_poly(&t, n, y).unwrap().square();
        let pnm = |y: &Float| eval_poly(&t, n, y).unwrap() * eval_poly(&t, n - 1, y).unwrap();
        let direct = |f: &dyn Fn(&Float) -> Float, h: &Float| -> Float {
            let first = integrate(&shifted, |y| kernel(y, f).0).unwrap() * p.alpha() / &z;
            let second = integrate(&base, |y| kernel(y, f).1).unwrap();
            (first + second) / h
        };
        let a_direct = direct(&pn2, &t.h()[n]);
        let b_direct = direct(&pnm, &t.h()[n - 1]);
        let (az, bz) = eval_ladder_coeffs(&a, n, &z).unwrap();
        assert!(Float::with_val(PREC, &az - &a_direct).abs() < 1e-30);
        assert!(Float::with_val(PREC, &bz - &b_direct).abs() < 1e-30);
    }

    #[test]
    fn z_times_a_tends_to_one() {
        let (_, a, _) = setup("1", &[("0.5", "0.7"), ("1.5", "0.3")], 4);
        let z = num::pow10(PREC, 40);
        let (az, _) = eval_ladder_coeffs(&a, 3, &z).unwrap();
        assert!(Float::with_val(PREC, az * &z - 1u32).abs() < 1e-35);
    }

    #[test]
    fn poles_are_rejected() {
        let (_, a, _) = setup("1", &[("1", "1")], 3);
        assert!(matches!(eval_ladder_coeffs(&a, 1, &num::int(PREC, -1)), Err(Error::Domain(_))));
        assert!(matches!(eval_ladder_coeffs(&a, 1, &num::zero(PREC)), Err(Error::Domain(_))));
    }

    #[test]
    fn compatibility_n1_and_n2() {
        let (t, a, _) = setup("1", &[("1", "1")], 6);
        let r = compatibility_residuals(&t, &a, 3, &num::float(PREC, 2.7), 1e-30).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures());
        assert_eq!(r.len(), 9);

        let (t, a, _) = setup("1.5", &[("0.4", "0.5"), ("1.1", "-0.3")], 7);
        let r = compatibility_residuals(&t, &a, 5, &num::float(PREC, -0.2), 1e-30).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures());
        assert_eq!(r.len(), 12);
    }

    #[test]
    fn compatibility_range_is_checked() {
        let (t, a, _) = setup("1", &[("1", "1")], 4);
        let z = num::int(PREC, 2);
        assert!(compatibility_residuals(&t, &a, 0, &z, 1e-30).is_err());
        assert!(compatibility_residuals(&t, &a, 4, &z, 1e-30).is_err());
    }

    #[test]
    fn default_samples_probe_between_poles() {
        let p = WeightParams::from_decimals("1", &[("0.5", "1"), ("1.5", "1")], PREC).unwrap();
        let z: Vec<f64> = default_z_samples(&p, 3).iter().map(|v| v.to_f64()).collect();
        assert_eq!(z, vec![-0.25, -1.0, 1.0, 3.0, 30.0]);
        let p = WeightParams::from_decimals("1", &[("1", "1")], PREC).unwrap();
        assert_eq!(default_z_samples(&p, 1).len(), 3);
    }
}

//! Monic orthogonal polynomials of the deformed weight: norms `h_n`, recurrence
//! coefficients `α_n`, `β_n`, sub-leading coefficients `p(n)` and Hankel
//! determinants `D_n`, built by the Stieltjes procedure on a discretized measure.

use std::io::Write;

use rayon::prelude::*;
use rug::Float;

use crate::error::{Error, Result};
use crate::num;
use crate::quadrature::{check_alpha, QuadratureRule};
use crate::weights::WeightParams;

/// Quadrature nodes with the full weight `w(x_i)`-carrying masses
/// (base rule weight times the deformation factor).
#[derive(Clone, Debug)]
pub struct Measure {
    pub nodes: Vec<Float>,
    pub masses: Vec<Float>,
}

/// Working precision (bits) that keeps the moment-free recurrence accurate up
/// to degree `n_max`.
pub fn recommended_precision(n_max: usize) -> u32 {
    333 + 20 * n_max as u32
}

impl Measure {
    pub fn new(params: &WeightParams, rule: &QuadratureRule) -> Result<Self> {
        check_alpha(params, rule)?;
        let masses: Vec<Float> = rule
            .nodes()
            .par_iter()
            .zip(rule.weights().par_iter())
            .map(|(x, w)| Float::with_val(params.precision_bits(), w * params.deformation_factor(x)))
            .collect();
        if let Some(i) = masses.iter().position(|m| !m.is_finite()) {
            return Err(Error::Numeric(format!("weight is not finite at quadrature node {i}")));
        }
        Ok(Self { nodes: rule.nodes().to_vec(), masses })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ m_i f(x_i)` at precision `prec`.
    pub fn sum<F: Fn(usize, &Float) -> Float>(&self, prec: u32, f: F) -> Float {
        let mut acc = num::zero(prec);
        for (i, (x, m)) in self.nodes.iter().zip(&self.masses).enumerate() {
            acc += Float::with_val(prec, m * f(i, x));
        }
        acc
    }
}

#[derive(Clone, Debug)]
pub struct OPTable {
    n_max: usize,
    h: Vec<Float>,
    alpha_rec: Vec<Float>,
    beta_rec: Vec<Float>,
    p1: Vec<Float>,
    d: Vec<Float>,
    params: WeightParams,
}

/// Builds the table for degrees `0..=n_max`.
///
/// `beta_rec[0]` is stored as 0 (the `β_0 P_{-1} = 0` convention) and `p1` has
/// one extra entry `p(n_max + 1)` so that `α_n = p(n) - p(n+1)` holds on the
/// whole range.
pub fn build_op_table(params: &WeightParams, n_max: usize, rule: &QuadratureRule) -> Result<OPTable> {
    let measure = Measure::new(params, rule)?;
    build_op_table_on(params, n_max, &measure)
}

/// As [`build_op_table`] on a precomputed measure.
pub fn build_op_table_on(params: &WeightParams, n_max: usize, measure: &Measure) -> Result<OPTable> {
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    if n_max >= measure.len() {
        return Err(Error::Parameter(format!(
            "n_max = {n_max} needs more than {} quadrature nodes",
            measure.len()
        )));
    }
    let prec = params.precision_bits();
    let recommended = recommended_precision(n_max);
    if prec < recommended {
        log::debug!("precision_bits = {prec} is below the recommended {recommended} for n_max = {n_max}");
    }

    let m = measure.len();
    let mut prev: Vec<Float> = vec![num::zero(prec); m];
    let mut cur: Vec<Float> = vec![num::one(prec); m];
    let mut h = Vec::with_capacity(n_max + 1);
    let mut alpha_rec = Vec::with_capacity(n_max + 1);
    let mut beta_rec = Vec::with_capacity(n_max + 1);

    for n in 0..=n_max {
        let hn = measure.sum(prec, |i, _| Float::with_val(prec, cur[i].square_ref()));
        if !hn.is_finite() || hn <= 0 {
            return Err(Error::PrecisionExhausted {
                n,
                detail: format!("h_{n} = {} is not positive", num::to_decimal_digits(&hn, 10)),
            });
        }
        let xn = measure.sum(prec, |i, x| Float::with_val(prec, cur[i].square_ref()) * x);
        let an = Float::with_val(prec, &xn / &hn);
        let bn = if n == 0 { num::zero(prec) } else { Float::with_val(prec, &hn / &h[n - 1]) };
        if !an.is_finite() || !bn.is_finite() {
            return Err(Error::PrecisionExhausted { n, detail: "non-finite recurrence coefficient".into() });
        }
        if n < n_max {
            let next: Vec<Float> = (0..m)
                .map(|i| {
                    let mut v = Float::with_val(prec, &measure.nodes[i] - &an) * &cur[i];
                    if n > 0 {
                        v -= Float::with_val(prec, &bn * &prev[i]);
                    }
                    v
                })
                .collect();
            prev = std::mem::replace(&mut cur, next);
        }
        h.push(hn);
        alpha_rec.push(an);
        beta_rec.push(bn);
    }

    let mut p1 = Vec::with_capacity(n_max + 2);
    p1.push(num::zero(prec));
    for n in 0..=n_max {
        let next = Float::with_val(prec, &p1[n] - &alpha_rec[n]);
        p1.push(next);
    }
    let mut d = Vec::with_capacity(n_max + 1);
    d.push(num::one(prec));
    for n in 1..=n_max {
        let next = Float::with_val(prec, &d[n - 1] * &h[n - 1]);
        d.push(next);
    }

    Ok(OPTable { n_max, h, alpha_rec, beta_rec, p1, d, params: params.clone() })
}

impl OPTable {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn precision_bits(&self) -> u32 {
        self.params.precision_bits()
    }

    pub fn h(&self) -> &[Float] {
        &self.h
    }

    pub fn alpha_rec(&self) -> &[Float] {
        &self.alpha_rec
    }

    /// `β_n` with `β_0 = 0`.
    pub fn beta_rec(&self) -> &[Float] {
        &self.beta_rec
    }

    /// `p(n)` for `n = 0..=n_max + 1`.
    pub fn p1(&self) -> &[Float] {
        &self.p1
    }

    /// `D_n` for `n = 0..=n_max`.
    pub fn d(&self) -> &[Float] {
        &self.d
    }

    /// `ln D_n`, summed from `ln h_k` to avoid forming huge products.
    pub fn ln_hankel_det(&self, n: usize) -> Result<Float> {
        self.check_degree(n)?;
        Ok(num::sum(self.precision_bits(), self.h[..n].iter().map(|h| h.clone().ln()).collect::<Vec<_>>().iter()))
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::Parameter(format!("degree {n} exceeds n_max = {}", self.n_max)));
        }
        Ok(())
    }

    /// Writes `n,h,alpha_rec,beta_rec,p1,D` rows as decimal strings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "h", "alpha_rec", "beta_rec", "p1", "D"])?;
        for n in 0..=self.n_max {
            w.write_record([
                n.to_string(),
                num::to_decimal(&self.h[n]),
                num::to_decimal(&self.alpha_rec[n]),
                num::to_decimal(&self.beta_rec[n]),
                num::to_decimal(&self.p1[n]),
                num::to_decimal(&self.d[n]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Monic `P_n(x)` by forward recurrence.
pub fn eval_poly(table: &OPTable, n: usize, x: &Float) -> Result<Float> {
    table.check_degree(n)?;
    let prec = table.precision_bits();
    let mut prev = num::zero(prec);
    let mut cur = num::one(prec);
    for k in 0..n {
        let mut next = Float::with_val(prec, x - &table.alpha_rec[k]) * &cur;
        if k > 0 {
            next -= Float::with_val(prec, &table.beta_rec[k] * &prev);
        }
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `D_n = ∏_{k<n} h_k`, with `D_0 = 1`.
pub fn hankel_det(table: &OPTable, n: usize) -> Result<Float> {
    table.check_degree(n)?;
    Ok(table.d[n].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_rule, integrate, rule_for, QuadratureSettings};

    const PREC: u32 = 333;

    fn rel(a: &Float, b: &Float) -> f64 {
        (Float::with_val(PREC, a - b) / b).abs().to_f64()
    }

    fn factorial(n: u32) -> Float {
        Float::with_val(PREC, f64::from(n) + 1.0).gamma()
    }

    fn table(alpha: &str, pairs: &[(&str, &str)], n_max: usize) -> (OPTable, QuadratureRule) {
        let p = WeightParams::from_decimals(alpha, pairs, PREC).unwrap();
        let rule = rule_for(&p, n_max, &QuadratureSettings::default()).unwrap();
        (build_op_table(&p, n_max, &rule).unwrap(), rule)
    }

    /// Determinant by fraction-free (Bareiss) elimination.
    fn bareiss(mut a: Vec<Vec<Float>>) -> Float {
        let n = a.len();
        let prec = a[0][0].prec();
        let mut prev = num::one(prec);
        let mut sign = 1;
        for k in 0..n.saturating_sub(1) {
            if a[k][k].is_zero() {
                let swap = (k + 1..n).find(|&i| !a[i][k].is_zero()).expect("singular");
                a.swap(k, swap);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = Float::with_val(prec, &a[i][j] * &a[k][k]) - Float::with_val(prec, &a[i][k] * &a[k][j]);
                    a[i][j] = v / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        let det = a[n - 1][n - 1].clone();
        if sign < 0 {
            -det
        } else {
            det
        }
    }

    #[test]
    fn classical_laguerre_closed_forms() {
        let (t, _) = table("1", &[], 20);
        for n in 0..=20usize {
            let nn = n as u32;
            let h = factorial(nn) * Float::with_val(PREC, f64::from(nn) + 2.0).gamma();
            assert!(rel(&t.h()[n], &h) < 1e-80, "h_{n}");
            let a = Float::with_val(PREC, 2 * n + 2);
            assert!(Float::with_val(PREC, &t.alpha_rec()[n] - &a).abs() < 1e-80);
            let b = Float::with_val(PREC, n * (n + 1));
            assert!(Float::with_val(PREC, &t.beta_rec()[n] - &b).abs() < 1e-80);
        }
    }

    #[test]
    fn degree_zero_conventions() {
        let (t, rule) = table("1", &[("1", "1")], 3);
        assert!(t.p1()[0].is_zero());
        assert_eq!(hankel_det(&t, 0).unwrap(), 1);
        let mu0 = crate::quadrature::moment(t.params(), 0, &rule).unwrap();
        assert!(rel(&hankel_det(&t, 1).unwrap(), &mu0) < 1e-90);
        assert!(hankel_det(&t, 4).is_err());
    }

    #[test]
    fn hankel_determinants_of_laguerre_weight() {
        let (t, _) = table("0", &[], 4);
        assert!(Float::with_val(PREC, hankel_det(&t, 2).unwrap() - 1u32).abs() < 1e-80);
        assert!(Float::with_val(PREC, hankel_det(&t, 3).unwrap() - 4u32).abs() < 1e-80);
    }

    #[test]
    fn product_formula_matches_moment_determinant() {
        let (t, rule) = table("1", &[("0.5", "2")], 10);
        let p = t.params().clone();
        let mu: Vec<Float> =
            (0..20u32).map(|j| crate::quadrature::moment(&p, j, &rule).unwrap()).collect();
        for n in 1..=10usize {
            let m: Vec<Vec<Float>> = (0..n).map(|i| (0..n).map(|j| mu[i + j].clone()).collect()).collect();
            let det = bareiss(m);
            assert!(rel(&hankel_det(&t, n).unwrap(), &det) < 1e-40, "n = {n}");
        }
    }

    #[test]
    fn table_invariants() {
        let (t, _) = table("1", &[("0.5", "0.7"), ("1.5", "0.3")], 8);
        let prec = t.precision_bits();
        for n in 1..=8 {
            let beta = Float::with_val(prec, &t.h()[n] / &t.h()[n - 1]);
            assert!(rel(&t.beta_rec()[n], &beta) < 1e-90);
            let sum = num::sum(prec, &t.alpha_rec()[..n]);
            assert!(Float::with_val(prec, sum + &t.p1()[n]).abs() < 1e-80);
            let d = Float::with_val(prec, &t.d()[n - 1] * &t.h()[n - 1]);
            assert!(rel(&t.d()[n], &d) < 1e-90);
        }
    }

    #[test]
    fn eval_poly_low_degrees_and_orthogonality() {
        let (t, rule) = table("1", &[("1", "1")], 5);
        let x = num::float(PREC, 2.0);
        assert_eq!(eval_poly(&t, 0, &x).unwrap(), 1);
        let p1 = eval_poly(&t, 1, &x).unwrap();
        assert_eq!(p1, Float::with_val(PREC, &x - &t.alpha_rec()[0]));
        let params = t.params().clone();
        let inner = integrate(&rule, |y| {
            eval_poly(&t, 3, y).unwrap() * eval_poly(&t, 2, y).unwrap() * params.deformation_factor(y)
        })
        .unwrap();
        assert!(inner.abs() < 1e-30);
        assert!(eval_poly(&t, 6, &x).is_err());
    }

    #[test]
    fn orthogonality_and_christoffel_darboux() {
        let (t, rule) = table("1.5", &[("0.4", "0.5"), ("1.1", "-0.3")], 8);
        let measure = Measure::new(t.params(), &rule).unwrap();
        let prec = t.precision_bits();
        let vals: Vec<Vec<Float>> = (0..=8)
            .map(|n| measure.nodes.iter().map(|x| eval_poly(&t, n, x).unwrap()).collect())
            .collect();
        let tol = 10f64.powf(-0.25 * f64::from(prec));
        for a in 0..=8 {
            for b in 0..a {
                let ip = measure.sum(prec, |i, _| Float::with_val(prec, &vals[a][i] * &vals[b][i]));
                let norm = Float::with_val(prec, &t.h()[a] * &t.h()[b]).sqrt();
                assert!((ip / norm).abs() < tol, "<P_{a}, P_{b}>");
            }
        }
        let (x, y) = (num::float(prec, 0.37), num::float(prec, 3.9));
        let n = 7;
        let mut lhs = num::zero(prec);
        for k in 0..n {
            lhs += eval_poly(&t, k, &x).unwrap() * eval_poly(&t, k, &y).unwrap() / &t.h()[k];
        }
        let rhs = (eval_poly(&t, n, &x).unwrap() * eval_poly(&t, n - 1, &y).unwrap()
            - eval_poly(&t, n, &y).unwrap() * eval_poly(&t, n - 1, &x).unwrap())
            / (Float::with_val(prec, &t.h()[n - 1] * Float::with_val(prec, &x - &y)));
        assert!(rel(&lhs, &rhs) < tol);
    }

    #[test]
    fn norms_spread_monotonically_with_degree() {
        let (t, _) = table("1", &[("1", "1")], 10);
        let spread: Vec<f64> = (0..=10).map(|n| (t.h()[n].to_f64() / t.h()[0].to_f64()).log10()).collect();
        assert!(spread.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        let p = WeightParams::classical("1", PREC).unwrap();
        let rule = build_rule(p.alpha(), 4, PREC).unwrap();
        assert!(matches!(build_op_table(&p, 6, &rule), Err(Error::Parameter(_))));
    }

    #[test]
    fn csv_has_one_row_per_degree() {
        let (t, _) = table("1", &[], 3);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("n,h,alpha_rec,beta_rec,p1,D"));
    }
}

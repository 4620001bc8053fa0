//! The difference system for `(R_{n,k}, r_{n,k})` iterated in `n`, and the closed
//! forms of `α_n`, `β_n`, `p(n)` and `σ_n` in terms of the auxiliaries.

use std::io::Write;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::AuxTable;
use crate::num;
use crate::orthopoly::OPTable;
use crate::report::ResidualReport;
use crate::weights::WeightParams;

/// Denominators below this magnitude make a closed form degenerate.
pub const DEGENERACY_GUARD: f64 = 1e-10;

/// Which exponent enters the `r_{n,1}(r_{n,1} - λ)` denominator of the
/// `k >= 2` update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum De3Variant {
    /// `r_{n,1}(r_{n,1} - λ_k)`.
    AsPrinted,
    /// `r_{n,1}(r_{n,1} - λ_1)`, the form obtained by dividing the `k`-th by the
    /// first quadratic relation `r^2 - λ r = β_n R_n R_{n-1}`.
    ReferenceLambda,
}

impl std::str::FromStr for De3Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" | "as_printed" => Ok(Self::AsPrinted),
            "lambda1" | "reference_lambda" => Ok(Self::ReferenceLambda),
            other => Err(Error::Parameter(format!("unknown de3 variant '{other}' (expected printed or lambda1)"))),
        }
    }
}

/// Result of iterating the difference system.
#[derive(Clone, Debug)]
pub struct Iteration {
    pub aux: AuxTable,
    /// `α_n` from the auxiliary formula, `n = 0..=n_max`.
    pub alpha_rec: Vec<Float>,
    /// `β_n` used at each step, `n = 0..=n_max` (`β_0 = 0`).
    pub beta_rec: Vec<Float>,
}

/// Division threshold `10^{-0.24 · precision_bits}` for the iteration.
pub fn breakdown_threshold(precision_bits: u32) -> Float {
    num::pow10(precision_bits, -((0.24 * f64::from(precision_bits)).round() as i32))
}

/// Iterates the difference system from `R_{0,k} = R0[k]`, `r_{0,k} = 0`.
pub fn iterate_difference_system(
    params: &WeightParams,
    r0: &[Float],
    n_max: usize,
    variant: De3Variant,
) -> Result<AuxTable> {
    Ok(iterate_with_coefficients(params, r0, n_max, variant)?.aux)
}

/// As [`iterate_difference_system`], also returning the `α_n`, `β_n` sequences.
///
/// Each step takes `r_{n+1}` from `r_{n+1,k} = λ_k - (t_k + α_n) R_{n,k} - r_{n,k}`,
/// then `β_{n+1}` from the `z^{-2}` and `(z + t_k)^{-2}` coefficient equations of
/// (S2') expressed through `R_n` (so it is available before `R_{n+1}`), then
/// `R_{n+1,1}` from `r^2 - λ r = β R R_{prev}` and `R_{n+1,k}`, `k >= 2`, from the
/// ratio form. The first index with `λ_k != 0` plays the role of `k = 1`; indices
/// with `λ_k = 0` stay identically zero.
pub fn iterate_with_coefficients(
    params: &WeightParams,
    r0: &[Float],
    n_max: usize,
    variant: De3Variant,
) -> Result<Iteration> {
    let n_def = params.len();
    if r0.len() != n_def {
        return Err(Error::Parameter(format!("R0 must have {n_def} entries, got {}", r0.len())));
    }
    let prec = params.precision_bits();
    let guard = breakdown_threshold(prec);
    let alpha = params.alpha();
    let reference = (0..n_def).find(|&k| !params.lambda(k).is_zero());

    let mut big_r: Vec<Vec<Float>> = vec![r0.iter().map(|v| Float::with_val(prec, v)).collect()];
    let mut small_r: Vec<Vec<Float>> = vec![vec![num::zero(prec); n_def]];
    let mut alpha_rec = vec![alpha_from_row(params, &big_r[0], 0)];
    let mut beta_rec = vec![num::zero(prec)];

    for n in 0..n_max {
        let m = n + 1;
        let next_r: Vec<Float> = (0..n_def)
            .map(|k| {
                let t_al = Float::with_val(prec, params.t(k) + &alpha_rec[n]);
                Float::with_val(prec, params.lambda(k) - Float::with_val(prec, &t_al * &big_r[n][k])) - &small_r[n][k]
            })
            .collect();

        let sum_r = num::sum(prec, &next_r);
        let mf = num::int(prec, m as i64);
        let x = Float::with_val(prec, &mf + alpha) + &sum_r;
        let x = x * Float::with_val(prec, &mf + &sum_r);
        let one_minus = Float::with_val(prec, 1 - num::sum(prec, &big_r[n]));
        check_divisor(&one_minus, &guard, m, 0, "1 - sum R_{n-1}")?;
        let mut beta = Float::with_val(prec, &x / &one_minus);
        for k in 0..n_def {
            if params.lambda(k).is_zero() {
                continue;
            }
            check_divisor(&big_r[n][k], &guard, m, k, "R_{n-1,k}")?;
            beta += quadratic(&next_r[k], params.lambda(k)) / &big_r[n][k];
        }

        let mut row = vec![num::zero(prec); n_def];
        if let Some(k1) = reference {
            let den = Float::with_val(prec, &beta * &big_r[n][k1]);
            check_divisor(&den, &guard, m, k1, "beta_n R_{n-1,1}")?;
            row[k1] = quadratic(&next_r[k1], params.lambda(k1)) / &den;
            for k in 0..n_def {
                if k == k1 || params.lambda(k).is_zero() {
                    continue;
                }
                let lam = match variant {
                    De3Variant::AsPrinted => params.lambda(k),
                    De3Variant::ReferenceLambda => params.lambda(k1),
                };
                let den1 = Float::with_val(prec, &next_r[k1] * Float::with_val(prec, &next_r[k1] - lam));
                check_divisor(&den1, &guard, m, k, "r_{n,1}(r_{n,1} - lambda)")?;
                check_divisor(&big_r[n][k], &guard, m, k, "R_{n-1,k}")?;
                let ratio = quadratic(&next_r[k], params.lambda(k)) / den1;
                let carry = Float::with_val(prec, &row[k1] * &big_r[n][k1]) / &big_r[n][k];
                row[k] = ratio * carry;
            }
        }
        for (k, v) in row.iter().chain(&next_r).enumerate() {
            if !v.is_finite() {
                return Err(Error::IterationBreakdown { n: m, k: k % n_def.max(1), detail: "non-finite iterate".into() });
            }
        }
        alpha_rec.push(alpha_from_row(params, &row, m));
        beta_rec.push(beta);
        big_r.push(row);
        small_r.push(next_r);
    }
    let aux = AuxTable::from_parts(params.clone(), big_r, small_r)?;
    Ok(Iteration { aux, alpha_rec, beta_rec })
}

fn check_divisor(v: &Float, guard: &Float, n: usize, k: usize, what: &str) -> Result<()> {
    if Float::with_val(v.prec(), v.abs_ref()) < *guard {
        return Err(Error::IterationBreakdown {
            n,
            k: k + 1,
            detail: format!("{what} = {} below threshold", num::to_decimal_digits(v, 6)),
        });
    }
    Ok(())
}

/// `r^2 - λ r`.
fn quadratic(r: &Float, lambda: &Float) -> Float {
    Float::with_val(r.prec(), r - lambda) * r
}

/// `2n + 1 + α + Σ (λ_k - t_k R_{n,k})`.
fn alpha_from_row(params: &WeightParams, row: &[Float], n: usize) -> Float {
    let prec = params.precision_bits();
    let mut a = Float::with_val(prec, params.alpha() + (2 * n + 1) as u64);
    for (k, rk) in row.iter().enumerate() {
        a += params.lambda(k);
        a -= Float::with_val(prec, params.t(k) * rk);
    }
    a
}

/// `Σ_k (r_{n,k}^2 - λ_k r_{n,k}) / R_{n,k}`, with terms for `λ_k = 0` taken as 0.
fn ratio_sum(params: &WeightParams, aux: &AuxTable, n: usize) -> Result<Float> {
    let prec = params.precision_bits();
    let mut acc = num::zero(prec);
    for k in 0..params.len() {
        if params.lambda(k).is_zero() {
            continue;
        }
        let rr = &aux.big_r(n)[k];
        if Float::with_val(prec, rr.abs_ref()) < DEGENERACY_GUARD {
            return Err(Error::Degenerate(format!("R_{{{n},{}}} is numerically zero", k + 1)));
        }
        acc += quadratic(&aux.small_r(n)[k], params.lambda(k)) / rr;
    }
    Ok(acc)
}

/// `β_n` from the auxiliaries at degree `n`.
pub fn beta_from_aux(params: &WeightParams, aux: &AuxTable, n: usize) -> Result<Float> {
    let prec = params.precision_bits();
    let one_minus = Float::with_val(prec, 1 - aux.sum_big_r(n));
    if Float::with_val(prec, one_minus.abs_ref()) < DEGENERACY_GUARD {
        return Err(Error::Degenerate(format!("1 - sum_k R_{{{n},k}} is numerically zero")));
    }
    let sr = aux.sum_small_r(n);
    let nf = num::int(prec, n as i64);
    let x = (Float::with_val(prec, &nf + params.alpha()) + &sr) * Float::with_val(prec, &nf + &sr);
    Ok(x / one_minus + ratio_sum(params, aux, n)?)
}

/// `(α_n, β_n, p(n))` from the closed forms in the auxiliaries.
pub fn recurrence_from_aux(params: &WeightParams, aux: &AuxTable, n: usize) -> Result<(Float, Float, Float)> {
    if n > aux.n_max() {
        return Err(Error::Parameter(format!("degree {n} exceeds n_max = {}", aux.n_max())));
    }
    let prec = params.precision_bits();
    let alpha_n = alpha_from_row(params, aux.big_r(n), n);
    let beta_n = beta_from_aux(params, aux, n)?;
    let mut p = -beta_n.clone();
    for k in 0..params.len() {
        p -= Float::with_val(prec, params.t(k) * &aux.small_r(n)[k]);
    }
    Ok((alpha_n, beta_n, p))
}

/// `n (n + α + Σλ)`.
pub fn sigma_offset(params: &WeightParams, n: usize) -> Float {
    let prec = params.precision_bits();
    let nf = num::int(prec, n as i64);
    let s = Float::with_val(prec, &nf + params.alpha()) + params.lambda_sum();
    s * nf
}

/// `σ_n = n(n + α + Σλ) - Σ t_k r_{n,k} - β_n`.
pub fn sigma_from_aux(params: &WeightParams, aux: &AuxTable, n: usize) -> Result<Float> {
    let (_, _, p) = recurrence_from_aux(params, aux, n)?;
    Ok(p + sigma_offset(params, n))
}

/// `σ_n = p(n) + n(n + α + Σλ)` with `p` from the orthogonal polynomial table.
pub fn sigma_from_table(table: &OPTable, n: usize) -> Result<Float> {
    if n > table.n_max() {
        return Err(Error::Parameter(format!("degree {n} exceeds n_max = {}", table.n_max())));
    }
    Ok(Float::with_val(table.precision_bits(), &table.p1()[n] + sigma_offset(table.params(), n)))
}

/// Closed-form identities checked against a Stieltjes table and quadrature
/// auxiliaries for every admissible degree:
/// `alpha_n`, `beta_n` (guarded), `p(n)`, the quadratic relation, `sigma_n`
/// and the sum rule `Σ_{j<n} α_j = β_n + Σ t_k r_{n,k}`.
pub fn closed_form_residuals(table: &OPTable, aux: &AuxTable, tol: f64) -> Result<ResidualReport> {
    let params = aux.params();
    let prec = params.precision_bits();
    let n_max = table.n_max().min(aux.n_max());
    let mut report = ResidualReport::new();
    for n in 0..=n_max {
        let alpha_n = alpha_from_row(params, aux.big_r(n), n);
        report.record_pair(format!("alpha_n[{n}]"), &table.alpha_rec()[n], &alpha_n, tol);
        if n == 0 {
            continue;
        }
        match recurrence_from_aux(params, aux, n) {
            Ok((_, beta_n, p)) => {
                report.record_pair(format!("beta_n[{n}]"), &table.beta_rec()[n], &beta_n, tol);
                report.record_pair(format!("p[{n}]"), &table.p1()[n], &p, tol);
            }
            Err(Error::Degenerate(why)) => {
                report.skip(format!("beta_n[{n}]"), why.clone());
                report.skip(format!("p[{n}]"), why);
            }
            Err(e) => return Err(e),
        }
        for k in 0..params.len() {
            let lhs = quadratic(&aux.small_r(n)[k], params.lambda(k));
            let rhs = Float::with_val(prec, &table.beta_rec()[n] * &aux.big_r(n)[k]) * &aux.big_r(n - 1)[k];
            report.record_pair(format!("s2p.2[{n},{}]", k + 1), &lhs, &rhs, tol);
        }
        let sum_alpha = num::sum(prec, &table.alpha_rec()[..n]);
        let mut rhs = table.beta_rec()[n].clone();
        for k in 0..params.len() {
            rhs += Float::with_val(prec, params.t(k) * &aux.small_r(n)[k]);
        }
        report.record_pair(format!("sum_rule[{n}]"), &sum_alpha, &rhs, tol);
        let sigma_table = sigma_from_table(table, n)?;
        let mut sigma_aux = sigma_offset(params, n) - &table.beta_rec()[n];
        for k in 0..params.len() {
            sigma_aux -= Float::with_val(prec, params.t(k) * &aux.small_r(n)[k]);
        }
        report.record_pair(format!("sigma_n[{n}]"), &sigma_table, &sigma_aux, tol);
    }
    Ok(report)
}

/// One row of an iterated-versus-quadrature comparison.
#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub n: usize,
    pub k: usize,
    pub r_big_iter: Float,
    pub r_big_quad: Float,
    pub r_small_iter: Float,
    pub r_small_quad: Float,
    pub abs_diff: Float,
}

/// Row-by-row comparison of two auxiliary tables on their common range.
pub fn compare_aux(iterated: &AuxTable, quadrature: &AuxTable) -> Vec<ComparisonRow> {
    let prec = iterated.precision_bits();
    let n_max = iterated.n_max().min(quadrature.n_max());
    let mut rows = Vec::new();
    for n in 0..=n_max {
        for k in 0..iterated.params().len() {
            let db = Float::with_val(prec, &iterated.big_r(n)[k] - &quadrature.big_r(n)[k]).abs();
            let ds = Float::with_val(prec, &iterated.small_r(n)[k] - &quadrature.small_r(n)[k]).abs();
            rows.push(ComparisonRow {
                n,
                k: k + 1,
                r_big_iter: iterated.big_r(n)[k].clone(),
                r_big_quad: quadrature.big_r(n)[k].clone(),
                r_small_iter: iterated.small_r(n)[k].clone(),
                r_small_quad: quadrature.small_r(n)[k].clone(),
                abs_diff: db.max(&ds),
            });
        }
    }
    rows
}

/// Largest `abs_diff` over the rows (zero when empty).
pub fn max_abs_diff(rows: &[ComparisonRow], prec: u32) -> Float {
    num::max_abs(prec, rows.iter().map(|r| &r.abs_diff))
}

/// Writes `n,k,R_iter,R_quad,r_iter,r_quad,abs_diff` rows.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "k", "R_iter", "R_quad", "r_iter", "r_quad", "abs_diff"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            num::to_decimal(&r.r_big_iter),
            num::to_decimal(&r.r_big_quad),
            num::to_decimal(&r.r_small_iter),
            num::to_decimal(&r.r_small_quad),
            num::to_decimal_digits(&r.abs_diff, 6),
        ])?;
    }
    w.flush()?;
    Ok(())
}

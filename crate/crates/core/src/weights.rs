//! The deformed Laguerre weight `w(x) = x^α e^{-x} ∏ (x + t_k)^{λ_k}` on `[0, ∞)`
//! and its potential `v = -ln w`.

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num;

/// One multiplicative factor `(x + t)^λ` of the weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Deformation {
    pub t: Float,
    pub lambda: Float,
}

/// Parameters `(α, {(t_k, λ_k)})` of the weight together with the working precision.
///
/// Immutable once built; every constructor validates `t_k > 0`, pairwise-distinct
/// shifts, and `α > 0` (relaxed to `α > -1` for the undeformed Laguerre weight).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightParamsJson", into = "WeightParamsJson")]
pub struct WeightParams {
    alpha: Float,
    deformations: Vec<Deformation>,
    precision_bits: u32,
}

pub const MIN_PRECISION_BITS: u32 = 64;

impl WeightParams {
    pub fn new(alpha: Float, deformations: Vec<Deformation>, precision_bits: u32) -> Result<Self> {
        if precision_bits < MIN_PRECISION_BITS {
            return Err(Error::Parameter(format!(
                "precision_bits must be at least {MIN_PRECISION_BITS}, got {precision_bits}"
            )));
        }
        let prec = precision_bits;
        let alpha = Float::with_val(prec, alpha);
        if !alpha.is_finite() || alpha <= -1 {
            return Err(Error::Parameter(format!("alpha must exceed -1, got {}", num::to_decimal_digits(&alpha, 20))));
        }
        if alpha <= 0 && !deformations.is_empty() {
            return Err(Error::Parameter(format!(
                "alpha must be positive for a deformed weight, got {}",
                num::to_decimal_digits(&alpha, 20)
            )));
        }
        let deformations: Vec<Deformation> = deformations
            .into_iter()
            .map(|d| Deformation {
                t: Float::with_val(prec, d.t),
                lambda: Float::with_val(prec, d.lambda),
            })
            .collect();
        for (k, d) in deformations.iter().enumerate() {
            if !d.t.is_finite() || d.t <= 0 {
                return Err(Error::Parameter(format!("t_{} must be positive", k + 1)));
            }
            if !d.lambda.is_finite() {
                return Err(Error::Parameter(format!("lambda_{} must be finite", k + 1)));
            }
            for (j, e) in deformations.iter().enumerate().take(k) {
                if e.t == d.t {
                    return Err(Error::Parameter(format!(
                        "t_{} and t_{} coincide; shifts must be pairwise distinct",
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self { alpha, deformations, precision_bits })
    }

    /// Builds parameters from decimal strings: `alpha` and `(t_k, λ_k)` pairs.
    pub fn from_decimals(alpha: &str, pairs: &[(&str, &str)], precision_bits: u32) -> Result<Self> {
        let prec = precision_bits.max(MIN_PRECISION_BITS);
        let deformations = pairs
            .iter()
            .map(|(t, l)| {
                Ok(Deformation {
                    t: num::parse(prec, t)?,
                    lambda: num::parse(prec, l)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(num::parse(prec, alpha)?, deformations, precision_bits)
    }

    /// The classical Laguerre weight `x^α e^{-x}`.
    pub fn classical(alpha: &str, precision_bits: u32) -> Result<Self> {
        Self::from_decimals(alpha, &[], precision_bits)
    }

    pub fn alpha(&self) -> &Float {
        &self.alpha
    }

    pub fn deformations(&self) -> &[Deformation] {
        &self.deformations
    }

    /// Number of deformation factors `N`.
    pub fn len(&self) -> usize {
        self.deformations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deformations.is_empty()
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn shifts(&self) -> Vec<Float> {
        self.deformations.iter().map(|d| d.t.clone()).collect()
    }

    pub fn lambdas(&self) -> Vec<Float> {
        self.deformations.iter().map(|d| d.lambda.clone()).collect()
    }

    pub fn t(&self, k: usize) -> &Float {
        &self.deformations[k].t
    }

    pub fn lambda(&self, k: usize) -> &Float {
        &self.deformations[k].lambda
    }

    /// `Σ λ_k`.
    pub fn lambda_sum(&self) -> Float {
        num::sum(self.precision_bits, self.deformations.iter().map(|d| &d.lambda))
    }

    pub fn min_shift(&self) -> Option<Float> {
        self.deformations.iter().map(|d| d.t.clone()).min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// True when every `λ_k` vanishes, i.e. the weight is classical Laguerre.
    pub fn is_undeformed(&self) -> bool {
        self.deformations.iter().all(|d| d.lambda.is_zero())
    }

    /// True when the deformation factor is a polynomial (every `λ_k` a non-negative integer).
    pub fn has_polynomial_deformation(&self) -> bool {
        self.deformations.iter().all(|d| num::is_nonneg_integer(&d.lambda))
    }

    /// Same exponents, new shifts `t`.
    pub fn with_shifts(&self, shifts: &[Float]) -> Result<Self> {
        if shifts.len() != self.len() {
            return Err(Error::Parameter(format!(
                "expected {} shifts, got {}",
                self.len(),
                shifts.len()
            )));
        }
        let deformations = self
            .deformations
            .iter()
            .zip(shifts)
            .map(|(d, t)| Deformation { t: t.clone(), lambda: d.lambda.clone() })
            .collect();
        Self::new(self.alpha.clone(), deformations, self.precision_bits)
    }

    /// Same parameters re-rounded to a different working precision.
    pub fn with_precision(&self, precision_bits: u32) -> Result<Self> {
        Self::new(self.alpha.clone(), self.deformations.clone(), precision_bits)
    }

    /// `∏ (x + t_k)^{λ_k}`, defined for `x > -min t_k`.
    pub fn deformation_factor(&self, x: &Float) -> Float {
        let prec = self.precision_bits;
        let mut acc = num::one(prec);
        for d in &self.deformations {
            let base = Float::with_val(prec, x + &d.t);
            acc *= base.pow(&d.lambda);
        }
        acc
    }

    /// `ln w(x)` for `x > 0`.
    pub fn log_weight(&self, x: &Float) -> Result<Float> {
        if *x <= 0 {
            return Err(Error::Domain(format!("ln w needs x > 0, got {}", num::to_decimal_digits(x, 20))));
        }
        let prec = self.precision_bits;
        let mut acc = Float::with_val(prec, x.ln_ref());
        acc *= &self.alpha;
        acc -= x;
        for d in &self.deformations {
            let l = Float::with_val(prec, x + &d.t).ln();
            acc += l * &d.lambda;
        }
        Ok(acc)
    }

    /// `v'(z) = 1 - α/z - Σ λ_k/(z + t_k)` for any real `z` off the pole set `{0, -t_k}`.
    pub fn potential_derivative_off_poles(&self, z: &Float) -> Result<Float> {
        self.check_off_poles(z)?;
        let prec = self.precision_bits;
        let mut acc = num::one(prec);
        acc -= Float::with_val(prec, &self.alpha / z);
        for d in &self.deformations {
            acc -= Float::with_val(prec, &d.lambda / Float::with_val(prec, z + &d.t));
        }
        Ok(acc)
    }

    /// Errors if `z` coincides with `0` or some `-t_k`.
    pub fn check_off_poles(&self, z: &Float) -> Result<()> {
        if z.is_zero() {
            return Err(Error::Domain("z = 0 is a pole".into()));
        }
        for (k, d) in self.deformations.iter().enumerate() {
            if Float::with_val(self.precision_bits, z + &d.t).is_zero() {
                return Err(Error::Domain(format!("z = -t_{} is a pole", k + 1)));
            }
        }
        Ok(())
    }
}

/// `w(x) = x^α e^{-x} ∏ (x + t_k)^{λ_k}`; exactly zero at `x = 0` when `α > 0`.
pub fn eval_weight(params: &WeightParams, x: &Float) -> Result<Float> {
    if *x < 0 {
        return Err(Error::Domain(format!("weight is supported on x >= 0, got {}", num::to_decimal_digits(x, 20))));
    }
    if x.is_zero() {
        return match params.alpha.cmp0() {
            Some(std::cmp::Ordering::Greater) => Ok(num::zero(params.precision_bits)),
            Some(std::cmp::Ordering::Equal) => Ok(params.deformation_factor(x)),
            _ => Err(Error::Domain("weight is singular at x = 0 for alpha < 0".into())),
        };
    }
    Ok(params.log_weight(x)?.exp())
}

/// `v(x) = x - α ln x - Σ λ_k ln(x + t_k)` for `x > 0`.
pub fn eval_potential(params: &WeightParams, x: &Float) -> Result<Float> {
    Ok(-params.log_weight(x)?)
}

/// First or second derivative of the potential at `x > 0`.
pub fn eval_potential_derivative(params: &WeightParams, x: &Float, order: u8) -> Result<Float> {
    if *x <= 0 {
        return Err(Error::Domain(format!("potential derivative needs x > 0, got {}", num::to_decimal_digits(x, 20))));
    }
    let prec = params.precision_bits;
    match order {
        1 => params.potential_derivative_off_poles(x),
        2 => {
            let mut acc = Float::with_val(prec, &params.alpha / Float::with_val(prec, x.square_ref()));
            for d in &params.deformations {
                let s = Float::with_val(prec, x + &d.t).square();
                acc += Float::with_val(prec, &d.lambda / s);
            }
            Ok(acc)
        }
        _ => Err(Error::Parameter(format!("potential derivative order must be 1 or 2, got {order}"))),
    }
}

#[derive(Serialize, Deserialize)]
struct DeformationJson {
    t: String,
    lambda: String,
}

#[derive(Serialize, Deserialize)]
struct WeightParamsJson {
    alpha: String,
    deformations: Vec<DeformationJson>,
    precision_bits: u32,
}

impl TryFrom<WeightParamsJson> for WeightParams {
    type Error = Error;

    fn try_from(json: WeightParamsJson) -> Result<Self> {
        let pairs: Vec<(&str, &str)> =
            json.deformations.iter().map(|d| (d.t.as_str(), d.lambda.as_str())).collect();
        WeightParams::from_decimals(&json.alpha, &pairs, json.precision_bits)
    }
}

impl From<WeightParams> for WeightParamsJson {
    fn from(p: WeightParams) -> Self {
        WeightParamsJson {
            alpha: num::to_decimal(&p.alpha),
            deformations: p
                .deformations
                .iter()
                .map(|d| DeformationJson { t: num::to_decimal(&d.t), lambda: num::to_decimal(&d.lambda) })
                .collect(),
            precision_bits: p.precision_bits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PREC: u32 = 333;

    fn f(v: f64) -> Float {
        num::float(PREC, v)
    }

    fn close(a: &Float, b: &Float, tol: f64) -> bool {
        Float::with_val(PREC, a - b).abs() < tol
    }

    #[test]
    fn classical_weight_at_one() {
        let p = WeightParams::classical("1", PREC).unwrap();
        let w = eval_weight(&p, &f(1.0)).unwrap();
        let expected = Float::with_val(PREC, -1).exp();
        assert!(close(&w, &expected, 1e-95));
    }

    #[test]
    fn weight_vanishes_at_origin() {
        let p = WeightParams::from_decimals("0.5", &[("2", "-3")], PREC).unwrap();
        assert!(eval_weight(&p, &f(0.0)).unwrap().is_zero());
    }

    #[test]
    fn weight_direct_substitution() {
        let p = WeightParams::from_decimals("1", &[("1", "1")], PREC).unwrap();
        let w = eval_weight(&p, &f(2.0)).unwrap();
        let expected = Float::with_val(PREC, -2).exp() * 6u32;
        assert!(close(&w, &expected, 1e-95));
    }

    #[test]
    fn negative_x_is_a_domain_error() {
        let p = WeightParams::classical("1", PREC).unwrap();
        assert!(matches!(eval_weight(&p, &f(-0.1)), Err(Error::Domain(_))));
        assert!(matches!(eval_potential_derivative(&p, &f(0.0), 1), Err(Error::Domain(_))));
        assert!(matches!(eval_potential_derivative(&p, &f(1.0), 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn potential_derivative_examples() {
        let p = WeightParams::classical("1", PREC).unwrap();
        assert!(eval_potential_derivative(&p, &f(1.0), 1).unwrap().is_zero());
        let p = WeightParams::from_decimals("1", &[("1", "1")], PREC).unwrap();
        let v2 = eval_potential_derivative(&p, &f(1.0), 2).unwrap();
        assert_eq!(v2, 1.25);
    }

    #[test]
    fn first_derivative_matches_finite_difference_of_log_weight() {
        // 80 digits, fourth-order central difference of -ln w.
        let prec = num::digits_to_bits(80);
        let p = WeightParams::from_decimals("2", &[("0.5", "3")], prec).unwrap();
        let x = num::parse(prec, "0.7").unwrap();
        let h = num::pow10(prec, -6);
        let neg_log_w = |x: &Float| -> Float { -eval_weight(&p, x).unwrap().ln() };
        let at = |m: i32| neg_log_w(&Float::with_val(prec, &x + Float::with_val(prec, &h * m)));
        let fd = (Float::with_val(prec, at(-2) - at(2)) + Float::with_val(prec, at(1) - at(-1)) * 8u32)
            / Float::with_val(prec, &h * 12u32);
        let exact = eval_potential_derivative(&p, &x, 1).unwrap();
        assert!(Float::with_val(prec, &fd - &exact).abs() < 1e-20);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(WeightParams::classical("0", PREC).is_ok());
        assert!(WeightParams::classical("-1", PREC).is_err());
        assert!(WeightParams::from_decimals("0", &[("1", "1")], PREC).is_err());
        assert!(WeightParams::from_decimals("1", &[("0", "1")], PREC).is_err());
        assert!(WeightParams::from_decimals("1", &[("1", "1"), ("1", "2")], PREC).is_err());
        assert!(WeightParams::classical("1", 32).is_err());
    }

    #[test]
    fn json_round_trip_preserves_precision() {
        let p = WeightParams::from_decimals("1", &[("0.5", "0.7"), ("1.5", "0.3")], PREC).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"precision_bits\":333"));
        let back: WeightParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"alpha":"1","deformations":[{"t":"-1","lambda":"1"}],"precision_bits":128}"#;
        assert!(serde_json::from_str::<WeightParams>(bad).is_err());
    }

    #[test]
    fn poles_are_detected() {
        let p = WeightParams::from_decimals("1", &[("0.5", "1")], PREC).unwrap();
        assert!(p.potential_derivative_off_poles(&f(-0.5)).is_err());
        assert!(p.potential_derivative_off_poles(&f(0.0)).is_err());
        assert!(p.potential_derivative_off_poles(&f(-0.25)).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn weight_is_exp_of_minus_potential(x in 0.01f64..50.0, lam in -3.0f64..3.0, t in 0.05f64..5.0) {
            let p = WeightParams::new(f(1.3), vec![Deformation { t: f(t), lambda: f(lam) }], PREC).unwrap();
            let x = f(x);
            let w = eval_weight(&p, &x).unwrap();
            let v = eval_potential(&p, &x).unwrap();
            let rel = Float::with_val(PREC, &w - Float::with_val(PREC, -v).exp()) / &w;
            prop_assert!(rel.abs() < 1e-90);
        }

        #[test]
        fn potential_divided_difference(x in 0.01f64..20.0, y in 0.01f64..20.0, l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
            prop_assume!((x - y).abs() > 1e-3);
            let p = WeightParams::new(
                f(0.8),
                vec![Deformation { t: f(0.3), lambda: f(l1) }, Deformation { t: f(2.5), lambda: f(l2) }],
                PREC,
            ).unwrap();
            let (x, y) = (f(x), f(y));
            let dv = Float::with_val(PREC, eval_potential_derivative(&p, &x, 1).unwrap() - eval_potential_derivative(&p, &y, 1).unwrap());
            let lhs = dv / Float::with_val(PREC, &x - &y);
            let mut rhs = Float::with_val(PREC, p.alpha() / Float::with_val(PREC, &x * &y));
            for d in p.deformations() {
                let den = Float::with_val(PREC, &x + &d.t) * Float::with_val(PREC, &y + &d.t);
                rhs += Float::with_val(PREC, &d.lambda / den);
            }
            prop_assert!(Float::with_val(PREC, &lhs - &rhs).abs() < 1e-80);
        }

        #[test]
        fn convex_for_nonnegative_exponents(x in 0.001f64..100.0, l1 in 0.0f64..4.0, l2 in 0.0f64..4.0) {
            let p = WeightParams::new(
                f(0.5),
                vec![Deformation { t: f(0.7), lambda: f(l1) }, Deformation { t: f(1.9), lambda: f(l2) }],
                PREC,
            ).unwrap();
            prop_assert!(eval_potential_derivative(&p, &f(x), 2).unwrap() > 0);
        }
    }
}

//! Arbitrary-precision Gauss quadrature on `[0, ∞)` against `x^α e^{-x}`.
//!
//! Two rule layouts share one contract (the base weight `x^α e^{-x}` is implicit
//! in the weights, integrands carry only the smooth remainder):
//!
//! * plain Gauss–Laguerre, built by Golub–Welsch from the Laguerre Jacobi matrix;
//! * a graded composite rule (Gauss–Jacobi panel at the origin, geometrically
//!   growing Gauss–Legendre panels, shifted Gauss–Laguerre tail) for deformation
//!   factors whose branch points `-t_k` sit close to the hard edge.

use std::io::Write;

use rug::ops::Pow;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num;
use crate::weights::WeightParams;

pub const DEFAULT_NODES: usize = 200;

const GUARD_BITS: u32 = 32;
const QL_MAX_SWEEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussLaguerre,
    Graded,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    alpha: Float,
    nodes: Vec<Float>,
    weights: Vec<Float>,
    precision_bits: u32,
    kind: RuleKind,
}

impl QuadratureRule {
    pub fn alpha(&self) -> &Float {
        &self.alpha
    }

    pub fn nodes(&self) -> &[Float] {
        &self.nodes
    }

    pub fn weights(&self) -> &[Float] {
        &self.weights
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Node count.
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    /// Writes `node,weight` rows as decimal strings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "weight"])?;
        for (x, wt) in self.nodes.iter().zip(&self.weights) {
            w.write_record([num::to_decimal(x), num::to_decimal(wt)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gauss–Laguerre rule with `m` nodes for the weight `x^α e^{-x}`.
pub fn build_rule(alpha: &Float, m: usize, precision_bits: u32) -> Result<QuadratureRule> {
    if m < 2 {
        return Err(Error::Parameter(format!("quadrature needs m >= 2, got {m}")));
    }
    if *alpha <= -1 {
        return Err(Error::Parameter("Gauss-Laguerre needs alpha > -1".into()));
    }
    let wp = precision_bits + GUARD_BITS;
    let a = Float::with_val(wp, alpha);
    let diag: Vec<Float> = (0..m).map(|i| Float::with_val(wp, &a + (2 * i + 1) as u64)).collect();
    let off_sq: Vec<Float> = (1..m).map(|i| Float::with_val(wp, &a + i as u64) * i as u64).collect();
    let mu0 = Float::with_val(wp, &a + 1u32).gamma();
    let (nodes, weights) = gauss_from_jacobi(&diag, &off_sq, &mu0, wp)?;
    Ok(QuadratureRule {
        alpha: Float::with_val(precision_bits, alpha),
        nodes: round_all(nodes, precision_bits),
        weights: round_all(weights, precision_bits),
        precision_bits,
        kind: RuleKind::GaussLaguerre,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(q: usize, precision_bits: u32) -> Result<(Vec<Float>, Vec<Float>)> {
    if q < 1 {
        return Err(Error::Parameter("Gauss-Legendre needs at least one node".into()));
    }
    let wp = precision_bits + GUARD_BITS;
    let diag = vec![num::zero(wp); q];
    let off_sq: Vec<Float> = (1..q)
        .map(|i| {
            let i = i as u64;
            Float::with_val(wp, i * i) / Float::with_val(wp, 4 * i * i - 1)
        })
        .collect();
    let (x, w) = gauss_from_jacobi(&diag, &off_sq, &num::int(wp, 2), wp)?;
    Ok((round_all(x, precision_bits), round_all(w, precision_bits)))
}

/// Gauss–Jacobi rule on `[0, 1]` for the weight `v^α`.
pub fn gauss_jacobi_unit(alpha: &Float, q: usize, precision_bits: u32) -> Result<(Vec<Float>, Vec<Float>)> {
    if *alpha <= -1 {
        return Err(Error::Parameter("Gauss-Jacobi needs alpha > -1".into()));
    }
    let wp = precision_bits + GUARD_BITS;
    let b = Float::with_val(wp, alpha);
    let mut diag = Vec::with_capacity(q);
    for n in 0..q {
        // Jacobi(0, b) on [-1, 1], mapped to [0, 1].
        let aj = if n == 0 {
            Float::with_val(wp, &b / Float::with_val(wp, &b + 2u32))
        } else {
            let two_n_b = Float::with_val(wp, &b + (2 * n) as u64);
            let den = Float::with_val(wp, &two_n_b * Float::with_val(wp, &two_n_b + 2u32));
            Float::with_val(wp, b.square_ref()) / den
        };
        diag.push((aj + 1u32) / 2u32);
    }
    let mut off_sq = Vec::with_capacity(q.saturating_sub(1));
    for n in 1..q {
        let nf = Float::with_val(wp, n as u64);
        let two_n_b = Float::with_val(wp, &b + (2 * n) as u64);
        let num_ = Float::with_val(wp, nf.square_ref()) * Float::with_val(wp, &nf + &b).square() * 4u32;
        let den = Float::with_val(wp, two_n_b.square_ref())
            * Float::with_val(wp, &two_n_b + 1u32)
            * Float::with_val(wp, &two_n_b - 1u32);
        off_sq.push(num_ / den / 4u32);
    }
    let mu0 = Float::with_val(wp, 1) / Float::with_val(wp, &b + 1u32);
    let (x, w) = gauss_from_jacobi(&diag, &off_sq, &mu0, wp)?;
    Ok((round_all(x, precision_bits), round_all(w, precision_bits)))
}

/// Panel structure of a graded rule.
#[derive(Clone, Debug, Serialize)]
pub struct GradedLayout {
    /// End of the first (Gauss–Jacobi) panel `[0, edge]`.
    pub edge: f64,
    /// Start of the Gauss–Laguerre tail.
    pub cutoff: f64,
    /// Growth ratio of consecutive Gauss–Legendre panels.
    pub ratio: f64,
    pub panel_nodes: usize,
    pub tail_nodes: usize,
}

impl GradedLayout {
    /// Layout adapted to the branch points `-t_k` of the given weight.
    pub fn for_params(params: &WeightParams, n_max: usize) -> Self {
        let t_min = params.min_shift().map(|t| t.to_f64()).unwrap_or(1.0);
        Self {
            edge: t_min.min(1.0),
            cutoff: 20.0,
            ratio: 2.0,
            panel_nodes: 70 + n_max,
            tail_nodes: 200.max(2 * n_max + 40),
        }
    }
}

/// Composite rule for `x^α e^{-x}` following `layout`.
pub fn build_graded_rule(alpha: &Float, layout: &GradedLayout, precision_bits: u32) -> Result<QuadratureRule> {
    if !(layout.edge > 0.0 && layout.edge < layout.cutoff && layout.ratio > 1.0) {
        return Err(Error::Parameter(format!("invalid graded layout {layout:?}")));
    }
    if layout.panel_nodes < 2 || layout.tail_nodes < 2 {
        return Err(Error::Parameter("graded layout needs at least two nodes per panel".into()));
    }
    let prec = precision_bits;
    let wp = prec + GUARD_BITS;
    let a = Float::with_val(wp, alpha);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();

    let edge = Float::with_val(wp, layout.edge);
    let (vj, wj) = gauss_jacobi_unit(alpha, layout.panel_nodes, wp)?;
    let scale = Float::with_val(wp, (&edge).pow(Float::with_val(wp, &a + 1u32)));
    for (v, w) in vj.iter().zip(&wj) {
        let x = Float::with_val(wp, v * &edge);
        let wt = Float::with_val(wp, w * &scale) * Float::with_val(wp, -&x).exp();
        nodes.push(x);
        weights.push(wt);
    }

    let (xl, wl) = gauss_legendre(layout.panel_nodes, wp)?;
    let cutoff = Float::with_val(wp, layout.cutoff);
    let mut lo = edge.clone();
    while lo < cutoff {
        let mut hi = Float::with_val(wp, &lo * layout.ratio);
        // Merge a short remainder into the last panel.
        let rest = Float::with_val(wp, &cutoff - &hi);
        if rest < Float::with_val(wp, &hi - &lo) / 2u32 {
            hi = cutoff.clone();
        }
        let half = Float::with_val(wp, &hi - &lo) / 2u32;
        let mid = Float::with_val(wp, &hi + &lo) / 2u32;
        for (u, w) in xl.iter().zip(&wl) {
            let x = Float::with_val(wp, u * &half) + &mid;
            let base = Float::with_val(wp, &a * Float::with_val(wp, x.ln_ref())) - &x;
            let wt = Float::with_val(wp, w * &half) * base.exp();
            nodes.push(x);
            weights.push(wt);
        }
        lo = hi;
    }

    let tail = build_rule(&num::zero(wp), layout.tail_nodes, wp)?;
    let shift = Float::with_val(wp, -&cutoff).exp();
    for (y, w) in tail.nodes.iter().zip(&tail.weights) {
        let x = Float::with_val(wp, y + &cutoff);
        let xa = Float::with_val(wp, &a * Float::with_val(wp, x.ln_ref())).exp();
        let wt = Float::with_val(wp, w * &shift) * xa;
        nodes.push(x);
        weights.push(wt);
    }

    Ok(QuadratureRule {
        alpha: Float::with_val(prec, alpha),
        nodes: round_all(nodes, prec),
        weights: round_all(weights, prec),
        precision_bits: prec,
        kind: RuleKind::Graded,
    })
}

/// How to pick a rule for a given weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain Gauss–Laguerre when the deformation factor is a polynomial, graded otherwise.
    Auto,
    GaussLaguerre,
    Graded,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadratureSettings {
    pub scheme: Scheme,
    /// Node count of a plain Gauss–Laguerre rule.
    pub m: usize,
    /// Overrides the per-panel node count of a graded rule.
    pub panel_nodes: Option<usize>,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { scheme: Scheme::Auto, m: DEFAULT_NODES, panel_nodes: None }
    }
}

/// The rule used to build orthogonal polynomials up to degree `n_max` for `params`.
pub fn rule_for(params: &WeightParams, n_max: usize, settings: &QuadratureSettings) -> Result<QuadratureRule> {
    let graded = match settings.scheme {
        Scheme::Auto => !params.has_polynomial_deformation(),
        Scheme::GaussLaguerre => false,
        Scheme::Graded => true,
    };
    if graded {
        let mut layout = GradedLayout::for_params(params, n_max);
        if let Some(q) = settings.panel_nodes {
            layout.panel_nodes = q;
        }
        build_graded_rule(params.alpha(), &layout, params.precision_bits())
    } else {
        if 2 * n_max + 2 > 2 * settings.m - 1 {
            return Err(Error::Parameter(format!(
                "m = {} nodes cannot resolve degree {n_max}; need 2*n_max + 2 <= 2m - 1",
                settings.m
            )));
        }
        build_rule(params.alpha(), settings.m, params.precision_bits())
    }
}

/// `Σ w_i f(x_i)`; the base weight `x^α e^{-x}` is implicit in the rule.
pub fn integrate<F>(rule: &QuadratureRule, mut f: F) -> Result<Float>
where
    F: FnMut(&Float) -> Float,
{
    let mut acc = num::zero(rule.precision_bits);
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "integrand is not finite at node {i} (x = {})",
                num::to_decimal_digits(x, 20)
            )));
        }
        acc += Float::with_val(rule.precision_bits, w * &v);
    }
    Ok(acc)
}

/// `μ_j = ∫ x^j w(x) dx` for the deformed weight.
pub fn moment(params: &WeightParams, j: u32, rule: &QuadratureRule) -> Result<Float> {
    check_alpha(params, rule)?;
    integrate(rule, |x| {
        let xj = Float::with_val(params.precision_bits(), x.pow(j));
        xj * params.deformation_factor(x)
    })
}

/// Errors unless `rule` was built for the same `α` as `params`.
pub fn check_alpha(params: &WeightParams, rule: &QuadratureRule) -> Result<()> {
    let diff = Float::with_val(rule.precision_bits, params.alpha() - &rule.alpha).abs();
    let tol = num::pow10(rule.precision_bits, -((0.25 * f64::from(rule.precision_bits)) as i32));
    if diff > tol {
        return Err(Error::Parameter(format!(
            "quadrature rule built for alpha = {} but weight has alpha = {}",
            num::to_decimal_digits(&rule.alpha, 20),
            num::to_decimal_digits(params.alpha(), 20)
        )));
    }
    Ok(())
}

/// Nodes and Christoffel weights of the Gauss rule with Jacobi matrix
/// `tridiag(√b, a, √b)` and zeroth moment `mu0`.
///
/// Eigenvalues come from implicit QL at working precision; each is then polished
/// by Newton on the three-term recurrence and the weight taken as
/// `1 / Σ p_k(x)^2` over the orthonormal polynomials.
fn gauss_from_jacobi(diag: &[Float], off_sq: &[Float], mu0: &Float, wp: u32) -> Result<(Vec<Float>, Vec<Float>)> {
    let m = diag.len();
    let off: Vec<Float> = off_sq.iter().map(|b| Float::with_val(wp, b.sqrt_ref())).collect();
    let mut x = tridiagonal_eigenvalues(diag.to_vec(), off.clone(), wp)?;
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let tol = Float::with_val(wp, Float::i_exp(1, 8 - wp as i32));
    for xi in x.iter_mut() {
        for _ in 0..12 {
            let (p, dp) = monic_value_and_derivative(diag, off_sq, xi, wp);
            if dp.is_zero() {
                break;
            }
            let dx = Float::with_val(wp, &p / &dp);
            *xi -= &dx;
            let scale = Float::with_val(wp, xi.abs_ref()).max(&num::one(wp));
            if Float::with_val(wp, dx.abs_ref()) <= Float::with_val(wp, &tol * &scale) {
                break;
            }
        }
    }
    for i in 1..m {
        if x[i] <= x[i - 1] {
            return Err(Error::Numeric(format!("Gauss nodes {} and {} collapsed after Newton polish", i - 1, i)));
        }
    }

    let p0 = Float::with_val(wp, mu0.sqrt_ref()).recip();
    let weights = x
        .iter()
        .map(|xi| {
            let mut prev = num::zero(wp);
            let mut cur = p0.clone();
            let mut sum = Float::with_val(wp, cur.square_ref());
            for k in 0..m - 1 {
                let mut next = Float::with_val(wp, xi - &diag[k]) * &cur;
                if k > 0 {
                    next -= Float::with_val(wp, &off[k - 1] * &prev);
                }
                next /= &off[k];
                sum += Float::with_val(wp, next.square_ref());
                prev = cur;
                cur = next;
            }
            sum.recip()
        })
        .collect();
    Ok((x, weights))
}

/// Monic `P_m(x)` and `P_m'(x)` for the recurrence `P_{k+1} = (x - a_k)P_k - b_k P_{k-1}`.
fn monic_value_and_derivative(diag: &[Float], off_sq: &[Float], x: &Float, wp: u32) -> (Float, Float) {
    let mut p_prev = num::zero(wp);
    let mut p = num::one(wp);
    let mut d_prev = num::zero(wp);
    let mut d = num::zero(wp);
    for k in 0..diag.len() {
        let shift = Float::with_val(wp, x - &diag[k]);
        let mut p_next = Float::with_val(wp, &shift * &p);
        let mut d_next = Float::with_val(wp, &shift * &d) + &p;
        if k > 0 {
            p_next -= Float::with_val(wp, &off_sq[k - 1] * &p_prev);
            d_next -= Float::with_val(wp, &off_sq[k - 1] * &d_prev);
        }
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
        // Rescale to keep magnitudes tame; only the ratio p/d is used.
        let mag = Float::with_val(wp, p.abs_ref()).max(&Float::with_val(wp, d.abs_ref()));
        if mag > 1e100f64 {
            let inv = mag.recip();
            p *= &inv;
            d *= &inv;
            p_prev *= &inv;
            d_prev *= &inv;
        }
    }
    (p, d)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit-shift QL.
fn tridiagonal_eigenvalues(mut d: Vec<Float>, off: Vec<Float>, wp: u32) -> Result<Vec<Float>> {
    let n = d.len();
    let mut e = off;
    e.push(num::zero(wp));
    let eps = Float::with_val(wp, Float::i_exp(1, 2 - wp as i32));
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = Float::with_val(wp, d[mm].abs_ref()) + Float::with_val(wp, d[mm + 1].abs_ref());
                if Float::with_val(wp, e[mm].abs_ref()) <= Float::with_val(wp, &eps * &dd) {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::Numeric(format!(
                    "tridiagonal QL did not converge for eigenvalue {l} after {QL_MAX_SWEEPS} sweeps"
                )));
            }
            let mut g = Float::with_val(wp, &d[l + 1] - &d[l]) / Float::with_val(wp, &e[l] * 2u32);
            let mut r = Float::with_val(wp, g.hypot_ref(&num::one(wp)));
            let signed_r = if g.is_sign_negative() { -r.clone() } else { r.clone() };
            g = Float::with_val(wp, &d[mm] - &d[l]) + Float::with_val(wp, &e[l] / Float::with_val(wp, &g + &signed_r));
            let mut s = num::one(wp);
            let mut c = num::one(wp);
            let mut p = num::zero(wp);
            let mut deflated = false;
            let mut i = mm;
            while i > l {
                i -= 1;
                let f = Float::with_val(wp, &s * &e[i]);
                let b = Float::with_val(wp, &c * &e[i]);
                r = Float::with_val(wp, f.hypot_ref(&g));
                e[i + 1] = r.clone();
                if r.is_zero() {
                    d[i + 1] -= &p;
                    e[mm] = num::zero(wp);
                    deflated = true;
                    break;
                }
                s = Float::with_val(wp, &f / &r);
                c = Float::with_val(wp, &g / &r);
                g = Float::with_val(wp, &d[i + 1] - &p);
                r = Float::with_val(wp, &d[i] - &g) * &s + Float::with_val(wp, &c * &b) * 2u32;
                p = Float::with_val(wp, &s * &r);
                d[i + 1] = Float::with_val(wp, &g + &p);
                g = Float::with_val(wp, &c * &r) - &b;
            }
            if deflated {
                continue;
            }
            d[l] -= &p;
            e[l] = g;
            e[mm] = num::zero(wp);
        }
    }
    Ok(d)
}

fn round_all(v: Vec<Float>, prec: u32) -> Vec<Float> {
    v.into_iter().map(|x| Float::with_val(prec, x)).collect()
}

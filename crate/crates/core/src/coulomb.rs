//! Equilibrium density of the Coulomb fluid for `λ_k ≥ 0`: the endpoint system
//! for the support `(a, b)`, the density `ψ(x)`, the Lagrange multiplier `A`,
//! and quadrature checks of the integral equations they come from.

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num;
use crate::report::ResidualReport;
use crate::weights::{eval_potential, WeightParams};

/// Residual bound for the endpoint Newton solve.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-30;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
/// Normalization and the two moment conditions.
pub const CONDITION_TOL: f64 = 1e-25;
/// Constancy of `v(x) - 2∫ln|x-y|ψ(y)dy` across sample points.
pub const LAGRANGE_TOL: f64 = 1e-15;
/// Closed-form integral identities and the integral form of `ψ`.
pub const IDENTITY_TOL: f64 = 1e-20;

/// Support `(a, b)` of the equilibrium density of `n` particles.
#[derive(Clone, Debug)]
pub struct SupportInterval {
    pub a: Float,
    pub b: Float,
    pub n: u64,
    pub params: WeightParams,
    pub iterations: usize,
    /// A different root of the endpoint system found by multistart probing.
    pub alternate: Option<(Float, Float)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportSummary {
    pub a: String,
    pub b: String,
    pub n: u64,
    pub lagrange_multiplier: String,
    pub iterations: usize,
    pub alternate: Option<(String, String)>,
}

impl SupportInterval {
    pub fn summary(&self) -> SupportSummary {
        SupportSummary {
            a: num::to_decimal(&self.a),
            b: num::to_decimal(&self.b),
            n: self.n,
            lagrange_multiplier: num::to_decimal(&lagrange_multiplier(self)),
            iterations: self.iterations,
            alternate: self.alternate.as_ref().map(|(a, b)| (num::to_decimal(a), num::to_decimal(b))),
        }
    }

    fn prec(&self) -> u32 {
        self.params.precision_bits()
    }

    fn centre(&self) -> Float {
        Float::with_val(self.prec(), &self.a + &self.b) / 2
    }
}

fn validate(params: &WeightParams, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("the fluid needs n >= 1 particles".into()));
    }
    if *params.alpha() <= 0 {
        return Err(Error::Parameter("the equilibrium density needs alpha > 0".into()));
    }
    if params.lambdas().iter().any(|l| *l < 0) {
        return Err(Error::Parameter(
            "the equilibrium density assumes lambda_k >= 0 (convex potential, single-interval support)".into(),
        ));
    }
    Ok(())
}

/// `λ ≡ 0` endpoints: `ab = α²`, `a + b = 2α + 4n`.
pub fn undeformed_endpoints(alpha: &Float, n: u64) -> (Float, Float) {
    let prec = alpha.prec();
    let c = Float::with_val(prec, alpha + 2 * n);
    let disc = Float::with_val(prec, c.square_ref()) - Float::with_val(prec, alpha.square_ref());
    let root = disc.sqrt();
    (Float::with_val(prec, &c - &root), c + root)
}

/// `((a + t)(b + t))^{-1/2}`.
fn inv_root(a: &Float, b: &Float, t: &Float) -> Float {
    let prec = a.prec();
    let p = Float::with_val(prec, a + t) * Float::with_val(prec, b + t);
    p.sqrt().recip()
}

/// The endpoint system `F(a, b) = 0`:
/// `α/√(ab) + Σ λ_k/√((a+t_k)(b+t_k)) - 1` and
/// `2n + α + Σλ_k - Σ λ_k t_k/√((a+t_k)(b+t_k)) - (a+b)/2`.
pub fn endpoint_residuals(params: &WeightParams, n: u64, a: &Float, b: &Float) -> [Float; 2] {
    let prec = params.precision_bits();
    let alpha = params.alpha();
    let ab = Float::with_val(prec, a * b);
    let mut f1 = Float::with_val(prec, alpha / ab.sqrt()) - 1;
    let mut f2 = Float::with_val(prec, alpha + 2 * n) + params.lambda_sum() - Float::with_val(prec, a + b) / 2;
    for d in params.deformations() {
        let g = inv_root(a, b, &d.t);
        f1 += Float::with_val(prec, &d.lambda * &g);
        f2 -= Float::with_val(prec, &d.lambda * &d.t) * g;
    }
    [f1, f2]
}

fn jacobian(params: &WeightParams, a: &Float, b: &Float) -> [[Float; 2]; 2] {
    let prec = params.precision_bits();
    let h = Float::with_val(prec, a * b).sqrt().recip();
    let ah = Float::with_val(prec, params.alpha() * &h) / 2;
    let mut j11 = -Float::with_val(prec, &ah / a);
    let mut j12 = -Float::with_val(prec, &ah / b);
    let mut j21 = num::float(prec, -0.5);
    let mut j22 = num::float(prec, -0.5);
    for d in params.deformations() {
        let g = inv_root(a, b, &d.t);
        let lg = Float::with_val(prec, &d.lambda * &g) / 2;
        let da = Float::with_val(prec, a + &d.t);
        let db = Float::with_val(prec, b + &d.t);
        let ga = Float::with_val(prec, &lg / &da);
        let gb = Float::with_val(prec, &lg / &db);
        j11 -= &ga;
        j12 -= &gb;
        j21 += ga * &d.t;
        j22 += gb * &d.t;
    }
    [[j11, j12], [j21, j22]]
}

fn residual_norm(f: &[Float; 2]) -> Float {
    let prec = f[0].prec();
    num::max_abs(prec, f.iter())
}

/// Newton's method from `(a0, b0)`; returns the root and the iteration count.
fn newton(params: &WeightParams, n: u64, a0: Float, b0: Float, tol: f64) -> Result<(Float, Float, usize)> {
    let prec = params.precision_bits();
    let (mut a, mut b) = (a0, b0);
    let mut trace = Vec::new();
    for it in 0..MAX_NEWTON_ITERATIONS {
        let f = endpoint_residuals(params, n, &a, &b);
        let norm = residual_norm(&f);
        trace.push(format!("{it}: |F| = {:.3e}", norm.to_f64()));
        if !norm.is_finite() {
            break;
        }
        if norm < tol {
            return Ok((a, b, it));
        }
        let j = jacobian(params, &a, &b);
        let det = Float::with_val(prec, &j[0][0] * &j[1][1]) - Float::with_val(prec, &j[0][1] * &j[1][0]);
        if det.is_zero() || !det.is_finite() {
            return Err(Error::Solver { iterations: it, detail: format!("singular Jacobian; trace: {}", trace.join(", ")) });
        }
        let da = -(Float::with_val(prec, &j[1][1] * &f[0]) - Float::with_val(prec, &j[0][1] * &f[1])) / &det;
        let db = -(Float::with_val(prec, &j[0][0] * &f[1]) - Float::with_val(prec, &j[1][0] * &f[0])) / &det;
        let mut scale = num::one(prec);
        let mut halvings = 0;
        loop {
            let na = Float::with_val(prec, &a + Float::with_val(prec, &da * &scale));
            let nb = Float::with_val(prec, &b + Float::with_val(prec, &db * &scale));
            if na > 0 && nb > na {
                a = na;
                b = nb;
                break;
            }
            scale /= 2;
            halvings += 1;
            if halvings > 200 {
                return Err(Error::Solver {
                    iterations: it,
                    detail: format!("damping could not keep 0 < a < b; trace: {}", trace.join(", ")),
                });
            }
        }
    }
    Err(Error::Solver { iterations: MAX_NEWTON_ITERATIONS, detail: format!("no convergence; trace: {}", trace.join(", ")) })
}

/// Solves the endpoint system by Newton's method started from the `λ ≡ 0`
/// endpoints, then probes other starts for a second root (reported in
/// `alternate`, not resolved).
pub fn solve_endpoints(params: &WeightParams, n: u64, tol: f64) -> Result<SupportInterval> {
    validate(params, n)?;
    let (a0, b0) = undeformed_endpoints(params.alpha(), n);
    let (a, b, iterations) = newton(params, n, a0.clone(), b0.clone(), tol)?;
    let alternate = probe_alternate(params, n, &a, &b);
    if let Some((pa, pb)) = &alternate {
        log::warn!("endpoint system has a second root near a = {}, b = {}", pa.to_f64(), pb.to_f64());
    }
    Ok(SupportInterval { a, b, n, params: params.clone(), iterations, alternate })
}

const PROBE_BITS: u32 = 160;

fn probe_alternate(params: &WeightParams, n: u64, a: &Float, b: &Float) -> Option<(Float, Float)> {
    let low = params.with_precision(PROBE_BITS).ok()?;
    let af = a.to_f64();
    let bf = b.to_f64();
    for fa in [1e-3, 1e-1, 0.5, 2.0, 10.0] {
        for fb in [0.25, 0.5, 2.0, 4.0] {
            let (sa, sb) = (af * fa, bf * fb);
            if !(sa > 0.0 && sb > sa) {
                continue;
            }
            let start = (num::float(PROBE_BITS, sa), num::float(PROBE_BITS, sb));
            if let Ok((pa, pb, _)) = newton(&low, n, start.0, start.1, 1e-30) {
                let gap = (pa.to_f64() - af).abs() + (pb.to_f64() - bf).abs();
                if gap > 1e-8 * bf.max(1.0) {
                    return Some((pa, pb));
                }
            }
        }
    }
    None
}

/// `ψ(x) = √((b-x)(x-a))/(2π) · (α/(x√(ab)) + Σ λ_k/((x+t_k)√((a+t_k)(b+t_k))))`.
pub fn density(interval: &SupportInterval, x: &Float) -> Result<Float> {
    if !(*x > interval.a && *x < interval.b) {
        return Err(Error::Domain(format!("x = {} lies outside the support ({}, {})", x.to_f64(), interval.a.to_f64(), interval.b.to_f64())));
    }
    let prec = interval.prec();
    let root = (Float::with_val(prec, &interval.b - x) * Float::with_val(prec, x - &interval.a)).sqrt();
    Ok(root * density_factor(interval, x) / (num::pi(prec) * 2))
}

/// `α/(x√(ab)) + Σ λ_k/((x+t_k)√((a+t_k)(b+t_k)))`.
fn density_factor(interval: &SupportInterval, x: &Float) -> Float {
    let prec = interval.prec();
    let p = &interval.params;
    let ab = Float::with_val(prec, &interval.a * &interval.b).sqrt();
    let mut g = Float::with_val(prec, p.alpha() / Float::with_val(prec, x * &ab));
    for d in p.deformations() {
        let xt = Float::with_val(prec, x + &d.t);
        g += Float::with_val(prec, &d.lambda * inv_root(&interval.a, &interval.b, &d.t)) / xt;
    }
    g
}

/// `ψ(x)` from the integral form
/// `√((b-x)(x-a))/(2π²) ∫ (v'(x) - v'(y))/((x-y)√((b-y)(y-a))) dy`.
pub fn density_by_integral(interval: &SupportInterval, x: &Float) -> Result<Float> {
    if !(*x > interval.a && *x < interval.b) {
        return Err(Error::Domain("x lies outside the support".into()));
    }
    let prec = interval.prec();
    let p = &interval.params;
    // The divided difference of v' is smooth: 1 - α/x - Σλ/(x+t) differenced
    // gives α/(xy) + Σ λ/((x+t)(y+t)).
    let kernel = |y: &Float| {
        let mut acc = Float::with_val(prec, p.alpha() / Float::with_val(prec, x * y));
        for d in p.deformations() {
            let den = Float::with_val(prec, x + &d.t) * Float::with_val(prec, y + &d.t);
            acc += Float::with_val(prec, &d.lambda / den);
        }
        acc
    };
    let integral = chebyshev_gauss(&interval.a, &interval.b, kernel, IDENTITY_TOL * 1e-5)?;
    let root = (Float::with_val(prec, &interval.b - x) * Float::with_val(prec, x - &interval.a)).sqrt();
    let pi = num::pi(prec);
    Ok(root * integral / (Float::with_val(prec, pi.square_ref()) * 2))
}

/// `A = (a+b)/2 - α ln((a+b+2√(ab))/4) - 2n ln((b-a)/4)
///      - Σ λ_k ln((a+b+2t_k+2√((a+t_k)(b+t_k)))/4)`.
pub fn lagrange_multiplier(interval: &SupportInterval) -> Float {
    let prec = interval.prec();
    let (a, b) = (&interval.a, &interval.b);
    let p = &interval.params;
    let s = Float::with_val(prec, a + b);
    let ab = Float::with_val(prec, a * b).sqrt();
    let mut out = Float::with_val(prec, &s / 2);
    let arg: Float = Float::with_val(prec, &s + Float::with_val(prec, &ab * 2)) / 4;
    out -= Float::with_val(prec, p.alpha() * arg.ln());
    out -= Float::with_val(prec, Float::with_val(prec, b - a) / 4).ln() * (2 * interval.n);
    for d in p.deformations() {
        let r = (Float::with_val(prec, a + &d.t) * Float::with_val(prec, b + &d.t)).sqrt();
        let arg: Float = (Float::with_val(prec, &s + Float::with_val(prec, &d.t * 2)) + r * 2) / 4;
        out -= Float::with_val(prec, &d.lambda * arg.ln());
    }
    out
}

const CG_START: usize = 32;
const CG_MAX: usize = 32 * 3usize.pow(8);

fn chebyshev_sum<F: Fn(&Float) -> Float>(a: &Float, b: &Float, m: usize, f: &F) -> Float {
    let prec = a.prec();
    let c = Float::with_val(prec, a + b) / 2;
    let d = Float::with_val(prec, b - a) / 2;
    let pi = num::pi(prec);
    let mut acc = num::zero(prec);
    for j in 1..=m {
        let theta = Float::with_val(prec, &pi * (2 * j - 1) as u64) / (2 * m) as u64;
        let x = Float::with_val(prec, &c + Float::with_val(prec, &d * theta.cos()));
        acc += f(&x);
    }
    acc * pi / m as u64
}

/// `∫_a^b f(x)/√((b-x)(x-a)) dx` by Chebyshev–Gauss with the node count
/// tripled until two successive values agree to `rel_tol · max(1, |I|)`.
pub fn chebyshev_gauss<F: Fn(&Float) -> Float>(a: &Float, b: &Float, f: F, rel_tol: f64) -> Result<Float> {
    let mut m = CG_START;
    let mut prev = chebyshev_sum(a, b, m, &f);
    while m < CG_MAX {
        m *= 3;
        let next = chebyshev_sum(a, b, m, &f);
        let diff = Float::with_val(next.prec(), &next - &prev).abs();
        let scale = Float::with_val(next.prec(), next.abs_ref()).max(&num::one(next.prec()));
        if diff <= scale * rel_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numeric(format!("Chebyshev-Gauss quadrature did not converge with {m} nodes")))
}

/// `∫_0^L f(u) du` by tanh-sinh quadrature. `f` receives the distance `u` from
/// the left end, computed without cancellation, so integrable singularities
/// at `u = 0` (and at `u = L`) are handled. Levels are halved until two
/// successive sums agree to `rel_tol · max(1, |I|)`.
pub fn tanh_sinh<F: Fn(&Float) -> Float>(length: &Float, f: F, rel_tol: f64) -> Result<Float> {
    let prec = length.prec();
    let half = Float::with_val(prec, length / 2);
    let pi2 = num::pi(prec) / 2;
    let t_max = (f64::from(prec) * std::f64::consts::LN_2 / std::f64::consts::PI).asinh() + 0.5;
    let term = |t: &Float| -> Float {
        // u = π/2 sinh t; node offset from the left end = L/(1 + e^{-2u}).
        let u = Float::with_val(prec, &pi2 * t.clone().sinh());
        let cu = u.clone().cosh();
        let w = Float::with_val(prec, &pi2 * t.clone().cosh()) / Float::with_val(prec, cu.square_ref());
        let e = Float::with_val(prec, -Float::with_val(prec, &u * 2)).exp();
        let offset = Float::with_val(prec, length / (e + 1u32));
        if offset.is_zero() || offset >= *length {
            return num::zero(prec);
        }
        let v = f(&offset);
        if !v.is_finite() {
            return num::zero(prec);
        }
        w * v
    };
    let mut h = 0.5f64;
    let mut sum = term(&num::zero(prec));
    let mut k = 1i64;
    loop {
        let t = k as f64 * h;
        if t > t_max {
            break;
        }
        let tf = num::float(prec, t);
        sum += term(&tf) + term(&Float::with_val(prec, -&tf));
        k += 1;
    }
    let mut prev = Float::with_val(prec, &sum * &half) * h;
    for _ in 0..12 {
        h /= 2.0;
        // Only the odd multiples of the new h are new nodes.
        let mut k = 1i64;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            let tf = num::float(prec, t);
            sum += term(&tf) + term(&Float::with_val(prec, -&tf));
            k += 2;
        }
        let next = Float::with_val(prec, &sum * &half) * h;
        let diff = Float::with_val(prec, &next - &prev).abs();
        let scale = Float::with_val(prec, next.abs_ref()).max(&num::one(prec));
        if diff <= scale * rel_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numeric("tanh-sinh quadrature did not converge".into()))
}

/// `∫_a^b ln|x - y| g(y) dy/√((b-y)(y-a))` for smooth `g`, by `y = c + d cos θ`,
/// `x = c + d cos φ`, `ln|y - x| = ln(2d) + ln sin((θ+φ)/2) + ln|sin((θ-φ)/2)|`,
/// and tanh-sinh on `[0, φ]` and `[φ, π]` from the singular point.
pub fn log_kernel_integral<G: Fn(&Float) -> Float>(a: &Float, b: &Float, x: &Float, g: G, rel_tol: f64) -> Result<Float> {
    let prec = a.prec();
    if !(*x > *a && *x < *b) {
        return Err(Error::Domain("log-kernel point outside the interval".into()));
    }
    let c = Float::with_val(prec, a + b) / 2;
    let d = Float::with_val(prec, b - a) / 2;
    let phi = Float::with_val(prec, Float::with_val(prec, x - &c) / &d).acos();
    let pi = num::pi(prec);
    let ln2d = Float::with_val(prec, &d * 2).ln();
    let integrand = |theta: &Float, delta: &Float| -> Float {
        let half_sum: Float = Float::with_val(prec, theta + &phi) / 2;
        let ln = Float::with_val(prec, &ln2d + half_sum.sin().ln()) + (Float::with_val(prec, delta / 2).sin()).ln();
        // y = a + 2d cos²(θ/2) keeps the left end accurate.
        let ch = Float::with_val(prec, theta / 2).cos();
        let y = Float::with_val(prec, a + Float::with_val(prec, ch.square_ref()) * &d * 2u32);
        ln * g(&y)
    };
    let right_len = Float::with_val(prec, &pi - &phi);
    let right = tanh_sinh(&right_len, |u| integrand(&Float::with_val(prec, &phi + u), u), rel_tol)?;
    let left = tanh_sinh(&phi, |u| integrand(&Float::with_val(prec, &phi - u), u), rel_tol)?;
    Ok(left + right)
}

/// `v(x) - 2 ∫ ln|x - y| ψ(y) dy`, which equals `A` on the support.
pub fn effective_potential(interval: &SupportInterval, x: &Float) -> Result<Float> {
    let prec = interval.prec();
    let (a, b) = (&interval.a, &interval.b);
    // ψ(y) = (b-y)(y-a) g(y)/(2π) / √((b-y)(y-a)).
    let g = |y: &Float| {
        let w = Float::with_val(prec, b - y) * Float::with_val(prec, y - a);
        w * density_factor(interval, y) / (num::pi(prec) * 2)
    };
    let l = log_kernel_integral(a, b, x, g, 1e-30)?;
    Ok(eval_potential(&interval.params, x)? - l * 2)
}

/// Residuals of the defining conditions: endpoint system, `∫ψ = n`, the two
/// moment conditions of `v'`, constancy of `v(x) - 2∫ln|x-y|ψ(y)dy` at five
/// interior points against `A`, and `ψ` against its integral form.
pub fn check_density(interval: &SupportInterval) -> Result<ResidualReport> {
    let prec = interval.prec();
    let p = &interval.params;
    let (a, b) = (&interval.a, &interval.b);
    let mut r = ResidualReport::new();
    let f = endpoint_residuals(p, interval.n, a, b);
    r.record("endpoint_f1", &f[0], &num::one(prec), CONDITION_TOL);
    r.record("endpoint_f2", &f[1], &Float::with_val(prec, b + a), CONDITION_TOL);

    let norm = chebyshev_gauss(
        a,
        b,
        |x| {
            let w = Float::with_val(prec, b - x) * Float::with_val(prec, x - a);
            w * density_factor(interval, x) / (num::pi(prec) * 2)
        },
        1e-32,
    )?;
    let n = num::int(prec, interval.n as i64);
    r.record_pair("normalization", &norm, &n, CONDITION_TOL);

    let vprime = |x: &Float| {
        let mut v = Float::with_val(prec, 1 - Float::with_val(prec, p.alpha() / x));
        for d in p.deformations() {
            v -= Float::with_val(prec, &d.lambda / Float::with_val(prec, x + &d.t));
        }
        v
    };
    let c1 = chebyshev_gauss(a, b, vprime, 1e-32)?;
    r.record("condition1", &c1, &num::pi(prec), CONDITION_TOL);
    let c2 = chebyshev_gauss(a, b, |x| Float::with_val(prec, x * vprime(x)), 1e-32)?;
    let target = num::pi(prec) * (2 * interval.n);
    r.record_pair("condition2", &c2, &target, CONDITION_TOL);

    let big_a = lagrange_multiplier(interval);
    let mut worst = num::zero(prec);
    let d = Float::with_val(prec, b - a);
    for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let x = Float::with_val(prec, a + Float::with_val(prec, &d * frac));
        let e = effective_potential(interval, &x)?;
        let dev = Float::with_val(prec, &e - &big_a).abs();
        if dev > worst {
            worst = dev;
        }
    }
    r.record("lagrange_constancy", &worst, &big_a, LAGRANGE_TOL);

    let mid = interval.centre();
    let direct = density(interval, &mid)?;
    let integral = density_by_integral(interval, &mid)?;
    r.record_pair("density_integral_form", &direct, &integral, IDENTITY_TOL);
    if interval.alternate.is_some() {
        r.annotate("endpoint_f1", "a second root of the endpoint system was found by multistart probing");
    }
    Ok(r)
}

/// The closed-form integrals behind `ψ` and `A`, each against quadrature at
/// `0 < a < b`, `t > 0`.
pub fn integral_identities(a: &Float, b: &Float, t: &Float) -> Result<ResidualReport> {
    let prec = a.prec();
    let pi = num::pi(prec);
    let tol = 1e-32;
    let mut r = ResidualReport::new();
    let ab = Float::with_val(prec, a * b).sqrt();
    let at = Float::with_val(prec, a + t);
    let bt = Float::with_val(prec, b + t);

    let q = chebyshev_gauss(a, b, |x| x.clone().recip(), tol)?;
    r.record_pair("inverse_x", &q, &Float::with_val(prec, &pi / &ab), IDENTITY_TOL);

    let q = chebyshev_gauss(a, b, |x| Float::with_val(prec, x + t).recip(), tol)?;
    let rhs = Float::with_val(prec, &pi / (Float::with_val(prec, &at * &bt).sqrt()));
    r.record_pair("inverse_x_plus_t", &q, &rhs, IDENTITY_TOL);

    let q = chebyshev_gauss(a, b, |x| x.clone(), tol)?;
    let rhs = Float::with_val(prec, a + b) * &pi / 2;
    r.record_pair("first_moment", &q, &rhs, IDENTITY_TOL);

    let q = chebyshev_gauss(a, b, |x| x.clone().ln(), tol)?;
    let rhs = Float::with_val(prec, Float::with_val(prec, a.clone().sqrt() + b.clone().sqrt()) / 2).ln() * &pi * 2;
    r.record_pair("log_x", &q, &rhs, IDENTITY_TOL);

    let q = chebyshev_gauss(a, b, |x| Float::with_val(prec, x + t).ln(), tol)?;
    let rhs = Float::with_val(prec, Float::with_val(prec, at.clone().sqrt() + bt.clone().sqrt()) / 2).ln() * &pi * 2;
    r.record_pair("log_x_plus_t", &q, &rhs, IDENTITY_TOL);

    let one = num::one(prec);
    let q = chebyshev_gauss(&num::zero(prec), &one, |_| num::one(prec), tol)?;
    r.record_pair("unit_arcsine", &q, &pi, IDENTITY_TOL);

    // ∫_0^1 ln(1-S)/√(S(1-S)) dS with u = 1 - S measured from the singular end.
    let q = tanh_sinh(
        &one,
        |u| {
            let s = Float::with_val(prec, 1 - u);
            u.clone().ln() / (Float::with_val(prec, &s * u).sqrt())
        },
        tol,
    )?;
    let rhs = -Float::with_val(prec, &pi * 2) * Float::with_val(prec, 2).ln();
    r.record_pair("log_one_minus_s", &q, &rhs, IDENTITY_TOL);

    // ∫ ln|x-y| dx/√((b-x)(x-a)) = π ln((b-a)/4), independent of y.
    let rhs = Float::with_val(prec, Float::with_val(prec, b - a) / 4).ln() * &pi;
    let span = Float::with_val(prec, b - a);
    for (i, frac) in [0.2, 0.5, 0.85].iter().enumerate() {
        let y = Float::with_val(prec, a + Float::with_val(prec, &span * *frac));
        let q = log_kernel_integral(a, b, &y, |_| num::one(prec), tol)?;
        r.record_pair(format!("log_kernel_constant[{}]", i + 1), &q, &rhs, IDENTITY_TOL);
    }
    Ok(r)
}

/// Large-`n` limit of `ψ(4ny)` for `λ ≡ 0`: `(1/2π) √((1-y)/y)`.
pub fn hard_edge_density_limit(y: &Float) -> Result<Float> {
    if !(*y > 0 && *y < 1) {
        return Err(Error::Domain("y must lie in (0, 1)".into()));
    }
    let prec = y.prec();
    let r = (Float::with_val(prec, 1 - y) / y).sqrt();
    Ok(r / (num::pi(prec) * 2))
}

/// `n` equally spaced interior samples `(x, ψ(x))`.
pub fn density_samples(interval: &SupportInterval, samples: usize) -> Result<Vec<(Float, Float)>> {
    let prec = interval.prec();
    let d = Float::with_val(prec, &interval.b - &interval.a);
    (1..=samples)
        .map(|i| {
            let x = Float::with_val(prec, &interval.a + Float::with_val(prec, &d * i as u64) / (samples + 1) as u64);
            let psi = density(interval, &x)?;
            Ok((x, psi))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BITS: u32 = 256;

    #[test]
    fn undeformed_closed_form() {
        let p = WeightParams::classical("2", BITS).unwrap();
        let s = solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL).unwrap();
        let root = Float::with_val(BITS, 140).sqrt();
        let a = Float::with_val(BITS, 12 - root.clone());
        let b = Float::with_val(BITS, 12 + root);
        assert!(Float::with_val(BITS, &s.a - &a).abs() < 1e-60);
        assert!(Float::with_val(BITS, &s.b - &b).abs() < 1e-60);
        assert!(s.alternate.is_none());
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let p = WeightParams::from_decimals("1", &[("1", "-0.5")], BITS).unwrap();
        assert!(matches!(solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL), Err(Error::Parameter(_))));
    }

    #[test]
    fn density_outside_support_is_a_domain_error() {
        let p = WeightParams::classical("2", BITS).unwrap();
        let s = solve_endpoints(&p, 5, DEFAULT_SOLVER_TOL).unwrap();
        assert!(matches!(density(&s, &s.a), Err(Error::Domain(_))));
        assert!(matches!(density(&s, &Float::with_val(BITS, 100)), Err(Error::Domain(_))));
    }

    #[test]
    fn tanh_sinh_handles_log_endpoint() {
        // ∫_0^1 ln u du = -1.
        let one = num::one(BITS);
        let q = tanh_sinh(&one, |u| u.clone().ln(), 1e-40).unwrap();
        assert!(Float::with_val(BITS, q + 1).abs() < 1e-40);
    }

    #[test]
    fn chebyshev_gauss_is_exact_for_polynomials() {
        let a = num::float(BITS, 1.0);
        let b = num::float(BITS, 3.0);
        // ∫ x² /√((3-x)(x-1)) dx = π (c² + d²/2) with c = 2, d = 1.
        let q = chebyshev_gauss(&a, &b, |x| Float::with_val(BITS, x.square_ref()), 1e-50).unwrap();
        let exact = num::pi(BITS) * 4.5f64;
        assert!(Float::with_val(BITS, q - exact).abs() < 1e-60);
    }
}

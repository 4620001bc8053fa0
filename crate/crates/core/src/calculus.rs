//! Finite differences in the shifts `t_k` and residuals of the differential
//! identities: the derivative relations, Toda and Riccati equations, the
//! second-order system for `R_{n,k}` and the second-order equation for `σ_n`.
//!
//! Every field is recomputed from scratch at each stencil point on a quadrature
//! rule frozen at the stencil centre, so the derivative of the quadrature error
//! stays as small as the error itself.

use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num;
use crate::quadrature::{rule_for, QuadratureRule, QuadratureSettings, RuleKind};
use crate::recurrences::DEGENERACY_GUARD;
use crate::report::ResidualReport;
use crate::system::System;
use crate::weights::WeightParams;

/// Tolerance for first-order identities (derivative relations, Toda, Riccati).
pub const FIRST_ORDER_TOL: f64 = 1e-12;
/// Tolerance for the second-order system in `R_{n,k}` and its `N = 1` forms.
pub const PDE_TOL: f64 = 1e-8;
/// Tolerance for the `σ_n` equation with one deformation.
pub const SIGMA_PDE_TOL: f64 = 1e-8;
/// Tolerance for the `σ_n` equation with several deformations.
pub const SIGMA_PDE_MULTI_TOL: f64 = 1e-6;
/// `|R_{n,k} + R_{n-1,k}|` below this leaves the square-root branch undetermined.
pub const SIGN_GUARD: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FDConfig {
    /// Step relative to each `t_k`.
    pub step: f64,
    /// Central stencil order, 2 or 4.
    pub order: u32,
    /// Combine steps `h` and `h/2` by Richardson extrapolation.
    pub richardson: bool,
}

impl Default for FDConfig {
    fn default() -> Self {
        Self { step: 1e-8, order: 4, richardson: false }
    }
}

impl FDConfig {
    /// Admissible steps lie in `(10^{-0.4 d}, 10^{-2})` with `d = 0.3 · precision_bits`
    /// decimal digits.
    pub fn validate(&self, precision_bits: u32) -> Result<()> {
        if self.order != 2 && self.order != 4 {
            return Err(Error::Parameter(format!("FD order must be 2 or 4, got {}", self.order)));
        }
        let digits = 0.3 * f64::from(precision_bits);
        let lower = 10f64.powf(-0.4 * digits);
        if !(self.step > lower && self.step < 1e-2) {
            return Err(Error::Parameter(format!(
                "FD step {:e} outside ({lower:e}, 1e-2) for {precision_bits}-bit precision",
                self.step
            )));
        }
        Ok(())
    }
}

/// Settings shared by the residual checks of this module.
#[derive(Clone, Debug, Serialize)]
pub struct CalculusConfig {
    pub fd: FDConfig,
    /// Points per axis of the lattice around the reference `t` (1 = reference only).
    pub lattice_points: usize,
    /// Relative half-width of the lattice.
    pub lattice_spread: f64,
    /// Overrides the per-identity default tolerance.
    pub tolerance: Option<f64>,
    pub quadrature: QuadratureSettings,
}

impl Default for CalculusConfig {
    fn default() -> Self {
        Self {
            fd: FDConfig::default(),
            lattice_points: 3,
            lattice_spread: 0.1,
            tolerance: None,
            quadrature: QuadratureSettings::default(),
        }
    }
}

impl CalculusConfig {
    /// Reference point only.
    pub fn single_point() -> Self {
        Self { lattice_points: 1, ..Self::default() }
    }

    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

// Central stencils as integer numerators over a common denominator.
struct Weights {
    offsets: &'static [i64],
    d1: &'static [i64],
    d1_den: i64,
    d2_center: i64,
    d2: &'static [i64],
    d2_den: i64,
}

fn weights(order: u32) -> Weights {
    if order == 2 {
        Weights { offsets: &[-1, 1], d1: &[-1, 1], d1_den: 2, d2_center: -2, d2: &[1, 1], d2_den: 1 }
    } else {
        Weights {
            offsets: &[-2, -1, 1, 2],
            d1: &[1, -8, 8, -1],
            d1_den: 12,
            d2_center: -30,
            d2: &[-1, 16, 16, -1],
            d2_den: 12,
        }
    }
}

/// Which derivatives a stencil must support.
#[derive(Clone, Debug)]
pub struct StencilPlan {
    pub axes: Vec<usize>,
    /// Include the product points for mixed second derivatives among `axes`.
    pub mixed: bool,
}

impl StencilPlan {
    pub fn gradient(n_axes: usize) -> Self {
        Self { axes: (0..n_axes).collect(), mixed: false }
    }

    pub fn hessian(n_axes: usize) -> Self {
        Self { axes: (0..n_axes).collect(), mixed: true }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Center,
    Axis(usize, usize),
    Mixed(usize, usize, usize),
}

struct Stencil<T> {
    h: Vec<Float>,
    order: u32,
    center: T,
    axis: Vec<Option<Vec<T>>>,
    mixed: Vec<Vec<Option<Vec<T>>>>,
}

impl<T: Send> Stencil<T> {
    fn build<F>(t: &[Float], h: Vec<Float>, order: u32, plan: &StencilPlan, f: &F) -> Result<Self>
    where
        F: Fn(&[Float]) -> Result<T> + Sync,
    {
        let w = weights(order);
        let dim = t.len();
        let shifted = |moves: &[(usize, i64)]| -> Vec<Float> {
            let mut p = t.to_vec();
            for &(k, o) in moves {
                p[k] += Float::with_val(h[k].prec(), &h[k] * o);
            }
            p
        };
        let mut points: Vec<(Slot, Vec<Float>)> = vec![(Slot::Center, t.to_vec())];
        for &k in &plan.axes {
            for (i, &o) in w.offsets.iter().enumerate() {
                points.push((Slot::Axis(k, i), shifted(&[(k, o)])));
            }
        }
        if plan.mixed {
            for (a, &j) in plan.axes.iter().enumerate() {
                for &k in &plan.axes[a + 1..] {
                    let (j, k) = (j.min(k), j.max(k));
                    for (ia, &oa) in w.offsets.iter().enumerate() {
                        for (ib, &ob) in w.offsets.iter().enumerate() {
                            let idx = ia * w.offsets.len() + ib;
                            points.push((Slot::Mixed(j, k, idx), shifted(&[(j, oa), (k, ob)])));
                        }
                    }
                }
            }
        }
        let values: Vec<T> = points.par_iter().map(|(_, p)| f(p)).collect::<Result<Vec<T>>>()?;

        let m = w.offsets.len();
        let mut center = None;
        let mut axis: Vec<Option<Vec<Option<T>>>> = (0..dim).map(|_| None).collect();
        let mut mixed: Vec<Vec<Option<Vec<Option<T>>>>> = (0..dim).map(|_| (0..dim).map(|_| None).collect()).collect();
        for ((slot, _), v) in points.iter().zip(values) {
            match *slot {
                Slot::Center => center = Some(v),
                Slot::Axis(k, i) => axis[k].get_or_insert_with(|| (0..m).map(|_| None).collect())[i] = Some(v),
                Slot::Mixed(j, k, idx) => {
                    mixed[j][k].get_or_insert_with(|| (0..m * m).map(|_| None).collect())[idx] = Some(v)
                }
            }
        }
        let unwrap_all = |v: Vec<Option<T>>| v.into_iter().map(|x| x.expect("stencil slot filled")).collect();
        Ok(Self {
            h,
            order,
            center: center.expect("centre evaluated"),
            axis: axis.into_iter().map(|a| a.map(unwrap_all)).collect(),
            mixed: mixed.into_iter().map(|row| row.into_iter().map(|c| c.map(unwrap_all)).collect()).collect(),
        })
    }

    fn d1<G: Fn(&T) -> Float>(&self, k: usize, g: &G) -> Result<Float> {
        let w = weights(self.order);
        let vals = self.axis[k].as_ref().ok_or_else(|| missing(k, k))?;
        let prec = self.h[k].prec();
        let mut acc = num::zero(prec);
        for (c, v) in w.d1.iter().zip(vals) {
            acc += g(v) * *c;
        }
        Ok(acc / Float::with_val(prec, &self.h[k] * w.d1_den))
    }

    fn d2<G: Fn(&T) -> Float>(&self, j: usize, k: usize, g: &G) -> Result<Float> {
        let w = weights(self.order);
        let prec = self.h[k].prec();
        if j == k {
            let vals = self.axis[k].as_ref().ok_or_else(|| missing(k, k))?;
            let mut acc = g(&self.center) * w.d2_center;
            for (c, v) in w.d2.iter().zip(vals) {
                acc += g(v) * *c;
            }
            let h2 = Float::with_val(prec, self.h[k].square_ref());
            return Ok(acc / (h2 * w.d2_den));
        }
        let (a, b) = (j.min(k), j.max(k));
        let vals = self.mixed[a][b].as_ref().ok_or_else(|| missing(a, b))?;
        let m = w.offsets.len();
        let mut acc = num::zero(prec);
        for ia in 0..m {
            for ib in 0..m {
                acc += g(&vals[ia * m + ib]) * (w.d1[ia] * w.d1[ib]);
            }
        }
        let den = Float::with_val(prec, &self.h[a] * &self.h[b]) * (w.d1_den * w.d1_den);
        Ok(acc / den)
    }
}

fn missing(j: usize, k: usize) -> Error {
    Error::Parameter(format!("stencil does not cover derivative ({}, {})", j + 1, k + 1))
}

/// Field values on one or two (Richardson) central stencils around `t`.
pub struct Sampler<T> {
    t: Vec<Float>,
    coarse: Stencil<T>,
    fine: Option<Stencil<T>>,
    order: u32,
}

impl<T: Send> Sampler<T> {
    /// Evaluates `f` on the stencil. Absolute steps are `step · t_k`; if a stencil
    /// point would leave `t_k > 0` the step is shrunk tenfold once.
    pub fn build<F>(t: &[Float], cfg: &FDConfig, plan: &StencilPlan, f: F) -> Result<Self>
    where
        F: Fn(&[Float]) -> Result<T> + Sync,
    {
        let prec = t.first().map(|x| x.prec()).unwrap_or(64);
        let reach = if cfg.order == 2 { 1 } else { 2 };
        let mut h: Vec<Float> = t.iter().map(|x| Float::with_val(prec, x * cfg.step)).collect();
        let out_of_domain =
            |h: &[Float]| t.iter().zip(h).any(|(x, hk)| Float::with_val(prec, x - Float::with_val(prec, hk * reach)) <= 0);
        if out_of_domain(&h) {
            for hk in &mut h {
                *hk /= 10;
            }
            if out_of_domain(&h) {
                return Err(Error::Domain("finite-difference stencil leaves t_k > 0".into()));
            }
        }
        let fine = if cfg.richardson {
            let half: Vec<Float> = h.iter().map(|x| Float::with_val(prec, x / 2)).collect();
            Some(Stencil::build(t, half, cfg.order, plan, &f)?)
        } else {
            None
        };
        let coarse = Stencil::build(t, h, cfg.order, plan, &f)?;
        Ok(Self { t: t.to_vec(), coarse, fine, order: cfg.order })
    }

    pub fn t(&self) -> &[Float] {
        &self.t
    }

    pub fn center(&self) -> &T {
        &self.coarse.center
    }

    fn combine(&self, coarse: Float, fine: Option<Float>) -> Float {
        match fine {
            None => coarse,
            Some(f) => {
                let p = 1u32 << self.order;
                let num = Float::with_val(coarse.prec(), &f * p) - coarse;
                num / (p - 1)
            }
        }
    }

    /// `∂g/∂t_k`.
    pub fn d1<G: Fn(&T) -> Float>(&self, k: usize, g: G) -> Result<Float> {
        let c = self.coarse.d1(k, &g)?;
        let f = self.fine.as_ref().map(|s| s.d1(k, &g)).transpose()?;
        Ok(self.combine(c, f))
    }

    /// `∂²g/∂t_j∂t_k`.
    pub fn d2<G: Fn(&T) -> Float>(&self, j: usize, k: usize, g: G) -> Result<Float> {
        let c = self.coarse.d2(j, k, &g)?;
        let f = self.fine.as_ref().map(|s| s.d2(j, k, &g)).transpose()?;
        Ok(self.combine(c, f))
    }

    /// `δg = Σ t_k ∂g/∂t_k`.
    pub fn delta<G: Fn(&T) -> Float>(&self, g: G) -> Result<Float> {
        let prec = self.t[0].prec();
        let mut acc = num::zero(prec);
        for k in 0..self.t.len() {
            acc += self.d1(k, &g)? * &self.t[k];
        }
        Ok(acc)
    }

    /// `δ²g = Σ_{j,k} t_j t_k ∂²g/∂t_j∂t_k + δg`.
    pub fn delta2<G: Fn(&T) -> Float>(&self, g: G) -> Result<Float> {
        let mut acc = self.delta(&g)?;
        let dim = self.t.len();
        for j in 0..dim {
            for k in 0..dim {
                let tt = Float::with_val(acc.prec(), &self.t[j] * &self.t[k]);
                acc += self.d2(j, k, &g)? * tt;
            }
        }
        Ok(acc)
    }
}

/// `∂f/∂t_k` at `t` by a central stencil.
pub fn partial<F>(f: F, t: &[Float], k: usize, cfg: &FDConfig) -> Result<Float>
where
    F: Fn(&[Float]) -> Result<Float> + Sync,
{
    let s = Sampler::build(t, cfg, &StencilPlan { axes: vec![k], mixed: false }, f)?;
    s.d1(k, |v: &Float| v.clone())
}

/// `∂²f/∂t_j∂t_k` at `t` by a central (product) stencil.
pub fn second_partial<F>(f: F, t: &[Float], j: usize, k: usize, cfg: &FDConfig) -> Result<Float>
where
    F: Fn(&[Float]) -> Result<Float> + Sync,
{
    let axes = if j == k { vec![k] } else { vec![j, k] };
    let s = Sampler::build(t, cfg, &StencilPlan { axes, mixed: j != k }, f)?;
    s.d2(j, k, |v: &Float| v.clone())
}

/// `σ_n` with its gradient and Hessian in `t`.
#[derive(Clone, Debug)]
pub struct SigmaJet {
    pub value: Float,
    pub grad: Vec<Float>,
    pub hess: Vec<Vec<Float>>,
}

impl SigmaJet {
    pub fn from_sampler(s: &Sampler<System>, n: usize) -> Result<Self> {
        let dim = s.t().len();
        let g = |sys: &System| sys.sigma(n);
        let grad = (0..dim).map(|k| s.d1(k, g)).collect::<Result<Vec<_>>>()?;
        let mut hess = vec![Vec::with_capacity(dim); dim];
        for j in 0..dim {
            for k in 0..dim {
                hess[j].push(s.d2(j, k, g)?);
            }
        }
        Ok(Self { value: s.center().sigma(n), grad, hess })
    }

    /// `δσ = Σ t_k ∂σ/∂t_k`.
    pub fn delta(&self, t: &[Float]) -> Float {
        let mut acc = num::zero(self.value.prec());
        for (g, tk) in self.grad.iter().zip(t) {
            acc += Float::with_val(acc.prec(), g * tk);
        }
        acc
    }

    /// `E_k = Σ_j t_j ∂²σ/∂t_j∂t_k`.
    pub fn e(&self, t: &[Float], k: usize) -> Float {
        let mut acc = num::zero(self.value.prec());
        for (j, tj) in t.iter().enumerate() {
            acc += Float::with_val(acc.prec(), &self.hess[j][k] * tj);
        }
        acc
    }

    /// `max |hess_{jk} - hess_{kj}|`.
    pub fn symmetry_defect(&self) -> Float {
        let prec = self.value.prec();
        let mut worst = num::zero(prec);
        for j in 0..self.grad.len() {
            for k in 0..j {
                let d = Float::with_val(prec, &self.hess[j][k] - &self.hess[k][j]).abs();
                worst.max_mut(&d);
            }
        }
        worst
    }
}

/// The reference point and its neighbours `t_k (1 + spread · u)`, `u` on a
/// uniform grid in `[-1, 1]` with `points` values per axis.
pub fn lattice(params: &WeightParams, points: usize, spread: f64) -> Vec<Vec<Float>> {
    let prec = params.precision_bits();
    let t0 = params.shifts();
    if points <= 1 || t0.is_empty() {
        return vec![t0];
    }
    let factors: Vec<Float> = (0..points)
        .map(|i| {
            let u = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            Float::with_val(prec, 1) + num::float(prec, spread * u)
        })
        .collect();
    let mut out: Vec<Vec<Float>> = vec![Vec::new()];
    for tk in &t0 {
        let mut next = Vec::new();
        for prefix in &out {
            for f in &factors {
                let mut p = prefix.clone();
                p.push(Float::with_val(prec, tk * f));
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Builds a [`System`] sampler around the shifts of `params`, on one rule.
pub fn system_sampler(
    params: &WeightParams,
    n_max: usize,
    fd: &FDConfig,
    plan: &StencilPlan,
    rule: &QuadratureRule,
) -> Result<Sampler<System>> {
    Sampler::build(&params.shifts(), fd, plan, |t| System::build_with_rule(&params.with_shifts(t)?, n_max, rule))
}

fn over_lattice<C>(params: &WeightParams, n: usize, cfg: &CalculusConfig, plan: StencilPlan, check: C) -> Result<ResidualReport>
where
    C: Fn(&Sampler<System>) -> Result<ResidualReport>,
{
    if params.is_empty() {
        return Err(Error::Parameter("differential identities need at least one deformation".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("differential identities need n >= 1".into()));
    }
    cfg.fd.validate(params.precision_bits())?;
    let n_max = n + 1;
    let mut shared: Option<QuadratureRule> = None;
    let mut merged = ResidualReport::new();
    let points = lattice(params, cfg.lattice_points, cfg.lattice_spread);
    let count = points.len();
    for t in points {
        let p = params.with_shifts(&t)?;
        let own;
        let rule = match &shared {
            Some(r) => r,
            None => {
                own = rule_for(&p, n_max, &cfg.quadrature)?;
                if own.kind() == RuleKind::GaussLaguerre {
                    shared = Some(own.clone());
                }
                &own
            }
        };
        let sampler = system_sampler(&p, n_max, &cfg.fd, &plan, rule)?;
        sampler.center().require_degree(n)?;
        merged.merge_worst(check(&sampler)?);
    }
    log::debug!("worst residuals over a lattice of {count} points");
    Ok(merged)
}

fn quadratic(r: &Float, lambda: &Float) -> Float {
    Float::with_val(r.prec(), r - lambda) * r
}

/// `(r_{n,k}^2 - λ_k r_{n,k}) / R_{n,k}` with the `λ_k = 0` term taken as 0.
fn ratio(sys: &System, n: usize, k: usize) -> Result<Float> {
    let prec = sys.precision_bits();
    if sys.params().lambda(k).is_zero() {
        return Ok(num::zero(prec));
    }
    let big = sys.big_r(n, k);
    if Float::with_val(prec, big.abs_ref()) < DEGENERACY_GUARD {
        return Err(Error::Degenerate(format!("R_{{{n},{}}} is numerically zero", k + 1)));
    }
    Ok(quadratic(&sys.small_r(n, k), sys.params().lambda(k)) / big)
}

/// `∂_k ln h_n = R_{n,k}`, `∂_k p(n) = -r_{n,k}`, `∂_k ln β_n = R_{n,k} - R_{n-1,k}`,
/// `∂_k α_n = r_{n+1,k} - r_{n,k}`.
pub fn differential_relation_residuals(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<ResidualReport> {
    let tol = cfg.tol(FIRST_ORDER_TOL);
    over_lattice(params, n, cfg, StencilPlan::gradient(params.len()), |s| {
        let c = s.center();
        let prec = c.precision_bits();
        let mut r = ResidualReport::new();
        for k in 0..c.params().len() {
            let i = k + 1;
            r.record_pair(format!("dr1[{i}]"), &s.d1(k, |x: &System| x.ln_h(n))?, &c.big_r(n, k), tol);
            r.record_pair(format!("dr2[{i}]"), &s.d1(k, |x: &System| x.p(n))?, &(-c.small_r(n, k)), tol);
            let rhs = Float::with_val(prec, c.big_r(n, k) - c.big_r(n - 1, k));
            r.record_pair(format!("dr3[{i}]"), &s.d1(k, |x: &System| x.ln_beta(n))?, &rhs, tol);
            let rhs = Float::with_val(prec, c.small_r(n + 1, k) - c.small_r(n, k));
            r.record_pair(format!("dr4[{i}]"), &s.d1(k, |x: &System| x.alpha(n))?, &rhs, tol);
        }
        Ok(r)
    })
}

/// `δ ln β_n = α_{n-1} - α_n + 2` and `(δ - 1) α_n = β_n - β_{n+1}`.
pub fn toda_residuals(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<ResidualReport> {
    let tol = cfg.tol(FIRST_ORDER_TOL);
    over_lattice(params, n, cfg, StencilPlan::gradient(params.len()), |s| {
        let c = s.center();
        let prec = c.precision_bits();
        let mut r = ResidualReport::new();
        let lhs = s.delta(|x: &System| x.ln_beta(n))?;
        let rhs = Float::with_val(prec, c.alpha(n - 1) - c.alpha(n)) + 2;
        r.record_pair("te1", &lhs, &rhs, tol);
        let lhs = s.delta(|x: &System| x.alpha(n))? - c.alpha(n);
        let rhs = Float::with_val(prec, c.beta(n) - c.beta(n + 1));
        r.record_pair("te2", &lhs, &rhs, tol);
        Ok(r)
    })
}

/// The Riccati equations for `δR_{n,k}` and `δr_{n,k}`, the reduced form
/// `δr = (r^2 - λr)/R - β_n R`, `δr_{n,k} = -∂_k β_n`, and for `N >= 2` the
/// symmetry `∂_j R_{n,k} = ∂_k R_{n,j}`, `∂_j r_{n,k} = ∂_k r_{n,j}`.
pub fn riccati_residuals(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<ResidualReport> {
    let tol = cfg.tol(FIRST_ORDER_TOL);
    over_lattice(params, n, cfg, StencilPlan::gradient(params.len()), |s| {
        let c = s.center();
        let p = c.params();
        let prec = c.precision_bits();
        let dim = p.len();
        let mut r = ResidualReport::new();

        let mut bracket = Float::with_val(prec, p.alpha() + (2 * n) as u64);
        for j in 0..dim {
            bracket += p.lambda(j);
            bracket -= Float::with_val(prec, p.t(j) * &c.big_r(n, j));
        }
        let sr = num::sum(prec, c.aux().small_r(n));
        let nf = num::int(prec, n as i64);
        let x = (Float::with_val(prec, &nf + p.alpha()) + &sr) * Float::with_val(prec, &nf + &sr);
        let one_minus = Float::with_val(prec, 1 - c.sum_big_r(n));
        let ratios: std::result::Result<Vec<Float>, String> =
            match (0..dim).map(|k| ratio(c, n, k)).collect::<Result<Vec<Float>>>() {
                Ok(v) => Ok(v),
                Err(Error::Degenerate(why)) => Err(why),
                Err(e) => return Err(e),
            };

        for k in 0..dim {
            let i = k + 1;
            let big = c.big_r(n, k);
            let small = c.small_r(n, k);
            let d_big = s.delta(|x: &System| x.big_r(n, k))?;
            let d_small = s.delta(|x: &System| x.small_r(n, k))?;

            let rhs = Float::with_val(prec, &bracket + p.t(k)) * &big + Float::with_val(prec, &small * 2) - p.lambda(k);
            r.record_pair(format!("re1[{i}]"), &d_big, &rhs, tol);

            let d_beta = s.d1(k, |x: &System| x.beta(n))?;
            r.record_pair(format!("delta_r[{i}]"), &d_small, &(-d_beta), tol);

            match &ratios {
                Ok(rs) => {
                    if Float::with_val(prec, one_minus.abs_ref()) < DEGENERACY_GUARD {
                        r.skip(format!("re2[{i}]"), "1 - sum R_{n,j} is numerically zero");
                    } else {
                        let sum_ratios = num::sum(prec, rs);
                        let rhs = Float::with_val(prec, &rs[k] - Float::with_val(prec, &big * &x) / &one_minus)
                            - Float::with_val(prec, &big * &sum_ratios);
                        r.record_pair(format!("re2[{i}]"), &d_small, &rhs, tol);
                    }
                    let rhs = Float::with_val(prec, &rs[k] - Float::with_val(prec, c.beta(n) * &big));
                    r.record_pair(format!("re5[{i}]"), &d_small, &rhs, tol);
                }
                Err(why) => {
                    r.skip(format!("re2[{i}]"), why.clone());
                    r.skip(format!("re5[{i}]"), why.clone());
                }
            }
        }
        for j in 0..dim {
            for k in j + 1..dim {
                let a = s.d1(k, |x: &System| x.big_r(n, j))?;
                let b = s.d1(j, |x: &System| x.big_r(n, k))?;
                r.record_pair(format!("re3[{},{}]", j + 1, k + 1), &a, &b, tol);
                let a = s.d1(k, |x: &System| x.small_r(n, j))?;
                let b = s.d1(j, |x: &System| x.small_r(n, k))?;
                r.record_pair(format!("re4[{},{}]", j + 1, k + 1), &a, &b, tol);
            }
        }
        Ok(r)
    })
}

/// Residuals of the second-order system for `R_{n,k}` (entries `pde_r[k]`);
/// for `N = 1` also the ODE in `t` (`pde_r_n1`) and the Painlevé V form in
/// `y_n = R_{n,1}/(R_{n,1} - 1)` (`pv_y`).
pub fn pde_residual_r(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<ResidualReport> {
    let tol = cfg.tol(PDE_TOL);
    over_lattice(params, n, cfg, StencilPlan::hessian(params.len()), |s| {
        let c = s.center();
        let p = c.params();
        let prec = c.precision_bits();
        let dim = p.len();
        let mut r = ResidualReport::new();
        let alpha = p.alpha();
        let lam_sum = p.lambda_sum();
        let big: Vec<Float> = (0..dim).map(|k| c.big_r(n, k)).collect();
        let d: Vec<Float> = (0..dim).map(|k| s.delta(|x: &System| x.big_r(n, k))).collect::<Result<_>>()?;
        let sum_big = num::sum(prec, &big);
        let sum_d = num::sum(prec, &d);
        let mut tr = num::zero(prec);
        for k in 0..dim {
            tr += Float::with_val(prec, p.t(k) * &big[k]);
        }
        let two_n_alpha = Float::with_val(prec, alpha + (2 * n) as u64);
        let a_minus = Float::with_val(prec, &two_n_alpha - &tr);
        // Σ_j ((δR_j)^2 - λ_j^2) / (2 R_j) and Σ_j R_j (t_j + Σλ)^2.
        let mut sum_q = num::zero(prec);
        let mut sum_sq = num::zero(prec);
        let mut q = vec![num::zero(prec); dim];
        for j in 0..dim {
            if !p.lambda(j).is_zero() {
                let num_ = Float::with_val(prec, d[j].square_ref()) - Float::with_val(prec, p.lambda(j).square_ref());
                q[j] = num_ / Float::with_val(prec, &big[j] * 2);
            }
            sum_q += &q[j];
            let tl = Float::with_val(prec, p.t(j) + &lam_sum);
            sum_sq += Float::with_val(prec, tl.square_ref()) * &big[j];
        }
        let den = Float::with_val(prec, &sum_big - 1) * 2;
        let inner = Float::with_val(prec, &sum_d - Float::with_val(prec, &lam_sum * &sum_big)) + &lam_sum;
        let last_bracket = Float::with_val(prec, inner.square_ref()) - Float::with_val(prec, alpha.square_ref());

        for k in 0..dim {
            if p.lambda(k).is_zero() {
                r.skip(format!("pde_r[{}]", k + 1), "lambda_k = 0: R_{n,k} vanishes identically");
                continue;
            }
            let rk = &big[k];
            let lhs = s.delta2(|x: &System| x.big_r(n, k))?;
            let tk = p.t(k);
            let tl = Float::with_val(prec, tk + &lam_sum);
            let terms = [
                lhs,
                -Float::with_val(prec, tk * rk),
                Float::with_val(prec, rk * &tr),
                -q[k].clone(),
                Float::with_val(prec, rk * &sum_q),
                -(Float::with_val(prec, tl.square_ref()) - &sum_sq) * rk / 2,
                -(Float::with_val(prec, rk * &sum_d) * &lam_sum),
                -(Float::with_val(prec, &a_minus * tk) * rk),
                Float::with_val(prec, rk * &a_minus) * &tr,
                Float::with_val(prec, -Float::with_val(prec, rk * &last_bracket) / &den),
            ];
            r.record_terms(format!("pde_r[{}]", k + 1), &terms, tol);
        }

        if dim == 1 && !p.lambda(0).is_zero() {
            let t = p.t(0);
            let lam = p.lambda(0);
            let rr = &big[0];
            let d1 = s.d1(0, |x: &System| x.big_r(n, 0))?;
            let d2 = s.d2(0, 0, |x: &System| x.big_r(n, 0))?;
            let one_m = Float::with_val(prec, 1 - rr);
            let tr1 = Float::with_val(prec, t * &d1);
            let lam2 = Float::with_val(prec, lam.square_ref());
            let tlam = Float::with_val(prec, t + lam);
            let tmp = Float::with_val(prec, &tr1 - Float::with_val(prec, lam * rr)) + lam;
            let terms = [
                Float::with_val(prec, t.square_ref()) * &d2 + &tr1,
                -Float::with_val(prec, t * rr),
                Float::with_val(prec, t * rr) * rr,
                -(Float::with_val(prec, tr1.square_ref()) - &lam2) * &one_m / Float::with_val(prec, rr * 2),
                -(Float::with_val(prec, tlam.square_ref()) * rr * &one_m) / 2,
                -(Float::with_val(prec, &two_n_alpha - Float::with_val(prec, t * rr)) * t * rr * &one_m),
                -(Float::with_val(prec, lam * t) * rr * &d1),
                -(Float::with_val(prec, tmp.square_ref()) - Float::with_val(prec, alpha.square_ref())) * rr
                    / (Float::with_val(prec, rr - 1) * 2),
            ];
            r.record_terms("pde_r_n1", &terms, tol);

            let yf = |x: &System| {
                let v = x.big_r(n, 0);
                Float::with_val(v.prec(), &v / Float::with_val(v.prec(), &v - 1))
            };
            let y = yf(c);
            let y1 = s.d1(0, yf)?;
            let y2 = s.d2(0, 0, yf)?;
            let ym1 = Float::with_val(prec, &y - 1);
            let coeff = Float::with_val(prec, 1 / Float::with_val(prec, &y * 2)) + Float::with_val(prec, 1 / &ym1);
            let bracket = Float::with_val(prec, alpha.square_ref()) * &y / 2 - Float::with_val(prec, &lam2 / &y) / 2;
            let t2 = Float::with_val(prec, t.square_ref());
            let c3 = Float::with_val(prec, &two_n_alpha + 1) + lam;
            let terms = [
                y2,
                -(coeff * Float::with_val(prec, y1.square_ref())),
                Float::with_val(prec, &y1 / t),
                -Float::with_val(prec, Float::with_val(prec, ym1.square_ref()) / &t2 * bracket),
                -(c3 * &y / t),
                Float::with_val(prec, &y * Float::with_val(prec, &y + 1)) / (ym1 * 2),
            ];
            r.record_terms("pv_y", &terms, tol);
        }
        Ok(r)
    })
}

/// `σ_n` and its `t`-derivatives at the shifts of `params`.
pub fn sigma_jet(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<SigmaJet> {
    cfg.fd.validate(params.precision_bits())?;
    let rule = rule_for(params, n + 1, &cfg.quadrature)?;
    let s = system_sampler(params, n + 1, &cfg.fd, &StencilPlan::hessian(params.len()), &rule)?;
    SigmaJet::from_sampler(&s, n)
}

/// `β_n` expressed through `σ_n`: `-σ + Σ t_k ∂_kσ + n(n + α + Σλ)`.
pub fn beta_from_jet(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize) -> Float {
    jet.delta(t) - &jet.value + crate::recurrences::sigma_offset(params, n)
}

/// `Δ_k = E_k^2 + 4 β ∂_kσ (∂_kσ + λ_k)`.
pub fn discriminant(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize, k: usize) -> Float {
    let prec = jet.value.prec();
    let b = beta_from_jet(jet, params, t, n);
    let e = jet.e(t, k);
    let g = &jet.grad[k];
    let tail = Float::with_val(prec, g + params.lambda(k)) * g * b * 4;
    Float::with_val(prec, e.square_ref()) + tail
}

/// `R_{n,k} = (Σ_j t_j ∂_j∂_kσ + sign · √Δ_k) / (2β_n)`, the root of
/// `β R^2 + δr R - r(r - λ) = 0` with `δr_{n,k} = -Σ_j t_j ∂_j∂_kσ`.
pub fn big_r_from_jet(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize, k: usize, sign: i32) -> Float {
    let root = discriminant(jet, params, t, n, k).sqrt();
    let b = beta_from_jet(jet, params, t, n);
    (jet.e(t, k) + root * sign) / (b * 2)
}

/// The `σ_n` equation written as a list of terms summing to zero, for branch
/// signs `eps[k]` of `R_{n,k} + R_{n-1,k}`.
pub fn sigma_pde_terms(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize, eps: &[i32]) -> Vec<Float> {
    let prec = jet.value.prec();
    let b = beta_from_jet(jet, params, t, n);
    let mut signed_roots = num::zero(prec);
    let mut sum_e = num::zero(prec);
    for k in 0..params.len() {
        let root = discriminant(jet, params, t, n, k).sqrt();
        signed_roots += root * eps[k];
        sum_e += jet.e(t, k);
    }
    let sum_g = num::sum(prec, &jet.grad);
    let nf = num::int(prec, n as i64);
    let first = Float::with_val(prec, &b * 2) - signed_roots;
    let second = Float::with_val(prec, &nf + params.alpha()) - &sum_g;
    let third = Float::with_val(prec, &nf - &sum_g);
    let middle: Float = b * 4 * second * third;
    vec![Float::with_val(prec, first.square_ref()), -middle, -(sum_e.square())]
}

/// Terms of the `N = 2` reduction solved for `σ_n`, valid for all `λ_1, λ_2`:
/// `σ = -2σ_1σ_2 + Σ (2n+α+t_k+λ_k) σ_k + n(λ_1+λ_2) - Σ ε_k √Δ_k
///      - (E_1 E_2 - ε_1 ε_2 √(Δ_1 Δ_2)) / (2β)`.
pub fn sigma_pde_n2_terms(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize, eps: &[i32]) -> Vec<Float> {
    let prec = jet.value.prec();
    let b = beta_from_jet(jet, params, t, n);
    let d: Vec<Float> = (0..2).map(|k| discriminant(jet, params, t, n, k)).collect();
    let e: Vec<Float> = (0..2).map(|k| jet.e(t, k)).collect();
    let g = &jet.grad;
    let nf = num::int(prec, n as i64);
    let base = Float::with_val(prec, &nf * 2) + params.alpha();
    let coef = |k: usize| Float::with_val(prec, &base + &t[k]) + params.lambda(k);
    let roots: Vec<Float> = d.iter().map(|x| Float::with_val(prec, x.sqrt_ref())).collect();
    let cross = Float::with_val(prec, &e[0] * &e[1])
        - Float::with_val(prec, &roots[0] * &roots[1]) * (eps[0] * eps[1]);
    vec![
        jet.value.clone(),
        Float::with_val(prec, &g[0] * &g[1]) * 2,
        -(coef(0) * &g[0]),
        -(coef(1) * &g[1]),
        -(Float::with_val(prec, params.lambda(0) + params.lambda(1)) * &nf),
        Float::with_val(prec, &roots[0] * eps[0]) + Float::with_val(prec, &roots[1] * eps[1]),
        cross / (b * 2),
    ]
}

/// Terms of the `N = 2` reduction in the form stated for `λ_2 = -λ_1` with
/// opposite branches: `± (√Δ_1 - √Δ_2)` with `±` chosen as `-ε_1`, and
/// `n(n + α)` in the denominator.
pub fn sigma_pde_n2_symmetric_terms(jet: &SigmaJet, params: &WeightParams, t: &[Float], n: usize, eps: &[i32]) -> Vec<Float> {
    let prec = jet.value.prec();
    let d: Vec<Float> = (0..2).map(|k| discriminant(jet, params, t, n, k)).collect();
    let e: Vec<Float> = (0..2).map(|k| jet.e(t, k)).collect();
    let g = &jet.grad;
    let nf = num::int(prec, n as i64);
    let base = Float::with_val(prec, &nf * 2) + params.alpha();
    let coef = |k: usize| Float::with_val(prec, &base + &t[k]) + params.lambda(k);
    let roots: Vec<Float> = d.iter().map(|x| Float::with_val(prec, x.sqrt_ref())).collect();
    let den = (jet.delta(t) - &jet.value + Float::with_val(prec, &nf + params.alpha()) * &nf) * 2;
    let num_ = Float::with_val(prec, &e[0] * &e[1]) + Float::with_val(prec, &roots[0] * &roots[1]);
    vec![
        jet.value.clone(),
        Float::with_val(prec, &g[0] * &g[1]) * 2,
        -(coef(0) * &g[0]),
        -(coef(1) * &g[1]),
        Float::with_val(prec, &roots[0] - &roots[1]) * eps[0],
        num_ / den,
    ]
}

/// Residuals of the `σ_n` equation and the identities feeding it:
/// `r_{n,k} = -∂_kσ` (`r_sigma`), `β_n` through `σ` (`beta_sigma`), the root
/// formula for `R_{n,k}` with the branch sign of `R_{n,k} + R_{n-1,k}`
/// (`R_sigma`, with the wrong branch's failure margin in `sign_margin`), the
/// quadratic `β R^2 + δr R - r(r - λ) = 0` (`qae`), `∂_j∂_kσ = -∂_j r_{n,k}`
/// (`hess_r`), the equation itself (`sigma_pde`) and its `N = 1`, `N = 2`
/// reductions.
pub fn sigma_pde_residual(params: &WeightParams, n: usize, cfg: &CalculusConfig) -> Result<ResidualReport> {
    let dim = params.len();
    let tol = cfg.tol(if dim == 1 { SIGMA_PDE_TOL } else { SIGMA_PDE_MULTI_TOL });
    let tol1 = cfg.tol(FIRST_ORDER_TOL);
    over_lattice(params, n, cfg, StencilPlan::hessian(dim), |s| {
        let c = s.center();
        let p = c.params();
        let prec = c.precision_bits();
        let t = s.t().to_vec();
        let jet = SigmaJet::from_sampler(s, n)?;
        let mut r = ResidualReport::new();
        let b = beta_from_jet(&jet, p, &t, n);
        r.record_pair("beta_sigma", &c.beta(n), &b, tol1);

        let mut eps = vec![0i32; dim];
        for k in 0..dim {
            let i = k + 1;
            r.record_pair(format!("r_sigma[{i}]"), &c.small_r(n, k), &(-jet.grad[k].clone()), tol1);
            let sum = Float::with_val(prec, c.big_r(n, k) + c.big_r(n - 1, k));
            let branch = |sign: i32| big_r_from_jet(&jet, p, &t, n, k, sign);
            if Float::with_val(prec, sum.abs_ref()) < SIGN_GUARD {
                for (sign, tag) in [(1, "+"), (-1, "-")] {
                    let name = format!("R_sigma[{i}]{tag}");
                    r.record_pair(&name, &c.big_r(n, k), &branch(sign), tol);
                    r.annotate(&name, "R_{n,k} + R_{n-1,k} vanishes: branch undetermined");
                }
                continue;
            }
            eps[k] = num::signum(&sum);
            r.record_pair(format!("R_sigma[{i}]"), &c.big_r(n, k), &branch(eps[k]), tol);
            let wrong = Float::with_val(prec, c.big_r(n, k) - branch(-eps[k])).abs();
            r.record_exceeds(format!("sign_margin[{i}]"), &wrong, 1e3 * tol);

            let big = c.big_r(n, k);
            let small = c.small_r(n, k);
            let d_small = s.delta(|x: &System| x.small_r(n, k))?;
            let terms = [
                Float::with_val(prec, big.square_ref()) * c.beta(n),
                d_small * &big,
                -quadratic(&small, p.lambda(k)),
            ];
            r.record_terms(format!("qae[{i}]"), &terms, tol1);
            for j in 0..dim {
                let dr = s.d1(j, |x: &System| x.small_r(n, k))?;
                r.record_pair(format!("hess_r[{},{i}]", j + 1), &jet.hess[j][k], &(-dr), 10.0 * tol);
            }
        }
        if eps.contains(&0) {
            r.skip("sigma_pde", "a branch sign is undetermined");
            return Ok(r);
        }
        r.record_terms("sigma_pde", &sigma_pde_terms(&jet, p, &t, n, &eps), tol);

        if dim == 1 {
            let lam = p.lambda(0);
            let g1 = &jet.grad[0];
            let g2 = &jet.hess[0][0];
            let tt = &t[0];
            let nf = num::int(prec, n as i64);
            let tg = Float::with_val(prec, tt * g1);
            let b1 = Float::with_val(prec, &tg - &jet.value) + crate::recurrences::sigma_offset(p, n);
            let coef = Float::with_val(prec, &nf * 2) + p.alpha() + lam;
            let lhs = Float::with_val(prec, &tg - &jet.value) + Float::with_val(prec, &nf * lam) + coef * g1;
            let tg2 = Float::with_val(prec, tt * g2);
            let terms = [
                Float::with_val(prec, lhs.square_ref()),
                -Float::with_val(prec, tg2.square_ref()),
                -Float::with_val(prec, b1 * Float::with_val(prec, g1 + lam) * g1 * 4),
            ];
            r.record_terms("sigma_pde_n1", &terms, tol);

            let h = Float::with_val(prec, &jet.value - Float::with_val(prec, &nf * lam));
            let c1 = Float::with_val(prec, lam - Float::with_val(prec, &nf * 2)) - p.alpha();
            let inner: Float = Float::with_val(prec, &h - &tg) + Float::with_val(prec, g1.square_ref()) * 2 + c1 * g1;
            let prod = Float::with_val(prec, g1 * 4)
                * Float::with_val(prec, lam + g1)
                * Float::with_val(prec, g1 - &nf)
                * (Float::with_val(prec, g1 - &nf) - p.alpha());
            let terms = [Float::with_val(prec, tg2.square_ref()), -Float::with_val(prec, inner.square_ref()), prod];
            r.record_terms("sigma_pv_h", &terms, tol);
        }
        if dim == 2 {
            r.record_terms("sigma_pde_n2", &sigma_pde_n2_terms(&jet, p, &t, n, &eps), tol);
            let symmetric = Float::with_val(prec, p.lambda(0) + p.lambda(1)).is_zero() && eps[0] == -eps[1];
            if symmetric {
                r.record_terms("sigma_pde_n2_symmetric", &sigma_pde_n2_symmetric_terms(&jet, p, &t, n, &eps), tol);
            } else {
                r.skip("sigma_pde_n2_symmetric", "form applies to lambda_2 = -lambda_1 with opposite branches");
            }
        }
        Ok(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Preset;

    const PREC: u32 = 400;

    #[test]
    fn quadratic_is_exact_for_order_two() {
        let cfg = FDConfig { step: 1e-3, order: 2, richardson: false };
        let t = [Float::with_val(128, 1.5)];
        let d = partial(|t| Ok(Float::with_val(128, t[0].square_ref())), &t, 0, &cfg).unwrap();
        assert!((d - 3.0f64).abs() < 1e-30);
    }

    #[test]
    fn mixed_partial_of_product() {
        let cfg = FDConfig { step: 1e-5, order: 4, richardson: false };
        let t = [Float::with_val(200, 0.7), Float::with_val(200, 1.3)];
        let f = |t: &[Float]| Ok(Float::with_val(200, &t[0] * &t[1]).exp());
        let d = second_partial(f, &t, 0, 1, &cfg).unwrap();
        let x = Float::with_val(200, &t[0] * &t[1]);
        let exact = Float::with_val(200, x.exp_ref()) * (1 + x);
        let err = Float::with_val(200, d - exact).abs();
        assert!(err < 1e-18, "{err}");
    }

    #[test]
    fn richardson_raises_accuracy() {
        let cfg = FDConfig { step: 1e-3, order: 2, richardson: false };
        let rcfg = FDConfig { richardson: true, ..cfg };
        let t = [Float::with_val(128, 1)];
        let f = |t: &[Float]| Ok(t[0].clone().sin());
        let exact = Float::with_val(128, 1).cos();
        let plain = Float::with_val(128, partial(f, &t, 0, &cfg).unwrap() - &exact).abs();
        let rich = Float::with_val(128, partial(f, &t, 0, &rcfg).unwrap() - &exact).abs();
        assert!(rich < plain * 1e-4);
    }

    #[test]
    fn step_window() {
        assert!(FDConfig::default().validate(PREC).is_ok());
        assert!(FDConfig { step: 0.1, ..FDConfig::default() }.validate(PREC).is_err());
        assert!(FDConfig { step: 1e-60, ..FDConfig::default() }.validate(PREC).is_err());
        assert!(FDConfig { order: 3, ..FDConfig::default() }.validate(PREC).is_err());
    }

    #[test]
    fn lattice_is_a_tensor_grid() {
        let p = Preset::N2.params(128).unwrap();
        let l = lattice(&p, 3, 0.1);
        assert_eq!(l.len(), 9);
        assert_eq!(l[4], p.shifts());
        assert_eq!(lattice(&p, 1, 0.1).len(), 1);
    }

    #[test]
    fn log_hankel_derivative_is_sum_of_big_r() {
        let p = Preset::N1.params(PREC).unwrap();
        let n = 3;
        let cfg = CalculusConfig::single_point();
        let rule = rule_for(&p, n, &cfg.quadrature).unwrap();
        let f = |t: &[Float]| -> Result<Float> {
            let sys = System::build_with_rule(&p.with_shifts(t)?, n, &rule)?;
            sys.table().ln_hankel_det(n)
        };
        let d = partial(f, &p.shifts(), 0, &cfg.fd).unwrap();
        let sys = System::build_with_rule(&p, n, &rule).unwrap();
        let sum: Float = num::sum(PREC, (0..n).map(|j| sys.aux().big_r(j)[0].clone()).collect::<Vec<_>>().iter());
        assert!(Float::with_val(PREC, d - sum).abs() < 1e-15);
    }

    #[test]
    fn classical_weight_has_trivial_residuals() {
        let p = WeightParams::from_decimals("1", &[("1", "0")], PREC).unwrap();
        let cfg = CalculusConfig::single_point();
        let dr = differential_relation_residuals(&p, 2, &cfg).unwrap();
        assert!(dr.all_pass(), "{:?}", dr.failures());
        assert!(dr.worst_relative() < 1e-30);
        let te = toda_residuals(&p, 2, &cfg).unwrap();
        assert!(te.all_pass() && te.worst_relative() < 1e-30);
        let re = riccati_residuals(&p, 2, &cfg).unwrap();
        assert!(re.all_pass() && re.worst_relative() < 1e-30);
    }

    #[test]
    fn first_order_identities_n1() {
        let p = Preset::N1.params(PREC).unwrap();
        let cfg = CalculusConfig::single_point();
        for r in [
            differential_relation_residuals(&p, 3, &cfg).unwrap(),
            toda_residuals(&p, 3, &cfg).unwrap(),
            riccati_residuals(&p, 3, &cfg).unwrap(),
        ] {
            assert!(r.all_pass(), "{:?}", r.failures());
            assert!(r.worst_relative() < 1e-20, "{}", r.worst_relative());
        }
    }

    #[test]
    fn second_order_equations_n1() {
        let p = Preset::N1.params(PREC).unwrap();
        let cfg = CalculusConfig::single_point();
        let r = pde_residual_r(&p, 2, &cfg).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures());
        assert!(r.get("pv_y").is_some() && r.get("pde_r_n1").is_some());
        let r = sigma_pde_residual(&p, 3, &cfg).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures());
        for name in ["sigma_pde", "sigma_pde_n1", "sigma_pv_h", "sign_margin[1]", "qae[1]"] {
            assert!(r.get(name).is_some(), "{name}");
        }
    }

    #[test]
    fn root_formula_needs_plus_hessian_term() {
        let p = Preset::N1.params(PREC).unwrap();
        let n = 3;
        let jet = sigma_jet(&p, n, &CalculusConfig::single_point()).unwrap();
        let t = p.shifts();
        let sys = System::build(&p, n + 1, &QuadratureSettings::default()).unwrap();
        let exact = sys.big_r(n, 0);
        let sign = num::signum(&Float::with_val(PREC, &exact + sys.big_r(n - 1, 0)));
        let ours = big_r_from_jet(&jet, &p, &t, n, 0, sign);
        assert!(Float::with_val(PREC, &ours - &exact).abs() < 1e-20);
        // With the Hessian term entering as -E_k the root misses R_{n,k}.
        let b = beta_from_jet(&jet, &p, &t, n);
        let root = discriminant(&jet, &p, &t, n, 0).sqrt();
        let minus_e = (root * sign - jet.e(&t, 0)) / (b * 2);
        assert!(Float::with_val(PREC, &minus_e - &exact).abs() > 1e-3);
    }

    #[test]
    fn degree_zero_is_rejected() {
        let p = Preset::N1.params(PREC).unwrap();
        assert!(toda_residuals(&p, 0, &CalculusConfig::single_point()).is_err());
    }
}

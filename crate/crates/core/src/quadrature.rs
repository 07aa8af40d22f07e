//! Double-exponential quadrature over finite, semi-infinite and infinite intervals.
//!
//! The integrand is pulled back to the whole real `u` axis by a variable
//! transform and integrated with the trapezoid rule. Each level halves the step
//! and reuses all previous nodes. Finite ends use the tanh-sinh map, which
//! clusters nodes double-exponentially and tolerates integrable endpoint
//! singularities. Infinite ends use either the exp-sinh map or, when the
//! integrand is known to decay exponentially, the map `x = a + exp(u - exp(-u))`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{Bound, EndpointBehavior, EndpointHints, Interval, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of step halvings allowed; level `l` uses step `2^-l` on the `u` axis.
    pub max_level: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_level: 12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("quadrature tolerances must be positive".into()));
        }
        if self.max_level < MIN_LEVEL {
            return Err(Error::Config(format!(
                "max_level must be at least {MIN_LEVEL}, got {}",
                self.max_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub levels_used: u32,
}

/// Result of integrating several integrands on one shared node set.
#[derive(Debug, Clone, PartialEq)]
pub struct VecIntegral {
    pub values: Vec<f64>,
    pub error_estimates: Vec<f64>,
    /// Trapezoid approximation of `∫|f_i|`, the scale against which roundoff is judged.
    pub abs_integrals: Vec<f64>,
    pub converged: bool,
    pub levels_used: u32,
}

impl VecIntegral {
    pub fn component(&self, i: usize) -> IntegralResult {
        IntegralResult {
            value: self.values[i],
            error_estimate: self.error_estimates[i],
            converged: self.converged,
            levels_used: self.levels_used,
        }
    }
}

const MIN_LEVEL: u32 = 3;
const WALK_STEP: f64 = 0.125;
const U_MAX: f64 = 7.0;
const NEGLIGIBLE: f64 = 1e-18;
/// Differences below this multiple of `eps * ∫|f|` are indistinguishable from roundoff.
const ROUNDOFF_FACTOR: f64 = 64.0;

#[derive(Debug, Clone, Copy)]
enum Transform {
    TanhSinh {
        a: f64,
        b: f64,
    },
    /// `(a, +inf)` with `x = a + exp(π/2 sinh u)`
    ExpSinhUp {
        a: f64,
    },
    /// `(-inf, b)` mirrored
    ExpSinhDown {
        b: f64,
    },
    /// `(a, +inf)` with `x = a + exp(u - exp(-u))`
    ExpDecayUp {
        a: f64,
    },
    ExpDecayDown {
        b: f64,
    },
    SinhSinh,
}

impl Transform {
    fn choose(interval: &Interval, hints: EndpointHints) -> Self {
        match (interval.lower(), interval.upper()) {
            (Bound::Finite(a), Bound::Finite(b)) => Transform::TanhSinh { a, b },
            (Bound::Finite(a), _) => {
                if hints.upper == EndpointBehavior::ExponentialDecay {
                    Transform::ExpDecayUp { a }
                } else {
                    Transform::ExpSinhUp { a }
                }
            }
            (_, Bound::Finite(b)) => {
                if hints.lower == EndpointBehavior::ExponentialDecay {
                    Transform::ExpDecayDown { b }
                } else {
                    Transform::ExpSinhDown { b }
                }
            }
            _ => Transform::SinhSinh,
        }
    }

    /// Node and Jacobian `dx/du`; `None` once the node is no longer strictly
    /// inside the interval or no longer finite.
    fn map(&self, u: f64) -> Option<(f64, f64)> {
        let (x, jac, inside) = match *self {
            Transform::TanhSinh { a, b } => {
                let s = FRAC_PI_2 * u.sinh();
                let e = (-2.0 * s.abs()).exp();
                // distance to the nearer end, without cancellation
                let dist = (b - a) * e / (1.0 + e);
                let x = if u < 0.0 { a + dist } else { b - dist };
                let jac = (b - a) * FRAC_PI_2 * u.cosh() * 2.0 * e / ((1.0 + e) * (1.0 + e));
                (x, jac, x > a && x < b)
            }
            Transform::ExpSinhUp { a } => {
                let y = (FRAC_PI_2 * u.sinh()).exp();
                let x = a + y;
                (x, y * FRAC_PI_2 * u.cosh(), x > a)
            }
            Transform::ExpSinhDown { b } => {
                let y = (FRAC_PI_2 * u.sinh()).exp();
                let x = b - y;
                (x, y * FRAC_PI_2 * u.cosh(), x < b)
            }
            Transform::ExpDecayUp { a } => {
                let y = (u - (-u).exp()).exp();
                let x = a + y;
                (x, y * (1.0 + (-u).exp()), x > a)
            }
            Transform::ExpDecayDown { b } => {
                let y = (u - (-u).exp()).exp();
                let x = b - y;
                (x, y * (1.0 + (-u).exp()), x < b)
            }
            Transform::SinhSinh => {
                let s = FRAC_PI_2 * u.sinh();
                (s.sinh(), s.cosh() * FRAC_PI_2 * u.cosh(), true)
            }
        };
        (inside && x.is_finite() && jac.is_finite() && jac > 0.0).then_some((x, jac))
    }
}

struct Evaluator<F> {
    f: F,
    transform: Transform,
    buf: Vec<f64>,
}

impl<F: Fn(f64, &mut [f64])> Evaluator<F> {
    /// Writes `f(x(u)) * x'(u)` into `self.buf`; `Ok(false)` when `u` is outside the usable range.
    fn terms(&mut self, u: f64) -> Result<bool> {
        let Some((x, jac)) = self.transform.map(u) else {
            return Ok(false);
        };
        (self.f)(x, &mut self.buf);
        for v in self.buf.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { x, value: *v });
            }
            *v *= jac;
        }
        Ok(true)
    }

    /// Walks outward from `u = 0` until the terms are negligible or the map
    /// degenerates; returns the last usable `u`.
    fn truncation(&mut self, direction: f64, peak: &[f64]) -> Result<f64> {
        let mut peak = peak.to_vec();
        let mut last = 0.0;
        let mut quiet = 0;
        let mut k = 1.0;
        while k * WALK_STEP <= U_MAX {
            let u = direction * k * WALK_STEP;
            if !self.terms(u)? {
                break;
            }
            last = u;
            let mut small = true;
            for (p, v) in peak.iter_mut().zip(&self.buf) {
                *p = p.max(v.abs());
                if v.abs() > NEGLIGIBLE * *p {
                    small = false;
                }
            }
            quiet = if small { quiet + 1 } else { 0 };
            if quiet >= 3 {
                break;
            }
            k += 1.0;
        }
        Ok(last)
    }
}

/// Integrates `dim` integrands over `interval` on a shared node set.
///
/// `f(x, out)` writes the `dim` integrand values at `x` into `out`. All
/// components must meet the tolerance for the result to be `converged`.
pub fn integrate_vec<F>(
    dim: usize,
    f: F,
    interval: &Interval,
    hints: EndpointHints,
    cfg: &QuadratureConfig,
) -> Result<VecIntegral>
where
    F: Fn(f64, &mut [f64]),
{
    cfg.validate()?;
    let mut ev = Evaluator {
        f,
        transform: Transform::choose(interval, hints),
        buf: vec![0.0; dim],
    };

    if !ev.terms(0.0)? {
        return Err(Error::Config(format!("cannot place nodes on {interval}")));
    }
    let center: Vec<f64> = ev.buf.clone();
    let peak: Vec<f64> = center.iter().map(|v| v.abs()).collect();
    let hi = ev.truncation(1.0, &peak)?;
    let lo = ev.truncation(-1.0, &peak)?;

    let mut sum = vec![0.0; dim];
    let mut abs_sum = vec![0.0; dim];
    let mut prev = vec![0.0; dim];
    let mut err = vec![f64::INFINITY; dim];
    let mut level = 0;
    loop {
        let h = (0.5f64).powi(level as i32);
        let (k_lo, k_hi) = ((lo / h).ceil() as i64, (hi / h).floor() as i64);
        let mut new = vec![0.0; dim];
        let mut new_abs = vec![0.0; dim];
        for k in k_lo..=k_hi {
            if level > 0 && k % 2 == 0 {
                continue;
            }
            let u = k as f64 * h;
            if k == 0 {
                ev.buf.copy_from_slice(&center);
            } else if !ev.terms(u)? {
                // maps are monotone, so this only triggers at a rounding boundary
                continue;
            }
            for i in 0..dim {
                new[i] += ev.buf[i];
                new_abs[i] += ev.buf[i].abs();
            }
        }
        for i in 0..dim {
            if level == 0 {
                sum[i] = h * new[i];
                abs_sum[i] = h * new_abs[i];
            } else {
                sum[i] = 0.5 * sum[i] + h * new[i];
                abs_sum[i] = 0.5 * abs_sum[i] + h * new_abs[i];
                err[i] = (sum[i] - prev[i]).abs();
            }
        }
        if level >= MIN_LEVEL {
            let done = (0..dim).all(|i| {
                let tol = (cfg.rel_tol * sum[i].abs())
                    .max(cfg.abs_tol)
                    .max(ROUNDOFF_FACTOR * f64::EPSILON * abs_sum[i]);
                err[i] <= tol
            });
            if done || level >= cfg.max_level {
                return Ok(VecIntegral {
                    values: sum,
                    error_estimates: err,
                    abs_integrals: abs_sum,
                    converged: done,
                    levels_used: level,
                });
            }
        }
        prev.copy_from_slice(&sum);
        level += 1;
    }
}

/// Integrates a scalar function. Non-convergence is reported through
/// `converged = false`, never by silently returning a value.
pub fn integrate<F>(f: F, interval: &Interval, hints: EndpointHints, cfg: &QuadratureConfig) -> Result<IntegralResult>
where
    F: Fn(f64) -> f64,
{
    let r = integrate_vec(1, |x, out| out[0] = f(x), interval, hints, cfg)?;
    Ok(r.component(0))
}

pub(crate) fn require_converged(r: &VecIntegral) -> Result<()> {
    if r.converged {
        return Ok(());
    }
    let worst = (0..r.values.len())
        .max_by(|&a, &b| r.error_estimates[a].total_cmp(&r.error_estimates[b]))
        .unwrap_or(0);
    Err(Error::NotConverged {
        value: r.values.get(worst).copied().unwrap_or(0.0),
        error_estimate: r.error_estimates.get(worst).copied().unwrap_or(0.0),
        levels: r.levels_used,
    })
}

/// Moments `c_0 .. c_{count-1}` of `w(·; t)` on one shared node set.
pub fn moments(w: &dyn Weight, count: usize, t: f64, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    w.check_parameter(t)?;
    let support = w.support(t);
    let r = integrate_vec(
        count,
        |x, out| {
            let mut p = w.eval(x, t);
            for o in out.iter_mut() {
                *o = p;
                p *= x;
            }
        },
        &support,
        w.hints(t),
        cfg,
    )?;
    require_converged(&r)?;
    Ok(r.values)
}

/// `c_j(t) = ∫ x^j ω(x; t) dx`
pub fn moment(w: &dyn Weight, j: usize, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    w.check_parameter(t)?;
    let support = w.support(t);
    let r = integrate_vec(
        1,
        |x, out| out[0] = x.powi(j as i32) * w.eval(x, t),
        &support,
        w.hints(t),
        cfg,
    )?;
    require_converged(&r)?;
    Ok(r.values[0])
}

/// `n` strictly increasing interior points of `interval`, equally spaced on
/// the `u` axis of the double-exponential map over `[-u_max, u_max]`.
///
/// Points crowd towards finite ends and spread geometrically towards infinite ones.
pub fn sample_points(interval: &Interval, n: usize, u_max: f64) -> Vec<f64> {
    let tr = Transform::choose(interval, EndpointHints::default());
    let mut pts: Vec<f64> = Vec::with_capacity(n);
    for s in 0..n {
        let u = if n == 1 {
            0.0
        } else {
            -u_max + 2.0 * u_max * s as f64 / (n - 1) as f64
        };
        if let Some((x, _)) = tr.map(u) {
            pts.push(x);
        }
    }
    // maps toward -inf run backwards in u
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

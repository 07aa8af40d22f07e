//! Parametrized weight functions `ω(x; t)` and the catalog of concrete families.
//!
//! A weight is a pure function of `(x, t)`. Catalog weights carry a fixed set
//! of named parameters; at most one of them is designated as the varying
//! parameter and takes the value `t`, all others stay frozen.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// One end of an [`Interval`]. Infinite ends are explicit variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    NegInfinity,
    Finite(f64),
    PosInfinity,
}

impl Bound {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    fn as_f64(self) -> f64 {
        match self {
            Bound::NegInfinity => f64::NEG_INFINITY,
            Bound::Finite(v) => v,
            Bound::PosInfinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::NegInfinity => write!(f, "-inf"),
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::PosInfinity => write!(f, "+inf"),
        }
    }
}

/// Open real interval `(lower, upper)` with possibly infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: Bound,
    upper: Bound,
}

impl Interval {
    pub fn new(lower: Bound, upper: Bound) -> Result<Self> {
        let bad = |why: &str| Err(Error::Config(format!("interval ({lower}, {upper}): {why}")));
        if matches!(lower, Bound::PosInfinity) || matches!(upper, Bound::NegInfinity) {
            return bad("infinite end on the wrong side");
        }
        for b in [lower, upper] {
            if let Bound::Finite(v) = b {
                if !v.is_finite() {
                    return bad("finite end must be a finite number");
                }
            }
        }
        if lower.as_f64() >= upper.as_f64() {
            return bad("lower end must be below upper end");
        }
        Ok(Interval { lower, upper })
    }

    pub fn finite(a: f64, b: f64) -> Result<Self> {
        Self::new(Bound::Finite(a), Bound::Finite(b))
    }

    /// `(a, +inf)`
    pub fn right_of(a: f64) -> Result<Self> {
        Self::new(Bound::Finite(a), Bound::PosInfinity)
    }

    /// `(-inf, b)`
    pub fn left_of(b: f64) -> Result<Self> {
        Self::new(Bound::NegInfinity, Bound::Finite(b))
    }

    pub fn real_line() -> Self {
        Interval {
            lower: Bound::NegInfinity,
            upper: Bound::PosInfinity,
        }
    }

    /// Internal constructor for supports computed from already validated parameters.
    pub(crate) fn unchecked(lower: Bound, upper: Bound) -> Self {
        Interval { lower, upper }
    }

    pub fn lower(&self) -> Bound {
        self.lower
    }

    pub fn upper(&self) -> Bound {
        self.upper
    }

    /// True when `x` lies in the open interval.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower.as_f64() && x < self.upper.as_f64()
    }

    /// A finite interior point: the midpoint when both ends are finite.
    pub fn interior_point(&self) -> f64 {
        match (self.lower, self.upper) {
            (Bound::Finite(a), Bound::Finite(b)) => 0.5 * (a + b),
            (Bound::Finite(a), _) => a + 1.0,
            (_, Bound::Finite(b)) => b - 1.0,
            _ => 0.0,
        }
    }

    pub(crate) fn lower_f64(&self) -> f64 {
        self.lower.as_f64()
    }

    pub(crate) fn upper_f64(&self) -> f64 {
        self.upper.as_f64()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lower, self.upper)
    }
}

/// Local behaviour of the integrand at one end of a support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndpointBehavior {
    IntegrableSingularity,
    Smooth,
    ExponentialDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointHints {
    pub lower: EndpointBehavior,
    pub upper: EndpointBehavior,
}

impl Default for EndpointHints {
    fn default() -> Self {
        EndpointHints {
            lower: EndpointBehavior::Smooth,
            upper: EndpointBehavior::Smooth,
        }
    }
}

/// Rates `a'(t)`, `b'(t)` of the support endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointRates {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// A positive weight `ω(x; t)` on an open support `(a(t), b(t))`.
///
/// Implementations must be pure: every method depends only on its arguments.
/// `eval`, `d_dt` and `d_dx` are not domain-checked; callers evaluate them on
/// the open support only.
pub trait Weight: Send + Sync + fmt::Debug {
    fn support(&self, t: f64) -> Interval;

    fn eval(&self, x: f64, t: f64) -> f64;

    /// `∂ω/∂t`
    fn d_dt(&self, x: f64, t: f64) -> f64;

    /// `∂ω/∂x`
    fn d_dx(&self, x: f64, t: f64) -> f64;

    /// Endpoint rates when the support moves with `t`; `None` for fixed supports.
    fn endpoint_motion(&self, _t: f64) -> Option<EndpointRates> {
        None
    }

    fn hints(&self, _t: f64) -> EndpointHints {
        EndpointHints::default()
    }

    /// Rejects parameter values outside the admissible range at `t`.
    fn check_parameter(&self, _t: f64) -> Result<()> {
        Ok(())
    }

    /// Limit of `ω` at a finite end of the support (may be `0` or `+inf`).
    fn boundary_value(&self, side: Side, t: f64) -> f64 {
        let s = self.support(t);
        let x = match side {
            Side::Lower => s.lower_f64(),
            Side::Upper => s.upper_f64(),
        };
        self.eval(x, t)
    }

    /// `(1/ω) ∂ω/∂t`
    fn log_dt(&self, x: f64, t: f64) -> Result<f64> {
        let w = self.checked_eval(x, t)?;
        Ok(self.d_dt(x, t) / w)
    }

    /// `(1/ω) ∂ω/∂x`
    fn log_dx(&self, x: f64, t: f64) -> Result<f64> {
        let w = self.checked_eval(x, t)?;
        Ok(self.d_dx(x, t) / w)
    }

    #[doc(hidden)]
    fn checked_eval(&self, x: f64, t: f64) -> Result<f64> {
        let support = self.support(t);
        if !support.contains(x) {
            return Err(Error::Domain { x, support });
        }
        let w = self.eval(x, t);
        if w == 0.0 || !w.is_finite() {
            return Err(Error::Underflow { x });
        }
        Ok(w)
    }
}

/// Which support a three-factor generalized Jacobi weight lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `(-a, 0)`
    Left,
    /// `(0, b)`
    Right,
}

/// Closed-form weight families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `e^{-x} x^alpha` on `(0, inf)`.
    Laguerre { alpha: f64 },
    /// `1` on `(lower, upper)`.
    Uniform { lower: f64, upper: f64 },
    /// `(x+a)^{a_k} |x|^{b_k} (b-x)^{c_k}` on `(-a, 0)` or `(0, b)`.
    GeneralizedJacobi3 {
        a: f64,
        b: f64,
        a_k: f64,
        b_k: f64,
        c_k: f64,
        branch: Branch,
    },
    /// `(-1-x)^{a1} e^{b1 x}` on `(-inf, -1)`.
    ShiftedLaguerre { a1: f64, b1: f64 },
    /// `(1+x)^{a2} (-x)^{b2}` on `(-1, 0)`.
    Jacobi01 { a2: f64, b2: f64 },
    /// `e^{-a3 x^3 + b3 x}` on `(0, inf)`.
    CubicExponential { a3: f64, b3: f64 },
}

fn exponent_hint(e: f64) -> EndpointBehavior {
    if e < 0.0 {
        EndpointBehavior::IntegrableSingularity
    } else {
        EndpointBehavior::Smooth
    }
}

fn in_range(name: &str, value: f64, ok: bool, range: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterRange {
            name: name.to_string(),
            value,
            range,
        })
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Laguerre { .. } => "laguerre",
            Family::Uniform { .. } => "uniform",
            Family::GeneralizedJacobi3 { .. } => "generalized_jacobi3",
            Family::ShiftedLaguerre { .. } => "shifted_laguerre",
            Family::Jacobi01 { .. } => "jacobi01",
            Family::CubicExponential { .. } => "cubic_exponential",
        }
    }

    /// Names of the numeric parameters, any of which may be varied.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Family::Laguerre { .. } => &["alpha"],
            Family::Uniform { .. } => &["lower", "upper"],
            Family::GeneralizedJacobi3 { .. } => &["a", "b", "a_k", "b_k", "c_k"],
            Family::ShiftedLaguerre { .. } => &["a1", "b1"],
            Family::Jacobi01 { .. } => &["a2", "b2"],
            Family::CubicExponential { .. } => &["a3", "b3"],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let v = match (self, name) {
            (Family::Laguerre { alpha }, "alpha") => *alpha,
            (Family::Uniform { lower, .. }, "lower") => *lower,
            (Family::Uniform { upper, .. }, "upper") => *upper,
            (Family::GeneralizedJacobi3 { a, .. }, "a") => *a,
            (Family::GeneralizedJacobi3 { b, .. }, "b") => *b,
            (Family::GeneralizedJacobi3 { a_k, .. }, "a_k") => *a_k,
            (Family::GeneralizedJacobi3 { b_k, .. }, "b_k") => *b_k,
            (Family::GeneralizedJacobi3 { c_k, .. }, "c_k") => *c_k,
            (Family::ShiftedLaguerre { a1, .. }, "a1") => *a1,
            (Family::ShiftedLaguerre { b1, .. }, "b1") => *b1,
            (Family::Jacobi01 { a2, .. }, "a2") => *a2,
            (Family::Jacobi01 { b2, .. }, "b2") => *b2,
            (Family::CubicExponential { a3, .. }, "a3") => *a3,
            (Family::CubicExponential { b3, .. }, "b3") => *b3,
            _ => return None,
        };
        Some(v)
    }

    fn set(&mut self, name: &str, value: f64) {
        let slot = match (self, name) {
            (Family::Laguerre { alpha }, "alpha") => alpha,
            (Family::Uniform { lower, .. }, "lower") => lower,
            (Family::Uniform { upper, .. }, "upper") => upper,
            (Family::GeneralizedJacobi3 { a, .. }, "a") => a,
            (Family::GeneralizedJacobi3 { b, .. }, "b") => b,
            (Family::GeneralizedJacobi3 { a_k, .. }, "a_k") => a_k,
            (Family::GeneralizedJacobi3 { b_k, .. }, "b_k") => b_k,
            (Family::GeneralizedJacobi3 { c_k, .. }, "c_k") => c_k,
            (Family::ShiftedLaguerre { a1, .. }, "a1") => a1,
            (Family::ShiftedLaguerre { b1, .. }, "b1") => b1,
            (Family::Jacobi01 { a2, .. }, "a2") => a2,
            (Family::Jacobi01 { b2, .. }, "b2") => b2,
            (Family::CubicExponential { a3, .. }, "a3") => a3,
            (Family::CubicExponential { b3, .. }, "b3") => b3,
            _ => return,
        };
        *slot = value;
    }

    fn validate(&self) -> Result<()> {
        const EXPONENT: &str = "(-1, inf)";
        const POSITIVE: &str = "(0, inf)";
        match *self {
            Family::Laguerre { alpha } => in_range("alpha", alpha, alpha > -1.0, EXPONENT),
            Family::Uniform { lower, upper } => {
                in_range("lower", lower, true, "finite")?;
                in_range("upper", upper, upper > lower, "(lower, inf)")
            }
            Family::GeneralizedJacobi3 {
                a, b, a_k, b_k, c_k, ..
            } => {
                in_range("a", a, a > 0.0, POSITIVE)?;
                in_range("b", b, b > 0.0, POSITIVE)?;
                in_range("a_k", a_k, a_k > -1.0, EXPONENT)?;
                in_range("b_k", b_k, b_k > -1.0, EXPONENT)?;
                in_range("c_k", c_k, c_k > -1.0, EXPONENT)
            }
            Family::ShiftedLaguerre { a1, b1 } => {
                in_range("a1", a1, a1 > -1.0, EXPONENT)?;
                in_range("b1", b1, b1 > 0.0, POSITIVE)
            }
            Family::Jacobi01 { a2, b2 } => {
                in_range("a2", a2, a2 > -1.0, EXPONENT)?;
                in_range("b2", b2, b2 > -1.0, EXPONENT)
            }
            Family::CubicExponential { a3, b3 } => {
                in_range("a3", a3, a3 > 0.0, POSITIVE)?;
                in_range("b3", b3, true, "(-inf, inf)")
            }
        }
    }

    pub fn support(&self) -> Interval {
        use Bound::*;
        match *self {
            Family::Laguerre { .. } | Family::CubicExponential { .. } => Interval::unchecked(Finite(0.0), PosInfinity),
            Family::Uniform { lower, upper } => Interval::unchecked(Finite(lower), Finite(upper)),
            Family::GeneralizedJacobi3 { a, b, branch, .. } => match branch {
                Branch::Left => Interval::unchecked(Finite(-a), Finite(0.0)),
                Branch::Right => Interval::unchecked(Finite(0.0), Finite(b)),
            },
            Family::ShiftedLaguerre { .. } => Interval::unchecked(NegInfinity, Finite(-1.0)),
            Family::Jacobi01 { .. } => Interval::unchecked(Finite(-1.0), Finite(0.0)),
        }
    }

    pub fn hints(&self) -> EndpointHints {
        use EndpointBehavior::*;
        let (lower, upper) = match *self {
            Family::Laguerre { alpha } => (exponent_hint(alpha), ExponentialDecay),
            Family::Uniform { .. } => (Smooth, Smooth),
            Family::GeneralizedJacobi3 {
                a_k, b_k, c_k, branch, ..
            } => match branch {
                Branch::Left => (exponent_hint(a_k), exponent_hint(b_k)),
                Branch::Right => (exponent_hint(b_k), exponent_hint(c_k)),
            },
            Family::ShiftedLaguerre { a1, .. } => (ExponentialDecay, exponent_hint(a1)),
            Family::Jacobi01 { a2, b2 } => (exponent_hint(a2), exponent_hint(b2)),
            Family::CubicExponential { .. } => (Smooth, ExponentialDecay),
        };
        EndpointHints { lower, upper }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Family::Laguerre { alpha } => x.powf(alpha) * (-x).exp(),
            Family::Uniform { .. } => 1.0,
            Family::GeneralizedJacobi3 {
                a, b, a_k, b_k, c_k, ..
            } => (x + a).powf(a_k) * x.abs().powf(b_k) * (b - x).powf(c_k),
            Family::ShiftedLaguerre { a1, b1 } => (-1.0 - x).powf(a1) * (b1 * x).exp(),
            Family::Jacobi01 { a2, b2 } => (1.0 + x).powf(a2) * (-x).powf(b2),
            Family::CubicExponential { a3, b3 } => (-a3 * x * x * x + b3 * x).exp(),
        }
    }

    /// `(1/ω) ∂ω/∂x`
    pub fn log_dx(&self, x: f64) -> f64 {
        match *self {
            Family::Laguerre { alpha } => (alpha - x) / x,
            Family::Uniform { .. } => 0.0,
            Family::GeneralizedJacobi3 {
                a, b, a_k, b_k, c_k, ..
            } => a_k / (x + a) + b_k / x + c_k / (x - b),
            Family::ShiftedLaguerre { a1, b1 } => b1 + a1 / (1.0 + x),
            Family::Jacobi01 { a2, b2 } => a2 / (1.0 + x) + b2 / x,
            Family::CubicExponential { a3, b3 } => -3.0 * a3 * x * x + b3,
        }
    }

    /// `(1/ω) ∂ω/∂p` for the named parameter `p`.
    pub fn log_dparam(&self, name: &str, x: f64) -> f64 {
        match (*self, name) {
            (Family::Laguerre { .. }, "alpha") => x.ln(),
            (Family::GeneralizedJacobi3 { a, a_k, .. }, "a") => a_k / (x + a),
            (Family::GeneralizedJacobi3 { b, c_k, .. }, "b") => c_k / (b - x),
            (Family::GeneralizedJacobi3 { a, .. }, "a_k") => (x + a).ln(),
            (Family::GeneralizedJacobi3 { .. }, "b_k") => x.abs().ln(),
            (Family::GeneralizedJacobi3 { b, .. }, "c_k") => (b - x).ln(),
            (Family::ShiftedLaguerre { .. }, "a1") => (-1.0 - x).ln(),
            (Family::ShiftedLaguerre { .. }, "b1") => x,
            (Family::Jacobi01 { .. }, "a2") => (1.0 + x).ln(),
            (Family::Jacobi01 { .. }, "b2") => (-x).ln(),
            (Family::CubicExponential { .. }, "a3") => -x * x * x,
            (Family::CubicExponential { .. }, "b3") => x,
            // uniform bounds only move the support
            _ => 0.0,
        }
    }

    /// Endpoint rates when parameter `name` is varied, if it moves the support.
    pub fn endpoint_rates(&self, name: &str) -> Option<EndpointRates> {
        match (*self, name) {
            (Family::Uniform { .. }, "lower") => Some(EndpointRates { lower: 1.0, upper: 0.0 }),
            (Family::Uniform { .. }, "upper") => Some(EndpointRates { lower: 0.0, upper: 1.0 }),
            (
                Family::GeneralizedJacobi3 {
                    branch: Branch::Left, ..
                },
                "a",
            ) => Some(EndpointRates {
                lower: -1.0,
                upper: 0.0,
            }),
            (
                Family::GeneralizedJacobi3 {
                    branch: Branch::Right, ..
                },
                "b",
            ) => Some(EndpointRates { lower: 0.0, upper: 1.0 }),
            _ => None,
        }
    }
}

/// A catalog family with an optional varying parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogWeight {
    family: Family,
    vary: Option<&'static str>,
}

impl CatalogWeight {
    /// Builds a weight; every parameter except the varied one is range-checked.
    pub fn new(family: Family, vary: Option<&str>) -> Result<Self> {
        let vary =
            match vary {
                None => None,
                Some(name) => Some(*family.param_names().iter().find(|p| **p == name).ok_or_else(|| {
                    Error::WeightSpec(format!("family `{}` has no parameter `{name}`", family.name()))
                })?),
            };
        // the varied slot is checked per t, so probe with a representative value
        let mut probe = family;
        if let Some(p) = vary {
            let probe_value = match (family, p) {
                (Family::Uniform { upper, .. }, "lower") => upper - 1.0,
                (Family::Uniform { lower, .. }, "upper") => lower + 1.0,
                _ => 1.0,
            };
            probe.set(p, probe_value);
        }
        probe.validate()?;
        Ok(CatalogWeight { family, vary })
    }

    /// Same weight with `name` as the varying parameter.
    pub fn varying(self, name: &str) -> Result<Self> {
        Self::new(self.family, Some(name))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn varied(&self) -> Option<&'static str> {
        self.vary
    }

    /// The family with the varied parameter set to `t`.
    pub fn at(&self, t: f64) -> Family {
        let mut f = self.family;
        if let Some(p) = self.vary {
            f.set(p, t);
        }
        f
    }
}

pub fn laguerre(alpha: f64) -> Result<CatalogWeight> {
    CatalogWeight::new(Family::Laguerre { alpha }, None)
}

pub fn uniform(lower: f64, upper: f64) -> Result<CatalogWeight> {
    CatalogWeight::new(Family::Uniform { lower, upper }, None)
}

pub fn generalized_jacobi3(a: f64, b: f64, a_k: f64, b_k: f64, c_k: f64, branch: Branch) -> Result<CatalogWeight> {
    CatalogWeight::new(
        Family::GeneralizedJacobi3 {
            a,
            b,
            a_k,
            b_k,
            c_k,
            branch,
        },
        None,
    )
}

pub fn shifted_laguerre(a1: f64, b1: f64) -> Result<CatalogWeight> {
    CatalogWeight::new(Family::ShiftedLaguerre { a1, b1 }, None)
}

pub fn jacobi01(a2: f64, b2: f64) -> Result<CatalogWeight> {
    CatalogWeight::new(Family::Jacobi01 { a2, b2 }, None)
}

pub fn cubic_exponential(a3: f64, b3: f64) -> Result<CatalogWeight> {
    CatalogWeight::new(Family::CubicExponential { a3, b3 }, None)
}

impl Weight for CatalogWeight {
    fn support(&self, t: f64) -> Interval {
        self.at(t).support()
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        self.at(t).eval(x)
    }

    fn d_dt(&self, x: f64, t: f64) -> f64 {
        match self.vary {
            None => 0.0,
            Some(p) => {
                let f = self.at(t);
                f.eval(x) * f.log_dparam(p, x)
            }
        }
    }

    fn d_dx(&self, x: f64, t: f64) -> f64 {
        let f = self.at(t);
        f.eval(x) * f.log_dx(x)
    }

    fn endpoint_motion(&self, _t: f64) -> Option<EndpointRates> {
        self.vary.and_then(|p| self.family.endpoint_rates(p))
    }

    fn hints(&self, t: f64) -> EndpointHints {
        self.at(t).hints()
    }

    fn check_parameter(&self, t: f64) -> Result<()> {
        self.at(t).validate()
    }

    // Closed forms avoid the ratio d_dt / eval where eval underflows.
    fn log_dt(&self, x: f64, t: f64) -> Result<f64> {
        let f = self.at(t);
        let support = f.support();
        if !support.contains(x) {
            return Err(Error::Domain { x, support });
        }
        Ok(self.vary.map_or(0.0, |p| f.log_dparam(p, x)))
    }

    fn log_dx(&self, x: f64, t: f64) -> Result<f64> {
        let f = self.at(t);
        let support = f.support();
        if !support.contains(x) {
            return Err(Error::Domain { x, support });
        }
        Ok(f.log_dx(x))
    }
}

/// A parameter value in a JSON weight specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

/// JSON form of a catalog weight: `{"family": name, "params": {...}, "vary": param-name}`.
///
/// The varied parameter may be omitted from `params`; its value is always `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vary: Option<String>,
}

impl WeightSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::WeightSpec(e.to_string()))
    }

    pub fn build(&self) -> Result<CatalogWeight> {
        let vary = self.vary.as_deref();
        let num = |name: &str| -> Result<f64> {
            match self.params.get(name) {
                Some(ParamValue::Number(v)) => Ok(*v),
                Some(ParamValue::Text(s)) => Err(Error::WeightSpec(format!(
                    "parameter `{name}` must be a number, got \"{s}\""
                ))),
                None if vary == Some(name) => Ok(f64::NAN),
                None => Err(Error::WeightSpec(format!(
                    "family `{}` requires parameter `{name}`",
                    self.family
                ))),
            }
        };
        let family = match self.family.as_str() {
            "laguerre" => Family::Laguerre { alpha: num("alpha")? },
            "uniform" => Family::Uniform {
                lower: num("lower")?,
                upper: num("upper")?,
            },
            "generalized_jacobi3" => {
                let branch = match self.params.get("branch") {
                    Some(ParamValue::Text(s)) if s == "left" => Branch::Left,
                    Some(ParamValue::Text(s)) if s == "right" => Branch::Right,
                    other => {
                        return Err(Error::WeightSpec(format!(
                            "generalized_jacobi3 needs \"branch\": \"left\" | \"right\", got {other:?}"
                        )))
                    }
                };
                Family::GeneralizedJacobi3 {
                    a: num("a")?,
                    b: num("b")?,
                    a_k: num("a_k")?,
                    b_k: num("b_k")?,
                    c_k: num("c_k")?,
                    branch,
                }
            }
            "shifted_laguerre" => Family::ShiftedLaguerre {
                a1: num("a1")?,
                b1: num("b1")?,
            },
            "jacobi01" => Family::Jacobi01 {
                a2: num("a2")?,
                b2: num("b2")?,
            },
            "cubic_exponential" => Family::CubicExponential {
                a3: num("a3")?,
                b3: num("b3")?,
            },
            other => return Err(Error::WeightSpec(format!("unknown family `{other}`"))),
        };
        for key in self.params.keys() {
            if key != "branch" && !family.param_names().contains(&key.as_str()) {
                return Err(Error::WeightSpec(format!(
                    "family `{}` has no parameter `{key}`",
                    self.family
                )));
            }
        }
        CatalogWeight::new(family, vary)
    }
}

/// Outcome of [`validate_weight`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightValidation {
    pub samples: usize,
    /// Samples skipped because `ω` underflowed to (or near) zero.
    pub underflowed: usize,
    pub positive: bool,
    /// Largest mismatch between analytic and finite-difference log-derivatives,
    /// measured relative to `max(1, |analytic|)`.
    pub max_dt_mismatch: f64,
    pub max_dx_mismatch: f64,
}

impl WeightValidation {
    pub fn passes(&self, tol: f64) -> bool {
        self.positive && self.max_dt_mismatch <= tol && self.max_dx_mismatch <= tol
    }
}

const UNDERFLOW_FLOOR: f64 = 1e-280;

/// Distance from `x` to the nearest endpoint that moves between `t - h` and `t + h`.
fn dt_margin(w: &dyn Weight, t: f64, h: f64, x: f64) -> f64 {
    let (lo, hi) = (w.support(t - h), w.support(t + h));
    if !lo.contains(x) || !hi.contains(x) {
        return 0.0;
    }
    let mut margin = f64::INFINITY;
    if lo.lower_f64() != hi.lower_f64() {
        margin = margin.min(x - lo.lower_f64().max(hi.lower_f64()));
    }
    if lo.upper_f64() != hi.upper_f64() {
        margin = margin.min(lo.upper_f64().min(hi.upper_f64()) - x);
    }
    margin
}

/// Samples positivity of `ω` and compares `∂ω/∂t`, `∂ω/∂x` against central
/// differences of `eval` at `n_samples` interior points.
pub fn validate_weight(w: &dyn Weight, t: f64, n_samples: usize) -> Result<WeightValidation> {
    w.check_parameter(t)?;
    let support = w.support(t);
    let points = quadrature::sample_points(&support, n_samples, 2.0);
    let mut out = WeightValidation {
        samples: points.len(),
        underflowed: 0,
        positive: true,
        max_dt_mismatch: 0.0,
        max_dx_mismatch: 0.0,
    };
    let ht = 1e-5 * t.abs().max(1.0);
    let t_movable = w.check_parameter(t - ht).is_ok() && w.check_parameter(t + ht).is_ok();
    for &x in &points {
        let v = w.eval(x, t);
        if v == 0.0 || (v > 0.0 && v < UNDERFLOW_FLOOR) {
            out.underflowed += 1;
            continue;
        }
        if !(v > 0.0) || !v.is_finite() {
            out.positive = false;
            continue;
        }
        // steps shrink with the size of the log-derivative so that the
        // truncation error stays a fixed fraction of the analytic value
        let an_dx = w.d_dx(x, t) / v;
        let dist = (x - support.lower_f64()).min(support.upper_f64() - x);
        let hx = 1e-4 * dist.min(1.0).min(an_dx.abs().recip());
        let fd_dx = (w.eval(x + hx, t) - w.eval(x - hx, t)) / (2.0 * hx);
        out.max_dx_mismatch = out
            .max_dx_mismatch
            .max((an_dx - fd_dx / v).abs() / an_dx.abs().max(1.0));

        if !t_movable {
            continue;
        }
        let an_dt = w.d_dt(x, t) / v;
        let h = ht / an_dt.abs().max(1.0);
        // near a moving endpoint the difference quotient straddles a power
        // singularity; keep well clear of it
        if dt_margin(w, t, ht, x) >= 1e2 * ht {
            let fd_dt = (w.eval(x, t + h) - w.eval(x, t - h)) / (2.0 * h);
            out.max_dt_mismatch = out
                .max_dt_mismatch
                .max((an_dt - fd_dt / v).abs() / an_dt.abs().max(1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn laguerre_log_derivatives() {
        let w = laguerre(1.0).unwrap().varying("alpha").unwrap();
        for &x in &[0.1, 1.0, 7.5] {
            assert_relative_eq!(w.log_dt(x, 1.0).unwrap(), x.ln(), max_relative = 1e-15);
            let alpha = 2.5;
            assert_relative_eq!(w.log_dx(x, alpha).unwrap(), (alpha - x) / x, max_relative = 1e-15);
        }
    }

    #[test]
    fn constant_in_t_has_zero_log_dt() {
        let w = laguerre(0.5).unwrap();
        assert_eq!(w.log_dt(3.0, 123.0).unwrap(), 0.0);
        let u = uniform(0.0, 1.0).unwrap();
        assert_eq!(u.log_dx(0.25, 0.0).unwrap(), 0.0);
        assert_eq!(u.log_dt(0.25, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cubic_exponential_log_derivatives() {
        let (a3, b3) = (1.3, 0.4);
        let w = cubic_exponential(a3, b3).unwrap().varying("a3").unwrap();
        assert_eq!(w.log_dt(2.0, a3).unwrap(), -8.0);
        let fixed = cubic_exponential(a3, b3).unwrap();
        assert_relative_eq!(fixed.log_dx(1.0, 0.0).unwrap(), -3.0 * a3 + b3);
    }

    #[test]
    fn domain_and_underflow_errors() {
        let w = laguerre(1.0).unwrap();
        assert!(matches!(w.log_dt(-1.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(w.log_dx(0.0, 0.0), Err(Error::Domain { .. })));

        // generic ratio path: e^{-x} underflows far out
        #[derive(Debug)]
        struct Plain;
        impl Weight for Plain {
            fn support(&self, _t: f64) -> Interval {
                Interval::right_of(0.0).unwrap()
            }
            fn eval(&self, x: f64, t: f64) -> f64 {
                (-t * x).exp()
            }
            fn d_dt(&self, x: f64, t: f64) -> f64 {
                -x * (-t * x).exp()
            }
            fn d_dx(&self, x: f64, t: f64) -> f64 {
                -t * (-t * x).exp()
            }
        }
        assert_relative_eq!(Plain.log_dt(2.0, 1.0).unwrap(), -2.0);
        assert!(matches!(Plain.log_dt(1.0e4, 1.0), Err(Error::Underflow { .. })));
    }

    #[test]
    fn catalog_supports() {
        let left = generalized_jacobi3(2.0, 3.0, 1.0, 1.0, 1.0, Branch::Left).unwrap();
        assert_eq!(left.support(0.0), Interval::finite(-2.0, 0.0).unwrap());
        let right = generalized_jacobi3(2.0, 3.0, 1.0, 1.0, 1.0, Branch::Right).unwrap();
        assert_eq!(right.support(0.0), Interval::finite(0.0, 3.0).unwrap());
        assert_eq!(
            shifted_laguerre(1.0, 1.0).unwrap().support(0.0),
            Interval::left_of(-1.0).unwrap()
        );
        assert_eq!(laguerre(0.0).unwrap().support(0.0), Interval::right_of(0.0).unwrap());
        assert_eq!(
            jacobi01(1.0, 1.0).unwrap().support(0.0),
            Interval::finite(-1.0, 0.0).unwrap()
        );
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(laguerre(-1.0).is_err());
        assert!(cubic_exponential(0.0, 1.0).is_err());
        assert!(shifted_laguerre(0.5, 0.0).is_err());
        assert!(generalized_jacobi3(1.0, 1.0, -1.5, 0.0, 0.0, Branch::Left).is_err());
        assert!(uniform(1.0, 1.0).is_err());
        let w = laguerre(1.0).unwrap().varying("alpha").unwrap();
        assert!(w.check_parameter(-2.0).is_err());
        assert!(w.check_parameter(0.5).is_ok());
        assert!(laguerre(1.0).unwrap().varying("beta").is_err());
    }

    #[test]
    fn interval_invariants() {
        assert!(Interval::finite(1.0, 0.0).is_err());
        assert!(Interval::new(Bound::PosInfinity, Bound::PosInfinity).is_err());
        assert!(Interval::finite(0.0, f64::INFINITY).is_err());
        let r = Interval::real_line();
        assert!(r.contains(-1e300) && r.contains(1e300));
        assert!(!Interval::finite(0.0, 1.0).unwrap().contains(0.0));
    }

    #[test]
    fn endpoint_motion_for_moving_parameters() {
        let w = generalized_jacobi3(1.0, 1.0, 1.0, 1.0, 1.0, Branch::Left)
            .unwrap()
            .varying("a")
            .unwrap();
        assert_eq!(
            w.endpoint_motion(1.0),
            Some(EndpointRates {
                lower: -1.0,
                upper: 0.0
            })
        );
        assert_eq!(w.support(2.0), Interval::finite(-2.0, 0.0).unwrap());
        let r = generalized_jacobi3(1.0, 1.0, 1.0, 1.0, 1.0, Branch::Right)
            .unwrap()
            .varying("a")
            .unwrap();
        assert_eq!(r.endpoint_motion(1.0), None);
        let u = uniform(0.0, 1.0).unwrap().varying("upper").unwrap();
        assert_eq!(u.endpoint_motion(2.0), Some(EndpointRates { lower: 0.0, upper: 1.0 }));
        assert_eq!(u.boundary_value(Side::Upper, 2.0), 1.0);
    }

    #[test]
    fn weight_spec_json() {
        let spec = WeightSpec::from_json(
            r#"{"family": "generalized_jacobi3",
                "params": {"a": 1, "b": 1, "a_k": 1, "b_k": 1, "c_k": 1, "branch": "left"},
                "vary": "a_k"}"#,
        )
        .unwrap();
        let w = spec.build().unwrap();
        assert_eq!(w.varied(), Some("a_k"));
        assert_eq!(w.support(1.0), Interval::finite(-1.0, 0.0).unwrap());

        let missing_varied = WeightSpec::from_json(r#"{"family": "laguerre", "vary": "alpha"}"#)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(missing_varied.at(2.0).get("alpha"), Some(2.0));

        for bad in [
            r#"{"family": "hermite", "params": {}}"#,
            r#"{"family": "laguerre", "params": {}}"#,
            r#"{"family": "laguerre", "params": {"alpha": 1, "beta": 2}}"#,
            r#"{"family": "generalized_jacobi3", "params": {"a": 1, "b": 1, "a_k": 1, "b_k": 1, "c_k": 1}}"#,
            r#"{"family": "laguerre", "params": {"alpha": "one"}}"#,
        ] {
            assert!(WeightSpec::from_json(bad).unwrap().build().is_err(), "{bad}");
        }
        assert!(WeightSpec::from_json(r#"{"family": "laguerre", "parms": {}}"#).is_err());
    }
}

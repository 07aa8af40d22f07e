//! Independent checks on solved derivatives: central finite differences,
//! sampled monotonicity of the logarithmic derivatives of the weights, and the
//! sign they predict for the zero derivatives.

use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::mop::{build_polynomial, find_zeros, AngelescoSystem, Partition, ZeroSet};
use crate::quadrature;
use crate::sensitivity::{assemble, solve_derivatives};
use crate::weights::{EndpointRates, Interval};

/// Samples used for each monotonicity verdict.
pub const DEFAULT_SAMPLES: usize = 200;

/// Below this many samples a verdict means little.
pub const MIN_SAMPLES: usize = 16;

/// Sampling extent in the transformed variable; keeps samples away from
/// overflow on infinite supports.
const SAMPLE_U_MAX: f64 = 2.5;

/// `1e-5 · max(1, |t|)`
pub fn default_step(t: f64) -> f64 {
    1e-5 * t.abs().max(1.0)
}

fn zeros_at(sys: &AngelescoSystem, part: &Partition, t: f64, cfg: &Config) -> Result<ZeroSet> {
    let p = build_polynomial(sys, part, t, cfg)?;
    find_zeros(&p, sys, part, cfg)
}

/// Central differences `(x(t+h) - x(t-h)) / 2h` for every zero, in flat order.
///
/// Zeros are matched by block and rank, which is valid while they stay simple
/// and inside their blocks.
pub fn fd_zero_derivatives(sys: &AngelescoSystem, part: &Partition, t: f64, h: f64, cfg: &Config) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let at = |s: f64| {
        zeros_at(sys, part, s, cfg).map_err(|e| Error::FiniteDifference {
            t: s,
            source: Box::new(e),
        })
    };
    let plus = at(t + h)?;
    let minus = at(t - h)?;
    Ok(plus
        .flat()
        .iter()
        .zip(minus.flat())
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect())
}

/// Agreement of one solved derivative with its finite-difference estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroCheck {
    pub block: usize,
    pub index: usize,
    pub solved: f64,
    pub fd: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub h: f64,
    pub zeros: Vec<ZeroCheck>,
    pub pass: bool,
}

/// Compares solved and finite-difference derivatives.
///
/// A component passes when `|solved - fd| ≤ max(1e-6, C h²)`, where
/// `C = |fd(2h) - fd(h)| / (3h²)` estimates the truncation constant from a
/// second step. Without `fd_2h` the tolerance is `1e-6`.
pub fn compare_derivatives(
    solved: &[f64],
    fd: &[f64],
    fd_2h: Option<&[f64]>,
    h: f64,
    part: &Partition,
) -> Result<Comparison> {
    let n = part.total();
    if solved.len() != n || fd.len() != n || fd_2h.is_some_and(|v| v.len() != n) {
        return Err(Error::InvalidPartition(format!(
            "derivative vectors must have length {n} to match partition {part}"
        )));
    }
    let zeros: Vec<ZeroCheck> = part
        .index_map()
        .into_iter()
        .enumerate()
        .map(|(r, (block, index))| {
            let gap = (solved[r] - fd[r]).abs();
            let richardson = fd_2h.map_or(0.0, |f2| (f2[r] - fd[r]).abs() / 3.0);
            let tolerance = richardson.max(1e-6);
            let scale = solved[r].abs().max(fd[r].abs());
            ZeroCheck {
                block,
                index,
                solved: solved[r],
                fd: fd[r],
                gap,
                rel_gap: if scale > 0.0 { gap / scale } else { 0.0 },
                tolerance,
                pass: gap <= tolerance,
            }
        })
        .collect();
    Ok(Comparison {
        h,
        pass: zeros.iter().all(|z| z.pass),
        zeros,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increasing,
    Decreasing,
    NonStrictConstant,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityVerdict {
    pub direction: Direction,
    pub strict: bool,
    /// For mixed verdicts: the start of one rising and one falling step.
    pub witness: Option<(f64, f64)>,
}

impl MonotonicityVerdict {
    /// Compatible with "increasing" in the non-strict sense.
    pub fn allows_increasing(&self) -> bool {
        matches!(self.direction, Direction::Increasing | Direction::NonStrictConstant)
    }

    pub fn allows_decreasing(&self) -> bool {
        matches!(self.direction, Direction::Decreasing | Direction::NonStrictConstant)
    }
}

/// Classifies `f` on `interval` from consecutive samples placed by the same
/// double-exponential map used for quadrature.
///
/// Differences within `1e-12 · max(1, |f|)` count as flat.
pub fn sample_monotonicity<F>(f: F, interval: &Interval, n_samples: usize) -> Result<MonotonicityVerdict>
where
    F: Fn(f64) -> Result<f64>,
{
    if n_samples < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "monotonicity sampling needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let xs = quadrature::sample_points(interval, n_samples, SAMPLE_U_MAX);
    let mut values = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { x, value: v });
        }
        values.push(v);
    }
    let mut rise = None;
    let mut fall = None;
    let mut flat = false;
    for s in 1..values.len() {
        let (a, b) = (values[s - 1], values[s]);
        let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
        if b - a > slack {
            rise.get_or_insert(xs[s - 1]);
        } else if a - b > slack {
            fall.get_or_insert(xs[s - 1]);
        } else {
            flat = true;
        }
    }
    Ok(match (rise, fall) {
        (Some(r), Some(f)) => MonotonicityVerdict {
            direction: Direction::Mixed,
            strict: false,
            witness: Some((r, f)),
        },
        (Some(_), None) => MonotonicityVerdict {
            direction: Direction::Increasing,
            strict: !flat,
            witness: None,
        },
        (None, Some(_)) => MonotonicityVerdict {
            direction: Direction::Decreasing,
            strict: !flat,
            witness: None,
        },
        (None, None) => MonotonicityVerdict {
            direction: Direction::NonStrictConstant,
            strict: false,
            witness: None,
        },
    })
}

/// Hypothesis verdicts for one weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVerdicts {
    /// `(1/ω) ∂ω/∂t` as a function of `x`
    pub log_dt: MonotonicityVerdict,
    /// `(1/ω) ∂ω/∂x` as a function of `x`
    pub log_dx: MonotonicityVerdict,
    pub endpoint_rates: Option<EndpointRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignPrediction {
    /// `+1`, `-1`, or `None` when the monotonicity criterion says nothing.
    pub prediction: Option<i8>,
    pub verdicts: Vec<WeightVerdicts>,
}

/// Sign of every zero derivative implied by the monotonicity criterion.
///
/// The zeros increase with `t` when every `(1/ω_k) ∂ω_k/∂t` is increasing in
/// `x`, every `(1/ω_k) ∂ω_k/∂x` is decreasing in `x`, and no support endpoint
/// moves left; symmetrically for decreasing. Constant verdicts are compatible
/// with either direction, but if nothing depends on `t` at all no sign is
/// predicted.
pub fn predict_signs(sys: &AngelescoSystem, part: &Partition, t: f64) -> Result<SignPrediction> {
    part.check_against(sys)?;
    let supports = sys.supports(t)?;
    let mut verdicts = Vec::with_capacity(sys.len());
    for (w, support) in sys.weights().zip(&supports) {
        verdicts.push(WeightVerdicts {
            log_dt: sample_monotonicity(|x| w.log_dt(x, t), support, DEFAULT_SAMPLES)?,
            log_dx: sample_monotonicity(|x| w.log_dx(x, t), support, DEFAULT_SAMPLES)?,
            endpoint_rates: w.endpoint_motion(t),
        });
    }
    let rates = |v: &WeightVerdicts| v.endpoint_rates.map_or((0.0, 0.0), |r| (r.lower, r.upper));
    let shape_ok = verdicts.iter().all(|v| v.log_dx.allows_decreasing());
    let up = verdicts.iter().all(|v| {
        let (a, b) = rates(v);
        v.log_dt.allows_increasing() && a >= 0.0 && b >= 0.0
    });
    let down = verdicts.iter().all(|v| {
        let (a, b) = rates(v);
        v.log_dt.allows_decreasing() && a <= 0.0 && b <= 0.0
    });
    let driven = verdicts.iter().any(|v| {
        let (a, b) = rates(v);
        v.log_dt.direction != Direction::NonStrictConstant || a != 0.0 || b != 0.0
    });
    let prediction = match (shape_ok && driven, up, down) {
        (true, true, false) => Some(1),
        (true, false, true) => Some(-1),
        _ => None,
    };
    Ok(SignPrediction { prediction, verdicts })
}

/// Everything checked at one `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub t: f64,
    pub comparison: Comparison,
    pub prediction: SignPrediction,
    /// Solved derivatives carry the predicted sign (vacuous without a prediction).
    pub sign_consistent: bool,
    pub pass: bool,
}

/// Solves for the zero derivatives at `t` and checks them against finite
/// differences (steps `h` and `2h`) and the predicted sign.
pub fn verify_at(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    h: Option<f64>,
    cfg: &Config,
) -> Result<(Vec<f64>, VerificationReport)> {
    let h = h.unwrap_or_else(|| default_step(t));
    let z = zeros_at(sys, part, t, cfg)?;
    let ss = assemble(sys, part, t, &z, cfg)?;
    let solved = solve_derivatives(&ss)?;
    let fd = fd_zero_derivatives(sys, part, t, h, cfg)?;
    let fd2 = fd_zero_derivatives(sys, part, t, 2.0 * h, cfg)?;
    let comparison = compare_derivatives(&solved, &fd, Some(&fd2), h, part)?;
    let prediction = predict_signs(sys, part, t)?;
    let sign_consistent = signs_consistent(&solved, &prediction);
    let pass = comparison.pass && sign_consistent;
    Ok((
        solved,
        VerificationReport {
            t,
            comparison,
            prediction,
            sign_consistent,
            pass,
        },
    ))
}

/// Whether `solved` carries the predicted sign; values below `1e-12` in
/// magnitude are accepted as zero only when some verdict was non-strict.
pub fn signs_consistent(solved: &[f64], prediction: &SignPrediction) -> bool {
    let Some(sign) = prediction.prediction else {
        return true;
    };
    let lenient = prediction.verdicts.iter().any(|v| !v.log_dt.strict || !v.log_dx.strict);
    solved.iter().all(|&v| {
        let s = f64::from(sign) * v;
        s > 0.0 || (lenient && v.abs() < 1e-12)
    })
}

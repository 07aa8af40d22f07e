//! Parameter derivatives of the zeros.
//!
//! Differentiating the orthogonality conditions with respect to `t` gives the
//! linear system `A(t) x'(t) = b(t)` (or `= c(t)` when supports move with `t`).
//! With `q_{k,i} = Q_{n_k} / (x - x_{k,i})` and `R_k = ∏_{l≠k} Q_{n_l}`:
//!
//! * `d_{k,i} = ∫ q_{k,i}² R_k ω_k dx`
//! * `a^{(k,l)}_{i,j} = ∫ q_{k,i} P_n / (x - x_{l,j}) ω_k dx / d_{k,i}`
//! * `b_{k,i} = ∫ q_{k,i} P_n ∂ω_k/∂t dx / d_{k,i}`
//!
//! All polynomial factors are evaluated from the zeros, so the removed factor
//! `x - x_{k,i}` is never divided out numerically.
//!
//! With moving endpoints `c_{k,i} = b_{k,i} + [boundary terms] / d_{k,i}`.
//! It is evaluated in transport form: pulling the integral back through the
//! affine map that carries the support along with `t` gives, with velocity
//! field `v(x)` interpolating the endpoint rates and `F = q_{k,i} P_n`,
//!
//! * `c_{k,i} d_{k,i} = ∫ [F (∂ω/∂t + v ∂ω/∂x + v' ω) + F' v ω] dx`
//!
//! Integrating the `F' v ω` term by parts recovers `b` plus the boundary terms.
//! The transport integrand stays bounded where `∂ω/∂t` has an integrable
//! singularity at a moving end, which double-exponential nodes cannot resolve
//! once `x` is quantized against a nonzero endpoint.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::{EntryCoord, Error, Result};
use crate::linalg;
use crate::mop::{AngelescoSystem, Partition, ZeroSet};
use crate::quadrature::{self, QuadratureConfig};
use crate::weights::Bound;
#[cfg(test)]
use crate::weights::Side;

/// Which right-hand side the system was assembled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsKind {
    /// fixed supports
    B,
    /// at least one support endpoint moves with `t`
    C,
}

/// Assembled derivative system at one `t`.
///
/// Rows and columns are indexed by `index_map`: block-major, ascending zero
/// index within a block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivitySystem {
    pub t: f64,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub rhs_kind: RhsKind,
    pub d: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub index_map: Vec<(usize, usize)>,
    /// Rows whose `d` has the wrong sign relative to `R_k` on block `k`.
    pub sign_law_violations: Vec<(usize, usize)>,
}

impl SensitivitySystem {
    /// Wraps a hand-built matrix; `S` is taken as the row sums.
    pub fn from_matrix(matrix: Vec<Vec<f64>>, rhs: Vec<f64>, part: &Partition) -> Result<Self> {
        let n = part.total();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) || rhs.len() != n {
            return Err(Error::InvalidPartition(format!(
                "matrix and rhs must have size {n} to match partition {part}"
            )));
        }
        let s = matrix.iter().map(|r| r.iter().sum()).collect();
        Ok(SensitivitySystem {
            t: 0.0,
            matrix,
            rhs,
            rhs_kind: RhsKind::B,
            d: vec![1.0; n],
            s,
            index_map: part.index_map(),
            sign_law_violations: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sensitivity systems always serialize")
    }

    fn dmatrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    D,
    A {
        l: usize,
        j: usize,
    },
    B,
    /// transport form of `b` plus boundary terms
    C,
    /// `∫ q_{k,i} P_n ω_k dx`, which vanishes at the exact zeros
    G,
}

/// Velocity field `v(x) = rate + slope (x - anchor)` of a moving support.
#[derive(Debug, Clone, Copy, Default)]
struct Velocity {
    anchor: f64,
    rate: f64,
    slope: f64,
}

impl Velocity {
    fn at(&self, x: f64) -> f64 {
        self.rate + self.slope * (x - self.anchor)
    }
}

struct Row {
    values: Vec<f64>,
    scales: Vec<f64>,
}

/// Context shared by every integrand of one row.
struct RowCtx<'a> {
    sys: &'a AngelescoSystem,
    z: &'a ZeroSet,
    t: f64,
    k: usize,
    i: usize,
}

impl RowCtx<'_> {
    /// `(q_{k,i}(x), Q_{n_k}(x), R_k(x))`
    fn factors(&self, x: f64) -> (f64, f64, f64) {
        let mut q = 1.0;
        let mut qk = 1.0;
        for (j, &r) in self.z.block(self.k).iter().enumerate() {
            let f = x - r;
            qk *= f;
            if j != self.i {
                q *= f;
            }
        }
        let mut rk = 1.0;
        for (l, block) in self.z.blocks().iter().enumerate() {
            if l != self.k {
                for &r in block {
                    rk *= x - r;
                }
            }
        }
        (q, qk, rk)
    }

    /// `F = q_{k,i} P_n` and `F'`, by the product rule over all other zeros.
    fn transported(&self, x: f64) -> (f64, f64) {
        let block = self.z.block(self.k);
        let q_roots = block.iter().enumerate().filter(|&(j, _)| j != self.i).map(|(_, r)| r);
        let mut f = 1.0;
        let mut df = 0.0;
        for &r in self.z.blocks().iter().flatten().chain(q_roots) {
            df = df * (x - r) + f;
            f *= x - r;
        }
        (f, df)
    }

    fn velocity(&self) -> Result<Velocity> {
        let w = self.sys.weight(self.k);
        let Some(rates) = w.endpoint_motion(self.t) else {
            return Ok(Velocity::default());
        };
        let support = w.support(self.t);
        let infinite_moves = |bound: Bound, rate: f64| !matches!(bound, Bound::Finite(_)) && rate != 0.0;
        if infinite_moves(support.lower(), rates.lower) || infinite_moves(support.upper(), rates.upper) {
            return Err(Error::Config(format!(
                "weight {} moves an infinite endpoint of its support",
                self.k
            )));
        }
        Ok(match (support.lower(), support.upper()) {
            (Bound::Finite(a), Bound::Finite(b)) => Velocity {
                anchor: a,
                rate: rates.lower,
                slope: (rates.upper - rates.lower) / (b - a),
            },
            (Bound::Finite(a), _) => Velocity {
                anchor: a,
                rate: rates.lower,
                slope: 0.0,
            },
            (_, Bound::Finite(b)) => Velocity {
                anchor: b,
                rate: rates.upper,
                slope: 0.0,
            },
            _ => Velocity::default(),
        })
    }

    fn integrate(&self, targets: &[Target], cfg: &QuadratureConfig) -> Result<Row> {
        let w = self.sys.weight(self.k);
        let support = w.support(self.t);
        let vel = if targets.contains(&Target::C) {
            self.velocity()?
        } else {
            Velocity::default()
        };
        let res = quadrature::integrate_vec(
            targets.len(),
            |x, out| {
                let (q, qk, rk) = self.factors(x);
                let om = w.eval(x, self.t);
                for (slot, target) in out.iter_mut().zip(targets) {
                    *slot = match *target {
                        Target::D => q * q * rk * om,
                        Target::A { l, j } => q * qk * rk / (x - self.z.block(l)[j]) * om,
                        Target::B => q * qk * rk * w.d_dt(x, self.t),
                        Target::C => {
                            let (f, df) = self.transported(x);
                            let v = vel.at(x);
                            f * (w.d_dt(x, self.t) + v * w.d_dx(x, self.t) + vel.slope * om) + df * v * om
                        }
                        Target::G => q * qk * rk * om,
                    };
                }
            },
            &support,
            w.hints(self.t),
            cfg,
        )?;
        quadrature::require_converged(&res)?;
        Ok(Row {
            values: res.values,
            scales: res.abs_integrals,
        })
    }

    fn checked_d(&self, d: f64, scale: f64) -> Result<f64> {
        if !(d.abs() > 1e3 * f64::EPSILON * scale) {
            return Err(Error::DegenerateNormalizer {
                k: self.k,
                i: self.i,
                d,
                scale,
            });
        }
        Ok(d)
    }

    /// `[b'·q P ω](b) − [a'·q P ω](a)` for a moving support; `0` otherwise.
    #[cfg(test)]
    fn boundary_terms(&self) -> Result<f64> {
        let w = self.sys.weight(self.k);
        let Some(rates) = w.endpoint_motion(self.t) else {
            return Ok(0.0);
        };
        let support = w.support(self.t);
        let mut total = 0.0;
        for (side, rate, bound, sign) in [
            (Side::Upper, rates.upper, support.upper(), 1.0),
            (Side::Lower, rates.lower, support.lower(), -1.0),
        ] {
            if rate == 0.0 {
                continue;
            }
            let Bound::Finite(e) = bound else {
                return Err(Error::Config(format!(
                    "weight {} moves an infinite endpoint of its support",
                    self.k
                )));
            };
            let (q, qk, rk) = self.factors(e);
            let value = rate * q * qk * rk * w.boundary_value(side, self.t);
            if !value.is_finite() {
                return Err(Error::BoundaryTerm { x: e, value });
            }
            total += sign * value;
        }
        Ok(total)
    }
}

fn context<'a>(
    sys: &'a AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &'a ZeroSet,
    k: usize,
    i: usize,
) -> Result<RowCtx<'a>> {
    check_inputs(sys, part, z)?;
    if k >= part.len() || i >= part.parts()[k] {
        return Err(Error::InvalidPartition(format!(
            "no zero (k={k}, i={i}) in partition {part}"
        )));
    }
    Ok(RowCtx { sys, z, t, k, i })
}

fn check_inputs(sys: &AngelescoSystem, part: &Partition, z: &ZeroSet) -> Result<()> {
    part.check_against(sys)?;
    if part.parts().contains(&0) {
        return Err(Error::InvalidPartition(format!(
            "sensitivity needs every n_k ≥ 1, got {part}"
        )));
    }
    let sizes: Vec<usize> = z.blocks().iter().map(Vec::len).collect();
    if sizes != part.parts() {
        return Err(Error::InvalidPartition(format!(
            "zero set block sizes {sizes:?} do not match partition {part}"
        )));
    }
    Ok(())
}

/// `d_{k,i} = ∫ Q_{n_k} P_n / (x - x_{k,i})² ω_k dx`
pub fn d_coefficient(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    k: usize,
    i: usize,
    cfg: &Config,
) -> Result<f64> {
    let ctx = context(sys, part, t, z, k, i)?;
    let row = ctx.integrate(&[Target::D], &cfg.quadrature)?;
    ctx.checked_d(row.values[0], row.scales[0])
}

/// Off-diagonal-block entry `a^{(k,l)}_{i,j}` for `k ≠ l`.
#[allow(clippy::too_many_arguments)]
pub fn a_entry(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    k: usize,
    l: usize,
    i: usize,
    j: usize,
    cfg: &Config,
) -> Result<f64> {
    let ctx = context(sys, part, t, z, k, i)?;
    if l == k || l >= part.len() || j >= part.parts()[l] {
        return Err(Error::InvalidPartition(format!(
            "no off-diagonal entry (k={k}, l={l}, i={i}, j={j}) in partition {part}"
        )));
    }
    let row = ctx.integrate(&[Target::D, Target::A { l, j }], &cfg.quadrature)?;
    let d = ctx.checked_d(row.values[0], row.scales[0])?;
    Ok(row.values[1] / d)
}

/// Right-hand side entry `b_{k,i}` for fixed supports.
pub fn b_entry(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    k: usize,
    i: usize,
    cfg: &Config,
) -> Result<f64> {
    let ctx = context(sys, part, t, z, k, i)?;
    let row = ctx.integrate(&[Target::D, Target::B], &cfg.quadrature)?;
    let d = ctx.checked_d(row.values[0], row.scales[0])?;
    Ok(row.values[1] / d)
}

/// Right-hand side entry `c_{k,i}`: `b_{k,i}` plus the boundary terms of a
/// moving support. Equals `b_{k,i}` when weight `k` has no endpoint motion.
pub fn c_entry(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    k: usize,
    i: usize,
    cfg: &Config,
) -> Result<f64> {
    let ctx = context(sys, part, t, z, k, i)?;
    let row = ctx.integrate(&[Target::D, Target::C], &cfg.quadrature)?;
    let d = ctx.checked_d(row.values[0], row.scales[0])?;
    Ok(row.values[1] / d)
}

/// Row `(k, i)` of `A`, the extra integral `extra` divided by `d`, and `d`.
fn matrix_row(
    ctx: &RowCtx<'_>,
    index_map: &[(usize, usize)],
    extra: Target,
    cfg: &QuadratureConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let (k, i) = (ctx.k, ctx.i);
    let coord = EntryCoord { k, i, l: None, j: None };
    let mut targets = vec![Target::D, extra];
    targets.extend(
        index_map
            .iter()
            .filter(|(l, _)| *l != k)
            .map(|&(l, j)| Target::A { l, j }),
    );
    let row = ctx.integrate(&targets, cfg).map_err(|e| e.at_entry(coord))?;
    let d = ctx
        .checked_d(row.values[0], row.scales[0])
        .map_err(|e| e.at_entry(coord))?;
    let mut a = vec![0.0; index_map.len()];
    let mut off_block = row.values[2..].iter();
    for (col, &(l, j)) in index_map.iter().enumerate() {
        if l == k {
            a[col] = if j == i { 1.0 } else { 0.0 };
        } else {
            let v = off_block.next().expect("one value per off-block column") / d;
            if !v.is_finite() {
                return Err(
                    Error::NonFiniteIntegrand { x: f64::NAN, value: v }.at_entry(EntryCoord {
                        k,
                        i,
                        l: Some(l),
                        j: Some(j),
                    }),
                );
            }
            a[col] = v;
        }
    }
    Ok((a, row.values[1] / d, d))
}

/// Newton correction `δ` for the zeros, from the orthogonality conditions
/// `∫ q_{k,i} P_n ω_k dx = 0` with `P_n` in product form.
///
/// The Jacobian of these conditions scaled by `1/d` is `-A`, so `δ` solves
/// `A δ = g` with `g_{k,i} = ∫ q_{k,i} P_n ω_k dx / d_{k,i}`. Blocks with
/// `n_k = 0` contribute no rows.
pub(crate) fn newton_correction(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let index_map = part.index_map();
    let rows: Vec<(Vec<f64>, f64, f64)> = index_map
        .par_iter()
        .map(|&(k, i)| matrix_row(&RowCtx { sys, z, t, k, i }, &index_map, Target::G, cfg))
        .collect::<Result<_>>()?;
    let a = DMatrix::from_fn(rows.len(), rows.len(), |r, c| rows[r].0[c]);
    let g = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let (delta, _) = linalg::solve(&a, &g)?;
    Ok(delta.iter().copied().collect())
}

/// Sign of `R_k` on block `k`, sampled at an interior point.
fn sign_of_rest(z: &ZeroSet, sys: &AngelescoSystem, k: usize, t: f64) -> f64 {
    let x = sys.weight(k).support(t).interior_point();
    let rk: f64 = z
        .blocks()
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != k)
        .flat_map(|(_, b)| b.iter())
        .map(|r| x - r)
        .product();
    rk.signum()
}

/// Builds `A`, the right-hand side, `d` and `S` at `t`.
///
/// Rows are computed in parallel; each row shares one set of quadrature nodes
/// across all of its entries.
pub fn assemble(
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    z: &ZeroSet,
    cfg: &Config,
) -> Result<SensitivitySystem> {
    check_inputs(sys, part, z)?;
    let index_map = part.index_map();
    let n = index_map.len();
    let moving = sys.weights().any(|w| w.endpoint_motion(t).is_some());

    let rows: Vec<(Vec<f64>, f64, f64)> = index_map
        .par_iter()
        .map(|&(k, i)| {
            let ctx = RowCtx { sys, z, t, k, i };
            let extra = if sys.weight(k).endpoint_motion(t).is_some() {
                Target::C
            } else {
                Target::B
            };
            matrix_row(&ctx, &index_map, extra, &cfg.quadrature)
        })
        .collect::<Result<_>>()?;

    let mut matrix = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for (a, r, dk) in rows {
        matrix.push(a);
        rhs.push(r);
        d.push(dk);
    }
    let s = matrix.iter().map(|r| r.iter().sum()).collect();
    let sign_law_violations = index_map
        .iter()
        .zip(&d)
        .filter(|(&(k, _), dk)| dk.signum() != sign_of_rest(z, sys, k, t))
        .map(|(&ki, _)| ki)
        .collect();
    Ok(SensitivitySystem {
        t,
        matrix,
        rhs,
        rhs_kind: if moving { RhsKind::C } else { RhsKind::B },
        d,
        s,
        index_map,
        sign_law_violations,
    })
}

/// Solves `A x = rhs` by partial-pivot LU and checks the residual.
pub fn solve_derivatives(ss: &SensitivitySystem) -> Result<Vec<f64>> {
    let a = ss.dmatrix();
    let rhs = DVector::from_column_slice(&ss.rhs);
    let (x, condition) = linalg::solve(&a, &rhs)?;
    if condition > 1e14 {
        return Err(Error::Singular { condition });
    }
    let residual = (&a * &x - &rhs).amax();
    let tolerance = 1e-10 * (1.0 + rhs.amax());
    if !(residual <= tolerance) {
        return Err(Error::SolveResidual { residual, tolerance });
    }
    Ok(x.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZViolation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZReport {
    pub is_z: bool,
    pub violations: Vec<ZViolation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    pub all_positive: bool,
    #[serde(rename = "min_S")]
    pub min_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MReport {
    pub is_m: bool,
    pub inverse_min_entry: f64,
    pub inverse_min_diagonal: f64,
}

/// Every off-diagonal entry must be at most `z_tol`.
pub fn check_z_matrix(ss: &SensitivitySystem, z_tol: f64) -> ZReport {
    let violations: Vec<ZViolation> = ss
        .matrix
        .iter()
        .enumerate()
        .flat_map(|(row, r)| {
            r.iter()
                .enumerate()
                .filter(move |&(col, &v)| col != row && !(v <= z_tol))
                .map(move |(col, &value)| ZViolation { row, col, value })
        })
        .collect();
    ZReport {
        is_z: violations.is_empty(),
        violations,
    }
}

pub fn check_diagonal_dominance(ss: &SensitivitySystem) -> DominanceReport {
    let min_s = ss.s.iter().copied().fold(f64::INFINITY, f64::min);
    DominanceReport {
        all_positive: ss.s.iter().all(|&s| s > 0.0),
        min_s,
    }
}

/// Inverts `A` explicitly; an M-matrix is a Z-matrix whose inverse has no
/// entry below `-m_tol`.
pub fn check_m_matrix(ss: &SensitivitySystem, z_tol: f64, m_tol: f64) -> MReport {
    let is_z = check_z_matrix(ss, z_tol).is_z;
    match linalg::inverse_with_condition(&ss.dmatrix()) {
        Ok((inv, _)) => {
            let inverse_min_entry = inv.iter().copied().fold(f64::INFINITY, f64::min);
            let inverse_min_diagonal = inv.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
            MReport {
                is_m: is_z && inverse_min_entry >= -m_tol,
                inverse_min_entry,
                inverse_min_diagonal,
            }
        }
        Err(_) => MReport {
            is_m: false,
            inverse_min_entry: f64::NAN,
            inverse_min_diagonal: f64::NAN,
        },
    }
}

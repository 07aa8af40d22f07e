//! Type II multiple orthogonal polynomials on Angelesco systems.
//!
//! For a system of weights `ω_1, …, ω_m` on disjoint supports and a partition
//! `n = n_1 + … + n_m`, the monic polynomial `P_n` of degree `n` satisfies
//! `∫ x^j P_n(x) ω_k(x) dx = 0` for `j < n_k`. Its zeros are real and simple,
//! and exactly `n_k` of them lie in the `k`-th support.
//!
//! Blocks and zeros are indexed from zero throughout.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::Polynomial;
use crate::quadrature::{self, QuadratureConfig};
use crate::sensitivity;
use crate::weights::{Bound, CatalogWeight, Interval, Weight};

/// Ordered weights with pairwise disjoint supports.
#[derive(Clone)]
pub struct AngelescoSystem {
    weights: Vec<Arc<dyn Weight>>,
    label: String,
}

impl fmt::Debug for AngelescoSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngelescoSystem")
            .field("label", &self.label)
            .field("weights", &self.weights)
            .finish()
    }
}

impl AngelescoSystem {
    pub fn new(weights: Vec<Arc<dyn Weight>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSystem("at least one weight is required".into()));
        }
        let label = format!("system of {} weights", weights.len());
        Ok(AngelescoSystem { weights, label })
    }

    pub fn from_catalog(weights: Vec<CatalogWeight>) -> Result<Self> {
        let label = weights.iter().map(|w| w.family().name()).collect::<Vec<_>>().join("+");
        let ws = weights.into_iter().map(|w| Arc::new(w) as Arc<dyn Weight>).collect();
        Ok(Self::new(ws)?.with_label(label))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, k: usize) -> &dyn Weight {
        self.weights[k].as_ref()
    }

    pub fn weights(&self) -> impl Iterator<Item = &dyn Weight> {
        self.weights.iter().map(|w| w.as_ref())
    }

    /// Supports at `t` after checking parameters, disjointness and ordering.
    pub fn supports(&self, t: f64) -> Result<Vec<Interval>> {
        let mut out = Vec::with_capacity(self.len());
        for (k, w) in self.weights.iter().enumerate() {
            w.check_parameter(t)
                .map_err(|e| Error::InvalidSystem(format!("weight {k} at t = {t}: {e}")))?;
            let s = w.support(t);
            if let Some(prev) = out.last() {
                let prev: &Interval = prev;
                let ordered = match (prev.upper(), s.lower()) {
                    (Bound::Finite(u), Bound::Finite(l)) => u <= l,
                    _ => false,
                };
                if !ordered {
                    return Err(Error::InvalidSystem(format!(
                        "supports {prev} and {s} of weights {} and {k} are not disjoint and ordered",
                        k - 1
                    )));
                }
            }
            out.push(s);
        }
        Ok(out)
    }
}

/// Orthogonality depths `n_1, …, n_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidPartition("total degree n must be at least 1".into()));
        }
        Ok(Partition(parts))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Flat index of the first zero of each block.
    pub fn offsets(&self) -> Vec<usize> {
        self.0
            .iter()
            .scan(0, |acc, &nk| {
                let start = *acc;
                *acc += nk;
                Some(start)
            })
            .collect()
    }

    /// `(k, i)` pairs in flat order: block-major, then ascending `i`.
    pub fn index_map(&self) -> Vec<(usize, usize)> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(k, &nk)| (0..nk).map(move |i| (k, i)))
            .collect()
    }

    pub fn check_against(&self, sys: &AngelescoSystem) -> Result<()> {
        if self.len() != sys.len() {
            return Err(Error::InvalidPartition(format!(
                "partition has {} parts but the system has {} weights",
                self.len(),
                sys.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Monic `P_n(·; t)` with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MopPoly {
    poly: Polynomial,
    t: f64,
    system: String,
    partition: Partition,
    condition: f64,
}

impl MopPoly {
    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    /// Ascending coefficients; the last one is exactly 1.
    pub fn coeffs(&self) -> &[f64] {
        self.poly.coeffs()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn system_label(&self) -> &str {
        &self.system
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Condition estimate of the equilibrated moment system it was solved from.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly.eval(x)
    }

    /// Same polynomial with one coefficient replaced; for perturbation studies.
    pub fn with_coefficient(&self, power: usize, value: f64) -> MopPoly {
        let mut c = self.poly.coeffs().to_vec();
        c[power] = value;
        MopPoly {
            poly: Polynomial::new(c),
            ..self.clone()
        }
    }
}

/// Simple zeros of `P_n`, grouped by support block and sorted within each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    blocks: Vec<Vec<f64>>,
    t: f64,
}

impl ZeroSet {
    pub fn new(blocks: Vec<Vec<f64>>, t: f64) -> Self {
        ZeroSet { blocks, t }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.blocks[k]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All zeros in block-major order.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("zero sets always serialize")
    }
}

/// Moments `c^{(k)}_0 .. c^{(k)}_{n+n_k-1}` for every block (empty for `n_k = 0`).
pub fn moment_table(sys: &AngelescoSystem, part: &Partition, t: f64, cfg: &QuadratureConfig) -> Result<Vec<Vec<f64>>> {
    part.check_against(sys)?;
    sys.supports(t)?;
    let n = part.total();
    part.parts()
        .iter()
        .enumerate()
        .map(|(k, &nk)| {
            if nk == 0 {
                Ok(Vec::new())
            } else {
                quadrature::moments(sys.weight(k), n + nk, t, cfg)
            }
        })
        .collect()
}

/// Builds `P_n(·; t)` by solving the stacked moment system
/// `Σ_i c^{(k)}_{j+i} p_i = -c^{(k)}_{j+n}` for the non-leading coefficients.
///
/// The system is row- and column-equilibrated before the solve; its condition
/// estimate must stay below `cfg.max_condition`, and the result must pass the
/// orthogonality residual check.
pub fn build_polynomial(sys: &AngelescoSystem, part: &Partition, t: f64, cfg: &Config) -> Result<MopPoly> {
    let table = moment_table(sys, part, t, &cfg.quadrature)?;
    let n = part.total();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut row = 0;
    for (k, &nk) in part.parts().iter().enumerate() {
        for j in 0..nk {
            for i in 0..n {
                m[(row, i)] = table[k][j + i];
            }
            rhs[row] = -table[k][j + n];
            row += 1;
        }
    }

    let row_scale: Vec<f64> = (0..n)
        .map(|r| 1.0 / m.row(r).iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .collect();
    for r in 0..n {
        m.row_mut(r).scale_mut(row_scale[r]);
        rhs[r] *= row_scale[r];
    }
    let col_scale: Vec<f64> = (0..n)
        .map(|c| 1.0 / m.column(c).iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .collect();
    for (c, &s) in col_scale.iter().enumerate() {
        m.column_mut(c).scale_mut(s);
    }
    if row_scale.iter().chain(&col_scale).any(|s| !s.is_finite()) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }

    let (y, condition) = linalg::solve(&m, &rhs).map_err(|e| match e {
        Error::Singular { condition } => Error::IllConditioned { condition },
        other => other,
    })?;
    if condition > cfg.max_condition {
        return Err(Error::IllConditioned { condition });
    }
    let mut coeffs: Vec<f64> = (0..n).map(|i| y[i] * col_scale[i]).collect();
    coeffs.push(1.0);

    let p = MopPoly {
        poly: Polynomial::new(coeffs),
        t,
        system: sys.label().to_string(),
        partition: part.clone(),
        condition,
    };
    for r in orthogonality_residuals(&p, sys, part, t, &cfg.quadrature)? {
        if !(r.normalized.abs() <= cfg.residual_tol && r.error_estimate <= cfg.residual_tol) {
            return Err(Error::Residual {
                k: r.k,
                j: r.j,
                residual: r.normalized.abs().max(r.error_estimate),
                tolerance: cfg.residual_tol,
            });
        }
    }
    Ok(p)
}

/// One orthogonality condition `∫ x^j P ω_k dx` evaluated numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub k: usize,
    pub j: usize,
    /// `∫ x^j P ω_k dx`
    pub raw: f64,
    /// `raw / ∫ |x|^j Σ_i |p_i| |x|^i ω_k dx`
    pub normalized: f64,
    /// Quadrature error estimate of `normalized`.
    pub error_estimate: f64,
}

/// Evaluates every orthogonality condition of `p` against the system.
///
/// Residuals are normalized by the integral of the absolute monomial terms,
/// which is also the scale of the rounding error in evaluating `P` from its
/// coefficients.
pub fn orthogonality_residuals(
    p: &MopPoly,
    sys: &AngelescoSystem,
    part: &Partition,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<Vec<Residual>> {
    part.check_against(sys)?;
    let supports = sys.supports(t)?;
    let abs_poly = Polynomial::new(p.coeffs().iter().map(|c| c.abs()).collect());
    let mut out = Vec::with_capacity(part.total());
    for (k, &nk) in part.parts().iter().enumerate() {
        if nk == 0 {
            continue;
        }
        let w = sys.weight(k);
        let res = quadrature::integrate_vec(
            2 * nk,
            |x, o| {
                let om = w.eval(x, t);
                let mut v = p.eval(x) * om;
                let mut a = abs_poly.eval(x.abs()) * om;
                for j in 0..nk {
                    o[j] = v;
                    o[nk + j] = a;
                    v *= x;
                    a *= x.abs();
                }
            },
            &supports[k],
            w.hints(t),
            cfg,
        )?;
        for j in 0..nk {
            let scale = res.values[nk + j];
            let (normalized, error_estimate) = if scale > 0.0 {
                (res.values[j] / scale, res.error_estimates[j] / scale)
            } else {
                (res.values[j], res.error_estimates[j])
            };
            out.push(Residual {
                k,
                j,
                raw: res.values[j],
                normalized,
                error_estimate,
            });
        }
    }
    Ok(out)
}

/// Finds the `n_k` zeros of `p` inside each support block.
///
/// Zeros are isolated by sign changes on a grid that is bisected until the
/// expected count appears, then refined by Newton steps safeguarded by bisection.
pub fn find_zeros(p: &MopPoly, sys: &AngelescoSystem, part: &Partition, cfg: &Config) -> Result<ZeroSet> {
    part.check_against(sys)?;
    let t = p.t();
    let supports = sys.supports(t)?;
    let poly = p.polynomial();
    let n = poly.degree();
    let mut blocks = Vec::with_capacity(part.len());
    for (k, &nk) in part.parts().iter().enumerate() {
        if nk == 0 {
            blocks.push(Vec::new());
            continue;
        }
        let (lo, hi) = search_window(poly, n, &supports[k]);
        let brackets = isolate(poly, lo, hi, nk, cfg.max_subdivision).map_err(|found| Error::ZeroIsolation {
            block: k,
            expected: nk,
            found,
        })?;
        let mut zeros = Vec::with_capacity(nk);
        for (l, r) in brackets {
            let z = refine(poly, l, r, cfg.zero_tol);
            if !supports[k].contains(z) {
                return Err(Error::ZeroIsolation {
                    block: k,
                    expected: nk,
                    found: zeros.len(),
                });
            }
            zeros.push(z);
        }
        blocks.push(zeros);
    }
    let mut z = ZeroSet { blocks, t };
    for _ in 0..cfg.polish_steps {
        match polish(&z, sys, part, &supports, cfg) {
            Some((next, converged)) => {
                z = next;
                if converged {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(z)
}

/// One Newton step on the orthogonality conditions with `P_n` in product form.
///
/// Zeros obtained from the coefficients inherit the conditioning of the moment
/// system; this step removes that error. The step is rejected if it is not
/// small or would move a zero out of its block or out of order.
fn polish(
    z: &ZeroSet,
    sys: &AngelescoSystem,
    part: &Partition,
    supports: &[Interval],
    cfg: &Config,
) -> Option<(ZeroSet, bool)> {
    let delta = match sensitivity::newton_correction(sys, part, z.t, z, &cfg.quadrature) {
        Ok(d) => d,
        Err(e) => {
            log::debug!("zero polishing skipped at t = {}: {e}", z.t);
            return None;
        }
    };
    let mut steps = delta.iter();
    let mut worst = 0.0f64;
    let mut blocks = Vec::with_capacity(z.blocks.len());
    for (k, block) in z.blocks.iter().enumerate() {
        let mut next = Vec::with_capacity(block.len());
        for &x in block {
            let d = *steps.next()?;
            let rel = d.abs() / x.abs().max(1.0);
            if !(rel <= 1e-4) {
                return None;
            }
            worst = worst.max(rel);
            let y = x + d;
            if !supports[k].contains(y) || next.last().is_some_and(|&prev| prev >= y) {
                return None;
            }
            next.push(y);
        }
        blocks.push(next);
    }
    Some((ZeroSet { blocks, t: z.t }, worst <= 4.0 * f64::EPSILON))
}

/// Finite window containing every zero of `poly` that lies in `support`.
///
/// Infinite ends are replaced by expanding geometrically from the finite end
/// until the window passes the root bound and the sign of `poly` there is the
/// one forced by its leading term.
fn search_window(poly: &Polynomial, n: usize, support: &Interval) -> (f64, f64) {
    let bound = poly.root_bound();
    let far_sign_up = 1.0;
    let far_sign_down = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let expand = |from: f64, dir: f64, far_sign: f64| {
        let mut step = 1.0;
        loop {
            let x = from + dir * step;
            if x.abs() > bound && poly.eval(x) * far_sign > 0.0 {
                return x;
            }
            step *= 2.0;
        }
    };
    match (support.lower(), support.upper()) {
        (Bound::Finite(a), Bound::Finite(b)) => (a, b),
        (Bound::Finite(a), _) => (a, expand(a, 1.0, far_sign_up)),
        (_, Bound::Finite(b)) => (expand(b, -1.0, far_sign_down), b),
        _ => (expand(0.0, -1.0, far_sign_down), expand(0.0, 1.0, far_sign_up)),
    }
}

/// Brackets with a sign change of `poly` on `[lo, hi]`; `Err(found)` if the
/// expected count never appears.
fn isolate(
    poly: &Polynomial,
    lo: f64,
    hi: f64,
    expected: usize,
    max_subdivision: u32,
) -> Result<Vec<(f64, f64)>, usize> {
    let mut segments = 16usize.max(4 * expected);
    let mut found = 0;
    for _ in 0..=max_subdivision {
        let h = (hi - lo) / segments as f64;
        let mut brackets = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for s in 0..=segments {
            let x = if s == segments { hi } else { lo + s as f64 * h };
            let v = poly.eval(x);
            if v == 0.0 {
                // an exact zero on the grid: bracket it by its nonzero neighbours
                continue;
            }
            if let Some((px, pv)) = prev {
                if pv.signum() != v.signum() {
                    brackets.push((px, x));
                }
            }
            prev = Some((x, v));
        }
        found = brackets.len();
        if found == expected {
            return Ok(brackets);
        }
        if found > expected {
            return Err(found);
        }
        segments *= 2;
    }
    Err(found)
}

fn refine(poly: &Polynomial, mut l: f64, mut r: f64, tol: f64) -> f64 {
    let left_sign = poly.eval(l).signum();
    let mut x = 0.5 * (l + r);
    for _ in 0..200 {
        let (v, dv) = poly.eval_with_derivative(x);
        if v == 0.0 {
            return x;
        }
        if v.signum() == left_sign {
            l = x;
        } else {
            r = x;
        }
        let newton = x - v / dv;
        let next = if dv != 0.0 && newton > l && newton < r {
            newton
        } else {
            0.5 * (l + r)
        };
        let step = (next - x).abs();
        x = next;
        let scale = x.abs().max(1.0);
        // quadratic convergence: a step this small leaves an error far below tol
        if step <= 1e-4 * tol * scale || r - l <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    x
}

/// Monic polynomial `Q_{n_k}` whose zeros are the block-`k` zeros.
pub fn block_polynomial(z: &ZeroSet, k: usize) -> Polynomial {
    Polynomial::from_roots(z.block(k))
}

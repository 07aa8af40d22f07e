//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use angelesco::weights::{
    cubic_exponential, generalized_jacobi3, jacobi01, laguerre, shifted_laguerre, uniform, Branch,
};
use angelesco::{AngelescoSystem, CatalogWeight};
use rand::Rng;

/// Determinant by cofactor expansion along the first row.
pub fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        n => (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][c] * det(&minor)
            })
            .sum(),
    }
}

/// Monic coefficients of `P_n` as the determinant whose first `n` rows are
/// shifted moment rows and whose last row is `1, x, …, x^n`, expanded along
/// the last row.
pub fn determinant_coefficients(moments: &[Vec<f64>], parts: &[usize]) -> Vec<f64> {
    let n: usize = parts.iter().sum();
    let rows: Vec<Vec<f64>> = parts
        .iter()
        .enumerate()
        .flat_map(|(k, &nk)| (0..nk).map(move |j| (k, j)))
        .map(|(k, j)| (0..=n).map(|i| moments[k][j + i]).collect())
        .collect();
    let cofactor = |i: usize| {
        let minor: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(c, _)| *c != i).map(|(_, v)| *v).collect())
            .collect();
        let sign = if (n + i).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * det(&minor)
    };
    let lead = cofactor(n);
    (0..=n).map(|i| cofactor(i) / lead).collect()
}

/// Sign of `∏_{l≠k} (x - x_{l,j})` at `x`.
pub fn rest_sign(blocks: &[Vec<f64>], k: usize, x: f64) -> f64 {
    blocks
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != k)
        .flat_map(|(_, b)| b.iter())
        .map(|r| x - r)
        .product::<f64>()
        .signum()
}

pub fn uniform_pair() -> AngelescoSystem {
    AngelescoSystem::from_catalog(vec![uniform(-1.0, 0.0).unwrap(), uniform(0.0, 1.0).unwrap()]).unwrap()
}

/// Two-interval system on `(-a, 0)` and `(0, b)` with `a = b = 1` and unit
/// exponents. `vary` names the parameter driven by `t`: `a1 b1 c1` (left
/// weight), `a2 b2 c2` (right weight), or the shared endpoints `a`, `b`.
pub fn example1(vary: Option<&str>) -> AngelescoSystem {
    example1_with(1.0, 1.0, [1.0; 6], vary)
}

pub fn example1_with(a: f64, b: f64, e: [f64; 6], vary: Option<&str>) -> AngelescoSystem {
    let left = generalized_jacobi3(a, b, e[0], e[1], e[2], Branch::Left).unwrap();
    let right = generalized_jacobi3(a, b, e[3], e[4], e[5], Branch::Right).unwrap();
    let v = |w: CatalogWeight, p: &str| w.varying(p).unwrap();
    let (l, r) = match vary {
        None => (left, right),
        Some("a1") => (v(left, "a_k"), right),
        Some("b1") => (v(left, "b_k"), right),
        Some("c1") => (v(left, "c_k"), right),
        Some("a2") => (left, v(right, "a_k")),
        Some("b2") => (left, v(right, "b_k")),
        Some("c2") => (left, v(right, "c_k")),
        Some("a") => (v(left, "a"), v(right, "a")),
        Some("b") => (v(left, "b"), v(right, "b")),
        Some(other) => panic!("unknown parameter {other}"),
    };
    AngelescoSystem::from_catalog(vec![l, r]).unwrap()
}

/// Three-interval system on `(-inf, -1)`, `(-1, 0)`, `(0, inf)`; `vary` is one
/// of `a1 b1 a2 b2 a3 b3`.
pub fn example2(p: [f64; 6], vary: Option<&str>) -> AngelescoSystem {
    let [a1, b1, a2, b2, a3, b3] = p;
    let mut w = [
        shifted_laguerre(a1, b1).unwrap(),
        jacobi01(a2, b2).unwrap(),
        cubic_exponential(a3, b3).unwrap(),
    ];
    if let Some(name) = vary {
        let k = match name {
            "a1" | "b1" => 0,
            "a2" | "b2" => 1,
            "a3" | "b3" => 2,
            other => panic!("unknown parameter {other}"),
        };
        w[k] = w[k].varying(name).unwrap();
    }
    AngelescoSystem::from_catalog(w.to_vec()).unwrap()
}

/// The parameter values used for Example 2 (`a1 b1 a2 b2 a3 b3`).
pub const EXAMPLE2: [f64; 6] = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0];

/// Random partition of at most `max_n` with `m` positive parts.
pub fn random_partition<R: Rng>(rng: &mut R, m: usize, max_n: usize) -> Vec<usize> {
    let n = rng.gen_range(m..=max_n);
    let mut parts = vec![1; m];
    for _ in m..n {
        let k = rng.gen_range(0..m);
        parts[k] += 1;
    }
    parts
}

/// A random catalog system with positive parameters in the admissible ranges.
pub fn random_system<R: Rng>(rng: &mut R) -> AngelescoSystem {
    let mut p = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    match p(0.0, 5.0) as usize {
        0 => AngelescoSystem::from_catalog(vec![laguerre(p(0.1, 3.0)).unwrap()]).unwrap(),
        1 => AngelescoSystem::from_catalog(vec![
            uniform(-p(0.5, 2.0), 0.0).unwrap(),
            uniform(p(0.0, 0.5), p(1.0, 2.0)).unwrap(),
        ])
        .unwrap(),
        2 => {
            let e = [
                p(0.2, 3.0),
                p(0.2, 3.0),
                p(0.2, 3.0),
                p(0.2, 3.0),
                p(0.2, 3.0),
                p(0.2, 3.0),
            ];
            example1_with(p(0.5, 2.0), p(0.5, 2.0), e, None)
        }
        3 => AngelescoSystem::from_catalog(vec![
            jacobi01(p(0.2, 3.0), p(0.2, 3.0)).unwrap(),
            cubic_exponential(p(0.5, 2.0), p(-1.0, 1.0)).unwrap(),
        ])
        .unwrap(),
        _ => example2(
            [
                p(0.2, 3.0),
                p(0.5, 2.0),
                p(0.2, 3.0),
                p(0.2, 3.0),
                p(0.5, 2.0),
                p(-1.0, 1.0),
            ],
            None,
        ),
    }
}

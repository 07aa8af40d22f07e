//! Acceptance suite: one line per criterion, non-zero exit status if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use angelesco::mop::{build_polynomial, find_zeros, moment_table};
use angelesco::sensitivity::{
    assemble, check_diagonal_dominance, check_m_matrix, check_z_matrix, solve_derivatives, RhsKind,
};
use angelesco::verify::{verify_at, VerificationReport};
use angelesco::weights::{laguerre, uniform};
use angelesco::{AngelescoSystem, Config, Partition};
use common::{determinant_coefficients, example1, example2, random_partition, random_system, rest_sign, EXAMPLE2};
use rand::rngs::StdRng;
use rand::SeedableRng;

type Outcome = Result<String, String>;

/// Largest solved-vs-finite-difference gap allowed by the acceptance criteria.
const FD_TOL: f64 = 1e-6;

fn part(p: &[usize]) -> Partition {
    Partition::new(p.to_vec()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_fd_gap(r: &VerificationReport) -> f64 {
    r.comparison.zeros.iter().map(|z| z.gap).fold(0.0, f64::max)
}

fn check_fd(r: &VerificationReport, what: &str) -> Result<f64, String> {
    let gap = max_fd_gap(r);
    ensure(gap <= FD_TOL, || {
        format!("{what}: finite-difference gap {gap:e} > {FD_TOL:e}")
    })?;
    Ok(gap)
}

fn verified(sys: &AngelescoSystem, p: &Partition, t: f64) -> Result<(Vec<f64>, VerificationReport), String> {
    verify_at(sys, p, t, None, &Config::default()).map_err(|e| format!("t = {t}, partition {p}: {e}"))
}

fn sign_of(v: &[f64]) -> i8 {
    if v.iter().all(|&x| x > 0.0) {
        1
    } else if v.iter().all(|&x| x < 0.0) {
        -1
    } else {
        0
    }
}

fn uniform_pair_closed_form() -> Outcome {
    let cfg = Config::default();
    let sys = common::uniform_pair();
    let p = part(&[1, 1]);
    let poly = build_polynomial(&sys, &p, 0.0, &cfg).map_err(|e| e.to_string())?;
    let z = find_zeros(&poly, &sys, &p, &cfg).map_err(|e| e.to_string())?;
    let r = 1.0 / 3f64.sqrt();
    let zerr = (z.block(0)[0] + r).abs().max((z.block(1)[0] - r).abs());
    ensure(zerr <= 1e-10, || format!("zero error {zerr:e}"))?;

    let ss = assemble(&sys, &p, 0.0, &z, &cfg).map_err(|e| e.to_string())?;
    let a = (-0.5 + r) / (-0.5 - r);
    let want = [[1.0, a], [a, 1.0]];
    let aerr = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (ss.matrix[i][j] - want[i][j]).abs())
        .fold(0.0, f64::max);
    ensure(aerr <= 1e-8, || format!("matrix error {aerr:e}"))?;
    let min_s = check_diagonal_dominance(&ss).min_s;
    ensure((min_s - (1.0 + a)).abs() <= 1e-6, || format!("min S = {min_s}"))?;
    Ok(format!(
        "zero err {zerr:.1e}, a = {:.7}, min S = {min_s:.7}",
        ss.matrix[0][1]
    ))
}

fn laguerre_recovery() -> Outcome {
    let mut worst_closed = 0.0f64;
    let mut worst_fd = 0.0f64;
    for alpha in [0.5, 1.0, 2.0] {
        let sys = AngelescoSystem::from_catalog(vec![laguerre(alpha).unwrap().varying("alpha").unwrap()]).unwrap();
        for n in 1..=4 {
            let p = part(&[n]);
            let (x, report) = verified(&sys, &p, alpha)?;
            ensure(x.iter().all(|&v| v > 0.0), || {
                format!("alpha {alpha}, n {n}: {x:?} not all positive")
            })?;
            worst_fd = worst_fd.max(check_fd(&report, &format!("alpha {alpha}, n {n}"))?);
            let closed: Vec<f64> = match n {
                1 => vec![1.0],
                2 => {
                    let s = 1.0 / (2.0 * (alpha + 2.0).sqrt());
                    vec![1.0 - s, 1.0 + s]
                }
                _ => continue,
            };
            let err = x.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure(err <= 1e-8, || {
                format!("alpha {alpha}, n {n}: closed-form error {err:e}")
            })?;
            worst_closed = worst_closed.max(err);
        }
    }
    Ok(format!("closed-form err {worst_closed:.1e}, fd gap {worst_fd:.1e}"))
}

fn example1_signs() -> Outcome {
    let p = part(&[2, 2]);
    let mut worst_fd = 0.0f64;
    let mut seen = Vec::new();
    for (name, want) in [("a1", 1), ("a2", 1), ("b2", 1), ("b1", -1), ("c1", -1), ("c2", -1)] {
        let (x, report) = verified(&example1(Some(name)), &p, 1.0)?;
        let got = sign_of(&x);
        ensure(got == want, || {
            format!("{name}: expected sign {want}, derivatives {x:?}")
        })?;
        worst_fd = worst_fd.max(check_fd(&report, name)?);
        seen.push(format!("{name}{}", if got > 0 { '+' } else { '-' }));
    }
    Ok(format!("{}; fd gap {worst_fd:.1e}", seen.join(" ")))
}

fn example2_signs() -> Outcome {
    let mut worst_fd = 0.0f64;
    let mut recorded = Vec::new();
    for parts in [[1, 1, 1], [2, 1, 1]] {
        let p = part(&parts);
        for (name, idx, want) in [
            ("b1", 1, Some(1)),
            ("b3", 5, Some(1)),
            ("a1", 0, Some(-1)),
            ("b2", 3, Some(-1)),
            ("a2", 2, None),
            ("a3", 4, None),
        ] {
            let sys = example2(EXAMPLE2, Some(name));
            let (x, report) = verified(&sys, &p, EXAMPLE2[idx])?;
            let got = sign_of(&x);
            if let Some(want) = want {
                ensure(got == want, || {
                    format!("{p} {name}: expected sign {want}, derivatives {x:?}")
                })?;
            } else {
                ensure(got != 0, || format!("{p} {name}: mixed signs {x:?}"))?;
                recorded.push(format!("{p} {name}{}", if got > 0 { '+' } else { '-' }));
            }
            worst_fd = worst_fd.max(check_fd(&report, &format!("{p} {name}"))?);
        }
    }
    Ok(format!("computed: {}; fd gap {worst_fd:.1e}", recorded.join(", ")))
}

fn matrix_classes() -> Outcome {
    let cfg = Config::default();
    let mut rng = StdRng::seed_from_u64(0x5eed_a11e);
    let mut failures = Vec::new();
    let mut min_s = f64::INFINITY;
    let mut min_inv = f64::INFINITY;
    for case in 0..20 {
        let sys = random_system(&mut rng);
        let p = part(&random_partition(&mut rng, sys.len(), 6));
        let mut run = || -> Result<(), String> {
            let poly = build_polynomial(&sys, &p, 0.0, &cfg).map_err(|e| e.to_string())?;
            let z = find_zeros(&poly, &sys, &p, &cfg).map_err(|e| e.to_string())?;
            let ss = assemble(&sys, &p, 0.0, &z, &cfg).map_err(|e| e.to_string())?;
            let zr = check_z_matrix(&ss, cfg.z_tol);
            ensure(zr.is_z, || format!("Z-pattern violated at {:?}", zr.violations))?;
            let dom = check_diagonal_dominance(&ss);
            ensure(dom.all_positive, || format!("min S = {}", dom.min_s))?;
            let m = check_m_matrix(&ss, cfg.z_tol, cfg.m_tol);
            ensure(m.is_m, || format!("inverse min entry {}", m.inverse_min_entry))?;
            for (row, &(k, i)) in ss.index_map.iter().enumerate() {
                let support = sys.weight(k).support(0.0);
                let x0 = support.interior_point();
                let want = rest_sign(z.blocks(), k, x0);
                ensure(ss.d[row].signum() == want, || format!("sign of d at ({k},{i})"))?;
            }
            min_s = min_s.min(dom.min_s);
            min_inv = min_inv.min(m.inverse_min_entry);
            Ok(())
        };
        if let Err(e) = run() {
            failures.push(format!("case {case} ({}, {p}): {e}", sys.label()));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("20 systems, min S {min_s:.4}, min inverse entry {min_inv:.2e}"))
}

fn moving_endpoints() -> Outcome {
    let cfg = Config::default();
    let sys = AngelescoSystem::from_catalog(vec![uniform(0.0, 1.0).unwrap().varying("upper").unwrap()]).unwrap();
    let p = part(&[1]);
    let mut worst = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        let poly = build_polynomial(&sys, &p, t, &cfg).map_err(|e| e.to_string())?;
        let z = find_zeros(&poly, &sys, &p, &cfg).map_err(|e| e.to_string())?;
        let ss = assemble(&sys, &p, t, &z, &cfg).map_err(|e| e.to_string())?;
        ensure(ss.rhs_kind == RhsKind::C, || "moving support not detected".into())?;
        let x = solve_derivatives(&ss).map_err(|e| e.to_string())?;
        worst = worst.max((x[0] - 0.5).abs());
    }
    ensure(worst <= 1e-8, || format!("uniform (0, t): error {worst:e}"))?;

    let p = part(&[1, 1]);
    let mut worst_fd = 0.0f64;
    for (name, want) in [("a", -1), ("b", 1)] {
        let (x, report) = verified(&example1(Some(name)), &p, 1.0)?;
        ensure(sign_of(&x) == want, || {
            format!("{name}: expected sign {want}, derivatives {x:?}")
        })?;
        worst_fd = worst_fd.max(check_fd(&report, name)?);
    }
    Ok(format!("uniform err {worst:.1e}; a-, b+; fd gap {worst_fd:.1e}"))
}

fn hypothesis_gate() -> Outcome {
    let sys = AngelescoSystem::from_catalog(vec![laguerre(1.0).unwrap().varying("alpha").unwrap()]).unwrap();
    let mut worst_fd = 0.0f64;
    for n in 1..=3 {
        let (_, report) = verified(&sys, &part(&[n]), -0.5)?;
        ensure(report.prediction.prediction.is_none(), || {
            format!("n {n}: predicted {:?}", report.prediction.prediction)
        })?;
        worst_fd = worst_fd.max(check_fd(&report, &format!("n {n}"))?);
    }
    Ok(format!("no prediction, fd gap {worst_fd:.1e}"))
}

fn determinant_route() -> Outcome {
    let cfg = Config::default();
    let mut rng = StdRng::seed_from_u64(0xde7e_2a11);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 10 {
        let sys = random_system(&mut rng);
        if sys.len() > 4 {
            continue;
        }
        let parts = random_partition(&mut rng, sys.len(), 4);
        let p = part(&parts);
        let poly = build_polynomial(&sys, &p, 0.0, &cfg).map_err(|e| format!("{}: {e}", sys.label()))?;
        let table = moment_table(&sys, &p, 0.0, &cfg.quadrature).map_err(|e| e.to_string())?;
        let oracle = determinant_coefficients(&table, &parts);
        let scale = poly.coeffs().iter().map(|c| c.abs()).fold(0.0, f64::max);
        let err = poly
            .coeffs()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        ensure(err <= 1e-8, || {
            format!("{} {p}: relative difference {err:e}", sys.label())
        })?;
        worst = worst.max(err);
        done += 1;
    }
    Ok(format!("10 systems, max relative difference {worst:.1e}"))
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1 uniform pair closed form", Some(1), uniform_pair_closed_form),
        ("AC2 Laguerre recovery", Some(5), laguerre_recovery),
        ("AC3 two-interval signs", Some(30), example1_signs),
        ("AC4 three-interval signs", Some(60), example2_signs),
        ("AC5 matrix classes on random systems", None, matrix_classes),
        ("AC6 moving endpoints", Some(10), moving_endpoints),
        ("AC7 hypothesis gate", None, hypothesis_gate),
        ("AC8 determinant route", None, determinant_route),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(secs)) if elapsed > Duration::from_secs(secs) => {
                Err(format!("took {:.2} s, budget {secs} s", elapsed.as_secs_f64()))
            }
            (o, _) => o,
        };
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.2} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.2} s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

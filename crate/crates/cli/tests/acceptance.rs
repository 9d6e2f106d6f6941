//! Acceptance suite: one PASS/FAIL line per criterion, with the tolerances
//! pinned below. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use isoq_cli::report::{validate_coeffs_report, validate_solve_report, validate_verify_report};
use isoq_core::auxpde::{
    self, decay_fit, io, manufactured_error, oracle_point, AuxProblem, Grid2D, ReducedOperator,
    SolveOptions,
};
use isoq_core::expansion::{
    nonumbilic_step1_closed, umbilic_closed_sum, CurvatureInputs, NumericsConfig, Pipeline,
};
use isoq_core::identities::{equality_case_error, first_failure, run_suite};
use isoq_core::quadrature::{integrate_tail_1d, DEFAULT_TOL_1D};
use isoq_core::specfun::beta_half;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const EXACT_SUITE_LIMIT: Duration = Duration::from_secs(5);
const EQUALITY_TOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-10;
const QUAD_SAMPLES: usize = 200;
const QUAD_LIMIT: Duration = Duration::from_secs(30);
const KERNEL_TOL: f64 = 1e-4;
const KERNEL_POINTS: usize = 100;
const KERNEL_STEP: f64 = 1e-3;
const ORDER_TARGET: f64 = 2.0;
const ORDER_TOL: f64 = 0.3;
const ADJOINT_TOL: f64 = 1e-12;
const DECAY_TOL: f64 = 1.0;
const ORACLE_TOL: f64 = 5e-3;
const ORACLE_QUAD_TOL: f64 = 1e-9;
const ORACLE_PROBES: [(f64, f64); 5] = [(1.0, 1.0), (0.5, 0.5), (2.0, 1.0), (1.0, 3.0), (3.0, 2.0)];
const SOLVE_LIMIT: Duration = Duration::from_secs(120);
const SEED: u64 = 2024;

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn exact_suite() -> Outcome {
    let t = Instant::now();
    let checks = run_suite(6, 64, None);
    let elapsed = t.elapsed();
    match first_failure(&checks) {
        Some(c) => outcome(false, format!("'{}' fails at n = {}: {:?}", c.name, c.n, c.detail)),
        None => outcome(
            elapsed < EXACT_SUITE_LIMIT,
            format!("{} checks over n in [6,64], zero tolerance, {elapsed:.2?} (limit {EXACT_SUITE_LIMIT:?})", checks.len()),
        ),
    }
}

fn equality_case() -> Outcome {
    let worst = (3..=20).map(equality_case_error).fold(0.0, f64::max);
    outcome(
        worst <= EQUALITY_TOL,
        format!("max relative error {worst:.2e} for n in [3,20] (tol {EQUALITY_TOL:e})"),
    )
}

fn quadrature_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..QUAD_SAMPLES {
        let a = rng.gen_range(0..=40u32);
        let b = rng.gen_range((a + 3) / 2..=a / 2 + 30);
        let f = |r: f64| r.powi(a as i32) / (1.0 + r * r).powi(b as i32);
        match integrate_tail_1d(f, 0.0, DEFAULT_TOL_1D) {
            Ok(q) => {
                let want = beta_half(a, b).unwrap();
                worst = worst.max(((q.value - want) / want).abs());
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = t.elapsed();
    outcome(
        failures == 0 && worst <= QUAD_TOL && elapsed < QUAD_LIMIT,
        format!("{QUAD_SAMPLES} random (a,b): max relative error {worst:.2e} (tol {QUAD_TOL:e}), {failures} failures, {elapsed:.2?}"),
    )
}

fn kernel_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [6, 10, 12] {
        let pts: Vec<(f64, f64)> = (0..KERNEL_POINTS)
            .map(|_| (rng.gen_range(0.0..6.0), rng.gen_range(0.05..6.0)))
            .collect();
        let err = auxpde::verify_kernel_identity(n, &pts, KERNEL_STEP);
        ok &= err < KERNEL_TOL;
        parts.push(format!("n={n}: {err:.1e}"));
    }
    outcome(
        ok,
        format!(
            "max relative error {} (tol {KERNEL_TOL:e})",
            parts.join(", ")
        ),
    )
}

fn self_adjoint_error() -> f64 {
    let grid = Grid2D::new(20.0, 20.0, 128, 129).unwrap();
    let op = ReducedOperator::new(grid, 12.0);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut random = || {
        (0..grid.len())
            .map(|k| {
                if op.is_unknown(k % grid.nr, k / grid.nr) {
                    rng.gen_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (u, v) = (random(), random());
        let a = op.weighted_dot(&u, &op.apply(&v));
        let b = op.weighted_dot(&op.apply(&u), &v);
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
    }
    worst
}

fn pde_soundness(pipeline: &Pipeline) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    let errs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&nr| manufactured_error(Grid2D::new(20.0, 20.0, nr, nr + 1).unwrap(), 12.0))
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ok &= orders.iter().all(|o| (o - ORDER_TARGET).abs() <= ORDER_TOL);
    notes.push(format!("order {:.2}/{:.2}", orders[0], orders[1]));

    let adj = self_adjoint_error();
    ok &= adj <= ADJOINT_TOL;
    notes.push(format!("adjoint {adj:.1e}"));

    let opts = pipeline.config.solve;
    for (n, p) in [(10, 1), (10, 2), (12, 1)] {
        let problem = AuxProblem::new(n, p).unwrap();
        let t = Instant::now();
        let solved = auxpde::solve_reduced_with(&problem, pipeline.config.grid, &opts);
        let elapsed = t.elapsed();
        let (field, report) = match solved {
            Ok(x) => x,
            Err(e) => {
                ok = false;
                notes.push(format!("({n},{p}) solve failed: {e}"));
                continue;
            }
        };
        let kappa = decay_fit(&field).unwrap_or(f64::NAN);
        // n − 1 for p = 1, n − 2 for p = 2.
        let target = problem.expected_decay();
        let fields = pipeline.field_set(&problem).unwrap();
        let oracle_err = ORACLE_PROBES
            .iter()
            .map(|&(r, s)| {
                let o = oracle_point(&problem, r, s, ORACLE_QUAD_TOL).unwrap();
                ((fields.probe(r, s) - o) / o).abs()
            })
            .fold(0.0, f64::max);
        let good = report.positivity_violations == 0
            && (kappa - target).abs() <= DECAY_TOL
            && oracle_err <= ORACLE_TOL
            && elapsed <= SOLVE_LIMIT
            && report.residual_rel <= opts.tol;
        ok &= good;
        notes.push(format!(
            "({n},{p}): {} neg, decay {kappa:.2} vs {target}, oracle {oracle_err:.1e}, {elapsed:.1?}",
            report.positivity_violations
        ));
    }
    outcome(ok, notes.join("; "))
}

fn nonumbilic_threshold(pipeline: &Pipeline) -> Outcome {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for n in 12..=20 {
        let (k, cert) = pipeline
            .lambda2_coefficient(n, &CurvatureInputs::default())
            .unwrap();
        ok &= cert.positive;
        worst = worst.min(cert.margin / k.k.value());
    }
    let a1_ok = (6..=12).all(|n| nonumbilic_step1_closed(n).unwrap().signum() <= 0)
        && nonumbilic_step1_closed(12).unwrap().is_zero()
        && nonumbilic_step1_closed(11).unwrap().signum() < 0;
    outcome(
        ok && a1_ok,
        format!("K(n) certified for n in [12,20] (min margin/K {worst:.3}); A1 <= 0 on [6,12], = 0 exactly at 12: {a1_ok}"),
    )
}

fn umbilic_threshold(pipeline: &Pipeline) -> Outcome {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for n in 10..=20 {
        let (u, cert) = pipeline
            .lambda4_coefficients(n, &CurvatureInputs::default())
            .unwrap();
        ok &= cert.positive && u.a_n.margin() > 0.0 && u.b_n.signum() > 0;
        worst = worst.min(u.a_n.margin() / u.a_n.value());
    }
    let r10 = umbilic_closed_sum(10).unwrap().rninj2.is_zero();
    let r_pos = (11..=64).all(|n| umbilic_closed_sum(n).unwrap().rninj2.signum() > 0);
    outcome(
        ok && r10 && r_pos,
        format!("a(n), b(n) certified for n in [10,20] (min a-margin/a {worst:.3}); R-part = 0 at 10: {r10}, > 0 on [11,64]: {r_pos}"),
    )
}

fn isoq(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isoq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn isoq")
}

fn exploratory_sweep(dir: &Path) -> Outcome {
    let cfg = dir.join("exploratory.cfg");
    std::fs::write(&cfg, "exploratory = true\nseed = 7\n").unwrap();
    let run = |tag: &str| -> Result<Vec<Vec<u8>>, String> {
        let sub = dir.join(tag);
        std::fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for (case, lo, hi) in [("nonumbilic", "7", "11"), ("umbilic", "6", "9")] {
            let (csv, svg, json) = (
                format!("{case}.csv"),
                format!("{case}.svg"),
                format!("{case}.json"),
            );
            let o = isoq(
                &[
                    "coeffs",
                    "--config",
                    cfg.to_str().unwrap(),
                    "--case",
                    case,
                    "--n-min",
                    lo,
                    "--n-max",
                    hi,
                    "--csv",
                    &csv,
                    "--svg",
                    &svg,
                    "--json",
                    &json,
                ],
                &sub,
            );
            if o.status.code() != Some(0) {
                return Err(format!(
                    "{case}: exit {:?}: {}",
                    o.status.code(),
                    String::from_utf8_lossy(&o.stderr)
                ));
            }
            for f in [&csv, &svg, &json] {
                files.push(std::fs::read(sub.join(f)).map_err(|e| e.to_string())?);
            }
        }
        Ok(files)
    };
    let (first, second) = match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let stable = first == second;
    let mut complete = true;
    for (k, want) in [(0usize, 5usize), (3, 4)] {
        let csv = String::from_utf8_lossy(&first[k]);
        let rows: Vec<Vec<&str>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        complete &= rows.len() == want;
        complete &= rows
            .iter()
            .all(|r| r[10] == "true" && !r[8].is_empty() && r[8].parse::<f64>().is_ok());
        let json: Value = serde_json::from_slice(&first[k + 2]).unwrap();
        complete &= validate_coeffs_report(&json).is_ok();
        complete &= String::from_utf8_lossy(&first[k + 1]).contains("</svg>");
    }
    outcome(stable && complete, format!("K(n) n in [7,11], (a,b)(n) n in [6,9]: complete {complete}, bit-stable across runs {stable}"))
}

fn cli_contracts(dir: &Path) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let o = isoq(
        &[
            "--format",
            "json",
            "solve",
            "--case",
            "lambda",
            "--n",
            "10",
            "--nr",
            "512",
            "--ns",
            "512",
            "--out",
            "l10.isoqf",
        ],
        dir,
    );
    let solve_ok = o.status.code() == Some(0);
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap_or(Value::Null);
    let path = dir.join("l10.isoqf");
    let round_trip = solve_ok
        && match (std::fs::read(&path), io::read_field(&path)) {
            (Ok(bytes), Ok(stored)) => {
                let problem = AuxProblem::new(10, 2).unwrap();
                let grid = Grid2D::new(40.0, 40.0, 512, 512).unwrap();
                let (field, _) =
                    auxpde::solve_reduced_with(&problem, grid, &SolveOptions::default()).unwrap();
                io::encode(&stored.field, stored.n, stored.p) == bytes
                    && field
                        .values()
                        .iter()
                        .zip(stored.field.values())
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            }
            _ => false,
        };
    ok &= round_trip;
    notes.push(format!("field round trip bit-identical {round_trip}"));

    let clean = isoq(&["verify"], dir).status.code() == Some(0);
    let fuzzed = (0..8).all(|seed| {
        isoq(&["verify", "--fuzz", "--seed", &seed.to_string()], dir)
            .status
            .code()
            == Some(1)
    });
    let bad = isoq(&["verify", "--n-min", "20", "--n-max", "10"], dir)
        .status
        .code()
        == Some(3);
    ok &= clean && fuzzed && bad;
    notes.push(format!(
        "verify exit 0 clean {clean}, 1 under --fuzz (8 seeds) {fuzzed}, 3 on bad config {bad}"
    ));

    let verify_json: Value =
        serde_json::from_slice(&isoq(&["--format", "json", "verify"], dir).stdout)
            .unwrap_or(Value::Null);
    let fuzz_json: Value =
        serde_json::from_slice(&isoq(&["--format", "json", "verify", "--fuzz"], dir).stdout)
            .unwrap_or(Value::Null);
    let coeff_json: Value = serde_json::from_slice(
        &std::fs::read(dir.join("a").join("umbilic.json")).unwrap_or_default(),
    )
    .unwrap_or(Value::Null);
    let schema = validate_verify_report(&verify_json).is_ok()
        && validate_verify_report(&fuzz_json).is_ok()
        && validate_solve_report(&stdout).is_ok()
        && validate_coeffs_report(&coeff_json).is_ok();
    ok &= schema;
    notes.push(format!("JSON reports schema-valid {schema}"));
    outcome(ok, notes.join("; "))
}

#[test]
fn acceptance_criteria() {
    let pipeline = Pipeline::new(NumericsConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Check)> = vec![
        ("exact closed-form suite", Box::new(exact_suite)),
        ("equality-case identity", Box::new(equality_case)),
        ("quadrature fidelity", Box::new(quadrature_fidelity)),
        ("kernel identity", Box::new(kernel_identity)),
        (
            "PDE solver soundness",
            Box::new(|| pde_soundness(&pipeline)),
        ),
        (
            "nonumbilic threshold",
            Box::new(|| nonumbilic_threshold(&pipeline)),
        ),
        (
            "umbilic threshold",
            Box::new(|| umbilic_threshold(&pipeline)),
        ),
        (
            "exploratory sweep deliverable",
            Box::new(|| exploratory_sweep(dir.path())),
        ),
        ("CLI contracts", Box::new(|| cli_contracts(dir.path()))),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        println!(
            "acceptance {} {} {name}: {} [{:.1?}]",
            k + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
        if !o.passed {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}

use isoq_core::auxpde::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn manufactured_solution_is_second_order() {
    for m in [8.0, 12.0, 14.0] {
        let e: Vec<f64> = [128, 256, 512]
            .iter()
            .map(|&nr| manufactured_error(Grid2D::new(20.0, 20.0, nr, nr + 1).unwrap(), m))
            .collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(
                (order - 2.0).abs() < 0.3,
                "m={m}: errors {e:?}, order {order}"
            );
        }
    }
}

#[test]
fn weighted_operator_is_self_adjoint() {
    let grid = Grid2D::new(20.0, 20.0, 96, 81).unwrap();
    let op = ReducedOperator::new(grid, 12.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random = || {
        let mut v = vec![0.0; grid.len()];
        for j in 0..grid.ns {
            for i in 0..grid.nr {
                if op.is_unknown(i, j) {
                    v[grid.index(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        v
    };
    for _ in 0..5 {
        let (u, v) = (random(), random());
        let a = op.weighted_dot(&u, &op.apply(&v));
        let b = op.weighted_dot(&op.apply(&u), &v);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{a} vs {b}");
    }
}

#[test]
fn solver_agrees_with_green_oracle_coarse() {
    // Coarse check; the 1024² comparison lives in the acceptance suite.
    let p = AuxProblem::new(10, 1).unwrap();
    let grid = Grid2D::new(40.0, 40.0, 512, 512).unwrap();
    let (fine, _) = solve_reduced(&p, grid, 1e-10).unwrap();
    let (coarse, _) =
        solve_reduced_unchecked(&p, grid.coarsened(), &SolveOptions::default()).unwrap();
    for (r, s) in [(1.0, 1.0), (2.0, 1.0), (1.0, 3.0)] {
        let v = (4.0 * fine.sample_cubic(r, s) - coarse.sample_cubic(r, s)) / 3.0;
        let o = oracle_point(&p, r, s, 1e-9).unwrap();
        assert!(
            ((v - o) / o).abs() < 5e-3,
            "({r},{s}): solver {v} oracle {o}"
        );
    }
}

#[test]
fn pcg_cross_check_matches_direct_solve() {
    let p = AuxProblem::new(8, 2).unwrap();
    let grid = Grid2D::new(20.0, 20.0, 64, 64).unwrap();
    let (direct, _) = solve_reduced_unchecked(
        &p,
        grid,
        &SolveOptions {
            far_field_levels: 0,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let op = ReducedOperator::new(grid, p.radial_power());
    let mut f = vec![0.0; grid.len()];
    for j in 0..grid.ns {
        for i in 0..grid.nr {
            if op.is_unknown(i, j) {
                f[grid.index(i, j)] = p.source(grid.r(i), grid.s(j));
            }
        }
    }
    let mut x = vec![0.0; grid.len()];
    op.solve_pcg(&f, &mut x, 1e-13, 20_000);
    let scale = direct.max_abs();
    for (a, b) in x.iter().zip(direct.values()) {
        assert!((a - b).abs() < 1e-9 * scale);
    }
}

#[test]
fn field_file_round_trip_through_disk() {
    let p = AuxProblem::new(10, 2).unwrap();
    let grid = Grid2D::new(20.0, 20.0, 200, 201).unwrap();
    let (field, report) = solve_reduced(&p, grid, 1e-10).unwrap();
    assert!(report.residual_rel <= 1e-10);
    let dir = std::env::temp_dir().join(format!("isoq-core-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("lambda10.isoqf");
    io::write_field(&path, &field, &p).unwrap();
    io::write_meta(
        &path,
        &io::FieldMeta {
            schema_version: 1,
            problem: p,
            grid,
            report: report.clone(),
        },
    )
    .unwrap();
    let back = io::read_field(&path).unwrap();
    assert_eq!(back.p, 2);
    assert!(field
        .values()
        .iter()
        .zip(back.field.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(io::read_meta(&path).unwrap().report, report);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn kernel_identity_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [6, 10, 12] {
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.gen_range(0.0..5.0), rng.gen_range(0.05..5.0)))
            .collect();
        assert!(verify_kernel_identity(n, &pts, 1e-3) < 1e-4);
    }
}

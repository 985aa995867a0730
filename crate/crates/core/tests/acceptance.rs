//! End-to-end acceptance gate. Each test covers one criterion and prints
//! a single pass line; run with `--nocapture` to see them.

use std::time::Instant;

use approx::assert_relative_eq;

use urysohn_lab::controls::{
    complete_resource, derive_seed, estimate_delta_star, random_admissible, DeltaStar,
};
use urysohn_lab::experiments::{
    directed_hausdorff, sample_trajectories, sweep, ExperimentParams,
};
use urysohn_lab::grid::{prolong_1d, DomainSpec, Grid, GridFunction, SubsetStrategy};
use urysohn_lab::problem::{KernelFamily, ProblemSpec};
use urysohn_lab::solver::{observed_contraction, solve_trajectory, SolveOptions};

fn affine_fixed_point_problem() -> ProblemSpec {
    // lambda = 0 turns the equation into x = 0.25 x + sin(pi xi), whose
    // solution is (4/3) sin(pi xi) at every node.
    ProblemSpec::new(
        DomainSpec::unit_interval(),
        KernelFamily::LinearExact {
            a: 0.25,
            b0: 0.0,
            c2: 0.0,
        },
        0.0,
        2.0,
        1.0,
    )
    .unwrap()
}

#[test]
fn criterion_1_closed_form_fixed_point() {
    let start = Instant::now();
    let problem = affine_fixed_point_problem();
    let grid = Grid::build(&problem.domain, 1000).unwrap();
    let constants = problem.compute_constants(&grid);
    let u = GridFunction::zeros(&grid, 1);
    let opts = SolveOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let t = solve_trajectory(&problem, &grid, &constants, &u, &opts).unwrap();
    assert!(t.converged);
    for (i, node) in grid.nodes.iter().enumerate() {
        let exact = 4.0 / 3.0 * (std::f64::consts::PI * node[0]).sin();
        assert!(
            (t.values.values[i] - exact).abs() <= 1e-9,
            "node {i}: {} vs {exact}",
            t.values.values[i]
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("acceptance 1 (closed-form fixed point): PASS");
}

#[test]
fn criterion_2_linear_oracle_equivalence() {
    use nalgebra::{DMatrix, DVector};

    let start = Instant::now();
    let problem = ProblemSpec::p2_default();
    let (a, b0, c2) = match problem.family {
        KernelFamily::LinearExact { a, b0, c2 } => (a, b0, c2),
        _ => unreachable!(),
    };
    let grid = Grid::build(&problem.domain, 400).unwrap();
    let constants = problem.compute_constants(&grid);
    let n = grid.len();

    // Discrete linear system ((1 - a) I - lambda B W) x = f0 + lambda C W u
    // with B_ij = b0 e^{-xi_i s_j}, C_ij = c2 cos(xi_i + s_j), W = diag(w).
    let mut system = DMatrix::zeros(n, n);
    let mut c_mat = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (xi, s, w) = (grid.nodes[i][0], grid.nodes[j][0], grid.weights[j]);
            system[(i, j)] = -problem.lambda * b0 * (-xi * s).exp() * w;
            c_mat[(i, j)] = c2 * (xi + s).cos() * w;
        }
        system[(i, i)] += 1.0 - a;
    }
    let lu = system.lu();
    let f0 = DVector::from_fn(n, |i, _| (std::f64::consts::PI * grid.nodes[i][0]).sin());

    let opts = SolveOptions::default();
    for k in 0..50 {
        let target = 0.02 + 0.019 * k as f64; // spans (0, r)
        let u = random_admissible(&problem, &grid, derive_seed(90, k as u64), target).unwrap();
        let picard = solve_trajectory(&problem, &grid, &constants, &u.values, &opts).unwrap();
        let uv = DVector::from_fn(n, |i, _| u.values.values[i]);
        let rhs = &f0 + problem.lambda * (&c_mat * uv);
        let exact = lu.solve(&rhs).expect("linear system is nonsingular");
        let diff = GridFunction::from_values(
            &grid,
            1,
            (0..n).map(|i| picard.values.values[i] - exact[i]).collect(),
        )
        .unwrap();
        let dist = grid.lp_norm(&diff, problem.p);
        assert!(dist <= 1e-9, "control {k}: L_p gap {dist}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("acceptance 2 (linear oracle equivalence): PASS");
}

#[test]
fn criterion_3_contraction_certificate() {
    let opts = SolveOptions::default();
    for (problem, cells) in [
        (ProblemSpec::p1_default(), 200),
        (ProblemSpec::p2_default(), 200),
        (ProblemSpec::p3_default(), 12),
    ] {
        let grid = Grid::build(&problem.domain, cells).unwrap();
        let constants = problem.compute_constants(&grid);
        let bound = constants.l_star.powf(1.0 / problem.p) + 1e-9;
        for k in 0..10u64 {
            let target = problem.r * (0.05 + 0.09 * k as f64);
            let u = random_admissible(&problem, &grid, derive_seed(301, k), target).unwrap();
            let t = solve_trajectory(&problem, &grid, &constants, &u.values, &opts).unwrap();
            let ratio = observed_contraction(&t);
            assert!(
                ratio <= bound,
                "{} control {k}: ratio {ratio} above {bound}",
                problem.family.id()
            );
        }
    }
    println!("acceptance 3 (contraction certificate): PASS");
}

#[test]
fn criterion_4_trajectory_norm_bound() {
    let opts = SolveOptions::default();
    for (problem, cells) in [
        (ProblemSpec::p1_default(), 200),
        (ProblemSpec::p2_default(), 200),
        (ProblemSpec::p3_default(), 12),
    ] {
        let grid = Grid::build(&problem.domain, cells).unwrap();
        let constants = problem.compute_constants(&grid);
        let beta = constants.beta_star.unwrap();
        let sample = sample_trajectories(
            &problem,
            &grid,
            &constants,
            100,
            derive_seed(400, cells as u64),
            false,
            &opts,
        )
        .unwrap();
        for (k, t) in sample.trajectories.iter().enumerate() {
            let norm = grid.lp_norm(t, problem.p);
            assert!(
                norm <= beta + 1e-6,
                "{} trajectory {k}: ||x||_p = {norm} above beta* = {beta}",
                problem.family.id()
            );
        }
    }
    println!("acceptance 4 (a priori trajectory bound): PASS");
}

#[test]
fn criterion_5_robustness_sweep_desk_scale() {
    let start = Instant::now();
    let epsilons = [0.5, 0.1, 0.05];
    let r0_list = [0.3, 0.6];
    for problem in [ProblemSpec::p1_default(), ProblemSpec::p2_default()] {
        let grid = Grid::build(&problem.domain, 400).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let master = 42;
        let rows = sweep(
            &problem, &grid, &constants, &epsilons, &r0_list, 20, &params, master,
        )
        .unwrap();
        assert_eq!(rows.len(), epsilons.len() * r0_list.len() * 20);
        for (ei, &epsilon) in epsilons.iter().enumerate() {
            // Same derived seed the sweep uses internally, so this is the
            // exact budget its masks were drawn against.
            let delta = estimate_delta_star(
                &problem,
                &grid,
                &constants,
                epsilon,
                params.n_samples,
                derive_seed(master, 0x1000 + ei as u64),
                &params.solve,
            )
            .unwrap();
            let budget = delta.budget(&grid);
            for row in rows.iter().filter(|r| r.epsilon == epsilon) {
                assert!(
                    row.distance <= epsilon,
                    "{} eps {epsilon} r0 {}: distance {}",
                    problem.family.id(),
                    row.r0,
                    row.distance
                );
                assert!(
                    row.delta_used <= budget + 1e-15,
                    "mask measure {} above delta* {budget}",
                    row.delta_used
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!("acceptance 5 (robustness bound at desk scale): PASS");
}

#[test]
fn criterion_6_full_resource_density() {
    let problem = ProblemSpec::p1_default();
    let grid = Grid::build(&problem.domain, 400).unwrap();
    let constants = problem.compute_constants(&grid);
    let params = ExperimentParams::defaults_for(&problem);
    let epsilon = 0.05;

    let sample =
        sample_trajectories(&problem, &grid, &constants, 32, 600, false, &params.solve).unwrap();
    let delta = estimate_delta_star(
        &problem,
        &grid,
        &constants,
        epsilon,
        params.n_samples,
        601,
        &params.solve,
    )
    .unwrap();
    let budget = match &delta {
        DeltaStar::Estimate(e) => e.delta_star,
        DeltaStar::Unconstrained => unreachable!("lambda r > 0"),
    };

    let mut completions = Vec::with_capacity(32);
    for (u, x) in sample.controls.iter().zip(&sample.trajectories) {
        let mask = grid
            .subset_by_measure(
                budget,
                &SubsetStrategy::WorstFor {
                    scores: x,
                    exponent: problem.p,
                },
            )
            .unwrap();
        let full = complete_resource(&problem, &grid, u, &mask, &params.b_star).unwrap();
        assert_relative_eq!(full.q_norm, problem.r, max_relative = 1e-10);
        let z = solve_trajectory(&problem, &grid, &constants, &full.values, &params.solve)
            .unwrap();
        completions.push(z.values);
    }
    let d = directed_hausdorff(&grid, problem.p, &sample.trajectories, &completions);
    assert!(d <= epsilon, "directed Hausdorff {d} above {epsilon}");
    println!("acceptance 6 (full-resource completions are dense): PASS");
}

#[test]
fn criterion_7_degenerate_exactness() {
    let problem = ProblemSpec::new(
        DomainSpec::unit_interval(),
        KernelFamily::ScalarSmooth {
            a: 0.2,
            c1: 0.3,
            c2: 0.5,
            d: 0.4,
        },
        0.0,
        2.0,
        1.0,
    )
    .unwrap();
    let grid = Grid::build(&problem.domain, 200).unwrap();
    let constants = problem.compute_constants(&grid);
    let params = ExperimentParams::defaults_for(&problem);
    let rows = sweep(
        &problem,
        &grid,
        &constants,
        &[0.2, 0.1],
        &[0.3, 0.6],
        5,
        &params,
        7,
    )
    .unwrap();
    assert_eq!(rows.len(), 20);
    for row in &rows {
        assert_eq!(row.distance, 0.0);
        assert!(row.trivial && row.bound_satisfied);
    }
    println!("acceptance 7 (degenerate exactness at lambda = 0): PASS");
}

#[test]
fn criterion_8_sweep_determinism() {
    // CLI-level byte identity: two invocations, same config and seed.
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{"problem": {"family": "P1", "q": 2.0},
            "grid": {"cells_per_axis": 100},
            "experiment": {"epsilons": [0.2, 0.1], "r0_list": [0.3, 0.6],
                           "n_repeats": 3, "seed": 42}}"#,
    )
    .unwrap();
    let run = || {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_urysohn-lab"))
            .arg("sweep")
            .arg(&config_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {:?}", out.stderr);
        out.stdout
    };
    let first = run();
    let second = run();
    assert!(!first.is_empty());
    assert_eq!(first, second, "sweep CSV output is not byte-identical");
    println!("acceptance 8 (byte-identical sweep output): PASS");
}

#[test]
fn criterion_9_grid_convergence() {
    let problem = ProblemSpec::p1_default();
    let opts = SolveOptions::default();
    // The same L_q function on every grid: an analytic control sampled
    // per grid, with ||u||_2 = 0.8 / sqrt(2) < r (no rescaling).
    let control = |grid: &Grid| {
        GridFunction::sample(grid, 1, |xi, out| {
            out[0] = 0.8 * (2.0 * std::f64::consts::PI * xi[0]).cos()
        })
    };
    let mut solutions = Vec::new();
    let mut grids = Vec::new();
    for n in [100usize, 200, 400, 800] {
        let grid = Grid::build(&problem.domain, n).unwrap();
        let constants = problem.compute_constants(&grid);
        let u = control(&grid);
        assert!(grid.lp_norm(&u, problem.q) <= problem.r);
        solutions.push(
            solve_trajectory(&problem, &grid, &constants, &u, &opts)
                .unwrap()
                .values,
        );
        grids.push(grid);
    }
    // d(N) = ||x_{2N} - P x_N||_p on the 2N grid, N in {100, 200, 400}.
    let mut dists = Vec::new();
    for i in 0..3 {
        let coarse_on_fine = prolong_1d(&grids[i], &solutions[i], &grids[i + 1]).unwrap();
        let diff = solutions[i + 1].sub(&coarse_on_fine);
        dists.push(grids[i + 1].lp_norm(&diff, problem.p));
    }
    for w in dists.windows(2) {
        assert!(
            w[1] <= w[0] * 1.05,
            "refinement distances not decreasing: {dists:?}"
        );
    }
    println!("acceptance 9 (grid convergence): PASS");
}

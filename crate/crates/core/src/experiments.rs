//! Executable versions of the robustness and density statements:
//! splice the control on a small-measure subset while spending the full
//! remaining resource, complete arbitrary controls to full resource,
//! and measure directed Hausdorff distances between sampled trajectory
//! sets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controls::{
    complete_resource, derive_seed, estimate_delta_star, random_admissible, Control, DeltaStar,
};
use crate::grid::{Grid, GridFunction, SubsetStrategy};
use crate::problem::{Constants, ProblemSpec};
use crate::solver::{solve_trajectory, SolveOptions, Trajectory};
use crate::{Error, Result};

/// How the surgery subset is placed on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    Prefix,
    Random,
    /// Greedy largest `w_i ||x_i||^p` cells of the unperturbed
    /// trajectory: the adversarial placement for the mass bound.
    WorstFor,
}

/// Knobs shared by the experiment drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    /// Trajectory samples used by the delta* estimator.
    pub n_samples: usize,
    pub mask_strategy: MaskStrategy,
    /// Unit direction placed on the surgery subset.
    pub b_star: Vec<f64>,
    pub solve: SolveOptions,
}

impl ExperimentParams {
    pub fn defaults_for(problem: &ProblemSpec) -> Self {
        let mut b_star = vec![0.0; problem.control_dim()];
        b_star[0] = 1.0;
        ExperimentParams {
            n_samples: 8,
            mask_strategy: MaskStrategy::WorstFor,
            b_star,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl From<&Trajectory> for SolverStats {
    fn from(t: &Trajectory) -> Self {
        SolverStats {
            iterations: t.iterations,
            residual: t.residual,
            converged: t.converged,
        }
    }
}

/// One control-surgery run: original trajectory vs the trajectory of the
/// spliced full-resource control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub epsilon: f64,
    pub delta_used: f64,
    pub r0: f64,
    /// `||x - z||_p`.
    pub distance: f64,
    pub bound_satisfied: bool,
    /// True when `lambda r = 0` makes the dynamics control-independent.
    pub trivial: bool,
    pub original: SolverStats,
    pub spliced: SolverStats,
}

/// Robustness experiment: estimate `delta*(epsilon)`, place a mask of
/// measure within it, complete the control to full resource there, and
/// compare the two trajectories in `L_p`.
pub fn run_robustness(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    u: &Control,
    epsilon: f64,
    params: &ExperimentParams,
    seed: u64,
    precomputed_delta: Option<&DeltaStar>,
) -> Result<RobustnessReport> {
    let r0 = u.q_norm;
    if r0 >= problem.r {
        return Err(Error::InvalidArgument(format!(
            "robustness needs remaining resource: r0 = {r0} must be below r = {}",
            problem.r
        )));
    }
    let x = solve_trajectory(problem, grid, constants, &u.values, &params.solve)?;

    if problem.lambda == 0.0 || problem.r == 0.0 {
        // Control-independent dynamics: the spliced trajectory is the
        // original one.
        let stats = SolverStats::from(&x);
        return Ok(RobustnessReport {
            epsilon,
            delta_used: 0.0,
            r0,
            distance: 0.0,
            bound_satisfied: true,
            trivial: true,
            original: stats,
            spliced: stats,
        });
    }

    let owned;
    let delta = match precomputed_delta {
        Some(d) => d,
        None => {
            owned = estimate_delta_star(
                problem,
                grid,
                constants,
                epsilon,
                params.n_samples,
                derive_seed(seed, 0xD),
                &params.solve,
            )?;
            &owned
        }
    };
    let budget = delta.budget(grid);
    let strategy = match params.mask_strategy {
        MaskStrategy::Prefix => SubsetStrategy::Prefix,
        MaskStrategy::Random => SubsetStrategy::Random(derive_seed(seed, 0xA)),
        MaskStrategy::WorstFor => SubsetStrategy::WorstFor {
            scores: &x.values,
            exponent: problem.p,
        },
    };
    let mask = grid.subset_by_measure(budget, &strategy)?;
    if mask.measure == 0.0 {
        return Err(Error::EmptyMask);
    }
    let v = complete_resource(problem, grid, u, &mask, &params.b_star)?;
    let z = solve_trajectory(problem, grid, constants, &v.values, &params.solve)?;
    let distance = grid.lp_norm(&x.values.sub(&z.values), problem.p);
    Ok(RobustnessReport {
        epsilon,
        delta_used: mask.measure,
        r0,
        distance,
        bound_satisfied: distance <= epsilon,
        trivial: false,
        original: SolverStats::from(&x),
        spliced: SolverStats::from(&z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub epsilon: f64,
    pub delta_star: f64,
    /// `||x - x*||_p`.
    pub distance: f64,
    /// `||u*||_q`; must equal r.
    pub full_norm: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub r0: f64,
    pub rows: Vec<DensityRow>,
}

/// Density experiment: for each epsilon in a decreasing schedule,
/// complete `u` to full resource on a subset of measure within
/// `delta*(epsilon)` and record the trajectory deviation.
pub fn run_density(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    u: &Control,
    epsilon_schedule: &[f64],
    params: &ExperimentParams,
    seed: u64,
) -> Result<DensityReport> {
    let r0 = u.q_norm;
    if r0 >= problem.r {
        return Err(Error::InvalidArgument(format!(
            "density needs remaining resource: r0 = {r0} must be below r = {}",
            problem.r
        )));
    }
    for w in epsilon_schedule.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidArgument(
                "epsilon schedule must be non-increasing".into(),
            ));
        }
    }
    let x = solve_trajectory(problem, grid, constants, &u.values, &params.solve)?;
    let control_free = problem.lambda == 0.0 || problem.r == 0.0;
    let mut rows = Vec::with_capacity(epsilon_schedule.len());
    for (k, &epsilon) in epsilon_schedule.iter().enumerate() {
        if control_free {
            rows.push(DensityRow {
                epsilon,
                delta_star: 0.0,
                distance: 0.0,
                full_norm: r0,
                pass: true,
            });
            continue;
        }
        let delta = estimate_delta_star(
            problem,
            grid,
            constants,
            epsilon,
            params.n_samples,
            derive_seed(seed, k as u64),
            &params.solve,
        )?;
        let budget = delta.budget(grid);
        let strategy = match params.mask_strategy {
            MaskStrategy::Prefix => SubsetStrategy::Prefix,
            MaskStrategy::Random => SubsetStrategy::Random(derive_seed(seed, 0xB0 + k as u64)),
            MaskStrategy::WorstFor => SubsetStrategy::WorstFor {
                scores: &x.values,
                exponent: problem.p,
            },
        };
        let mask = grid.subset_by_measure(budget, &strategy)?;
        if mask.measure == 0.0 {
            return Err(Error::EmptyMask);
        }
        let full = complete_resource(problem, grid, u, &mask, &params.b_star)?;
        let x_star = solve_trajectory(problem, grid, constants, &full.values, &params.solve)?;
        let distance = grid.lp_norm(&x.values.sub(&x_star.values), problem.p);
        rows.push(DensityRow {
            epsilon,
            delta_star: budget,
            distance,
            full_norm: full.q_norm,
            pass: distance <= epsilon,
        });
    }
    Ok(DensityReport { r0, rows })
}

/// A finite sample of the trajectory set, kept with its generators.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub trajectories: Vec<GridFunction>,
    pub controls: Vec<Control>,
    pub full_resource: bool,
}

/// Sample `n` trajectories from random admissible controls; with
/// `full_resource` every generator sits on the sphere `||u||_q = r`,
/// otherwise target norms are uniform in `[0, r]`.
pub fn sample_trajectories(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    n: usize,
    seed: u64,
    full_resource: bool,
    solve_opts: &SolveOptions,
) -> Result<TrajectorySample> {
    let mut trajectories = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    for i in 0..n {
        let target = if full_resource {
            problem.r
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * i as u64));
            rng.gen_range(0.0..=problem.r)
        };
        let u = random_admissible(problem, grid, derive_seed(seed, 2 * i as u64 + 1), target)?;
        let t = solve_trajectory(problem, grid, constants, &u.values, solve_opts)?;
        trajectories.push(t.values);
        controls.push(u);
    }
    Ok(TrajectorySample {
        trajectories,
        controls,
        full_resource,
    })
}

/// Directed Hausdorff distance `sup_{a in A} inf_{b in B} ||a - b||_p`
/// over the finite samples. Empty `A` gives 0; empty `B` against a
/// nonempty `A` gives infinity.
pub fn directed_hausdorff(
    grid: &Grid,
    p: f64,
    a: &[GridFunction],
    b: &[GridFunction],
) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    let mut sup = 0.0f64;
    for fa in a {
        let mut inf = f64::INFINITY;
        for fb in b {
            inf = inf.min(grid.lp_norm(&fa.sub(fb), p));
        }
        sup = sup.max(inf);
    }
    sup
}

/// Batch robustness harness: deterministic row order (epsilon outer,
/// r0 middle, repeat inner), per-row seeds split from the master seed,
/// and one delta* estimate shared per epsilon.
pub fn sweep(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    epsilon_list: &[f64],
    r0_list: &[f64],
    n_repeats: usize,
    params: &ExperimentParams,
    master_seed: u64,
) -> Result<Vec<RobustnessReport>> {
    for &r0 in r0_list {
        if r0 >= problem.r {
            return Err(Error::InvalidArgument(format!(
                "sweep r0 = {r0} must be below r = {}",
                problem.r
            )));
        }
    }
    let control_free = problem.lambda == 0.0 || problem.r == 0.0;
    let mut rows = Vec::with_capacity(epsilon_list.len() * r0_list.len() * n_repeats);
    let mut row_index: u64 = 0;
    for (ei, &epsilon) in epsilon_list.iter().enumerate() {
        let delta = if control_free {
            None
        } else {
            Some(estimate_delta_star(
                problem,
                grid,
                constants,
                epsilon,
                params.n_samples,
                derive_seed(master_seed, 0x1000 + ei as u64),
                &params.solve,
            )?)
        };
        for &r0 in r0_list {
            for _ in 0..n_repeats {
                let row_seed = derive_seed(master_seed, row_index);
                let u = random_admissible(problem, grid, derive_seed(row_seed, 1), r0)?;
                rows.push(run_robustness(
                    problem,
                    grid,
                    constants,
                    &u,
                    epsilon,
                    params,
                    row_seed,
                    delta.as_ref(),
                )?);
                row_index += 1;
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use crate::problem::KernelFamily;
    use approx::assert_relative_eq;

    fn lambda_zero_problem() -> ProblemSpec {
        ProblemSpec::new(
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
        .unwrap()
    }

    #[test]
    fn lambda_zero_robustness_is_trivially_exact() {
        let problem = lambda_zero_problem();
        let grid = Grid::build(&problem.domain, 50).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let u = random_admissible(&problem, &grid, 4, 0.5).unwrap();
        let report =
            run_robustness(&problem, &grid, &constants, &u, 0.1, &params, 7, None).unwrap();
        assert!(report.trivial);
        assert_eq!(report.distance, 0.0);
        assert!(report.bound_satisfied);
    }

    #[test]
    fn lambda_zero_density_rows_are_zero() {
        let problem = lambda_zero_problem();
        let grid = Grid::build(&problem.domain, 50).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let u = random_admissible(&problem, &grid, 4, 0.5).unwrap();
        let report = run_density(
            &problem,
            &grid,
            &constants,
            &u,
            &[0.2, 0.1, 0.05],
            &params,
            7,
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.distance, 0.0);
            assert!(row.pass);
        }
    }

    #[test]
    fn robustness_report_on_p1() {
        let problem = ProblemSpec::p1_default();
        let grid = Grid::build(&problem.domain, 200).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let u = random_admissible(&problem, &grid, 11, 0.6).unwrap();
        let report =
            run_robustness(&problem, &grid, &constants, &u, 0.2, &params, 31, None).unwrap();
        assert!(!report.trivial);
        assert!(report.delta_used > 0.0);
        assert!(report.original.converged && report.spliced.converged);
        assert!(
            report.bound_satisfied,
            "distance {} above epsilon 0.2",
            report.distance
        );
    }

    #[test]
    fn halving_epsilon_does_not_grow_delta() {
        let problem = ProblemSpec::p1_default();
        let grid = Grid::build(&problem.domain, 200).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let u = random_admissible(&problem, &grid, 11, 0.6).unwrap();
        let wide =
            run_robustness(&problem, &grid, &constants, &u, 0.4, &params, 31, None).unwrap();
        let narrow =
            run_robustness(&problem, &grid, &constants, &u, 0.2, &params, 31, None).unwrap();
        assert!(narrow.delta_used <= wide.delta_used);
    }

    #[test]
    fn density_full_norm_is_exactly_r() {
        let problem = ProblemSpec::p2_default();
        let grid = Grid::build(&problem.domain, 200).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let u = random_admissible(&problem, &grid, 5, 0.5).unwrap();
        let report = run_density(
            &problem,
            &grid,
            &constants,
            &u,
            &[0.2, 0.1],
            &params,
            19,
        )
        .unwrap();
        for row in &report.rows {
            assert_relative_eq!(row.full_norm, problem.r, max_relative = 1e-10);
            assert!(row.pass, "row at eps {} has distance {}", row.epsilon, row.distance);
        }
    }

    #[test]
    fn sample_trajectories_edges() {
        let problem = ProblemSpec::p1_default();
        let grid = Grid::build(&problem.domain, 100).unwrap();
        let constants = problem.compute_constants(&grid);
        let opts = SolveOptions::default();
        let empty =
            sample_trajectories(&problem, &grid, &constants, 0, 1, false, &opts).unwrap();
        assert!(empty.trajectories.is_empty());

        let beta = constants.beta_star.unwrap();
        let sample =
            sample_trajectories(&problem, &grid, &constants, 16, 1, false, &opts).unwrap();
        for t in &sample.trajectories {
            assert!(grid.lp_norm(t, problem.p) <= beta + 1e-6);
        }

        let full = sample_trajectories(&problem, &grid, &constants, 8, 2, true, &opts).unwrap();
        for u in &full.controls {
            assert_relative_eq!(u.q_norm, problem.r, max_relative = 1e-10);
        }
    }

    #[test]
    fn hausdorff_trivial_cases() {
        let problem = ProblemSpec::p1_default();
        let grid = Grid::build(&problem.domain, 40).unwrap();
        let a = GridFunction::sample(&grid, 1, |xi, out| out[0] = xi[0]);
        let b = GridFunction::sample(&grid, 1, |xi, out| out[0] = xi[0] + 1.0);
        let set_a = vec![a.clone()];
        let set_ab = vec![a.clone(), b.clone()];
        assert_eq!(directed_hausdorff(&grid, 2.0, &set_a, &set_a), 0.0);
        // A subset of B: every element matched exactly.
        assert_eq!(directed_hausdorff(&grid, 2.0, &set_a, &set_ab), 0.0);
        // Singletons collapse to the pairwise distance.
        let d = directed_hausdorff(&grid, 2.0, &set_a, &[b.clone()]);
        assert_relative_eq!(d, grid.lp_norm(&a.sub(&b), 2.0), max_relative = 1e-14);
        // Empty-set conventions.
        assert_eq!(directed_hausdorff(&grid, 2.0, &[], &set_a), 0.0);
        assert_eq!(directed_hausdorff(&grid, 2.0, &set_a, &[]), f64::INFINITY);
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let problem = ProblemSpec::p1_default();
        let grid = Grid::build(&problem.domain, 100).unwrap();
        let constants = problem.compute_constants(&grid);
        let params = ExperimentParams::defaults_for(&problem);
        let rows = sweep(
            &problem,
            &grid,
            &constants,
            &[0.5, 0.3],
            &[0.3, 0.6],
            2,
            &params,
            77,
        )
        .unwrap();
        assert_eq!(rows.len(), 8);
        // epsilon outer, r0 middle, repeat inner. r0 is the measured
        // q-norm of the rescaled control, so it matches to roundoff only.
        assert_eq!(rows[0].epsilon, 0.5);
        assert_relative_eq!(rows[0].r0, 0.3, max_relative = 1e-12);
        assert_relative_eq!(rows[2].r0, 0.6, max_relative = 1e-12);
        assert_eq!(rows[4].epsilon, 0.3);
        let again = sweep(
            &problem,
            &grid,
            &constants,
            &[0.5, 0.3],
            &[0.3, 0.6],
            2,
            &params,
            77,
        )
        .unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.distance.to_bits(), b.distance.to_bits());
            assert_eq!(a.delta_used.to_bits(), b.delta_used.to_bits());
        }
        let empty = sweep(&problem, &grid, &constants, &[], &[0.3], 2, &params, 77).unwrap();
        assert!(empty.is_empty());
    }
}

//! Picard iteration for the discretized state equation.
//!
//! Under the small-gain condition the Picard map contracts in `L_p` with
//! factor at most `L*^(1/p)`, which gives both a convergence guarantee
//! and an a-posteriori distance-to-fixed-point bound used for stopping.

use serde::Serialize;

use crate::grid::{Grid, GridFunction};
use crate::problem::{Constants, DiscreteRhs, ProblemSpec};
use crate::{Error, Result};

/// Admissibility slack on `||u||_q <= r`.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Permit solving when `L* >= 1`; the contraction guarantee is gone
    /// and the iteration may diverge, so this is off by default.
    pub allow_unproven: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 10_000,
            allow_unproven: false,
        }
    }
}

/// A solved (or abandoned) trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub values: GridFunction,
    pub iterations: usize,
    /// `||Phi(x) - x||_p` at the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// `||x_{k+1} - x_k||_p` per Picard step, for contraction diagnostics.
    pub step_norms: Vec<f64>,
}

/// Solve the trajectory generated by the admissible control `u`,
/// starting the iteration from the zero function.
pub fn solve_trajectory(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    u: &GridFunction,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    let x0 = GridFunction::zeros(grid, problem.state_dim());
    solve_from(problem, grid, constants, u, &x0, opts)
}

/// Same as [`solve_trajectory`] with an explicit initial iterate. Under
/// contraction the fixed point does not depend on it.
pub fn solve_from(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    u: &GridFunction,
    initial: &GridFunction,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    if !constants.condition_2d_satisfied && !opts.allow_unproven {
        return Err(Error::SmallGainViolated {
            l_star: constants.l_star,
        });
    }
    let q_norm = grid.lp_norm(u, problem.q);
    if q_norm > problem.r + ADMISSIBILITY_TOL {
        return Err(Error::InadmissibleControl {
            q_norm,
            r: problem.r,
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }

    let op = DiscreteRhs::new(problem, grid);
    let theta = constants.l_star.powf(1.0 / problem.p);
    // Step threshold from the a-posteriori contraction bound:
    // ||x_k - x_fix||_p <= step * theta / (1 - theta), so stopping at
    // step <= tol (1 - theta) / theta leaves the iterate within tol of
    // the fixed point and its residual within tol (1 - theta).
    let step_threshold = if theta <= 0.0 {
        f64::INFINITY
    } else if theta < 1.0 {
        opts.tol * (1.0 - theta) / theta
    } else {
        opts.tol
    };

    let mut x = initial.clone();
    let mut step_norms = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = op.apply(&x, u);
        let step = grid.lp_norm(&next.sub(&x), problem.p);
        step_norms.push(step);
        x = next;
        iterations += 1;
        if step <= step_threshold || step <= opts.tol {
            break;
        }
    }
    let residual = grid.lp_norm(&op.apply(&x, u).sub(&x), problem.p);
    let converged = residual <= opts.tol;
    Ok(Trajectory {
        values: x,
        iterations,
        residual,
        converged,
        step_norms,
    })
}

/// A-posteriori residual `||Phi(x) - x||_p` of an arbitrary candidate.
pub fn residual_norm(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &GridFunction,
    x: &GridFunction,
) -> Result<f64> {
    let rhs = problem.evaluate_rhs(grid, x, u)?;
    Ok(grid.lp_norm(&rhs.sub(x), problem.p))
}

/// Largest observed Picard step ratio `||d_{k+1}|| / ||d_k||`. Steps with
/// denominators below 1e-14 are skipped; fewer than 3 recorded steps
/// yield 0.
pub fn observed_contraction(trajectory: &Trajectory) -> f64 {
    if trajectory.step_norms.len() < 3 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for w in trajectory.step_norms.windows(2) {
        if w[0] >= 1e-14 {
            worst = worst.max(w[1] / w[0]);
        }
    }
    worst
}

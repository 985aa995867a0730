//! Run configuration: a single JSON document describing the problem
//! instance, grid resolution, solver knobs and experiment schedule.
//! Unknown keys are rejected everywhere so typos fail loudly.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::experiments::{ExperimentParams, MaskStrategy};
use crate::grid::{DomainSpec, Grid};
use crate::problem::{KernelFamily, ProblemSpec};
use crate::solver::SolveOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    /// Built-in kernel family id: "P1", "P2" or "P3".
    pub family: String,
    /// Per-family coefficients; missing entries take the family default,
    /// unknown names are rejected.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub q: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Per-axis `[lower, upper]` bounds; defaults to the unit interval
    /// or square depending on the family.
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
    /// Optional `[state_dim, control_dim]` cross-check against the family.
    #[serde(default)]
    pub dims: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "default_cells")]
    pub cells_per_axis: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            cells_per_axis: default_cells(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub allow_unproven: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            tol: default_tol(),
            max_iter: default_max_iter(),
            allow_unproven: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_r0_list")]
    pub r0_list: Vec<f64>,
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mask_strategy")]
    pub mask_strategy: MaskStrategy,
    /// Unit direction for resource completion; defaults to the first
    /// coordinate vector.
    #[serde(default)]
    pub b_star: Option<Vec<f64>>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            epsilons: default_epsilons(),
            r0_list: default_r0_list(),
            n_repeats: default_n_repeats(),
            n_samples: default_n_samples(),
            seed: default_seed(),
            mask_strategy: default_mask_strategy(),
            b_star: None,
        }
    }
}

fn default_lambda() -> f64 {
    0.5
}
fn default_r() -> f64 {
    1.0
}
fn default_cells() -> usize {
    400
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1]
}
fn default_r0_list() -> Vec<f64> {
    vec![0.3, 0.6]
}
fn default_n_repeats() -> usize {
    5
}
fn default_n_samples() -> usize {
    8
}
fn default_seed() -> u64 {
    42
}
fn default_mask_strategy() -> MaskStrategy {
    MaskStrategy::WorstFor
}

impl RunConfig {
    /// Parse a config document, reporting the JSON line/column on failure.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    }

    /// Materialize the validated problem instance.
    pub fn build_problem(&self) -> Result<ProblemSpec> {
        let family = build_family(&self.problem.family, &self.problem.params)?;
        let domain = match &self.problem.domain {
            Some(bounds) => match bounds.len() {
                1 => DomainSpec::interval(bounds[0][0], bounds[0][1]),
                2 => DomainSpec::rectangle(bounds[0], bounds[1]),
                k => {
                    return Err(Error::Config(format!(
                        "domain must have 1 or 2 axes, got {k}"
                    )))
                }
            },
            None => match family.domain_dim() {
                1 => DomainSpec::unit_interval(),
                _ => DomainSpec::unit_square(),
            },
        };
        if let Some([n, m]) = self.problem.dims {
            if n != family.state_dim() || m != family.control_dim() {
                return Err(Error::Config(format!(
                    "dims [{n}, {m}] do not match family {}: expected [{}, {}]",
                    family.id(),
                    family.state_dim(),
                    family.control_dim()
                )));
            }
        }
        ProblemSpec::new(
            domain,
            family,
            self.problem.lambda,
            self.problem.q,
            self.problem.r,
        )
    }

    pub fn build_grid(&self, problem: &ProblemSpec) -> Result<Grid> {
        Grid::build(&problem.domain, self.grid.cells_per_axis)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            allow_unproven: self.solver.allow_unproven,
        }
    }

    pub fn experiment_params(&self, problem: &ProblemSpec) -> Result<ExperimentParams> {
        let mut params = ExperimentParams::defaults_for(problem);
        params.n_samples = self.experiment.n_samples;
        params.mask_strategy = self.experiment.mask_strategy;
        params.solve = self.solve_options();
        if let Some(b) = &self.experiment.b_star {
            if b.len() != problem.control_dim() {
                return Err(Error::Config(format!(
                    "b_star has {} components, control dimension is {}",
                    b.len(),
                    problem.control_dim()
                )));
            }
            params.b_star = b.clone();
        }
        Ok(params)
    }
}

fn build_family(id: &str, params: &BTreeMap<String, f64>) -> Result<KernelFamily> {
    let allowed: &[&str] = match id {
        "P1" | "P3" => &["a", "c1", "c2", "d"],
        "P2" => &["a", "b0", "c2"],
        other => {
            return Err(Error::Config(format!(
                "unknown kernel family {other:?}; expected \"P1\", \"P2\" or \"P3\""
            )))
        }
    };
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown parameter {key:?} for family {id}; allowed: {allowed:?}"
            )));
        }
    }
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    Ok(match id {
        "P1" => KernelFamily::ScalarSmooth {
            a: get("a", 0.2),
            c1: get("c1", 0.3),
            c2: get("c2", 0.5),
            d: get("d", 0.4),
        },
        "P2" => KernelFamily::LinearExact {
            a: get("a", 0.2),
            b0: get("b0", 0.3),
            c2: get("c2", 0.5),
        },
        _ => KernelFamily::Planar {
            a: get("a", 0.2),
            c1: get("c1", 0.3),
            c2: get("c2", 0.5),
            d: get("d", 0.4),
        },
    })
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use urysohn_lab::config::RunConfig;
use urysohn_lab::controls::{random_admissible, Control};
use urysohn_lab::experiments::{run_density, sweep, RobustnessReport};
use urysohn_lab::grid::{Grid, GridFunction};
use urysohn_lab::problem::{check_small_gain, Constants, ProblemSpec};
use urysohn_lab::solver::solve_trajectory;
use urysohn_lab::{Error, Result};

/// Trajectory and control-robustness experiments for Urysohn-type
/// integral equations with resource-constrained controls.
#[derive(Parser)]
#[command(name = "urysohn-lab", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the constant bundle and verify the small-gain condition.
    Check { config: PathBuf },
    /// Solve one trajectory for a seeded or file-provided control.
    Solve {
        config: PathBuf,
        /// Control file; mutually exclusive with --target-norm.
        #[arg(long, conflicts_with = "target_norm")]
        control: Option<PathBuf>,
        /// q-norm for a random control (defaults to r).
        #[arg(long)]
        target_norm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One control-surgery run per (epsilon, r0) pair.
    Robustness {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Resource-completion rows over the decreasing epsilon schedule.
    Density {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full epsilon x r0 x repeat batch of control-surgery runs.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Exit-code contract: 0 all-pass, 1 row failures, 2 precondition or
/// theory violation, 3 solver non-convergence, 4 grid resolution
/// insufficient for the requested tolerance, 64 config error.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 64,
        Error::GridTooCoarse { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}

fn dispatch(command: &Command) -> Result<u8> {
    match command {
        Command::Check { config } => cmd_check(config),
        Command::Solve {
            config,
            control,
            target_norm,
            out,
            seed,
        } => cmd_solve(config, control.as_deref(), *target_norm, out.as_deref(), *seed),
        Command::Robustness { config, out, seed } => {
            cmd_batch(config, out.as_deref(), *seed, BatchKind::Robustness)
        }
        Command::Density { config, out, seed } => {
            cmd_density(config, out.as_deref(), *seed)
        }
        Command::Sweep { config, out, seed } => {
            cmd_batch(config, out.as_deref(), *seed, BatchKind::Sweep)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

/// Failures while interpreting the config document count as config
/// errors; theory violations are only reported once the instance exists.
fn build_instance(cfg: &RunConfig) -> Result<(ProblemSpec, Grid)> {
    let problem = cfg
        .build_problem()
        .map_err(|e| Error::Config(e.to_string()))?;
    let grid = cfg
        .build_grid(&problem)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok((problem, grid))
}

fn cmd_check(config: &Path) -> Result<u8> {
    let cfg = load_config(config)?;
    let (problem, grid) = build_instance(&cfg)?;
    let constants = problem.compute_constants(&grid);
    println!("{}", constants_json(&constants));
    Ok(if check_small_gain(&constants).satisfied {
        0
    } else {
        2
    })
}

fn constants_json(constants: &Constants) -> String {
    serde_json::to_string_pretty(constants).expect("constants serialize")
}

/// Per-node control values pinned to the grid they were sampled on.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlFile {
    cells_per_axis: usize,
    bounds: Vec<[f64; 2]>,
    /// One R^m vector per node, in grid order.
    values: Vec<Vec<f64>>,
}

fn load_control(path: &Path, problem: &ProblemSpec, grid: &Grid) -> Result<Control> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ControlFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("control file {}: {e}", path.display())))?;
    if file.cells_per_axis != grid.cells_per_axis || file.bounds != grid.domain.bounds {
        return Err(Error::Config(format!(
            "control file grid fingerprint ({} cells on {:?}) does not match \
             the configured grid ({} cells on {:?})",
            file.cells_per_axis, file.bounds, grid.cells_per_axis, grid.domain.bounds
        )));
    }
    let m = problem.control_dim();
    let mut flat = Vec::with_capacity(grid.len() * m);
    for (i, v) in file.values.iter().enumerate() {
        if v.len() != m {
            return Err(Error::Config(format!(
                "control file node {i} has {} components, expected {m}",
                v.len()
            )));
        }
        flat.extend_from_slice(v);
    }
    let values = GridFunction::from_values(grid, m, flat)?;
    let control = Control::new(problem, grid, values)?;
    if !control.is_admissible(problem.r) {
        return Err(Error::InadmissibleControl {
            q_norm: control.q_norm,
            r: problem.r,
        });
    }
    Ok(control)
}

fn cmd_solve(
    config: &Path,
    control_path: Option<&Path>,
    target_norm: Option<f64>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<u8> {
    let cfg = load_config(config)?;
    let (problem, grid) = build_instance(&cfg)?;
    let constants = problem.compute_constants(&grid);
    let control = match control_path {
        Some(path) => load_control(path, &problem, &grid)?,
        None => random_admissible(
            &problem,
            &grid,
            seed.unwrap_or(cfg.experiment.seed),
            target_norm.unwrap_or(problem.r),
        )?,
    };
    let opts = cfg.solve_options();
    let trajectory = solve_trajectory(&problem, &grid, &constants, &control.values, &opts)?;
    let doc = json!({
        "nodes": grid.nodes,
        "values": (0..grid.len())
            .map(|i| trajectory.values.node(i).to_vec())
            .collect::<Vec<_>>(),
        "iterations": trajectory.iterations,
        "residual": trajectory.residual,
        "p_norm": grid.lp_norm(&trajectory.values, problem.p),
        "beta_star": constants.beta_star,
    });
    let text = serde_json::to_string_pretty(&doc).expect("trajectory serialize");
    if let Some(dir) = out {
        write_out(dir, "solution.json", &text)?;
    }
    println!("{text}");
    Ok(if trajectory.converged { 0 } else { 3 })
}

enum BatchKind {
    Robustness,
    Sweep,
}

fn cmd_batch(config: &Path, out: Option<&Path>, seed: Option<u64>, kind: BatchKind) -> Result<u8> {
    let cfg = load_config(config)?;
    let (problem, grid) = build_instance(&cfg)?;
    let constants = problem.compute_constants(&grid);
    if !check_small_gain(&constants).satisfied {
        return Err(Error::SmallGainViolated {
            l_star: constants.l_star,
        });
    }
    let params = cfg.experiment_params(&problem)?;
    let n_repeats = match kind {
        BatchKind::Robustness => 1,
        BatchKind::Sweep => cfg.experiment.n_repeats,
    };
    let rows = sweep(
        &problem,
        &grid,
        &constants,
        &cfg.experiment.epsilons,
        &cfg.experiment.r0_list,
        n_repeats,
        &params,
        seed.unwrap_or(cfg.experiment.seed),
    )?;
    let csv = robustness_csv(&rows);
    if let Some(dir) = out {
        write_out(dir, "report.csv", &csv)?;
        let report = serde_json::to_string_pretty(&json!({
            "constants": &constants,
            "rows": &rows,
        }))
        .expect("report serialize");
        write_out(dir, "report.json", &report)?;
    }
    print!("{csv}");
    if rows
        .iter()
        .any(|r| !r.original.converged || !r.spliced.converged)
    {
        return Ok(3);
    }
    Ok(if rows.iter().all(|r| r.bound_satisfied) {
        0
    } else {
        1
    })
}

fn cmd_density(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<u8> {
    let cfg = load_config(config)?;
    let (problem, grid) = build_instance(&cfg)?;
    let constants = problem.compute_constants(&grid);
    if !check_small_gain(&constants).satisfied {
        return Err(Error::SmallGainViolated {
            l_star: constants.l_star,
        });
    }
    let params = cfg.experiment_params(&problem)?;
    let master = seed.unwrap_or(cfg.experiment.seed);
    let mut schedule = cfg.experiment.epsilons.clone();
    schedule.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilons"));
    let mut reports = Vec::new();
    let mut csv = String::from("epsilon,r0,delta_used,distance,pass\n");
    for (k, &r0) in cfg.experiment.r0_list.iter().enumerate() {
        let u = random_admissible(
            &problem,
            &grid,
            urysohn_lab::controls::derive_seed(master, 0x5000 + k as u64),
            r0,
        )?;
        let report = run_density(
            &problem, &grid, &constants, &u, &schedule, &params, master,
        )?;
        for row in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.epsilon, report.r0, row.delta_star, row.distance, row.pass
            ));
        }
        reports.push(report);
    }
    if let Some(dir) = out {
        write_out(dir, "report.csv", &csv)?;
        let report = serde_json::to_string_pretty(&json!({
            "constants": &constants,
            "reports": &reports,
        }))
        .expect("report serialize");
        write_out(dir, "report.json", &report)?;
    }
    print!("{csv}");
    Ok(if reports.iter().all(|r| r.rows.iter().all(|row| row.pass)) {
        0
    } else {
        1
    })
}

/// Fixed column order; floats use shortest round-trip formatting so
/// identical runs produce byte-identical files.
fn robustness_csv(rows: &[RobustnessReport]) -> String {
    let mut csv = String::from("epsilon,r0,delta_used,distance,pass\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epsilon, row.r0, row.delta_used, row.distance, row.bound_satisfied
        ));
    }
    csv
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

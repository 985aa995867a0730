//! Numerical laboratory for control systems governed by Urysohn-type
//! integral equations with integrally bounded controls.
//!
//! The state equation is
//!
//! ```text
//! x(xi) = f(xi, x(xi)) + lambda * Int_Omega [K1(xi,s,x(s)) + K2(xi,s,x(s)) u(s)] ds
//! ```
//!
//! with controls drawn from the closed ball of radius `r` in `L_q`. The
//! crate discretizes the domain with a composite midpoint rule, solves
//! trajectories by Picard iteration under a small-gain condition, and runs
//! the control-surgery experiments: splicing the control on a
//! small-measure subset while spending the full remaining resource, and
//! completing arbitrary controls to full resource.

pub mod config;
pub mod controls;
pub mod experiments;
pub mod grid;
pub mod problem;
pub mod solver;

pub use grid::{DomainKind, DomainSpec, Grid, GridFunction, SubsetMask, SubsetStrategy};
pub use problem::{Constants, KernelFamily, ProblemSpec, SmallGain};
pub use solver::{SolveOptions, Trajectory};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inadmissible control: ||u||_q = {q_norm} exceeds r = {r}")]
    InadmissibleControl { q_norm: f64, r: f64 },

    #[error("small-gain condition violated: L* = {l_star} >= 1")]
    SmallGainViolated { l_star: f64 },

    #[error(
        "grid too coarse: smallest cell weight {cell_weight:e} exceeds the \
         admissible overshoot of the subset-measure cap {cap:e}"
    )]
    GridTooCoarse { cell_weight: f64, cap: f64 },

    #[error("empty subset: the mask has measure zero")]
    EmptyMask,

    #[error("cannot complete resource: off-mask norm r1 = {r1} exceeds r = {r}")]
    CompletionImpossible { r1: f64, r: f64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Admissible controls and the control surgery they undergo: random
//! elements of the `L_q` ball, splicing on a small-measure subset,
//! full-resource completion, the continuous kernel surrogate at zero
//! state, and the empirical estimator for the robustness measure bound
//! `delta*(epsilon)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grid::{euclid, Grid, GridFunction, SubsetMask, SubsetStrategy};
use crate::problem::{Constants, ProblemSpec};
use crate::solver::{solve_trajectory, SolveOptions};
use crate::{Error, Result};

/// Relative tolerance on exact-norm postconditions (`||u*||_q = r`).
pub const NORM_TOL: f64 = 1e-10;

/// A control with its cached `L_q` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub values: GridFunction,
    pub q_norm: f64,
}

impl Control {
    pub fn new(problem: &ProblemSpec, grid: &Grid, values: GridFunction) -> Result<Self> {
        if values.dim != problem.control_dim() || values.values.len() != grid.len() * values.dim {
            return Err(Error::DimensionMismatch(format!(
                "control dim {} over {} values does not fit {} nodes x dim {}",
                values.dim,
                values.values.len(),
                grid.len(),
                problem.control_dim()
            )));
        }
        let q_norm = grid.lp_norm(&values, problem.q);
        Ok(Control { values, q_norm })
    }

    pub fn is_admissible(&self, r: f64) -> bool {
        self.q_norm <= r + crate::solver::ADMISSIBILITY_TOL
    }
}

/// Deterministic per-index seed split (SplitMix64 finalizer). Used
/// everywhere a master seed fans out into independent streams.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw node values i.i.d. uniform on `[-1, 1]^m`, then rescale so the
/// `L_q` norm hits `target_norm` exactly (within rounding).
pub fn random_admissible(
    problem: &ProblemSpec,
    grid: &Grid,
    seed: u64,
    target_norm: f64,
) -> Result<Control> {
    if !(target_norm >= 0.0) || target_norm > problem.r {
        return Err(Error::InvalidArgument(format!(
            "target norm {target_norm} must lie in [0, r = {}]",
            problem.r
        )));
    }
    let m = problem.control_dim();
    if target_norm == 0.0 {
        return Control::new(problem, grid, GridFunction::zeros(grid, m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = GridFunction::sample(grid, m, |_, out| {
        for o in out.iter_mut() {
            *o = rng.gen_range(-1.0..1.0);
        }
    });
    let norm = grid.lp_norm(&raw, problem.q);
    if norm <= f64::MIN_POSITIVE {
        return Err(Error::InvalidArgument(
            "degenerate random draw with zero norm".into(),
        ));
    }
    Control::new(problem, grid, raw.scaled(target_norm / norm))
}

/// Node-wise splice: the original control off the mask, `inner` on it.
pub fn splice_control(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &Control,
    mask: &SubsetMask,
    inner: &GridFunction,
) -> Result<Control> {
    if inner.dim != u.values.dim || inner.values.len() != u.values.values.len() {
        return Err(Error::DimensionMismatch(
            "spliced-in control must live on the same grid and dim".into(),
        ));
    }
    let mut out = u.values.clone();
    for i in 0..grid.len() {
        if mask.included[i] {
            let src = inner.node(i).to_vec();
            out.node_mut(i).copy_from_slice(&src);
        }
    }
    Control::new(problem, grid, out)
}

/// Complete `u` to full resource: keep it off the mask and place the
/// constant direction `b_star` on the mask with amplitude
/// `[(r^q - r1^q) / mu(mask)]^(1/q)`, where `r1^q` is the off-mask
/// `q`-mass. The result has `||u*||_q = r` up to rounding.
///
/// The exponent is `q` throughout: the completion lives in `L_q` and the
/// postcondition is a `q`-norm identity.
pub fn complete_resource(
    problem: &ProblemSpec,
    grid: &Grid,
    u: &Control,
    mask: &SubsetMask,
    b_star: &[f64],
) -> Result<Control> {
    let m = problem.control_dim();
    if b_star.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "direction has dim {}, control dim is {m}",
            b_star.len()
        )));
    }
    if (euclid(b_star) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, got norm {}",
            euclid(b_star)
        )));
    }
    if mask.measure <= 0.0 {
        return Err(Error::EmptyMask);
    }
    let q = problem.q;
    let mut r1_pow = 0.0;
    for i in 0..grid.len() {
        if !mask.included[i] {
            let n = euclid(u.values.node(i));
            if n > 0.0 {
                r1_pow += grid.weights[i] * n.powf(q);
            }
        }
    }
    let r_pow = problem.r.powf(q);
    if r1_pow > r_pow * (1.0 + 1e-12) {
        return Err(Error::CompletionImpossible {
            r1: r1_pow.powf(1.0 / q),
            r: problem.r,
        });
    }
    let amplitude = ((r_pow - r1_pow).max(0.0) / mask.measure).powf(1.0 / q);
    let mut out = u.values.clone();
    for i in 0..grid.len() {
        if mask.included[i] {
            for (o, b) in out.node_mut(i).iter_mut().zip(b_star) {
                *o = amplitude * b;
            }
        }
    }
    Control::new(problem, grid, out)
}

/// The kernel at zero state and its continuous surrogate. Built-in
/// families have `K2(.,.,0)` continuous, so the surrogate is the kernel
/// itself and the approximation error vanishes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateKernel {
    /// `max ||g_eps(xi, s)||` over node pairs.
    pub m_eps: f64,
    /// `L_p` distance between kernel and surrogate over Omega x Omega.
    pub achieved_error: f64,
}

pub fn continuous_surrogate(
    problem: &ProblemSpec,
    grid: &Grid,
    epsilon: f64,
    c_star: f64,
) -> Result<SurrogateKernel> {
    if !problem.family.continuous_k2_at_zero() {
        return Err(Error::InvalidArgument(
            "surrogate construction requires K2(.,.,0) continuous".into(),
        ));
    }
    let n = problem.state_dim();
    let m = problem.control_dim();
    let zero = vec![0.0; n];
    let mut buf = vec![0.0; n * m];
    let mut m_eps = 0.0f64;
    for xi in &grid.nodes {
        for s in &grid.nodes {
            problem.family.k2(xi, s, &zero, &mut buf);
            m_eps = m_eps.max(euclid(&buf));
        }
    }
    let achieved_error = 0.0f64;
    if c_star > 0.0 && epsilon > 0.0 {
        let budget = epsilon.powf(problem.p) / (3.0 * c_star.powf(problem.p));
        debug_assert!(achieved_error.powf(problem.p) <= budget);
    }
    Ok(SurrogateKernel {
        m_eps,
        achieved_error,
    })
}

/// Measure cap of the robustness bound: `eps^p / (3 M^p c*^p mu)`.
pub fn delta_cap(epsilon: f64, p: f64, m_eps: f64, c_star: f64, mu: f64) -> f64 {
    if m_eps <= 0.0 || c_star <= 0.0 {
        return f64::INFINITY;
    }
    epsilon.powf(p) / (3.0 * m_eps.powf(p) * c_star.powf(p) * mu)
}

/// Trajectory-mass threshold: `eps^p / (3 kappa2^p c*^p mu)`.
pub fn delta_threshold(epsilon: f64, p: f64, kappa2: f64, c_star: f64, mu: f64) -> f64 {
    if kappa2 <= 0.0 || c_star <= 0.0 {
        return f64::INFINITY;
    }
    epsilon.powf(p) / (3.0 * kappa2.powf(p) * c_star.powf(p) * mu)
}

/// Outcome of the `delta*` estimation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeltaStar {
    /// `lambda r = 0`: the control does not influence the trajectory and
    /// the robustness statement is vacuous.
    Unconstrained,
    Estimate(DeltaStarEstimate),
}

impl DeltaStar {
    /// The measure budget to use for masks; the whole domain when
    /// unconstrained.
    pub fn budget(&self, grid: &Grid) -> f64 {
        match self {
            DeltaStar::Unconstrained => grid.total_measure,
            DeltaStar::Estimate(e) => e.delta_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaStarEstimate {
    pub epsilon: f64,
    /// Theoretical open-interval cap on delta*.
    pub cap: f64,
    /// Trajectory-mass threshold theta (`None` when kappa2 = 0, where
    /// only the cap binds).
    pub threshold_theta: Option<f64>,
    /// Largest measure for which every sampled trajectory kept its
    /// worst-case subset mass within 0.9 theta.
    pub empirical_delta: f64,
    pub n_samples: usize,
    pub delta_star: f64,
    /// True when the theoretical value fell below one grid cell and was
    /// raised to the finest representable subset measure.
    pub floored: bool,
}

/// Empirical estimator for `delta*(epsilon)`.
///
/// Samples trajectories from random admissible controls and bisects the
/// largest measure `delta` such that the worst-case subset (greedy by
/// `w_i ||x_i||^p`) of every sample stays below `0.9 theta`; the result
/// is additionally capped at `0.99` of the theoretical interval bound.
///
/// Discretization floor: subsets are unions of whole cells, so no
/// nonempty subset has measure below one cell weight. When the
/// theoretical value is smaller than that, `delta_star` is raised to one
/// cell weight, provided the overshoot of the cap stays within the
/// conservatism budget `3 * 6^(p-1) - 2` built into the splitting
/// constant of the robustness bound; a coarser grid is refused.
pub fn estimate_delta_star(
    problem: &ProblemSpec,
    grid: &Grid,
    constants: &Constants,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
    solve_opts: &SolveOptions,
) -> Result<DeltaStar> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if problem.lambda == 0.0 || problem.r == 0.0 {
        return Ok(DeltaStar::Unconstrained);
    }
    let c_star = match constants.c_star {
        Some(c) => c,
        None => {
            return Err(Error::SmallGainViolated {
                l_star: constants.l_star,
            })
        }
    };
    if c_star == 0.0 {
        return Ok(DeltaStar::Unconstrained);
    }
    let p = problem.p;
    let mu = grid.total_measure;
    let surrogate = continuous_surrogate(problem, grid, epsilon, c_star)?;
    let cap = delta_cap(epsilon, p, surrogate.m_eps, c_star, mu);
    let theta = delta_threshold(epsilon, p, constants.kappa2, c_star, mu);

    // Sampled trajectories whose p-mass must stay uniformly small.
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut norm_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * i as u64));
        let target = norm_rng.gen_range(0.0..=problem.r);
        let u = random_admissible(problem, grid, derive_seed(seed, 2 * i as u64 + 1), target)?;
        let t = solve_trajectory(problem, grid, constants, &u.values, solve_opts)?;
        samples.push(t.values);
    }

    let mass_ok = |delta: f64| -> Result<bool> {
        if !theta.is_finite() {
            return Ok(true);
        }
        for x in &samples {
            let mask = grid.subset_by_measure(
                delta,
                &SubsetStrategy::WorstFor {
                    scores: x,
                    exponent: p,
                },
            )?;
            let mut mass = 0.0;
            for i in 0..grid.len() {
                if mask.included[i] {
                    mass += grid.weights[i] * euclid(x.node(i)).powf(p);
                }
            }
            if mass > 0.9 * theta {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let hi = cap.min(mu);
    let empirical_delta = if mass_ok(hi)? {
        hi
    } else {
        let mut lo = 0.0;
        let mut hi = hi;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mass_ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let theoretical = (0.99 * cap).min(empirical_delta);
    let w_min = grid.min_weight();
    let (delta_star, floored) = if theoretical >= w_min {
        (theoretical, false)
    } else {
        let overshoot_budget = 3.0 * 6.0f64.powf(p - 1.0) - 2.0;
        if w_min <= overshoot_budget * cap {
            (w_min, true)
        } else {
            return Err(Error::GridTooCoarse {
                cell_weight: w_min,
                cap,
            });
        }
    };

    Ok(DeltaStar::Estimate(DeltaStarEstimate {
        epsilon,
        cap,
        threshold_theta: theta.is_finite().then_some(theta),
        empirical_delta,
        n_samples,
        delta_star,
        floored,
    }))
}

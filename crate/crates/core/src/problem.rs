//! Problem instances: the built-in kernel families with their Lipschitz
//! data, the discretized right-hand side of the state equation, and the
//! constant bundle behind the small-gain condition.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grid::{euclid, DomainSpec, Grid, GridFunction};
use crate::{Error, Result};

/// Built-in kernel families. Each carries closed-form evaluators for
/// `f`, `K1`, `K2` together with analytically correct Lipschitz
/// majorants `gamma0`, `gamma1`, `gamma2`; the contraction and
/// robustness bounds require the majorants to be exact, so families form
/// a closed registry rather than a user-extensible one.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// P1 "scalar-smooth" on `[0,1]`, n = m = 1:
    /// `f = a tanh(x) + sin(pi xi)`, `K1 = c1 e^{-xi s} sin(x)`,
    /// `K2 = c2 cos(xi + s) (1 + d sin(x))`.
    ScalarSmooth { a: f64, c1: f64, c2: f64, d: f64 },
    /// P2 "linear-exact", n = m = 1: `f = a x + sin(pi xi)`,
    /// `K1 = b0 e^{-xi s} x`, `K2 = c2 cos(xi + s)` (constant in x).
    /// Admits a dense-linear-system oracle.
    LinearExact { a: f64, b0: f64, c2: f64 },
    /// P3 "planar" on `[0,1]^2`, n = 2, m = 1: componentwise tanh/cos
    /// construction mirroring P1.
    Planar { a: f64, c1: f64, c2: f64, d: f64 },
}

impl KernelFamily {
    pub fn id(&self) -> &'static str {
        match self {
            KernelFamily::ScalarSmooth { .. } => "P1",
            KernelFamily::LinearExact { .. } => "P2",
            KernelFamily::Planar { .. } => "P3",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            KernelFamily::Planar { .. } => 2,
            _ => 1,
        }
    }

    pub fn control_dim(&self) -> usize {
        1
    }

    pub fn domain_dim(&self) -> usize {
        match self {
            KernelFamily::Planar { .. } => 2,
            _ => 1,
        }
    }

    /// All built-in families have `K2(.,.,0)` continuous, so the
    /// continuous surrogate of the kernel at zero is the kernel itself.
    pub fn continuous_k2_at_zero(&self) -> bool {
        true
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            KernelFamily::ScalarSmooth { a, c1, c2, d }
            | KernelFamily::Planar { a, c1, c2, d } => {
                [*a, *c1, *c2, *d].iter().all(|v| v.is_finite() && *v >= 0.0)
            }
            KernelFamily::LinearExact { a, b0, c2 } => {
                [*a, *b0, *c2].iter().all(|v| v.is_finite() && *v >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "kernel family {} requires finite nonnegative parameters",
                self.id()
            )))
        }
    }

    pub fn f(&self, xi: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            KernelFamily::ScalarSmooth { a, .. } => {
                out[0] = a * x[0].tanh() + (std::f64::consts::PI * xi[0]).sin();
            }
            KernelFamily::LinearExact { a, .. } => {
                out[0] = a * x[0] + (std::f64::consts::PI * xi[0]).sin();
            }
            KernelFamily::Planar { a, .. } => {
                out[0] = a * x[0].tanh() + (std::f64::consts::PI * xi[0]).sin();
                out[1] = a * x[1].tanh() + (std::f64::consts::PI * xi[1]).sin();
            }
        }
    }

    pub fn k1(&self, xi: &[f64], s: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            KernelFamily::ScalarSmooth { c1, .. } => {
                out[0] = c1 * (-xi[0] * s[0]).exp() * x[0].sin();
            }
            KernelFamily::LinearExact { b0, .. } => {
                out[0] = b0 * (-xi[0] * s[0]).exp() * x[0];
            }
            KernelFamily::Planar { c1, .. } => {
                let e = c1 * (-(xi[0] * s[0] + xi[1] * s[1])).exp();
                out[0] = e * x[0].sin();
                out[1] = e * x[1].sin();
            }
        }
    }

    /// `K2` as an n x m matrix, row-major.
    pub fn k2(&self, xi: &[f64], s: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            KernelFamily::ScalarSmooth { c2, d, .. } => {
                out[0] = c2 * (xi[0] + s[0]).cos() * (1.0 + d * x[0].sin());
            }
            KernelFamily::LinearExact { c2, .. } => {
                out[0] = c2 * (xi[0] + s[0]).cos();
            }
            KernelFamily::Planar { c2, d, .. } => {
                out[0] = c2 * (xi[0] + s[0]).cos() * (1.0 + d * x[0].sin());
                out[1] = c2 * (xi[1] + s[1]).cos() * (1.0 + d * x[1].sin());
            }
        }
    }

    pub fn gamma0(&self, _xi: &[f64]) -> f64 {
        match self {
            KernelFamily::ScalarSmooth { a, .. }
            | KernelFamily::LinearExact { a, .. }
            | KernelFamily::Planar { a, .. } => *a,
        }
    }

    pub fn gamma1(&self, xi: &[f64], s: &[f64]) -> f64 {
        match self {
            KernelFamily::ScalarSmooth { c1, .. } => c1 * (-xi[0] * s[0]).exp(),
            KernelFamily::LinearExact { b0, .. } => b0 * (-xi[0] * s[0]).exp(),
            KernelFamily::Planar { c1, .. } => c1 * (-(xi[0] * s[0] + xi[1] * s[1])).exp(),
        }
    }

    pub fn gamma2(&self, _xi: &[f64], _s: &[f64]) -> f64 {
        match self {
            KernelFamily::ScalarSmooth { c2, d, .. } | KernelFamily::Planar { c2, d, .. } => {
                c2 * d
            }
            KernelFamily::LinearExact { .. } => 0.0,
        }
    }
}

/// A concrete problem instance: domain, kernel family and the exponents
/// and resource bound of the admissible-control ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub family: KernelFamily,
    pub lambda: f64,
    pub q: f64,
    /// Conjugate exponent, `1/p + 1/q = 1`.
    pub p: f64,
    pub r: f64,
}

impl ProblemSpec {
    pub fn new(
        domain: DomainSpec,
        family: KernelFamily,
        lambda: f64,
        q: f64,
        r: f64,
    ) -> Result<Self> {
        domain.validate()?;
        family.validate()?;
        if domain.dim() != family.domain_dim() {
            return Err(Error::DimensionMismatch(format!(
                "family {} lives on a {}-dimensional domain, got {}",
                family.id(),
                family.domain_dim(),
                domain.dim()
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "q must be finite and > 1, got {q}"
            )));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "r must be finite and > 0, got {r}"
            )));
        }
        let p = q / (q - 1.0);
        debug_assert!((1.0 / p + 1.0 / q - 1.0).abs() <= 1e-14);
        Ok(ProblemSpec {
            domain,
            family,
            lambda,
            q,
            p,
            r,
        })
    }

    /// P1 defaults; the parameters are small enough that the small-gain
    /// condition holds with a comfortable margin.
    pub fn p1_default() -> Self {
        ProblemSpec::new(
            DomainSpec::unit_interval(),
            KernelFamily::ScalarSmooth {
                a: 0.2,
                c1: 0.3,
                c2: 0.5,
                d: 0.4,
            },
            0.5,
            2.0,
            1.0,
        )
        .expect("default P1 instance is valid")
    }

    pub fn p2_default() -> Self {
        ProblemSpec::new(
            DomainSpec::unit_interval(),
            KernelFamily::LinearExact {
                a: 0.2,
                b0: 0.3,
                c2: 0.5,
            },
            0.5,
            2.0,
            1.0,
        )
        .expect("default P2 instance is valid")
    }

    pub fn p3_default() -> Self {
        ProblemSpec::new(
            DomainSpec::unit_square(),
            KernelFamily::Planar {
                a: 0.2,
                c1: 0.3,
                c2: 0.5,
                d: 0.4,
            },
            0.5,
            2.0,
            1.0,
        )
        .expect("default P3 instance is valid")
    }

    pub fn state_dim(&self) -> usize {
        self.family.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.family.control_dim()
    }

    /// Node-wise value of the discretized right-hand side:
    ///
    /// `Phi(x)(xi_i) = f(xi_i, x_i) + lambda sum_j w_j [K1(xi_i, xi_j, x_j)
    ///  + K2(xi_i, xi_j, x_j) u_j]`,
    ///
    /// with the sum taken in ascending node order.
    pub fn evaluate_rhs(
        &self,
        grid: &Grid,
        x: &GridFunction,
        u: &GridFunction,
    ) -> Result<GridFunction> {
        let n = self.state_dim();
        let m = self.control_dim();
        if x.dim != n || x.values.len() != grid.len() * n {
            return Err(Error::DimensionMismatch(format!(
                "state has dim {} over {} values, expected dim {} on {} nodes",
                x.dim,
                x.values.len(),
                n,
                grid.len()
            )));
        }
        if u.dim != m || u.values.len() != grid.len() * m {
            return Err(Error::DimensionMismatch(format!(
                "control has dim {} over {} values, expected dim {} on {} nodes",
                u.dim,
                u.values.len(),
                m,
                grid.len()
            )));
        }
        let mut out = GridFunction::zeros(grid, n);
        let mut k1buf = vec![0.0; n];
        let mut k2buf = vec![0.0; n * m];
        for i in 0..grid.len() {
            let xi = &grid.nodes[i];
            let acc = out.node_mut(i);
            self.family.f(xi, x.node(i), acc);
            if self.lambda != 0.0 {
                for j in 0..grid.len() {
                    let s = &grid.nodes[j];
                    let xj = x.node(j);
                    let uj = u.node(j);
                    self.family.k1(xi, s, xj, &mut k1buf);
                    self.family.k2(xi, s, xj, &mut k2buf);
                    let lw = self.lambda * grid.weights[j];
                    for c in 0..n {
                        let mut term = k1buf[c];
                        for l in 0..m {
                            term += k2buf[c * m + l] * uj[l];
                        }
                        acc[c] += lw * term;
                    }
                }
            }
        }
        Ok(out)
    }

    /// All constants of the contraction/bound machinery, evaluated by
    /// nested quadrature on `grid`. Essential suprema are taken as
    /// maxima over nodes and node pairs.
    pub fn compute_constants(&self, grid: &Grid) -> Constants {
        let n = self.state_dim();
        let m = self.control_dim();
        let nn = grid.len();
        let mu = grid.total_measure;
        let (p, q) = (self.p, self.q);

        let mut kappa0 = 0.0f64;
        let mut kappa2 = 0.0f64;
        let mut kappa1_acc = 0.0;
        let mut alpha0_acc = 0.0;
        let mut alpha1_acc = 0.0;
        let mut alpha2_acc = 0.0;
        let zero_state = vec![0.0; n];
        let mut fbuf = vec![0.0; n];
        let mut k1buf = vec![0.0; n];
        let mut k2buf = vec![0.0; n * m];
        for i in 0..nn {
            let xi = &grid.nodes[i];
            kappa0 = kappa0.max(self.family.gamma0(xi));
            self.family.f(xi, &zero_state, &mut fbuf);
            alpha0_acc += grid.weights[i] * euclid(&fbuf).powf(p);
            let mut inner_gamma1 = 0.0;
            let mut inner_a1 = 0.0;
            let mut inner_a2 = 0.0;
            for j in 0..nn {
                let s = &grid.nodes[j];
                kappa2 = kappa2.max(self.family.gamma2(xi, s));
                inner_gamma1 += grid.weights[j] * self.family.gamma1(xi, s).powf(q);
                self.family.k1(xi, s, &zero_state, &mut k1buf);
                inner_a1 += grid.weights[j] * euclid(&k1buf).powf(p);
                self.family.k2(xi, s, &zero_state, &mut k2buf);
                inner_a2 += grid.weights[j] * euclid(&k2buf).powf(p);
            }
            kappa1_acc += grid.weights[i] * inner_gamma1.powf(p / q);
            alpha1_acc += grid.weights[i] * inner_a1;
            alpha2_acc += grid.weights[i] * inner_a2;
        }
        let kappa1 = kappa1_acc.powf(1.0 / p);
        let alpha0 = alpha0_acc.powf(1.0 / p);
        let alpha1 = alpha1_acc.powf(1.0 / p);
        let alpha2 = alpha2_acc.powf(1.0 / p);

        Constants::from_parts(
            p,
            q,
            self.lambda,
            self.r,
            mu,
            [kappa0, kappa1, kappa2],
            [alpha0, alpha1, alpha2],
        )
    }
}

/// The constant bundle: Lipschitz aggregates, zero-state aggregates, the
/// contraction constant `L*`, the trajectory bound `beta*` and the
/// robustness constant `c*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub l_star: f64,
    pub t_star: f64,
    /// Populated only when `L* < 1`.
    pub beta_star: Option<f64>,
    /// Populated only when `L* < 1`.
    pub c_star: Option<f64>,
    pub condition_2d_satisfied: bool,
}

impl Constants {
    /// Assemble the derived constants from raw aggregates:
    ///
    /// `L* = 6^(p-1) [k0^p + lam^p k1^p + lam^p r^p k2^p mu]`,
    /// `T* = 6^(p-1) [a0^p + lam^p a1^p mu^(p/q) + lam^p a2^p r^p]`,
    /// `beta* = (T* / (1 - L*))^(1/p)`,
    /// `c* = 2 lam r (6^(p-1) / (1 - L*))^(1/p)`.
    pub fn from_parts(
        p: f64,
        q: f64,
        lambda: f64,
        r: f64,
        mu: f64,
        kappa: [f64; 3],
        alpha: [f64; 3],
    ) -> Constants {
        let [kappa0, kappa1, kappa2] = kappa;
        let [alpha0, alpha1, alpha2] = alpha;
        let six = 6.0f64.powf(p - 1.0);
        let lam_p = lambda.powf(p);
        let l_star = six
            * (kappa0.powf(p)
                + lam_p * kappa1.powf(p)
                + lam_p * r.powf(p) * kappa2.powf(p) * mu);
        let t_star = six
            * (alpha0.powf(p)
                + lam_p * alpha1.powf(p) * mu.powf(p / q)
                + lam_p * alpha2.powf(p) * r.powf(p));
        let condition_2d_satisfied = l_star < 1.0;
        let (beta_star, c_star) = if condition_2d_satisfied {
            (
                Some((t_star / (1.0 - l_star)).powf(1.0 / p)),
                Some(2.0 * lambda * r * (six / (1.0 - l_star)).powf(1.0 / p)),
            )
        } else {
            (None, None)
        };
        Constants {
            kappa0,
            kappa1,
            kappa2,
            alpha0,
            alpha1,
            alpha2,
            l_star,
            t_star,
            beta_star,
            c_star,
            condition_2d_satisfied,
        }
    }
}

/// Verdict of the small-gain check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallGain {
    pub satisfied: bool,
    /// `1 - L*`; negative when violated.
    pub margin: f64,
}

/// Strict small-gain check, `L* < 1`.
pub fn check_small_gain(constants: &Constants) -> SmallGain {
    SmallGain {
        satisfied: constants.l_star < 1.0,
        margin: 1.0 - constants.l_star,
    }
}

/// Sampled verification of the Lipschitz majorants: returns the largest
/// violation `||F(x1) - F(x2)|| - gamma ||x1 - x2||` over random draws
/// (negative means every sample satisfied its bound).
pub fn max_lipschitz_violation(problem: &ProblemSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.state_dim();
    let m = problem.control_dim();
    let k = problem.domain.dim();
    let mut worst = f64::NEG_INFINITY;
    let mut buf_a = vec![0.0; n.max(n * m)];
    let mut buf_b = vec![0.0; n.max(n * m)];
    for _ in 0..samples {
        let xi: Vec<f64> = problem
            .domain
            .bounds
            .iter()
            .take(k)
            .map(|b| rng.gen_range(b[0]..b[1]))
            .collect();
        let s: Vec<f64> = problem
            .domain
            .bounds
            .iter()
            .take(k)
            .map(|b| rng.gen_range(b[0]..b[1]))
            .collect();
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dx = euclid(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>());

        problem.family.f(&xi, &x1, &mut buf_a[..n]);
        problem.family.f(&xi, &x2, &mut buf_b[..n]);
        let df = euclid(
            &buf_a[..n]
                .iter()
                .zip(&buf_b[..n])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        worst = worst.max(df - problem.family.gamma0(&xi) * dx);

        problem.family.k1(&xi, &s, &x1, &mut buf_a[..n]);
        problem.family.k1(&xi, &s, &x2, &mut buf_b[..n]);
        let dk1 = euclid(
            &buf_a[..n]
                .iter()
                .zip(&buf_b[..n])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        worst = worst.max(dk1 - problem.family.gamma1(&xi, &s) * dx);

        problem.family.k2(&xi, &s, &x1, &mut buf_a[..n * m]);
        problem.family.k2(&xi, &s, &x2, &mut buf_b[..n * m]);
        let dk2 = euclid(
            &buf_a[..n * m]
                .iter()
                .zip(&buf_b[..n * m])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        worst = worst.max(dk2 - problem.family.gamma2(&xi, &s) * dx);
    }
    worst
}

/// Precomputed Nystrom operator for the built-in families.
///
/// The pair-dependent kernel factors (`e^{-<xi,s>}`, `cos(xi_c + s_c)`)
/// do not depend on the state, so they are tabulated once per grid and
/// the Picard map reduces to dense multiply-accumulate sweeps. Agrees
/// with [`ProblemSpec::evaluate_rhs`] to machine precision (unit-tested).
pub struct DiscreteRhs<'a> {
    problem: &'a ProblemSpec,
    grid: &'a Grid,
    /// `K1` pair factor times lambda * w_j, pair-major `[i * nn + j]`.
    k1_pair: Vec<f64>,
    /// `K2` pair factor per state component times lambda * w_j,
    /// `[c * nn * nn + i * nn + j]`.
    k2_pair: Vec<f64>,
    /// `sin(pi xi_i)` per node and component, node-major.
    forcing: Vec<f64>,
}

impl<'a> DiscreteRhs<'a> {
    pub fn new(problem: &'a ProblemSpec, grid: &'a Grid) -> Self {
        let nn = grid.len();
        let n = problem.state_dim();
        let mut k1_pair = vec![0.0; nn * nn];
        let mut k2_pair = vec![0.0; n * nn * nn];
        let (k1_amp, k2_amp) = match &problem.family {
            KernelFamily::ScalarSmooth { c1, c2, .. } => (*c1, *c2),
            KernelFamily::LinearExact { b0, c2, .. } => (*b0, *c2),
            KernelFamily::Planar { c1, c2, .. } => (*c1, *c2),
        };
        for i in 0..nn {
            let xi = &grid.nodes[i];
            for j in 0..nn {
                let s = &grid.nodes[j];
                let lw = problem.lambda * grid.weights[j];
                let dot: f64 = xi.iter().zip(s).map(|(a, b)| a * b).sum();
                k1_pair[i * nn + j] = lw * k1_amp * (-dot).exp();
                for c in 0..n {
                    k2_pair[c * nn * nn + i * nn + j] = lw * k2_amp * (xi[c] + s[c]).cos();
                }
            }
        }
        let mut forcing = vec![0.0; nn * n];
        for i in 0..nn {
            for c in 0..n {
                forcing[i * n + c] = (std::f64::consts::PI * grid.nodes[i][c]).sin();
            }
        }
        DiscreteRhs {
            problem,
            grid,
            k1_pair,
            k2_pair,
            forcing,
        }
    }

    pub fn problem(&self) -> &ProblemSpec {
        self.problem
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    /// One application of the Picard map.
    pub fn apply(&self, x: &GridFunction, u: &GridFunction) -> GridFunction {
        let nn = self.grid.len();
        let n = self.problem.state_dim();
        let mut out = GridFunction::zeros(self.grid, n);
        match &self.problem.family {
            KernelFamily::ScalarSmooth { a, d, .. } => {
                let sx: Vec<f64> = x.values.iter().map(|v| v.sin()).collect();
                for i in 0..nn {
                    let mut acc = a * x.values[i].tanh() + self.forcing[i];
                    let row1 = &self.k1_pair[i * nn..(i + 1) * nn];
                    let row2 = &self.k2_pair[i * nn..(i + 1) * nn];
                    for j in 0..nn {
                        acc += row1[j] * sx[j] + row2[j] * (1.0 + d * sx[j]) * u.values[j];
                    }
                    out.values[i] = acc;
                }
            }
            KernelFamily::LinearExact { a, .. } => {
                for i in 0..nn {
                    let mut acc = a * x.values[i] + self.forcing[i];
                    let row1 = &self.k1_pair[i * nn..(i + 1) * nn];
                    let row2 = &self.k2_pair[i * nn..(i + 1) * nn];
                    for j in 0..nn {
                        acc += row1[j] * x.values[j] + row2[j] * u.values[j];
                    }
                    out.values[i] = acc;
                }
            }
            KernelFamily::Planar { a, d, .. } => {
                let sx: Vec<f64> = x.values.iter().map(|v| v.sin()).collect();
                for i in 0..nn {
                    for c in 0..2 {
                        let mut acc = a * x.values[i * 2 + c].tanh() + self.forcing[i * 2 + c];
                        let row1 = &self.k1_pair[i * nn..(i + 1) * nn];
                        let row2 = &self.k2_pair[c * nn * nn + i * nn..c * nn * nn + (i + 1) * nn];
                        for j in 0..nn {
                            acc += row1[j] * sx[j * 2 + c]
                                + row2[j] * (1.0 + d * sx[j * 2 + c]) * u.values[j];
                        }
                        out.values[i * 2 + c] = acc;
                    }
                }
            }
        }
        out
    }
}

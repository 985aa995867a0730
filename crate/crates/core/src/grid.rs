//! Composite midpoint-rule discretization of the compact domain:
//! quadrature nodes and weights, integration, `L_p` norms and
//! measurable-subset selection.
//!
//! All reductions run in ascending node order so results are
//! bit-reproducible across runs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

/// A compact axis-aligned domain in R^k, k in {1, 2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Per-axis `[lower, upper]` bounds.
    pub bounds: Vec<[f64; 2]>,
}

impl DomainSpec {
    pub fn interval(lo: f64, hi: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Interval,
            bounds: vec![[lo, hi]],
        }
    }

    pub fn rectangle(b0: [f64; 2], b1: [f64; 2]) -> Self {
        DomainSpec {
            kind: DomainKind::Rectangle,
            bounds: vec![b0, b1],
        }
    }

    pub fn unit_interval() -> Self {
        Self::interval(0.0, 1.0)
    }

    pub fn unit_square() -> Self {
        Self::rectangle([0.0, 1.0], [0.0, 1.0])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        self.bounds.iter().map(|b| b[1] - b[0]).product()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => 2,
        };
        if self.bounds.len() != expected {
            return Err(Error::InvalidDomain(format!(
                "{:?} domain needs {} axis bounds, got {}",
                self.kind,
                expected,
                self.bounds.len()
            )));
        }
        for (axis, b) in self.bounds.iter().enumerate() {
            if !b[0].is_finite() || !b[1].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "axis {axis} bounds must be finite"
                )));
            }
            if b[0] >= b[1] {
                return Err(Error::InvalidDomain(format!(
                    "axis {axis}: lower bound {} must be below upper bound {}",
                    b[0], b[1]
                )));
            }
        }
        Ok(())
    }
}

/// Midpoint-rule quadrature grid over a [`DomainSpec`].
///
/// For an interval the rule has `cells_per_axis` uniform cells with the
/// node at each cell center and weight equal to the cell length; a
/// rectangle takes the tensor product of the per-axis rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub domain: DomainSpec,
    pub cells_per_axis: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Sum of all weights in stored order.
    pub total_measure: f64,
}

impl Grid {
    pub fn build(domain: &DomainSpec, cells_per_axis: usize) -> Result<Grid> {
        domain.validate()?;
        if cells_per_axis == 0 {
            return Err(Error::InvalidArgument(
                "cells_per_axis must be at least 1".into(),
            ));
        }
        let mut axis_nodes: Vec<Vec<f64>> = Vec::new();
        let mut axis_step: Vec<f64> = Vec::new();
        for b in &domain.bounds {
            let h = (b[1] - b[0]) / cells_per_axis as f64;
            axis_nodes.push(
                (0..cells_per_axis)
                    .map(|i| b[0] + (i as f64 + 0.5) * h)
                    .collect(),
            );
            axis_step.push(h);
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match domain.dim() {
            1 => {
                for &x in &axis_nodes[0] {
                    nodes.push(vec![x]);
                    weights.push(axis_step[0]);
                }
            }
            2 => {
                let w = axis_step[0] * axis_step[1];
                for &x0 in &axis_nodes[0] {
                    for &x1 in &axis_nodes[1] {
                        nodes.push(vec![x0, x1]);
                        weights.push(w);
                    }
                }
            }
            k => {
                return Err(Error::InvalidDomain(format!(
                    "only 1- and 2-dimensional domains are supported, got k = {k}"
                )))
            }
        }
        let total_measure = weights.iter().sum();
        Ok(Grid {
            domain: domain.clone(),
            cells_per_axis,
            nodes,
            weights,
            total_measure,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest single-cell weight, the finest representable subset measure.
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Quadrature `L_p` norm: `(sum_i w_i ||v_i||^p)^(1/p)`.
    pub fn lp_norm(&self, f: &GridFunction, exponent: f64) -> f64 {
        assert!(
            exponent.is_finite() && exponent > 1.0,
            "L_p exponent must be finite and > 1, got {exponent}"
        );
        debug_assert_eq!(f.values.len(), self.len() * f.dim);
        let mut acc = 0.0;
        for i in 0..self.len() {
            let n = euclid(f.node(i));
            if n > 0.0 {
                acc += self.weights[i] * n.powf(exponent);
            }
        }
        acc.powf(1.0 / exponent)
    }

    /// Componentwise quadrature integral `sum_i w_i v_i`.
    pub fn integrate_vector(&self, f: &GridFunction) -> Vec<f64> {
        debug_assert_eq!(f.values.len(), self.len() * f.dim);
        let mut out = vec![0.0; f.dim];
        for i in 0..self.len() {
            let v = f.node(i);
            for (o, &x) in out.iter_mut().zip(v) {
                *o += self.weights[i] * x;
            }
        }
        out
    }

    /// Greedy selection of whole cells up to the `target` measure.
    ///
    /// Nodes are visited in the strategy's candidate order; inclusion
    /// stops at the first cell that would push the running measure over
    /// `target`.
    pub fn subset_by_measure(
        &self,
        target: f64,
        strategy: &SubsetStrategy,
    ) -> Result<SubsetMask> {
        if !(target >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "subset target measure must be nonnegative, got {target}"
            )));
        }
        let order: Vec<usize> = match strategy {
            SubsetStrategy::Prefix => (0..self.len()).collect(),
            SubsetStrategy::Random(seed) => {
                let mut idx: Vec<usize> = (0..self.len()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                idx.shuffle(&mut rng);
                idx
            }
            SubsetStrategy::WorstFor { scores, exponent } => {
                debug_assert_eq!(scores.values.len(), self.len() * scores.dim);
                let mut scored: Vec<(usize, f64)> = (0..self.len())
                    .map(|i| (i, self.weights[i] * euclid(scores.node(i)).powf(*exponent)))
                    .collect();
                scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                scored.into_iter().map(|(i, _)| i).collect()
            }
        };
        let mut included = vec![false; self.len()];
        let mut selected: Vec<usize> = Vec::new();
        let mut running = 0.0;
        for &i in &order {
            if running + self.weights[i] <= target {
                running += self.weights[i];
                included[i] = true;
                selected.push(i);
            } else {
                break;
            }
        }
        // Re-sum in ascending node order; drop selections if rounding
        // pushed the canonical sum past the target.
        let mut measure = mask_measure(self, &included);
        while measure > target {
            let last = selected.pop().expect("nonzero measure implies a selection");
            included[last] = false;
            measure = mask_measure(self, &included);
        }
        Ok(SubsetMask { included, measure })
    }
}

fn mask_measure(grid: &Grid, included: &[bool]) -> f64 {
    let mut acc = 0.0;
    for (i, &inc) in included.iter().enumerate() {
        if inc {
            acc += grid.weights[i];
        }
    }
    acc
}

/// Euclidean norm of a node value.
pub fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A vector-valued function sampled at the grid nodes, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid, dim: usize) -> Self {
        GridFunction {
            dim,
            values: vec![0.0; grid.len() * dim],
        }
    }

    /// Sample `f(node, out)` at every grid node.
    pub fn sample(grid: &Grid, dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for i in 0..grid.len() {
            f(&grid.nodes[i], &mut values[i * dim..(i + 1) * dim]);
        }
        GridFunction { dim, values }
    }

    pub fn from_values(grid: &Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values ({} nodes x dim {}), got {}",
                grid.len() * dim,
                grid.len(),
                dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "grid function entries must be finite".into(),
            ));
        }
        Ok(GridFunction { dim, values })
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        debug_assert_eq!(self.values.len(), other.values.len());
        GridFunction {
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        GridFunction {
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// A union of whole cells, the discrete carrier for small-measure subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMask {
    pub included: Vec<bool>,
    /// Sum of included weights, in ascending node order.
    pub measure: f64,
}

impl SubsetMask {
    pub fn empty(grid: &Grid) -> Self {
        SubsetMask {
            included: vec![false; grid.len()],
            measure: 0.0,
        }
    }

    pub fn n_included(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

/// Candidate orderings for greedy subset selection.
pub enum SubsetStrategy<'a> {
    /// Ascending node index.
    Prefix,
    /// Seeded shuffle of the node indices.
    Random(u64),
    /// Descending `w_i * ||scores_i||^exponent`; realizes the worst-case
    /// subset for the p-mass of a trajectory.
    WorstFor {
        scores: &'a GridFunction,
        exponent: f64,
    },
}

/// Piecewise-constant prolongation of a 1-D grid function onto a finer
/// grid whose cell count is a multiple of the coarse one. Coarse cells
/// contain whole fine cells, so the embedding is exact.
pub fn prolong_1d(coarse: &Grid, f: &GridFunction, fine: &Grid) -> Result<GridFunction> {
    if coarse.domain.dim() != 1 || fine.domain.dim() != 1 {
        return Err(Error::InvalidArgument(
            "prolongation is implemented for 1-D grids only".into(),
        ));
    }
    if coarse.domain != fine.domain {
        return Err(Error::InvalidArgument(
            "prolongation requires grids over the same domain".into(),
        ));
    }
    let nc = coarse.len();
    let nf = fine.len();
    if nf % nc != 0 {
        return Err(Error::InvalidArgument(format!(
            "fine cell count {nf} is not a multiple of coarse cell count {nc}"
        )));
    }
    let ratio = nf / nc;
    let mut out = GridFunction::zeros(fine, f.dim);
    for i in 0..nf {
        let src = f.node(i / ratio).to_vec();
        out.node_mut(i).copy_from_slice(&src);
    }
    Ok(out)
}

//! Monotone explicit solver for the value equation
//!
//! ```text
//! max{ max_i { a_i(x) V_{x_i x_i} - c_i }, g(x) - V } = 0   in (0,1)^d,
//! a_i(x) = k_i x_i^2 (1 - x_i)^2
//! ```
//!
//! on a tensor grid that includes the boundary. No boundary condition is
//! imposed: on a face `x_i ∈ {0,1}` the coefficient `a_i` is exactly zero
//! and the stencil along axis `i` is never read.
//!
//! Each sweep is a damped pseudo-time step `V <- max(V + tau * R(V), g)` with
//! `R` the discrete residual. Written in coefficient form, every branch is a
//! nonnegative combination of `V` and its neighbours, so the sweep is
//! monotone (also in floating point) as long as `tau` respects the CFL bound.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Action, FieldSpace, Grid, PolicyField, ValueField};
use crate::model::ProblemSpec;

/// Safety factor applied to the explicit stability limit.
pub const CFL_FACTOR: f64 = 0.9;

/// Node count above which sweeps are split across the rayon pool.
const PARALLEL_THRESHOLD: usize = 16_384;

/// Initial iterate of the pseudo-time iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Start from `g`, a subsolution; iterates increase.
    FromObstacle,
    /// Start from the constant `max g`, a supersolution; iterates decrease.
    FromUpper,
    /// Start from a supplied value field (projected onto `V >= g`).
    Given(ValueField),
}

impl Init {
    pub fn tag(&self) -> &'static str {
        match self {
            Init::FromObstacle => "from_obstacle",
            Init::FromUpper => "from_upper",
            Init::Given(_) => "given",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl SolveOptions {
    /// `1e-8` in one dimension, `1e-6` otherwise.
    pub fn default_for(d: usize) -> Self {
        SolveOptions {
            tol: if d == 1 { 1e-8 } else { 1e-6 },
            max_iters: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub tau: f64,
    pub init: String,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Node-local data of the discretization.
#[derive(Debug, Clone)]
struct NodeStencil {
    obstacle: f64,
    /// `a_i(x) / h_i^2` per axis; zero on faces orthogonal to axis `i`.
    weight: Vec<f64>,
}

/// Precomputed discretization of one (spec, grid) pair.
#[derive(Debug, Clone)]
pub struct Scheme {
    grid: Grid,
    cost: Vec<f64>,
    nodes: Vec<NodeStencil>,
    tau: f64,
}

impl Scheme {
    pub fn new(spec: &ProblemSpec, grid: &Grid) -> Result<Self> {
        if spec.dim() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "spec has {} alternatives, grid has {} axes",
                spec.dim(),
                grid.dim()
            )));
        }
        let diffusion = spec.diffusion();
        let h2: Vec<f64> = (0..grid.dim()).map(|a| grid.spacing(a).powi(2)).collect();
        let nodes: Vec<NodeStencil> = (0..grid.len())
            .map(|k| {
                let x = grid.point(k);
                let weight = (0..grid.dim())
                    .map(|a| {
                        let j = grid.axis_index(k, a);
                        if j == 0 || j + 1 == grid.shape()[a] {
                            0.0
                        } else {
                            diffusion.a(a, x[a]) / h2[a]
                        }
                    })
                    .collect();
                NodeStencil {
                    obstacle: spec.obstacle(&x),
                    weight,
                }
            })
            .collect();
        let stiffness = nodes
            .iter()
            .map(|n| n.weight.iter().map(|w| 2.0 * w).sum::<f64>())
            .fold(0.0, f64::max);
        // the obstacle branch (1 - tau) V + tau g needs tau <= 1 as well
        let tau = (CFL_FACTOR / stiffness).min(CFL_FACTOR);
        Ok(Scheme {
            grid: grid.clone(),
            cost: spec.cost.clone(),
            nodes,
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn obstacle_values(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.obstacle).collect()
    }

    /// Residual `max{max_i{a_i D_i^2 V - c_i}, g - V}` at one node.
    #[inline]
    fn residual_at(&self, v: &[f64], k: usize) -> f64 {
        let node = &self.nodes[k];
        let strides = self.grid.strides();
        let vk = v[k];
        let mut r = node.obstacle - vk;
        for (a, &w) in node.weight.iter().enumerate() {
            let branch = if w > 0.0 {
                let s = strides[a];
                w * (v[k + s] + v[k - s] - 2.0 * vk) - self.cost[a]
            } else {
                -self.cost[a]
            };
            r = r.max(branch);
        }
        r
    }

    /// One projected sweep at node `k`, in monotone coefficient form.
    #[inline]
    fn update_at(&self, v: &[f64], k: usize) -> f64 {
        let node = &self.nodes[k];
        let strides = self.grid.strides();
        let tau = self.tau;
        let vk = v[k];
        let mut next = (1.0 - tau) * vk + tau * node.obstacle;
        for (a, &w) in node.weight.iter().enumerate() {
            let candidate = if w > 0.0 {
                let s = strides[a];
                let tw = tau * w;
                (1.0 - 2.0 * tw) * vk + tw * (v[k + s] + v[k - s]) - tau * self.cost[a]
            } else {
                vk - tau * self.cost[a]
            };
            next = next.max(candidate);
        }
        next.max(node.obstacle)
    }

    /// Writes `T(v)` into `out` and returns the sup-norm of the residual of
    /// `v`. Results do not depend on the number of worker threads.
    pub fn sweep(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let kernel = |offset: usize, chunk: &mut [f64]| {
            let mut worst: f64 = 0.0;
            for (j, slot) in chunk.iter_mut().enumerate() {
                let k = offset + j;
                worst = worst.max(self.residual_at(v, k).abs());
                *slot = self.update_at(v, k);
            }
            worst
        };
        if v.len() >= PARALLEL_THRESHOLD {
            const CHUNK: usize = 4096;
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .map(|(c, chunk)| kernel(c * CHUNK, chunk))
                .reduce(|| 0.0, f64::max)
        } else {
            kernel(0, out)
        }
    }

    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|k| self.residual_at(v, k)).collect()
    }

    /// Per-node diffusion part `max_i{a_i D_i^2 V - c_i}` and its argmax.
    fn best_branch(&self, v: &[f64], k: usize) -> (f64, usize) {
        let node = &self.nodes[k];
        let strides = self.grid.strides();
        let mut best = (f64::NEG_INFINITY, 0);
        for (a, &w) in node.weight.iter().enumerate() {
            let branch = if w > 0.0 {
                let s = strides[a];
                w * (v[k + s] + v[k - s] - 2.0 * v[k]) - self.cost[a]
            } else {
                -self.cost[a]
            };
            if branch > best.0 {
                best = (branch, a);
            }
        }
        best
    }
}

/// Pseudo-time iteration with an explicit evaluate/advance cycle, so that
/// several iterations can be run in lockstep.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    scheme: Scheme,
    values: Vec<f64>,
    candidate: Vec<f64>,
    residual: Option<f64>,
    iterations: usize,
    init: &'static str,
}

impl ValueIteration {
    pub fn new(spec: &ProblemSpec, grid: &Grid, init: Init) -> Result<Self> {
        let scheme = Scheme::new(spec, grid)?;
        let tag = init.tag();
        let obstacle = scheme.obstacle_values();
        let values = match init {
            Init::FromObstacle => obstacle,
            Init::FromUpper => vec![spec.obstacle_max(); grid.len()],
            Init::Given(field) => {
                if field.grid != *grid || field.space != FieldSpace::Value {
                    return Err(Error::InvalidArgument(
                        "initial field must be a value-space field on the solver grid".into(),
                    ));
                }
                field
                    .values
                    .iter()
                    .zip(&obstacle)
                    .map(|(v, g)| v.max(*g))
                    .collect()
            }
        };
        Ok(ValueIteration {
            candidate: vec![0.0; values.len()],
            scheme,
            values,
            residual: None,
            iterations: 0,
            init: tag,
        })
    }

    /// Residual sup-norm of the current iterate; prepares the next one.
    pub fn evaluate(&mut self) -> f64 {
        if let Some(r) = self.residual {
            return r;
        }
        let r = self.scheme.sweep(&self.values, &mut self.candidate);
        self.residual = Some(r);
        r
    }

    /// Adopts the iterate prepared by [`ValueIteration::evaluate`].
    pub fn advance(&mut self) {
        self.evaluate();
        std::mem::swap(&mut self.values, &mut self.candidate);
        self.residual = None;
        self.iterations += 1;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn field(&self) -> ValueField {
        ValueField {
            grid: self.scheme.grid.clone(),
            values: self.values.clone(),
            space: FieldSpace::Value,
        }
    }

    fn report(&mut self, started: Instant) -> SolveReport {
        SolveReport {
            iterations: self.iterations,
            residual: self.evaluate(),
            tau: self.scheme.tau,
            init: self.init.to_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        }
    }

    /// Iterates until the residual sup-norm is at most `opts.tol`.
    pub fn run(mut self, opts: &SolveOptions) -> Result<(ValueField, SolveReport)> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let started = Instant::now();
        loop {
            let r = self.evaluate();
            if r <= opts.tol {
                let report = self.report(started);
                return Ok((self.field(), report));
            }
            if self.iterations >= opts.max_iters {
                return Err(Error::NoConvergence {
                    iterations: self.iterations,
                    residual: r,
                    tol: opts.tol,
                });
            }
            self.advance();
        }
    }
}

/// Solves the value equation from the given initial iterate.
pub fn solve_value(
    spec: &ProblemSpec,
    grid: &Grid,
    init: Init,
    opts: &SolveOptions,
) -> Result<(ValueField, SolveReport)> {
    ValueIteration::new(spec, grid, init)?.run(opts)
}

fn require_value_field(spec: &ProblemSpec, field: &ValueField) -> Result<Scheme> {
    if field.space != FieldSpace::Value {
        return Err(Error::InvalidArgument(
            "expected a value-space field".into(),
        ));
    }
    Scheme::new(spec, &field.grid)
}

/// Nodewise discrete residual of a value-space field.
pub fn discrete_residual(spec: &ProblemSpec, field: &ValueField) -> Result<ValueField> {
    let scheme = require_value_field(spec, field)?;
    Ok(ValueField {
        grid: field.grid.clone(),
        values: scheme.residual(&field.values),
        space: FieldSpace::Value,
    })
}

/// Nodewise `min{V - g, -max_i{a_i D_i^2 V - c_i}}`; vanishes on exact
/// discrete solutions.
pub fn complementarity_gap(spec: &ProblemSpec, field: &ValueField) -> Result<Vec<f64>> {
    let scheme = require_value_field(spec, field)?;
    Ok((0..field.values.len())
        .map(|k| {
            let slack = field.values[k] - scheme.nodes[k].obstacle;
            slack.min(-scheme.best_branch(&field.values, k).0)
        })
        .collect())
}

/// Stop where `V - g <= contact_tol`, otherwise learn the alternative with
/// the largest diffusion branch (ties to the lowest index).
pub fn extract_policy(
    spec: &ProblemSpec,
    field: &ValueField,
    contact_tol: f64,
) -> Result<PolicyField> {
    let scheme = require_value_field(spec, field)?;
    let actions = (0..field.values.len())
        .map(|k| {
            if field.values[k] - scheme.nodes[k].obstacle <= contact_tol {
                Action::Stop
            } else {
                Action::Continue(scheme.best_branch(&field.values, k).1)
            }
        })
        .collect();
    Ok(PolicyField {
        grid: field.grid.clone(),
        actions,
    })
}

/// Largest difference quotient over adjacent node pairs along any axis;
/// a lower bound on the Lipschitz constant of the sampled function.
pub fn lipschitz_estimate(field: &ValueField) -> f64 {
    let grid = &field.grid;
    let mut best: f64 = 0.0;
    for a in 0..grid.dim() {
        let s = grid.strides()[a];
        let h = grid.spacing(a);
        for k in 0..grid.len() {
            if grid.axis_index(k, a) + 1 < grid.shape()[a] {
                best = best.max((field.values[k + s] - field.values[k]).abs() / h);
            }
        }
    }
    best
}

/// Restricts a field on a grid with `2n - 1` nodes per axis to the grid with
/// `n` nodes per axis (every other node).
pub fn restrict_to_coarse(fine: &ValueField, coarse: &Grid) -> Result<ValueField> {
    let matches = coarse
        .shape()
        .iter()
        .zip(fine.grid.shape())
        .all(|(&c, &f)| f == 2 * c - 1);
    if !matches || coarse.dim() != fine.grid.dim() {
        return Err(Error::InvalidArgument(
            "fine grid must have 2n - 1 nodes per axis".into(),
        ));
    }
    let values = (0..coarse.len())
        .map(|k| {
            let idx: Vec<usize> = coarse.multi_index(k).iter().map(|j| 2 * j).collect();
            fine.values[fine.grid.node(&idx)]
        })
        .collect();
    Ok(ValueField {
        grid: coarse.clone(),
        values,
        space: fine.space,
    })
}

//! Tensor grids on the closed unit cube and the fields living on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Uniform tensor grid over `[0,1]^d`, boundary nodes included.
///
/// Nodes are stored in lexicographic order of their multi-index: the last
/// axis varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(n: &[usize]) -> Result<Self> {
        if n.is_empty() {
            return Err(Error::InvalidArgument(
                "grid needs at least one axis".into(),
            ));
        }
        if let Some(axis) = n.iter().position(|&k| k < 3) {
            return Err(Error::GridTooSmall {
                axis,
                nodes: n[axis],
            });
        }
        let mut strides = vec![1; n.len()];
        for axis in (0..n.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * n[axis + 1];
        }
        Ok(Grid {
            n: n.to_vec(),
            strides,
        })
    }

    /// Same node count along every axis.
    pub fn uniform(d: usize, n: usize) -> Result<Self> {
        Grid::new(&vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / (self.n[axis] - 1) as f64
    }

    /// Coordinate of index `j` along `axis`; exactly 0 and 1 at the ends.
    #[inline]
    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        j as f64 / (self.n[axis] - 1) as f64
    }

    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.n[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.axis_index(node, a)).collect()
    }

    pub fn node(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.coordinate(a, self.axis_index(node, a)))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    /// Whether `node` lies off every face of the cube.
    pub fn is_interior(&self, node: usize) -> bool {
        (0..self.dim()).all(|a| {
            let j = self.axis_index(node, a);
            j > 0 && j + 1 < self.n[a]
        })
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_interior(k)).collect()
    }

    /// Nearest node to `x` (ties round half away from zero per axis).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(a, &xa)| {
                let m = (self.n[a] - 1) as f64;
                (xa.clamp(0.0, 1.0) * m).round() as usize
            })
            .collect();
        self.node(&idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpace {
    /// Value function `V`.
    Value,
    /// Transformed field `u = log(b - V)`.
    Log,
}

/// Scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub space: FieldSpace,
}

impl ValueField {
    pub fn new(grid: Grid, values: Vec<f64>, space: FieldSpace) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field value at node {k} is not finite"
            )));
        }
        Ok(ValueField {
            grid,
            values,
            space,
        })
    }

    pub fn from_fn(grid: &Grid, space: FieldSpace, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.points().map(|x| f(&x)).collect();
        ValueField {
            grid: grid.clone(),
            values,
            space,
        }
    }

    /// The obstacle sampled on the grid.
    pub fn obstacle(spec: &ProblemSpec, grid: &Grid) -> Self {
        ValueField::from_fn(grid, FieldSpace::Value, |x| spec.obstacle(x))
    }

    /// Maps a value field to `u = log(b - V)`.
    pub fn to_log(&self, spec: &ProblemSpec) -> Result<Self> {
        if self.space == FieldSpace::Log {
            return Ok(self.clone());
        }
        let values = self
            .values
            .iter()
            .map(|&v| spec.to_u(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(ValueField {
            grid: self.grid.clone(),
            values,
            space: FieldSpace::Log,
        })
    }

    pub fn to_value(&self, spec: &ProblemSpec) -> Self {
        if self.space == FieldSpace::Value {
            return self.clone();
        }
        ValueField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&u| spec.from_u(u)).collect(),
            space: FieldSpace::Value,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &ValueField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Multilinear interpolation at `x` in the closed cube.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let m = (self.grid.shape()[a] - 1) as f64;
            let s = x[a].clamp(0.0, 1.0) * m;
            let j = (s.floor() as usize).min(self.grid.shape()[a] - 2);
            base[a] = j;
            frac[a] = s - j as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut node = 0;
            for a in 0..d {
                let up = (corner >> a) & 1;
                weight *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                node += (base[a] + up) * self.grid.strides()[a];
            }
            if weight != 0.0 {
                acc += weight * self.values[node];
            }
        }
        acc
    }
}

/// Action taken at a belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Stop,
    /// Keep learning about alternative `i` (zero-based).
    Continue(usize),
}

impl Action {
    /// CSV code: 0 for stop, `i + 1` for learning alternative `i`.
    pub fn code(self) -> usize {
        match self {
            Action::Stop => 0,
            Action::Continue(i) => i + 1,
        }
    }

    pub fn from_code(code: usize) -> Self {
        match code {
            0 => Action::Stop,
            c => Action::Continue(c - 1),
        }
    }
}

/// One action per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    pub grid: Grid,
    pub actions: Vec<Action>,
}

impl PolicyField {
    pub fn action_at(&self, x: &[f64]) -> Action {
        self.actions[self.grid.nearest(x)]
    }

    pub fn stop_fraction(&self) -> f64 {
        let stops = self.actions.iter().filter(|a| **a == Action::Stop).count();
        stops as f64 / self.actions.len() as f64
    }
}

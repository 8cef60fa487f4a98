//! Pointwise evaluation of the transformed HJB operator and the log-barrier
//! machinery used to confine maximizers to the open cube.
//!
//! All operators here use unit diffusion scale: branch `i` is
//! `-x_i^2 (1 - x_i)^2 (A_ii -/+ p_i^2) - c_i e^{-r}`. Specs with general
//! curvature scales are brought into this form with
//! [`ProblemSpec::unit_diffusion`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Symmetric matrix stored as its lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    lower: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            lower: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    fn slot(i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        r * (r + 1) / 2 + c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[Self::slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.lower[Self::slot(i, j)] = value;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }
}

/// Second-order data `(x, r, p, A)` at which the operator is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub x: Vec<f64>,
    pub r: f64,
    pub p: Vec<f64>,
    pub a: SymMatrix,
}

impl Jet {
    pub fn new(x: Vec<f64>, r: f64, p: Vec<f64>, a: SymMatrix) -> Result<Self> {
        if p.len() != x.len() || a.dim() != x.len() {
            return Err(Error::InvalidArgument(
                "jet components have inconsistent dimensions".into(),
            ));
        }
        if let Some(i) = x.iter().position(|&xi| !(xi > 0.0 && xi < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "jet point must be interior, coordinate {i} = {}",
                x[i]
            )));
        }
        Ok(Jet { x, r, p, a })
    }
}

/// Which branch of the max attains the operator value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Learning about alternative `i` (zero-based).
    Diffusion(usize),
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorValue {
    pub value: f64,
    pub branch: Branch,
}

/// Sign in front of `p_i^2` inside the diffusion branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GradientTerm {
    Minus,
    Plus,
}

#[inline]
fn sigma_sq(xi: f64) -> f64 {
    let s = xi * (1.0 - xi);
    s * s
}

/// Max over branches with ties resolved toward the lowest alternative and
/// the obstacle branch last.
fn max_branch(diffusion: impl Iterator<Item = f64>, obstacle: f64) -> OperatorValue {
    let mut best = OperatorValue {
        value: f64::NEG_INFINITY,
        branch: Branch::Obstacle,
    };
    for (i, v) in diffusion.enumerate() {
        if v > best.value {
            best = OperatorValue {
                value: v,
                branch: Branch::Diffusion(i),
            };
        }
    }
    if obstacle > best.value {
        best = OperatorValue {
            value: obstacle,
            branch: Branch::Obstacle,
        };
    }
    best
}

#[inline]
fn obstacle_branch(spec: &ProblemSpec, x: &[f64], r: f64) -> f64 {
    1.0 - (spec.shift - spec.obstacle(x)) * (-r).exp()
}

fn eval_with(spec: &ProblemSpec, jet: &Jet, term: GradientTerm) -> OperatorValue {
    let decay = (-jet.r).exp();
    let diffusion = (0..jet.x.len()).map(|i| {
        let p2 = jet.p[i] * jet.p[i];
        let curvature = match term {
            GradientTerm::Minus => jet.a.get(i, i) - p2,
            GradientTerm::Plus => jet.a.get(i, i) + p2,
        };
        -sigma_sq(jet.x[i]) * curvature - spec.cost[i] * decay
    });
    max_branch(diffusion, obstacle_branch(spec, &jet.x, jet.r))
}

/// The operator
/// `F(x,r,p,A) = max{ max_i{-x_i^2(1-x_i)^2 (A_ii - p_i^2) - c_i e^{-r}}, 1 - (b - g(x)) e^{-r} }`.
///
/// Only the diagonal of `A` is read.
pub fn hjb_operator(spec: &ProblemSpec, jet: &Jet) -> OperatorValue {
    eval_with(spec, jet, GradientTerm::Minus)
}

/// The exact image of the unit-diffusion value equation under
/// `V = b - e^u`: identical to [`hjb_operator`] except that the gradient
/// enters as `A_ii + p_i^2`, because `V'' = -e^u (u'' + u'^2)`.
///
/// For any smooth `V` and `u = log(b - V)`,
/// `log_value_operator(x, u, Du, D^2u) = (max branch of the V-equation) / (b - V)`
/// up to the positive per-branch factor, so the two share their zero set.
pub fn log_value_operator(spec: &ProblemSpec, jet: &Jet) -> OperatorValue {
    eval_with(spec, jet, GradientTerm::Plus)
}

/// Log barrier `Phi(x) = -sum_i (log x_i + log(1 - x_i))` with its gradient
/// and (diagonal) Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

pub fn barrier(x: &[f64]) -> Result<BarrierEval> {
    if let Some(index) = x.iter().position(|&xi| !(xi > 0.0 && xi < 1.0)) {
        return Err(Error::BarrierDomain {
            index,
            value: x[index],
        });
    }
    let value = -x.iter().map(|&xi| xi.ln() + (1.0 - xi).ln()).sum::<f64>();
    let gradient = x.iter().map(|&xi| -1.0 / xi + 1.0 / (1.0 - xi)).collect();
    let hessian_diag = x
        .iter()
        .map(|&xi| 1.0 / (xi * xi) + 1.0 / ((1.0 - xi) * (1.0 - xi)))
        .collect();
    Ok(BarrierEval {
        value,
        gradient,
        hessian_diag,
    })
}

/// Barrier value only, for bulk field construction.
pub fn barrier_value(x: &[f64]) -> Result<f64> {
    if let Some(index) = x.iter().position(|&xi| !(xi > 0.0 && xi < 1.0)) {
        return Err(Error::BarrierDomain {
            index,
            value: x[index],
        });
    }
    Ok(-x.iter().map(|&xi| xi.ln() + (1.0 - xi).ln()).sum::<f64>())
}

/// Correction picked up by branch `i` when the jet of `u` is expressed
/// through the jet of `u - eps * Phi`:
/// `-eps((1-x)^2 + x^2) + eps^2 (1-2x)^2 + 2 eps x(1-x)(2x-1) p`.
///
/// `eps` may be negative; `F_{-eps}` uses `barrier_perturbation(-eps, ..)`.
#[inline]
pub fn barrier_perturbation(eps: f64, xi: f64, pi: f64) -> f64 {
    let one_minus = 1.0 - xi;
    let skew = 1.0 - 2.0 * xi;
    -eps * (one_minus * one_minus + xi * xi)
        + eps * eps * skew * skew
        + 2.0 * eps * xi * one_minus * (2.0 * xi - 1.0) * pi
}

/// Barrier-modified operator with frozen value `jet.r`:
/// `max{ max_i{-x_i^2(1-x_i)^2 (A_ii - p_i^2) - c_i e^{-r} + f_eps(x_i, p_i)}, 1 - (b - g(x)) e^{-r} }`.
///
/// If `u` satisfies `F <= 0` then `u - eps Phi` satisfies this operator
/// `<= 0` with the frozen value taken from `u`.
pub fn barrier_operator(spec: &ProblemSpec, eps: f64, jet: &Jet) -> OperatorValue {
    let decay = (-jet.r).exp();
    let diffusion = (0..jet.x.len()).map(|i| {
        let xi = jet.x[i];
        let pi = jet.p[i];
        -sigma_sq(xi) * (jet.a.get(i, i) - pi * pi) - spec.cost[i] * decay
            + barrier_perturbation(eps, xi, pi)
    });
    max_branch(diffusion, obstacle_branch(spec, &jet.x, jet.r))
}

/// Constant `theta > 0` with `theta (r - r') <= F(x,r,p,A) - F(x,r',p,A)`
/// for all `r' <= r <= r_max`:
/// `theta = e^{-r_max} min{ min_i c_i, b - max g }`.
///
/// Every branch is `(positive coefficient) * (-e^{-r})` plus terms free of
/// `r`, and `e^{-r'} - e^{-r} >= e^{-r_max} (r - r')`.
pub fn monotonicity_constant(spec: &ProblemSpec, r_max: f64) -> f64 {
    let gap = spec.shift - spec.obstacle_max();
    (-r_max).exp() * spec.min_cost().min(gap)
}

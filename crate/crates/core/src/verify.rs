//! Desk-scale checks of the comparison machinery: barrier-modified fields,
//! the doubling-of-variables maximizer, discrete sub/supersolution residual
//! signs and the two-sided uniqueness experiment.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{FieldSpace, Grid, ValueField};
use crate::model::ProblemSpec;
use crate::operator::{
    barrier_value, hjb_operator, log_value_operator, monotonicity_constant, Jet, SymMatrix,
};
use crate::simulator::McEstimate;
use crate::solver::{complementarity_gap, lipschitz_estimate, Init, SolveOptions, ValueIteration};

/// Violating nodes listed in a report.
pub const MAX_LISTED_VIOLATIONS: usize = 100;

/// Default cap on node pairs visited by [`doubling_maximize`].
pub const DEFAULT_PAIR_BUDGET: u128 = 100_000_000;

/// Slack constant `C` in `alpha |x* - y*| <= 2 max Lip + C h alpha`.
pub const DOUBLING_SLACK: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeViolation {
    pub node: usize,
    pub x: Vec<f64>,
    pub value: f64,
}

/// Outcome of one verification experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub violation_count: usize,
    pub violations: Vec<NodeViolation>,
}

impl VerifyReport {
    pub fn new(name: impl Into<String>) -> Self {
        VerifyReport {
            name: name.into(),
            params: BTreeMap::new(),
            passed: true,
            metrics: BTreeMap::new(),
            violation_count: 0,
            violations: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn violate(&mut self, node: usize, x: Vec<f64>, value: f64) {
        self.passed = false;
        self.violation_count += 1;
        if self.violations.len() < MAX_LISTED_VIOLATIONS {
            self.violations.push(NodeViolation { node, x, value });
        }
    }

    /// Fails the report without attaching a node.
    pub fn fail(&mut self) {
        self.passed = false;
    }
}

/// `pi0 - tol <= V <= max g + tol` at every node.
pub fn check_value_bounds(spec: &ProblemSpec, field: &ValueField, tol: f64) -> VerifyReport {
    let lower = spec.pi0;
    let upper = spec.obstacle_max();
    let mut report = VerifyReport::new("value_bounds")
        .param("lower", lower)
        .param("upper", upper)
        .param("tol", tol);
    for (k, &v) in field.values.iter().enumerate() {
        if v < lower - tol || v > upper + tol {
            report.violate(k, field.grid.point(k), v);
        }
    }
    report.metric("min_value", field.min());
    report.metric("max_value", field.max());
    report
}

/// Nodewise complementarity gap of a converged value field within `10 tol`.
pub fn check_complementarity(
    spec: &ProblemSpec,
    field: &ValueField,
    solver_tol: f64,
) -> Result<VerifyReport> {
    let allowed = 10.0 * solver_tol;
    let gap = complementarity_gap(spec, field)?;
    let mut report = VerifyReport::new("complementarity").param("allowed", allowed);
    let mut worst = f64::NEG_INFINITY;
    for (k, &g) in gap.iter().enumerate() {
        worst = worst.max(g);
        if g > allowed {
            report.violate(k, field.grid.point(k), g);
        }
    }
    report.metric("max_gap", worst);
    Ok(report)
}

/// Monte-Carlo payoff of the extracted policy against the grid value at the
/// start belief: the estimate may not beat the value by more than
/// `3 stderr + 0.01 range`, nor fall short by more than `0.05 range`, with
/// `range = max pi_high - pi0`.
pub fn check_mc_against_value(
    spec: &ProblemSpec,
    value_at_x0: f64,
    mc: &McEstimate,
) -> VerifyReport {
    let range = spec.max_high() - spec.pi0;
    let excess = mc.mean - value_at_x0;
    let upper = 3.0 * mc.stderr + 0.01 * range;
    let shortfall_allowed = 0.05 * range;
    let mut report = VerifyReport::new("mc_cross_check")
        .param("paths", mc.paths as u64)
        .param("seed", mc.seed);
    report.metric("value_at_x0", value_at_x0);
    report.metric("mc_mean", mc.mean);
    report.metric("mc_stderr", mc.stderr);
    report.metric("excess", excess);
    report.metric("excess_allowed", upper);
    report.metric("shortfall_allowed", shortfall_allowed);
    report.metric("truncated_fraction", mc.truncated_fraction);
    if excess > upper || -excess > shortfall_allowed {
        report.fail();
    }
    report
}

/// Which way the barrier bends the base field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BarrierSide {
    /// `u - eps Phi`, pushed to `-inf` at the boundary.
    Lower,
    /// `v + eps Phi`, pushed to `+inf` at the boundary.
    Upper,
}

/// A log-space field modified by `-/+ eps Phi` at interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierField {
    pub base: ValueField,
    pub eps: f64,
    pub side: BarrierSide,
    /// Interior node indices, ascending.
    pub nodes: Vec<usize>,
    /// Modified values aligned with `nodes`.
    pub values: Vec<f64>,
}

impl BarrierField {
    fn build(base: &ValueField, eps: f64, side: BarrierSide) -> Result<Self> {
        let grid = &base.grid;
        let nodes = grid.interior_nodes();
        let sign = match side {
            BarrierSide::Lower => -1.0,
            BarrierSide::Upper => 1.0,
        };
        let values = nodes
            .iter()
            .map(|&k| {
                let u = base.values[k];
                if eps == 0.0 {
                    return Ok(u);
                }
                Ok(u + sign * eps * barrier_value(&grid.point(k))?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BarrierField {
            base: base.clone(),
            eps,
            side,
            nodes,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.base.grid
    }
}

/// `(u - eps Phi, v + eps Phi)` on the interior nodes of a shared grid.
pub fn make_barrier_fields(
    u: &ValueField,
    v: &ValueField,
    eps: f64,
) -> Result<(BarrierField, BarrierField)> {
    if u.grid != v.grid {
        return Err(Error::InvalidArgument("fields must share a grid".into()));
    }
    if u.space != FieldSpace::Log || v.space != FieldSpace::Log {
        return Err(Error::InvalidArgument(
            "barrier fields are built in log space".into(),
        ));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be nonnegative, got {eps}"
        )));
    }
    Ok((
        BarrierField::build(u, eps, BarrierSide::Lower)?,
        BarrierField::build(v, eps, BarrierSide::Upper)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingResult {
    pub alpha: f64,
    pub eps: f64,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// `max_{x,y} u_eps(x) - v_eps(y) - alpha/2 |x - y|^2` over interior nodes.
    pub max_value: f64,
    /// `max_x u_eps(x) - v_eps(x)`.
    pub diagonal_max: f64,
    /// `alpha |x* - y*|`.
    pub penalty_gradient: f64,
    pub lip_u: f64,
    pub lip_v: f64,
    /// `2 max{Lip u, Lip v} + C h alpha`.
    pub bound: f64,
    pub bound_holds: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Exhaustive search for the doubling maximizer over interior node pairs.
/// Ties resolve to the lexicographically smallest `(x, y)` node pair.
pub fn doubling_maximize(
    u_eps: &BarrierField,
    v_eps: &BarrierField,
    alpha: f64,
    pair_budget: u128,
) -> Result<DoublingResult> {
    if u_eps.grid() != v_eps.grid() {
        return Err(Error::InvalidArgument("fields must share a grid".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let grid = u_eps.grid();
    let m = u_eps.nodes.len();
    let pairs = (m as u128) * (m as u128);
    if pairs > pair_budget {
        return Err(Error::PairSearchTooLarge {
            pairs,
            budget: pair_budget,
        });
    }
    let points: Vec<Vec<f64>> = u_eps.nodes.iter().map(|&k| grid.point(k)).collect();

    // per x: best y, first occurrence wins; then max over x with the lower
    // x index winning ties
    let best = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, i, 0usize);
            for j in 0..m {
                let val = u_eps.values[i]
                    - v_eps.values[j]
                    - 0.5 * alpha * squared_distance(&points[i], &points[j]);
                if val > best.0 {
                    best = (val, i, j);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, usize::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            },
        );
    let (max_value, i, j) = best;
    let diagonal_max = (0..m)
        .map(|k| u_eps.values[k] - v_eps.values[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let penalty_gradient = alpha * squared_distance(&points[i], &points[j]).sqrt();
    let lip_u = lipschitz_estimate(&u_eps.base);
    let lip_v = lipschitz_estimate(&v_eps.base);
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let bound = 2.0 * lip_u.max(lip_v) + DOUBLING_SLACK * h * alpha;
    Ok(DoublingResult {
        alpha,
        eps: u_eps.eps,
        x_star: points[i].clone(),
        y_star: points[j].clone(),
        max_value,
        diagonal_max,
        penalty_gradient,
        lip_u,
        lip_v,
        bound,
        bound_holds: penalty_gradient <= bound,
    })
}

/// Which one-sided inequality a field is tested for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignSide {
    /// `F <= tol` at every checked node.
    Sub,
    /// `F >= -tol` at every checked node.
    Super,
}

/// Operator whose discrete sign is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorForm {
    /// `-s^2 (A - p^2)` diffusion branches, as used by the barrier calculus.
    Hjb,
    /// `-s^2 (A + p^2)`, the exact image of the value equation under
    /// `V = b - e^u`; its zero set on `to_u(V)` matches the solver's.
    LogValue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCheck {
    pub side: SignSide,
    pub tol: f64,
    /// Skip nodes where two or more obstacle pieces are within `h Lip(g)` of
    /// the maximum.
    pub skip_kinks: bool,
    pub form: OperatorForm,
}

impl SignCheck {
    pub fn new(side: SignSide, tol: f64) -> Self {
        SignCheck {
            side,
            tol,
            skip_kinks: false,
            form: OperatorForm::LogValue,
        }
    }
}

/// Residual-sign tolerance for `to_u` of a field solved to `solver_tol`:
/// the solver tolerance carried through `d/dV log(b - V) <= 1/(b - max g)`,
/// plus the `h^2 |p|^2` consistency error of central differences in log
/// space, with `|p| <= Lip(g) / (b - max g)`.
pub fn sign_tolerance(spec: &ProblemSpec, grid: &Grid, solver_tol: f64) -> f64 {
    let gap = spec.shift - spec.obstacle_max();
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let slope = spec.obstacle_lipschitz() / gap;
    10.0 * solver_tol / gap + h * h * slope * slope
}

/// Whether `x` is within `width` of a kink of the obstacle.
pub fn near_obstacle_kink(spec: &ProblemSpec, x: &[f64], width: f64) -> bool {
    let g = spec.obstacle(x);
    let pieces = (0..spec.dim())
        .map(|i| spec.branch_reward(i, x[i]))
        .chain(std::iter::once(spec.pi0));
    pieces.filter(|&p| g - p <= width).count() >= 2
}

/// Discrete operator value at every interior node, from central-difference
/// jets of a log-space field. Boundary nodes hold `None`.
pub fn discrete_operator(
    spec: &ProblemSpec,
    field: &ValueField,
    form: OperatorForm,
) -> Result<Vec<Option<f64>>> {
    if field.space != FieldSpace::Log {
        return Err(Error::InvalidArgument("expected a log-space field".into()));
    }
    let grid = &field.grid;
    let unit = spec.unit_diffusion();
    let d = grid.dim();
    Ok((0..grid.len())
        .map(|k| {
            if !grid.is_interior(k) {
                return None;
            }
            let u = &field.values;
            let mut p = vec![0.0; d];
            let mut diag = vec![0.0; d];
            for a in 0..d {
                let s = grid.strides()[a];
                let h = grid.spacing(a);
                p[a] = (u[k + s] - u[k - s]) / (2.0 * h);
                diag[a] = (u[k + s] - 2.0 * u[k] + u[k - s]) / (h * h);
            }
            let jet = Jet {
                x: grid.point(k),
                r: u[k],
                p,
                a: SymMatrix::from_diag(&diag),
            };
            Some(match form {
                OperatorForm::Hjb => hjb_operator(&unit, &jet).value,
                OperatorForm::LogValue => log_value_operator(&unit, &jet).value,
            })
        })
        .collect())
}

/// Discrete surrogate of the viscosity sub/supersolution test: the sign of
/// the operator on central-difference jets at interior nodes.
pub fn check_residual_sign(
    spec: &ProblemSpec,
    field: &ValueField,
    check: &SignCheck,
) -> Result<VerifyReport> {
    let values = discrete_operator(spec, field, check.form)?;
    let grid = &field.grid;
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    let kink_width = h * spec.obstacle_lipschitz();
    let mut report = VerifyReport::new(match check.side {
        SignSide::Sub => "residual_sign_sub",
        SignSide::Super => "residual_sign_super",
    })
    .param("tol", check.tol)
    .param("skip_kinks", check.skip_kinks);
    let mut extreme: f64 = match check.side {
        SignSide::Sub => f64::NEG_INFINITY,
        SignSide::Super => f64::INFINITY,
    };
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (k, value) in values.iter().enumerate() {
        let Some(f) = *value else { continue };
        let x = grid.point(k);
        if check.skip_kinks && near_obstacle_kink(spec, &x, kink_width) {
            skipped += 1;
            continue;
        }
        checked += 1;
        let bad = match check.side {
            SignSide::Sub => {
                extreme = extreme.max(f);
                f > check.tol
            }
            SignSide::Super => {
                extreme = extreme.min(f);
                f < -check.tol
            }
        };
        if bad {
            report.violate(k, x, f);
        }
    }
    report.metric("extreme_value", extreme);
    report.metric("checked_nodes", checked as f64);
    report.metric("skipped_kink_nodes", skipped as f64);
    Ok(report)
}

/// Nodewise `F(u + delta) - F(u)` against `theta delta`, `theta` taken with
/// `R = max u + delta`.
pub fn theta_sensitivity(
    spec: &ProblemSpec,
    field: &ValueField,
    delta: f64,
    form: OperatorForm,
) -> Result<VerifyReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("shift must be positive".into()));
    }
    let shifted = ValueField {
        values: field.values.iter().map(|u| u + delta).collect(),
        ..field.clone()
    };
    let base = discrete_operator(spec, field, form)?;
    let moved = discrete_operator(spec, &shifted, form)?;
    let theta = monotonicity_constant(&spec.unit_diffusion(), field.max() + delta);
    let mut report = VerifyReport::new("theta_sensitivity")
        .param("delta", delta)
        .param("theta", theta);
    let mut min_ratio = f64::INFINITY;
    for (k, (b, m)) in base.iter().zip(&moved).enumerate() {
        if let (Some(b), Some(m)) = (b, m) {
            let change = m - b;
            min_ratio = min_ratio.min(change / delta);
            if change < theta * delta {
                report.violate(k, field.grid.point(k), change);
            }
        }
    }
    report.metric("min_change_per_unit_shift", min_ratio);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOptions {
    pub solve: SolveOptions,
    /// Allowed final sup-distance as a multiple of `solve.tol`.
    pub distance_factor: f64,
}

impl ComparisonOptions {
    pub fn new(solve: SolveOptions) -> Self {
        ComparisonOptions {
            solve,
            distance_factor: 10.0,
        }
    }
}

/// Runs the solver from below (`g`) and from above (`max g`) in lockstep,
/// checking that the lower iterate never exceeds the upper one, that both
/// converge to the same field, and that the order flips under `u = log(b - V)`.
pub fn comparison_experiment(
    spec: &ProblemSpec,
    grid: &Grid,
    opts: &ComparisonOptions,
) -> Result<(VerifyReport, ValueField, ValueField)> {
    let mut lower = ValueIteration::new(spec, grid, Init::FromObstacle)?;
    let mut upper = ValueIteration::new(spec, grid, Init::FromUpper)?;
    let mut report = VerifyReport::new("comparison")
        .param("nodes", grid.len() as u64)
        .param("tol", opts.solve.tol);
    let mut sweeps = 0usize;
    let mut order_breaks = 0usize;
    let mut worst_break: f64 = 0.0;
    loop {
        for (k, (l, u)) in lower.values().iter().zip(upper.values()).enumerate() {
            if l > u {
                order_breaks += 1;
                worst_break = worst_break.max(l - u);
                report.violate(k, grid.point(k), l - u);
            }
        }
        let rl = lower.evaluate();
        let ru = upper.evaluate();
        if rl <= opts.solve.tol && ru <= opts.solve.tol {
            break;
        }
        if sweeps >= opts.solve.max_iters {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: rl.max(ru),
                tol: opts.solve.tol,
            });
        }
        lower.advance();
        upper.advance();
        sweeps += 1;
    }
    let below = lower.field();
    let above = upper.field();
    let distance = below.sup_distance(&above);
    let allowed = opts.distance_factor * opts.solve.tol;
    if distance > allowed {
        report.fail();
    }
    let u_below = below.to_log(spec)?;
    let u_above = above.to_log(spec)?;
    let mut log_order_breaks = 0usize;
    for (k, (a, b)) in u_below.values.iter().zip(&u_above.values).enumerate() {
        if a < b {
            log_order_breaks += 1;
            report.violate(k, grid.point(k), b - a);
        }
    }
    report.metric("sweeps", sweeps as f64);
    report.metric("sup_distance", distance);
    report.metric("allowed_distance", allowed);
    report.metric("order_breaks", order_breaks as f64);
    report.metric("worst_order_break", worst_break);
    report.metric("log_order_breaks", log_order_breaks as f64);
    Ok((report, below, above))
}

/// Doubling experiment over ladders of `alpha` and `eps` on two log fields.
pub fn doubling_ladder(
    u: &ValueField,
    v: &ValueField,
    alphas: &[f64],
    epsilons: &[f64],
    pair_budget: u128,
) -> Result<(VerifyReport, Vec<DoublingResult>)> {
    let mut report = VerifyReport::new("doubling")
        .param("alpha", alphas.to_vec())
        .param("eps", epsilons.to_vec());
    let mut results = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for &eps in epsilons {
        let (ue, ve) = make_barrier_fields(u, v, eps)?;
        for &alpha in alphas {
            let r = doubling_maximize(&ue, &ve, alpha, pair_budget)?;
            worst_ratio = worst_ratio.max(r.penalty_gradient / r.bound);
            if !r.bound_holds || r.max_value < r.diagonal_max {
                report.fail();
            }
            results.push(r);
        }
    }
    report.metric("runs", results.len() as f64);
    report.metric("worst_bound_ratio", worst_ratio);
    Ok((report, results))
}

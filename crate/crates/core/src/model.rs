//! Problem data for the optimal learning model.
//!
//! A decision maker faces `d` independent alternatives whose payoff is either
//! a low or a high level, plus a deterministic outside option. Learning about
//! alternative `i` costs `c_i` per unit time and moves the belief
//! `x_i = P(payoff_i is high)` along a degenerate diffusion. This module holds
//! the payoff specification, the terminal reward (the obstacle), the
//! exponential change of variables `V = b - e^u` and the belief SDE
//! coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SpecViolation};

/// Payoff levels, noise, costs and transform shift of a learning problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub pi_low: Vec<f64>,
    pub pi_high: Vec<f64>,
    /// Outside option.
    pub pi0: f64,
    pub sigma: Vec<f64>,
    /// Learning cost rates.
    pub cost: Vec<f64>,
    /// Shift `b` of the change of variables `V = b - e^u`.
    pub shift: f64,
}

impl ProblemSpec {
    /// Builds and validates a spec. When `shift` is `None` it defaults to one
    /// above the largest terminal reward, `max(max_i pi_high[i], pi0) + 1`.
    pub fn new(
        pi_low: Vec<f64>,
        pi_high: Vec<f64>,
        pi0: f64,
        sigma: Vec<f64>,
        cost: Vec<f64>,
        shift: Option<f64>,
    ) -> Result<Self, SpecViolation> {
        let shift = shift.unwrap_or_else(|| max_of(&pi_high).max(pi0) + 1.0);
        ProblemSpec {
            pi_low,
            pi_high,
            pi0,
            sigma,
            cost,
            shift,
        }
        .validate()
    }

    /// Returns `self` unchanged iff every standing assumption holds.
    pub fn validate(self) -> Result<Self, SpecViolation> {
        let d = self.pi_high.len();
        if d == 0 {
            return Err(SpecViolation::EmptyDimension);
        }
        for (field, len) in [
            ("pi_low", self.pi_low.len()),
            ("sigma", self.sigma.len()),
            ("cost", self.cost.len()),
        ] {
            if len != d {
                return Err(SpecViolation::DimensionMismatch {
                    field,
                    expected: d,
                    found: len,
                });
            }
        }
        for (field, values) in [
            ("pi_low", &self.pi_low),
            ("pi_high", &self.pi_high),
            ("sigma", &self.sigma),
            ("cost", &self.cost),
        ] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(SpecViolation::NonFinite { field });
            }
        }
        if !self.pi0.is_finite() {
            return Err(SpecViolation::NonFinite { field: "pi0" });
        }
        if !self.shift.is_finite() {
            return Err(SpecViolation::NonFinite { field: "shift" });
        }
        for i in 0..d {
            if !(self.pi_low[i] < self.pi_high[i]) {
                return Err(SpecViolation::PayoffOrder {
                    index: i,
                    low: self.pi_low[i],
                    high: self.pi_high[i],
                });
            }
        }
        if !(self.pi0 > 0.0) {
            return Err(SpecViolation::NonpositiveOutsideOption(self.pi0));
        }
        if let Some(i) = self.cost.iter().position(|&c| !(c > 0.0)) {
            return Err(SpecViolation::NonpositiveCost {
                index: i,
                value: self.cost[i],
            });
        }
        if let Some(i) = self.sigma.iter().position(|&s| !(s > 0.0)) {
            return Err(SpecViolation::NonpositiveNoise {
                index: i,
                value: self.sigma[i],
            });
        }
        // b - g(x) > 0 on the closed cube; g is largest at a corner
        let max_reward = self.obstacle_max();
        if !(self.shift > max_reward) {
            return Err(SpecViolation::ShiftTooSmall {
                shift: self.shift,
                max_reward,
            });
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.pi_high.len()
    }

    /// Payoff spread `pi_high[i] - pi_low[i]`.
    pub fn spread(&self, i: usize) -> f64 {
        self.pi_high[i] - self.pi_low[i]
    }

    pub fn max_high(&self) -> f64 {
        max_of(&self.pi_high)
    }

    pub fn min_cost(&self) -> f64 {
        self.cost.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Expected payoff of committing to alternative `i` at belief `xi`.
    #[inline]
    pub fn branch_reward(&self, i: usize, xi: f64) -> f64 {
        self.pi_high[i] * xi + self.pi_low[i] * (1.0 - xi)
    }

    /// Terminal reward `g(x)`: the best of the committed alternatives and the
    /// outside option.
    pub fn obstacle(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        x.iter()
            .enumerate()
            .map(|(i, &xi)| self.branch_reward(i, xi))
            .fold(self.pi0, f64::max)
    }

    /// Lipschitz constant of `g` with respect to the max-norm.
    pub fn obstacle_lipschitz(&self) -> f64 {
        (0..self.dim()).map(|i| self.spread(i)).fold(0.0, f64::max)
    }

    /// Largest value of `g` on the closed cube, attained at a corner.
    pub fn obstacle_max(&self) -> f64 {
        self.max_high().max(self.pi0)
    }

    /// `(pi0, max_i pi_high[i])`; every payoff, and hence the value, lies in
    /// this interval.
    pub fn value_bounds(&self) -> (f64, f64) {
        (self.pi0, self.max_high())
    }

    pub fn diffusion(&self) -> DiffusionCoeffs {
        DiffusionCoeffs {
            k: (0..self.dim())
                .map(|i| self.spread(i).powi(2) / (2.0 * self.sigma[i].powi(2)))
                .collect(),
        }
    }

    /// `u = log(b - V)`.
    pub fn to_u(&self, value: f64) -> Result<f64> {
        if !(value < self.shift) {
            return Err(Error::Domain {
                value,
                shift: self.shift,
            });
        }
        Ok((self.shift - value).ln())
    }

    /// `V = b - e^u`.
    pub fn from_u(&self, u: f64) -> f64 {
        self.shift - u.exp()
    }

    /// Drift and diffusion of the belief of alternative `i` at `x`, given
    /// the realized payoffs.
    pub fn sde_coeffs(&self, x: &[f64], pi: &PayoffRealization, i: usize) -> (f64, f64) {
        self.sde_coeffs_split(i, x[i], 1.0 - x[i], pi.pi[i])
    }

    /// Same as [`ProblemSpec::sde_coeffs`] with `1 - x_i` supplied
    /// separately, so callers holding log-odds can keep full relative
    /// precision near `x_i = 1`.
    pub fn sde_coeffs_split(&self, i: usize, xi: f64, one_minus_xi: f64, pi_i: f64) -> (f64, f64) {
        let spread = self.spread(i);
        let s2 = self.sigma[i] * self.sigma[i];
        let var = xi * one_minus_xi;
        // pi - pi_low (1 - x) - pi_high x, arranged so one of the two terms is
        // exactly zero for a realized level
        let surprise = (pi_i - self.pi_low[i]) * one_minus_xi + (pi_i - self.pi_high[i]) * xi;
        let drift = spread / s2 * var * surprise;
        let diffusion = spread / self.sigma[i] * var;
        (drift, diffusion)
    }

    /// An equivalent spec whose diffusion scales `k_i` are all one.
    ///
    /// Dividing branch `i` of the value equation by `k_i > 0` leaves the sign
    /// of every branch, and hence the solution set, unchanged; the rescaled
    /// branch reads `x_i^2 (1 - x_i)^2 V_ii - c_i / k_i`. The payoffs and the
    /// obstacle are untouched.
    pub fn unit_diffusion(&self) -> ProblemSpec {
        let k = self.diffusion().k;
        ProblemSpec {
            pi_low: self.pi_low.clone(),
            pi_high: self.pi_high.clone(),
            pi0: self.pi0,
            sigma: (0..self.dim())
                .map(|i| self.spread(i) / std::f64::consts::SQRT_2)
                .collect(),
            cost: self.cost.iter().zip(&k).map(|(c, k)| c / k).collect(),
            shift: self.shift,
        }
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Realized payoff per alternative; each entry is one of its two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRealization {
    pi: Vec<f64>,
    high: Vec<bool>,
}

impl PayoffRealization {
    pub fn from_flags(spec: &ProblemSpec, high: Vec<bool>) -> Result<Self> {
        if high.len() != spec.dim() {
            return Err(Error::InvalidArgument(format!(
                "realization has {} entries, spec has {} alternatives",
                high.len(),
                spec.dim()
            )));
        }
        let pi = high
            .iter()
            .enumerate()
            .map(|(i, &h)| if h { spec.pi_high[i] } else { spec.pi_low[i] })
            .collect();
        Ok(PayoffRealization { pi, high })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn is_high(&self, i: usize) -> bool {
        self.high[i]
    }
}

/// Curvature scales `k_i = (pi_high - pi_low)^2 / (2 sigma^2)` of the value
/// equation; branch `i` diffuses with `a_i(x) = k_i x_i^2 (1 - x_i)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCoeffs {
    pub k: Vec<f64>,
}

impl DiffusionCoeffs {
    #[inline]
    pub fn a(&self, i: usize, xi: f64) -> f64 {
        let s = xi * (1.0 - xi);
        self.k[i] * s * s
    }

    pub fn min_k(&self) -> f64 {
        self.k.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_k(&self) -> f64 {
        self.k.iter().copied().fold(0.0, f64::max)
    }
}

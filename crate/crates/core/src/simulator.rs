//! Monte-Carlo simulation of the belief dynamics under an allocation and
//! stopping policy.
//!
//! Beliefs are stored as log-odds `z = log(x / (1 - x))`, which keeps every
//! belief strictly inside `(0,1)` no matter how large a step is taken. One
//! alternative is learned per time step; its Euler-Maruyama step uses the Itô
//! image of the belief SDE,
//!
//! ```text
//! dz = [m / (x(1-x)) - (1-2x) s^2 / (2 x^2 (1-x)^2)] dt + s / (x(1-x)) dW
//! ```
//!
//! with `(m, s)` the drift and diffusion of `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Action, PolicyField};
use crate::model::{PayoffRealization, ProblemSpec};
use crate::reduce::mean_and_std;

/// Log-odds beyond which a coordinate is saturated.
pub const LOG_ODDS_CAP: f64 = 40.0;

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Belief in log-odds coordinates plus accumulated learning time.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub z: Vec<f64>,
    /// Belief recovered from `z`; coordinates never learned keep their
    /// initial value bit for bit.
    x: Vec<f64>,
    /// Learning steps taken per alternative; `T_i = steps[i] * dt`.
    pub steps: Vec<u64>,
    pub elapsed_steps: u64,
    pub saturations: u64,
}

impl BeliefState {
    pub fn new(x0: &[f64]) -> Result<Self> {
        if let Some(i) = x0.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "initial belief must be interior, coordinate {i} = {}",
                x0[i]
            )));
        }
        Ok(BeliefState {
            z: x0.iter().map(|&x| logit(x)).collect(),
            x: x0.to_vec(),
            steps: vec![0; x0.len()],
            elapsed_steps: 0,
            saturations: 0,
        })
    }

    pub fn belief(&self) -> &[f64] {
        &self.x
    }

    /// `(x_i, 1 - x_i)`, each with full relative precision.
    pub fn belief_pair(&self, i: usize) -> (f64, f64) {
        (logistic(self.z[i]), logistic(-self.z[i]))
    }

    pub fn learning_time(&self, dt: f64) -> Vec<f64> {
        self.steps.iter().map(|&s| s as f64 * dt).collect()
    }

    /// Log-odds drift and diffusion of alternative `i`.
    pub fn log_odds_coeffs(&self, spec: &ProblemSpec, i: usize, pi_i: f64) -> (f64, f64) {
        let (x, y) = self.belief_pair(i);
        let (m, s) = spec.sde_coeffs_split(i, x, y, pi_i);
        let var = x * y;
        let drift = m / var - (1.0 - 2.0 * x) * s * s / (2.0 * var * var);
        (drift, s / var)
    }

    /// Euler-Maruyama step of alternative `i` with Brownian increment `dw`.
    pub fn step_with_increment(
        &mut self,
        spec: &ProblemSpec,
        i: usize,
        dt: f64,
        pi: &PayoffRealization,
        dw: f64,
    ) {
        if self.z[i].abs() < LOG_ODDS_CAP {
            let (drift, diffusion) = self.log_odds_coeffs(spec, i, pi.pi()[i]);
            let z = self.z[i] + drift * dt + diffusion * dw;
            if z.abs() > LOG_ODDS_CAP {
                self.saturations += 1;
                self.z[i] = z.clamp(-LOG_ODDS_CAP, LOG_ODDS_CAP);
            } else {
                self.z[i] = z;
            }
            self.x[i] = logistic(self.z[i]);
        } else {
            self.saturations += 1;
        }
        self.steps[i] += 1;
        self.elapsed_steps += 1;
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        spec: &ProblemSpec,
        i: usize,
        dt: f64,
        pi: &PayoffRealization,
        rng: &mut R,
    ) {
        let n: f64 = rng.sample(StandardNormal);
        self.step_with_increment(spec, i, dt, pi, n * dt.sqrt());
    }
}

/// Draws independent payoffs with `P(pi_i = high) = x0_i`.
pub fn sample_prior<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    x0: &[f64],
    rng: &mut R,
) -> Result<PayoffRealization> {
    let flags = x0.iter().map(|&p| rng.random::<f64>() < p).collect();
    PayoffRealization::from_flags(spec, flags)
}

/// Source of actions for a simulated decision maker.
pub trait Policy: Sync {
    fn action(&self, x: &[f64]) -> Action;
}

impl Policy for PolicyField {
    /// Nearest grid node.
    fn action(&self, x: &[f64]) -> Action {
        self.action_at(x)
    }
}

/// The same action everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn action(&self, _x: &[f64]) -> Action {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_max: f64,
}

impl SimOptions {
    /// `dt = 1e-3 / max_i k_i`, `t_max = 50 / min_i k_i`.
    pub fn default_for(spec: &ProblemSpec) -> Self {
        let k = spec.diffusion();
        SimOptions {
            dt: 1e-3 / k.max_k(),
            t_max: 50.0 / k.min_k(),
        }
    }

    fn max_steps(&self) -> u64 {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as u64
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.t_max.is_finite() || self.t_max < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and finite t_max >= 0, got dt={} t_max={}",
                self.dt, self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    /// `terminal_reward - learning_cost`.
    pub payoff: f64,
    pub terminal_reward: f64,
    pub learning_cost: f64,
    pub stop_time: f64,
    pub learning_time: Vec<f64>,
    pub terminal_belief: Vec<f64>,
    pub truncated: bool,
    pub saturations: u64,
}

/// Simulates one decision maker from `x0` until the policy stops or
/// `t_max` is reached (forced stop, flagged as truncated).
pub fn run_episode<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    policy: &dyn Policy,
    x0: &[f64],
    opts: &SimOptions,
    rng: &mut R,
) -> Result<EpisodeResult> {
    opts.check()?;
    let pi = sample_prior(spec, x0, rng)?;
    let mut state = BeliefState::new(x0)?;
    let max_steps = opts.max_steps();
    let mut truncated = false;
    loop {
        match policy.action(state.belief()) {
            Action::Stop => break,
            Action::Continue(i) => {
                if state.elapsed_steps >= max_steps {
                    truncated = true;
                    break;
                }
                state.step(spec, i, opts.dt, &pi, rng);
            }
        }
    }
    let terminal_belief = state.belief().to_vec();
    let learning_time = state.learning_time(opts.dt);
    let learning_cost = learning_time
        .iter()
        .zip(&spec.cost)
        .map(|(t, c)| t * c)
        .sum::<f64>();
    let terminal_reward = spec.obstacle(&terminal_belief);
    Ok(EpisodeResult {
        payoff: terminal_reward - learning_cost,
        terminal_reward,
        learning_cost,
        stop_time: state.elapsed_steps as f64 * opts.dt,
        learning_time,
        terminal_belief,
        truncated,
        saturations: state.saturations,
    })
}

/// Independent stream for path `path` under base seed `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Runs `paths` episodes, path `j` driven by [`path_rng`]`(seed, j)`.
/// The returned order is the path order regardless of scheduling.
pub fn simulate_episodes(
    spec: &ProblemSpec,
    policy: &dyn Policy,
    x0: &[f64],
    paths: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|j| run_episode(spec, policy, x0, opts, &mut path_rng(seed, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
    pub truncated_fraction: f64,
    pub saturations: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let (mean, std) = mean_and_std(samples);
        McEstimate {
            mean,
            stderr: std / (samples.len() as f64).sqrt(),
            paths: samples.len(),
            seed,
            truncated_fraction: 0.0,
            saturations: 0,
        }
    }

    pub fn from_episodes(episodes: &[EpisodeResult], seed: u64) -> Self {
        let payoffs: Vec<f64> = episodes.iter().map(|e| e.payoff).collect();
        let truncated = episodes.iter().filter(|e| e.truncated).count();
        McEstimate {
            truncated_fraction: truncated as f64 / episodes.len().max(1) as f64,
            saturations: episodes.iter().map(|e| e.saturations).sum(),
            ..McEstimate::from_samples(&payoffs, seed)
        }
    }
}

/// Monte-Carlo estimate of the expected payoff of `policy` started at `x0`.
pub fn estimate_value_mc(
    spec: &ProblemSpec,
    policy: &dyn Policy,
    x0: &[f64],
    paths: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<(McEstimate, Vec<EpisodeResult>)> {
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let episodes = simulate_episodes(spec, policy, x0, paths, opts, seed)?;
    Ok((McEstimate::from_episodes(&episodes, seed), episodes))
}

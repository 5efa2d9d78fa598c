//! Seedable continuous-state, continuous-action toy environments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{rng_from_seed, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub s_next: Vec<f64>,
    pub r: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts an episode; the initial state is drawn from `rng`.
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;

    /// Advances one step. Out-of-bound actions are clipped and counted.
    fn step(&mut self, a: &[f64]) -> Result<StepResult>;

    /// Number of action components clipped so far.
    fn clip_count(&self) -> u64;

    /// Lower bound on any episode return.
    fn min_return(&self) -> f64;
}

/// Episode bookkeeping shared by the environments.
#[derive(Debug, Clone)]
struct Episode {
    state: Vec<f64>,
    t: usize,
    done: bool,
    clipped: u64,
}

impl Episode {
    fn new(dim: usize) -> Self {
        // no episode until reset
        Self { state: vec![0.0; dim], t: 0, done: true, clipped: 0 }
    }

    fn clip(&mut self, spec: &EnvSpec, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != spec.action_dim {
            return Err(Error::DimensionMismatch { expected: spec.action_dim, got: a.len() });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("action".into()));
        }
        Ok(a.iter()
            .zip(spec.action_low.iter().zip(&spec.action_high))
            .map(|(&x, (&lo, &hi))| {
                if x < lo || x > hi {
                    self.clipped += 1;
                }
                x.clamp(lo, hi)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditParams {
    /// Optimal action is `slope * s`.
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_bound")]
    pub action_bound: f64,
}

fn default_slope() -> f64 {
    0.5
}

fn default_bound() -> f64 {
    2.0
}

impl Default for BanditParams {
    fn default() -> Self {
        Self { slope: default_slope(), noise_sigma: 0.0, action_bound: default_bound() }
    }
}

/// One-step bandit: `s ~ U[-1, 1]`, reward `-(a - slope*s)^2 + noise`.
#[derive(Debug, Clone)]
pub struct ContinuousBandit {
    params: BanditParams,
    spec: EnvSpec,
    episode: Episode,
    noise: SimRng,
}

impl ContinuousBandit {
    pub fn new(params: BanditParams, seed: u64) -> Result<Self> {
        if !(params.noise_sigma >= 0.0) || !(params.action_bound > 0.0) {
            return Err(Error::InvalidArgument("bandit noise must be >= 0 and bound > 0".into()));
        }
        let b = params.action_bound;
        Ok(Self {
            params,
            spec: EnvSpec { state_dim: 1, action_dim: 1, action_low: vec![-b], action_high: vec![b], horizon: 1 },
            episode: Episode::new(1),
            noise: rng_from_seed(seed),
        })
    }

    pub fn optimal_action(&self, s: &[f64]) -> Vec<f64> {
        vec![self.params.slope * s[0]]
    }
}

impl Environment for ContinuousBandit {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.episode.state = vec![rng.random_range(-1.0..=1.0)];
        self.episode.t = 0;
        self.episode.done = false;
        self.episode.state.clone()
    }

    fn step(&mut self, a: &[f64]) -> Result<StepResult> {
        if self.episode.done {
            return Err(Error::EpisodeDone);
        }
        let a = self.episode.clip(&self.spec, a)?;
        let target = self.params.slope * self.episode.state[0];
        let mut r = -(a[0] - target).powi(2);
        if self.params.noise_sigma > 0.0 {
            let z: f64 = self.noise.sample(StandardNormal);
            r += self.params.noise_sigma * z;
        }
        self.episode.t += 1;
        self.episode.done = true;
        Ok(StepResult { s_next: self.episode.state.clone(), r, done: true })
    }

    fn clip_count(&self) -> u64 {
        self.episode.clipped
    }

    fn min_return(&self) -> f64 {
        if self.params.noise_sigma > 0.0 {
            return f64::NEG_INFINITY;
        }
        -(self.params.action_bound + self.params.slope.abs()).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerParams {
    #[serde(default = "default_segments")]
    pub n_segments: usize,
    #[serde(default = "default_gain")]
    pub kick_gain: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Episode ends once the offset norm falls below this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_bound")]
    pub action_bound: f64,
    /// Offsets are confined to `[-state_bound, state_bound]`.
    #[serde(default = "default_state_bound")]
    pub state_bound: f64,
}

fn default_segments() -> usize {
    1
}
fn default_gain() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    5
}
fn default_threshold() -> f64 {
    0.05
}
fn default_state_bound() -> f64 {
    3.0
}

impl Default for SteerParams {
    fn default() -> Self {
        Self {
            n_segments: default_segments(),
            kick_gain: default_gain(),
            noise_sigma: 0.0,
            horizon: default_horizon(),
            threshold: default_threshold(),
            action_bound: default_bound(),
            state_bound: default_state_bound(),
        }
    }
}

/// Linear beam-steering line: offsets at `n` monitors, one corrector kick per
/// segment, `s' = s + G a + noise`, reward `-|s'|^2`.
///
/// The response matrix is lower triangular: a kick at corrector `j` moves
/// every downstream monitor `i >= j` by `kick_gain * (i - j + 1)`.
#[derive(Debug, Clone)]
pub struct SteerLine {
    params: SteerParams,
    spec: EnvSpec,
    response: Vec<f64>,
    episode: Episode,
    noise: SimRng,
}

impl SteerLine {
    pub fn new(params: SteerParams, seed: u64) -> Result<Self> {
        if params.n_segments == 0 || params.horizon == 0 {
            return Err(Error::InvalidArgument("steering line needs >= 1 segment and horizon".into()));
        }
        if !(params.kick_gain != 0.0 && params.kick_gain.is_finite())
            || !(params.noise_sigma >= 0.0)
            || !(params.action_bound > 0.0)
            || !(params.state_bound > 0.0)
        {
            return Err(Error::InvalidArgument("invalid steering line parameters".into()));
        }
        let n = params.n_segments;
        let mut response = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                response[i * n + j] = params.kick_gain * (i - j + 1) as f64;
            }
        }
        let b = params.action_bound;
        Ok(Self {
            params,
            spec: EnvSpec {
                state_dim: n,
                action_dim: n,
                action_low: vec![-b; n],
                action_high: vec![b; n],
                horizon: params.horizon,
            },
            response,
            episode: Episode::new(n),
            noise: rng_from_seed(seed),
        })
    }

    /// Row-major response matrix `G`.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Kicks that null the offsets exactly: `a = -G^{-1} s` by forward
    /// substitution.
    pub fn exact_correction(&self, s: &[f64]) -> Vec<f64> {
        let n = self.params.n_segments;
        let mut a = vec![0.0; n];
        for i in 0..n {
            let partial: f64 = (0..i).map(|j| self.response[i * n + j] * a[j]).sum();
            a[i] = (-s[i] - partial) / self.response[i * n + i];
        }
        a
    }
}

impl Environment for SteerLine {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let n = self.params.n_segments;
        self.episode.state = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        self.episode.t = 0;
        self.episode.done = false;
        self.episode.state.clone()
    }

    fn step(&mut self, a: &[f64]) -> Result<StepResult> {
        if self.episode.done {
            return Err(Error::EpisodeDone);
        }
        let a = self.episode.clip(&self.spec, a)?;
        let n = self.params.n_segments;
        let bound = self.params.state_bound;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let kick: f64 = (0..n).map(|j| self.response[i * n + j] * a[j]).sum();
            let mut x = self.episode.state[i] + kick;
            if self.params.noise_sigma > 0.0 {
                let z: f64 = self.noise.sample(StandardNormal);
                x += self.params.noise_sigma * z;
            }
            next.push(x.clamp(-bound, bound));
        }
        let norm2: f64 = next.iter().map(|x| x * x).sum();
        self.episode.t += 1;
        let done = norm2.sqrt() < self.params.threshold || self.episode.t >= self.params.horizon;
        self.episode.done = done;
        self.episode.state = next.clone();
        Ok(StepResult { s_next: next, r: -norm2, done })
    }

    fn clip_count(&self) -> u64 {
        self.episode.clipped
    }

    fn min_return(&self) -> f64 {
        let n = self.params.n_segments as f64;
        -(self.params.horizon as f64) * n * self.params.state_bound.powi(2)
    }
}

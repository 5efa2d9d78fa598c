//! Free-energy Q-learning with sampling-based action selection.
//!
//! `Q(s, a) = -F(s, a)`. The maximization in the Q-learning target is
//! replaced by best-of-K: K actions are drawn from the model's own posterior
//! `p(a | s)` with the alternating Gibbs sampler and the one with the highest
//! Q is kept.
//!
//! Seed-split rule: every batched operation draws one `u64` base from the
//! caller's generator and gives item `i` the child generator
//! `(base, stream = i)` (see [`crate::exec`]), so results do not depend on
//! the execution mode.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{hash_text, Checkpoint};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::exec::{child_rng, map_indexed, map_slice, split_base, Execution, SimRng};
use crate::metrics::EpisodeMetrics;
use crate::model::{concat, Clamp, CsqbmModel, Wrt};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform draws with replacement over occupied slots.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreMode {
    /// One posterior draw at the exploration temperature.
    Gibbs,
    /// A prior draw with probability epsilon, otherwise best-of-K.
    EpsilonGreedy,
}

/// Linear schedule from `start` to `end` over `episodes` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub episodes: usize,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self { start: value, end: value, episodes: 0 }
    }

    pub fn at(&self, episode: usize) -> f64 {
        if self.episodes == 0 || episode >= self.episodes {
            return if self.episodes == 0 { self.start } else { self.end };
        }
        let t = episode as f64 / self.episodes as f64;
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Gibbs sweeps per sampled action.
    pub sweeps: usize,
    /// Best-of-K candidate count.
    pub candidates: usize,
    /// Candidate count for the bootstrap minimization; defaults to `candidates`.
    pub bootstrap_candidates: Option<usize>,
    /// Sweeps for bootstrap candidates; defaults to `sweeps`.
    pub bootstrap_sweeps: Option<usize>,
    pub explore_mode: ExploreMode,
    pub epsilon: Schedule,
    /// Sampling inverse temperature for Gibbs exploration; the model's own
    /// beta when absent.
    pub explore_beta: Option<Schedule>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Copy online weights to the target every this many environment steps.
    pub target_sync: usize,
    pub divergence_ceiling: f64,
    pub divergence_patience: usize,
    pub execution: Execution,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            gamma: 0.9,
            sweeps: 20,
            candidates: 8,
            bootstrap_candidates: None,
            bootstrap_sweeps: None,
            explore_mode: ExploreMode::EpsilonGreedy,
            epsilon: Schedule { start: 1.0, end: 0.0, episodes: 1000 },
            explore_beta: None,
            batch_size: 32,
            buffer_capacity: 10_000,
            warmup: 64,
            target_sync: 200,
            divergence_ceiling: 1e6,
            divergence_patience: 100,
            execution: Execution::Parallel,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("agent.alpha must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("agent.gamma must lie in (0, 1)");
        }
        if self.sweeps == 0 || self.bootstrap_sweeps == Some(0) {
            return bad("agent.sweeps must be at least 1");
        }
        if self.candidates == 0 || self.bootstrap_candidates == Some(0) {
            return bad("agent.candidates must be at least 1");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_sync == 0 {
            return bad("agent.batch_size, agent.buffer_capacity and agent.target_sync must be positive");
        }
        for e in [self.epsilon.start, self.epsilon.end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("agent.epsilon values must lie in [0, 1]");
            }
        }
        if let Some(b) = self.explore_beta {
            if !(b.start > 0.0 && b.end > 0.0) {
                return bad("agent.explore_beta values must be positive");
            }
        }
        if !(self.divergence_ceiling > 0.0) || self.divergence_patience == 0 {
            return bad("agent.divergence_ceiling and agent.divergence_patience must be positive");
        }
        Ok(())
    }
}

/// The chosen action, its Q value and the Q value of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredAction {
    pub action: Vec<f64>,
    pub q: f64,
    pub candidate_q: Vec<f64>,
}

/// Best-of-K over posterior samples.
pub fn select_action_scored(
    model: &CsqbmModel,
    s: &[f64],
    candidates: usize,
    sweeps: usize,
    exec: Execution,
    rng: &mut SimRng,
) -> Result<ScoredAction> {
    if candidates == 0 {
        return Err(Error::InvalidArgument("candidate count must be at least 1".into()));
    }
    let clamp = Clamp::leading(s, model.n())?;
    let base = split_base(rng);
    let scored = map_indexed(exec, candidates, base, |_, crng| -> Result<(Vec<f64>, f64)> {
        let a = model.gibbs_sample_action(&clamp, sweeps, crng)?;
        let q = model.q_value(s, &a)?;
        Ok((a, q))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = (0..scored.len())
        .max_by(|&i, &j| scored[i].1.total_cmp(&scored[j].1).then(j.cmp(&i)))
        .expect("at least one candidate");
    Ok(ScoredAction {
        action: scored[best].0.clone(),
        q: scored[best].1,
        candidate_q: scored.iter().map(|c| c.1).collect(),
    })
}

pub fn select_action(model: &CsqbmModel, s: &[f64], config: &AgentConfig, rng: &mut SimRng) -> Result<Vec<f64>> {
    Ok(select_action_scored(model, s, config.candidates, config.sweeps, config.execution, rng)?.action)
}

/// Draw from the prior marginal of the action coordinates.
pub fn prior_action(model: &CsqbmModel, state_dim: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let free: Vec<usize> = (state_dim..model.n()).collect();
    model.prior().theta().sample_units(&free, rng)
}

/// Exploration action for the given `episode` (drives the schedules).
pub fn explore_action(
    model: &CsqbmModel,
    s: &[f64],
    config: &AgentConfig,
    episode: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    match config.explore_mode {
        ExploreMode::Gibbs => {
            let beta = config.explore_beta.map(|b| b.at(episode)).unwrap_or(model.beta());
            let sampler = if beta == model.beta() { model.clone() } else { model.with_beta(beta)? };
            sampler.gibbs_sample_action(&Clamp::leading(s, model.n())?, config.sweeps, rng)
        }
        ExploreMode::EpsilonGreedy => {
            let eps = config.epsilon.at(episode);
            let random = if eps <= 0.0 {
                false
            } else if eps >= 1.0 {
                true
            } else {
                rng.random_bool(eps)
            };
            if random {
                prior_action(model, s.len(), rng)
            } else {
                select_action(model, s, config, rng)
            }
        }
    }
}

/// Per-transition terms of a TD step.
#[derive(Debug, Clone, PartialEq)]
pub struct TdTerm {
    pub free_energy: f64,
    /// `F_target(s', a*)`, zero when the bootstrap is skipped.
    pub bootstrap: f64,
    pub residual: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdUpdate {
    pub params: Vec<f64>,
    pub mean_abs_td: f64,
    pub grad_norm: f64,
    pub terms: Vec<TdTerm>,
}

/// Residuals `delta = F(s,a) + r - gamma F_target(s', a*)` with `a*` the
/// best-of-K action of the target snapshot. Terminal transitions and
/// `gamma == 0` skip the bootstrap entirely.
pub fn td_terms(
    model: &CsqbmModel,
    batch: &[Transition],
    target: &CsqbmModel,
    config: &AgentConfig,
    gamma: f64,
    rng: &mut SimRng,
) -> Result<Vec<TdTerm>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if target.num_parameters() != model.num_parameters() || target.n() != model.n() || target.m() != model.m() {
        return Err(Error::InvalidArgument("target snapshot shape differs from the online model".into()));
    }
    let k = config.bootstrap_candidates.unwrap_or(config.candidates);
    let sweeps = config.bootstrap_sweeps.unwrap_or(config.sweeps);
    let base = split_base(rng);
    let indexed: Vec<(usize, &Transition)> = batch.iter().enumerate().collect();
    let terms = map_slice(config.execution, &indexed, |&(i, t)| -> Result<TdTerm> {
        if t.s.len() + t.a.len() != model.n() || t.s_next.len() != t.s.len() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: t.s.len() + t.a.len() });
        }
        let g = model.grad_free_energy(&concat(&t.s, &t.a), Wrt::Weights)?;
        let bootstrap = if t.done || gamma == 0.0 {
            0.0
        } else {
            let mut crng = child_rng(base, i as u64);
            let best = select_action_scored(target, &t.s_next, k, sweeps, Execution::Sequential, &mut crng)?;
            -best.q
        };
        let residual = g.free_energy + t.r - gamma * bootstrap;
        if !residual.is_finite() {
            return Err(Error::NonFiniteResidual { index: i });
        }
        Ok(TdTerm { free_energy: g.free_energy, bootstrap, residual, grad: g.d_weights })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(terms)
}

/// One semi-gradient step `w <- w - alpha * mean_b(delta_b dF_b/dw)` on the
/// squared residual, restricted to trainable weights.
pub fn td_update(
    model: &CsqbmModel,
    batch: &[Transition],
    target: &CsqbmModel,
    config: &AgentConfig,
    rng: &mut SimRng,
) -> Result<TdUpdate> {
    let terms = td_terms(model, batch, target, config, config.gamma, rng)?;
    Ok(apply_terms(model, terms, config.alpha))
}

pub(crate) fn apply_terms(model: &CsqbmModel, terms: Vec<TdTerm>, alpha: f64) -> TdUpdate {
    let mask = model.trainable_mask();
    let count = terms.len() as f64;
    let mut direction = vec![0.0; mask.len()];
    for t in &terms {
        for (d, g) in direction.iter_mut().zip(&t.grad) {
            *d += t.residual * g;
        }
    }
    for (d, mk) in direction.iter_mut().zip(&mask) {
        *d *= mk / count;
    }
    let params: Vec<f64> = model.parameters().iter().zip(&direction).map(|(p, d)| p - alpha * d).collect();
    TdUpdate {
        params,
        mean_abs_td: terms.iter().map(|t| t.residual.abs()).sum::<f64>() / count,
        grad_norm: direction.iter().map(|d| d * d).sum::<f64>().sqrt(),
        terms,
    }
}

/// Run-level settings for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub episodes: usize,
    pub seed: u64,
    /// Checkpoint-hash cadence in environment steps.
    pub hash_interval: usize,
    /// Record real wall-clock time in metrics; off keeps metrics byte-stable.
    pub record_wall_time: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { episodes: 0, seed: 0, hash_interval: 100, record_wall_time: false }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CsqbmModel,
    pub metrics: Vec<EpisodeMetrics>,
    /// `(environment step, sha256 of the checkpoint)` every `hash_interval` steps.
    pub checkpoint_hashes: Vec<(u64, String)>,
    pub total_steps: u64,
    pub updates: u64,
    pub clipped_actions: u64,
}

/// Stream indices of the root-seed split used by [`train`].
pub mod streams {
    pub const RESET: u64 = 0;
    pub const ACTION: u64 = 1;
    pub const REPLAY: u64 = 2;
    pub const UPDATE: u64 = 3;
    pub const ENV: u64 = 4;
    pub const EVAL: u64 = 5;
}

/// Derived seed for an environment's internal noise generator.
pub fn env_seed(root: u64) -> u64 {
    child_rng(root, streams::ENV).random()
}

/// Q-learning loop. `on_episode` sees each metrics record as it is produced.
pub fn train(
    env: &mut dyn Environment,
    model: CsqbmModel,
    config: &AgentConfig,
    settings: &TrainSettings,
    mut on_episode: impl FnMut(&EpisodeMetrics, &CsqbmModel),
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = env.spec().clone();
    if spec.state_dim + spec.action_dim != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: spec.state_dim + spec.action_dim });
    }
    let mut reset_rng = child_rng(settings.seed, streams::RESET);
    let mut action_rng = child_rng(settings.seed, streams::ACTION);
    let mut replay_rng = child_rng(settings.seed, streams::REPLAY);
    let mut update_rng = child_rng(settings.seed, streams::UPDATE);

    let mut model = model;
    let mut target = model.clone();
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut metrics = Vec::with_capacity(settings.episodes);
    let mut hashes = Vec::new();
    let mut total_steps = 0u64;
    let mut updates = 0u64;
    let mut over_ceiling = 0usize;
    let warmup = config.warmup.max(1);

    for episode in 0..settings.episodes {
        let started = Instant::now();
        let mut s = env.reset(&mut reset_rng);
        let (mut ret, mut steps) = (0.0, 0usize);
        let (mut td_sum, mut gn_sum, mut n_upd) = (0.0, 0.0, 0usize);
        loop {
            let a = explore_action(&model, &s, config, episode, &mut action_rng)?;
            let step = env.step(&a)?;
            ret += step.r;
            steps += 1;
            total_steps += 1;
            buffer.push(Transition { s: s.clone(), a, r: step.r, s_next: step.s_next.clone(), done: step.done });

            if buffer.len() >= warmup {
                let batch = buffer.sample(config.batch_size, &mut replay_rng);
                let upd = td_update(&model, &batch, &target, config, &mut update_rng)?;
                model.set_parameters(&upd.params)?;
                updates += 1;
                td_sum += upd.mean_abs_td;
                gn_sum += upd.grad_norm;
                n_upd += 1;
                if upd.mean_abs_td > config.divergence_ceiling {
                    over_ceiling += 1;
                    if over_ceiling >= config.divergence_patience {
                        return Err(Error::Diverged {
                            ceiling: config.divergence_ceiling,
                            steps: config.divergence_patience,
                        });
                    }
                } else {
                    over_ceiling = 0;
                }
            }
            if total_steps.is_multiple_of(config.target_sync as u64) {
                target = model.clone();
            }
            if settings.hash_interval > 0 && total_steps.is_multiple_of(settings.hash_interval as u64) {
                hashes.push((total_steps, checkpoint_hash(&model)?));
            }
            if step.done {
                break;
            }
            s = step.s_next;
        }
        let schedule_value = match config.explore_mode {
            ExploreMode::EpsilonGreedy => config.epsilon.at(episode),
            ExploreMode::Gibbs => config.explore_beta.map(|b| b.at(episode)).unwrap_or(model.beta()),
        };
        let record = EpisodeMetrics {
            episode: episode as u64,
            steps: steps as u64,
            ret,
            mean_abs_td: if n_upd > 0 { td_sum / n_upd as f64 } else { 0.0 },
            grad_norm: if n_upd > 0 { gn_sum / n_upd as f64 } else { 0.0 },
            epsilon_or_beta: schedule_value,
            wall_ms: if settings.record_wall_time { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        };
        on_episode(&record, &model);
        metrics.push(record);
    }
    Ok(TrainOutcome {
        model,
        metrics,
        checkpoint_hashes: hashes,
        total_steps,
        updates,
        clipped_actions: env.clip_count(),
    })
}

/// sha256 over the serialized checkpoint of `model`.
pub fn checkpoint_hash(model: &CsqbmModel) -> Result<String> {
    Ok(hash_text(&Checkpoint::from_model(model, None).to_json()?))
}

/// Anything that maps a state to an action.
pub trait Policy {
    fn act(&self, s: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
}

/// Greedy best-of-K policy over a model snapshot.
pub struct GreedyPolicy<'a> {
    pub model: &'a CsqbmModel,
    pub config: &'a AgentConfig,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&self, s: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        select_action(self.model, s, self.config, rng)
    }
}

impl<F> Policy for F
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn act(&self, s: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub returns: Vec<f64>,
    /// Per-episode reward traces.
    pub traces: Vec<Vec<f64>>,
}

/// Rollouts of `policy`; the environment draws initial states from `rng`.
pub fn evaluate(policy: &dyn Policy, env: &mut dyn Environment, episodes: usize, rng: &mut SimRng) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be at least 1".into()));
    }
    let mut reset_rng = child_rng(split_base(rng), 0);
    let mut policy_rng = child_rng(split_base(rng), 1);
    let mut returns = Vec::with_capacity(episodes);
    let mut traces = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(&mut reset_rng);
        let mut trace = Vec::new();
        loop {
            let a = policy.act(&s, &mut policy_rng)?;
            let step = env.step(&a)?;
            trace.push(step.r);
            if step.done {
                break;
            }
            s = step.s_next;
        }
        returns.push(trace.iter().sum());
        traces.push(trace);
    }
    let (mean, var) = crate::stats::mean_var(&returns);
    Ok(EvalSummary { episodes, mean_return: mean, std_return: var.sqrt(), returns, traces })
}

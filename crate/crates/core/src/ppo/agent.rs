//! Agent, experience handling, the clipped-surrogate and critic updates, and
//! the training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{ForwardCache, Mlp};
use super::normalizer::RunningNorm;
use super::policy::{
    entropy_with_grad, greedy_action, log_prob, log_prob_with_grad, policy_sample, ActorOutput, SampledAction,
    LOG_STD_MAX, LOG_STD_MIN,
};
use super::{Optimizer, PpoConfig};
use crate::channel::Mount;
use crate::env::{ActionLayout, ActionVector, Environment};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "slipt-ppo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Initial scale of the last actor layer, so that early means sit near zero.
const ACTOR_OUTPUT_SCALE: f64 = 0.01;

/// Gaussian-plus-logits policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    /// Outputs the continuous means followed by the LED logits.
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        continuous: usize,
        logits: usize,
        hidden: usize,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let net = Mlp::new(&[obs_dim, hidden, hidden, continuous + logits], ACTOR_OUTPUT_SCALE, rng);
        Self { net, log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); continuous] }
    }

    fn split(&self, out: &[f64]) -> ActorOutput {
        let c = self.log_std.len();
        ActorOutput { mean: out[..c].to_vec(), log_std: self.log_std.clone(), logits: out[c..].to_vec() }
    }

    pub fn output(&self, obs: &[f64]) -> ActorOutput {
        self.split(&self.net.forward(obs))
    }

    fn output_cached(&self, obs: &[f64]) -> (ForwardCache, ActorOutput) {
        let cache = self.net.forward_cached(obs);
        let out = self.split(cache.output());
        (cache, out)
    }

    fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

/// One entry of the experience pool. States are stored already normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub continuous: Vec<f64>,
    pub selection_order: Vec<usize>,
    pub action: ActionVector,
    /// Log-probability under the policy that collected the sample.
    pub log_prob: f64,
    pub reward: f64,
    pub next_state: Option<Vec<f64>>,
}

/// One-step TD advantage `r + discount * V(s') - V(s)`; `r - V(s)` without a
/// successor.
pub fn advantage(transition: &Transition, critic: &Mlp, discount: f64) -> f64 {
    td_target(transition, critic, discount) - critic.forward(&transition.state)[0]
}

fn td_target(transition: &Transition, critic: &Mlp, discount: f64) -> f64 {
    match &transition.next_state {
        Some(s) => transition.reward + discount * critic.forward(s)[0],
        None => transition.reward,
    }
}

/// `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Whether the unclipped term is the one selected by the min, i.e. whether
/// the sample contributes a gradient.
fn unclipped_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    if advantage >= 0.0 {
        ratio <= 1.0 + eps
    } else {
        ratio >= 1.0 - eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorGrad {
    pub net: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Mean clipped surrogate over a minibatch plus the optional entropy bonus.
pub fn surrogate_objective(
    actor: &Actor,
    batch: &[Transition],
    advantages: &[f64],
    eps: f64,
    entropy_coef: f64,
    n_active: usize,
) -> f64 {
    let q = batch.len() as f64;
    batch
        .iter()
        .zip(advantages)
        .map(|(t, &adv)| {
            let out = actor.output(&t.state);
            let ratio = (log_prob(&out, &t.continuous, &t.selection_order) - t.log_prob).exp();
            let mut v = clipped_objective(ratio, adv, eps);
            if entropy_coef > 0.0 {
                v += entropy_coef * entropy_with_grad(&out, n_active < out.logits.len()).0;
            }
            v / q
        })
        .sum()
}

/// [`surrogate_objective`] and its gradient with respect to every actor
/// parameter.
pub fn surrogate_gradient(
    actor: &Actor,
    batch: &[Transition],
    advantages: &[f64],
    eps: f64,
    entropy_coef: f64,
    n_active: usize,
) -> (f64, ActorGrad) {
    let q = batch.len() as f64;
    let mut grad = ActorGrad { net: vec![0.0; actor.net.n_params()], log_std: vec![0.0; actor.log_std.len()] };
    let mut objective = 0.0;
    for (t, &adv) in batch.iter().zip(advantages) {
        let (cache, out) = actor.output_cached(&t.state);
        let (lp, g) = log_prob_with_grad(&out, &t.continuous, &t.selection_order);
        let ratio = (lp - t.log_prob).exp();
        objective += clipped_objective(ratio, adv, eps) / q;
        let scale = if unclipped_active(ratio, adv, eps) { adv * ratio / q } else { 0.0 };

        let mut d_out: Vec<f64> = g.mean.iter().chain(&g.logits).map(|v| v * scale).collect();
        for (gl, v) in grad.log_std.iter_mut().zip(&g.log_std) {
            *gl += v * scale;
        }
        if entropy_coef > 0.0 {
            let (h, hg) = entropy_with_grad(&out, n_active < out.logits.len());
            objective += entropy_coef * h / q;
            let c = out.mean.len();
            for (d, v) in d_out[c..].iter_mut().zip(&hg.logits) {
                *d += entropy_coef * v / q;
            }
            for (gl, v) in grad.log_std.iter_mut().zip(&hg.log_std) {
                *gl += entropy_coef * v / q;
            }
        }
        actor.net.backward(&cache, &d_out, &mut grad.net);
    }
    (objective, grad)
}

/// Mean squared error between the critic and the targets.
pub fn critic_loss(critic: &Mlp, batch: &[Transition], targets: &[f64]) -> f64 {
    let q = batch.len() as f64;
    batch.iter().zip(targets).map(|(t, y)| (critic.forward(&t.state)[0] - y).powi(2) / q).sum()
}

pub fn critic_gradient(critic: &Mlp, batch: &[Transition], targets: &[f64]) -> (f64, Vec<f64>) {
    let q = batch.len() as f64;
    let mut grad = vec![0.0; critic.n_params()];
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let cache = critic.forward_cached(&t.state);
        let err = cache.output()[0] - y;
        loss += err * err / q;
        critic.backward(&cache, &[2.0 * err / q], &mut grad);
    }
    (loss, grad)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    /// Move `params` along `direction` (already signed for ascent or descent).
    fn step(&mut self, params: &mut [f64], direction: &[f64], lr: f64) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = direction[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct OptimizerState {
    actor_net: AdamState,
    log_std: AdamState,
    critic: AdamState,
}

fn apply(optimizer: Optimizer, state: &mut AdamState, params: &mut [f64], direction: &[f64], lr: f64) {
    match optimizer {
        Optimizer::Sgd => params.iter_mut().zip(direction).for_each(|(p, g)| *p += lr * g),
        Optimizer::Adam => state.step(params, direction, lr),
    }
}

/// Diagnostics from one pass of updates over an experience pool.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_updates: usize,
    pub critic_updates: usize,
    /// Minibatch-averaged surrogate, measured before each step.
    pub surrogate: f64,
    pub critic_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: PpoConfig,
    pub layout: ActionLayout,
    pub n_active: usize,
    pub actor: Actor,
    pub critic: Mlp,
    pub normalizer: RunningNorm,
    #[serde(skip)]
    optimizer: OptimizerState,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format: &'a str,
    version: u32,
    code_version: &'a str,
    agent: &'a Agent,
}

#[derive(Deserialize)]
struct CheckpointIn {
    format: String,
    version: u32,
    agent: Agent,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        layout: ActionLayout,
        n_active: usize,
        config: &PpoConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let w = config.hidden_width;
        let actor = Actor::new(obs_dim, layout.continuous_dim(), layout.logit_dim(), w, config.init_log_std, rng);
        let critic = Mlp::new(&[obs_dim, w, w, 1], 1.0, rng);
        Ok(Self {
            config: config.clone(),
            layout,
            n_active,
            actor,
            critic,
            normalizer: RunningNorm::new(obs_dim),
            optimizer: OptimizerState::default(),
        })
    }

    pub fn observation_dim(&self) -> usize {
        self.critic.input_dim()
    }

    /// Deterministic action for a raw observation: Gaussian means and the
    /// highest logits.
    pub fn act_greedy(&self, observation: &[f64]) -> Vec<f64> {
        greedy_action(&self.actor.output(&self.normalizer.normalize(observation)))
    }

    /// Draw an action for an already normalized state.
    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> SampledAction {
        policy_sample(&self.actor.output(state), self.n_active, rng)
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.critic.forward(state)[0]
    }

    /// Advantages and critic targets for a pool, computed with the current
    /// (pre-update) critic. Generalized advantage estimation runs backwards
    /// over consecutive transitions and restarts wherever a successor is
    /// missing.
    pub fn advantages_and_targets(&self, pool: &[Transition]) -> (Vec<f64>, Vec<f64>) {
        let gamma = self.config.discount;
        let values: Vec<f64> = pool.iter().map(|t| self.value(&t.state)).collect();
        let deltas: Vec<f64> = pool.iter().zip(&values).map(|(t, v)| td_target(t, &self.critic, gamma) - v).collect();
        let adv = match self.config.gae_lambda {
            None => deltas,
            Some(l) => {
                let mut out = vec![0.0; pool.len()];
                let mut acc = 0.0;
                for i in (0..pool.len()).rev() {
                    if pool[i].next_state.is_none() || i + 1 == pool.len() {
                        acc = 0.0;
                    }
                    acc = deltas[i] + gamma * l * acc;
                    out[i] = acc;
                }
                out
            }
        };
        let targets = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
        (adv, targets)
    }

    /// Run the configured number of epochs of minibatch updates over `pool`.
    pub fn update<R: Rng + ?Sized>(&mut self, pool: &[Transition], rng: &mut R) -> Result<UpdateStats> {
        let mut stats = UpdateStats::default();
        if pool.is_empty() {
            return Ok(stats);
        }
        let (adv, targets) = self.advantages_and_targets(pool);
        let cfg = self.config.clone();
        let mut order: Vec<usize> = (0..pool.len()).collect();
        for _ in 0..cfg.update_epochs {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch) {
                let batch: Vec<Transition> = chunk.iter().map(|&i| pool[i].clone()).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();

                let (obj, g) = surrogate_gradient(&self.actor, &batch, &a, cfg.clip_epsilon, cfg.entropy_coef, self.n_active);
                if !g.net.iter().chain(&g.log_std).all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteGradient("actor"));
                }
                let (loss, cg) = critic_gradient(&self.critic, &batch, &y);
                if !cg.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteGradient("critic"));
                }

                let opt = &mut self.optimizer;
                apply(cfg.optimizer, &mut opt.actor_net, &mut self.actor.net.params, &g.net, cfg.actor_lr);
                apply(cfg.optimizer, &mut opt.log_std, &mut self.actor.log_std, &g.log_std, cfg.actor_lr);
                self.actor.clamp_log_std();
                stats.actor_updates += 1;

                let descent: Vec<f64> = cg.iter().map(|v| -v).collect();
                apply(cfg.optimizer, &mut opt.critic, &mut self.critic.params, &descent, cfg.critic_lr);
                stats.critic_updates += 1;

                stats.surrogate += obj;
                stats.critic_loss += loss;
            }
        }
        let n = stats.actor_updates.max(1) as f64;
        stats.surrogate /= n;
        stats.critic_loss /= n;
        Ok(stats)
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        let c = CheckpointOut {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            code_version: crate::CODE_VERSION,
            agent: self,
        };
        serde_json::to_string_pretty(&c).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let c: CheckpointIn = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", c.format, c.version)));
        }
        c.agent.config.validate()?;
        if c.agent.normalizer.dim() != c.agent.critic.input_dim()
            || c.agent.actor.net.input_dim() != c.agent.critic.input_dim()
            || c.agent.actor.net.output_dim() != c.agent.layout.continuous_dim() + c.agent.layout.logit_dim()
        {
            return Err(Error::Checkpoint("network shapes do not match the stored layout".into()));
        }
        Ok(c.agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub surrogate: f64,
    pub critic_loss: f64,
    /// Fraction of steps meeting every constraint.
    pub sat_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub actor_updates: usize,
    pub critic_updates: usize,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "episode,mean_reward,surrogate,critic_loss,sat_rate";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for e in &self.episodes {
            s.push_str(&format!("{},{},{},{},{}\n", e.episode, e.mean_reward, e.surrogate, e.critic_loss, e.sat_rate));
        }
        s
    }
}

/// Train from scratch on `env`. Every random choice (initial weights, action
/// noise, minibatch order) flows from `seed`; user placements come from the
/// environment's own stream.
pub fn train(env: &mut Environment, config: &PpoConfig, seed: u64) -> Result<(Agent, TrainingLog)> {
    train_with_observer(env, config, seed, |_| {})
}

/// [`train`] with a callback after every episode.
pub fn train_with_observer(
    env: &mut Environment,
    config: &PpoConfig,
    seed: u64,
    mut observer: impl FnMut(&EpisodeLog),
) -> Result<(Agent, TrainingLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Agent::new(env.observation_dim(), env.layout(), env.n_active(), config, &mut rng)?;
    let mut log = TrainingLog::default();
    let normalize = config.normalize_observations;

    for episode in 0..config.episodes {
        let mut obs = env.reset()?;
        if normalize {
            agent.normalizer.update(&obs);
        }
        let mut state = if normalize { agent.normalizer.normalize(&obs) } else { obs.clone() };
        let mut pool = Vec::with_capacity(env.episode_len());
        let mut satisfied = 0usize;
        let mut total_reward = 0.0;
        for _ in 0..env.episode_len() {
            let sample = agent.sample(&state, &mut rng);
            let step = env.step(&sample.raw)?;
            obs = step.next_state;
            if normalize {
                agent.normalizer.update(&obs);
            }
            let next = if normalize { agent.normalizer.normalize(&obs) } else { obs.clone() };
            total_reward += step.reward;
            satisfied += step.verdict.all() as usize;
            pool.push(Transition {
                state: std::mem::replace(&mut state, next.clone()),
                raw_action: sample.raw,
                continuous: sample.continuous,
                selection_order: sample.selection_order,
                action: step.action,
                log_prob: sample.log_prob,
                reward: step.reward,
                next_state: Some(next),
            });
        }
        let stats = agent.update(&pool, &mut rng)?;
        log.actor_updates += stats.actor_updates;
        log.critic_updates += stats.critic_updates;
        let n = pool.len().max(1) as f64;
        let row = EpisodeLog {
            episode,
            mean_reward: total_reward / n,
            surrogate: stats.surrogate,
            critic_loss: stats.critic_loss,
            sat_rate: satisfied as f64 / n,
        };
        observer(&row);
        log.episodes.push(row);
    }
    agent.normalizer.frozen = true;
    Ok((agent, log))
}

/// Averages of the greedy policy over a set of user placements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub mean_reward: f64,
    pub mean_rate: f64,
    /// Averaged over steps whose net power is positive.
    pub mean_ee: f64,
    /// Fraction of steps meeting every constraint.
    pub sat_rate: f64,
    pub steps: usize,
}

/// Roll the greedy policy for one episode on each placement and average the
/// per-step metrics.
pub fn evaluate_policy(agent: &Agent, env: &mut Environment, placements: &[Vec<Mount>]) -> Result<PolicySummary> {
    let (mut reward, mut rate, mut ee, mut sat) = (0.0, 0.0, 0.0, 0usize);
    let (mut steps, mut ee_steps) = (0usize, 0usize);
    for users in placements {
        let mut obs = env.reset_with_users(users.clone())?;
        for _ in 0..env.episode_len() {
            let step = env.step(&agent.act_greedy(&obs))?;
            reward += step.reward;
            rate += step.metrics.aggregate_rate;
            if let Some(e) = step.metrics.energy_efficiency {
                ee += e;
                ee_steps += 1;
            }
            sat += step.verdict.all() as usize;
            steps += 1;
            obs = step.next_state;
        }
    }
    let n = steps.max(1) as f64;
    Ok(PolicySummary {
        mean_reward: reward / n,
        mean_rate: rate / n,
        mean_ee: ee / ee_steps.max(1) as f64,
        sat_rate: sat as f64 / n,
        steps,
    })
}

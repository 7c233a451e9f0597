//! Actor-critic proximal policy optimization written from scratch.
//!
//! The actor maps a normalized observation to Gaussian means for the beam and
//! split coordinates plus one selection logit per LED; a learnable,
//! state-independent log standard deviation completes the Gaussian head. The
//! critic is a network of the same shape with a scalar output.

mod agent;
mod network;
mod normalizer;
mod policy;

pub use agent::{
    advantage, clipped_objective, critic_gradient, critic_loss, evaluate_policy, surrogate_gradient,
    surrogate_objective, train, train_with_observer, Actor, ActorGrad, Agent, EpisodeLog, PolicySummary, TrainingLog,
    Transition, UpdateStats, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use network::{ForwardCache, Mlp};
pub use normalizer::RunningNorm;
pub use policy::{
    entropy_with_grad, gaussian_log_density, greedy_action, greedy_selection, log_prob, log_prob_with_grad,
    policy_sample, ActorOutput, OutputGrad, SampledAction, LOG_STD_MAX, LOG_STD_MIN,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch stochastic gradient steps.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    /// Discount factor in the TD target.
    pub discount: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Transitions per minibatch.
    pub minibatch: usize,
    pub episodes: usize,
    /// Passes over each episode's experience pool.
    pub update_epochs: usize,
    pub hidden_width: usize,
    pub init_log_std: f64,
    pub optimizer: Optimizer,
    pub normalize_observations: bool,
    /// Generalized advantage estimation weight; one-step TD when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    /// Entropy bonus weight; zero disables it.
    pub entropy_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            discount: 0.9,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            minibatch: 64,
            episodes: 500,
            update_epochs: 1,
            hidden_width: 128,
            init_log_std: -0.5,
            optimizer: Optimizer::Sgd,
            normalize_observations: true,
            gae_lambda: None,
            entropy_coef: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return bad("discount must lie in [0, 1)");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.minibatch == 0 || self.update_epochs == 0 || self.hidden_width == 0 {
            return bad("minibatch, update_epochs and hidden_width must be at least 1");
        }
        if let Some(l) = self.gae_lambda {
            if !(0.0..=1.0).contains(&l) {
                return bad("gae_lambda must lie in [0, 1]");
            }
        }
        if !(self.entropy_coef >= 0.0) {
            return bad("entropy_coef must be non-negative");
        }
        Ok(())
    }
}

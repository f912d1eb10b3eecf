//! Multi-agent deep deterministic policy gradient: per-agent actors with
//! centralized critics, a shared FIFO replay buffer, Gaussian exploration
//! noise (added pre-sigmoid), and Polyak-averaged target networks.
//!
//! Critic input ordering is fixed as (all observations, then all actions);
//! checkpoints record this in their header.

use crate::neural::{adam_step, soft_update, Activation, AdamState, Gradients, Mlp};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub const CRITIC_INPUT_ORDER: &str = "observations-then-actions";

#[derive(Debug, Clone)]
pub struct Transition {
    pub joint_obs: Vec<Vec<f64>>,
    pub joint_actions: Vec<f64>,
    /// Stored pre-scaled by the configured reward scale.
    pub rewards: Vec<f64>,
    pub next_joint_obs: Vec<Vec<f64>>,
    pub terminal: bool,
}

#[derive(Debug, Error)]
pub enum MaddpgError {
    #[error("transition schema mismatch: {0}")]
    Schema(String),
    #[error("insufficient samples: buffer holds {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },
}

pub struct ReplayBuffer {
    capacity: usize,
    data: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { capacity, data: VecDeque::with_capacity(capacity) }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn sample_indices(
        &self,
        batch: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<usize>, MaddpgError> {
        if self.data.is_empty() || self.data.len() < batch.min(1) {
            return Err(MaddpgError::InsufficientSamples { have: self.data.len(), need: batch });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.data.len())).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaddpgConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub hidden_width: usize,
    /// Total fully connected layers in the actor (including output).
    pub actor_layers: usize,
    pub critic_layers: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Updates start once the buffer holds `warmup_batches * batch_size`.
    pub warmup_batches: usize,
    pub noise_sigma: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    /// Rewards are divided by this before storage.
    pub reward_scale: f64,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        MaddpgConfig {
            actor_lr: 1e-7,
            critic_lr: 1e-5,
            gamma: 0.99,
            tau: 5e-3,
            hidden_width: 128,
            actor_layers: 6,
            critic_layers: 4,
            buffer_capacity: 20_000,
            batch_size: 64,
            warmup_batches: 10,
            noise_sigma: 0.2,
            noise_decay: 0.9995,
            noise_floor: 0.01,
            reward_scale: 1e4,
        }
    }
}

pub struct Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub noise_sigma: f64,
}

pub struct Maddpg {
    pub agents: Vec<Agent>,
    pub buffer: ReplayBuffer,
    pub cfg: MaddpgConfig,
    obs_dim: usize,
}

fn layer_sizes(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut v = vec![input];
    for _ in 0..layers.saturating_sub(1) {
        v.push(hidden);
    }
    v.push(output);
    v
}

impl Maddpg {
    pub fn new(n_agents: usize, obs_dim: usize, cfg: MaddpgConfig, rng: &mut impl Rng) -> Self {
        let critic_input = n_agents * obs_dim + n_agents;
        let agents = (0..n_agents)
            .map(|_| {
                let actor = Mlp::new(
                    layer_sizes(obs_dim, cfg.hidden_width, cfg.actor_layers, 1),
                    Activation::Sigmoid,
                    rng,
                );
                let critic = Mlp::new(
                    layer_sizes(critic_input, cfg.hidden_width, cfg.critic_layers, 1),
                    Activation::Identity,
                    rng,
                );
                let actor_opt = AdamState::new(&actor);
                let critic_opt = AdamState::new(&critic);
                Agent {
                    actor_target: actor.clone(),
                    critic_target: critic.clone(),
                    actor,
                    critic,
                    actor_opt,
                    critic_opt,
                    noise_sigma: cfg.noise_sigma,
                }
            })
            .collect();
        Maddpg {
            agents,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            obs_dim,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Deterministic policy output, optionally perturbed by zero-mean
    /// Gaussian noise added before the sigmoid squash.
    pub fn select_action(
        &self,
        agent: usize,
        obs: &[f64],
        explore: bool,
        rng: &mut impl Rng,
    ) -> f64 {
        let a = &self.agents[agent];
        let mut logits = a.actor.forward_logits(obs);
        if explore && a.noise_sigma > 0.0 {
            logits[0] += a.noise_sigma * gauss(rng);
        }
        a.actor.output_from_logits(&logits)[0]
    }

    pub fn store(&mut self, mut t: Transition) -> Result<(), MaddpgError> {
        let n = self.num_agents();
        if t.joint_obs.len() != n
            || t.joint_actions.len() != n
            || t.rewards.len() != n
            || t.next_joint_obs.len() != n
        {
            return Err(MaddpgError::Schema(format!(
                "expected {n} agents, got obs {} actions {} rewards {}",
                t.joint_obs.len(),
                t.joint_actions.len(),
                t.rewards.len()
            )));
        }
        for o in t.joint_obs.iter().chain(t.next_joint_obs.iter()) {
            if o.len() != self.obs_dim {
                return Err(MaddpgError::Schema(format!(
                    "observation dim {} vs {}",
                    o.len(),
                    self.obs_dim
                )));
            }
        }
        for r in t.rewards.iter_mut() {
            *r /= self.cfg.reward_scale;
        }
        self.buffer.push(t);
        Ok(())
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.warmup_batches * self.cfg.batch_size
    }

    fn critic_input(joint_obs: &[Vec<f64>], joint_actions: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = joint_obs.iter().flatten().copied().collect();
        v.extend_from_slice(joint_actions);
        v
    }

    /// One Adam step on each agent's critic toward the TD targets built from
    /// the target actors/critics. Returns the pre-update batch MSE per agent.
    pub fn update_critic(&mut self, batch: &[usize]) -> Vec<f64> {
        assert!(!batch.is_empty());
        let n = self.num_agents();
        let gamma = self.cfg.gamma;
        let b = batch.len() as f64;

        // next joint actions from all target actors (shared across agents)
        let next_actions: Vec<Vec<f64>> = batch
            .iter()
            .map(|&k| {
                let t = self.buffer.get(k);
                (0..n)
                    .map(|j| {
                        self.agents[j]
                            .actor_target
                            .forward(&t.next_joint_obs[j])[0]
                    })
                    .collect()
            })
            .collect();

        let mut losses = Vec::with_capacity(n);
        for i in 0..n {
            let mut grads = self.agents[i].critic.zero_gradients();
            let mut mse = 0.0;
            for (bi, &k) in batch.iter().enumerate() {
                let t = self.buffer.get(k);
                let y = if t.terminal {
                    t.rewards[i]
                } else {
                    let xin = Self::critic_input(&t.next_joint_obs, &next_actions[bi]);
                    t.rewards[i] + gamma * self.agents[i].critic_target.forward(&xin)[0]
                };
                let xin = Self::critic_input(&t.joint_obs, &t.joint_actions);
                let cache = self.agents[i].critic.forward_cached(&xin);
                let q = cache.output()[0];
                mse += (q - y) * (q - y) / b;
                let (g, _) = self.agents[i].critic.backward(&cache, &[2.0 * (q - y) / b]);
                grads.add(&g);
            }
            let agent = &mut self.agents[i];
            adam_step(&mut agent.critic, &grads, &mut agent.critic_opt, self.cfg.critic_lr);
            losses.push(mse);
        }
        losses
    }

    /// Gradient of the mean critic value with respect to agent i's actor
    /// parameters, with other agents' actions taken from the batch.
    /// Returns (ascent gradient, mean Q).
    pub fn actor_objective_gradient(&self, i: usize, batch: &[usize]) -> (Gradients, f64) {
        let b = batch.len() as f64;
        let agent = &self.agents[i];
        let mut grads = agent.actor.zero_gradients();
        let mut mean_q = 0.0;
        let action_offset = self.num_agents() * self.obs_dim + i;
        for &k in batch {
            let t = self.buffer.get(k);
            let actor_cache = agent.actor.forward_cached(&t.joint_obs[i]);
            let a_i = actor_cache.output()[0];
            let mut actions = t.joint_actions.clone();
            actions[i] = a_i;
            let xin = Self::critic_input(&t.joint_obs, &actions);
            let critic_cache = agent.critic.forward_cached(&xin);
            mean_q += critic_cache.output()[0] / b;
            let (_, dq_dx) = agent.critic.backward(&critic_cache, &[1.0 / b]);
            let dq_da = dq_dx[action_offset];
            let (g, _) = agent.actor.backward(&actor_cache, &[dq_da]);
            grads.add(&g);
        }
        (grads, mean_q)
    }

    /// One ascent step on agent i's actor. Returns the pre-update mean Q.
    pub fn update_actor(&mut self, i: usize, batch: &[usize]) -> f64 {
        let (mut grads, mean_q) = self.actor_objective_gradient(i, batch);
        grads.scale(-1.0); // adam descends
        let agent = &mut self.agents[i];
        adam_step(&mut agent.actor, &grads, &mut agent.actor_opt, self.cfg.actor_lr);
        mean_q
    }

    /// Polyak-update every target network.
    pub fn end_of_step_maintenance(&mut self) {
        let tau = self.cfg.tau;
        for a in self.agents.iter_mut() {
            soft_update(&mut a.actor_target, &a.actor, tau);
            soft_update(&mut a.critic_target, &a.critic, tau);
        }
    }

    /// Multiplicative exploration decay, applied once per episode.
    pub fn decay_exploration(&mut self) {
        for a in self.agents.iter_mut() {
            a.noise_sigma = (a.noise_sigma * self.cfg.noise_decay).max(self.cfg.noise_floor);
        }
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Bit-exact serialized form of one agent (networks + optimizers + noise).
#[derive(Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub critic_input_order: String,
    pub actor: crate::neural::MlpBits,
    pub actor_target: crate::neural::MlpBits,
    pub critic: crate::neural::MlpBits,
    pub critic_target: crate::neural::MlpBits,
    pub actor_opt: crate::neural::AdamStateBits,
    pub critic_opt: crate::neural::AdamStateBits,
    pub noise_sigma: u64,
}

impl From<&Agent> for AgentCheckpoint {
    fn from(a: &Agent) -> Self {
        AgentCheckpoint {
            critic_input_order: CRITIC_INPUT_ORDER.to_string(),
            actor: (&a.actor).into(),
            actor_target: (&a.actor_target).into(),
            critic: (&a.critic).into(),
            critic_target: (&a.critic_target).into(),
            actor_opt: (&a.actor_opt).into(),
            critic_opt: (&a.critic_opt).into(),
            noise_sigma: a.noise_sigma.to_bits(),
        }
    }
}

impl From<&AgentCheckpoint> for Agent {
    fn from(c: &AgentCheckpoint) -> Self {
        Agent {
            actor: (&c.actor).into(),
            actor_target: (&c.actor_target).into(),
            critic: (&c.critic).into(),
            critic_target: (&c.critic_target).into(),
            actor_opt: (&c.actor_opt).into(),
            critic_opt: (&c.critic_opt).into(),
            noise_sigma: f64::from_bits(c.noise_sigma),
        }
    }
}

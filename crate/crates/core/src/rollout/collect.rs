use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridpix::{Env, Scenario, StepResult};
use crate::netcore::AgentNet;
use crate::seeding::{self, tags};
use crate::tdcore::SegmentBatch;
use crate::tensorgrad::{Graph, ParamStore, Real, Tensor};

use super::RolloutError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    #[default]
    Sample,
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub workers: usize,
    pub segment_length: usize,
    pub action_selection: ActionSelection,
    /// Step environments on the rayon pool; results are identical either way.
    pub parallel_envs: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            workers: 16,
            segment_length: 128,
            action_selection: ActionSelection::Sample,
            parallel_envs: true,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.workers == 0 || self.segment_length == 0 {
            return Err(RolloutError::Config(format!(
                "workers ({}) and segment_length ({}) must be at least 1",
                self.workers, self.segment_length
            )));
        }
        Ok(())
    }

    pub fn transitions_per_update(&self) -> usize {
        self.workers * self.segment_length
    }
}

/// A finished episode seen during collection.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub worker: usize,
    pub episode: u64,
    pub episode_return: f64,
    pub length: usize,
    pub terminated: bool,
}

/// One environment instance with its running episode state.
#[derive(Clone, Debug)]
pub struct WorkerSlot {
    pub index: usize,
    pub env: Env,
    pub obs: Tensor,
    /// `[H]` hidden state, zeroed at every reset.
    pub hidden: Option<Tensor>,
    pub episode_return: f64,
    pub episode_length: usize,
    pub episode: u64,
    pub rng: ChaCha8Rng,
    run_seed: u64,
}

impl WorkerSlot {
    pub fn new(scenario: &Scenario, net: &AgentNet, run_seed: u64, index: usize) -> Result<Self, RolloutError> {
        let mut env = Env::new(scenario.clone()).map_err(|source| RolloutError::Env { worker: index, source })?;
        let obs = env
            .reset(episode_seed(run_seed, index, 0))
            .map_err(|source| RolloutError::Env { worker: index, source })?;
        Ok(WorkerSlot {
            index,
            env,
            obs,
            hidden: net.config().gru_hidden.map(|h| Tensor::zeros(&[h])),
            episode_return: 0.0,
            episode_length: 0,
            episode: 0,
            rng: seeding::rng(&[run_seed, tags::ACTIONS, index as u64]),
            run_seed,
        })
    }

    fn start_next_episode(&mut self) -> Result<(), RolloutError> {
        self.episode += 1;
        self.obs = self
            .env
            .reset(episode_seed(self.run_seed, self.index, self.episode))
            .map_err(|source| RolloutError::Env { worker: self.index, source })?;
        if let Some(h) = &mut self.hidden {
            *h = Tensor::zeros(h.shape());
        }
        self.episode_return = 0.0;
        self.episode_length = 0;
        Ok(())
    }
}

/// Layout seed for episode `episode` of worker `worker`.
pub fn episode_seed(run_seed: u64, worker: usize, episode: u64) -> u64 {
    seeding::derive(&[run_seed, tags::EPISODE, worker as u64, episode])
}

pub fn init_workers(scenario: &Scenario, net: &AgentNet, run_seed: u64, count: usize) -> Result<Vec<WorkerSlot>, RolloutError> {
    (0..count).map(|i| WorkerSlot::new(scenario, net, run_seed, i)).collect()
}

/// Picks an action from one row of logits.
pub fn select_action(logits: &[Real], selection: ActionSelection, rng: &mut ChaCha8Rng) -> usize {
    match selection {
        ActionSelection::Argmax => {
            let mut best = 0;
            for (i, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = i;
                }
            }
            best
        }
        ActionSelection::Sample => {
            let max = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
            let weights: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i;
                }
                u -= w;
            }
            weights.len() - 1
        }
    }
}

/// Batched inference for one lock-step: logits `[B×|A|]` and the new hidden
/// state `[B×H]`.
pub fn policy_step(
    net: &AgentNet,
    params: &ParamStore,
    obs: Tensor,
    hidden: Option<Tensor>,
) -> Result<(Tensor, Option<Tensor>), RolloutError> {
    let mut g = Graph::inference();
    let p = g.bind(params);
    let o = g.constant(obs);
    let h = hidden.map(|h| g.constant(h));
    let (out, h2) = net.step(&mut g, &p, o, h)?;
    Ok((g.value(out.logits).clone(), h2.map(|v| g.value(v).clone())))
}

fn stack_hidden(workers: &[WorkerSlot]) -> Result<Option<Tensor>, RolloutError> {
    if workers[0].hidden.is_none() {
        return Ok(None);
    }
    let rows: Vec<&Tensor> = workers.iter().map(|w| w.hidden.as_ref().expect("uniform workers")).collect();
    Ok(Some(Tensor::stack(&rows)?))
}

fn stack_obs(workers: &[WorkerSlot]) -> Result<Tensor, RolloutError> {
    let rows: Vec<&Tensor> = workers.iter().map(|w| &w.obs).collect();
    Ok(Tensor::stack(&rows)?)
}

/// Runs every worker `n` lock-steps and returns the filled segment together
/// with the episodes that finished along the way.
pub fn collect_segment(
    net: &AgentNet,
    params: &ParamStore,
    workers: &mut [WorkerSlot],
    config: &RolloutConfig,
) -> Result<(SegmentBatch, Vec<EpisodeSummary>), RolloutError> {
    config.validate()?;
    if workers.len() != config.workers {
        return Err(RolloutError::Config(format!(
            "{} worker slots for a configuration of {}",
            workers.len(),
            config.workers
        )));
    }
    let (w, n) = (config.workers, config.segment_length);
    let obs_shape = net.obs_shape();
    let initial_hidden = stack_hidden(workers)?;
    let mut batch = SegmentBatch {
        workers: w,
        steps: n,
        obs_shape,
        observations: Vec::with_capacity(n),
        actions: Vec::with_capacity(w * n),
        rewards: Vec::with_capacity(w * n),
        terminated: Vec::with_capacity(w * n),
        truncated: Vec::with_capacity(w * n),
        final_obs: Vec::with_capacity(w * n),
        bootstrap_obs: Tensor::zeros(&[1]),
        initial_hidden,
    };
    let mut finished = Vec::new();

    for _ in 0..n {
        let obs = stack_obs(workers)?;
        let (logits, hidden) = policy_step(net, params, obs.clone(), stack_hidden(workers)?)?;
        batch.observations.push(obs);
        let actions: Vec<usize> = workers
            .iter_mut()
            .enumerate()
            .map(|(i, slot)| select_action(logits.row(i), config.action_selection, &mut slot.rng))
            .collect();

        let step = |(slot, &a): (&mut WorkerSlot, &usize)| -> Result<StepResult, RolloutError> {
            slot.env.step(a).map_err(|source| RolloutError::Env { worker: slot.index, source })
        };
        let results: Vec<StepResult> = if config.parallel_envs {
            workers.par_iter_mut().zip(actions.par_iter()).map(step).collect::<Result<_, _>>()?
        } else {
            workers.iter_mut().zip(actions.iter()).map(step).collect::<Result<_, _>>()?
        };

        for (i, (slot, r)) in workers.iter_mut().zip(results).enumerate() {
            batch.actions.push(actions[i]);
            batch.rewards.push(r.reward);
            batch.terminated.push(r.terminated);
            batch.truncated.push(r.truncated);
            slot.episode_return += r.reward;
            slot.episode_length += 1;
            if let (Some(h), Some(all)) = (&mut slot.hidden, &hidden) {
                *h = Tensor::new(h.shape(), all.row(i).to_vec())?;
            }
            if r.terminated || r.truncated {
                batch.final_obs.push(r.truncated.then(|| r.obs.clone()));
                finished.push(EpisodeSummary {
                    worker: slot.index,
                    episode: slot.episode,
                    episode_return: slot.episode_return,
                    length: slot.episode_length,
                    terminated: r.terminated,
                });
                slot.start_next_episode()?;
            } else {
                batch.final_obs.push(None);
                slot.obs = r.obs;
            }
        }
    }
    batch.bootstrap_obs = stack_obs(workers)?;
    Ok((batch, finished))
}

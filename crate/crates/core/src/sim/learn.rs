//! Sequential batch learning with adaptive exploration.
//!
//! Each round collects a batch under the current behavior policies, refits
//! controllers on all data gathered so far, evaluates the point estimates and
//! rebuilds the behavior policies from the new exploitation weights.

use super::trial::EVAL_SEED_MASK;
use super::{collect_episodes, evaluate_policy, SimConfig};
use crate::error::{Error, Result};
use crate::explore::{update_exploration, BehaviorPolicy};
use crate::fsc::JointFsc;
use crate::inference::{initial_posterior, run_vb_from, Episode, EpisodeSet, VbConfig};
use crate::model::DecPomdpModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Steps per training episode.
    pub horizon: usize,
    pub vb: VbConfig,
    /// Pseudo-count favoring exploration.
    pub u1: f64,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub seed: u64,
    /// Start each round from the previous posterior instead of a fresh one.
    pub warm_start: bool,
}

impl LearnConfig {
    pub fn new(iterations: usize, vb: VbConfig) -> Self {
        Self {
            iterations,
            batch_size: 50,
            horizon: 50,
            vb,
            u1: 100.0,
            eval_episodes: 100,
            eval_horizon: 1000,
            seed: 0,
            warm_start: false,
        }
    }
}

/// One point on the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub dataset_size: usize,
    pub test_value: f64,
    pub std_err: f64,
    pub mean_nodes: f64,
    /// Exploration rate of the batch collected in this round.
    pub exploration_rate: f64,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub curve: Vec<CurvePoint>,
    pub controllers: JointFsc,
    pub episodes: EpisodeSet,
}

pub fn sequential_batch_learn(model: &DecPomdpModel, cfg: &LearnConfig) -> Result<LearnOutcome> {
    if cfg.iterations == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "need at least one round and one episode per batch".into(),
        ));
    }
    let dims: Vec<(usize, usize)> = (0..model.num_agents())
        .map(|n| (model.num_actions(n), model.num_observations(n)))
        .collect();
    let mut behaviors: Vec<BehaviorPolicy> = dims.iter().map(|&(a, o)| BehaviorPolicy::uniform(a, o)).collect();
    let mut data: Vec<Episode> = Vec::new();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut controllers = None;
    let mut posterior = None;
    for iter in 1..=cfg.iterations {
        let sim = SimConfig {
            episodes: cfg.batch_size,
            horizon: cfg.horizon,
            seed: cfg.seed,
            first_episode: data.len() as u64,
        };
        let (batch, stats) = collect_episodes(model, &behaviors, &sim)?;
        data.extend(batch.episodes);
        let set = EpisodeSet::new(batch.agents, batch.gamma, batch.r_min, batch.r_max, data.clone())?;
        let start = match posterior.take() {
            Some(p) if cfg.warm_start => p,
            _ => initial_posterior(&set, &dims, &cfg.vb)?,
        };
        let out = run_vb_from(&set, start, &cfg.vb)?;
        let joint = JointFsc {
            agents: out.posterior.point_estimates(),
        };
        let eval = evaluate_policy(
            model,
            &joint,
            cfg.eval_episodes,
            cfg.eval_horizon,
            cfg.seed ^ EVAL_SEED_MASK,
        )?;
        let mean_nodes = out.sizes.iter().sum::<usize>() as f64 / out.sizes.len() as f64;
        log::info!(
            "round {iter}: {} episodes, value {:.3} ± {:.3}, nodes {:?}",
            set.len(),
            eval.mean,
            eval.std_err,
            out.sizes
        );
        curve.push(CurvePoint {
            iter,
            dataset_size: set.len(),
            test_value: eval.mean,
            std_err: eval.std_err,
            mean_nodes,
            exploration_rate: stats.exploration_rate,
        });
        let exploit = update_exploration(&out.counts, set.len(), cfg.u1)?;
        behaviors = joint
            .agents
            .iter()
            .cloned()
            .zip(exploit)
            .map(|(fsc, w)| BehaviorPolicy::new(fsc, w))
            .collect::<Result<_>>()?;
        controllers = Some(joint);
        posterior = Some(out.posterior);
    }
    let (r_min, r_max) = model.reward_range();
    Ok(LearnOutcome {
        curve,
        controllers: controllers.expect("at least one round"),
        episodes: EpisodeSet::new(model.num_agents(), model.discount, r_min, r_max, data)?,
    })
}

//! Simulation: episode collection, policy evaluation and sequential learning.
//!
//! Every episode draws from its own ChaCha stream keyed by the run seed and
//! the episode index, so results do not depend on scheduling.

mod learn;
mod trial;

pub use learn::{sequential_batch_learn, CurvePoint, LearnConfig, LearnOutcome};
pub use trial::{offline_trial, semi_random_behavior, TrialConfig, TrialOutcome};

use crate::error::{Error, Result};
use crate::explore::BehaviorPolicy;
use crate::fsc::{JointFsc, NodeFilter};
use crate::inference::{Episode, EpisodeSet, Step};
use crate::model::DecPomdpModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Index drawn from a probability vector.
pub(crate) fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Index of the first episode; offsets ids and random streams.
    pub first_episode: u64,
}

impl SimConfig {
    pub fn new(episodes: usize, horizon: usize, seed: u64) -> Self {
        Self {
            episodes,
            horizon,
            seed,
            first_episode: 0,
        }
    }
}

/// Summary of a collection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectStats {
    /// Average probability of an exploratory action choice.
    pub exploration_rate: f64,
}

fn check_behaviors(model: &DecPomdpModel, behaviors: &[BehaviorPolicy]) -> Result<()> {
    if behaviors.len() != model.num_agents() {
        return Err(Error::Shape(format!(
            "{} behavior policies for {} agents",
            behaviors.len(),
            model.num_agents()
        )));
    }
    for (n, b) in behaviors.iter().enumerate() {
        let f = b.as_fsc();
        if f.actions != model.num_actions(n) || f.observations != model.num_observations(n) {
            return Err(Error::Shape(format!(
                "behavior {n} does not match the model dimensions"
            )));
        }
    }
    Ok(())
}

fn run_episode(
    model: &DecPomdpModel,
    behaviors: &[BehaviorPolicy],
    horizon: usize,
    id: u64,
    seed: u64,
) -> (Episode, f64) {
    let mut rng = stream_rng(seed, id);
    let n = model.num_agents();
    let mut filters: Vec<NodeFilter> = behaviors.iter().map(|b| NodeFilter::new(b.as_fsc())).collect();
    let mut state = sample(&model.initial_belief, &mut rng);
    let mut steps = Vec::with_capacity(horizon);
    let mut explore = 0.0;
    for t in 0..horizon {
        let mut actions = Vec::with_capacity(n);
        let mut behavior = Vec::with_capacity(n);
        for (f, b) in filters.iter_mut().zip(behaviors) {
            let pred = f.predictive();
            let mass: f64 = pred.iter().sum();
            explore += pred.iter().zip(&b.exploit).map(|(p, e)| p * (1.0 - e)).sum::<f64>() / mass;
            let probs = f.action_probs();
            let a = sample(&probs, &mut rng);
            actions.push(a);
            behavior.push(f.observe_action(a).expect("sampled action has positive probability"));
        }
        let ja = model.joint_action_index(&actions);
        let reward = model.reward(state, ja);
        let next_obs = if t + 1 < horizon {
            let next = sample(model.transition_row(state, ja), &mut rng);
            let jo = sample(model.observation_row(ja, next), &mut rng);
            let obs = model.split_joint_observation(jo);
            for (f, &o) in filters.iter_mut().zip(&obs) {
                f.observe(o).expect("observation in range");
            }
            state = next;
            Some(obs)
        } else {
            None
        };
        steps.push(Step {
            actions,
            reward,
            behavior,
            next_obs,
        });
    }
    let rate = explore / (horizon * n).max(1) as f64;
    (Episode { id, steps }, rate)
}

/// Simulates episodes under per-agent behavior policies.
pub fn collect_episodes(
    model: &DecPomdpModel,
    behaviors: &[BehaviorPolicy],
    cfg: &SimConfig,
) -> Result<(EpisodeSet, CollectStats)> {
    check_behaviors(model, behaviors)?;
    if cfg.horizon == 0 || cfg.episodes == 0 {
        return Err(Error::InvalidConfig(
            "need a positive number of episodes and steps".into(),
        ));
    }
    if model.discount >= 1.0 {
        return Err(Error::InvalidModel("episode data needs a discount below one".into()));
    }
    let runs: Vec<(Episode, f64)> = (0..cfg.episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(model, behaviors, cfg.horizon, cfg.first_episode + i, cfg.seed))
        .collect();
    let rate = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
    let (r_min, r_max) = model.reward_range();
    let set = EpisodeSet::new(
        model.num_agents(),
        model.discount,
        r_min,
        r_max,
        runs.into_iter().map(|r| r.0).collect(),
    )?;
    Ok((set, CollectStats { exploration_rate: rate }))
}

/// Mean discounted return and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo value of a joint controller, sampling controller nodes directly.
pub fn evaluate_policy(
    model: &DecPomdpModel,
    joint: &JointFsc,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Evaluation> {
    let n = model.num_agents();
    if joint.agents.len() != n {
        return Err(Error::Shape(format!(
            "{} controllers for {n} agents",
            joint.agents.len()
        )));
    }
    for (i, f) in joint.agents.iter().enumerate() {
        if f.actions != model.num_actions(i) || f.observations != model.num_observations(i) {
            return Err(Error::Shape(format!(
                "controller {i} does not match the model dimensions"
            )));
        }
    }
    if episodes == 0 {
        return Err(Error::InvalidConfig("need at least one evaluation episode".into()));
    }
    let returns: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let mut state = sample(&model.initial_belief, &mut rng);
            let mut nodes: Vec<usize> = joint.agents.iter().map(|f| sample(&f.initial, &mut rng)).collect();
            let mut actions = vec![0; n];
            let mut total = 0.0;
            let mut g = 1.0;
            for _ in 0..horizon {
                for (i, f) in joint.agents.iter().enumerate() {
                    let row = &f.policy[nodes[i] * f.actions..(nodes[i] + 1) * f.actions];
                    actions[i] = sample(row, &mut rng);
                }
                let ja = model.joint_action_index(&actions);
                total += g * model.reward(state, ja);
                g *= model.discount;
                let next = sample(model.transition_row(state, ja), &mut rng);
                let jo = sample(model.observation_row(ja, next), &mut rng);
                let obs = model.split_joint_observation(jo);
                for (i, f) in joint.agents.iter().enumerate() {
                    nodes[i] = sample(f.transition_row(nodes[i], actions[i], obs[i]), &mut rng);
                }
                state = next;
            }
            total
        })
        .collect();
    let k = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / k;
    let var = if returns.len() > 1 {
        returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(Evaluation {
        mean,
        std_err: (var / k).sqrt(),
    })
}

//! Exploration policies for sequential data collection.
//!
//! A behavior policy pairs the current controller with a per-node switch:
//! at node `z` the agent follows the controller with probability `φ_0(z)`
//! and acts uniformly at random otherwise. The switch shares the controller's
//! nodes, so the behavior is itself a controller whose action rows are
//! `φ_0 π + (1 - φ_0) / |A|`, and its history-dependent action probabilities
//! come from filtering nodes under those mixed rows.

use crate::error::{Error, Result};
use crate::fsc::{action_prob, FscParams, FscTables, LocalHistory};
use crate::inference::AgentCounts;

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    pub primary: FscParams,
    /// Probability of following `primary` at each node.
    pub exploit: Vec<f64>,
    mixed: FscParams,
}

impl BehaviorPolicy {
    pub fn new(primary: FscParams, exploit: Vec<f64>) -> Result<Self> {
        if exploit.len() != primary.nodes {
            return Err(Error::Shape(format!(
                "{} exploitation weights for {} nodes",
                exploit.len(),
                primary.nodes
            )));
        }
        if let Some(p) = exploit.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidController(format!(
                "exploitation weight {p} outside [0, 1]"
            )));
        }
        let mut tables = FscTables::clone(&primary);
        let a = tables.actions;
        for (z, row) in tables.policy.chunks_mut(a).enumerate() {
            let w = exploit[z];
            for p in row.iter_mut() {
                *p = w * *p + (1.0 - w) / a as f64;
            }
        }
        let mixed = FscParams::new(tables)?;
        Ok(Self {
            primary,
            exploit,
            mixed,
        })
    }

    /// Uniformly random actions.
    pub fn uniform(actions: usize, observations: usize) -> Self {
        Self::new(FscParams::uniform(actions, observations), vec![0.0]).expect("valid uniform policy")
    }

    /// Follows `expert` with probability `epsilon` at every step.
    pub fn expert_mix(expert: FscParams, epsilon: f64) -> Result<Self> {
        let n = expert.nodes;
        Self::new(expert, vec![epsilon; n])
    }

    /// The equivalent single controller.
    pub fn as_fsc(&self) -> &FscParams {
        &self.mixed
    }

    /// Probability of exploring at each node.
    pub fn explore_probs(&self) -> Vec<f64> {
        self.exploit.iter().map(|p| 1.0 - p).collect()
    }
}

/// `p(a | h)` under the behavior policy.
pub fn behavior_action_prob(policy: &BehaviorPolicy, history: &LocalHistory, action: usize) -> Result<f64> {
    action_prob(policy.as_fsc(), history, action)
}

/// `φ_0 = u_0 / (u_0 + u_1)` for each node.
pub fn exploit_probabilities(reward_mass: &[f64], u1: f64) -> Vec<f64> {
    reward_mass
        .iter()
        .map(|&u0| if u0 + u1 > 0.0 { u0 / (u0 + u1) } else { 0.0 })
        .collect()
}

/// Exploitation weights from the final E-step: `u_0` is the reweighted-reward
/// mass `Σ_{k,t} ν̂_t^k Σ_τ φ_{t,τ}(z)` of each node.
pub fn update_exploration(counts: &[AgentCounts], episodes: usize, u1: f64) -> Result<Vec<Vec<f64>>> {
    if !(u1 > 0.0) {
        return Err(Error::InvalidConfig(format!("u1 must be positive, got {u1}")));
    }
    Ok(counts
        .iter()
        .map(|c| {
            let mass: Vec<f64> = c.node_mass.iter().map(|m| m * episodes as f64).collect();
            exploit_probabilities(&mass, u1)
        })
        .collect())
}

//! Dec-POMDP models.
//!
//! Joint actions and joint observations are flattened row-major with agent 0
//! as the most significant digit. Tables are stored densely:
//! transitions as `state × joint action × next state`, observations as
//! `joint action × next state × joint observation` and expected rewards as
//! `state × joint action`.

mod exact;
mod parse;
mod write;

pub use exact::{exact_fsc_value, exact_fsc_value_with, ExactConfig};
pub use parse::parse_dpomdp;
pub use write::write_dpomdp;

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DecPomdpModel {
    pub agent_names: Vec<String>,
    pub discount: f64,
    pub state_names: Vec<String>,
    pub action_names: Vec<Vec<String>>,
    pub observation_names: Vec<Vec<String>>,
    pub initial_belief: Vec<f64>,
    pub transition: Vec<f64>,
    pub observation: Vec<f64>,
    pub reward: Vec<f64>,
}

impl DecPomdpModel {
    pub fn num_agents(&self) -> usize {
        self.agent_names.len()
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self, agent: usize) -> usize {
        self.action_names[agent].len()
    }

    pub fn num_observations(&self, agent: usize) -> usize {
        self.observation_names[agent].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.action_names.iter().map(Vec::len).collect()
    }

    pub fn observation_counts(&self) -> Vec<usize> {
        self.observation_names.iter().map(Vec::len).collect()
    }

    pub fn num_joint_actions(&self) -> usize {
        self.action_names.iter().map(Vec::len).product()
    }

    pub fn num_joint_observations(&self) -> usize {
        self.observation_names.iter().map(Vec::len).product()
    }

    #[inline]
    pub fn transition_prob(&self, s: usize, ja: usize, s2: usize) -> f64 {
        let ns = self.num_states();
        self.transition[(s * self.num_joint_actions() + ja) * ns + s2]
    }

    /// Row `T(· | s, ja)`.
    pub fn transition_row(&self, s: usize, ja: usize) -> &[f64] {
        let ns = self.num_states();
        let start = (s * self.num_joint_actions() + ja) * ns;
        &self.transition[start..start + ns]
    }

    /// Row `Ω(· | ja, s')`.
    pub fn observation_row(&self, ja: usize, s2: usize) -> &[f64] {
        let no = self.num_joint_observations();
        let start = (ja * self.num_states() + s2) * no;
        &self.observation[start..start + no]
    }

    #[inline]
    pub fn reward(&self, s: usize, ja: usize) -> f64 {
        self.reward[s * self.num_joint_actions() + ja]
    }

    /// Smallest and largest expected reward.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)))
    }

    pub fn joint_action_index(&self, actions: &[usize]) -> usize {
        flatten(actions, &self.action_counts())
    }

    pub fn joint_observation_index(&self, obs: &[usize]) -> usize {
        flatten(obs, &self.observation_counts())
    }

    pub fn split_joint_observation(&self, index: usize) -> Vec<usize> {
        unflatten(index, &self.observation_counts())
    }

    pub fn split_joint_action(&self, index: usize) -> Vec<usize> {
        unflatten(index, &self.action_counts())
    }

    /// Checks shapes and that every distribution sums to one.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        let (n, s) = (self.num_agents(), self.num_states());
        if n == 0 || s == 0 {
            return bad("need at least one agent and one state".into());
        }
        if self.action_names.len() != n || self.observation_names.len() != n {
            return bad("per-agent action/observation lists do not match the agent count".into());
        }
        if self
            .action_names
            .iter()
            .chain(&self.observation_names)
            .any(Vec::is_empty)
        {
            return bad("every agent needs at least one action and one observation".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} outside (0, 1]", self.discount));
        }
        let (ja, jo) = (self.num_joint_actions(), self.num_joint_observations());
        if self.initial_belief.len() != s
            || self.transition.len() != s * ja * s
            || self.observation.len() != ja * s * jo
            || self.reward.len() != s * ja
        {
            return bad("table sizes do not match the declared dimensions".into());
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return bad("non-finite reward".into());
        }
        check_dist("start distribution", &self.initial_belief)?;
        for (i, row) in self.transition.chunks(s).enumerate() {
            check_dist(
                &format!("transition row (state {}, joint action {})", i / ja, i % ja),
                row,
            )?;
        }
        for (i, row) in self.observation.chunks(jo).enumerate() {
            check_dist(
                &format!("observation row (joint action {}, state {})", i / s, i % s),
                row,
            )?;
        }
        Ok(())
    }
}

fn check_dist(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Row-major index of a tuple; the first component is most significant.
pub fn flatten(parts: &[usize], sizes: &[usize]) -> usize {
    parts.iter().zip(sizes).fold(0, |acc, (&p, &n)| acc * n + p)
}

pub fn unflatten(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &n) in out.iter_mut().zip(sizes).rev() {
        *slot = index % n;
        index /= n;
    }
    out
}

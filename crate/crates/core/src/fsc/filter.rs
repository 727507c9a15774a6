//! Node belief tracking along one agent's local history.

use super::FscTables;
use crate::error::{Error, Result};

/// Past actions `a_0..a_{t-1}` and observations `o_1..o_t` of one agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalHistory {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
}

/// Incremental filter over controller nodes.
///
/// `predictive` is the node distribution before the next action is seen. It
/// carries the mass lost to under-normalized rows, so its sum equals the
/// total probability of everything observed since the last action.
#[derive(Debug, Clone)]
pub struct NodeFilter<'a> {
    fsc: &'a FscTables,
    predictive: Vec<f64>,
    posterior: Vec<f64>,
    last_action: Option<usize>,
}

impl<'a> NodeFilter<'a> {
    pub fn new(fsc: &'a FscTables) -> Self {
        Self {
            fsc,
            predictive: fsc.initial.clone(),
            posterior: vec![0.0; fsc.nodes],
            last_action: None,
        }
    }

    /// Node belief after the most recent action, normalized.
    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    /// Unnormalized predictive node weights for the next action.
    pub fn predictive(&self) -> &[f64] {
        &self.predictive
    }

    /// `p(a | history)` for every action.
    pub fn action_probs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.fsc.actions];
        for (z, &b) in self.predictive.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (a, slot) in out.iter_mut().enumerate() {
                *slot += b * self.fsc.policy(z, a);
            }
        }
        out
    }

    /// Conditions on the action taken; returns its probability.
    pub fn observe_action(&mut self, action: usize) -> Result<f64> {
        if action >= self.fsc.actions {
            return Err(Error::Shape(format!("action {action} out of range")));
        }
        let mut total = 0.0;
        for z in 0..self.fsc.nodes {
            let w = self.predictive[z] * self.fsc.policy(z, action);
            self.posterior[z] = w;
            total += w;
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::Numerical(format!(
                "action {action} has zero probability under the filter"
            )));
        }
        for p in &mut self.posterior {
            *p /= total;
        }
        self.last_action = Some(action);
        Ok(total)
    }

    /// Advances the belief with the observation that followed the last action.
    pub fn observe(&mut self, obs: usize) -> Result<()> {
        let action = self
            .last_action
            .ok_or_else(|| Error::Shape("observation before any action".into()))?;
        if obs >= self.fsc.observations {
            return Err(Error::Shape(format!("observation {obs} out of range")));
        }
        self.predictive.iter_mut().for_each(|p| *p = 0.0);
        for (j, &b) in self.posterior.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (i, w) in self.fsc.transition_row(j, action, obs).iter().enumerate() {
                self.predictive[i] += b * w;
            }
        }
        Ok(())
    }
}

/// `p(action | history)` under a controller.
pub fn action_prob(fsc: &FscTables, history: &LocalHistory, action: usize) -> Result<f64> {
    if history.actions.len() != history.observations.len() {
        return Err(Error::Shape(format!(
            "history has {} actions but {} observations",
            history.actions.len(),
            history.observations.len()
        )));
    }
    if action >= fsc.actions {
        return Err(Error::Shape(format!("action {action} out of range")));
    }
    let mut filter = NodeFilter::new(fsc);
    for (&a, &o) in history.actions.iter().zip(&history.observations) {
        filter.observe_action(a)?;
        filter.observe(o)?;
    }
    Ok(filter.action_probs()[action])
}

//! Off-policy trials: log one batch under a semi-random behavior, fit, score.

use super::{collect_episodes, evaluate_policy, Evaluation, SimConfig};
use crate::error::{Error, Result};
use crate::explore::BehaviorPolicy;
use crate::fsc::JointFsc;
use crate::inference::{run_vb, VbConfig, VbOutcome};
use crate::model::DecPomdpModel;

/// Evaluation streams are keyed away from the training streams.
pub(crate) const EVAL_SEED_MASK: u64 = 0x5eed_e7a1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub episodes: usize,
    pub horizon: usize,
    /// Probability of following the expert at each step.
    pub epsilon: f64,
    pub vb: VbConfig,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(vb: VbConfig) -> Self {
        Self {
            episodes: 300,
            horizon: 50,
            epsilon: 0.3,
            vb,
            eval_episodes: 100,
            eval_horizon: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub controllers: JointFsc,
    pub evaluation: Evaluation,
    pub fit: VbOutcome,
}

/// Behavior policies mixing `expert` with uniform actions, or uniform when
/// there is no expert.
pub fn semi_random_behavior(
    model: &DecPomdpModel,
    expert: Option<&JointFsc>,
    epsilon: f64,
) -> Result<Vec<BehaviorPolicy>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} outside [0, 1]")));
    }
    match expert {
        Some(e) => {
            if e.agents.len() != model.num_agents() {
                return Err(Error::Shape(format!(
                    "expert has {} controllers for {} agents",
                    e.agents.len(),
                    model.num_agents()
                )));
            }
            e.agents
                .iter()
                .cloned()
                .map(|f| BehaviorPolicy::expert_mix(f, epsilon))
                .collect()
        }
        None => Ok((0..model.num_agents())
            .map(|n| BehaviorPolicy::uniform(model.num_actions(n), model.num_observations(n)))
            .collect()),
    }
}

pub fn offline_trial(model: &DecPomdpModel, expert: Option<&JointFsc>, cfg: &TrialConfig) -> Result<TrialOutcome> {
    let behaviors = semi_random_behavior(model, expert, cfg.epsilon)?;
    let (set, _) = collect_episodes(model, &behaviors, &SimConfig::new(cfg.episodes, cfg.horizon, cfg.seed))?;
    let dims: Vec<(usize, usize)> = (0..model.num_agents())
        .map(|n| (model.num_actions(n), model.num_observations(n)))
        .collect();
    let fit = run_vb(&set, &dims, &cfg.vb)?;
    let controllers = JointFsc {
        agents: fit.posterior.point_estimates(),
    };
    let evaluation = evaluate_policy(
        model,
        &controllers,
        cfg.eval_episodes,
        cfg.eval_horizon,
        cfg.seed ^ EVAL_SEED_MASK,
    )?;
    Ok(TrialOutcome {
        controllers,
        evaluation,
        fit,
    })
}

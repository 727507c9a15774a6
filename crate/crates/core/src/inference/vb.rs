//! Variational Bayes over stick-breaking controllers.
//!
//! Each iteration runs the E-step under the `exp E[ln θ]` controllers,
//! records the lower bound `ln V̂ + E_q[ln p(θ) - ln q(θ)]`, then updates the
//! posterior hyperparameters from the soft counts. E-step and update are exact
//! coordinate maximizations of the same bound, so the recorded sequence is
//! nondecreasing.

use super::estep::{e_step, EStep};
use super::messages::AgentCounts;
use super::EpisodeSet;
use crate::error::{Error, Result};
use crate::fsc::{init_from_episodes, Controller, FscTables};
use crate::sbprior::{AgentPosterior, SbPosterior, SbPrior};
use serde::{Deserialize, Serialize};

/// How strongly the data count against the prior.
///
/// The bound is `λ ln V̂ + E_q[ln p(θ) - ln q(θ)]` and soft counts carry weight
/// `λ ν̂ / K`. `PerEpisode` takes `λ = 1`, so the counts add up to about one
/// episode's worth of steps; `Total` takes `λ = K`, one unit per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceWeight {
    PerEpisode,
    Total,
}

impl EvidenceWeight {
    pub fn factor(self, episodes: usize) -> f64 {
        match self {
            EvidenceWeight::PerEpisode => 1.0,
            EvidenceWeight::Total => episodes as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    /// Maximum number of nodes per controller.
    pub truncation: usize,
    pub prior: SbPrior,
    /// Relative lower-bound change below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Uniform mixing weight of the initial chain controller.
    pub init_smoothing: f64,
    /// Pseudo-count mass per row given to the initial controller.
    pub init_strength: f64,
    /// Evidence above which a node counts as used, in per-episode units;
    /// scaled by the evidence factor before comparison.
    pub occupancy_eps: f64,
    pub evidence: EvidenceWeight,
}

impl VbConfig {
    pub fn new(truncation: usize, prior: SbPrior) -> Self {
        Self {
            truncation,
            prior,
            tol: 1e-3,
            max_iter: 200,
            init_smoothing: 0.05,
            init_strength: 1.0,
            occupancy_eps: 1e-6,
            evidence: EvidenceWeight::PerEpisode,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::InvalidConfig("truncation must be at least 1".into()));
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "tolerance must be nonnegative and max_iter positive".into(),
            ));
        }
        if !(self.init_strength > 0.0) {
            return Err(Error::InvalidConfig("init_strength must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lower_bound: f64,
    /// Relative change from the previous bound (`inf` on the first iteration).
    pub delta: f64,
    /// `ln V̂` of the E-step controllers on shifted rewards.
    pub log_value: f64,
    /// The same estimate on the original reward scale.
    pub value_estimate: f64,
    pub sizes: Vec<usize>,
    pub nu_sum_error: f64,
    pub underflow: usize,
}

#[derive(Debug, Clone)]
pub struct VbOutcome {
    pub posterior: SbPosterior,
    pub sizes: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    /// Soft counts from the final E-step.
    pub counts: Vec<AgentCounts>,
}

impl VbOutcome {
    /// Smallest step of the bound sequence (negative means a decrease).
    pub fn worst_bound_step(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| w[1].lower_bound - w[0].lower_bound)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Folds soft counts into the posterior.
pub fn update_hyperparameters(posterior: &mut SbPosterior, counts: &[AgentCounts]) -> Result<()> {
    if counts.len() != posterior.agents.len() {
        return Err(Error::Shape(format!(
            "{} count sets for {} agents",
            counts.len(),
            posterior.agents.len()
        )));
    }
    let prior = posterior.prior;
    for (agent, c) in posterior.agents.iter_mut().zip(counts) {
        agent.update(&prior, &c.action, &c.transition)?;
    }
    Ok(())
}

/// Lower bound after an E-step run under `posterior`, with data weight `factor`.
pub fn lower_bound(estep: &EStep, posterior: &SbPosterior, factor: f64) -> f64 {
    factor * estep.log_value + posterior.bound_terms()
}

/// Number of used nodes per agent, at least one each.
pub fn infer_controller_sizes(posterior: &SbPosterior, eps: f64) -> Vec<usize> {
    posterior.controller_sizes(eps)
}

/// `r_min Σ_t γ^t` averaged over episodes: the offset between shifted and
/// original reward scales.
pub(crate) fn reward_baseline(episodes: &EpisodeSet) -> f64 {
    let total: f64 = episodes
        .episodes
        .iter()
        .map(|e| (0..e.len()).map(|t| episodes.gamma.powi(t as i32)).sum::<f64>())
        .sum();
    episodes.r_min * total / episodes.len().max(1) as f64
}

/// Posterior seeded with pseudo-counts from the best-episode chain controller.
pub fn initial_posterior(episodes: &EpisodeSet, dims: &[(usize, usize)], cfg: &VbConfig) -> Result<SbPosterior> {
    if dims.len() != episodes.agents {
        return Err(Error::Shape(format!(
            "{} dimension pairs for {} agents",
            dims.len(),
            episodes.agents
        )));
    }
    let mut agents = Vec::with_capacity(dims.len());
    for (n, &(actions, observations)) in dims.iter().enumerate() {
        let init = init_from_episodes(episodes, n, cfg.truncation, actions, observations, cfg.init_smoothing)?;
        let mut post = AgentPosterior::from_prior(&cfg.prior, cfg.truncation, actions, observations)?;
        let scale = |v: &[f64]| v.iter().map(|x| x * cfg.init_strength).collect::<Vec<_>>();
        post.update(&cfg.prior, &scale(&init.policy), &scale(&init.transition))?;
        agents.push(post);
    }
    Ok(SbPosterior {
        prior: cfg.prior,
        agents,
    })
}

fn relative_change(lb: f64, prev: f64) -> f64 {
    if prev == f64::NEG_INFINITY {
        f64::INFINITY
    } else if prev == 0.0 {
        lb - prev
    } else {
        (lb - prev) / prev.abs()
    }
}

/// Runs variational Bayes from the default initialization.
pub fn run_vb(episodes: &EpisodeSet, dims: &[(usize, usize)], cfg: &VbConfig) -> Result<VbOutcome> {
    let post = initial_posterior(episodes, dims, cfg)?;
    run_vb_from(episodes, post, cfg)
}

/// Runs variational Bayes starting from `posterior`.
pub fn run_vb_from(episodes: &EpisodeSet, mut posterior: SbPosterior, cfg: &VbConfig) -> Result<VbOutcome> {
    cfg.validate()?;
    episodes.validate()?;
    let baseline = reward_baseline(episodes);
    let factor = cfg.evidence.factor(episodes.len());
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut counts = Vec::new();
    for iter in 1..=cfg.max_iter {
        let controllers = posterior.under_normalized();
        let tables: Vec<&FscTables> = controllers.iter().map(Controller::tables).collect();
        let mut est = e_step(episodes, &tables)?;
        let lb = lower_bound(&est, &posterior, factor);
        if !lb.is_finite() {
            return Err(Error::Numerical(format!("lower bound is {lb} at iteration {iter}")));
        }
        let delta = relative_change(lb, prev);
        let unscaled = est.counts.clone();
        for c in &mut est.counts {
            c.scale(factor);
        }
        update_hyperparameters(&mut posterior, &est.counts)?;
        let sizes = infer_controller_sizes(&posterior, cfg.occupancy_eps * factor);
        log::debug!("iter {iter}: lb {lb:.6} delta {delta:.3e} sizes {sizes:?}");
        trace.push(IterationRecord {
            iter,
            lower_bound: lb,
            delta,
            log_value: est.log_value,
            value_estimate: est.log_value.exp() + baseline,
            sizes,
            nu_sum_error: est.nu_sum_error,
            underflow: est.underflow,
        });
        counts = unscaled;
        prev = lb;
        if iter > 1 && delta < cfg.tol {
            converged = true;
            break;
        }
    }
    let sizes = infer_controller_sizes(&posterior, cfg.occupancy_eps * factor);
    Ok(VbOutcome {
        posterior,
        sizes,
        trace,
        converged,
        counts,
    })
}

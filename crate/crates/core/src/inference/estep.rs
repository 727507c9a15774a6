//! Importance-weighted value and the E-step.
//!
//! With behavior probabilities `q` recorded in the data, the value of a joint
//! controller is estimated by
//! `V̂ = (1/K) Σ_k Σ_t γ^t (r_t - r_min) Π_n Π_{τ≤t} p(a_{n,τ} | h) / q_{n,τ}`.
//! Every term is formed in log space. The normalized terms are the
//! reweighted rewards `ν̂`, which sum to `K`.

use super::messages::{accumulate_counts, forward_prefix, AgentCounts, ForwardMessages};
use super::EpisodeSet;
use crate::error::{Error, Result};
use crate::fsc::FscTables;
use crate::special::log_sum_exp;
use rayon::prelude::*;

/// Terms below `e^-700` relative to the total are dropped.
const UNDERFLOW_LOG: f64 = -700.0;
/// Episodes per work unit; fixed so that sums do not depend on thread count.
const CHUNK: usize = 16;

pub(crate) struct EpisodeTerms {
    pub forward: Vec<ForwardMessages>,
    /// `ln` of each step's term of `K V̂`; `-inf` where it vanishes.
    pub log_terms: Vec<f64>,
}

fn check_controllers(episodes: &EpisodeSet, controllers: &[&FscTables]) -> Result<()> {
    if controllers.len() != episodes.agents {
        return Err(Error::Shape(format!(
            "{} controllers for {} agents",
            controllers.len(),
            episodes.agents
        )));
    }
    for (n, (&(a, o), c)) in episodes.observed_dims().iter().zip(controllers).enumerate() {
        if a > c.actions || o > c.observations {
            return Err(Error::Shape(format!(
                "agent {n} data uses {a} actions / {o} observations but its controller has {} / {}",
                c.actions, c.observations
            )));
        }
    }
    Ok(())
}

pub(crate) fn episode_terms(episodes: &EpisodeSet, controllers: &[&FscTables], k: usize) -> EpisodeTerms {
    let ep = &episodes.episodes[k];
    let forward: Vec<ForwardMessages> = controllers
        .iter()
        .enumerate()
        .map(|(n, c)| forward_prefix(c, ep, n))
        .collect();
    let valid = forward.iter().map(ForwardMessages::len).min().unwrap_or(0);
    let ln_gamma = episodes.gamma.ln();
    let mut log_ratio = 0.0;
    let mut log_terms = vec![f64::NEG_INFINITY; ep.len()];
    for t in 0..valid {
        let step = &ep.steps[t];
        for n in 0..controllers.len() {
            log_ratio += forward[n].step_likelihood[t].ln() - step.behavior[n].ln();
        }
        let shifted = step.reward - episodes.r_min;
        if shifted > 0.0 {
            log_terms[t] = t as f64 * ln_gamma + shifted.ln() + log_ratio;
        }
    }
    EpisodeTerms { forward, log_terms }
}

fn all_terms(episodes: &EpisodeSet, controllers: &[&FscTables]) -> Result<Vec<EpisodeTerms>> {
    check_controllers(episodes, controllers)?;
    if episodes.is_empty() {
        return Err(Error::InvalidEpisodes("no episodes".into()));
    }
    Ok((0..episodes.len())
        .into_par_iter()
        .map(|k| episode_terms(episodes, controllers, k))
        .collect())
}

/// Empirical value of a joint controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    /// `V̂` on rewards shifted by `-r_min`.
    pub shifted: f64,
    pub log_shifted: f64,
    /// `V̂` on the original reward scale.
    pub value: f64,
    /// Standard error across episodes.
    pub std_err: f64,
    pub underflow: usize,
}

pub fn empirical_value(episodes: &EpisodeSet, controllers: &[&FscTables]) -> Result<ValueEstimate> {
    let terms = all_terms(episodes, controllers)?;
    let all: Vec<f64> = terms.iter().flat_map(|e| e.log_terms.iter().copied()).collect();
    let lse = log_sum_exp(&all);
    let k = episodes.len() as f64;
    let mut underflow = 0;
    let per_episode: Vec<f64> = terms
        .iter()
        .zip(&episodes.episodes)
        .map(|(e, ep)| {
            let mut x = 0.0;
            for &l in &e.log_terms {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                if l - lse < UNDERFLOW_LOG {
                    underflow += 1;
                } else {
                    x += l.exp();
                }
            }
            let horizon: f64 = (0..ep.len()).map(|t| episodes.gamma.powi(t as i32)).sum();
            x + episodes.r_min * horizon
        })
        .collect();
    let value = per_episode.iter().sum::<f64>() / k;
    let var = if per_episode.len() > 1 {
        per_episode.iter().map(|x| (x - value).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let log_shifted = lse - k.ln();
    Ok(ValueEstimate {
        shifted: log_shifted.exp(),
        log_shifted,
        value,
        std_err: (var / k).sqrt(),
        underflow,
    })
}

/// Result of one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    /// `ln V̂` on shifted rewards.
    pub log_value: f64,
    /// `ν̂_t^k`, one vector per episode.
    pub nu: Vec<Vec<f64>>,
    /// Soft counts weighted by `ν̂ / K`, one entry per agent.
    pub counts: Vec<AgentCounts>,
    pub underflow: usize,
    /// `|Σ ν̂ - K|`.
    pub nu_sum_error: f64,
}

/// Reweighted rewards `ν̂` and `ln V̂`.
pub fn reweighted_rewards(episodes: &EpisodeSet, controllers: &[&FscTables]) -> Result<(Vec<Vec<f64>>, f64)> {
    let terms = all_terms(episodes, controllers)?;
    let (weights, lse, _) = normalize(&terms)?;
    let k = episodes.len() as f64;
    let nu = weights
        .iter()
        .map(|w| w.iter().map(|l| k * l.exp()).collect())
        .collect();
    Ok((nu, lse - k.ln()))
}

/// Log weights `ln(ν̂/K)` with underflowing terms removed.
fn normalize(terms: &[EpisodeTerms]) -> Result<(Vec<Vec<f64>>, f64, usize)> {
    let all: Vec<f64> = terms.iter().flat_map(|e| e.log_terms.iter().copied()).collect();
    let lse = log_sum_exp(&all);
    if !lse.is_finite() {
        return Err(Error::DegenerateValue(
            "every importance-weighted reward is zero; check r_min and the controllers".into(),
        ));
    }
    let mut underflow = 0;
    let weights = terms
        .iter()
        .map(|e| {
            e.log_terms
                .iter()
                .map(|&l| {
                    let w = l - lse;
                    if l > f64::NEG_INFINITY && w < UNDERFLOW_LOG {
                        underflow += 1;
                        f64::NEG_INFINITY
                    } else {
                        w
                    }
                })
                .collect()
        })
        .collect();
    Ok((weights, lse, underflow))
}

/// E-step under the given controllers (normalized or not).
pub fn e_step(episodes: &EpisodeSet, controllers: &[&FscTables]) -> Result<EStep> {
    let terms = all_terms(episodes, controllers)?;
    let (weights, lse, underflow) = normalize(&terms)?;
    let k = episodes.len() as f64;
    let zeros = || -> Vec<AgentCounts> {
        controllers
            .iter()
            .map(|c| AgentCounts::zeros(c.nodes, c.actions, c.observations))
            .collect()
    };
    let indices: Vec<usize> = (0..episodes.len()).collect();
    let partial: Vec<Vec<AgentCounts>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = zeros();
            for &i in chunk {
                for (n, c) in controllers.iter().enumerate() {
                    accumulate_counts(
                        c,
                        &episodes.episodes[i],
                        n,
                        &terms[i].forward[n],
                        &weights[i],
                        &mut acc[n],
                    );
                }
            }
            acc
        })
        .collect();
    let mut counts = zeros();
    for p in &partial {
        for (a, b) in counts.iter_mut().zip(p) {
            a.add(b);
        }
    }
    let nu: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| w.iter().map(|l| k * l.exp()).collect())
        .collect();
    let total: f64 = nu.iter().flatten().sum();
    Ok(EStep {
        log_value: lse - k.ln(),
        nu,
        counts,
        underflow,
        nu_sum_error: (total - k).abs(),
    })
}

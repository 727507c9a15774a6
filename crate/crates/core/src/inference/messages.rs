//! Forward-backward messages over controller nodes for one agent and episode.
//!
//! Forward messages are normalized node posteriors `α_τ` with per-step
//! normalizers `p_τ`; the product of normalizers up to `t` is the likelihood of
//! the agent's actions `a_0..a_t`. Backward messages `β_{t,τ}` are scaled by
//! the same normalizers so that pairwise marginals need no renormalization.

use crate::error::{Error, Result};
use crate::fsc::FscTables;
use crate::inference::Episode;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMessages {
    /// `α_τ(i)` for `τ < len`, each row summing to one.
    pub alpha: Vec<Vec<f64>>,
    /// Step normalizers `p_τ`.
    pub step_likelihood: Vec<f64>,
}

impl ForwardMessages {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `ln Π_{τ≤t} p_τ` for each `t`.
    pub fn log_likelihoods(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.step_likelihood
            .iter()
            .map(|p| {
                acc += p.ln();
                acc
            })
            .collect()
    }
}

/// Whether rewards other than the baseline occur only at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Terminal,
    Dense,
}

/// Steps whose shifted reward is nonzero, with the detected mode.
pub fn reward_steps(episode: &Episode, r_min: f64) -> (RewardMode, Vec<usize>) {
    let steps: Vec<usize> = (0..episode.len())
        .filter(|&t| episode.steps[t].reward != r_min)
        .collect();
    let terminal = steps.iter().all(|&t| t + 1 == episode.len());
    (
        if terminal {
            RewardMode::Terminal
        } else {
            RewardMode::Dense
        },
        steps,
    )
}

fn check_dims(fsc: &FscTables, episode: &Episode, agent: usize) -> Result<()> {
    for t in 0..episode.len() {
        let a = episode.action(agent, t);
        if a >= fsc.actions {
            return Err(Error::Shape(format!(
                "action {a} at step {t} exceeds {} actions",
                fsc.actions
            )));
        }
        if t > 0 && episode.observation(agent, t) >= fsc.observations {
            return Err(Error::Shape(format!(
                "observation {} at step {t} exceeds {} observations",
                episode.observation(agent, t),
                fsc.observations
            )));
        }
    }
    Ok(())
}

/// Forward pass that stops at the first zero normalizer instead of failing.
pub(crate) fn forward_prefix(fsc: &FscTables, episode: &Episode, agent: usize) -> ForwardMessages {
    let z = fsc.nodes;
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(episode.len());
    let mut norms = Vec::with_capacity(episode.len());
    let mut pred = vec![0.0; z];
    for t in 0..episode.len() {
        let a = episode.action(agent, t);
        if t == 0 {
            pred.copy_from_slice(&fsc.initial);
        } else {
            let prev = &alpha[t - 1];
            let (pa, o) = (episode.action(agent, t - 1), episode.observation(agent, t));
            pred.iter_mut().for_each(|x| *x = 0.0);
            for (j, &w) in prev.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (p, r) in pred.iter_mut().zip(fsc.transition_row(j, pa, o)) {
                    *p += w * r;
                }
            }
        }
        let mut cur: Vec<f64> = (0..z).map(|i| pred[i] * fsc.policy(i, a)).collect();
        let norm: f64 = cur.iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        cur.iter_mut().for_each(|x| *x /= norm);
        alpha.push(cur);
        norms.push(norm);
    }
    ForwardMessages {
        alpha,
        step_likelihood: norms,
    }
}

/// Forward messages for `agent` along `episode`.
pub fn forward_messages(fsc: &FscTables, episode: &Episode, agent: usize) -> Result<ForwardMessages> {
    check_dims(fsc, episode, agent)?;
    let fwd = forward_prefix(fsc, episode, agent);
    if fwd.len() < episode.len() {
        return Err(Error::ZeroNormalizer {
            episode: episode.id as usize,
            agent,
            step: fwd.len(),
        });
    }
    Ok(fwd)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardMessages {
    pub target: usize,
    /// `β_{t,τ}(i)` for `τ = 0..=target`.
    pub beta: Vec<Vec<f64>>,
}

/// Backward messages for each target step in `targets`.
pub fn backward_messages(
    fsc: &FscTables,
    episode: &Episode,
    agent: usize,
    fwd: &ForwardMessages,
    targets: &[usize],
) -> Result<Vec<BackwardMessages>> {
    let z = fsc.nodes;
    targets
        .iter()
        .map(|&t| {
            if t >= fwd.len() {
                return Err(Error::Shape(format!(
                    "target step {t} beyond {} forward steps",
                    fwd.len()
                )));
            }
            let mut beta = vec![vec![0.0; z]; t + 1];
            beta[t] = vec![1.0 / fwd.step_likelihood[t]; z];
            for tau in (0..t).rev() {
                let (a, o, a2) = (
                    episode.action(agent, tau),
                    episode.observation(agent, tau + 1),
                    episode.action(agent, tau + 1),
                );
                for i in 0..z {
                    let row = fsc.transition_row(i, a, o);
                    let s: f64 = (0..z).map(|j| row[j] * fsc.policy(j, a2) * beta[tau + 1][j]).sum();
                    beta[tau][i] = s / fwd.step_likelihood[tau];
                }
            }
            Ok(BackwardMessages { target: t, beta })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub target: usize,
    /// `φ_{t,τ}(i)` for `τ = 0..=target`.
    pub node: Vec<Vec<f64>>,
    /// `ξ_{t,τ}(i, j)` for `τ < target`, flattened `i * nodes + j`.
    pub pair: Vec<Vec<f64>>,
}

/// Node and node-pair posteriors given the actions up to the target step.
pub fn marginals(
    fsc: &FscTables,
    episode: &Episode,
    agent: usize,
    fwd: &ForwardMessages,
    bwd: &BackwardMessages,
) -> Marginals {
    let z = fsc.nodes;
    let t = bwd.target;
    let node = (0..=t)
        .map(|tau| {
            (0..z)
                .map(|i| fwd.alpha[tau][i] * bwd.beta[tau][i] * fwd.step_likelihood[tau])
                .collect()
        })
        .collect();
    let pair = (0..t)
        .map(|tau| {
            let (a, o, a2) = (
                episode.action(agent, tau),
                episode.observation(agent, tau + 1),
                episode.action(agent, tau + 1),
            );
            let mut m = vec![0.0; z * z];
            for i in 0..z {
                let row = fsc.transition_row(i, a, o);
                for j in 0..z {
                    m[i * z + j] = fwd.alpha[tau][i] * row[j] * fsc.policy(j, a2) * bwd.beta[tau + 1][j];
                }
            }
            m
        })
        .collect();
    Marginals { target: t, node, pair }
}

/// Soft counts for one agent, `Σ_t ω_t` times the expected node and
/// transition occupancies given actions up to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCounts {
    pub nodes: usize,
    pub actions: usize,
    pub observations: usize,
    /// `nodes × actions`
    pub action: Vec<f64>,
    /// `nodes × actions × observations × nodes`
    pub transition: Vec<f64>,
    /// Per-node total of `action` over actions.
    pub node_mass: Vec<f64>,
}

impl AgentCounts {
    pub fn zeros(nodes: usize, actions: usize, observations: usize) -> Self {
        Self {
            nodes,
            actions,
            observations,
            action: vec![0.0; nodes * actions],
            transition: vec![0.0; nodes * actions * observations * nodes],
            node_mass: vec![0.0; nodes],
        }
    }

    /// Multiplies every count by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for x in self
            .action
            .iter_mut()
            .chain(&mut self.transition)
            .chain(&mut self.node_mass)
        {
            *x *= factor;
        }
    }

    pub fn add(&mut self, other: &AgentCounts) {
        for (a, b) in self.action.iter_mut().zip(&other.action) {
            *a += b;
        }
        for (a, b) in self.transition.iter_mut().zip(&other.transition) {
            *a += b;
        }
        for (a, b) in self.node_mass.iter_mut().zip(&other.node_mass) {
            *a += b;
        }
    }
}

/// Adds `Σ_t ω_t Σ_τ φ_{t,τ}` and `Σ_t ω_t Σ_τ ξ_{t,τ}` to `counts` in one
/// backward sweep, where `ln ω_t = log_weights[t]`.
///
/// Combining targets works because every scaled `β_{t,·}` obeys the same
/// linear recursion; the weighted sum `B_τ = Σ_{t≥τ} ω_t β_{t,τ}` is carried as
/// a mantissa vector and a log scale to stay in range.
pub(crate) fn accumulate_counts(
    fsc: &FscTables,
    episode: &Episode,
    agent: usize,
    fwd: &ForwardMessages,
    log_weights: &[f64],
    counts: &mut AgentCounts,
) {
    let z = fsc.nodes;
    let len = fwd.len().min(log_weights.len());
    if len == 0 {
        return;
    }
    let mut b = vec![0.0; z];
    let mut next_b = vec![0.0; z];
    let mut scale = f64::NEG_INFINITY;
    let mut y = vec![0.0; z];
    for tau in (0..len).rev() {
        let ln_c = fwd.step_likelihood[tau].ln();
        let lw = log_weights[tau] - ln_c;
        let a = episode.action(agent, tau);
        // transition counts τ → τ+1 use B_{τ+1} before it is replaced
        if tau + 1 < len && scale > f64::NEG_INFINITY {
            let (o, a2) = (episode.observation(agent, tau + 1), episode.action(agent, tau + 1));
            let factor = scale.exp();
            for i in 0..z {
                let row = fsc.transition_row(i, a, o);
                let ai = fwd.alpha[tau][i];
                let mut yi = 0.0;
                let base = ((i * fsc.actions + a) * fsc.observations + o) * z;
                for j in 0..z {
                    let m = row[j] * fsc.policy(j, a2) * b[j];
                    yi += m;
                    if ai != 0.0 {
                        counts.transition[base + j] += ai * m * factor;
                    }
                }
                y[i] = yi;
            }
        } else {
            y.iter_mut().for_each(|v| *v = 0.0);
        }
        let ymax = y.iter().copied().fold(0.0f64, f64::max);
        let s1 = if ymax > 0.0 {
            scale - ln_c + ymax.ln()
        } else {
            f64::NEG_INFINITY
        };
        let new_scale = s1.max(lw);
        if new_scale == f64::NEG_INFINITY {
            next_b.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let f1 = if ymax > 0.0 { (s1 - new_scale).exp() / ymax } else { 0.0 };
            let f2 = (lw - new_scale).exp();
            for i in 0..z {
                next_b[i] = y[i] * f1 + f2;
            }
        }
        std::mem::swap(&mut b, &mut next_b);
        scale = new_scale;
        if scale > f64::NEG_INFINITY {
            let factor = (scale + ln_c).exp();
            for i in 0..z {
                let phi = fwd.alpha[tau][i] * b[i] * factor;
                counts.action[i * fsc.actions + a] += phi;
                counts.node_mass[i] += phi;
            }
        }
    }
}

//! Variational posterior over one agent's controller parameters.
//!
//! Action rows are Dirichlet; each node-transition row `(node, action,
//! observation)` is a GDD with `nodes - 1` Beta sticks, the last node taking
//! the remainder. Every stick has its own concentration `η`, either with a
//! Gamma posterior (unit stick prior `σ = 1`) or as a grid point estimate.

use super::{
    beta_entropy, beta_log_moments, dirichlet_kl, dirichlet_log_expectations, eta_point_estimate_grid,
    gamma_posterior_update, gdd_mean, under_normalized_weights, GammaParams, GridConfig,
};
use crate::error::{Error, Result};
use crate::fsc::{FscParams, FscTables, UnderNormalizedFsc};
use crate::special::ln_gamma;
use serde::{Deserialize, Serialize};

/// Prior hyperparameters shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbPrior {
    /// Symmetric Dirichlet concentration on action rows.
    pub rho: f64,
    /// First Beta parameter of every stick.
    pub sigma: f64,
    /// Gamma prior on stick concentrations.
    pub eta: GammaParams,
    pub grid: GridConfig,
    /// Alternations between sticks and concentrations inside one update.
    pub inner_rounds: usize,
}

impl SbPrior {
    pub fn new(rho: f64, sigma: f64, c: f64, d: f64) -> Result<Self> {
        if !(rho > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho ({rho}) and sigma ({sigma}) must be positive"
            )));
        }
        Ok(Self {
            rho,
            sigma,
            eta: GammaParams::new(c, d)?,
            grid: GridConfig::default(),
            inner_rounds: 5,
        })
    }

    /// Unit first parameter admits the conjugate Gamma update.
    pub fn is_conjugate(&self) -> bool {
        self.sigma == 1.0
    }
}

/// Distribution over each stick concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EtaState {
    Gamma(Vec<GammaParams>),
    Point(Vec<f64>),
}

impl EtaState {
    fn mean(&self, k: usize) -> f64 {
        match self {
            EtaState::Gamma(g) => g[k].mean(),
            EtaState::Point(p) => p[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPosterior {
    pub nodes: usize,
    pub actions: usize,
    pub observations: usize,
    /// Dirichlet concentrations, `nodes × actions`.
    pub rho_hat: Vec<f64>,
    /// Stick parameters, `nodes × actions × observations × (nodes - 1)`.
    pub sigma_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub eta: EtaState,
}

impl AgentPosterior {
    /// Posterior equal to the prior.
    pub fn from_prior(prior: &SbPrior, nodes: usize, actions: usize, observations: usize) -> Result<Self> {
        if nodes == 0 || actions == 0 || observations == 0 {
            return Err(Error::InvalidConfig("controller dimensions must be positive".into()));
        }
        let sticks = nodes * actions * observations * (nodes - 1);
        let eta = if prior.is_conjugate() {
            EtaState::Gamma(vec![prior.eta; sticks])
        } else {
            EtaState::Point(vec![prior.eta.mean(); sticks])
        };
        let mut post = Self {
            nodes,
            actions,
            observations,
            rho_hat: vec![prior.rho; nodes * actions],
            sigma_hat: vec![prior.sigma; sticks],
            eta_hat: vec![0.0; sticks],
            eta,
        };
        for k in 0..sticks {
            post.eta_hat[k] = post.eta.mean(k);
        }
        Ok(post)
    }

    fn sticks_per_row(&self) -> usize {
        self.nodes - 1
    }

    fn rows(&self) -> usize {
        self.nodes * self.actions * self.observations
    }

    /// Coordinate update from soft counts: `action_counts` is `nodes × actions`,
    /// `transition_counts` is `nodes × actions × observations × nodes`.
    pub fn update(&mut self, prior: &SbPrior, action_counts: &[f64], transition_counts: &[f64]) -> Result<()> {
        let (z, a, o) = (self.nodes, self.actions, self.observations);
        if action_counts.len() != z * a || transition_counts.len() != z * a * o * z {
            return Err(Error::Shape(format!(
                "soft counts have {} / {} entries, expected {} / {}",
                action_counts.len(),
                transition_counts.len(),
                z * a,
                z * a * o * z
            )));
        }
        for (r, c) in self.rho_hat.iter_mut().zip(action_counts) {
            *r = prior.rho + c;
        }
        let d = self.sticks_per_row();
        if d == 0 {
            return Ok(());
        }
        let mut tails = vec![0.0; self.sigma_hat.len()];
        for row in 0..self.rows() {
            let counts = &transition_counts[row * z..(row + 1) * z];
            let mut acc = 0.0;
            for j in (0..d).rev() {
                acc += counts[j + 1];
                tails[row * d + j] = acc;
                self.sigma_hat[row * d + j] = prior.sigma + counts[j];
            }
        }
        for _ in 0..prior.inner_rounds.max(1) {
            for k in 0..self.eta_hat.len() {
                self.eta_hat[k] = self.eta.mean(k) + tails[k];
            }
            for k in 0..self.eta_hat.len() {
                let (_, ln_1mv) = beta_log_moments(self.sigma_hat[k], self.eta_hat[k]);
                match &mut self.eta {
                    EtaState::Gamma(g) => g[k] = gamma_posterior_update(&prior.eta, ln_1mv),
                    EtaState::Point(p) => {
                        p[k] = eta_point_estimate_grid(prior.sigma, &prior.eta, ln_1mv, Some(p[k]), &prior.grid)?
                    }
                }
            }
        }
        for k in 0..self.eta_hat.len() {
            self.eta_hat[k] = self.eta.mean(k) + tails[k];
        }
        Ok(())
    }

    /// Parameters `exp E[ln θ]` used by the E-step.
    pub fn under_normalized(&self) -> UnderNormalizedFsc {
        let (z, a, o) = (self.nodes, self.actions, self.observations);
        let mut policy = Vec::with_capacity(z * a);
        for node in 0..z {
            let row = dirichlet_log_expectations(&self.rho_hat[node * a..(node + 1) * a]);
            policy.extend(row.into_iter().map(f64::exp));
        }
        let d = self.sticks_per_row();
        let mut transition = Vec::with_capacity(z * a * o * z);
        for row in 0..self.rows() {
            let mut lv = Vec::with_capacity(d);
            let mut l1 = Vec::with_capacity(d);
            for k in row * d..(row + 1) * d {
                let (x, y) = beta_log_moments(self.sigma_hat[k], self.eta_hat[k]);
                lv.push(x);
                l1.push(y);
            }
            transition.extend(under_normalized_weights(&lv, &l1));
        }
        UnderNormalizedFsc::from_tables_unchecked(FscTables::new(z, a, o, start_node(z), policy, transition))
    }

    /// Posterior-mean controller.
    pub fn point_estimate(&self) -> FscParams {
        let (z, a, o) = (self.nodes, self.actions, self.observations);
        let mut policy = Vec::with_capacity(z * a);
        for node in 0..z {
            let row = &self.rho_hat[node * a..(node + 1) * a];
            let s: f64 = row.iter().sum();
            policy.extend(row.iter().map(|r| r / s));
        }
        let d = self.sticks_per_row();
        let mut transition = Vec::with_capacity(z * a * o * z);
        for row in 0..self.rows() {
            let r = row * d..(row + 1) * d;
            transition.extend(gdd_mean(&self.sigma_hat[r.clone()], &self.eta_hat[r]));
        }
        FscParams::from_tables_unchecked(FscTables::new(z, a, o, start_node(z), policy, transition))
    }

    /// Prior-minus-posterior contribution to the lower bound:
    /// `E_q[ln p(θ, η) - ln q(θ, η)]`.
    pub fn bound_terms(&self, prior: &SbPrior) -> f64 {
        let a = self.actions;
        let prior_row = vec![prior.rho; a];
        let mut total = 0.0;
        for node in 0..self.nodes {
            total -= dirichlet_kl(&self.rho_hat[node * a..(node + 1) * a], &prior_row);
        }
        let ln_gamma_sigma = ln_gamma(prior.sigma);
        let ln_prior_norm = prior.eta.shape * prior.eta.rate.ln() - ln_gamma(prior.eta.shape);
        for k in 0..self.sigma_hat.len() {
            let (v, w) = (self.sigma_hat[k], self.eta_hat[k]);
            let (lv, l1) = beta_log_moments(v, w);
            total += beta_entropy(v, w) + (prior.sigma - 1.0) * lv;
            match &self.eta {
                EtaState::Gamma(g) => {
                    let q = &g[k];
                    // σ = 1: ln p(V | η) = ln η + (η - 1) ln(1 - V)
                    total += q.ln_mean() + (q.mean() - 1.0) * l1;
                    total += q.cross_log_density(&prior.eta) + q.entropy();
                }
                EtaState::Point(p) => {
                    let eta = p[k];
                    total += ln_gamma(prior.sigma + eta) - ln_gamma_sigma - ln_gamma(eta) + (eta - 1.0) * l1;
                    total += ln_prior_norm + (prior.eta.shape - 1.0) * eta.ln() - prior.eta.rate * eta;
                }
            }
        }
        total
    }

    /// Evidence mass `Σ_a (ρ̂ - ρ)` of each node.
    pub fn node_evidence(&self, prior: &SbPrior) -> Vec<f64> {
        let a = self.actions;
        (0..self.nodes)
            .map(|n| self.rho_hat[n * a..(n + 1) * a].iter().map(|r| r - prior.rho).sum())
            .collect()
    }

    /// Number of nodes whose evidence exceeds `eps`, at least one.
    pub fn occupied_nodes(&self, prior: &SbPrior, eps: f64) -> usize {
        self.node_evidence(prior).iter().filter(|&&m| m > eps).count().max(1)
    }
}

fn start_node(nodes: usize) -> Vec<f64> {
    let mut mu = vec![0.0; nodes];
    mu[0] = 1.0;
    mu
}

/// Posterior for all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbPosterior {
    pub prior: SbPrior,
    pub agents: Vec<AgentPosterior>,
}

impl SbPosterior {
    pub fn truncation(&self) -> usize {
        self.agents.first().map_or(0, |a| a.nodes)
    }

    pub fn bound_terms(&self) -> f64 {
        self.agents.iter().map(|a| a.bound_terms(&self.prior)).sum()
    }

    pub fn point_estimates(&self) -> Vec<FscParams> {
        self.agents.iter().map(AgentPosterior::point_estimate).collect()
    }

    pub fn under_normalized(&self) -> Vec<UnderNormalizedFsc> {
        self.agents.iter().map(AgentPosterior::under_normalized).collect()
    }

    pub fn controller_sizes(&self, eps: f64) -> Vec<usize> {
        self.agents.iter().map(|a| a.occupied_nodes(&self.prior, eps)).collect()
    }
}

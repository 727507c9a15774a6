//! Stick-breaking and related distribution math.
//!
//! Node-transition rows are generalized Dirichlet (GDD) distributions built
//! from independent Beta sticks `V_j ~ Beta(v_j, w_j)`; the weight of outcome
//! `j` is `V_j Π_{m<j}(1 - V_m)` and the last outcome takes the remainder.
//! Stick concentrations `η` carry a Gamma prior.

mod grid;
mod posterior;

pub use grid::{eta_log_objective, eta_point_estimate_grid, grid_maximize, wendel_bounds, GridConfig};
pub use posterior::{AgentPosterior, EtaState, SbPosterior, SbPrior};

use crate::error::{Error, Result};
use crate::special::{digamma, digamma_shift, ln_beta, ln_gamma};

/// Gamma distribution in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma parameters must be positive and finite (shape {shape}, rate {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// `E[ln η]`.
    pub fn ln_mean(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    pub fn entropy(&self) -> f64 {
        self.shape - self.rate.ln() + ln_gamma(self.shape) + (1.0 - self.shape) * digamma(self.shape)
    }

    /// `E_q[ln p(η)]` where `q` is `self` and `p` is `prior`.
    pub fn cross_log_density(&self, prior: &GammaParams) -> f64 {
        prior.shape * prior.rate.ln() - ln_gamma(prior.shape) + (prior.shape - 1.0) * self.ln_mean()
            - prior.rate * self.mean()
    }
}

/// `(E[ln V], E[ln(1-V)])` for `V ~ Beta(a, b)`.
pub fn beta_log_moments(a: f64, b: f64) -> (f64, f64) {
    (-digamma_shift(a, b), -digamma_shift(b, a))
}

/// Written through the log-moments so that large concentrations do not
/// cancel against each other.
pub fn beta_entropy(a: f64, b: f64) -> f64 {
    let (ln_v, ln_1mv) = beta_log_moments(a, b);
    ln_beta(a, b) - (a - 1.0) * ln_v - (b - 1.0) * ln_1mv
}

/// `E_q[ln q_a]` under a Dirichlet with concentrations `alpha`.
pub fn dirichlet_log_expectations(alpha: &[f64]) -> Vec<f64> {
    let total = digamma(alpha.iter().sum());
    alpha.iter().map(|&a| digamma(a) - total).collect()
}

/// `KL(Dir(post) || Dir(prior))`.
pub fn dirichlet_kl(post: &[f64], prior: &[f64]) -> f64 {
    let post_sum: f64 = post.iter().sum();
    let prior_sum: f64 = prior.iter().sum();
    let psi_sum = digamma(post_sum);
    let mut kl = ln_gamma(post_sum) - ln_gamma(prior_sum);
    for (&a, &b) in post.iter().zip(prior) {
        kl += ln_gamma(b) - ln_gamma(a) + (a - b) * (digamma(a) - psi_sum);
    }
    kl
}

/// Outcome weights from stick fractions; the result has `sticks.len() + 1` entries.
pub fn stick_breaking_weights(sticks: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sticks.len() + 1);
    let mut remaining = 1.0;
    for &v in sticks {
        out.push(remaining * v);
        remaining *= 1.0 - v;
    }
    out.push(remaining);
    out
}

/// `exp(E[ln V_j] + Σ_{m<j} E[ln(1-V_m)])`, with the last outcome using only
/// the accumulated `E[ln(1-V)]` terms. These weights sum to less than one.
pub fn under_normalized_weights(ln_v: &[f64], ln_1mv: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ln_v.len(), ln_1mv.len());
    let mut out = Vec::with_capacity(ln_v.len() + 1);
    let mut acc = 0.0;
    for (lv, l1) in ln_v.iter().zip(ln_1mv) {
        out.push((acc + lv).exp());
        acc += l1;
    }
    out.push(acc.exp());
    out
}

/// Mean of the GDD with stick parameters `(v, w)`.
pub fn gdd_mean(v: &[f64], w: &[f64]) -> Vec<f64> {
    let sticks: Vec<f64> = v.iter().zip(w).map(|(&a, &b)| a / (a + b)).collect();
    stick_breaking_weights(&sticks)
}

/// Conjugate update of a GDD with counts over `v.len() + 1` outcomes:
/// `v_j += c_j`, `w_j += Σ_{l>j} c_l`.
pub fn gdd_posterior_update(v: &[f64], w: &[f64], counts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != w.len() || counts.len() != v.len() + 1 {
        return Err(Error::Shape(format!(
            "gdd update expects {} sticks and {} counts, got {} / {} / {}",
            v.len(),
            v.len() + 1,
            v.len(),
            w.len(),
            counts.len()
        )));
    }
    let mut tail = vec![0.0; v.len()];
    let mut acc = 0.0;
    for j in (0..v.len()).rev() {
        acc += counts[j + 1];
        tail[j] = acc;
    }
    let v2 = v.iter().zip(counts).map(|(a, c)| a + c).collect();
    let w2 = w.iter().zip(&tail).map(|(b, t)| b + t).collect();
    Ok((v2, w2))
}

/// Posterior of `η` given `E[ln(1-V)]` of its stick when the stick prior is
/// `Beta(1, η)`: shape `c + 1`, rate `d - E[ln(1-V)]`.
pub fn gamma_posterior_update(prior: &GammaParams, ln_1mv: f64) -> GammaParams {
    GammaParams {
        shape: prior.shape + 1.0,
        rate: prior.rate - ln_1mv,
    }
}

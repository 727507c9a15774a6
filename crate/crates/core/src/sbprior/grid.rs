//! Point estimates of stick concentrations when the stick prior is
//! `Beta(σ, η)` with `σ ≠ 1`, where no conjugate update exists.
//!
//! The search interval comes from Wendel's bounds on `Γ(x + a) / Γ(x)`, then a
//! log-spaced grid and one local refinement pass locate the maximizer.

use super::GammaParams;
use crate::error::{Error, Result};
use crate::special::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridConfig {
    /// Number of log-spaced points in the main pass.
    pub points: usize,
    /// Resolution multiplier of the refinement pass.
    pub refine: usize,
    /// Outer limits searched when bracketing.
    pub min_eta: f64,
    pub max_eta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 200,
            refine: 10,
            min_eta: 1e-8,
            max_eta: 1e8,
        }
    }
}

/// `(lower, upper)` bounds on `Γ(x + a) / Γ(x)` for `x, a > 0`.
///
/// For `0 < a < 1` this is `x (x + a)^(a-1) ≤ ratio ≤ x^a`; the inequalities
/// flip for `a ≥ 1`, so the two forms are ordered before returning.
pub fn wendel_bounds(a: f64, x: f64) -> (f64, f64) {
    let p = x.powf(a);
    let q = x * (x + a).powf(a - 1.0);
    (p.min(q), p.max(q))
}

fn ln_wendel_bounds(a: f64, x: f64) -> (f64, f64) {
    let p = a * x.ln();
    let q = x.ln() + (a - 1.0) * (x + a).ln();
    (p.min(q), p.max(q))
}

/// Terms of `ln p(η) + E[ln Beta(V; σ, η)]` that depend on `η`.
pub fn eta_log_objective(sigma: f64, prior: &GammaParams, ln_1mv: f64, eta: f64) -> f64 {
    (prior.shape - 1.0) * eta.ln() - prior.rate * eta + ln_gamma(sigma + eta) - ln_gamma(eta) + (eta - 1.0) * ln_1mv
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Maximizes `objective` over `[lo, hi]` on a log grid, then refines between
/// the neighbours of the best point at `refine` times the resolution.
pub fn grid_maximize(objective: impl Fn(f64) -> f64, lo: f64, hi: f64, cfg: &GridConfig) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || cfg.points < 2 {
        return Err(Error::InvalidConfig(format!(
            "bad grid [{lo}, {hi}] with {} points",
            cfg.points
        )));
    }
    let pts = log_grid(lo, hi, cfg.points);
    let vals: Vec<f64> = pts.iter().map(|&x| objective(x)).collect();
    let b = argmax(&vals).ok_or_else(|| Error::Numerical("grid objective is not finite anywhere".into()))?;
    let left = pts[b.saturating_sub(1)];
    let right = pts[(b + 1).min(pts.len() - 1)];
    let fine = log_grid(left, right, 2 * cfg.refine.max(1) + 1);
    let fine_vals: Vec<f64> = fine.iter().map(|&x| objective(x)).collect();
    match argmax(&fine_vals) {
        Some(i) if fine_vals[i] > vals[b] => Ok(fine[i]),
        _ => Ok(pts[b]),
    }
}

/// Interval guaranteed to contain the maximizer of [`eta_log_objective`].
fn wendel_bracket(sigma: f64, prior: &GammaParams, ln_1mv: f64, cfg: &GridConfig) -> (f64, f64) {
    let coarse = log_grid(cfg.min_eta, cfg.max_eta, cfg.points);
    let base = |x: f64| (prior.shape - 1.0) * x.ln() - prior.rate * x + (x - 1.0) * ln_1mv;
    let lower: Vec<f64> = coarse.iter().map(|&x| base(x) + ln_wendel_bounds(sigma, x).0).collect();
    let upper: Vec<f64> = coarse.iter().map(|&x| base(x) + ln_wendel_bounds(sigma, x).1).collect();
    let floor = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..coarse.len()).filter(|&i| upper[i] >= floor).collect();
    match (keep.first(), keep.last()) {
        (Some(&a), Some(&b)) => (coarse[a.saturating_sub(1)], coarse[(b + 1).min(coarse.len() - 1)]),
        _ => (cfg.min_eta, cfg.max_eta),
    }
}

/// Grid point estimate of a stick concentration. When `current` is given the
/// result never scores below it, so repeated updates cannot lose ground.
pub fn eta_point_estimate_grid(
    sigma: f64,
    prior: &GammaParams,
    ln_1mv: f64,
    current: Option<f64>,
    cfg: &GridConfig,
) -> Result<f64> {
    let (lo, hi) = wendel_bracket(sigma, prior, ln_1mv, cfg);
    let f = |x: f64| eta_log_objective(sigma, prior, ln_1mv, x);
    let best = grid_maximize(f, lo, hi.max(lo * 1.000_001), cfg)?;
    Ok(match current {
        Some(c) if c > 0.0 && f(c) >= f(best) => c,
        _ => best,
    })
}

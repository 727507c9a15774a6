//! Fixed-size expectation maximization baseline.
//!
//! Controllers keep a fixed number of nodes and point-valued parameters. The
//! M-step sets each row to its normalized soft counts, which never decreases
//! the empirical value.

use super::estep::e_step;
use super::EpisodeSet;
use crate::error::{Error, Result};
use crate::fsc::{init_from_episodes, FscParams, FscTables, JointFsc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub nodes: usize,
    pub max_iter: usize,
    /// Relative change of `V̂` below which iteration stops.
    pub tol: f64,
    pub seed: u64,
    pub init_smoothing: f64,
    /// Weight of a random row mixed into every initial row.
    pub init_noise: f64,
}

impl EmConfig {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
            init_smoothing: 0.05,
            init_noise: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub controllers: JointFsc,
    /// `ln V̂` on shifted rewards before each M-step.
    pub log_values: Vec<f64>,
    pub converged: bool,
}

fn random_mix(rows: &mut [f64], width: usize, noise: f64, rng: &mut ChaCha8Rng) {
    for row in rows.chunks_mut(width) {
        let r: Vec<f64> = (0..width).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = r.iter().sum();
        for (x, y) in row.iter_mut().zip(&r) {
            *x = (1.0 - noise) * *x + noise * y / s;
        }
    }
}

fn normalize_rows(target: &mut [f64], counts: &[f64], width: usize) {
    for (row, c) in target.chunks_mut(width).zip(counts.chunks(width)) {
        let s: f64 = c.iter().sum();
        if s > 0.0 && s.is_finite() {
            for (x, y) in row.iter_mut().zip(c) {
                *x = y / s;
            }
        }
    }
}

pub fn run_em_fixed(episodes: &EpisodeSet, dims: &[(usize, usize)], cfg: &EmConfig) -> Result<EmOutcome> {
    if cfg.nodes == 0 || cfg.max_iter == 0 {
        return Err(Error::InvalidConfig(
            "EM needs at least one node and one iteration".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.init_noise) {
        return Err(Error::InvalidConfig(format!(
            "init_noise {} outside [0, 1]",
            cfg.init_noise
        )));
    }
    if dims.len() != episodes.agents {
        return Err(Error::Shape(format!(
            "{} dimension pairs for {} agents",
            dims.len(),
            episodes.agents
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tables: Vec<FscTables> = Vec::with_capacity(dims.len());
    for (n, &(a, o)) in dims.iter().enumerate() {
        let mut t = init_from_episodes(episodes, n, cfg.nodes, a, o, cfg.init_smoothing)?.into_tables();
        random_mix(&mut t.policy, a, cfg.init_noise, &mut rng);
        random_mix(&mut t.transition, cfg.nodes, cfg.init_noise, &mut rng);
        tables.push(t);
    }
    let mut log_values = Vec::new();
    let mut converged = false;
    for iter in 0..cfg.max_iter {
        let refs: Vec<&FscTables> = tables.iter().collect();
        let est = e_step(episodes, &refs)?;
        log_values.push(est.log_value);
        for (t, c) in tables.iter_mut().zip(&est.counts) {
            normalize_rows(&mut t.policy, &c.action, t.actions);
            normalize_rows(&mut t.transition, &c.transition, t.nodes);
        }
        if iter > 0 {
            let prev = log_values[iter - 1];
            // relative change of V̂ itself
            if (est.log_value - prev).exp_m1() < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    let agents = tables.into_iter().map(FscParams::new).collect::<Result<Vec<_>>>()?;
    Ok(EmOutcome {
        controllers: JointFsc { agents },
        log_values,
        converged,
    })
}

//! Exact value of a joint controller.
//!
//! The controlled process is a Markov chain over `(state, node_1, .., node_N)`;
//! its discounted value solves `(I - γP) v = r` and is found by fixed-point
//! iteration until the residual falls below the configured tolerance.

use super::DecPomdpModel;
use crate::error::{Error, Result};
use crate::fsc::FscParams;

#[derive(Debug, Clone, Copy)]
pub struct ExactConfig {
    /// Sup-norm residual at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 1_000_000,
        }
    }
}

pub fn exact_fsc_value(model: &DecPomdpModel, controllers: &[FscParams]) -> Result<f64> {
    exact_fsc_value_with(model, controllers, &ExactConfig::default())
}

/// Contracts agent `agent`'s node axis of `input` (shape `sizes`) with `m`
/// (`sizes[agent] × sizes[agent]`, row = current node) into `out`.
fn mode_product(input: &[f64], sizes: &[usize], agent: usize, m: &[f64], out: &mut [f64]) {
    let n = sizes[agent];
    let inner: usize = sizes[agent + 1..].iter().product();
    let outer: usize = sizes[..agent].iter().product();
    for o in 0..outer {
        for z in 0..n {
            let row = &m[z * n..(z + 1) * n];
            let dst = &mut out[(o * n + z) * inner..(o * n + z + 1) * inner];
            dst.iter_mut().for_each(|x| *x = 0.0);
            for (z2, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &input[(o * n + z2) * inner..(o * n + z2 + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}

pub fn exact_fsc_value_with(model: &DecPomdpModel, controllers: &[FscParams], cfg: &ExactConfig) -> Result<f64> {
    let n = model.num_agents();
    if controllers.len() != n {
        return Err(Error::Shape(format!(
            "{} controllers for {n} agents",
            controllers.len()
        )));
    }
    for (i, c) in controllers.iter().enumerate() {
        if c.actions != model.num_actions(i) || c.observations != model.num_observations(i) {
            return Err(Error::Shape(format!(
                "controller {i} is {}×{} but the model has {} actions and {} observations",
                c.actions,
                c.observations,
                model.num_actions(i),
                model.num_observations(i)
            )));
        }
    }
    let gamma = model.discount;
    if gamma >= 1.0 {
        return Err(Error::InvalidModel(
            "exact evaluation needs a discount below one".into(),
        ));
    }
    let ns = model.num_states();
    let nja = model.num_joint_actions();
    let njo = model.num_joint_observations();
    let sizes: Vec<usize> = controllers.iter().map(|c| c.nodes).collect();
    let nz: usize = sizes.iter().product();

    let node_parts: Vec<Vec<usize>> = (0..nz).map(|z| super::unflatten(z, &sizes)).collect();
    let action_parts: Vec<Vec<usize>> = (0..nja).map(|a| model.split_joint_action(a)).collect();
    let obs_parts: Vec<Vec<usize>> = (0..njo).map(|o| model.split_joint_observation(o)).collect();

    // joint action probability per joint node
    let mut act_prob = vec![0.0; nz * nja];
    for z in 0..nz {
        for a in 0..nja {
            act_prob[z * nja + a] = (0..n)
                .map(|i| controllers[i].policy(node_parts[z][i], action_parts[a][i]))
                .product();
        }
    }
    // per-agent node transition matrices for each (action, observation)
    let node_matrix = |agent: usize, a: usize, o: usize| -> Vec<f64> {
        let c = &controllers[agent];
        (0..c.nodes).flat_map(|z| c.transition_row(z, a, o).to_vec()).collect()
    };
    let mut matrices: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for (i, c) in controllers.iter().enumerate() {
        let mut per = Vec::with_capacity(c.actions * c.observations);
        for a in 0..c.actions {
            for o in 0..c.observations {
                per.push(node_matrix(i, a, o));
            }
        }
        matrices.push(per);
    }

    let mut v = vec![0.0; ns * nz];
    let mut next = vec![0.0; ns * nz];
    let mut acc = vec![0.0; ns * nz];
    let mut buf_a = vec![0.0; nz];
    let mut buf_b = vec![0.0; nz];
    for _ in 0..cfg.max_iterations {
        next.iter_mut().for_each(|x| *x = 0.0);
        for a in 0..nja {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for s2 in 0..ns {
                for (o, &po) in model.observation_row(a, s2).iter().enumerate() {
                    if po == 0.0 {
                        continue;
                    }
                    buf_a.copy_from_slice(&v[s2 * nz..(s2 + 1) * nz]);
                    for i in 0..n {
                        let m = &matrices[i][action_parts[a][i] * controllers[i].observations + obs_parts[o][i]];
                        mode_product(&buf_a, &sizes, i, m, &mut buf_b);
                        std::mem::swap(&mut buf_a, &mut buf_b);
                    }
                    for s in 0..ns {
                        let w = model.transition_prob(s, a, s2) * po;
                        if w == 0.0 {
                            continue;
                        }
                        for (d, u) in acc[s * nz..(s + 1) * nz].iter_mut().zip(&buf_a) {
                            *d += w * u;
                        }
                    }
                }
            }
            for s in 0..ns {
                let r = model.reward(s, a);
                for z in 0..nz {
                    let p = act_prob[z * nja + a];
                    if p != 0.0 {
                        next[s * nz + z] += p * (r + gamma * acc[s * nz + z]);
                    }
                }
            }
        }
        let residual = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            return Err(Error::Numerical("exact evaluation diverged".into()));
        }
        if residual < cfg.tolerance {
            let mut total = 0.0;
            for s in 0..ns {
                for z in 0..nz {
                    let mu: f64 = (0..n).map(|i| controllers[i].initial[node_parts[z][i]]).product();
                    total += model.initial_belief[s] * mu * v[s * nz + z];
                }
            }
            return Ok(total);
        }
    }
    Err(Error::NonConvergence(format!(
        "exact evaluation did not reach residual {} in {} iterations",
        cfg.tolerance, cfg.max_iterations
    )))
}

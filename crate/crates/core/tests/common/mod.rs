//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use decsbpr::fsc::{FscParams, FscTables, JointFsc};
use decsbpr::inference::{backward_messages, forward_messages, marginals, Episode, EpisodeSet, Step};
use decsbpr::model::{parse_dpomdp, DecPomdpModel};
use decsbpr::special::ln_beta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector with every entry at least `0.02 / n`.
pub fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.02).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn random_tables(rng: &mut ChaCha8Rng, nodes: usize, actions: usize, observations: usize) -> FscTables {
    let initial = random_row(rng, nodes);
    let policy = (0..nodes).flat_map(|_| random_row(rng, actions)).collect();
    let transition = (0..nodes * actions * observations)
        .flat_map(|_| random_row(rng, nodes))
        .collect();
    FscTables::new(nodes, actions, observations, initial, policy, transition)
}

/// Random normalized controller starting in node 0.
pub fn random_fsc(rng: &mut ChaCha8Rng, nodes: usize, actions: usize, observations: usize) -> FscParams {
    let mut t = random_tables(rng, nodes, actions, observations);
    t.initial = (0..nodes).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    FscParams::new(t).unwrap()
}

/// Episode with random actions, observations, rewards in `{0, 1, 2}` and
/// behavior probabilities in `[0.1, 1]`.
pub fn random_episode(rng: &mut ChaCha8Rng, id: u64, dims: &[(usize, usize)], len: usize) -> Episode {
    let steps = (0..len)
        .map(|t| Step {
            actions: dims.iter().map(|&(a, _)| rng.random_range(0..a)).collect(),
            reward: rng.random_range(0..3) as f64,
            behavior: dims.iter().map(|_| rng.random_range(0.1..=1.0)).collect(),
            next_obs: (t + 1 < len).then(|| dims.iter().map(|&(_, o)| rng.random_range(0..o)).collect()),
        })
        .collect();
    Episode { id, steps }
}

pub fn random_set(rng: &mut ChaCha8Rng, dims: &[(usize, usize)], episodes: usize, max_len: usize) -> EpisodeSet {
    let eps = (0..episodes)
        .map(|k| {
            let len = rng.random_range(1..=max_len);
            random_episode(rng, k as u64, dims, len)
        })
        .collect();
    EpisodeSet::new(dims.len(), 0.9, 0.0, 2.0, eps).unwrap()
}

/// Every node path `z_0..z_t` of `agent` with its weight
/// `μ(z_0) π(z_0, a_0) Π_τ W(z_{τ-1}, a_{τ-1}, o_τ, z_τ) π(z_τ, a_τ)`.
pub fn path_weights(fsc: &FscTables, ep: &Episode, agent: usize, t: usize) -> Vec<(Vec<usize>, f64)> {
    let z = fsc.nodes;
    let mut out = Vec::new();
    let count = z.pow(t as u32 + 1);
    for code in 0..count {
        let mut path = Vec::with_capacity(t + 1);
        let mut c = code;
        for _ in 0..=t {
            path.push(c % z);
            c /= z;
        }
        let mut w = fsc.initial[path[0]] * fsc.policy(path[0], ep.action(agent, 0));
        for tau in 1..=t {
            let row = fsc.transition_row(path[tau - 1], ep.action(agent, tau - 1), ep.observation(agent, tau));
            w *= row[path[tau]] * fsc.policy(path[tau], ep.action(agent, tau));
        }
        out.push((path, w));
    }
    out
}

/// `p(a_{0:t} | o_{1:t})` for one agent.
pub fn prefix_likelihood(fsc: &FscTables, ep: &Episode, agent: usize, t: usize) -> f64 {
    path_weights(fsc, ep, agent, t).iter().map(|(_, w)| w).sum()
}

/// `P(z_τ = i | a_{0:t}, o_{1:t})`.
pub fn smoothed_node(fsc: &FscTables, ep: &Episode, agent: usize, t: usize, tau: usize) -> Vec<f64> {
    let paths = path_weights(fsc, ep, agent, t);
    let total: f64 = paths.iter().map(|(_, w)| w).sum();
    let mut out = vec![0.0; fsc.nodes];
    for (p, w) in &paths {
        out[p[tau]] += w / total;
    }
    out
}

/// `P(z_τ = i, z_{τ+1} = j | a_{0:t}, o_{1:t})`, flattened `i * nodes + j`.
pub fn smoothed_pair(fsc: &FscTables, ep: &Episode, agent: usize, t: usize, tau: usize) -> Vec<f64> {
    let z = fsc.nodes;
    let paths = path_weights(fsc, ep, agent, t);
    let total: f64 = paths.iter().map(|(_, w)| w).sum();
    let mut out = vec![0.0; z * z];
    for (p, w) in &paths {
        out[p[tau] * z + p[tau + 1]] += w / total;
    }
    out
}

/// `p(a_{τ+1:t} | z_τ = i, o_{τ+1:t})`, summed over node suffixes.
pub fn suffix_likelihood(fsc: &FscTables, ep: &Episode, agent: usize, t: usize, tau: usize, node: usize) -> f64 {
    if tau == t {
        return 1.0;
    }
    let row = fsc.transition_row(node, ep.action(agent, tau), ep.observation(agent, tau + 1));
    (0..fsc.nodes)
        .map(|j| row[j] * fsc.policy(j, ep.action(agent, tau + 1)) * suffix_likelihood(fsc, ep, agent, t, tau + 1, j))
        .sum()
}

/// E-step quantities by direct enumeration.
pub struct BruteEStep {
    pub log_value: f64,
    pub nu: Vec<Vec<f64>>,
    pub action: Vec<Vec<f64>>,
    pub transition: Vec<Vec<f64>>,
}

pub fn brute_e_step(set: &EpisodeSet, controllers: &[&FscTables]) -> BruteEStep {
    let k = set.len() as f64;
    let mut terms: Vec<Vec<f64>> = Vec::new();
    for ep in &set.episodes {
        let mut row = Vec::new();
        let mut q = 1.0;
        for t in 0..ep.len() {
            q *= ep.steps[t].behavior.iter().product::<f64>();
            let lik: f64 = controllers
                .iter()
                .enumerate()
                .map(|(n, c)| prefix_likelihood(c, ep, n, t))
                .product();
            row.push(set.gamma.powi(t as i32) * (ep.steps[t].reward - set.r_min) * lik / q);
        }
        terms.push(row);
    }
    let value = terms.iter().flatten().sum::<f64>() / k;
    let nu: Vec<Vec<f64>> = terms.iter().map(|r| r.iter().map(|x| x / value).collect()).collect();
    let mut action: Vec<Vec<f64>> = controllers.iter().map(|c| vec![0.0; c.nodes * c.actions]).collect();
    let mut transition: Vec<Vec<f64>> = controllers
        .iter()
        .map(|c| vec![0.0; c.nodes * c.actions * c.observations * c.nodes])
        .collect();
    for (ep, nus) in set.episodes.iter().zip(&nu) {
        for (t, &v) in nus.iter().enumerate() {
            let w = v / k;
            if w == 0.0 {
                continue;
            }
            for (n, c) in controllers.iter().enumerate() {
                let z = c.nodes;
                for tau in 0..=t {
                    let phi = smoothed_node(c, ep, n, t, tau);
                    let a = ep.action(n, tau);
                    for i in 0..z {
                        action[n][i * c.actions + a] += w * phi[i];
                    }
                    if tau < t {
                        let xi = smoothed_pair(c, ep, n, t, tau);
                        let o = ep.observation(n, tau + 1);
                        for i in 0..z {
                            for j in 0..z {
                                transition[n][((i * c.actions + a) * c.observations + o) * z + j] += w * xi[i * z + j];
                            }
                        }
                    }
                }
            }
        }
    }
    BruteEStep {
        log_value: value.ln(),
        nu,
        action,
        transition,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest disagreement between the message-passing quantities and path
/// enumeration (backward messages relative to their largest entry).
pub fn message_error(fsc: &FscTables, ep: &Episode, agent: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let fwd = forward_messages(fsc, ep, agent).unwrap();
    for tau in 0..ep.len() {
        worst = worst.max(max_abs_diff(&fwd.alpha[tau], &smoothed_node(fsc, ep, agent, tau, tau)));
        let prev = if tau == 0 {
            1.0
        } else {
            prefix_likelihood(fsc, ep, agent, tau - 1)
        };
        let step = prefix_likelihood(fsc, ep, agent, tau) / prev;
        worst = worst.max((fwd.step_likelihood[tau] - step).abs());
    }
    let targets: Vec<usize> = (0..ep.len()).collect();
    for bwd in backward_messages(fsc, ep, agent, &fwd, &targets).unwrap() {
        let t = bwd.target;
        for tau in 0..=t {
            let scale: f64 = fwd.step_likelihood[tau..=t].iter().product();
            let expect: Vec<f64> = (0..fsc.nodes)
                .map(|i| suffix_likelihood(fsc, ep, agent, t, tau, i) / scale)
                .collect();
            let rel = max_abs_diff(&bwd.beta[tau], &expect) / expect.iter().cloned().fold(1.0, f64::max);
            worst = worst.max(rel);
        }
        let m = marginals(fsc, ep, agent, &fwd, &bwd);
        for tau in 0..=t {
            worst = worst.max(max_abs_diff(&m.node[tau], &smoothed_node(fsc, ep, agent, t, tau)));
        }
        for tau in 0..t {
            worst = worst.max(max_abs_diff(&m.pair[tau], &smoothed_pair(fsc, ep, agent, t, tau)));
        }
    }
    worst
}

/// Two states, two agents with two actions and two observations each.
pub const TOY_MODEL: &str = "\
agents: 2
discount: 0.5
values: reward
states: s0 s1
start:
0.6 0.4
actions:
2
2
observations:
2
2
T: * * : s0 : 0.7 0.3
T: * * : s1 : 0.2 0.8
T: 1 1 : s0 : 0.1 0.9
T: 0 0 : s1 : 0.9 0.1
O: * * : s0 : 0.6 0.2 0.15 0.05
O: * * : s1 : 0.05 0.15 0.2 0.6
R: 0 0 : s0 : * : * : 1
R: 1 1 : s1 : * : * : 3
R: 0 1 : * : * : * : -1
R: 1 0 : s0 : * : * : 0.5
";

pub fn toy_model() -> DecPomdpModel {
    parse_dpomdp(TOY_MODEL).unwrap()
}

pub fn benchmark_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

pub fn benchmark(name: &str) -> DecPomdpModel {
    let path = benchmark_dir().join(format!("{name}.dpomdp"));
    parse_dpomdp(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn expert(name: &str) -> JointFsc {
    let path = benchmark_dir().join(format!("{name}.expert.json"));
    JointFsc::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Tanh-sinh rule on `(0, 1)`; `f` receives `x` and `1 - x` computed
/// separately so that both endpoints keep full precision.
pub fn tanh_sinh(f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    for k in -448i32..=448 {
        let t = k as f64 * h;
        let u = half_pi * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let y = 1.0 / (1.0 + (2.0 * u).exp());
        if x == 0.0 || y == 0.0 {
            continue;
        }
        let w = half_pi * t.cosh() * 2.0 * x * y;
        let v = f(x, y);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * h
}

pub fn beta_density(a: f64, b: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| ((a - 1.0) * x.ln() + (b - 1.0) * y.ln() - ln_beta(a, b)).exp()
}

//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! Runs on a single rayon thread so that the timing checks are meaningful.
//! The process exits nonzero on a failed criterion only when
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use common::*;
use decsbpr::explore::BehaviorPolicy;
use decsbpr::fsc::{FscParams, FscTables};
use decsbpr::inference::{
    empirical_value, run_em_fixed, run_vb, EmConfig, Episode, EpisodeSet, EvidenceWeight, IterationRecord, Step,
    VbConfig,
};
use decsbpr::model::{exact_fsc_value, DecPomdpModel};
use decsbpr::sbprior::{
    beta_log_moments, dirichlet_log_expectations, gdd_mean, stick_breaking_weights, under_normalized_weights, SbPrior,
};
use decsbpr::sim::{collect_episodes, offline_trial, semi_random_behavior, SimConfig, TrialConfig, TrialOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use std::time::Instant;

struct Report {
    lines: Vec<(usize, bool, String)>,
    /// Every variational run: benchmark label and its iteration trace.
    traces: Vec<(String, Vec<IterationRecord>)>,
}

impl Report {
    fn record(&mut self, criterion: usize, pass: bool, detail: String) {
        eprintln!("criterion {criterion} done: {detail}");
        self.lines.push((criterion, pass, detail));
    }
}

fn prior() -> SbPrior {
    SbPrior::new(0.1, 1.0, 0.1, 1e-6).unwrap()
}

fn trial_config(truncation: usize, seed: u64) -> TrialConfig {
    let mut vb = VbConfig::new(truncation, prior());
    vb.evidence = EvidenceWeight::Total;
    let mut cfg = TrialConfig::new(vb);
    cfg.seed = seed;
    cfg
}

fn dims_of(model: &DecPomdpModel) -> Vec<(usize, usize)> {
    (0..model.num_agents())
        .map(|n| (model.num_actions(n), model.num_observations(n)))
        .collect()
}

/// Best of `runs` seeded trials by evaluated value.
fn best_trial(report: &mut Report, name: &str, truncation: usize, runs: u64) -> (TrialOutcome, u64, f64) {
    let model = benchmark(name);
    let expert = expert(name);
    let start = Instant::now();
    let mut best: Option<(TrialOutcome, u64)> = None;
    for seed in 0..runs {
        let out = offline_trial(&model, Some(&expert), &trial_config(truncation, seed)).unwrap();
        eprintln!(
            "  {name} truncation {truncation} seed {seed}: {:.3} sizes {:?}",
            out.evaluation.mean, out.fit.sizes
        );
        report
            .traces
            .push((format!("{name}/{truncation}/{seed}"), out.fit.trace.clone()));
        if best
            .as_ref()
            .is_none_or(|(b, _)| out.evaluation.mean > b.evaluation.mean)
        {
            best = Some((out, seed));
        }
    }
    let (out, seed) = best.unwrap();
    (out, seed, start.elapsed().as_secs_f64())
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let nodes = 1 + case % 3;
        let dims = [(2 + case % 2, 2 + (case / 3) % 2)];
        let fsc = random_tables(&mut r, nodes, dims[0].0, dims[0].1);
        let ep = random_episode(&mut r, case as u64, &dims, 1 + case % 5);
        worst = worst.max(message_error(&fsc, &ep, 0));
    }
    let secs = start.elapsed().as_secs_f64();
    report.record(
        1,
        worst < 1e-9 && secs < 10.0,
        format!("worst deviation {worst:.1e} over 200 controllers in {secs:.2} s"),
    );
}

fn criterion_2(report: &mut Report) {
    let start = Instant::now();
    let mut r = rng(102);
    let mut stick_err: f64 = 0.0;
    for _ in 0..1000 {
        let len = r.random_range(0..40);
        let sticks: Vec<f64> = (0..len).map(|_| r.random::<f64>()).collect();
        stick_err = stick_err.max((stick_breaking_weights(&sticks).iter().sum::<f64>() - 1.0).abs());
    }
    let alpha = [0.7, 2.0, 1.3, 0.25, 4.0];
    let d = alpha.len() - 1;
    let v: Vec<f64> = alpha[..d].to_vec();
    let w: Vec<f64> = (0..d).map(|i| alpha[i + 1..].iter().sum()).collect();
    let total: f64 = alpha.iter().sum();
    let mut gdd_err: f64 = 0.0;
    for (m, a) in gdd_mean(&v, &w).iter().zip(&alpha) {
        gdd_err = gdd_err.max((m - a / total).abs());
    }
    let (ln_v, ln_1mv): (Vec<f64>, Vec<f64>) = v.iter().zip(&w).map(|(&a, &b)| beta_log_moments(a, b)).unzip();
    let logs = under_normalized_weights(&ln_v, &ln_1mv);
    for (s, e) in logs.iter().zip(dirichlet_log_expectations(&alpha)) {
        gdd_err = gdd_err.max((s.ln() - e).abs());
    }
    let mut quad_err: f64 = 0.0;
    for &(a, b) in &[(2.0, 3.0), (0.3, 0.3), (0.5, 2.0), (1.1, 100.0), (40.0, 0.9)] {
        let dens = beta_density(a, b);
        let (e1, e2) = beta_log_moments(a, b);
        quad_err = quad_err.max((e1 - tanh_sinh(|x, y| x.ln() * dens(x, y))).abs());
        quad_err = quad_err.max((e2 - tanh_sinh(|x, y| y.ln() * dens(x, y))).abs());
    }
    let (v, w) = ([1.5, 2.0, 0.7], [3.0, 1.0, 2.0]);
    let betas: Vec<Beta<f64>> = v.iter().zip(&w).map(|(&a, &b)| Beta::new(a, b).unwrap()).collect();
    let mut mc = ChaCha8Rng::seed_from_u64(2024);
    let n = 1_000_000;
    let (mut sum, mut sq) = ([0.0; 4], [0.0; 4]);
    let mut sticks = [0.0; 3];
    for _ in 0..n {
        for (s, b) in sticks.iter_mut().zip(&betas) {
            *s = b.sample(&mut mc);
        }
        for (i, p) in stick_breaking_weights(&sticks).into_iter().enumerate() {
            sum[i] += p;
            sq[i] += p * p;
        }
    }
    let mean = gdd_mean(&v, &w);
    let mut worst_se: f64 = 0.0;
    for i in 0..4 {
        let m = sum[i] / n as f64;
        let se = ((sq[i] / n as f64 - m * m) / n as f64).sqrt();
        worst_se = worst_se.max((m - mean[i]).abs() / se);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = stick_err < 1e-12 && gdd_err < 1e-10 && quad_err < 1e-8 && worst_se < 3.0 && secs < 60.0;
    report.record(
        2,
        pass,
        format!(
            "sticks {stick_err:.1e}, GDD to Dirichlet {gdd_err:.1e}, quadrature {quad_err:.1e}, \
             Monte-Carlo {worst_se:.2} SE, {secs:.1} s"
        ),
    );
}

fn criterion_5(report: &mut Report) {
    let start = Instant::now();
    let model = toy_model();
    let mut r = rng(105);
    let agents = vec![random_fsc(&mut r, 2, 2, 2), random_fsc(&mut r, 2, 2, 2)];
    let exact = exact_fsc_value(&model, &agents).unwrap();
    let behaviors = vec![BehaviorPolicy::uniform(2, 2), BehaviorPolicy::uniform(2, 2)];
    let (set, _) = collect_episodes(&model, &behaviors, &SimConfig::new(10_000, 60, 5)).unwrap();
    let tables: Vec<&FscTables> = agents.iter().map(|f| &**f).collect();
    let est = empirical_value(&set, &tables).unwrap();
    let z = (est.value - exact).abs() / est.std_err;
    let secs = start.elapsed().as_secs_f64();
    report.record(
        5,
        z < 3.0 && secs < 60.0,
        format!(
            "estimate {:.4} ± {:.4} vs exact {exact:.4} ({z:.2} SE), {secs:.1} s",
            est.value, est.std_err
        ),
    );
}

fn criterion_6(report: &mut Report) {
    let (out, seed, secs) = best_trial(report, "broadcast", 10, 5);
    let sizes = out.fit.sizes.clone();
    let pass = out.evaluation.mean >= 9.0 && sizes.iter().all(|&z| z <= 4) && secs < 300.0;
    report.record(
        6,
        pass,
        format!(
            "best of 5 is {:.3} ± {:.3} (seed {seed}) with sizes {sizes:?}, target >= 9.0 and sizes <= 4, {secs:.1} s",
            out.evaluation.mean, out.evaluation.std_err
        ),
    );
}

fn criterion_7(report: &mut Report) {
    let (out, seed, secs) = best_trial(report, "recycling", 10, 5);
    let (lo, hi) = (31.26 * 0.85, 31.26 * 1.15);
    let v = out.evaluation.mean;
    report.record(
        7,
        v >= lo && v <= hi && secs < 600.0,
        format!(
            "best of 5 is {v:.3} ± {:.3} (seed {seed}) with sizes {:?}, target [{lo:.2}, {hi:.2}], {secs:.1} s",
            out.evaluation.std_err, out.fit.sizes
        ),
    );
}

fn criterion_8(report: &mut Report) {
    let model = benchmark("dectiger");
    let uniform: Vec<FscParams> = dims_of(&model).iter().map(|&(a, o)| FscParams::uniform(a, o)).collect();
    let random_value = exact_fsc_value(&model, &uniform).unwrap();
    let (out, seed, secs) = best_trial(report, "dectiger", 10, 10);
    let v = out.evaluation.mean;
    report.record(
        8,
        v >= -32.31 && v > random_value && secs < 900.0,
        format!(
            "best of 10 is {v:.3} ± {:.3} (seed {seed}), target >= -32.31 and above uniform {random_value:.3}, {secs:.1} s",
            out.evaluation.std_err
        ),
    );
}

fn criterion_9(report: &mut Report) {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["broadcast", "recycling", "dectiger"] {
        let (out, _, _) = best_trial(report, name, 50, 1);
        pass &= out.fit.sizes.iter().all(|&z| z < 15);
        parts.push(format!("{name} {:?}", out.fit.sizes));
    }
    report.record(9, pass, format!("sizes at truncation 50: {}", parts.join(", ")));
}

fn criterion_10(report: &mut Report) {
    let start = Instant::now();
    let model = benchmark("recycling");
    let dims = dims_of(&model);
    let expert = expert("recycling");
    let mut best = [f64::NEG_INFINITY; 12];
    for seed in 0..3u64 {
        let behaviors = semi_random_behavior(&model, Some(&expert), 0.3).unwrap();
        let (set, _) = collect_episodes(&model, &behaviors, &SimConfig::new(300, 50, seed)).unwrap();
        for nodes in 1..=12 {
            let mut cfg = EmConfig::new(nodes);
            cfg.seed = seed;
            let out = run_em_fixed(&set, &dims, &cfg).unwrap();
            let v = exact_fsc_value(&model, &out.controllers.agents).unwrap();
            best[nodes - 1] = best[nodes - 1].max(v);
        }
    }
    let (arg, top) = best.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let curve: Vec<String> = best.iter().map(|v| format!("{v:.2}")).collect();
    let secs = start.elapsed().as_secs_f64();
    report.record(
        10,
        best[0] < top,
        format!(
            "value at 1 node {:.3}, maximum {top:.3} at {} nodes; curve [{}], {secs:.1} s",
            best[0],
            arg + 1,
            curve.join(", ")
        ),
    );
}

/// Random logged episodes of fixed length for `agents` agents with two
/// actions and two observations each.
fn synthetic_set(agents: usize, episodes: usize, len: usize, seed: u64) -> EpisodeSet {
    let mut r = rng(seed);
    let eps = (0..episodes)
        .map(|k| Episode {
            id: k as u64,
            steps: (0..len)
                .map(|t| Step {
                    actions: (0..agents).map(|_| r.random_range(0..2)).collect(),
                    reward: r.random_range(0..3) as f64,
                    behavior: vec![0.5; agents],
                    next_obs: (t + 1 < len).then(|| (0..agents).map(|_| r.random_range(0..2)).collect()),
                })
                .collect(),
        })
        .collect();
    EpisodeSet::new(agents, 0.95, 0.0, 2.0, eps).unwrap()
}

/// Seconds per variational iteration, best of three repetitions.
fn seconds_per_iteration(set: &EpisodeSet, dims: &[(usize, usize)]) -> f64 {
    let mut cfg = VbConfig::new(10, prior());
    cfg.tol = 0.0;
    cfg.max_iter = 5;
    (0..3)
        .map(|_| {
            let start = Instant::now();
            let out = run_vb(set, dims, &cfg).unwrap();
            start.elapsed().as_secs_f64() / out.trace.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_11(report: &mut Report) {
    let model = benchmark("broadcast");
    let dims = dims_of(&model);
    let behaviors = semi_random_behavior(&model, Some(&expert("broadcast")), 0.3).unwrap();
    let (small, _) = collect_episodes(&model, &behaviors, &SimConfig::new(200, 50, 11)).unwrap();
    let (large, _) = collect_episodes(&model, &behaviors, &SimConfig::new(400, 50, 11)).unwrap();
    let k_ratio = seconds_per_iteration(&large, &dims) / seconds_per_iteration(&small, &dims);
    let two = synthetic_set(2, 200, 40, 12);
    let four = synthetic_set(4, 200, 40, 12);
    let n_ratio = seconds_per_iteration(&four, &[(2, 2); 4]) / seconds_per_iteration(&two, &[(2, 2); 2]);
    let ok = |r: f64| (1.5..=2.5).contains(&r);
    report.record(
        11,
        ok(k_ratio) && ok(n_ratio),
        format!("time ratio {k_ratio:.2} for doubled episodes, {n_ratio:.2} for doubled agents, target [1.5, 2.5]"),
    );
}

fn criteria_3_and_4(report: &mut Report) {
    let mut worst_step = f64::INFINITY;
    let mut worst_label = String::new();
    let mut worst_nu: f64 = 0.0;
    let mut iterations = 0;
    for (label, trace) in &report.traces {
        iterations += trace.len();
        for w in trace.windows(2) {
            let step = w[1].lower_bound - w[0].lower_bound;
            if step < worst_step {
                worst_step = step;
                worst_label = label.clone();
            }
        }
        worst_nu = trace.iter().map(|r| r.nu_sum_error).fold(worst_nu, f64::max);
    }
    let runs = report.traces.len();
    report.record(
        3,
        worst_step >= -1e-8,
        format!("smallest bound step {worst_step:.2e} ({worst_label}) over {runs} runs, {iterations} iterations"),
    );
    report.record(
        4,
        worst_nu < 1e-6,
        format!("largest |sum of reweighted rewards - K| is {worst_nu:.1e} over {iterations} E-steps"),
    );
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let mut report = Report {
        lines: Vec::new(),
        traces: Vec::new(),
    };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    criterion_9(&mut report);
    criterion_10(&mut report);
    criterion_11(&mut report);
    criteria_3_and_4(&mut report);
    report.lines.sort_by_key(|l| l.0);
    let mut failed = 0;
    for (n, pass, detail) in &report.lines {
        println!("criterion {n}: {} {detail}", if *pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", report.lines.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

//! Exact values, Monte-Carlo evaluation and importance-weighted estimates
//! checked against each other.

mod common;

use common::*;
use decsbpr::explore::{behavior_action_prob, BehaviorPolicy};
use decsbpr::fsc::{FscParams, FscTables, JointFsc, LocalHistory};
use decsbpr::inference::empirical_value;
use decsbpr::model::{exact_fsc_value, parse_dpomdp};
use decsbpr::sim::{collect_episodes, evaluate_policy, SimConfig};

fn permuted(f: &FscParams, perm: &[usize]) -> FscParams {
    let (z, a, o) = (f.nodes, f.actions, f.observations);
    let mut t = FscTables::new(z, a, o, vec![0.0; z], vec![0.0; z * a], vec![0.0; z * a * o * z]);
    for i in 0..z {
        t.initial[perm[i]] = f.initial[i];
        for x in 0..a {
            t.policy[perm[i] * a + x] = f.policy(i, x);
            for y in 0..o {
                for j in 0..z {
                    t.transition[((perm[i] * a + x) * o + y) * z + perm[j]] = f.transition_row(i, x, y)[j];
                }
            }
        }
    }
    FscParams::new(t).unwrap()
}

#[test]
fn exact_value_matches_simulation_on_toy_model() {
    let model = toy_model();
    let mut r = rng(21);
    let agents = vec![random_fsc(&mut r, 2, 2, 2), random_fsc(&mut r, 2, 2, 2)];
    let exact = exact_fsc_value(&model, &agents).unwrap();
    let mc = evaluate_policy(&model, &JointFsc { agents }, 100_000, 60, 5).unwrap();
    assert!(
        (mc.mean - exact).abs() < 3.0 * mc.std_err,
        "{} ± {} vs {exact}",
        mc.mean,
        mc.std_err
    );
}

#[test]
fn exact_value_matches_simulation_on_dec_tiger() {
    let model = benchmark("dectiger");
    let mut r = rng(22);
    let agents = vec![random_fsc(&mut r, 3, 3, 2), random_fsc(&mut r, 3, 3, 2)];
    let exact = exact_fsc_value(&model, &agents).unwrap();
    let mc = evaluate_policy(&model, &JointFsc { agents }, 20_000, 200, 6).unwrap();
    assert!(
        (mc.mean - exact).abs() < 3.0 * mc.std_err,
        "{} ± {} vs {exact}",
        mc.mean,
        mc.std_err
    );
}

#[test]
fn listening_forever_in_dec_tiger() {
    let model = benchmark("dectiger");
    let listen = FscParams::new(FscTables::new(1, 3, 2, vec![1.0], vec![1.0, 0.0, 0.0], vec![1.0; 6])).unwrap();
    let v = exact_fsc_value(&model, &[listen.clone(), listen]).unwrap();
    let joint_listen = model.reward(0, model.joint_action_index(&[0, 0]));
    assert!((v - joint_listen / (1.0 - model.discount)).abs() < 1e-8);
    assert!((v + 20.0).abs() < 1e-8);
}

#[test]
fn constant_reward_model() {
    let text = "agents: 1\ndiscount: 0.9\nvalues: reward\nstates: 1\nstart:\nuniform\nactions:\n2\nobservations:\n2\n\
                T: * : identity\nO: * : * : uniform\nR: * : * : * : * : 1.0\n";
    let model = parse_dpomdp(text).unwrap();
    let mut r = rng(23);
    let f = random_fsc(&mut r, 2, 2, 2);
    assert!((exact_fsc_value(&model, std::slice::from_ref(&f)).unwrap() - 10.0).abs() < 1e-8);
    let ev = evaluate_policy(&model, &JointFsc { agents: vec![f] }, 10, 1000, 0).unwrap();
    assert!((ev.mean - 10.0).abs() < 1e-9);
}

#[test]
fn exact_value_ignores_node_labels() {
    let model = toy_model();
    let mut r = rng(24);
    let a = random_fsc(&mut r, 3, 2, 2);
    let b = random_fsc(&mut r, 2, 2, 2);
    let v = exact_fsc_value(&model, &[a.clone(), b.clone()]).unwrap();
    // node 0 must stay first because controllers start there
    let mut mu = a.clone().into_tables();
    mu.initial = vec![0.2, 0.5, 0.3];
    let a = FscParams::new(mu).unwrap();
    let v2 = exact_fsc_value(&model, &[a.clone(), b.clone()]).unwrap();
    let v3 = exact_fsc_value(&model, &[permuted(&a, &[2, 0, 1]), permuted(&b, &[1, 0])]).unwrap();
    assert!((v2 - v3).abs() < 1e-9);
    assert!((v - v2).abs() > 1e-6);
}

#[test]
fn reward_shift_moves_value_by_geometric_sum() {
    let mut model = toy_model();
    let mut r = rng(25);
    let agents = vec![random_fsc(&mut r, 2, 2, 2), random_fsc(&mut r, 3, 2, 2)];
    let v = exact_fsc_value(&model, &agents).unwrap();
    model.reward.iter_mut().for_each(|x| *x += 1.75);
    let shifted = exact_fsc_value(&model, &agents).unwrap();
    assert!((shifted - v - 1.75 / (1.0 - model.discount)).abs() < 1e-8);
}

#[test]
fn empirical_value_is_unbiased() {
    let model = toy_model();
    let mut r = rng(26);
    let agents = vec![random_fsc(&mut r, 2, 2, 2), random_fsc(&mut r, 2, 2, 2)];
    let exact = exact_fsc_value(&model, &agents).unwrap();
    let behaviors: Vec<BehaviorPolicy> = agents
        .iter()
        .map(|f| BehaviorPolicy::new(f.clone(), vec![0.8; f.nodes]).unwrap())
        .collect();
    let (set, _) = collect_episodes(&model, &behaviors, &SimConfig::new(10_000, 40, 9)).unwrap();
    let tables: Vec<&FscTables> = agents.iter().map(|f| &**f).collect();
    let est = empirical_value(&set, &tables).unwrap();
    assert!(
        (est.value - exact).abs() < 3.0 * est.std_err,
        "{} ± {} vs {exact}",
        est.value,
        est.std_err
    );
}

#[test]
fn on_policy_weights_are_one() {
    let model = toy_model();
    let mut r = rng(27);
    let agents = [random_fsc(&mut r, 2, 2, 2), random_fsc(&mut r, 2, 2, 2)];
    let behaviors: Vec<BehaviorPolicy> = agents
        .iter()
        .map(|f| BehaviorPolicy::expert_mix(f.clone(), 1.0).unwrap())
        .collect();
    let (set, _) = collect_episodes(&model, &behaviors, &SimConfig::new(200, 20, 3)).unwrap();
    let tables: Vec<&FscTables> = agents.iter().map(|f| &**f).collect();
    let est = empirical_value(&set, &tables).unwrap();
    let mean_return: f64 = set.episodes.iter().map(|e| e.discounted_return(set.gamma)).sum::<f64>() / 200.0;
    assert!((est.value - mean_return).abs() < 1e-9);
}

#[test]
fn recorded_behavior_probabilities_replay() {
    let model = benchmark("broadcast");
    let mut r = rng(28);
    let behaviors: Vec<BehaviorPolicy> = (0..2)
        .map(|_| {
            let f = random_fsc(&mut r, 3, 2, 2);
            BehaviorPolicy::new(f, vec![0.3, 0.9, 0.6]).unwrap()
        })
        .collect();
    let (set, _) = collect_episodes(&model, &behaviors, &SimConfig::new(40, 15, 8)).unwrap();
    for ep in &set.episodes {
        for (n, behavior) in behaviors.iter().enumerate() {
            let mut h = LocalHistory::default();
            for t in 0..ep.len() {
                let q = behavior_action_prob(behavior, &h, ep.action(n, t)).unwrap();
                assert!((q - ep.steps[t].behavior[n]).abs() < 1e-12);
                assert!(q > 0.0);
                if t + 1 < ep.len() {
                    h.actions.push(ep.action(n, t));
                    h.observations.push(ep.observation(n, t + 1));
                }
            }
        }
    }
}

#[test]
fn collection_is_reproducible_and_bounded() {
    let model = benchmark("recycling");
    let behaviors = decsbpr::sim::semi_random_behavior(&model, Some(&expert("recycling")), 0.3).unwrap();
    let cfg = SimConfig::new(50, 30, 77);
    let serialize = || {
        let (set, _) = collect_episodes(&model, &behaviors, &cfg).unwrap();
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        (set, buf)
    };
    let (set, a) = serialize();
    let (_, b) = serialize();
    assert_eq!(a, b);
    let (lo, hi) = model.reward_range();
    let g = model.discount;
    for ep in &set.episodes {
        let ret = ep.discounted_return(g);
        assert!(ret >= lo / (1.0 - g) - 1e-9 && ret <= hi / (1.0 - g) + 1e-9);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let model = benchmark("broadcast");
    let joint = expert("broadcast");
    let a = evaluate_policy(&model, &joint, 20, 100, 4).unwrap();
    let b = evaluate_policy(&model, &joint, 20, 100, 4).unwrap();
    assert_eq!(a, b);
}

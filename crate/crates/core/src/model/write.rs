//! Canonical `.dpomdp` text output.
//!
//! Every nonzero table entry is written explicitly with index-based
//! references, so parsing the output reproduces the model exactly.

use super::DecPomdpModel;
use std::fmt::Write;

fn names_line(names: &[String]) -> String {
    let default = names.iter().enumerate().all(|(i, n)| *n == i.to_string());
    if default {
        names.len().to_string()
    } else {
        names.join(" ")
    }
}

fn joint(parts: &[usize]) -> String {
    parts.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_dpomdp(model: &DecPomdpModel) -> String {
    let mut out = String::new();
    let (ns, nja) = (model.num_states(), model.num_joint_actions());
    let _ = writeln!(out, "agents: {}", names_line(&model.agent_names));
    let _ = writeln!(out, "discount: {}", model.discount);
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", names_line(&model.state_names));
    let _ = writeln!(out, "start:");
    let _ = writeln!(
        out,
        "{}",
        model
            .initial_belief
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(out, "actions:");
    for names in &model.action_names {
        let _ = writeln!(out, "{}", names_line(names));
    }
    let _ = writeln!(out, "observations:");
    for names in &model.observation_names {
        let _ = writeln!(out, "{}", names_line(names));
    }
    for s in 0..ns {
        for a in 0..nja {
            let ja = joint(&model.split_joint_action(a));
            for (s2, &p) in model.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    let _ = writeln!(out, "T: {ja} : {s} : {s2} : {p}");
                }
            }
        }
    }
    for a in 0..nja {
        let ja = joint(&model.split_joint_action(a));
        for s2 in 0..ns {
            for (o, &p) in model.observation_row(a, s2).iter().enumerate() {
                if p != 0.0 {
                    let jo = joint(&model.split_joint_observation(o));
                    let _ = writeln!(out, "O: {ja} : {s2} : {jo} : {p}");
                }
            }
        }
    }
    for s in 0..ns {
        for a in 0..nja {
            let r = model.reward(s, a);
            if r != 0.0 {
                let ja = joint(&model.split_joint_action(a));
                let _ = writeln!(out, "R: {ja} : {s} : * : * : {r}");
            }
        }
    }
    out
}

//! Reader for the `.dpomdp` text format.
//!
//! Header keywords (`agents`, `discount`, `values`, `states`, `start`,
//! `actions`, `observations`) precede `T:`, `O:` and `R:` entries. Entries
//! accept `*` wildcards, names or indices, and matrix forms whose numbers may
//! continue on following lines. Later entries overwrite earlier ones.

use super::{flatten, DecPomdpModel};
use crate::error::{Error, Result};
use std::collections::HashMap;

const SUM_TOL: f64 = 1e-6;

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

struct Line {
    no: usize,
    text: String,
}

#[derive(Clone)]
enum Pick {
    All,
    One(usize),
}

/// Reward entry that does not cover every next state and observation.
struct RewardPatch {
    next: Option<usize>,
    obs: Option<usize>,
    value: f64,
}

struct Dims {
    states: usize,
    joint_actions: usize,
    joint_obs: usize,
}

struct Builder {
    agent_names: Option<Vec<String>>,
    discount: Option<f64>,
    cost: bool,
    state_names: Option<Vec<String>>,
    action_names: Option<Vec<Vec<String>>>,
    observation_names: Option<Vec<Vec<String>>>,
    start: Option<Vec<f64>>,
    tables: Option<Tables>,
}

struct Tables {
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward_base: Vec<f64>,
    reward_patches: HashMap<usize, Vec<RewardPatch>>,
    transition_line: Vec<usize>,
    observation_line: Vec<usize>,
}

/// Parses `.dpomdp` text into a validated model.
pub fn parse_dpomdp(text: &str) -> Result<DecPomdpModel> {
    let lines: Vec<Line> = text
        .lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("").trim();
            (!body.is_empty()).then(|| Line {
                no: i + 1,
                text: body.to_string(),
            })
        })
        .collect();
    let last_line = text.lines().count().max(1);
    let mut b = Builder {
        agent_names: None,
        discount: None,
        cost: false,
        state_names: None,
        action_names: None,
        observation_names: None,
        start: None,
        tables: None,
    };
    let mut pos = 0;
    while pos < lines.len() {
        let line = &lines[pos];
        pos += 1;
        let Some((key, rest)) = line.text.split_once(':') else {
            return err(line.no, format!("expected `keyword:` but found `{}`", line.text));
        };
        let key = key.trim();
        let rest = rest.trim();
        match key {
            "agents" => {
                let toks = inline_or_next(rest, &lines, &mut pos);
                b.agent_names = Some(names_or_count(&toks, line.no, "agents")?);
            }
            "discount" => b.discount = Some(number(rest, line.no)?),
            "values" => {
                b.cost = match rest {
                    "reward" => false,
                    "cost" => true,
                    other => return err(line.no, format!("values must be `reward` or `cost`, got `{other}`")),
                }
            }
            "states" => {
                let toks = inline_or_next(rest, &lines, &mut pos);
                b.state_names = Some(names_or_count(&toks, line.no, "states")?);
            }
            "actions" | "observations" => {
                let n = b.agent_names.as_ref().map(Vec::len).ok_or_else(|| Error::Parse {
                    line: line.no,
                    msg: format!("`{key}` before `agents`"),
                })?;
                let mut per_agent = Vec::with_capacity(n);
                let mut first = (!rest.is_empty()).then(|| (line.no, tokens(rest)));
                for agent in 0..n {
                    let (no, toks) = match first.take() {
                        Some(x) => x,
                        None => match lines.get(pos) {
                            Some(l) if !l.text.contains(':') => {
                                pos += 1;
                                (l.no, tokens(&l.text))
                            }
                            _ => return err(line.no, format!("missing {key} for agent {agent}")),
                        },
                    };
                    per_agent.push(names_or_count(&toks, no, key)?);
                }
                if key == "actions" {
                    b.action_names = Some(per_agent);
                } else {
                    b.observation_names = Some(per_agent);
                }
            }
            "start" => {
                let s = state_count(&b, line.no)?;
                let toks = collect_numbers_tokens(rest, &lines, &mut pos, s);
                if toks.first().map(String::as_str) == Some("uniform") {
                    b.start = Some(vec![1.0 / s as f64; s]);
                } else {
                    b.start = Some(numbers(&toks, s, line.no)?);
                }
            }
            "start include" | "start exclude" => {
                let s = state_count(&b, line.no)?;
                let names = b.state_names.as_ref().expect("checked");
                let mut chosen = vec![key == "start exclude"; s];
                for t in tokens(rest) {
                    chosen[resolve(&t, names, line.no, "state")?] = key == "start include";
                }
                let k = chosen.iter().filter(|c| **c).count();
                if k == 0 {
                    return err(line.no, "start distribution is empty");
                }
                b.start = Some(chosen.iter().map(|&c| if c { 1.0 / k as f64 } else { 0.0 }).collect());
            }
            "T" | "O" | "R" => {
                ensure_tables(&mut b, line.no)?;
                entry(&mut b, key, rest, line.no, &lines, &mut pos)?;
            }
            other => return err(line.no, format!("unknown keyword `{other}`")),
        }
    }
    finish(b, last_line)
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn inline_or_next(rest: &str, lines: &[Line], pos: &mut usize) -> Vec<String> {
    if !rest.is_empty() {
        return tokens(rest);
    }
    match lines.get(*pos) {
        Some(l) if !l.text.contains(':') => {
            *pos += 1;
            tokens(&l.text)
        }
        _ => Vec::new(),
    }
}

/// Tokens of `rest`, extended with following colon-free lines until `needed` are present.
fn collect_numbers_tokens(rest: &str, lines: &[Line], pos: &mut usize, needed: usize) -> Vec<String> {
    let mut toks = tokens(rest);
    if toks.first().is_some_and(|t| t == "uniform" || t == "identity") {
        return toks;
    }
    while toks.len() < needed {
        match lines.get(*pos) {
            Some(l) if !l.text.contains(':') => {
                toks.extend(tokens(&l.text));
                *pos += 1;
            }
            _ => break,
        }
    }
    toks
}

fn names_or_count(toks: &[String], line: usize, what: &str) -> Result<Vec<String>> {
    match toks {
        [] => err(line, format!("`{what}` needs a count or a list of names")),
        [one] if one.parse::<usize>().is_ok() => {
            let n: usize = one.parse().expect("checked");
            if n == 0 {
                return err(line, format!("`{what}` count must be positive"));
            }
            Ok((0..n).map(|i| i.to_string()).collect())
        }
        names => Ok(names.to_vec()),
    }
}

fn number(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("`{s}` is not a number"),
    })
}

fn numbers(toks: &[String], needed: usize, line: usize) -> Result<Vec<f64>> {
    if toks.len() != needed {
        return err(line, format!("expected {needed} numbers, found {}", toks.len()));
    }
    toks.iter().map(|t| number(t, line)).collect()
}

fn state_count(b: &Builder, line: usize) -> Result<usize> {
    b.state_names.as_ref().map(Vec::len).ok_or_else(|| Error::Parse {
        line,
        msg: "`states` must be declared first".into(),
    })
}

fn resolve(tok: &str, names: &[String], line: usize, what: &str) -> Result<usize> {
    if let Some(i) = names.iter().position(|n| n == tok) {
        return Ok(i);
    }
    match tok.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => err(line, format!("unknown {what} `{tok}`")),
    }
}

fn pick(tok: &str, names: &[String], line: usize, what: &str) -> Result<Pick> {
    if tok == "*" {
        Ok(Pick::All)
    } else {
        resolve(tok, names, line, what).map(Pick::One)
    }
}

fn expand(p: &Pick, n: usize) -> Vec<usize> {
    match p {
        Pick::All => (0..n).collect(),
        Pick::One(i) => vec![*i],
    }
}

/// All joint indices matched by an agent-wise spec such as `a0 * listen`.
fn joint_spec(section: &str, names: &[Vec<String>], line: usize, what: &str) -> Result<Vec<usize>> {
    let toks = tokens(section);
    let sizes: Vec<usize> = names.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    match toks.as_slice() {
        [one] if one == "*" => Ok((0..total).collect()),
        [one] if sizes.len() > 1 => match one.parse::<usize>() {
            Ok(j) if j < total => Ok(vec![j]),
            _ => err(line, format!("bad joint {what} `{one}`")),
        },
        toks if toks.len() == sizes.len() => {
            let mut out = vec![Vec::new()];
            for (agent, t) in toks.iter().enumerate() {
                let choices = expand(&pick(t, &names[agent], line, what)?, sizes[agent]);
                out = out
                    .into_iter()
                    .flat_map(|prefix| {
                        choices.iter().map(move |&c| {
                            let mut p = prefix.clone();
                            p.push(c);
                            p
                        })
                    })
                    .collect();
            }
            Ok(out.iter().map(|parts| flatten(parts, &sizes)).collect())
        }
        _ => err(line, format!("joint {what} needs {} components", sizes.len())),
    }
}

fn ensure_tables(b: &mut Builder, line: usize) -> Result<()> {
    if b.tables.is_some() {
        return Ok(());
    }
    let d = dims(b, line)?;
    b.tables = Some(Tables {
        transition: vec![0.0; d.states * d.joint_actions * d.states],
        observation: vec![0.0; d.joint_actions * d.states * d.joint_obs],
        reward_base: vec![0.0; d.states * d.joint_actions],
        reward_patches: HashMap::new(),
        transition_line: vec![0; d.states * d.joint_actions],
        observation_line: vec![0; d.joint_actions * d.states],
    });
    Ok(())
}

fn dims(b: &Builder, line: usize) -> Result<Dims> {
    let missing = |what: &str| Error::Parse {
        line,
        msg: format!("`{what}` must be declared before entries"),
    };
    let states = b.state_names.as_ref().ok_or_else(|| missing("states"))?.len();
    let joint_actions = b
        .action_names
        .as_ref()
        .ok_or_else(|| missing("actions"))?
        .iter()
        .map(Vec::len)
        .product();
    let joint_obs = b
        .observation_names
        .as_ref()
        .ok_or_else(|| missing("observations"))?
        .iter()
        .map(Vec::len)
        .product();
    Ok(Dims {
        states,
        joint_actions,
        joint_obs,
    })
}

fn check_prob(p: f64, line: usize) -> Result<f64> {
    if !(0.0..=1.0 + SUM_TOL).contains(&p) {
        return err(line, format!("probability {p} outside [0, 1]"));
    }
    Ok(p)
}

fn entry(b: &mut Builder, key: &str, rest: &str, line: usize, lines: &[Line], pos: &mut usize) -> Result<()> {
    let d = dims(b, line)?;
    let states = b.state_names.clone().expect("checked");
    let actions = b.action_names.clone().expect("checked");
    let obs_names = b.observation_names.clone().expect("checked");
    let sections: Vec<&str> = rest.split(':').map(str::trim).collect();
    let t = b.tables.as_mut().expect("allocated");
    let (ns, nja, njo) = (d.states, d.joint_actions, d.joint_obs);
    let ja = joint_spec(sections[0], &actions, line, "action")?;
    let state_pick = |s: &str| pick(s, &states, line, "state").map(|p| expand(&p, ns));
    let obs_pick = |s: &str| -> Result<Option<Vec<usize>>> {
        if s == "*" {
            Ok(None)
        } else {
            joint_spec(s, &obs_names, line, "observation").map(Some)
        }
    };
    match (key, sections.len()) {
        ("T", 4) => {
            let (from, to) = (state_pick(sections[1])?, state_pick(sections[2])?);
            let p = check_prob(number(&single(sections[3], lines, pos, line)?, line)?, line)?;
            for &a in &ja {
                for &s in &from {
                    for &s2 in &to {
                        t.transition[(s * nja + a) * ns + s2] = p;
                    }
                    t.transition_line[s * nja + a] = line;
                }
            }
        }
        ("T", 3) => {
            let from = state_pick(sections[1])?;
            let toks = collect_numbers_tokens(sections[2], lines, pos, ns);
            let row: Vec<f64> = if toks.first().map(String::as_str) == Some("uniform") {
                vec![1.0 / ns as f64; ns]
            } else {
                numbers(&toks, ns, line)?
            };
            for &p in &row {
                check_prob(p, line)?;
            }
            for &a in &ja {
                for &s in &from {
                    t.transition[(s * nja + a) * ns..(s * nja + a + 1) * ns].copy_from_slice(&row);
                    t.transition_line[s * nja + a] = line;
                }
            }
        }
        ("T", 2) => {
            let toks = collect_numbers_tokens(sections[1], lines, pos, ns * ns);
            let matrix: Vec<f64> = match toks.first().map(String::as_str) {
                Some("uniform") => vec![1.0 / ns as f64; ns * ns],
                Some("identity") => (0..ns * ns).map(|i| if i / ns == i % ns { 1.0 } else { 0.0 }).collect(),
                _ => numbers(&toks, ns * ns, line)?,
            };
            for &p in &matrix {
                check_prob(p, line)?;
            }
            for &a in &ja {
                for s in 0..ns {
                    t.transition[(s * nja + a) * ns..(s * nja + a + 1) * ns]
                        .copy_from_slice(&matrix[s * ns..(s + 1) * ns]);
                    t.transition_line[s * nja + a] = line;
                }
            }
        }
        ("O", 4) => {
            let to = state_pick(sections[1])?;
            let jo = obs_pick(sections[2])?.unwrap_or_else(|| (0..njo).collect());
            let p = check_prob(number(&single(sections[3], lines, pos, line)?, line)?, line)?;
            for &a in &ja {
                for &s2 in &to {
                    for &o in &jo {
                        t.observation[(a * ns + s2) * njo + o] = p;
                    }
                    t.observation_line[a * ns + s2] = line;
                }
            }
        }
        ("O", 3) => {
            let to = state_pick(sections[1])?;
            let toks = collect_numbers_tokens(sections[2], lines, pos, njo);
            let row: Vec<f64> = if toks.first().map(String::as_str) == Some("uniform") {
                vec![1.0 / njo as f64; njo]
            } else {
                numbers(&toks, njo, line)?
            };
            for &p in &row {
                check_prob(p, line)?;
            }
            for &a in &ja {
                for &s2 in &to {
                    t.observation[(a * ns + s2) * njo..(a * ns + s2 + 1) * njo].copy_from_slice(&row);
                    t.observation_line[a * ns + s2] = line;
                }
            }
        }
        ("O", 2) => {
            let toks = collect_numbers_tokens(sections[1], lines, pos, ns * njo);
            let matrix: Vec<f64> = if toks.first().map(String::as_str) == Some("uniform") {
                vec![1.0 / njo as f64; ns * njo]
            } else {
                numbers(&toks, ns * njo, line)?
            };
            for &p in &matrix {
                check_prob(p, line)?;
            }
            for &a in &ja {
                for s2 in 0..ns {
                    t.observation[(a * ns + s2) * njo..(a * ns + s2 + 1) * njo]
                        .copy_from_slice(&matrix[s2 * njo..(s2 + 1) * njo]);
                    t.observation_line[a * ns + s2] = line;
                }
            }
        }
        ("R", 5) => {
            let from = state_pick(sections[1])?;
            let to = if sections[2] == "*" {
                None
            } else {
                Some(state_pick(sections[2])?)
            };
            let jo = obs_pick(sections[3])?;
            let v = number(&single(sections[4], lines, pos, line)?, line)?;
            for &a in &ja {
                for &s in &from {
                    reward_write(t, s * nja + a, to.as_deref(), jo.as_deref(), v);
                }
            }
        }
        ("R", 4) => {
            let from = state_pick(sections[1])?;
            let to = state_pick(sections[2])?;
            let toks = collect_numbers_tokens(sections[3], lines, pos, njo);
            let row = numbers(&toks, njo, line)?;
            for &a in &ja {
                for &s in &from {
                    for &s2 in &to {
                        for (o, &v) in row.iter().enumerate() {
                            reward_write(t, s * nja + a, Some(&[s2]), Some(&[o]), v);
                        }
                    }
                }
            }
        }
        ("R", 3) => {
            let from = state_pick(sections[1])?;
            let toks = collect_numbers_tokens(sections[2], lines, pos, ns * njo);
            let matrix = numbers(&toks, ns * njo, line)?;
            for &a in &ja {
                for &s in &from {
                    for s2 in 0..ns {
                        for o in 0..njo {
                            reward_write(t, s * nja + a, Some(&[s2]), Some(&[o]), matrix[s2 * njo + o]);
                        }
                    }
                }
            }
        }
        _ => return err(line, format!("malformed `{key}` entry")),
    }
    Ok(())
}

/// The single value of a scalar entry, possibly on the next line.
fn single(section: &str, lines: &[Line], pos: &mut usize, line: usize) -> Result<String> {
    let toks = collect_numbers_tokens(section, lines, pos, 1);
    match toks.as_slice() {
        [one] => Ok(one.clone()),
        _ => err(line, format!("expected one value, found {}", toks.len())),
    }
}

fn reward_write(t: &mut Tables, sa: usize, to: Option<&[usize]>, obs: Option<&[usize]>, value: f64) {
    if to.is_none() && obs.is_none() {
        t.reward_base[sa] = value;
        t.reward_patches.remove(&sa);
        return;
    }
    let patches = t.reward_patches.entry(sa).or_default();
    let nexts: Vec<Option<usize>> = to.map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
    let obss: Vec<Option<usize>> = obs.map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
    for &next in &nexts {
        for &o in &obss {
            patches.push(RewardPatch { next, obs: o, value });
        }
    }
}

fn renormalize(row: &mut [f64], what: &str, line: usize) -> Result<()> {
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return err(line, format!("{what} sums to {total}"));
    }
    if (total - 1.0).abs() > 1e-12 {
        row.iter_mut().for_each(|p| *p /= total);
    }
    Ok(())
}

fn finish(b: Builder, last_line: usize) -> Result<DecPomdpModel> {
    let missing = |w: &str| Error::Parse {
        line: last_line,
        msg: format!("missing `{w}` declaration"),
    };
    let agent_names = b.agent_names.clone().ok_or_else(|| missing("agents"))?;
    let state_names = b.state_names.clone().ok_or_else(|| missing("states"))?;
    let action_names = b.action_names.clone().ok_or_else(|| missing("actions"))?;
    let observation_names = b.observation_names.clone().ok_or_else(|| missing("observations"))?;
    let discount = b.discount.ok_or_else(|| missing("discount"))?;
    let mut b = b;
    ensure_tables(&mut b, last_line)?;
    let d = dims(&b, last_line)?;
    let t = b.tables.take().expect("allocated");
    let (ns, nja, njo) = (d.states, d.joint_actions, d.joint_obs);

    let mut start = b.start.unwrap_or_else(|| vec![1.0 / ns as f64; ns]);
    renormalize(&mut start, "start distribution", last_line)?;
    let mut transition = t.transition;
    for sa in 0..ns * nja {
        let line = if t.transition_line[sa] == 0 {
            last_line
        } else {
            t.transition_line[sa]
        };
        let what = format!(
            "transition row (state {}, joint action {})",
            state_names[sa / nja],
            sa % nja
        );
        renormalize(&mut transition[sa * ns..(sa + 1) * ns], &what, line)?;
    }
    let mut observation = t.observation;
    for row in 0..nja * ns {
        let line = if t.observation_line[row] == 0 {
            last_line
        } else {
            t.observation_line[row]
        };
        let what = format!(
            "observation row (joint action {}, state {})",
            row / ns,
            state_names[row % ns]
        );
        renormalize(&mut observation[row * njo..(row + 1) * njo], &what, line)?;
    }

    let mut reward = t.reward_base.clone();
    for (&sa, patches) in &t.reward_patches {
        let (s, a) = (sa / nja, sa % nja);
        let mut total = 0.0;
        for s2 in 0..ns {
            let pt = transition[sa * ns + s2];
            if pt == 0.0 {
                continue;
            }
            for o in 0..njo {
                let po = observation[(a * ns + s2) * njo + o];
                if po == 0.0 {
                    continue;
                }
                let v = patches
                    .iter()
                    .rev()
                    .find(|p| p.next.is_none_or(|x| x == s2) && p.obs.is_none_or(|x| x == o))
                    .map_or(t.reward_base[sa], |p| p.value);
                total += pt * po * v;
            }
        }
        reward[s * nja + a] = total;
    }
    if b.cost {
        reward.iter_mut().for_each(|r| *r = -*r);
    }

    let model = DecPomdpModel {
        agent_names,
        discount,
        state_names,
        action_names,
        observation_names,
        initial_belief: start,
        transition,
        observation,
        reward,
    };
    model.validate().map_err(|e| Error::Parse {
        line: last_line,
        msg: e.to_string(),
    })?;
    Ok(model)
}

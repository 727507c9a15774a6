//! Logged episodes and their JSON Lines encoding.
//!
//! The first line is a header `{"K", "N", "gamma", "r_min", "r_max"}`; each
//! following line is one episode `{"id", "steps": [{"a", "r", "q", "o_next"}]}`
//! where `q` holds the behavior probability of each agent's action and
//! `o_next` is absent on the final step.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(rename = "a")]
    pub actions: Vec<usize>,
    #[serde(rename = "r")]
    pub reward: f64,
    #[serde(rename = "q")]
    pub behavior: Vec<f64>,
    #[serde(rename = "o_next", default, skip_serializing_if = "Option::is_none")]
    pub next_obs: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Action of `agent` at step `t`.
    #[inline]
    pub fn action(&self, agent: usize, t: usize) -> usize {
        self.steps[t].actions[agent]
    }

    /// Observation of `agent` received at step `t ≥ 1`.
    #[inline]
    pub fn observation(&self, agent: usize, t: usize) -> usize {
        self.steps[t - 1].next_obs.as_ref().expect("validated episode")[agent]
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 1.0;
        let mut total = 0.0;
        for s in &self.steps {
            total += g * s.reward;
            g *= gamma;
        }
        total
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    gamma: f64,
    r_min: f64,
    r_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSet {
    pub agents: usize,
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub episodes: Vec<Episode>,
}

impl EpisodeSet {
    pub fn new(agents: usize, gamma: f64, r_min: f64, r_max: f64, episodes: Vec<Episode>) -> Result<Self> {
        let set = Self {
            agents,
            gamma,
            r_min,
            r_max,
            episodes,
        };
        set.validate()?;
        Ok(set)
    }

    /// Uses the observed reward range as bounds.
    pub fn with_observed_bounds(agents: usize, gamma: f64, episodes: Vec<Episode>) -> Result<Self> {
        let rewards = episodes.iter().flat_map(|e| e.steps.iter().map(|s| s.reward));
        let (lo, hi) = rewards.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r), b.max(r)));
        Self::new(agents, gamma, lo, hi, episodes)
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEpisodes(msg));
        if self.agents == 0 {
            return bad("at least one agent is required".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("discount {} outside (0, 1)", self.gamma));
        }
        if !(self.r_min.is_finite() && self.r_max.is_finite() && self.r_min <= self.r_max) {
            return bad(format!("reward bounds [{}, {}] are invalid", self.r_min, self.r_max));
        }
        let slack = 1e-9 * (1.0 + self.r_min.abs().max(self.r_max.abs()));
        for (k, ep) in self.episodes.iter().enumerate() {
            if ep.steps.is_empty() {
                return bad(format!("episode {k} has no steps"));
            }
            let last = ep.steps.len() - 1;
            for (t, s) in ep.steps.iter().enumerate() {
                let at = format!("episode {k} step {t}");
                if s.actions.len() != self.agents || s.behavior.len() != self.agents {
                    return bad(format!("{at}: expected {} actions and probabilities", self.agents));
                }
                if let Some(q) = s.behavior.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
                    return bad(format!("{at}: behavior probability {q} outside (0, 1]"));
                }
                if !(s.reward >= self.r_min - slack && s.reward <= self.r_max + slack) {
                    return bad(format!(
                        "{at}: reward {} outside [{}, {}]",
                        s.reward, self.r_min, self.r_max
                    ));
                }
                match (&s.next_obs, t < last) {
                    (Some(o), true) if o.len() == self.agents => {}
                    (Some(_), true) => return bad(format!("{at}: expected {} observations", self.agents)),
                    (None, true) => return bad(format!("{at}: missing o_next before the final step")),
                    (Some(_), false) | (None, false) => {}
                }
            }
        }
        Ok(())
    }

    /// Largest action and observation index seen for each agent, plus one.
    pub fn observed_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(0, 0); self.agents];
        for ep in &self.episodes {
            for s in &ep.steps {
                for n in 0..self.agents {
                    dims[n].0 = dims[n].0.max(s.actions[n] + 1);
                    if let Some(o) = &s.next_obs {
                        dims[n].1 = dims[n].1.max(o[n] + 1);
                    }
                }
            }
        }
        dims
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            k: self.episodes.len(),
            n: self.agents,
            gamma: self.gamma,
            r_min: self.r_min,
            r_max: self.r_max,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for ep in &self.episodes {
            serde_json::to_writer(&mut out, ep)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::InvalidEpisodes("empty episode file".into()))?;
        let header: Header =
            serde_json::from_str(&first?).map_err(|e| Error::InvalidEpisodes(format!("line 1: bad header: {e}")))?;
        let mut episodes = Vec::with_capacity(header.k);
        for (i, line) in lines {
            let ep: Episode =
                serde_json::from_str(&line?).map_err(|e| Error::InvalidEpisodes(format!("line {}: {e}", i + 1)))?;
            episodes.push(ep);
        }
        if episodes.len() != header.k {
            return Err(Error::InvalidEpisodes(format!(
                "header announces {} episodes, found {}",
                header.k,
                episodes.len()
            )));
        }
        Self::new(header.n, header.gamma, header.r_min, header.r_max, episodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EpisodeSet {
        let steps = vec![
            Step {
                actions: vec![0, 1],
                reward: 1.0,
                behavior: vec![0.5, 0.5],
                next_obs: Some(vec![1, 0]),
            },
            Step {
                actions: vec![1, 1],
                reward: 0.0,
                behavior: vec![0.5, 0.25],
                next_obs: None,
            },
        ];
        EpisodeSet::new(2, 0.9, 0.0, 1.0, vec![Episode { id: 0, steps }]).unwrap()
    }

    #[test]
    fn jsonl_round_trip() {
        let set = tiny();
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"K\":1"));
        assert!(!text.lines().nth(1).unwrap().ends_with("\"o_next\":null}]}"));
        let back = EpisodeSet::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_bad_behavior_probability() {
        let mut set = tiny();
        set.episodes[0].steps[0].behavior[0] = 0.0;
        assert!(set.validate().is_err());
    }

    #[test]
    fn rejects_missing_observation() {
        let mut set = tiny();
        set.episodes[0].steps[0].next_obs = None;
        assert!(set.validate().is_err());
    }

    #[test]
    fn rejects_header_count_mismatch() {
        let text = "{\"K\":2,\"N\":1,\"gamma\":0.9,\"r_min\":0,\"r_max\":1}\n{\"id\":0,\"steps\":[{\"a\":[0],\"r\":1,\"q\":[1]}]}\n";
        assert!(EpisodeSet::read_jsonl(text.as_bytes()).is_err());
    }

    #[test]
    fn history_accessors() {
        let set = tiny();
        let ep = &set.episodes[0];
        assert_eq!(ep.action(1, 1), 1);
        assert_eq!(ep.observation(0, 1), 1);
        assert!((ep.discounted_return(0.9) - 1.0).abs() < 1e-15);
        assert_eq!(set.observed_dims(), vec![(2, 2), (2, 1)]);
    }
}

//! Controller initialization from logged episodes.

use super::{FscParams, FscTables};
use crate::error::{Error, Result};
use crate::inference::EpisodeSet;

/// Chain controller that replays the best episode's actions for `agent`.
///
/// Node `t` emits the action taken at step `t` of the episode with the highest
/// discounted return (cycling when the episode is shorter than the chain) and
/// moves to node `t + 1`, wrapping at the end. Every row is mixed with the
/// uniform distribution at weight `smoothing`.
pub fn init_from_episodes(
    episodes: &EpisodeSet,
    agent: usize,
    nodes: usize,
    actions: usize,
    observations: usize,
    smoothing: f64,
) -> Result<FscParams> {
    if agent >= episodes.agents {
        return Err(Error::Shape(format!("agent {agent} out of range")));
    }
    if nodes == 0 || actions == 0 || observations == 0 {
        return Err(Error::InvalidConfig("controller dimensions must be positive".into()));
    }
    if !(0.0..=1.0).contains(&smoothing) {
        return Err(Error::InvalidConfig(format!("smoothing {smoothing} outside [0, 1]")));
    }
    let best = episodes
        .episodes
        .iter()
        .max_by(|a, b| {
            a.discounted_return(episodes.gamma)
                .total_cmp(&b.discounted_return(episodes.gamma))
        })
        .ok_or_else(|| Error::InvalidEpisodes("no episodes to initialize from".into()))?;

    let mut policy = vec![smoothing / actions as f64; nodes * actions];
    for z in 0..nodes {
        let a = best.action(agent, z % best.len());
        if a >= actions {
            return Err(Error::Shape(format!("episode action {a} exceeds {actions} actions")));
        }
        policy[z * actions + a] += 1.0 - smoothing;
    }
    let mut transition = vec![smoothing / nodes as f64; nodes * actions * observations * nodes];
    for z in 0..nodes {
        let next = (z + 1) % nodes;
        for a in 0..actions {
            for o in 0..observations {
                transition[((z * actions + a) * observations + o) * nodes + next] += 1.0 - smoothing;
            }
        }
    }
    let mut initial = vec![0.0; nodes];
    initial[0] = 1.0;
    FscParams::new(FscTables::new(
        nodes,
        actions,
        observations,
        initial,
        policy,
        transition,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{Episode, Step};

    fn episode(id: u64, acts: &[usize], reward: f64) -> Episode {
        let steps = acts
            .iter()
            .enumerate()
            .map(|(t, &a)| Step {
                actions: vec![a],
                reward,
                behavior: vec![0.5],
                next_obs: (t + 1 < acts.len()).then(|| vec![0]),
            })
            .collect();
        Episode { id, steps }
    }

    #[test]
    fn replays_best_episode() {
        let set = EpisodeSet::new(
            1,
            0.9,
            0.0,
            1.0,
            vec![episode(0, &[0, 0], 0.0), episode(1, &[1, 0], 1.0)],
        )
        .unwrap();
        let f = init_from_episodes(&set, 0, 3, 2, 1, 0.0).unwrap();
        assert_eq!(f.policy(0, 1), 1.0);
        assert_eq!(f.policy(1, 0), 1.0);
        assert_eq!(f.policy(2, 1), 1.0);
        assert_eq!(f.transition_row(2, 0, 0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn smoothing_keeps_rows_normalized() {
        let set = EpisodeSet::new(1, 0.9, 0.0, 1.0, vec![episode(0, &[1], 1.0)]).unwrap();
        let f = init_from_episodes(&set, 0, 4, 3, 2, 0.05).unwrap();
        assert!(f.policy.iter().all(|&p| p > 0.0));
    }
}

//! Stochastic finite-state controllers.
//!
//! A controller for one agent has an initial node distribution, an action
//! distribution per node and a node-transition distribution per
//! `(node, action, observation)`. [`FscParams`] holds normalized tables;
//! [`UnderNormalizedFsc`] holds the `exp E[ln θ]` tables used during
//! inference, whose rows sum to less than one.

mod filter;
mod init;

pub use filter::{action_prob, LocalHistory, NodeFilter};
pub use init::init_from_episodes;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

const ROW_TOL: f64 = 1e-9;

/// Raw controller tables in row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FscTables {
    pub nodes: usize,
    pub actions: usize,
    pub observations: usize,
    /// `nodes`
    pub initial: Vec<f64>,
    /// `nodes × actions`
    pub policy: Vec<f64>,
    /// `nodes × actions × observations × nodes`
    pub transition: Vec<f64>,
}

impl FscTables {
    pub fn new(
        nodes: usize,
        actions: usize,
        observations: usize,
        initial: Vec<f64>,
        policy: Vec<f64>,
        transition: Vec<f64>,
    ) -> Self {
        Self {
            nodes,
            actions,
            observations,
            initial,
            policy,
            transition,
        }
    }

    #[inline]
    pub fn policy(&self, node: usize, action: usize) -> f64 {
        self.policy[node * self.actions + action]
    }

    #[inline]
    pub fn transition_row(&self, node: usize, action: usize, obs: usize) -> &[f64] {
        let start = ((node * self.actions + action) * self.observations + obs) * self.nodes;
        &self.transition[start..start + self.nodes]
    }

    fn check_shape(&self) -> Result<()> {
        let (z, a, o) = (self.nodes, self.actions, self.observations);
        if z == 0 || a == 0 || o == 0 {
            return Err(Error::InvalidController("dimensions must be positive".into()));
        }
        if self.initial.len() != z || self.policy.len() != z * a || self.transition.len() != z * a * o * z {
            return Err(Error::InvalidController(format!(
                "table sizes {} / {} / {} do not match {z} nodes, {a} actions, {o} observations",
                self.initial.len(),
                self.policy.len(),
                self.transition.len()
            )));
        }
        let all = self.initial.iter().chain(&self.policy).chain(&self.transition);
        if let Some(x) = all.into_iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidController(format!("entry {x} is not a probability")));
        }
        Ok(())
    }

    fn rows(&self) -> impl Iterator<Item = (&'static str, usize, &[f64])> {
        let init = std::iter::once(("initial", 0, &self.initial[..]));
        let pol = self
            .policy
            .chunks(self.actions)
            .enumerate()
            .map(|(i, r)| ("policy", i, r));
        let tr = self
            .transition
            .chunks(self.nodes)
            .enumerate()
            .map(|(i, r)| ("transition", i, r));
        init.chain(pol).chain(tr)
    }
}

/// Read access shared by both controller kinds.
pub trait Controller {
    fn tables(&self) -> &FscTables;
}

/// Normalized controller: every row sums to one within `1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct FscParams(FscTables);

impl FscParams {
    pub fn new(tables: FscTables) -> Result<Self> {
        tables.check_shape()?;
        for (what, i, row) in tables.rows() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidController(format!("{what} row {i} sums to {s}")));
            }
        }
        Ok(Self(tables))
    }

    pub(crate) fn from_tables_unchecked(tables: FscTables) -> Self {
        Self(tables)
    }

    /// Single node choosing actions uniformly.
    pub fn uniform(actions: usize, observations: usize) -> Self {
        Self(FscTables::new(
            1,
            actions,
            observations,
            vec![1.0],
            vec![1.0 / actions as f64; actions],
            vec![1.0; actions * observations],
        ))
    }

    pub fn into_tables(self) -> FscTables {
        self.0
    }
}

impl Deref for FscParams {
    type Target = FscTables;
    fn deref(&self) -> &FscTables {
        &self.0
    }
}

impl Controller for FscParams {
    fn tables(&self) -> &FscTables {
        &self.0
    }
}

/// `exp E[ln θ]` tables; rows sum to at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct UnderNormalizedFsc(FscTables);

impl UnderNormalizedFsc {
    pub fn new(tables: FscTables) -> Result<Self> {
        tables.check_shape()?;
        for (what, i, row) in tables.rows() {
            let s: f64 = row.iter().sum();
            if s > 1.0 + ROW_TOL {
                return Err(Error::InvalidController(format!("{what} row {i} sums to {s} > 1")));
            }
        }
        Ok(Self(tables))
    }

    pub(crate) fn from_tables_unchecked(tables: FscTables) -> Self {
        Self(tables)
    }
}

impl Deref for UnderNormalizedFsc {
    type Target = FscTables;
    fn deref(&self) -> &FscTables {
        &self.0
    }
}

impl Controller for UnderNormalizedFsc {
    fn tables(&self) -> &FscTables {
        &self.0
    }
}

/// JSON layout of one controller.
#[derive(Serialize, Deserialize)]
struct FscDoc {
    num_nodes: usize,
    initial: Vec<f64>,
    policy: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Serialize for FscParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = &self.0;
        let doc = FscDoc {
            num_nodes: t.nodes,
            initial: t.initial.clone(),
            policy: t.policy.chunks(t.actions).map(<[f64]>::to_vec).collect(),
            transition: (0..t.nodes)
                .map(|z| {
                    (0..t.actions)
                        .map(|a| {
                            (0..t.observations)
                                .map(|o| t.transition_row(z, a, o).to_vec())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FscParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = FscDoc::deserialize(d)?;
        let z = doc.num_nodes;
        let a = doc.policy.first().map_or(0, Vec::len);
        let o = doc.transition.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let ragged = doc.policy.len() != z
            || doc.policy.iter().any(|r| r.len() != a)
            || doc.transition.len() != z
            || doc
                .transition
                .iter()
                .any(|r| r.len() != a || r.iter().any(|x| x.len() != o || x.iter().any(|y| y.len() != z)));
        if ragged {
            return Err(D::Error::custom(
                "controller arrays are ragged or do not match num_nodes",
            ));
        }
        let tables = FscTables::new(
            z,
            a,
            o,
            doc.initial,
            doc.policy.concat(),
            doc.transition.into_iter().flatten().flatten().flatten().collect(),
        );
        FscParams::new(tables).map_err(D::Error::custom)
    }
}

/// One controller per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFsc {
    pub agents: Vec<FscParams>,
}

impl JointFsc {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.agents.iter().map(|f| f.nodes).collect()
    }
}

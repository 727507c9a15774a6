//! Variational inference on batch episode data.
//!
//! [`run_vb`] learns stick-breaking controllers; [`run_em_fixed`] is the
//! fixed-size point-estimate baseline. Both consume an [`EpisodeSet`] whose
//! steps carry the behavior probability of every logged action.

mod em;
mod episodes;
mod estep;
mod messages;
mod vb;

pub use em::{run_em_fixed, EmConfig, EmOutcome};
pub use episodes::{Episode, EpisodeSet, Step};
pub use estep::{e_step, empirical_value, reweighted_rewards, EStep, ValueEstimate};
pub use messages::{
    backward_messages, forward_messages, marginals, reward_steps, AgentCounts, BackwardMessages, ForwardMessages,
    Marginals, RewardMode,
};
pub use vb::{
    infer_controller_sizes, initial_posterior, lower_bound, run_vb, run_vb_from, update_hyperparameters,
    EvidenceWeight, IterationRecord, VbConfig, VbOutcome,
};

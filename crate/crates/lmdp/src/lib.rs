//! Planning, simulation, and online learning for latent mixtures of MDPs.
//!
//! A latent MDP draws a hidden context at the start of each episode and
//! runs an ordinary finite-horizon MDP for that context; the mixture
//! weights, start distributions, and rewards are known while the
//! transition kernels must be learned from rollouts. Because the context
//! stays hidden during the episode, optimal behaviour conditions on the
//! whole observed history, and the crate works with explicit history
//! trees next to the cheaper stationary (state-feedback) policy class.
//!
//! The pieces:
//!
//! - [`model`]: the validated tabular representation and its JSON file
//!   format.
//! - [`history`] / [`belief`]: enumerated reachable-history trees and
//!   posterior context beliefs along them.
//! - [`alpha`]: exact policy evaluation and optimal planning by backward
//!   dynamic programming over histories.
//! - [`variance`]: return variance of a policy and its maximum over a
//!   policy class, the scale parameter of the hard family.
//! - [`env`]: seeded episode simulation.
//! - [`solvers`]: two optimistic planners over a learned transition
//!   snapshot, one from per-row confidence boxes and one from
//!   variance-adaptive exploration bonuses.
//! - [`learner`]: the episodic loop with doubling-schedule resolves and
//!   its regret trace CSV.
//! - [`instances`]: generators, including the permutation-encoded hard
//!   family and random fixtures.
//! - [`sweep`]: multi-cell experiment grids with per-cell traces and a
//!   summary CSV.
//!
//! The `examples/` directory exercises each capability end to end; the
//! thin `lmdp` binary wraps generation, planning, learning, and sweeps
//! for shell use.

pub mod alpha;
pub mod belief;
pub mod env;
pub mod error;
pub mod history;
pub mod instances;
pub mod learner;
pub mod model;
pub mod policy;
pub mod solvers;
pub mod sweep;
pub mod variance;

pub use alpha::{
    alpha_eval, optimal_stationary, optimal_value, plan_optimal, value_of_policy, AlphaTable,
};
pub use belief::{belief_update, Belief};
pub use env::{mix_seed, rollout, Trajectory};
pub use error::{Error, Result};
pub use history::{build_history_tree, HistoryTree, DEFAULT_NODE_CAP};
pub use instances::{
    build_hard_instance, mdp_as_lmdp, permutation_from_index, random_absorbing_lmdp, random_lmdp,
    HardInstanceMeta,
};
pub use learner::{
    iota, record_episode, run_learning, trigger_bound, Counts, RegretTrace, Snapshot, TraceRow,
};
pub use model::LmdpModel;
pub use policy::{Caps, Policy, PolicyClass};
pub use solvers::{
    box_simplex_argmax, confidence_radii, mvp_backup, mvp_bonus, optimistic_alpha_bernstein,
    optimistic_alpha_mvp, solve, solve_bernstein, solve_mvp, ConfidenceRadii, SolverTag,
};
pub use sweep::{
    fit_loglog_slope, regret_checkpoints, run_sweep, trace_slope, CellOutcome, InstanceSpec,
    SweepConfig,
};
pub use variance::{empirical_variance, policy_variance, var_star};

//! Seeded episodic simulator.
//!
//! Each episode draws a hidden context from the mixture weights, a start
//! state from that context's initial distribution, then steps the chosen
//! policy for `H` steps. The context never influences action selection
//! during the episode; it is attached to the returned record only, which
//! is what the learner's hindsight updates consume.
//!
//! Categorical draws use inverse-CDF over the stored row order with a
//! fallback to the last positive entry, so a run is reproducible bit for
//! bit from its seed and immune to rounding at the tail of a row.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::LmdpModel;
use crate::policy::Policy;

/// One completed episode with the context revealed in hindsight.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Revealed context index.
    pub context: usize,
    /// Visited states, length `H + 1`.
    pub states: Vec<usize>,
    /// Chosen actions, length `H`.
    pub actions: Vec<usize>,
    /// Collected rewards, length `H`.
    pub rewards: Vec<f64>,
}

/// Inverse-CDF draw over `probs` in stored order; zero-probability entries
/// are skipped and rounding shortfall falls back to the last positive one.
fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Plays one episode of `policy` on `model`.
pub fn rollout(model: &LmdpModel, policy: &Policy, rng: &mut impl Rng) -> Result<Trajectory> {
    policy.check(model)?;
    let context = sample_categorical(rng, &model.weights);
    let mut state = sample_categorical(rng, &model.init[context]);
    let mut states = Vec::with_capacity(model.horizon + 1);
    let mut actions = Vec::with_capacity(model.horizon);
    let mut rewards = Vec::with_capacity(model.horizon);
    states.push(state);
    // Tree policies walk their own tree alongside the realized history.
    let mut node: Option<u32> = match policy {
        Policy::Stationary(_) => None,
        Policy::Tree { tree, .. } => Some(tree.root_for_state(state).ok_or_else(|| {
            Error::PolicyDomain(format!("no tree root for realized start state {state}"))
        })?),
    };
    for _t in 0..model.horizon {
        let action = match (policy, node) {
            (Policy::Stationary(acts), _) => acts[state],
            (Policy::Tree { actions: acts, .. }, Some(id)) => acts[id as usize],
            (Policy::Tree { .. }, None) => unreachable!("tree position tracked"),
        };
        let reward = model.reward(context, state, action);
        let next = sample_categorical(rng, model.row(context, state, action));
        if let (Policy::Tree { tree, .. }, Some(id)) = (policy, node) {
            node = Some(tree.descend(id, action, reward, next).ok_or_else(|| {
                Error::PolicyDomain(format!(
                    "realized transition ({state},{action})->{next} leaves the policy tree"
                ))
            })?);
        }
        actions.push(action);
        rewards.push(reward);
        states.push(next);
        state = next;
    }
    Ok(Trajectory { context, states, actions, rewards })
}

/// Derives an independent stream seed for run `index` from a base seed
/// (splitmix64-style finalizer; documented so sweeps are reproducible).
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

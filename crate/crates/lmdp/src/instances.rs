//! Instance generators: the permutation-encoded hard family plus random
//! and single-context fixtures.
//!
//! The hard family has a two-phase layout. An encoding phase walks a
//! context-specific permutation of `d1` states so the agent can identify
//! the hidden context for free; a guessing phase descends a binary tree of
//! `2^d2 - 1` states to one of `L = 2^(d2-1)` leaves, where exactly one
//! (leaf, action) pair per context tilts an otherwise fair coin toward a
//! good state paying `x`. Every transition has support at most 2, the
//! episode pays either 0 or `x`, and the gap between the best and the
//! blind policy is `epsilon x`, so regret accumulates until the learner
//! resolves a coin bias of `epsilon` among `C = L A` choices.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LmdpModel;

/// Everything about a generated hard instance besides the tables.
/// Permutations, answer leaves, and answer actions use the game's own
/// 1-based numbering (leaves count within the last tree level).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HardInstanceMeta {
    pub d1: usize,
    pub d2: usize,
    /// Number of guessing-tree states, `2^d2 - 1`.
    pub tree_states: usize,
    /// `L = 2^(d2-1)`.
    pub num_leaves: usize,
    /// Effective choice count `C = L * A`.
    pub num_choices: usize,
    pub epsilon: f64,
    pub x: f64,
    pub target_variance: f64,
    /// `x (1/2 + epsilon)`, the exact optimum.
    pub optimal_value: f64,
    /// `x^2 / 4`, attained by any policy that always misses the answer.
    pub var_star: f64,
    /// Per context: the encoding-phase permutation of `1..=d1`.
    pub permutations: Vec<Vec<usize>>,
    /// Per context: the correct leaf in `1..=L`.
    pub correct_leaf: Vec<usize>,
    /// Per context: the correct action in `1..=A`.
    pub correct_action: Vec<usize>,
    pub horizon: usize,
}

fn factorials(n: usize) -> Vec<u128> {
    let mut f = vec![1u128; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1].saturating_mul(i as u128);
    }
    f
}

/// The `(m-1)`-th permutation of `1..=d1` in factorial-number-system
/// order; `m = 1` is the identity.
pub fn permutation_from_index(m: usize, d1: usize) -> Result<Vec<usize>> {
    let fact = factorials(d1);
    if m == 0 || m as u128 > fact[d1] {
        return Err(Error::Domain(format!(
            "permutation index {m} out of range 1..={}",
            fact[d1]
        )));
    }
    let mut idx = (m - 1) as u128;
    let mut avail: Vec<usize> = (1..=d1).collect();
    let mut out = Vec::with_capacity(d1);
    for j in (0..d1).rev() {
        let f = fact[j];
        let c = (idx / f) as usize;
        idx %= f;
        out.push(avail.remove(c));
    }
    Ok(out)
}

/// Builds one member of the hard family.
///
/// `d1` is the smallest depth whose permutation count covers the contexts
/// and `d2` the largest tree depth fitting the state budget; together with
/// the good and terminal states they use `d1 + 2^d2 + 1` states, and any
/// remainder becomes self-absorbing zero-reward filler. The horizon
/// defaults to `d1 + d2 + 3` and may only be raised (the terminal state
/// pads). `x = min(1, 2 sqrt(V))` makes the blind-policy variance exactly
/// `V`; `epsilon` follows the calibration against the planned episode
/// budget and is clamped at 1/4.
#[allow(clippy::too_many_arguments)]
pub fn build_hard_instance(
    contexts: usize,
    states: usize,
    actions: usize,
    variance: f64,
    episodes_hint: usize,
    horizon: Option<usize>,
    answers: Option<&[(usize, usize)]>,
    seed: u64,
) -> Result<(LmdpModel, HardInstanceMeta)> {
    if states < 6 {
        return Err(Error::Domain(format!("need at least 6 states, got {states}")));
    }
    if actions < 2 {
        return Err(Error::Domain(format!("need at least 2 actions, got {actions}")));
    }
    if contexts == 0 {
        return Err(Error::Domain("need at least one context".into()));
    }
    if !(variance > 0.0 && variance <= 0.25) {
        return Err(Error::Domain(format!(
            "target variance must lie in (0, 1/4], got {variance}"
        )));
    }
    if episodes_hint == 0 {
        return Err(Error::Domain("episode hint must be positive".into()));
    }
    let half_budget = states / 2;
    if (contexts as u128) > factorials(half_budget)[half_budget] {
        return Err(Error::Domain(format!(
            "{contexts} contexts cannot be encoded within {states} states"
        )));
    }
    let mut d1 = 1;
    while factorials(d1)[d1] < contexts as u128 {
        d1 += 1;
    }
    // Largest complete tree fitting beside the chain, good, and terminal.
    let budget = states
        .checked_sub(d1 + 2)
        .filter(|&b| b >= 1)
        .ok_or_else(|| Error::Domain("state budget too small for the guessing tree".into()))?;
    let mut d2 = 1;
    while (1usize << (d2 + 1)) - 1 <= budget {
        d2 += 1;
    }
    let tree_states = (1usize << d2) - 1;
    let num_leaves = 1usize << (d2 - 1);
    let num_choices = num_leaves * actions;
    let depth_needed = d1 + d2 + 3;
    let horizon = match horizon {
        None => depth_needed,
        Some(h) if h >= depth_needed => h,
        Some(h) => {
            return Err(Error::Domain(format!(
                "horizon {h} below the required depth {depth_needed}"
            )))
        }
    };
    let x = (2.0 * variance.sqrt()).min(1.0);
    let c = num_choices as f64;
    let epsilon = (0.25f64).min(
        (1.0 / (2.0 * 2.0f64.sqrt()))
            * (1.0 - 1.0 / c)
            * (2.0 * contexts as f64 * c / episodes_hint as f64).sqrt(),
    );
    let answers: Vec<(usize, usize)> = match answers {
        Some(given) => {
            if given.len() != contexts {
                return Err(Error::Domain(format!(
                    "expected {contexts} answer pairs, got {}",
                    given.len()
                )));
            }
            for &(l, a) in given {
                if l == 0 || l > num_leaves || a == 0 || a > actions {
                    return Err(Error::Domain(format!(
                        "answer ({l}, {a}) outside 1..={num_leaves} x 1..={actions}"
                    )));
                }
            }
            given.to_vec()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..contexts)
                .map(|_| (rng.gen_range(1..=num_leaves), rng.gen_range(1..=actions)))
                .collect()
        }
    };
    let permutations: Vec<Vec<usize>> = (1..=contexts)
        .map(|m| permutation_from_index(m, d1))
        .collect::<Result<_>>()?;

    // State layout: e_1..e_d1, then s_1..s_tree, then g, then t, then filler.
    let e_state = |i: usize| i - 1;
    let s_state = |i: usize| d1 + i - 1;
    let g_state = d1 + tree_states;
    let t_state = g_state + 1;

    let mut transitions =
        vec![vec![vec![vec![0.0f64; states]; actions]; states]; contexts];
    let mut rewards = vec![vec![vec![0.0f64; actions]; states]; contexts];
    let mut init = vec![vec![0.0f64; states]; contexts];
    for m in 0..contexts {
        let sigma = &permutations[m];
        init[m][e_state(sigma[0])] = 1.0;
        for a in 0..actions {
            for i in 0..d1 - 1 {
                transitions[m][e_state(sigma[i])][a][e_state(sigma[i + 1])] = 1.0;
            }
            transitions[m][e_state(sigma[d1 - 1])][a][s_state(1)] = 1.0;
            // Internal tree nodes: action parity picks the child.
            for i in 1..num_leaves {
                transitions[m][s_state(i)][a][s_state(2 * i + (a + 1) % 2)] = 1.0;
            }
            // Leaves: a near-fair coin between terminal and good.
            let (l_star, a_star) = answers[m];
            for l in num_leaves..=tree_states {
                let leaf_number = l - num_leaves + 1;
                let correct = leaf_number == l_star && a + 1 == a_star;
                let tilt = if correct { epsilon } else { 0.0 };
                transitions[m][s_state(l)][a][t_state] = 0.5 - tilt;
                transitions[m][s_state(l)][a][g_state] = 0.5 + tilt;
            }
            transitions[m][g_state][a][t_state] = 1.0;
            transitions[m][t_state][a][t_state] = 1.0;
            for filler in t_state + 1..states {
                transitions[m][filler][a][filler] = 1.0;
            }
            rewards[m][g_state][a] = x;
        }
    }
    let model = LmdpModel {
        num_contexts: contexts,
        num_states: states,
        num_actions: actions,
        horizon,
        weights: vec![1.0 / contexts as f64; contexts],
        init,
        transitions,
        rewards,
    };
    model.validate()?;
    let meta = HardInstanceMeta {
        d1,
        d2,
        tree_states,
        num_leaves,
        num_choices,
        epsilon,
        x,
        target_variance: variance,
        optimal_value: x * (0.5 + epsilon),
        var_star: x * x / 4.0,
        permutations,
        correct_leaf: answers.iter().map(|&(l, _)| l).collect(),
        correct_action: answers.iter().map(|&(_, a)| a).collect(),
        horizon,
    };
    Ok((model, meta))
}

/// Random sparse model: supports of size at most `degree`, Dirichlet rows,
/// rewards rescaled so the best possible episode total is at most 1.
pub fn random_lmdp(
    contexts: usize,
    states: usize,
    actions: usize,
    horizon: usize,
    degree: usize,
    seed: u64,
) -> Result<LmdpModel> {
    if degree == 0 || degree > states {
        return Err(Error::Domain(format!(
            "support degree {degree} outside 1..={states}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick_support = |rng: &mut ChaCha8Rng, size: usize| -> Vec<usize> {
        let mut pool: Vec<usize> = (0..states).collect();
        for i in 0..size {
            let j = rng.gen_range(i..states);
            pool.swap(i, j);
        }
        pool.truncate(size);
        pool
    };
    let dirichlet = |rng: &mut ChaCha8Rng, size: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..size).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|x| x / sum).collect()
    };
    let mut weights = dirichlet(&mut rng, contexts);
    // Guard against a pathological draw collapsing a context entirely.
    if weights.iter().any(|&w| w <= 0.0) {
        weights = vec![1.0 / contexts as f64; contexts];
    }
    let mut init = Vec::with_capacity(contexts);
    let mut transitions = vec![vec![vec![vec![0.0f64; states]; actions]; states]; contexts];
    let mut rewards = vec![vec![vec![0.0f64; actions]; states]; contexts];
    for m in 0..contexts {
        let size = rng.gen_range(1..=degree);
        let support = pick_support(&mut rng, size);
        let probs = dirichlet(&mut rng, size);
        let mut nu = vec![0.0; states];
        for (s, p) in support.iter().zip(&probs) {
            nu[*s] = *p;
        }
        init.push(nu);
        for s in 0..states {
            for a in 0..actions {
                let size = rng.gen_range(1..=degree);
                let support = pick_support(&mut rng, size);
                let probs = dirichlet(&mut rng, size);
                for (s2, p) in support.iter().zip(&probs) {
                    transitions[m][s][a][*s2] = *p;
                }
                rewards[m][s][a] = rng.gen();
            }
        }
    }
    let mut model = LmdpModel {
        num_contexts: contexts,
        num_states: states,
        num_actions: actions,
        horizon,
        weights,
        init,
        transitions,
        rewards,
    };
    let bound = model.max_total_reward();
    if bound > 1.0 {
        for m in 0..contexts {
            for s in 0..states {
                for a in 0..actions {
                    model.rewards[m][s][a] /= bound;
                }
            }
        }
    }
    model.validate()?;
    Ok(model)
}

/// Wraps plain MDP tables as a single-context model.
pub fn mdp_as_lmdp(
    init: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    horizon: usize,
) -> Result<LmdpModel> {
    let num_states = init.len();
    let num_actions = rewards.first().map(|r| r.len()).unwrap_or(0);
    let model = LmdpModel {
        num_contexts: 1,
        num_states,
        num_actions,
        horizon,
        weights: vec![1.0],
        init: vec![init],
        transitions: vec![transitions],
        rewards: vec![rewards],
    };
    model.validate()?;
    Ok(model)
}

/// Random layered model that absorbs after `layers` steps: layer `i` feeds
/// layer `i + 1`, the last layer feeds a zero-reward sink, and the sink
/// self-loops. Values and regret dynamics are therefore unchanged by
/// raising the horizon, which is what a horizon-robustness sweep needs.
pub fn random_absorbing_lmdp(
    contexts: usize,
    layers: usize,
    width: usize,
    actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<LmdpModel> {
    if layers == 0 || width == 0 {
        return Err(Error::Domain("need at least one layer and unit width".into()));
    }
    if horizon < layers + 1 {
        return Err(Error::Domain(format!(
            "horizon {horizon} cannot cover {layers} layers plus the sink"
        )));
    }
    let states = layers * width + 1;
    let sink = states - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirichlet = |rng: &mut ChaCha8Rng, size: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..size).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|x| x / sum).collect()
    };
    let mut weights = dirichlet(&mut rng, contexts);
    if weights.iter().any(|&w| w <= 0.0) {
        weights = vec![1.0 / contexts as f64; contexts];
    }
    let mut init = Vec::with_capacity(contexts);
    let mut transitions = vec![vec![vec![vec![0.0f64; states]; actions]; states]; contexts];
    let mut rewards = vec![vec![vec![0.0f64; actions]; states]; contexts];
    for m in 0..contexts {
        let probs = dirichlet(&mut rng, width);
        let mut nu = vec![0.0; states];
        nu[..width].copy_from_slice(&probs);
        init.push(nu);
        for layer in 0..layers {
            for j in 0..width {
                let s = layer * width + j;
                for a in 0..actions {
                    rewards[m][s][a] = rng.gen::<f64>() / (layers as f64);
                    if layer + 1 < layers {
                        let probs = dirichlet(&mut rng, width);
                        for (jj, p) in probs.iter().enumerate() {
                            transitions[m][s][a][(layer + 1) * width + jj] = *p;
                        }
                    } else {
                        transitions[m][s][a][sink] = 1.0;
                    }
                }
            }
        }
        for a in 0..actions {
            transitions[m][sink][a][sink] = 1.0;
        }
    }
    let mut model = LmdpModel {
        num_contexts: contexts,
        num_states: states,
        num_actions: actions,
        horizon,
        weights,
        init,
        transitions,
        rewards,
    };
    let bound = model.max_total_reward();
    if bound > 1.0 {
        for m in 0..contexts {
            for s in 0..states {
                for a in 0..actions {
                    model.rewards[m][s][a] /= bound;
                }
            }
        }
    }
    model.validate()?;
    Ok(model)
}

//! Return-variance evaluation and exact variance maximization.
//!
//! The variance of an episode's total reward decomposes, by the law of
//! total variance, into per-context recursions plus a mixture term:
//!
//! ```text
//! Var_m(h) = P_m(·|s,a)^T Var_m(h a r ·) + V(P_m(·|s,a), alpha_m(h a r ·))
//! Var^pi   = sum_{m,s1} w_m nu_m(s1) Var_m(root) + V(w o nu, alpha_.(root))
//! ```
//!
//! where `V(p, v) = p^T v^2 - (p^T v)^2` is the empirical variance and the
//! outer term ranges over the joint distribution of (context, start state).
//! Stationary policies collapse to a state-indexed DP exactly as alphas do.
//!
//! `var_star` maximizes over a policy class. Stationary maximization
//! enumerates action assignments. Tree maximization propagates, bottom-up,
//! the set of achievable `(alpha_m, Var_m)` profiles of every subtree
//! (deduplicated bit-exactly), then scans the cross product at the roots;
//! this is value-equivalent to enumerating every distinct action
//! assignment on the reachable tree while sharing repeated subtree work.

use std::collections::HashSet;
use std::sync::Arc;

use crate::alpha::{advance, alpha_eval, stationary_state_alpha};
use crate::error::{Error, Result};
use crate::history::{build_history_tree, HistoryTree};
use crate::model::{LmdpModel, Supports};
use crate::policy::{Caps, Policy, PolicyClass};

/// Empirical variance `p^T v^2 - (p^T v)^2`, clamped at 0 to absorb
/// floating-point rounding on (near-)deterministic inputs.
pub fn empirical_variance(p: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), v.len());
    let mut ex = 0.0;
    let mut ex2 = 0.0;
    for (pi, vi) in p.iter().zip(v) {
        ex += pi * vi;
        ex2 += pi * vi * vi;
    }
    (ex2 - ex * ex).max(0.0)
}

/// Variance of the total reward under `policy`, from context, start-state,
/// and transition randomness together.
pub fn policy_variance(model: &LmdpModel, policy: &Policy) -> Result<f64> {
    policy.check(model)?;
    match policy {
        Policy::Stationary(actions) => {
            let supports = Supports::new(model);
            Ok(stationary_variance(model, &supports, actions))
        }
        Policy::Tree { tree, .. } => tree_policy_variance(model, tree, policy),
    }
}

/// State-indexed variance DP for a stationary policy.
pub(crate) fn stationary_variance(
    model: &LmdpModel,
    supports: &Supports,
    actions: &[usize],
) -> f64 {
    let (mm, ss, h) = (model.num_contexts, model.num_states, model.horizon);
    let alpha = stationary_state_alpha(model, supports, actions);
    let mut var = vec![vec![0.0f64; ss]; mm];
    for m in 0..mm {
        let mut next = vec![0.0f64; ss];
        for t in (1..=h).rev() {
            let mut cur = vec![0.0f64; ss];
            for s in 0..ss {
                let a = actions[s];
                let row = model.row(m, s, a);
                let alpha_next = &alpha[m][t + 1];
                let mut v = 0.0;
                let mut ex = 0.0;
                let mut ex2 = 0.0;
                for &s2 in supports.of(m, s, a) {
                    let p = row[s2 as usize];
                    let an = alpha_next[s2 as usize];
                    v += p * next[s2 as usize];
                    ex += p * an;
                    ex2 += p * an * an;
                }
                cur[s] = (v + ex2 - ex * ex).max(0.0);
            }
            next = cur;
        }
        var[m] = next;
    }
    let mut joint_p = Vec::new();
    let mut joint_alpha = Vec::new();
    let mut total = 0.0;
    for m in 0..mm {
        for s in 0..ss {
            let p = model.weights[m] * model.init[m][s];
            if p > 0.0 {
                joint_p.push(p);
                joint_alpha.push(alpha[m][1][s]);
                total += p * var[m][s];
            }
        }
    }
    (total + empirical_variance(&joint_p, &joint_alpha)).max(0.0)
}

fn tree_policy_variance(model: &LmdpModel, tree: &HistoryTree, policy: &Policy) -> Result<f64> {
    let actions = match policy {
        Policy::Tree { actions, .. } => actions,
        Policy::Stationary(_) => unreachable!("dispatched on class"),
    };
    if actions.len() != tree.len() {
        return Err(Error::PolicyDomain(
            "tree policy evaluated against a different tree".into(),
        ));
    }
    let table = alpha_eval(model, tree, policy)?;
    let mm = model.num_contexts;
    let mut var = vec![0.0f64; mm * tree.len()];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > model.horizon {
            continue;
        }
        let a = actions[id as usize];
        for m in 0..mm {
            if node.beta[m] <= 0.0 {
                continue;
            }
            let r = model.reward(m, node.state, a);
            let row = model.row(m, node.state, a);
            let mut v = 0.0;
            let mut ex = 0.0;
            let mut ex2 = 0.0;
            for c in tree.children_for_action(id, a) {
                if c.reward.to_bits() == r.to_bits() && row[c.state] > 0.0 {
                    let p = row[c.state];
                    let ac = table.alpha(m, c.node);
                    v += p * var[m * tree.len() + c.node as usize];
                    ex += p * ac;
                    ex2 += p * ac * ac;
                }
            }
            var[m * tree.len() + id as usize] = (v + ex2 - ex * ex).max(0.0);
        }
    }
    let mut joint_p = Vec::new();
    let mut joint_alpha = Vec::new();
    let mut total = 0.0;
    for &root in tree.roots() {
        let beta = &tree.node(root).beta;
        for m in 0..mm {
            if beta[m] > 0.0 {
                joint_p.push(beta[m]);
                joint_alpha.push(table.alpha(m, root));
                total += beta[m] * var[m * tree.len() + root as usize];
            }
        }
    }
    Ok((total + empirical_variance(&joint_p, &joint_alpha)).max(0.0))
}

/// Exact maximum of `policy_variance` over the policy class.
pub fn var_star(model: &LmdpModel, class: PolicyClass, caps: &Caps) -> Result<f64> {
    match class {
        PolicyClass::Stationary => {
            let needed = (model.num_actions as u128).checked_pow(model.num_states as u32);
            match needed {
                Some(n) if n <= caps.max_policies as u128 => {}
                _ => {
                    return Err(Error::EnumerationCapExceeded {
                        needed: needed.unwrap_or(u128::MAX),
                        cap: caps.max_policies,
                    })
                }
            }
            let supports = Supports::new(model);
            let mut actions = vec![0usize; model.num_states];
            let mut best = f64::NEG_INFINITY;
            loop {
                best = best.max(stationary_variance(model, &supports, &actions));
                if !advance(&mut actions, model.num_actions) {
                    break;
                }
            }
            Ok(best)
        }
        PolicyClass::Tree => {
            let tree = Arc::new(build_history_tree(model, caps.max_tree_nodes)?);
            tree_var_star(model, &tree, caps)
        }
    }
}

/// One achievable subtree profile: per-context conditional mean and
/// variance of the reward collected from this node on (0 where the node is
/// unreachable in that context).
#[derive(Clone)]
struct Profile {
    alpha: Vec<f64>,
    var: Vec<f64>,
}

impl Profile {
    fn key(&self) -> Vec<u64> {
        self.alpha
            .iter()
            .chain(self.var.iter())
            .map(|x| x.to_bits())
            .collect()
    }
}

/// Number of value-distinct action assignments on the reachable tree.
pub(crate) fn assignment_count(tree: &HistoryTree, horizon: usize) -> u128 {
    let mut f = vec![1u128; tree.len()];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > horizon {
            continue;
        }
        let mut total: u128 = 0;
        let mut a = usize::MAX;
        let mut prod: u128 = 1;
        for c in &node.children {
            if c.action != a {
                if a != usize::MAX {
                    total = total.saturating_add(prod);
                }
                a = c.action;
                prod = 1;
            }
            prod = prod.saturating_mul(f[c.node as usize]);
        }
        if a != usize::MAX {
            total = total.saturating_add(prod);
        }
        f[id as usize] = total.max(1);
    }
    tree.roots()
        .iter()
        .fold(1u128, |acc, &r| acc.saturating_mul(f[r as usize]))
}

fn tree_var_star(model: &LmdpModel, tree: &Arc<HistoryTree>, caps: &Caps) -> Result<f64> {
    let needed = assignment_count(tree, model.horizon);
    if needed > caps.max_policies as u128 {
        return Err(Error::EnumerationCapExceeded { needed, cap: caps.max_policies });
    }
    let mm = model.num_contexts;
    let mut lists: Vec<Option<Vec<Profile>>> = vec![None; tree.len()];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > model.horizon {
            lists[id as usize] =
                Some(vec![Profile { alpha: vec![0.0; mm], var: vec![0.0; mm] }]);
            continue;
        }
        let mut out: Vec<Profile> = Vec::new();
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        for a in 0..model.num_actions {
            let edges = tree.children_for_action(id, a);
            if edges.is_empty() {
                continue;
            }
            let child_lists: Vec<&Vec<Profile>> = edges
                .iter()
                .map(|c| lists[c.node as usize].as_ref().expect("child processed first"))
                .collect();
            let mut pick = vec![0usize; edges.len()];
            loop {
                let mut prof = Profile { alpha: vec![0.0; mm], var: vec![0.0; mm] };
                for m in 0..mm {
                    if node.beta[m] <= 0.0 {
                        continue;
                    }
                    let r = model.reward(m, node.state, a);
                    let row = model.row(m, node.state, a);
                    let mut alpha = r;
                    let mut v = 0.0;
                    let mut ex = 0.0;
                    let mut ex2 = 0.0;
                    for (j, c) in edges.iter().enumerate() {
                        if c.reward.to_bits() == r.to_bits() && row[c.state] > 0.0 {
                            let p = row[c.state];
                            let child = &child_lists[j][pick[j]];
                            alpha += p * child.alpha[m];
                            v += p * child.var[m];
                            ex += p * child.alpha[m];
                            ex2 += p * child.alpha[m] * child.alpha[m];
                        }
                    }
                    prof.alpha[m] = alpha;
                    prof.var[m] = (v + ex2 - ex * ex).max(0.0);
                }
                if seen.insert(prof.key()) {
                    out.push(prof);
                }
                if !advance_mixed(&mut pick, &child_lists) {
                    break;
                }
            }
        }
        if out.is_empty() {
            out.push(Profile { alpha: vec![0.0; mm], var: vec![0.0; mm] });
        }
        lists[id as usize] = Some(out);
    }
    // Cross product over roots: combine per-root profiles into the episode
    // variance through the joint (context, start state) mixture.
    let roots = tree.roots();
    let root_lists: Vec<&Vec<Profile>> = roots
        .iter()
        .map(|&r| lists[r as usize].as_ref().expect("root processed"))
        .collect();
    let mut pick = vec![0usize; roots.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut joint_p = Vec::new();
        let mut joint_alpha = Vec::new();
        let mut total = 0.0;
        for (j, &root) in roots.iter().enumerate() {
            let beta = &tree.node(root).beta;
            let prof = &root_lists[j][pick[j]];
            for m in 0..mm {
                if beta[m] > 0.0 {
                    joint_p.push(beta[m]);
                    joint_alpha.push(prof.alpha[m]);
                    total += beta[m] * prof.var[m];
                }
            }
        }
        best = best.max((total + empirical_variance(&joint_p, &joint_alpha)).max(0.0));
        if !advance_mixed(&mut pick, &root_lists) {
            break;
        }
    }
    Ok(best)
}

/// Mixed-radix odometer over per-position list lengths; false on wrap.
fn advance_mixed(pick: &mut [usize], lists: &[&Vec<Profile>]) -> bool {
    for i in (0..pick.len()).rev() {
        pick[i] += 1;
        if pick[i] < lists[i].len() {
            return true;
        }
        pick[i] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::DEFAULT_NODE_CAP;
    use crate::instances::random_lmdp;
    use proptest::prelude::*;

    #[test]
    fn empirical_variance_matches_hand_values() {
        assert!((empirical_variance(&[0.5, 0.5], &[0.0, 1.0]) - 0.25).abs() < 1e-15);
        assert_eq!(empirical_variance(&[1.0, 0.0], &[0.3, 0.9]), 0.0);
        assert_eq!(empirical_variance(&[0.25; 4], &[0.7; 4]), 0.0);
        let p = [0.2, 0.3, 0.5];
        let v = [0.1, 0.4, 0.9];
        let mean: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
        let direct: f64 = p.iter().zip(&v).map(|(a, b)| a * (b - mean).powi(2)).sum();
        assert!((empirical_variance(&p, &v) - direct).abs() < 1e-15);
    }

    #[test]
    fn initial_state_lottery_gives_quarter_variance() {
        // One context, one step, two equally likely start states paying 0 and 1.
        let model = LmdpModel {
            num_contexts: 1,
            num_states: 2,
            num_actions: 1,
            horizon: 1,
            weights: vec![1.0],
            init: vec![vec![0.5, 0.5]],
            transitions: vec![vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]],
            rewards: vec![vec![vec![0.0], vec![1.0]]],
        };
        model.validate().unwrap();
        let v = policy_variance(&model, &Policy::Stationary(vec![0, 0])).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_transition_variance_is_q_one_minus_q() {
        // Reach the paying state with probability q, collect 1 once, sink.
        let q = 0.3;
        let model = LmdpModel {
            num_contexts: 1,
            num_states: 3,
            num_actions: 1,
            horizon: 2,
            weights: vec![1.0],
            init: vec![vec![1.0, 0.0, 0.0]],
            transitions: vec![vec![
                vec![vec![0.0, q, 1.0 - q]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0]],
            ]],
            rewards: vec![vec![vec![0.0], vec![1.0], vec![0.0]]],
        };
        model.validate().unwrap();
        let v = policy_variance(&model, &Policy::Stationary(vec![0, 0, 0])).unwrap();
        assert!((v - q * (1.0 - q)).abs() < 1e-12);
        // Both classes agree and the maximum is the same single policy.
        assert!((var_star(&model, PolicyClass::Stationary, &Caps::default()).unwrap()
            - q * (1.0 - q))
            .abs()
            < 1e-12);
        assert!((var_star(&model, PolicyClass::Tree, &Caps::default()).unwrap()
            - q * (1.0 - q))
            .abs()
            < 1e-12);
    }

    #[test]
    fn deterministic_model_has_zero_var_star() {
        // Deterministic transitions, a single start state, one context.
        let model = LmdpModel {
            num_contexts: 1,
            num_states: 2,
            num_actions: 2,
            horizon: 3,
            weights: vec![1.0],
            init: vec![vec![1.0, 0.0]],
            transitions: vec![vec![
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ]],
            rewards: vec![vec![vec![0.1, 0.2], vec![0.05, 0.0]]],
        };
        model.validate().unwrap();
        assert_eq!(var_star(&model, PolicyClass::Stationary, &Caps::default()).unwrap(), 0.0);
        assert_eq!(var_star(&model, PolicyClass::Tree, &Caps::default()).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_context_matches_single_mdp() {
        let single = random_lmdp(1, 3, 2, 3, 2, 99).unwrap();
        let mut doubled = single.clone();
        doubled.num_contexts = 2;
        doubled.weights = vec![0.5, 0.5];
        doubled.init.push(single.init[0].clone());
        doubled.transitions.push(single.transitions[0].clone());
        doubled.rewards.push(single.rewards[0].clone());
        doubled.validate().unwrap();
        for class in [PolicyClass::Stationary, PolicyClass::Tree] {
            let a = var_star(&single, class, &Caps::default()).unwrap();
            let b = var_star(&doubled, class, &Caps::default()).unwrap();
            assert!((a - b).abs() < 1e-12, "{class:?}: {a} vs {b}");
        }
    }

    #[test]
    fn tree_var_star_matches_literal_assignment_enumeration() {
        // Independent oracle: walk every reachable action assignment and
        // take the max of policy_variance over the resulting tree policies.
        let model = crate::model::tests::two_context_model();
        let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
        fn recurse(
            model: &LmdpModel,
            tree: &Arc<HistoryTree>,
            actions: &mut Vec<usize>,
            stack: &mut Vec<u32>,
            best: &mut f64,
        ) {
            let id = match stack.pop() {
                Some(id) => id,
                None => {
                    let policy = Policy::Tree { tree: Arc::clone(tree), actions: actions.clone() };
                    let v = policy_variance(model, &policy).unwrap();
                    if v > *best {
                        *best = v;
                    }
                    return;
                }
            };
            if tree.node(id).depth > model.horizon {
                recurse(model, tree, actions, stack, best);
                stack.push(id);
                return;
            }
            for a in 0..model.num_actions {
                actions[id as usize] = a;
                let children = tree.children_for_action(id, a);
                for c in children {
                    stack.push(c.node);
                }
                recurse(model, tree, actions, stack, best);
                for _ in children {
                    stack.pop();
                }
            }
            stack.push(id);
        }
        let mut actions = vec![0usize; tree.len()];
        let mut stack: Vec<u32> = tree.roots().to_vec();
        let mut brute = f64::NEG_INFINITY;
        recurse(&model, &tree, &mut actions, &mut stack, &mut brute);
        let fast = var_star(&model, PolicyClass::Tree, &Caps::default()).unwrap();
        assert!((fast - brute).abs() < 1e-12, "profile DP {fast} vs literal {brute}");
    }

    #[test]
    fn tree_class_dominates_stationary_class() {
        for seed in 0..4 {
            let model = random_lmdp(2, 3, 2, 3, 2, 400 + seed).unwrap();
            let s = var_star(&model, PolicyClass::Stationary, &Caps::default()).unwrap();
            let t = var_star(&model, PolicyClass::Tree, &Caps::default()).unwrap();
            assert!(t >= s - 1e-12, "seed {seed}: tree {t} < stationary {s}");
        }
    }

    #[test]
    fn assignment_cap_is_enforced() {
        let model = crate::model::tests::two_context_model();
        let caps = Caps { max_policies: 2, ..Caps::default() };
        assert!(matches!(
            var_star(&model, PolicyClass::Tree, &caps),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn monte_carlo_oracle_agrees_on_random_models() {
        use crate::env::rollout;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        for seed in 0..3u64 {
            let model = random_lmdp(2, 3, 2, 4, 3, 700 + seed).unwrap();
            let (policy, _) = crate::alpha::optimal_stationary(&model, &Caps::default()).unwrap();
            let exact = policy_variance(&model, &policy).unwrap();
            let n = 20_000usize;
            let mut rng = ChaCha8Rng::seed_from_u64(31 + seed);
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            let mut sum4 = Vec::with_capacity(n);
            for _ in 0..n {
                let traj = rollout(&model, &policy, &mut rng).unwrap();
                let total: f64 = traj.rewards.iter().sum();
                sum += total;
                sum2 += total * total;
                sum4.push(total);
            }
            let mean = sum / n as f64;
            let mc_var = sum2 / n as f64 - mean * mean;
            let m4: f64 = sum4.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let se = ((m4 - mc_var * mc_var).max(0.0) / n as f64).sqrt();
            assert!(
                (exact - mc_var).abs() <= 3.0 * se + 1e-4,
                "seed {seed}: exact {exact} vs MC {mc_var} (se {se})"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn variance_stays_in_quarter_bound(seed in 0u64..500) {
            let model = random_lmdp(2, 3, 2, 3, 2, seed).unwrap();
            let v = var_star(&model, PolicyClass::Stationary, &Caps::default()).unwrap();
            prop_assert!((0.0..=0.25 + 1e-9).contains(&v));
        }

        #[test]
        fn empirical_variance_never_negative(
            raw in prop::collection::vec((0.01f64..1.0, 0.0f64..1.0), 1..6)
        ) {
            let total: f64 = raw.iter().map(|(p, _)| p).sum();
            let p: Vec<f64> = raw.iter().map(|(w, _)| w / total).collect();
            let v: Vec<f64> = raw.iter().map(|(_, x)| *x).collect();
            let var = empirical_variance(&p, &v);
            prop_assert!(var >= 0.0);
            prop_assert!(var <= 0.25 + 1e-12);
        }
    }
}

//! Per-context value recursions and exact planning.
//!
//! The value of a policy decomposes over contexts: for each context `m` and
//! history `h` ending in state `s`,
//!
//! ```text
//! alpha_m(h, a) = R_m(s, a) + sum_s' P_m(s'|s, a) * alpha_m(h a r s')      r = R_m(s, a)
//! alpha_m(h)   = alpha_m(h, pi(h))
//! ```
//!
//! with `alpha = 0` at depth `H + 1`, and the policy value is the
//! mixture-weighted sum of root alphas. For a stationary policy the
//! recursion collapses to states: `alpha_m(h)` depends on `h` only through
//! `(depth, state)`, so stationary evaluation runs a state-indexed DP and
//! node tables are filled by lookup. Tree policies recurse over the tree
//! itself; entries for `(m, h)` with `beta_m(h) = 0` are fixed to 0 (the
//! history is impossible in that context and carries no weight anywhere).
//!
//! Planning maximizes the path-weight-weighted action value at every node
//! in one backward pass. The path weights `beta` do not depend on actions
//! taken at or below a node, and the total value is linear in the per-node
//! contributions, so the node-wise argmax is exact over history-dependent
//! policies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::history::HistoryTree;
use crate::model::{LmdpModel, Supports};
use crate::policy::{Caps, Policy, PolicyClass};

/// Evaluated alphas over a history tree: `alpha(m, node)` for the policy's
/// own action and `q(m, node, a)` for every action.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    num_nodes: usize,
    num_actions: usize,
    alpha: Vec<f64>,
    q: Vec<f64>,
}

impl AlphaTable {
    pub(crate) fn zeroed(num_contexts: usize, num_nodes: usize, num_actions: usize) -> AlphaTable {
        AlphaTable {
            num_nodes,
            num_actions,
            alpha: vec![0.0; num_contexts * num_nodes],
            q: vec![0.0; num_contexts * num_nodes * num_actions],
        }
    }

    #[inline]
    pub fn alpha(&self, m: usize, node: u32) -> f64 {
        self.alpha[m * self.num_nodes + node as usize]
    }

    #[inline]
    pub fn q(&self, m: usize, node: u32, a: usize) -> f64 {
        self.q[(m * self.num_nodes + node as usize) * self.num_actions + a]
    }

    #[inline]
    pub(crate) fn set_alpha(&mut self, m: usize, node: u32, v: f64) {
        self.alpha[m * self.num_nodes + node as usize] = v;
    }

    #[inline]
    pub(crate) fn set_q(&mut self, m: usize, node: u32, a: usize, v: f64) {
        self.q[(m * self.num_nodes + node as usize) * self.num_actions + a] = v;
    }

    /// Mixture value at the roots: `sum_m sum_roots beta_m(root) * alpha_m(root)`.
    pub fn mixture_value(&self, tree: &HistoryTree) -> f64 {
        let contexts = self.alpha.len() / self.num_nodes.max(1);
        let mut v = 0.0;
        for &root in tree.roots() {
            let beta = &tree.node(root).beta;
            for m in 0..contexts {
                v += beta[m] * self.alpha(m, root);
            }
        }
        v
    }
}

/// Backward state-indexed evaluation of a stationary policy.
/// Returns `alpha[m][t][s]` for `t` in `1..=H+1` (index 0 unused keeps the
/// depth convention; `alpha[m][H+1][s] = 0`).
pub(crate) fn stationary_state_alpha(
    model: &LmdpModel,
    supports: &Supports,
    actions: &[usize],
) -> Vec<Vec<Vec<f64>>> {
    let (mm, ss, h) = (model.num_contexts, model.num_states, model.horizon);
    let mut alpha = vec![vec![vec![0.0; ss]; h + 2]; mm];
    for m in 0..mm {
        for t in (1..=h).rev() {
            for s in 0..ss {
                let a = actions[s];
                let row = model.row(m, s, a);
                let next = &alpha[m][t + 1];
                let mut v = model.reward(m, s, a);
                for &s2 in supports.of(m, s, a) {
                    v += row[s2 as usize] * next[s2 as usize];
                }
                alpha[m][t][s] = v;
            }
        }
    }
    alpha
}

/// Value of a stationary policy without materializing per-depth tables.
pub(crate) fn stationary_value(model: &LmdpModel, supports: &Supports, actions: &[usize]) -> f64 {
    let (mm, ss, h) = (model.num_contexts, model.num_states, model.horizon);
    let mut total = 0.0;
    let mut next = vec![0.0f64; ss];
    let mut cur = vec![0.0f64; ss];
    for m in 0..mm {
        next.iter_mut().for_each(|v| *v = 0.0);
        for _t in (1..=h).rev() {
            for s in 0..ss {
                let a = actions[s];
                let row = model.row(m, s, a);
                let mut v = model.reward(m, s, a);
                for &s2 in supports.of(m, s, a) {
                    v += row[s2 as usize] * next[s2 as usize];
                }
                cur[s] = v;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for s in 0..ss {
            total += model.weights[m] * model.init[m][s] * next[s];
        }
    }
    total
}

/// Evaluates `policy` over `tree`, producing the full alpha table.
pub fn alpha_eval(model: &LmdpModel, tree: &HistoryTree, policy: &Policy) -> Result<AlphaTable> {
    policy.check(model)?;
    let mm = model.num_contexts;
    let mut table = AlphaTable::zeroed(mm, tree.len(), model.num_actions);
    match policy {
        Policy::Stationary(actions) => {
            let supports = Supports::new(model);
            let state_alpha = stationary_state_alpha(model, &supports, actions);
            for id in tree.ids() {
                let node = tree.node(id);
                if node.depth > model.horizon {
                    continue;
                }
                for m in 0..mm {
                    for a in 0..model.num_actions {
                        let row = model.row(m, node.state, a);
                        let next = &state_alpha[m][node.depth + 1];
                        let mut q = model.reward(m, node.state, a);
                        for &s2 in supports.of(m, node.state, a) {
                            q += row[s2 as usize] * next[s2 as usize];
                        }
                        table.set_q(m, id, a, q);
                    }
                    table.set_alpha(m, id, state_alpha[m][node.depth][node.state]);
                }
            }
            Ok(table)
        }
        Policy::Tree { actions, .. } => {
            if actions.len() != tree.len() {
                return Err(Error::PolicyDomain(
                    "tree policy evaluated against a different tree".into(),
                ));
            }
            for id in tree.ids().rev() {
                let node = tree.node(id);
                if node.depth > model.horizon {
                    continue;
                }
                for m in 0..mm {
                    if node.beta[m] <= 0.0 {
                        continue;
                    }
                    for a in 0..model.num_actions {
                        table.set_q(m, id, a, context_q(model, tree, &table, id, m, a));
                    }
                    table.set_alpha(m, id, table.q(m, id, actions[id as usize]));
                }
            }
            Ok(table)
        }
    }
}

/// One-step lookahead for context `m` at a node with `beta_m > 0`: every
/// needed child exists because the child inherits positive weight.
fn context_q(
    model: &LmdpModel,
    tree: &HistoryTree,
    table: &AlphaTable,
    id: u32,
    m: usize,
    a: usize,
) -> f64 {
    let node = tree.node(id);
    let s = node.state;
    let r = model.reward(m, s, a);
    let row = model.row(m, s, a);
    let mut q = r;
    for c in tree.children_for_action(id, a) {
        if c.reward.to_bits() == r.to_bits() && row[c.state] > 0.0 {
            q += row[c.state] * table.alpha(m, c.node);
        }
    }
    q
}

/// Expected total reward of a policy from the initial distribution.
pub fn value_of_policy(model: &LmdpModel, policy: &Policy) -> Result<f64> {
    policy.check(model)?;
    match policy {
        Policy::Stationary(actions) => {
            let supports = Supports::new(model);
            Ok(stationary_value(model, &supports, actions))
        }
        Policy::Tree { tree, .. } => {
            let table = alpha_eval(model, tree, policy)?;
            Ok(table.mixture_value(tree))
        }
    }
}

/// Exact optimal history-dependent policy by backward induction over the
/// tree: at every node pick the action maximizing
/// `sum_m beta_m(h) * alpha_m(h, a)`. Ties break toward the smaller action.
pub fn plan_optimal(model: &LmdpModel, tree: &Arc<HistoryTree>) -> Result<(Policy, f64)> {
    let mm = model.num_contexts;
    let mut table = AlphaTable::zeroed(mm, tree.len(), model.num_actions);
    let mut actions = vec![0usize; tree.len()];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > model.horizon {
            continue;
        }
        let mut best_a = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        let mut qs = vec![0.0; mm];
        for a in 0..model.num_actions {
            let mut score = 0.0;
            for m in 0..mm {
                if node.beta[m] <= 0.0 {
                    continue;
                }
                let q = context_q(model, tree, &table, id, m, a);
                table.set_q(m, id, a, q);
                score += node.beta[m] * q;
            }
            if score > best_score {
                best_score = score;
                best_a = a;
                for m in 0..mm {
                    qs[m] = table.q(m, id, a);
                }
            }
        }
        actions[id as usize] = best_a;
        for m in 0..mm {
            if node.beta[m] > 0.0 {
                table.set_alpha(m, id, qs[m]);
            }
        }
    }
    let value = table.mixture_value(tree);
    let policy = Policy::Tree { tree: Arc::clone(tree), actions };
    Ok((policy, value))
}

/// Exact optimum over the stationary class by lexicographic enumeration of
/// all `A^S` action assignments. The first assignment attaining the maximum
/// wins, so ties break lexicographically.
pub fn optimal_stationary(model: &LmdpModel, caps: &Caps) -> Result<(Policy, f64)> {
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
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let v = stationary_value(model, &supports, &actions);
        match &best {
            Some((_, bv)) if v <= *bv => {}
            _ => best = Some((actions.clone(), v)),
        }
        if !advance(&mut actions, model.num_actions) {
            break;
        }
    }
    let (actions, value) = best.expect("at least one policy enumerated");
    Ok((Policy::Stationary(actions), value))
}

/// Odometer step in lexicographic order (last coordinate fastest).
pub(crate) fn advance(actions: &mut [usize], num_actions: usize) -> bool {
    for slot in actions.iter_mut().rev() {
        *slot += 1;
        if *slot < num_actions {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Optimal value over a policy class; the tree is required (and only used)
/// for the `Tree` class.
pub fn optimal_value(
    model: &LmdpModel,
    class: PolicyClass,
    tree: Option<&Arc<HistoryTree>>,
    caps: &Caps,
) -> Result<(Policy, f64)> {
    match class {
        PolicyClass::Stationary => optimal_stationary(model, caps),
        PolicyClass::Tree => {
            let tree = tree.ok_or_else(|| {
                Error::Domain("tree-class planning requires a history tree".into())
            })?;
            plan_optimal(model, tree)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::build_history_tree;
    use crate::history::DEFAULT_NODE_CAP;
    use crate::instances::random_lmdp;

    /// Independent finite-horizon value iteration for single-context models.
    pub(crate) fn value_iteration(model: &LmdpModel) -> f64 {
        assert_eq!(model.num_contexts, 1);
        let (ss, aa, h) = (model.num_states, model.num_actions, model.horizon);
        let mut next = vec![0.0f64; ss];
        for _t in (1..=h).rev() {
            let mut cur = vec![0.0f64; ss];
            for s in 0..ss {
                let mut best = f64::NEG_INFINITY;
                for a in 0..aa {
                    let mut q = model.reward(0, s, a);
                    for s2 in 0..ss {
                        q += model.row(0, s, a)[s2] * next[s2];
                    }
                    best = best.max(q);
                }
                cur[s] = best;
            }
            next = cur;
        }
        (0..ss).map(|s| model.init[0][s] * next[s]).sum()
    }

    fn zero_reward_model() -> LmdpModel {
        let mut model = crate::model::tests::two_context_model();
        for m in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    model.rewards[m][s][a] = 0.0;
                }
            }
        }
        model
    }

    #[test]
    fn zero_rewards_give_zero_alphas() {
        let model = zero_reward_model();
        let tree = build_history_tree(&model, DEFAULT_NODE_CAP).unwrap();
        let policy = Policy::Stationary(vec![0, 1]);
        let table = alpha_eval(&model, &tree, &policy).unwrap();
        for id in tree.ids() {
            for m in 0..2 {
                assert_eq!(table.alpha(m, id), 0.0);
            }
        }
        assert_eq!(value_of_policy(&model, &policy).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_chain_alpha_is_one_on_path() {
        // Reward 1 collected once mid-chain; the tail state absorbs at 0,
        // so every supported path pays at most 1.
        let model = LmdpModel {
            num_contexts: 1,
            num_states: 3,
            num_actions: 1,
            horizon: 3,
            weights: vec![1.0],
            init: vec![vec![1.0, 0.0, 0.0]],
            transitions: vec![vec![
                vec![vec![0.0, 1.0, 0.0]],
                vec![vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0]],
            ]],
            rewards: vec![vec![vec![0.0], vec![1.0], vec![0.0]]],
        };
        model.validate().unwrap();
        let tree = build_history_tree(&model, DEFAULT_NODE_CAP).unwrap();
        let policy = Policy::Stationary(vec![0, 0, 0]);
        let table = alpha_eval(&model, &tree, &policy).unwrap();
        for &root in tree.roots() {
            assert!((table.alpha(0, root) - 1.0).abs() < 1e-15);
        }
        assert!((value_of_policy(&model, &policy).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alphas_stay_in_unit_interval_and_rerolls_match() {
        for seed in 0..5 {
            let model = random_lmdp(2, 4, 2, 3, 3, seed).unwrap();
            let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
            let (policy, _) = plan_optimal(&model, &tree).unwrap();
            let t1 = alpha_eval(&model, &tree, &policy).unwrap();
            let t2 = alpha_eval(&model, &tree, &policy).unwrap();
            for id in tree.ids() {
                for m in 0..2 {
                    let a = t1.alpha(m, id);
                    assert!((0.0..=1.0 + 1e-9).contains(&a));
                    assert_eq!(a.to_bits(), t2.alpha(m, id).to_bits());
                }
            }
        }
    }

    #[test]
    fn single_context_planning_matches_value_iteration() {
        for seed in 0..10 {
            let model = random_lmdp(1, 4, 2, 4, 2, seed).unwrap();
            let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
            let (_, v) = plan_optimal(&model, &tree).unwrap();
            let vi = value_iteration(&model);
            assert!(
                (v - vi).abs() < 1e-12,
                "seed {seed}: tree DP {v} vs value iteration {vi}"
            );
        }
    }

    /// Exhaustive oracle: enumerate distinct reachable tree assignments
    /// depth-first and evaluate each via the per-context recursion.
    fn brute_force_tree_optimum(model: &LmdpModel, tree: &Arc<HistoryTree>) -> f64 {
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
                    let v = value_of_policy(model, &policy).unwrap();
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
        let mut best = f64::NEG_INFINITY;
        recurse(model, tree, &mut actions, &mut stack, &mut best);
        best
    }

    #[test]
    fn planner_attains_the_brute_force_optimum() {
        let model = crate::model::tests::two_context_model();
        let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
        let (policy, v) = plan_optimal(&model, &tree).unwrap();
        let direct = value_of_policy(&model, &policy).unwrap();
        assert!((v - direct).abs() < 1e-12);
        let brute = brute_force_tree_optimum(&model, &tree);
        assert!((v - brute).abs() < 1e-12, "planner {v} vs brute force {brute}");
    }

    #[test]
    fn stationary_enumeration_is_dominated_by_tree_planning() {
        for seed in 0..5 {
            let model = random_lmdp(2, 3, 2, 3, 2, seed + 50).unwrap();
            let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
            let (_, v_tree) = plan_optimal(&model, &tree).unwrap();
            let (pol, v_stat) = optimal_stationary(&model, &Caps::default()).unwrap();
            assert!(v_stat <= v_tree + 1e-12);
            assert!((value_of_policy(&model, &pol).unwrap() - v_stat).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let model = crate::model::tests::two_context_model();
        let caps = Caps { max_policies: 3, ..Caps::default() };
        assert!(matches!(
            optimal_stationary(&model, &caps),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn stationary_node_fill_agrees_with_tree_recursion() {
        // A stationary policy evaluated node-wise must match evaluating the
        // same action assignment written as a tree policy.
        let model = crate::model::tests::two_context_model();
        let tree = Arc::new(build_history_tree(&model, DEFAULT_NODE_CAP).unwrap());
        let actions = vec![1usize, 0];
        let stat = Policy::Stationary(actions.clone());
        let lifted = Policy::Tree {
            tree: Arc::clone(&tree),
            actions: tree.ids().map(|id| actions[tree.node(id).state]).collect(),
        };
        let ts = alpha_eval(&model, &tree, &stat).unwrap();
        let tt = alpha_eval(&model, &tree, &lifted).unwrap();
        for id in tree.ids() {
            for m in 0..2 {
                if tree.node(id).beta[m] > 0.0 {
                    assert!((ts.alpha(m, id) - tt.alpha(m, id)).abs() < 1e-12);
                }
            }
        }
        assert!(
            (value_of_policy(&model, &stat).unwrap() - value_of_policy(&model, &lifted).unwrap())
                .abs()
                < 1e-12
        );
    }
}

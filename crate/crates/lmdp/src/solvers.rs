//! The two optimistic policy solvers and their shared kernels.
//!
//! Both solvers consume a frozen count snapshot and return a policy whose
//! optimistic value upper-bounds the best achievable value when the
//! estimates are close to the truth.
//!
//! The Bernstein solver maximizes, jointly over policies and transition
//! models inside a per-row confidence box around the estimates, the exact
//! policy value. The joint maximization runs as outer policy enumeration
//! times an inner per-row greedy maximization (`box_simplex_argmax`),
//! which is exact for a fixed policy because the confidence set is a
//! product over rows and the backward recursion is monotone in downstream
//! alphas.
//!
//! The MVP solver evaluates policies directly under the estimates plus a
//! variance-dependent bonus per step, clipping alphas at the total-reward
//! bound 1. Its bonus constants make the one-step backup monotone in the
//! next-depth alphas, which is what lets the tree-class maximization run
//! as a single backward pass weighted by estimated path weights.
//!
//! Two conventions shared by both optimistic recursions, chosen to keep
//! them total and optimistic everywhere:
//! - rows never observed keep `N_eff = 1` and a uniform estimate, making
//!   the bonus or radius maximal there;
//! - in tree-policy recursions, a successor the estimate considers
//!   possible but the tree does not contain is assigned the ceiling
//!   continuation 1 before the clip (at the final step the continuation
//!   is 0 regardless, since no reward remains).

use std::str::FromStr;
use std::sync::Arc;

use crate::alpha::{advance, AlphaTable};
use crate::error::{Error, Result};
use crate::history::HistoryTree;
use crate::learner::Snapshot;
use crate::model::LmdpModel;
use crate::policy::{Caps, Policy, PolicyClass};
use crate::variance::{assignment_count, empirical_variance};

/// Which optimistic solver a learning run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Bernstein,
    Mvp,
}

impl SolverTag {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverTag::Bernstein => "bernstein",
            SolverTag::Mvp => "mvp",
        }
    }
}

impl FromStr for SolverTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<SolverTag> {
        match s {
            "bernstein" => Ok(SolverTag::Bernstein),
            "mvp" => Ok(SolverTag::Mvp),
            other => Err(Error::Format(format!(
                "unknown solver '{other}' (expected 'bernstein' or 'mvp')"
            ))),
        }
    }
}

/// Per-entry confidence radii `eps = 2 sqrt(phat iota / N_eff) + 5 iota / N_eff`.
#[derive(Debug, Clone)]
pub struct ConfidenceRadii {
    num_states: usize,
    num_actions: usize,
    eps: Vec<f64>,
}

impl ConfidenceRadii {
    #[inline]
    pub fn row(&self, m: usize, s: usize, a: usize) -> &[f64] {
        let base = ((m * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.eps[base..base + self.num_states]
    }
}

/// Builds the Bernstein confidence radii for every row of the snapshot.
pub fn confidence_radii(snapshot: &Snapshot, iota: f64) -> ConfidenceRadii {
    let (mm, ss, aa) = (snapshot.num_contexts, snapshot.num_states, snapshot.num_actions);
    let mut eps = Vec::with_capacity(mm * ss * aa * ss);
    for m in 0..mm {
        for s in 0..ss {
            for a in 0..aa {
                let n = snapshot.n_eff(m, s, a) as f64;
                let row = snapshot.phat_row(m, s, a);
                for &p in row {
                    eps.push(2.0 * (p * iota / n).sqrt() + 5.0 * iota / n);
                }
            }
        }
    }
    ConfidenceRadii { num_states: ss, num_actions: aa, eps }
}

/// Indices of `v` in decreasing value order, ties toward the smaller index.
fn pour_order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).expect("finite values").then(i.cmp(&j)));
    idx
}

/// Maximizes `p^T v` over the box `|p - phat| <= eps` intersected with the
/// simplex: start every coordinate at its lower bound, then pour the
/// remaining mass greedily in decreasing `v` order up to each upper bound.
pub fn box_simplex_argmax(phat: &[f64], eps: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != phat.len() || v.len() != phat.len() {
        return Err(Error::Dimension(format!(
            "box_simplex_argmax lengths: phat {}, eps {}, v {}",
            phat.len(),
            eps.len(),
            v.len()
        )));
    }
    let mut p: Vec<f64> = phat.iter().zip(eps).map(|(ph, e)| (ph - e).max(0.0)).collect();
    let lower_sum: f64 = p.iter().sum();
    if lower_sum > 1.0 + 1e-9 {
        return Err(Error::Infeasible(format!(
            "box lower bounds sum to {lower_sum} > 1"
        )));
    }
    let mut rem = 1.0 - lower_sum;
    if rem > 0.0 {
        for i in pour_order(v) {
            let hi = (phat[i] + eps[i]).min(1.0);
            let add = (hi - p[i]).clamp(0.0, rem);
            p[i] += add;
            rem -= add;
            if rem <= 0.0 {
                break;
            }
        }
    }
    Ok(p)
}

/// Objective-only variant of the greedy pour with a precomputed order,
/// used inside the backward recursions.
fn box_max_dot(phat: &[f64], eps: &[f64], v: &[f64], order: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut lower_sum = 0.0;
    for i in 0..phat.len() {
        let lo = (phat[i] - eps[i]).max(0.0);
        total += lo * v[i];
        lower_sum += lo;
    }
    let mut rem = 1.0 - lower_sum;
    if rem > 0.0 {
        for &i in order {
            let lo = (phat[i] - eps[i]).max(0.0);
            let hi = (phat[i] + eps[i]).min(1.0);
            let add = (hi - lo).clamp(0.0, rem);
            total += add * v[i];
            rem -= add;
            if rem <= 0.0 {
                break;
            }
        }
    }
    total
}

/// Variance-dependent optimism bonus:
/// `max{ 4 sqrt(supp(phat) V(phat, alpha) iota / N_eff), 16 S iota / N_eff }`.
pub fn mvp_bonus(
    phat_row: &[f64],
    alpha_next: &[f64],
    n_eff: u64,
    num_states: usize,
    iota: f64,
) -> f64 {
    let supp = phat_row.iter().filter(|&&p| p > 0.0).count();
    let var = empirical_variance(phat_row, alpha_next);
    let n = n_eff as f64;
    let var_branch = 4.0 * (supp as f64 * var * iota / n).sqrt();
    let const_branch = 16.0 * num_states as f64 * iota / n;
    var_branch.max(const_branch)
}

/// One MVP backup step, `min{ r + bonus + phat^T alpha_next, 1 }`; the
/// bonus construction keeps this non-decreasing in every entry of
/// `alpha_next`.
pub fn mvp_backup(
    reward: f64,
    phat_row: &[f64],
    alpha_next: &[f64],
    n_eff: u64,
    num_states: usize,
    iota: f64,
) -> f64 {
    let bonus = mvp_bonus(phat_row, alpha_next, n_eff, num_states, iota);
    let dot: f64 = phat_row.iter().zip(alpha_next).map(|(p, v)| p * v).sum();
    (reward + bonus + dot).min(1.0)
}

/// Fills `out[s']` with the continuation value of each successor for
/// context `m` after playing `a` at node `id`: the child's alpha where the
/// tree has one, the ceiling 1 elsewhere, and 0 at the final step.
fn successor_values(
    model: &LmdpModel,
    tree: &HistoryTree,
    table: &AlphaTable,
    id: u32,
    m: usize,
    a: usize,
    out: &mut [f64],
) {
    let node = tree.node(id);
    if node.depth == model.horizon {
        out.fill(0.0);
        return;
    }
    out.fill(1.0);
    let r = model.reward(m, node.state, a);
    for c in tree.children_for_action(id, a) {
        if c.reward.to_bits() == r.to_bits() {
            out[c.state] = table.alpha(m, c.node);
        }
    }
}

/// Backward Bernstein recursion over the tree for a fixed action
/// assignment: `alpha = min{ R + max_{p in box} p^T alpha_next, 1 }`.
fn bernstein_tree_table(
    model: &LmdpModel,
    snapshot: &Snapshot,
    radii: &ConfidenceRadii,
    tree: &HistoryTree,
    actions: &[usize],
) -> (AlphaTable, f64) {
    let mm = model.num_contexts;
    let mut table = AlphaTable::zeroed(mm, tree.len(), model.num_actions);
    let mut succ = vec![0.0; model.num_states];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > model.horizon {
            continue;
        }
        for m in 0..mm {
            for a in 0..model.num_actions {
                successor_values(model, tree, &table, id, m, a, &mut succ);
                let order = pour_order(&succ);
                let phat = snapshot.phat_row(m, node.state, a);
                let eps = radii.row(m, node.state, a);
                let q = (model.reward(m, node.state, a) + box_max_dot(phat, eps, &succ, &order))
                    .min(1.0);
                table.set_q(m, id, a, q);
            }
            table.set_alpha(m, id, table.q(m, id, actions[id as usize]));
        }
    }
    let value = table.mixture_value(tree);
    (table, value)
}

/// State-indexed Bernstein recursion for a stationary policy; returns
/// `alpha[m][t][s]` with depth convention matching the exact evaluator.
fn bernstein_state_alpha(
    model: &LmdpModel,
    snapshot: &Snapshot,
    radii: &ConfidenceRadii,
    actions: &[usize],
) -> Vec<Vec<Vec<f64>>> {
    let (mm, ss, h) = (model.num_contexts, model.num_states, model.horizon);
    let mut alpha = vec![vec![vec![0.0; ss]; h + 2]; mm];
    for m in 0..mm {
        for t in (1..=h).rev() {
            let order = pour_order(&alpha[m][t + 1]);
            for s in 0..ss {
                let a = actions[s];
                let q = model.reward(m, s, a)
                    + box_max_dot(
                        snapshot.phat_row(m, s, a),
                        radii.row(m, s, a),
                        &alpha[m][t + 1],
                        &order,
                    );
                alpha[m][t][s] = q.min(1.0);
            }
        }
    }
    alpha
}

fn mixture_of_state_alpha(model: &LmdpModel, alpha: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for m in 0..model.num_contexts {
        for s in 0..model.num_states {
            total += model.weights[m] * model.init[m][s] * alpha[m][1][s];
        }
    }
    total
}

/// Value-only Bernstein evaluation of a stationary action assignment.
pub(crate) fn bernstein_value_stationary(
    model: &LmdpModel,
    snapshot: &Snapshot,
    radii: &ConfidenceRadii,
    actions: &[usize],
) -> f64 {
    let alpha = bernstein_state_alpha(model, snapshot, radii, actions);
    mixture_of_state_alpha(model, &alpha)
}

/// Optimistic evaluation of a fixed policy against the Bernstein
/// confidence set: exact maximum of the policy's value over all transition
/// models in the set, with alphas clipped at 1.
pub fn optimistic_alpha_bernstein(
    model: &LmdpModel,
    snapshot: &Snapshot,
    radii: &ConfidenceRadii,
    tree: &HistoryTree,
    policy: &Policy,
) -> Result<(AlphaTable, f64)> {
    policy.check(model)?;
    match policy {
        Policy::Stationary(actions) => {
            let alpha = bernstein_state_alpha(model, snapshot, radii, actions);
            let value = mixture_of_state_alpha(model, &alpha);
            let mut table = AlphaTable::zeroed(model.num_contexts, tree.len(), model.num_actions);
            for id in tree.ids() {
                let node = tree.node(id);
                if node.depth > model.horizon {
                    continue;
                }
                for m in 0..model.num_contexts {
                    let order = pour_order(&alpha[m][node.depth + 1]);
                    for a in 0..model.num_actions {
                        let q = (model.reward(m, node.state, a)
                            + box_max_dot(
                                snapshot.phat_row(m, node.state, a),
                                radii.row(m, node.state, a),
                                &alpha[m][node.depth + 1],
                                &order,
                            ))
                        .min(1.0);
                        table.set_q(m, id, a, q);
                    }
                    table.set_alpha(m, id, alpha[m][node.depth][node.state]);
                }
            }
            Ok((table, value))
        }
        Policy::Tree { actions, .. } => {
            if actions.len() != tree.len() {
                return Err(Error::PolicyDomain(
                    "tree policy evaluated against a different tree".into(),
                ));
            }
            Ok(bernstein_tree_table(model, snapshot, radii, tree, actions))
        }
    }
}

/// Shared stationary-enumeration loop: lexicographic order, first
/// maximizer wins.
fn enumerate_stationary(
    model: &LmdpModel,
    caps: &Caps,
    mut eval: impl FnMut(&[usize]) -> f64,
) -> Result<(Vec<usize>, f64)> {
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
    let mut actions = vec![0usize; model.num_states];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let v = eval(&actions);
        match &best {
            Some((_, bv)) if v <= *bv => {}
            _ => best = Some((actions.clone(), v)),
        }
        if !advance(&mut actions, model.num_actions) {
            break;
        }
    }
    Ok(best.expect("at least one assignment"))
}

/// Depth-first enumeration of reachable tree assignments in lexicographic
/// order of the full action vector (unreached nodes pinned to action 0).
fn enumerate_tree_assignments(
    model: &LmdpModel,
    tree: &HistoryTree,
    caps: &Caps,
    mut eval: impl FnMut(&[usize]) -> f64,
) -> Result<(Vec<usize>, f64)> {
    let needed = assignment_count(tree, model.horizon);
    if needed > caps.max_policies as u128 {
        return Err(Error::EnumerationCapExceeded { needed, cap: caps.max_policies });
    }
    fn recurse(
        model: &LmdpModel,
        tree: &HistoryTree,
        work: &mut std::collections::BTreeSet<u32>,
        actions: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
        eval: &mut impl FnMut(&[usize]) -> f64,
    ) {
        let id = match work.iter().next().copied() {
            Some(id) => id,
            None => {
                let v = eval(actions);
                match best {
                    Some((_, bv)) if v <= *bv => {}
                    _ => *best = Some((actions.clone(), v)),
                }
                return;
            }
        };
        work.remove(&id);
        for a in 0..model.num_actions {
            actions[id as usize] = a;
            let children = tree.children_for_action(id, a);
            for c in children {
                if tree.node(c.node).depth <= model.horizon {
                    work.insert(c.node);
                }
            }
            recurse(model, tree, work, actions, best, eval);
            for c in children {
                work.remove(&c.node);
            }
        }
        actions[id as usize] = 0;
        work.insert(id);
    }
    let mut work: std::collections::BTreeSet<u32> = tree
        .roots()
        .iter()
        .copied()
        .filter(|&r| tree.node(r).depth <= model.horizon)
        .collect();
    let mut actions = vec![0usize; tree.len()];
    let mut best = None;
    recurse(model, tree, &mut work, &mut actions, &mut best, &mut eval);
    Ok(best.expect("at least one assignment"))
}

/// Bernstein solver: argmax over the enumerated class of the optimistic
/// policy value; returns the policy and the attained optimum.
pub fn solve_bernstein(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    tree: Option<&Arc<HistoryTree>>,
    class: PolicyClass,
    caps: &Caps,
) -> Result<(Policy, f64)> {
    let radii = confidence_radii(snapshot, iota);
    match class {
        PolicyClass::Stationary => {
            let (actions, value) = enumerate_stationary(model, caps, |acts| {
                bernstein_value_stationary(model, snapshot, &radii, acts)
            })?;
            Ok((Policy::Stationary(actions), value))
        }
        PolicyClass::Tree => {
            let tree = tree.ok_or_else(|| {
                Error::Domain("tree-class solving requires a history tree".into())
            })?;
            let (actions, value) = enumerate_tree_assignments(model, tree, caps, |acts| {
                bernstein_tree_table(model, snapshot, &radii, tree, acts).1
            })?;
            Ok((Policy::Tree { tree: Arc::clone(tree), actions }, value))
        }
    }
}

/// State-indexed MVP recursion for a stationary policy.
fn mvp_state_alpha(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    actions: &[usize],
) -> Vec<Vec<Vec<f64>>> {
    let (mm, ss, h) = (model.num_contexts, model.num_states, model.horizon);
    let mut alpha = vec![vec![vec![0.0; ss]; h + 2]; mm];
    for m in 0..mm {
        for t in (1..=h).rev() {
            for s in 0..ss {
                let a = actions[s];
                let row = snapshot.phat_row(m, s, a);
                let next = &alpha[m][t + 1];
                alpha[m][t][s] = mvp_backup(
                    model.reward(m, s, a),
                    row,
                    next,
                    snapshot.n_eff(m, s, a),
                    ss,
                    iota,
                );
            }
        }
    }
    alpha
}

/// Value-only MVP evaluation of a stationary action assignment.
pub(crate) fn mvp_value_stationary(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    actions: &[usize],
) -> f64 {
    let alpha = mvp_state_alpha(model, snapshot, iota, actions);
    mixture_of_state_alpha(model, &alpha)
}

/// Backward MVP recursion over the tree for a fixed action assignment:
/// `alpha = min{ R + B + phat^T alpha_next, 1 }`.
fn mvp_tree_table(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    tree: &HistoryTree,
    actions: &[usize],
) -> (AlphaTable, f64) {
    let mm = model.num_contexts;
    let mut table = AlphaTable::zeroed(mm, tree.len(), model.num_actions);
    let mut succ = vec![0.0; model.num_states];
    for id in tree.ids().rev() {
        let node = tree.node(id);
        if node.depth > model.horizon {
            continue;
        }
        for m in 0..mm {
            for a in 0..model.num_actions {
                successor_values(model, tree, &table, id, m, a, &mut succ);
                let row = snapshot.phat_row(m, node.state, a);
                let q = mvp_backup(
                    model.reward(m, node.state, a),
                    row,
                    &succ,
                    snapshot.n_eff(m, node.state, a),
                    model.num_states,
                    iota,
                );
                table.set_q(m, id, a, q);
            }
            table.set_alpha(m, id, table.q(m, id, actions[id as usize]));
        }
    }
    let value = table.mixture_value(tree);
    (table, value)
}

/// Optimistic evaluation of a fixed policy under the MVP bonus recursion.
pub fn optimistic_alpha_mvp(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    tree: &HistoryTree,
    policy: &Policy,
) -> Result<(AlphaTable, f64)> {
    policy.check(model)?;
    match policy {
        Policy::Stationary(actions) => {
            let alpha = mvp_state_alpha(model, snapshot, iota, actions);
            let value = mixture_of_state_alpha(model, &alpha);
            let mut table = AlphaTable::zeroed(model.num_contexts, tree.len(), model.num_actions);
            for id in tree.ids() {
                let node = tree.node(id);
                if node.depth > model.horizon {
                    continue;
                }
                for m in 0..model.num_contexts {
                    let next = &alpha[m][node.depth + 1];
                    for a in 0..model.num_actions {
                        let row = snapshot.phat_row(m, node.state, a);
                        let q = mvp_backup(
                            model.reward(m, node.state, a),
                            row,
                            next,
                            snapshot.n_eff(m, node.state, a),
                            model.num_states,
                            iota,
                        );
                        table.set_q(m, id, a, q);
                    }
                    table.set_alpha(m, id, alpha[m][node.depth][node.state]);
                }
            }
            Ok((table, value))
        }
        Policy::Tree { actions, .. } => {
            if actions.len() != tree.len() {
                return Err(Error::PolicyDomain(
                    "tree policy evaluated against a different tree".into(),
                ));
            }
            Ok(mvp_tree_table(model, snapshot, iota, tree, actions))
        }
    }
}

/// MVP solver. Stationary class: exhaustive enumeration. Tree class: one
/// backward pass choosing, at every node, the action maximizing the sum
/// over contexts of estimated path weight times optimistic action value;
/// the path weights are computed under the estimates and do not depend on
/// actions taken at or below the node.
pub fn solve_mvp(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    tree: Option<&Arc<HistoryTree>>,
    class: PolicyClass,
    caps: &Caps,
) -> Result<(Policy, f64)> {
    match class {
        PolicyClass::Stationary => {
            let (actions, value) = enumerate_stationary(model, caps, |acts| {
                mvp_value_stationary(model, snapshot, iota, acts)
            })?;
            Ok((Policy::Stationary(actions), value))
        }
        PolicyClass::Tree => {
            let tree = tree.ok_or_else(|| {
                Error::Domain("tree-class solving requires a history tree".into())
            })?;
            let mm = model.num_contexts;
            let len = tree.len();
            // Forward pass: path weights under the estimated transitions,
            // matching rewards exactly as the exact path weights do.
            let mut bhat = vec![0.0f64; mm * len];
            for id in tree.ids() {
                let node = tree.node(id);
                match node.parent {
                    None => {
                        for m in 0..mm {
                            bhat[m * len + id as usize] =
                                model.weights[m] * model.init[m][node.state];
                        }
                    }
                    Some(p) => {
                        let (a, r) = node.in_edge.expect("non-root has an incoming edge");
                        let ps = tree.node(p).state;
                        for m in 0..mm {
                            let up = bhat[m * len + p as usize];
                            if up > 0.0 && model.reward(m, ps, a).to_bits() == r.to_bits() {
                                bhat[m * len + id as usize] =
                                    up * snapshot.phat_row(m, ps, a)[node.state];
                            }
                        }
                    }
                }
            }
            // Backward pass: weighted argmax per node.
            let mut table = AlphaTable::zeroed(mm, len, model.num_actions);
            let mut actions = vec![0usize; len];
            let mut succ = vec![0.0; model.num_states];
            for id in tree.ids().rev() {
                let node = tree.node(id);
                if node.depth > model.horizon {
                    continue;
                }
                let mut best_a = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for a in 0..model.num_actions {
                    let mut score = 0.0;
                    for m in 0..mm {
                        successor_values(model, tree, &table, id, m, a, &mut succ);
                        let row = snapshot.phat_row(m, node.state, a);
                        let q = mvp_backup(
                            model.reward(m, node.state, a),
                            row,
                            &succ,
                            snapshot.n_eff(m, node.state, a),
                            model.num_states,
                            iota,
                        );
                        table.set_q(m, id, a, q);
                        score += bhat[m * len + id as usize] * q;
                    }
                    if score > best_score {
                        best_score = score;
                        best_a = a;
                    }
                }
                actions[id as usize] = best_a;
                for m in 0..mm {
                    table.set_alpha(m, id, table.q(m, id, best_a));
                }
            }
            let value = table.mixture_value(tree);
            Ok((Policy::Tree { tree: Arc::clone(tree), actions }, value))
        }
    }
}

/// Dispatch by tag; the tree is required (and only used) for the Tree class.
pub fn solve(
    model: &LmdpModel,
    snapshot: &Snapshot,
    iota: f64,
    tree: Option<&Arc<HistoryTree>>,
    tag: SolverTag,
    class: PolicyClass,
    caps: &Caps,
) -> Result<(Policy, f64)> {
    match tag {
        SolverTag::Bernstein => solve_bernstein(model, snapshot, iota, tree, class, caps),
        SolverTag::Mvp => solve_mvp(model, snapshot, iota, tree, class, caps),
    }
}

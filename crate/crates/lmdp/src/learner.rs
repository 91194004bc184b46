//! The episodic learning loop with doubling-schedule snapshots.
//!
//! Running counts accumulate along every trajectory using the context
//! revealed in hindsight. Whenever a visited `(m, s, a)` count reaches a
//! power of two, the frozen snapshot for that row is refreshed (count and
//! empirical row together), and at the end of any episode that froze
//! something the solver is re-invoked on the snapshot. Between triggers
//! the policy and its reported optimistic value stay fixed, which bounds
//! the number of solver invocations by `M S A (log2(H K) + 1)`.
//!
//! The trace records, per episode, the exact value of the deployed policy
//! (by dynamic programming, not sampling), the solver's optimistic value,
//! and incremental/cumulative regret against the exact optimum of the same
//! policy class. Before the first solver invocation the optimistic value
//! is reported as 1, the trivial upper bound on any total reward.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alpha::{optimal_stationary, plan_optimal, value_of_policy};
use crate::env::{rollout, Trajectory};
use crate::error::{Error, Result};
use crate::history::build_history_tree;
use crate::model::LmdpModel;
use crate::policy::{Caps, Policy, PolicyClass};
use crate::solvers::{solve, SolverTag};
use crate::variance::assignment_count;

/// Running visitation counts `n(m,s,a)` and `n(m,s,a,s')`.
#[derive(Debug, Clone)]
pub struct Counts {
    num_states: usize,
    num_actions: usize,
    visits: Vec<u64>,
    successors: Vec<u64>,
}

impl Counts {
    pub fn new(num_contexts: usize, num_states: usize, num_actions: usize) -> Counts {
        Counts {
            num_states,
            num_actions,
            visits: vec![0; num_contexts * num_states * num_actions],
            successors: vec![0; num_contexts * num_states * num_actions * num_states],
        }
    }

    #[inline]
    fn idx(&self, m: usize, s: usize, a: usize) -> usize {
        (m * self.num_states + s) * self.num_actions + a
    }

    pub fn n(&self, m: usize, s: usize, a: usize) -> u64 {
        self.visits[self.idx(m, s, a)]
    }

    pub fn n_succ(&self, m: usize, s: usize, a: usize, s2: usize) -> u64 {
        self.successors[self.idx(m, s, a) * self.num_states + s2]
    }

    fn increment(&mut self, m: usize, s: usize, a: usize, s2: usize) -> u64 {
        let i = self.idx(m, s, a);
        self.visits[i] += 1;
        self.successors[i * self.num_states + s2] += 1;
        self.visits[i]
    }
}

/// Frozen estimates: per row, the count at the last doubling trigger and
/// the empirical distribution at that moment. Rows never frozen keep a
/// count of 0 and the uniform placeholder, on which both solvers are
/// maximally optimistic through `N_eff = max(N, 1)`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub num_contexts: usize,
    pub num_states: usize,
    pub num_actions: usize,
    frozen: Vec<u64>,
    phat: Vec<f64>,
}

impl Snapshot {
    pub fn new(num_contexts: usize, num_states: usize, num_actions: usize) -> Snapshot {
        let rows = num_contexts * num_states * num_actions;
        Snapshot {
            num_contexts,
            num_states,
            num_actions,
            frozen: vec![0; rows],
            phat: vec![1.0 / num_states as f64; rows * num_states],
        }
    }

    #[inline]
    fn idx(&self, m: usize, s: usize, a: usize) -> usize {
        (m * self.num_states + s) * self.num_actions + a
    }

    pub fn n(&self, m: usize, s: usize, a: usize) -> u64 {
        self.frozen[self.idx(m, s, a)]
    }

    pub fn n_eff(&self, m: usize, s: usize, a: usize) -> u64 {
        self.n(m, s, a).max(1)
    }

    pub fn phat_row(&self, m: usize, s: usize, a: usize) -> &[f64] {
        let base = self.idx(m, s, a) * self.num_states;
        &self.phat[base..base + self.num_states]
    }

    /// Overwrites one frozen row directly; meant for constructing solver
    /// inputs without running a learning loop.
    pub fn set_row(&mut self, m: usize, s: usize, a: usize, n: u64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.num_states);
        debug_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let i = self.idx(m, s, a);
        self.frozen[i] = n;
        let base = i * self.num_states;
        self.phat[base..base + self.num_states].copy_from_slice(&row);
    }

    fn freeze_from(&mut self, counts: &Counts, m: usize, s: usize, a: usize) {
        let n = counts.n(m, s, a);
        let i = self.idx(m, s, a);
        self.frozen[i] = n;
        let base = i * self.num_states;
        for s2 in 0..self.num_states {
            self.phat[base + s2] = counts.n_succ(m, s, a, s2) as f64 / n as f64;
        }
    }
}

/// The run-level log term `iota = 2 ln(2 M S A H K / delta)`.
pub fn iota(m: usize, s: usize, a: usize, h: usize, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if m == 0 || s == 0 || a == 0 || h == 0 || k == 0 {
        return Err(Error::Domain("iota requires positive dimensions".into()));
    }
    let arg = 2.0 * m as f64 * s as f64 * a as f64 * h as f64 * k as f64 / delta;
    Ok(2.0 * arg.ln())
}

/// Upper bound on solver invocations: `M S A (log2(H K) + 1)`.
pub fn trigger_bound(m: usize, s: usize, a: usize, h: usize, k: usize) -> f64 {
    (m * s * a) as f64 * (((h * k) as f64).log2() + 1.0)
}

/// Applies one hindsight episode to the counts, freezing snapshot rows at
/// every power-of-two crossing; returns whether anything froze.
pub fn record_episode(counts: &mut Counts, snapshot: &mut Snapshot, traj: &Trajectory) -> bool {
    let m = traj.context;
    let mut any = false;
    for t in 0..traj.actions.len() {
        let (s, a, s2) = (traj.states[t], traj.actions[t], traj.states[t + 1]);
        let n = counts.increment(m, s, a, s2);
        if n.is_power_of_two() {
            snapshot.freeze_from(counts, m, s, a);
            any = true;
        }
    }
    any
}

/// One episode's worth of trace data.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub value_true: f64,
    pub value_optimistic: f64,
    pub regret_inc: f64,
    pub regret_cum: f64,
    pub triggered: bool,
}

/// Complete record of a learning run.
#[derive(Debug)]
pub struct RegretTrace {
    pub solver: SolverTag,
    pub class: PolicyClass,
    /// Exact optimum over the same policy class the solver maximizes.
    pub v_star: f64,
    pub rows: Vec<TraceRow>,
    pub solver_calls: usize,
    /// Set when the run stopped early; the rows up to that point stand.
    pub aborted: Option<Error>,
}

impl RegretTrace {
    pub fn final_cumulative(&self) -> f64 {
        self.rows.last().map(|r| r.regret_cum).unwrap_or(0.0)
    }

    /// Cumulative regret at episode `k` (1-based), 0 before any episode.
    pub fn cumulative_at(&self, k: usize) -> f64 {
        if k == 0 || self.rows.is_empty() {
            return 0.0;
        }
        self.rows[k.min(self.rows.len()) - 1].regret_cum
    }

    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            out,
            "episode,solver,value_true,value_optimistic,regret_inc,regret_cum,triggered"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.episode,
                self.solver.tag(),
                r.value_true,
                r.value_optimistic,
                r.regret_inc,
                r.regret_cum,
                r.triggered
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Runs the full episodic loop: rollout, hindsight count update, solver
/// re-invocation on trigger. The first policy plays action 0 everywhere.
pub fn run_learning(
    model: &LmdpModel,
    solver: SolverTag,
    class: PolicyClass,
    episodes: usize,
    delta: f64,
    seed: u64,
    caps: &Caps,
) -> Result<RegretTrace> {
    model.validate()?;
    let (tree, v_star) = match class {
        PolicyClass::Stationary => (None, optimal_stationary(model, caps)?.1),
        PolicyClass::Tree => {
            let tree = Arc::new(build_history_tree(model, caps.max_tree_nodes)?);
            let v = plan_optimal(model, &tree)?.1;
            (Some(tree), v)
        }
    };
    let mut trace = RegretTrace {
        solver,
        class,
        v_star,
        rows: Vec::with_capacity(episodes),
        solver_calls: 0,
        aborted: None,
    };
    if episodes == 0 {
        return Ok(trace);
    }
    // Fail on an oversized enumeration before simulating anything.
    if class == PolicyClass::Tree && solver == SolverTag::Bernstein {
        let t = tree.as_ref().expect("tree built for tree class");
        let needed = assignment_count(t, model.horizon);
        if needed > caps.max_policies as u128 {
            return Err(Error::EnumerationCapExceeded { needed, cap: caps.max_policies });
        }
    }
    let iota_val = iota(
        model.num_contexts,
        model.num_states,
        model.num_actions,
        model.horizon,
        episodes,
        delta,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Counts::new(model.num_contexts, model.num_states, model.num_actions);
    let mut snapshot = Snapshot::new(model.num_contexts, model.num_states, model.num_actions);
    let mut policy = Policy::Stationary(vec![0; model.num_states]);
    let mut value_true = value_of_policy(model, &policy)?;
    // Trivial upper bound until the first solve reports a real value.
    let mut value_opt = 1.0;
    let mut cum = 0.0;
    for k in 1..=episodes {
        let traj = match rollout(model, &policy, &mut rng) {
            Ok(t) => t,
            Err(e) => {
                trace.aborted = Some(e);
                break;
            }
        };
        let inc = v_star - value_true;
        debug_assert!(inc >= -1e-9, "policy beat the class optimum: {inc}");
        cum += inc;
        let triggered = record_episode(&mut counts, &mut snapshot, &traj);
        trace.rows.push(TraceRow {
            episode: k,
            value_true,
            value_optimistic: value_opt,
            regret_inc: inc,
            regret_cum: cum,
            triggered,
        });
        if triggered {
            match solve(model, &snapshot, iota_val, tree.as_ref(), solver, class, caps) {
                Ok((next_policy, v)) => {
                    trace.solver_calls += 1;
                    value_opt = v;
                    match value_of_policy(model, &next_policy) {
                        Ok(v_true) => {
                            policy = next_policy;
                            value_true = v_true;
                        }
                        Err(e) => {
                            trace.aborted = Some(e);
                            break;
                        }
                    }
                }
                Err(e) => {
                    trace.aborted = Some(e);
                    break;
                }
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_lmdp;

    #[test]
    fn iota_hand_values_and_domain() {
        let base = iota(1, 1, 1, 1, 1, 1.0).unwrap();
        assert!((base - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        let doubled = iota(1, 1, 1, 1, 2, 1.0).unwrap();
        assert!((doubled - base - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        assert!(iota(2, 3, 2, 4, 100, 0.05).unwrap() > iota(2, 3, 2, 4, 100, 0.1).unwrap());
        assert!(iota(1, 1, 1, 1, 1, 0.0).is_err());
        assert!(iota(1, 1, 1, 1, 1, 1.5).is_err());
        assert!(iota(0, 1, 1, 1, 1, 0.5).is_err());
    }

    fn step_traj(context: usize, states: Vec<usize>, actions: Vec<usize>) -> Trajectory {
        let rewards = vec![0.0; actions.len()];
        Trajectory { context, states, actions, rewards }
    }

    #[test]
    fn first_visit_triggers_and_freezes_the_row() {
        let mut counts = Counts::new(1, 2, 1);
        let mut snap = Snapshot::new(1, 2, 1);
        assert_eq!(snap.n(0, 0, 0), 0);
        assert_eq!(snap.n_eff(0, 0, 0), 1);
        assert_eq!(snap.phat_row(0, 0, 0), &[0.5, 0.5]);
        let fired = record_episode(&mut counts, &mut snap, &step_traj(0, vec![0, 1], vec![0]));
        assert!(fired);
        assert_eq!(snap.n(0, 0, 0), 1);
        assert_eq!(snap.phat_row(0, 0, 0), &[0.0, 1.0]);
    }

    #[test]
    fn third_visit_does_not_trigger() {
        let mut counts = Counts::new(1, 2, 1);
        let mut snap = Snapshot::new(1, 2, 1);
        for _ in 0..2 {
            assert!(record_episode(&mut counts, &mut snap, &step_traj(0, vec![0, 1], vec![0])));
        }
        let fired = record_episode(&mut counts, &mut snap, &step_traj(0, vec![0, 0], vec![0]));
        assert!(!fired);
        assert_eq!(counts.n(0, 0, 0), 3);
        assert_eq!(snap.n(0, 0, 0), 2);
        // The snapshot still reflects the freeze at n = 2.
        assert_eq!(snap.phat_row(0, 0, 0), &[0.0, 1.0]);
    }

    #[test]
    fn repeated_visits_in_one_episode_freeze_at_the_last_crossing() {
        let mut counts = Counts::new(1, 2, 1);
        let mut snap = Snapshot::new(1, 2, 1);
        // Four visits to (0, 0, 0) crossing 1, 2, and 4 in one episode.
        let traj = step_traj(0, vec![0, 0, 0, 0, 1], vec![0, 0, 0, 0]);
        assert!(record_episode(&mut counts, &mut snap, &traj));
        assert_eq!(counts.n(0, 0, 0), 4);
        assert_eq!(snap.n(0, 0, 0), 4);
        assert_eq!(snap.phat_row(0, 0, 0), &[0.75, 0.25]);
        let total: u64 = (0..2).map(|s2| counts.n_succ(0, 0, 0, s2)).sum();
        assert_eq!(total, counts.n(0, 0, 0));
    }

    #[test]
    fn empty_run_gives_an_empty_trace() {
        let model = crate::model::tests::two_context_model();
        let trace = run_learning(
            &model,
            SolverTag::Mvp,
            PolicyClass::Stationary,
            0,
            0.1,
            7,
            &Caps::default(),
        )
        .unwrap();
        assert!(trace.rows.is_empty());
        assert_eq!(trace.solver_calls, 0);
        assert_eq!(trace.final_cumulative(), 0.0);
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "episode,solver,value_true,value_optimistic,regret_inc,regret_cum,triggered\n"
        );
    }

    #[test]
    fn identical_seeds_reproduce_identical_traces() {
        let model = random_lmdp(2, 3, 2, 3, 2, 11).unwrap();
        let run = |seed| {
            let trace = run_learning(
                &model,
                SolverTag::Bernstein,
                PolicyClass::Stationary,
                32,
                0.1,
                seed,
                &Caps::default(),
            )
            .unwrap();
            let mut csv = Vec::new();
            trace.write_csv(&mut csv).unwrap();
            String::from_utf8(csv).unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn deterministic_model_reaches_zero_incremental_regret() {
        // Single deterministic context: one visit pins each row exactly.
        let model = LmdpModel {
            num_contexts: 1,
            num_states: 3,
            num_actions: 2,
            horizon: 3,
            weights: vec![1.0],
            init: vec![vec![1.0, 0.0, 0.0]],
            transitions: vec![vec![
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
                vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            ]],
            rewards: vec![vec![vec![0.0, 0.0], vec![0.3, 0.0], vec![0.0, 0.1]]],
        };
        model.validate().unwrap();
        for solver in [SolverTag::Bernstein, SolverTag::Mvp] {
            let trace = run_learning(
                &model,
                solver,
                PolicyClass::Stationary,
                128,
                0.1,
                3,
                &Caps::default(),
            )
            .unwrap();
            assert!(trace.aborted.is_none());
            let last = trace.rows.last().unwrap();
            assert_eq!(last.regret_inc, 0.0, "{:?} still paying regret", solver);
            // The tail after the last positive increment is all zeros.
            let tail: Vec<_> =
                trace.rows.iter().rev().take(32).map(|r| r.regret_inc).collect();
            assert!(tail.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn solver_calls_stay_under_the_trigger_bound() {
        let model = random_lmdp(2, 3, 2, 4, 3, 21).unwrap();
        for solver in [SolverTag::Bernstein, SolverTag::Mvp] {
            let trace = run_learning(
                &model,
                solver,
                PolicyClass::Stationary,
                64,
                0.1,
                9,
                &Caps::default(),
            )
            .unwrap();
            assert!(trace.aborted.is_none());
            let bound = trigger_bound(2, 3, 2, 4, 64);
            assert!(
                (trace.solver_calls as f64) <= bound,
                "{} solver calls over bound {bound}",
                trace.solver_calls
            );
            let fired = trace.rows.iter().filter(|r| r.triggered).count();
            assert_eq!(fired, trace.solver_calls);
        }
    }

    #[test]
    fn regret_accounting_is_consistent() {
        let model = random_lmdp(2, 3, 2, 3, 2, 33).unwrap();
        let trace = run_learning(
            &model,
            SolverTag::Mvp,
            PolicyClass::Stationary,
            64,
            0.1,
            13,
            &Caps::default(),
        )
        .unwrap();
        let mut cum = 0.0;
        for row in &trace.rows {
            assert!(row.regret_inc >= -1e-9);
            cum += row.regret_inc;
            assert!((row.regret_cum - cum).abs() < 1e-12);
            assert!((row.value_true + row.regret_inc - trace.v_star).abs() < 1e-12);
        }
        assert!((trace.cumulative_at(64) - trace.final_cumulative()).abs() < 1e-15);
        assert_eq!(trace.cumulative_at(0), 0.0);
    }

    #[test]
    fn optimistic_values_dominate_the_optimum_on_small_runs() {
        let mut optimistic = 0usize;
        let mut total = 0usize;
        for seed in 0..3 {
            let model = random_lmdp(2, 3, 2, 3, 2, 500 + seed).unwrap();
            for solver in [SolverTag::Bernstein, SolverTag::Mvp] {
                let trace = run_learning(
                    &model,
                    solver,
                    PolicyClass::Stationary,
                    64,
                    0.1,
                    seed,
                    &Caps::default(),
                )
                .unwrap();
                for row in &trace.rows {
                    total += 1;
                    if row.value_optimistic >= trace.v_star - 1e-9 {
                        optimistic += 1;
                    }
                }
            }
        }
        assert!(
            optimistic as f64 >= 0.9 * total as f64,
            "optimism held in only {optimistic}/{total} episodes"
        );
    }

    #[test]
    fn tree_class_runs_end_to_end() {
        let model = random_lmdp(2, 3, 2, 3, 2, 77).unwrap();
        let trace = run_learning(
            &model,
            SolverTag::Mvp,
            PolicyClass::Tree,
            24,
            0.1,
            1,
            &Caps::default(),
        )
        .unwrap();
        assert!(trace.aborted.is_none());
        assert_eq!(trace.rows.len(), 24);
        for row in &trace.rows {
            assert!(row.regret_inc >= -1e-9);
        }
    }
}

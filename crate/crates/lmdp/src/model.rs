//! Model container and validation.
//!
//! An [`LmdpModel`] is a finite mixture of `M` tabular MDPs sharing one
//! state space, action space, and horizon. A hidden context `m` is drawn
//! once per episode from the mixture weights; transitions and the
//! deterministic reward table then follow component `m` for the whole
//! episode. Weights, initial distributions, and rewards are treated as
//! known throughout the crate; transitions are the learned quantity.
//!
//! The struct doubles as the on-disk schema: the JSON model file is a
//! direct serialization with nested arrays in row-major order
//! `[context][state][action][next_state]`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on probability-vector sums.
pub const ROW_TOL: f64 = 1e-12;
/// Tolerance on the total-reward path bound.
pub const REWARD_PATH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LmdpModel {
    pub num_contexts: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Mixture weights over contexts; strictly positive, sums to 1.
    pub weights: Vec<f64>,
    /// Initial state distribution per context, `[context][state]`.
    pub init: Vec<Vec<f64>>,
    /// Transition kernels, `[context][state][action][next_state]`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// Deterministic rewards in [0, 1], `[context][state][action]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl LmdpModel {
    #[inline]
    pub fn row(&self, m: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[m][s][a]
    }

    #[inline]
    pub fn reward(&self, m: usize, s: usize, a: usize) -> f64 {
        self.rewards[m][s][a]
    }

    /// Largest transition-row support size over all `(m, s, a)`.
    pub fn gamma(&self) -> usize {
        let mut g = 0;
        for m in 0..self.num_contexts {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let supp = self.row(m, s, a).iter().filter(|&&p| p > 0.0).count();
                    g = g.max(supp);
                }
            }
        }
        g
    }

    /// Same model played to a different horizon. Re-validates, so extending
    /// the horizon of a non-terminating model fails on the reward bound.
    pub fn with_horizon(&self, horizon: usize) -> Result<LmdpModel> {
        let mut out = self.clone();
        out.horizon = horizon;
        out.validate()?;
        Ok(out)
    }

    /// Full structural and numeric validation.
    ///
    /// Checks dimensions, positivity and normalization of the weights, each
    /// initial and transition row (entries nonnegative, sums within
    /// [`ROW_TOL`] of 1), reward entries in [0, 1], and the path bound: the
    /// maximum total reward along any length-H path through the union of
    /// context supports must not exceed `1 + REWARD_PATH_TOL`.
    pub fn validate(&self) -> Result<()> {
        let (mm, ss, aa) = (self.num_contexts, self.num_states, self.num_actions);
        if mm == 0 || ss == 0 || aa == 0 {
            return Err(Error::Domain("all dimensions must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        if self.weights.len() != mm
            || self.init.len() != mm
            || self.transitions.len() != mm
            || self.rewards.len() != mm
        {
            return Err(Error::Dimension(format!(
                "expected {mm} contexts in every table"
            )));
        }
        for m in 0..mm {
            if self.init[m].len() != ss || self.transitions[m].len() != ss || self.rewards[m].len() != ss {
                return Err(Error::Dimension(format!("context {m}: expected {ss} states")));
            }
            for s in 0..ss {
                if self.transitions[m][s].len() != aa || self.rewards[m][s].len() != aa {
                    return Err(Error::Dimension(format!(
                        "context {m} state {s}: expected {aa} actions"
                    )));
                }
                for a in 0..aa {
                    if self.transitions[m][s][a].len() != ss {
                        return Err(Error::Dimension(format!(
                            "context {m} state {s} action {a}: expected {ss} successors"
                        )));
                    }
                }
            }
        }

        let wsum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Weight("all weights must be strictly positive".into()));
        }
        if (wsum - 1.0).abs() > ROW_TOL {
            return Err(Error::Weight(format!("weights sum to {wsum}, not 1")));
        }

        for m in 0..mm {
            check_row(&self.init[m], &format!("init[{m}]"))?;
            for s in 0..ss {
                for a in 0..aa {
                    check_row(self.row(m, s, a), &format!("P[{m}][{s}][{a}]"))?;
                    let r = self.reward(m, s, a);
                    if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                        return Err(Error::RewardBound(format!(
                            "R[{m}][{s}][{a}] = {r} outside [0, 1]"
                        )));
                    }
                }
            }
        }

        let bound = self.max_total_reward();
        if bound > 1.0 + REWARD_PATH_TOL {
            return Err(Error::RewardBound(format!(
                "maximum total reward over supported length-{} paths is {bound} > 1",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Maximum total reward over length-H paths whose every transition lies
    /// in the union over contexts of transition supports. Per-step rewards
    /// take the maximum over contexts; the start state is unconstrained.
    /// Backward DP, exact for the tabular case.
    pub fn max_total_reward(&self) -> f64 {
        let (mm, ss, aa) = (self.num_contexts, self.num_states, self.num_actions);
        let mut next = vec![0.0f64; ss];
        let mut cur = vec![0.0f64; ss];
        for _t in (1..=self.horizon).rev() {
            for s in 0..ss {
                let mut best = f64::NEG_INFINITY;
                for a in 0..aa {
                    let rmax = (0..mm)
                        .map(|m| self.reward(m, s, a))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut cont = f64::NEG_INFINITY;
                    for s2 in 0..ss {
                        if (0..mm).any(|m| self.row(m, s, a)[s2] > 0.0) {
                            cont = cont.max(next[s2]);
                        }
                    }
                    best = best.max(rmax + cont);
                }
                cur[s] = best;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        next.iter().fold(0.0f64, |acc, &v| acc.max(v))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads and validates a model file.
    pub fn load(path: &Path) -> Result<LmdpModel> {
        let text = std::fs::read_to_string(path)?;
        let model: LmdpModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

fn check_row(row: &[f64], context: &str) -> Result<()> {
    if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::Stochasticity {
            context: context.into(),
            detail: "negative or non-finite entry".into(),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Stochasticity {
            context: context.into(),
            detail: format!("row sums to {sum}, not 1"),
        });
    }
    Ok(())
}

/// Precomputed support index lists, `[m][s][a] -> sorted state indices`.
/// Shared by the planning and variance recursions to keep inner loops over
/// actual successors instead of the full state space.
pub(crate) struct Supports {
    lists: Vec<Vec<u32>>,
    strides: (usize, usize),
}

impl Supports {
    pub fn new(model: &LmdpModel) -> Supports {
        let (mm, ss, aa) = (model.num_contexts, model.num_states, model.num_actions);
        let mut lists = Vec::with_capacity(mm * ss * aa);
        for m in 0..mm {
            for s in 0..ss {
                for a in 0..aa {
                    lists.push(
                        model
                            .row(m, s, a)
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(i, _)| i as u32)
                            .collect(),
                    );
                }
            }
        }
        Supports { lists, strides: (ss * aa, aa) }
    }

    #[inline]
    pub fn of(&self, m: usize, s: usize, a: usize) -> &[u32] {
        &self.lists[m * self.strides.0 + s * self.strides.1 + a]
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two-context, two-state model with full-support transitions and
    /// distinct rewards; used across module tests.
    pub(crate) fn two_context_model() -> LmdpModel {
        LmdpModel {
            num_contexts: 2,
            num_states: 2,
            num_actions: 2,
            horizon: 2,
            weights: vec![0.5, 0.5],
            init: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            transitions: vec![
                vec![
                    vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                    vec![vec![0.5, 0.5], vec![0.9, 0.1]],
                ],
                vec![
                    vec![vec![0.4, 0.6], vec![0.3, 0.7]],
                    vec![vec![0.8, 0.2], vec![0.1, 0.9]],
                ],
            ],
            rewards: vec![
                vec![vec![0.1, 0.2], vec![0.3, 0.05]],
                vec![vec![0.15, 0.25], vec![0.0, 0.4]],
            ],
        }
    }

    #[test]
    fn valid_model_passes() {
        two_context_model().validate().unwrap();
    }

    #[test]
    fn uniform_rewards_hit_the_bound_exactly() {
        let h = 4;
        let mut model = two_context_model();
        model.horizon = h;
        for m in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    model.rewards[m][s][a] = 1.0 / h as f64;
                }
            }
        }
        model.validate().unwrap();
        assert!((model.max_total_reward() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_row_sum_rejected() {
        let mut model = two_context_model();
        model.transitions[0][0][0] = vec![0.7, 0.2999999];
        assert!(matches!(
            model.validate(),
            Err(Error::Stochasticity { .. })
        ));
    }

    #[test]
    fn negative_entry_rejected() {
        let mut model = two_context_model();
        model.transitions[1][1][0] = vec![1.2, -0.2];
        assert!(matches!(model.validate(), Err(Error::Stochasticity { .. })));
    }

    #[test]
    fn zero_weight_rejected() {
        let mut model = two_context_model();
        model.weights = vec![1.0, 0.0];
        assert!(matches!(model.validate(), Err(Error::Weight(_))));
    }

    #[test]
    fn reward_entry_outside_unit_interval_rejected() {
        let mut model = two_context_model();
        model.rewards[0][0][0] = 1.5;
        assert!(matches!(model.validate(), Err(Error::RewardBound(_))));
    }

    #[test]
    fn path_total_above_one_rejected() {
        let mut model = two_context_model();
        // 0.6 per step over two steps exceeds 1 on some supported path.
        for s in 0..2 {
            for a in 0..2 {
                model.rewards[0][s][a] = 0.6;
            }
        }
        assert!(matches!(model.validate(), Err(Error::RewardBound(_))));
    }

    #[test]
    fn max_total_reward_zero_for_zero_rewards() {
        let mut model = two_context_model();
        for m in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    model.rewards[m][s][a] = 0.0;
                }
            }
        }
        assert_eq!(model.max_total_reward(), 0.0);
    }

    #[test]
    fn max_total_reward_deterministic_chain() {
        // Four-state cycle, 0.25 per step, horizon 4: exactly 1.0.
        let s = 4;
        let model = LmdpModel {
            num_contexts: 1,
            num_states: s,
            num_actions: 1,
            horizon: 4,
            weights: vec![1.0],
            init: vec![vec![1.0, 0.0, 0.0, 0.0]],
            transitions: vec![(0..s)
                .map(|i| {
                    let mut row = vec![0.0; s];
                    row[(i + 1) % s] = 1.0;
                    vec![row]
                })
                .collect()],
            rewards: vec![vec![vec![0.25]; s]],
        };
        model.validate().unwrap();
        assert!((model.max_total_reward() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_counts_largest_support() {
        assert_eq!(two_context_model().gamma(), 2);
        let mut model = two_context_model();
        model.transitions[0][0][0] = vec![1.0, 0.0];
        assert_eq!(model.gamma(), 2);
    }

    #[test]
    fn file_round_trip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = two_context_model();
        model.save(&path).unwrap();
        let back = LmdpModel::load(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn load_rejects_invalid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = two_context_model();
        model.weights = vec![0.9, 0.2];
        let text = serde_json::to_string(&model).unwrap();
        std::fs::write(&path, text).unwrap();
        assert!(LmdpModel::load(&path).is_err());
    }
}

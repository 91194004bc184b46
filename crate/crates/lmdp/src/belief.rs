//! Posterior beliefs over the hidden context.

use crate::error::{Error, Result};
use crate::model::{LmdpModel, ROW_TOL};

/// A probability vector over contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Belief> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Domain("belief entries must be nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::Domain(format!("belief sums to {sum}, not 1")));
        }
        Ok(Belief(probs))
    }

    /// Belief after observing only the initial state:
    /// `b_m = w_m nu_m(s) / sum_m' w_m' nu_m'(s)`.
    pub fn initial(model: &LmdpModel, s: usize) -> Result<Belief> {
        let raw: Vec<f64> = (0..model.num_contexts)
            .map(|m| model.weights[m] * model.init[m][s])
            .collect();
        normalize(raw, &format!("initial state {s}"))
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// One Bayes step after observing `(a, r, s')` from state `s`:
///
/// ```text
/// b'_m  propto  b_m * P_m(s'|s,a) * [r == R_m(s,a)]
/// ```
///
/// The reward indicator compares exactly; observed rewards are copies of
/// reward-table entries. Fails with `ZeroProbabilityEvent` when no context
/// assigns the observation positive probability.
pub fn belief_update(
    model: &LmdpModel,
    belief: &Belief,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
) -> Result<Belief> {
    if belief.0.len() != model.num_contexts {
        return Err(Error::Dimension(format!(
            "belief over {} contexts, model has {}",
            belief.0.len(),
            model.num_contexts
        )));
    }
    let raw: Vec<f64> = (0..model.num_contexts)
        .map(|m| {
            if model.reward(m, s, a).to_bits() == r.to_bits() {
                belief.0[m] * model.row(m, s, a)[s_next]
            } else {
                0.0
            }
        })
        .collect();
    normalize(raw, &format!("(s={s}, a={a}, r={r}, s'={s_next})"))
}

fn normalize(raw: Vec<f64>, context: &str) -> Result<Belief> {
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbabilityEvent(context.into()));
    }
    Ok(Belief(raw.into_iter().map(|p| p / total).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identical_contexts() -> LmdpModel {
        let base = crate::model::tests::two_context_model();
        LmdpModel {
            transitions: vec![base.transitions[0].clone(), base.transitions[0].clone()],
            rewards: vec![base.rewards[0].clone(), base.rewards[0].clone()],
            init: vec![base.init[0].clone(), base.init[0].clone()],
            ..base
        }
    }

    #[test]
    fn identical_contexts_leave_belief_unchanged() {
        let model = identical_contexts();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        let b2 = belief_update(&model, &b, 0, 1, model.reward(0, 0, 1), 1).unwrap();
        assert!((b2.probs()[0] - 0.3).abs() < 1e-15);
        assert!((b2.probs()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn distinct_rewards_identify_the_context() {
        // Contexts disagree on R(0, 0): observing either reward is decisive.
        let model = crate::model::tests::two_context_model();
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let b2 = belief_update(&model, &b, 0, 0, model.reward(0, 0, 0), 1).unwrap();
        assert_eq!(b2.probs(), &[1.0, 0.0]);
        let b3 = belief_update(&model, &b, 0, 0, model.reward(1, 0, 0), 1).unwrap();
        assert_eq!(b3.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn bayes_update_hand_value() {
        // Same rewards, transition likelihoods 0.8 vs 0.2 from a uniform
        // prior: posterior (0.8, 0.2).
        let mut model = identical_contexts();
        model.transitions[0][0][0] = vec![0.2, 0.8];
        model.transitions[1][0][0] = vec![0.8, 0.2];
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let b2 = belief_update(&model, &b, 0, 0, model.reward(0, 0, 0), 1).unwrap();
        assert!((b2.probs()[0] - 0.8).abs() < 1e-15);
        assert!((b2.probs()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_event_is_an_error() {
        let model = identical_contexts();
        let b = Belief::new(vec![1.0, 0.0]).unwrap();
        // Reward label that no context emits at (0, 0).
        let err = belief_update(&model, &b, 0, 0, 0.987, 1).unwrap_err();
        assert!(matches!(err, Error::ZeroProbabilityEvent(_)));
    }

    #[test]
    fn updates_stay_normalized() {
        let model = crate::model::tests::two_context_model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 10_000 {
            let raw: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let b = Belief::new(raw.into_iter().map(|p| p / total).collect());
            let b = match b {
                Ok(b) => b,
                Err(_) => continue,
            };
            let s = rng.gen_range(0..2);
            let a = rng.gen_range(0..2);
            let m = rng.gen_range(0..2);
            let s2 = rng.gen_range(0..2);
            if let Ok(b2) = belief_update(&model, &b, s, a, model.reward(m, s, a), s2) {
                assert!(b2.probs().iter().all(|&p| p >= 0.0));
                let sum: f64 = b2.probs().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                checked += 1;
            }
        }
    }
}

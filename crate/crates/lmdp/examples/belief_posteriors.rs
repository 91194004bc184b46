//! Track the posterior over hidden contexts along simulated episodes.
//!
//! Each observation (action, reward, next state) multiplies the belief by
//! its likelihood under every context. On the hard family the encoding
//! phase is fully revealing: after at most `d1` steps the posterior is a
//! point mass on the true context, before any reward has been seen.
//! Run with:
//!
//! ```text
//! cargo run --example belief_posteriors
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lmdp::{belief_update, build_hard_instance, rollout, Belief, Policy, Result};

fn main() -> Result<()> {
    let (model, meta) = build_hard_instance(2, 11, 2, 0.04, 4096, None, None, 7)?;
    let policy = Policy::Stationary(vec![0; model.num_states]);
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    for episode in 0..3 {
        let traj = rollout(&model, &policy, &mut rng)?;
        println!(
            "episode {episode}: hidden context {} (permutation {:?})",
            traj.context, meta.permutations[traj.context]
        );
        let mut belief = Belief::initial(&model, traj.states[0])?;
        println!("  t=1 state {:2}  belief {:?}", traj.states[0], belief.probs());
        let mut identified_at = belief.probs().contains(&1.0).then_some(1);
        for t in 0..model.horizon {
            belief = belief_update(
                &model,
                &belief,
                traj.states[t],
                traj.actions[t],
                traj.rewards[t],
                traj.states[t + 1],
            )?;
            println!(
                "  t={} state {:2}  belief {:?}",
                t + 2,
                traj.states[t + 1],
                belief.probs()
            );
            if identified_at.is_none() && belief.probs().iter().any(|&p| p == 1.0) {
                identified_at = Some(t + 2);
            }
        }
        let t = identified_at.expect("the encoding phase always identifies the context");
        println!("  -> point mass from t={t} (encoding depth d1={})", meta.d1);
        assert!(t <= meta.d1 + 1);
        assert_eq!(belief.probs()[traj.context], 1.0);
        println!();
    }
    Ok(())
}

//! Return variance of a policy, exactly and by Monte Carlo.
//!
//! The exact recursion propagates a per-context variance together with
//! the value, adding the local spread of continuation values at every
//! step, and finishes with the spread across (context, start state)
//! pairs. `var_star` maximizes it over a policy class; on the hard family
//! the maximum equals the target variance the generator was asked for.
//! Run with:
//!
//! ```text
//! cargo run --example return_variance
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lmdp::{
    build_hard_instance, policy_variance, random_lmdp, rollout, var_star, Caps, Policy,
    PolicyClass, Result,
};

fn main() -> Result<()> {
    // A small random mixture: exact variance vs 20000 sampled episodes.
    let model = random_lmdp(2, 4, 2, 4, 2, 11)?;
    let policy = Policy::Stationary(vec![0, 1, 0, 1]);
    let exact = policy_variance(&model, &policy)?;

    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let n = 20_000;
    let totals: Vec<f64> = (0..n)
        .map(|_| {
            let traj = rollout(&model, &policy, &mut rng)?;
            Ok(traj.rewards.iter().sum())
        })
        .collect::<Result<_>>()?;
    let mean = totals.iter().sum::<f64>() / n as f64;
    let mc = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
    println!("random mixture, fixed stationary policy:");
    println!("  exact variance       {exact}");
    println!("  monte carlo ({n})  {mc}");
    assert!((exact - mc).abs() < 0.01, "MC estimate strayed implausibly far");

    // The hard family is calibrated so the class maximum is the target.
    let target = 0.04;
    let (hard, meta) = build_hard_instance(2, 11, 2, target, 4096, None, None, 7)?;
    let v_stationary = var_star(&hard, PolicyClass::Stationary, &Caps::default())?;
    println!("\nhard instance with target variance {target}:");
    println!("  var* over stationary policies {v_stationary}");
    println!("  designed x^2/4                {}", meta.var_star);
    assert!((v_stationary - target).abs() < 1e-12);

    // Any policy that reaches a wrong (leaf, action) pair in every context
    // faces a fair coin; one that hits an answer has slightly less spread.
    let blind = Policy::Stationary(vec![0; hard.num_states]);
    println!("  all-zeros policy variance     {}", policy_variance(&hard, &blind)?);
    Ok(())
}

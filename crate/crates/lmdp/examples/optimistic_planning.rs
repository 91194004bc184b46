//! Optimistic planning from learned transition estimates.
//!
//! Both solvers build upper-confidence values from a frozen snapshot of
//! empirical transition rows: one maximizes over a per-row confidence box
//! intersected with the simplex, the other adds a variance-adaptive bonus
//! to the empirical backup. On a fresh snapshot both are maximally
//! optimistic; as counts grow their values sink toward the truth while
//! staying above the exact optimum. Run with:
//!
//! ```text
//! cargo run --example optimistic_planning
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lmdp::{
    iota, optimal_stationary, random_lmdp, record_episode, rollout, solve, Caps, Counts, Policy,
    PolicyClass, Result, Snapshot, SolverTag,
};

fn main() -> Result<()> {
    let model = random_lmdp(2, 4, 2, 4, 2, 3)?;
    let (mm, ss, aa, h) = (2, 4, 2, 4);
    let budget = 4096;
    let iota = iota(mm, ss, aa, h, budget, 0.1)?;
    let (_, v_star) = optimal_stationary(&model, &Caps::default())?;
    println!("exact stationary optimum: {v_star}");
    println!("confidence scale iota:    {iota}\n");

    // Feed the snapshot ever more episodes of a round-robin exploration
    // policy mix and watch both optimistic values descend.
    let mut counts = Counts::new(mm, ss, aa);
    let mut snapshot = Snapshot::new(mm, ss, aa);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policies: Vec<Policy> = (0..4)
        .map(|i| Policy::Stationary((0..ss).map(|s| (s + i) % aa).collect()))
        .collect();

    println!("episodes   bernstein Vtilde     mvp Vtilde");
    let mut fed = 0usize;
    for stage in 0..6 {
        let target = if stage == 0 { 0 } else { 8 << (2 * (stage - 1)) };
        while fed < target {
            let traj = rollout(&model, &policies[fed % policies.len()], &mut rng)?;
            record_episode(&mut counts, &mut snapshot, &traj);
            fed += 1;
        }
        let mut line = format!("{fed:8}");
        for tag in [SolverTag::Bernstein, SolverTag::Mvp] {
            let (_, v) = solve(
                &model,
                &snapshot,
                iota,
                None,
                tag,
                PolicyClass::Stationary,
                &Caps::default(),
            )?;
            assert!(
                v >= v_star - 1e-9,
                "{} lost optimism: {v} < {v_star}",
                tag.tag()
            );
            line.push_str(&format!("   {v:18.12}"));
        }
        println!("{line}");
    }
    println!("\nevery value stayed at or above the exact optimum");
    Ok(())
}

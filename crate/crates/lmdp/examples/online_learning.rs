//! One full online learning run with the doubling schedule.
//!
//! The learner rolls out its current policy, counts transitions per
//! (context, state, action) in hindsight, and re-solves optimistically
//! whenever any count crosses a power of two; the snapshot freezes at
//! exactly those moments. The trace records per episode the exact value
//! of the deployed policy, the solver's optimistic value, and regret
//! against the class optimum. Run with:
//!
//! ```text
//! cargo run --example online_learning
//! ```

use lmdp::{
    build_hard_instance, run_learning, trigger_bound, Caps, PolicyClass, Result, SolverTag,
};

fn main() -> Result<()> {
    let (model, meta) = build_hard_instance(2, 11, 2, 0.04, 512, None, None, 3)?;
    let episodes = 512;
    let delta = 0.1;
    println!(
        "hard instance: optimal {} vs blind {}, bias {}",
        meta.optimal_value,
        meta.x * 0.5,
        meta.epsilon
    );

    let trace = run_learning(
        &model,
        SolverTag::Bernstein,
        PolicyClass::Stationary,
        episodes,
        delta,
        2024,
        &Caps::default(),
    )?;
    if let Some(e) = &trace.aborted {
        println!("run aborted early: {e}");
    }

    println!("\nclass optimum v* = {}", trace.v_star);
    println!("episodes run     = {}", trace.rows.len());
    let bound = trigger_bound(2, 11, 2, model.horizon, episodes);
    println!("solver calls     = {} (bound {bound})", trace.solver_calls);
    assert!((trace.solver_calls as f64) <= bound);

    println!("\n  episode   cum regret   deployed value   optimistic value");
    let mut k = 1;
    while k <= trace.rows.len() {
        let row = &trace.rows[k - 1];
        println!(
            "{k:9}   {:10.5}   {:14.10}   {:16.10}",
            trace.cumulative_at(k),
            row.value_true,
            row.value_optimistic
        );
        k *= 2;
    }
    println!(
        "\nfinal cumulative regret {} over {} episodes",
        trace.final_cumulative(),
        trace.rows.len()
    );

    let triggers: Vec<usize> = trace
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.triggered)
        .map(|(i, _)| i + 1)
        .collect();
    println!("re-solve episodes: {triggers:?}");
    Ok(())
}

//! A small experiment grid: episode budgets times repetition seeds.
//!
//! Every cell is an isolated learning run with its own derived seed and
//! trace file; the summary collects final cumulative regret and a fitted
//! log-log slope per cell. Cells execute on a thread pool (override the
//! size with `LMDP_WORKERS`). Run with:
//!
//! ```text
//! cargo run --example experiment_sweep
//! ```

use lmdp::{run_sweep, Caps, InstanceSpec, PolicyClass, Result, SolverTag, SweepConfig};

fn main() -> Result<()> {
    let out_dir = std::env::temp_dir().join("lmdp_sweep_demo");
    let config = SweepConfig {
        instance: InstanceSpec::Hard {
            contexts: 2,
            states: 11,
            actions: 2,
            variance: 0.04,
            episodes_hint: 256,
            seed: 1,
        },
        solver: SolverTag::Mvp,
        class: PolicyClass::Stationary,
        episodes: vec![64, 256],
        horizons: vec![None],
        seeds: vec![0, 1, 2],
        delta: 0.1,
        out_dir: out_dir.clone(),
        caps: Caps::default(),
    };

    let outcomes = run_sweep(&config)?;
    println!("config hash {:016x}", config.config_hash());
    println!("{} cells into {}\n", outcomes.len(), out_dir.display());
    println!("        K    H  seed   final regret      slope   status");
    for o in &outcomes {
        let regret = o
            .final_regret
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into());
        let slope = o
            .slope
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:9} {:4} {:5}   {regret:>12}   {slope:>8}   {}",
            o.episodes, o.horizon, o.seed, o.status
        );
    }

    let summary = std::fs::read_to_string(out_dir.join("summary.csv"))?;
    println!("\nsummary.csv:\n{summary}");
    Ok(())
}

//! Shell front end: generate hard instances, plan on model files, run
//! single learning episodes-loops, and drive experiment sweeps.
//!
//! Everything is reproducible from the flags; the only environment
//! variable consulted is `LMDP_WORKERS` (sweep pool size). Exit codes:
//! 0 success, 2 validation or usage error, 3 enumeration cap exceeded,
//! 4 I/O error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lmdp::{
    build_hard_instance, build_history_tree, mix_seed, optimal_value, run_learning, run_sweep,
    Caps, Error, InstanceSpec, LmdpModel, Policy, PolicyClass, SolverTag, SweepConfig,
};
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "lmdp",
    version,
    about = "Latent-MDP planning and learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CapArgs {
    /// Cap on enumerated history-tree nodes.
    #[arg(long = "cap-nodes", default_value_t = lmdp::DEFAULT_NODE_CAP)]
    cap_nodes: usize,
    /// Cap on enumerated policies or policy profiles.
    #[arg(long = "cap-policies", default_value_t = 1_000_000)]
    cap_policies: u64,
}

impl CapArgs {
    fn caps(&self) -> Caps {
        Caps {
            max_tree_nodes: self.cap_nodes,
            max_policies: self.cap_policies,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a permutation-encoded hard instance and its description.
    GenHard {
        #[arg(long)]
        contexts: usize,
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        /// Target blind-policy return variance in (0, 1/4].
        #[arg(long)]
        variance: f64,
        /// Planned episode budget, calibrates the leaf bias.
        #[arg(long = "episodes-hint")]
        episodes_hint: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Raise the horizon above the minimal depth (terminal pads).
        #[arg(long)]
        horizon: Option<usize>,
        /// Model file to write; the description lands next to it.
        #[arg(long, default_value = "hard_instance.json")]
        out: PathBuf,
    },
    /// Compute the exact optimal value of a model file.
    Plan {
        #[arg(long)]
        model: PathBuf,
        /// Policy class: stationary or tree.
        #[arg(long, default_value = "stationary")]
        class: PolicyClass,
        #[command(flatten)]
        caps: CapArgs,
    },
    /// Run one learning loop and write its regret trace CSV.
    Learn {
        #[arg(long)]
        model: PathBuf,
        /// Optimistic solver: mvp or bernstein.
        #[arg(long, default_value = "mvp")]
        solver: SolverTag,
        #[arg(long, default_value = "stationary")]
        class: PolicyClass,
        #[arg(long)]
        episodes: usize,
        /// Re-pad the model to this horizon before learning.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
        #[command(flatten)]
        caps: CapArgs,
    },
    /// Run a (episodes x horizon x seed) grid of learning cells.
    Sweep {
        /// Model file; alternatively give the gen-hard parameters below.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        contexts: Option<usize>,
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        actions: Option<usize>,
        #[arg(long)]
        variance: Option<f64>,
        #[arg(long = "episodes-hint")]
        episodes_hint: Option<usize>,
        /// Seed for the generated instance (not the learning cells).
        #[arg(long = "gen-seed", default_value_t = 0)]
        gen_seed: u64,
        #[arg(long, default_value = "mvp")]
        solver: SolverTag,
        #[arg(long, default_value = "stationary")]
        class: PolicyClass,
        /// Episode budgets, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        episodes: Vec<usize>,
        /// Horizons, comma separated; omit to keep the native horizon.
        #[arg(long, value_delimiter = ',')]
        horizon: Vec<usize>,
        /// Repetition seeds, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seed: Vec<u64>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Output directory for traces and summary.csv.
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        #[command(flatten)]
        caps: CapArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd) -> lmdp::Result<()> {
    match cmd {
        Cmd::GenHard {
            contexts,
            states,
            actions,
            variance,
            episodes_hint,
            seed,
            horizon,
            out,
        } => {
            let (model, meta) = build_hard_instance(
                contexts,
                states,
                actions,
                variance,
                episodes_hint,
                horizon,
                None,
                seed,
            )?;
            model.save(&out)?;
            let meta_path = meta_path_for(&out);
            std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).map_err(Error::from)?)?;
            println!("wrote {} and {}", out.display(), meta_path.display());
            println!(
                "d1={} d2={} leaves={} choices={} epsilon={} x={}",
                meta.d1, meta.d2, meta.num_leaves, meta.num_choices, meta.epsilon, meta.x
            );
            println!(
                "optimal value={} blind value={} var*={}",
                meta.optimal_value,
                meta.x * 0.5,
                meta.var_star
            );
            Ok(())
        }
        Cmd::Plan { model, class, caps } => {
            let model = LmdpModel::load(&model)?;
            let caps = caps.caps();
            let tree = match class {
                PolicyClass::Tree => Some(Arc::new(build_history_tree(
                    &model,
                    caps.max_tree_nodes,
                )?)),
                PolicyClass::Stationary => None,
            };
            let (policy, value) = optimal_value(&model, class, tree.as_ref(), &caps)?;
            println!("class: {}", class.tag());
            println!("optimal value: {value}");
            match policy {
                Policy::Stationary(actions) => println!("policy: state actions {actions:?}"),
                Policy::Tree { tree, .. } => {
                    println!("policy: history-dependent over {} histories", tree.len())
                }
            }
            Ok(())
        }
        Cmd::Learn {
            model,
            solver,
            class,
            episodes,
            horizon,
            seed,
            delta,
            out,
            caps,
        } => {
            let mut model = LmdpModel::load(&model)?;
            if let Some(h) = horizon {
                model = model.with_horizon(h)?;
            }
            // Same mixing as a single-cell sweep, so the two agree byte
            // for byte on identical flags.
            let trace = run_learning(
                &model,
                solver,
                class,
                episodes,
                delta,
                mix_seed(seed, 0),
                &caps.caps(),
            )?;
            trace.save_csv(&out)?;
            println!(
                "episodes={} solver={} class={} final cumulative regret={} solver calls={}",
                trace.rows.len(),
                solver.tag(),
                class.tag(),
                trace.final_cumulative(),
                trace.solver_calls
            );
            println!("trace: {}", out.display());
            if let Some(e) = trace.aborted {
                eprintln!("aborted after {} episodes: {e}", trace.rows.len());
                return Err(e);
            }
            Ok(())
        }
        Cmd::Sweep {
            model,
            contexts,
            states,
            actions,
            variance,
            episodes_hint,
            gen_seed,
            solver,
            class,
            episodes,
            horizon,
            seed,
            delta,
            out,
            caps,
        } => {
            let instance = match (model, contexts, states, actions, variance, episodes_hint) {
                (Some(path), None, None, None, None, None) => InstanceSpec::File(path),
                (None, Some(contexts), Some(states), Some(actions), Some(variance), Some(hint)) => {
                    InstanceSpec::Hard {
                        contexts,
                        states,
                        actions,
                        variance,
                        episodes_hint: hint,
                        seed: gen_seed,
                    }
                }
                _ => {
                    return Err(Error::Domain(
                        "give either --model or the full gen-hard parameter set \
                         (--contexts --states --actions --variance --episodes-hint)"
                            .into(),
                    ))
                }
            };
            let horizons = if horizon.is_empty() {
                vec![None]
            } else {
                horizon.into_iter().map(Some).collect()
            };
            let config = SweepConfig {
                instance,
                solver,
                class,
                episodes,
                horizons,
                seeds: seed,
                delta,
                out_dir: out,
                caps: caps.caps(),
            };
            let outcomes = run_sweep(&config)?;
            let failed = outcomes.iter().filter(|o| o.status != "ok").count();
            println!(
                "{} cells, {} failed; summary: {}",
                outcomes.len(),
                failed,
                config.out_dir.join("summary.csv").display()
            );
            for o in &outcomes {
                let regret = o
                    .final_regret
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "-".into());
                println!(
                    "  K={} H={} seed={} regret={} status={}",
                    o.episodes, o.horizon, o.seed, regret, o.status
                );
            }
            Ok(())
        }
    }
}

fn meta_path_for(out: &std::path::Path) -> PathBuf {
    match out.file_stem() {
        Some(stem) => {
            let mut name = stem.to_os_string();
            name.push("_meta.json");
            out.with_file_name(name)
        }
        None => out.with_file_name("meta.json"),
    }
}

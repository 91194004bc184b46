//! Experiment sweeps: a grid of (episode budget, horizon, seed) cells, each
//! an isolated learning run writing its own trace CSV, plus a summary CSV
//! with a config hash, final cumulative regret, and a fitted log-log slope
//! per cell.
//!
//! Cells run on a small worker pool; `LMDP_WORKERS` overrides the pool
//! size (the only environment variable the crate reads). Each cell seeds
//! its generator as `mix_seed(listed_seed, config_ordinal)` where the
//! ordinal enumerates the (episodes, horizon) grid row-major, so
//! repetitions are independent across cells and a single-cell sweep
//! reproduces a plain learning run with the same listed seed. Cell
//! failures are recorded in the summary without discarding the rest.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::env::mix_seed;
use crate::error::{Error, Result};
use crate::instances::build_hard_instance;
use crate::learner::{run_learning, RegretTrace};
use crate::model::LmdpModel;
use crate::policy::{Caps, PolicyClass};
use crate::solvers::SolverTag;

/// Where the swept model comes from.
#[derive(Debug, Clone)]
pub enum InstanceSpec {
    /// Load a model file; horizon entries re-pad it.
    File(PathBuf),
    /// Generate a hard instance per horizon entry.
    Hard {
        contexts: usize,
        states: usize,
        actions: usize,
        variance: f64,
        episodes_hint: usize,
        seed: u64,
    },
}

/// Full description of a sweep (a single point is the degenerate case).
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub instance: InstanceSpec,
    pub solver: SolverTag,
    pub class: PolicyClass,
    /// Episode budgets, one grid axis.
    pub episodes: Vec<usize>,
    /// Horizon overrides; `None` keeps the instance's native horizon.
    pub horizons: Vec<Option<usize>>,
    /// Listed repetition seeds.
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub out_dir: PathBuf,
    pub caps: Caps,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes.is_empty() || self.horizons.is_empty() || self.seeds.is_empty() {
            return Err(Error::Domain(
                "sweep needs nonempty episode, horizon, and seed lists".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!(
                "sweep delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Stable FNV-1a hash of a canonical rendering; tags summary rows so
    /// mixed files can be told apart.
    pub fn config_hash(&self) -> u64 {
        let instance = match &self.instance {
            InstanceSpec::File(p) => format!("file:{}", p.display()),
            InstanceSpec::Hard {
                contexts,
                states,
                actions,
                variance,
                episodes_hint,
                seed,
            } => format!(
                "hard:{contexts}:{states}:{actions}:{variance}:{episodes_hint}:{seed}"
            ),
        };
        let horizons: Vec<String> = self
            .horizons
            .iter()
            .map(|h| h.map(|v| v.to_string()).unwrap_or_else(|| "native".into()))
            .collect();
        let canon = format!(
            "{instance};solver={};class={};episodes={:?};horizons={:?};seeds={:?};delta={};caps={}:{}",
            self.solver.tag(),
            self.class.tag(),
            self.episodes,
            horizons,
            self.seeds,
            self.delta,
            self.caps.max_tree_nodes,
            self.caps.max_policies,
        );
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &b in canon.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// One cell's result as it lands in the summary.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub episodes: usize,
    /// Resolved horizon (the request when resolution itself failed).
    pub horizon: usize,
    pub seed: u64,
    /// Trace file name relative to the output directory, empty on failure.
    pub file: String,
    pub final_regret: Option<f64>,
    pub slope: Option<f64>,
    /// `ok`, `aborted: ...`, or `error: ...`.
    pub status: String,
}

/// Powers of two up to `episodes`, the checkpoint grid for slope fits.
pub fn regret_checkpoints(episodes: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 1usize;
    while k <= episodes {
        out.push(k);
        match k.checked_mul(2) {
            Some(next) => k = next,
            None => break,
        }
    }
    out
}

/// Least-squares slope through `(x, y)` points; `None` when fewer than two
/// points or a degenerate spread makes the fit meaningless.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Slope of log cumulative regret against log episode index over the
/// power-of-two checkpoints; zero-regret checkpoints cannot enter a log
/// fit and are skipped.
pub fn trace_slope(trace: &RegretTrace) -> Option<f64> {
    let points: Vec<(f64, f64)> = regret_checkpoints(trace.rows.len())
        .into_iter()
        .filter_map(|k| {
            let c = trace.cumulative_at(k);
            (c > 0.0).then(|| ((k as f64).ln(), c.ln()))
        })
        .collect();
    fit_loglog_slope(&points)
}

fn worker_count(cells: usize) -> usize {
    if let Ok(raw) = std::env::var("LMDP_WORKERS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                return n.min(cells.max(1));
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cells.max(1))
}

fn resolve_models(
    config: &SweepConfig,
) -> Result<Vec<(usize, std::result::Result<Arc<LmdpModel>, String>)>> {
    let mut out = Vec::with_capacity(config.horizons.len());
    match &config.instance {
        InstanceSpec::File(path) => {
            let base = LmdpModel::load(path)?;
            for h in &config.horizons {
                match h {
                    None => out.push((base.horizon, Ok(Arc::new(base.clone())))),
                    Some(h) => match base.with_horizon(*h) {
                        Ok(m) => out.push((*h, Ok(Arc::new(m)))),
                        Err(e) => out.push((*h, Err(format!("error: {e}")))),
                    },
                }
            }
        }
        InstanceSpec::Hard {
            contexts,
            states,
            actions,
            variance,
            episodes_hint,
            seed,
        } => {
            for h in &config.horizons {
                match build_hard_instance(
                    *contexts,
                    *states,
                    *actions,
                    *variance,
                    *episodes_hint,
                    *h,
                    None,
                    *seed,
                ) {
                    Ok((model, meta)) => {
                        let label = model.horizon;
                        model.save(&config.out_dir.join(format!("instance_h{label}.json")))?;
                        let meta_json = serde_json::to_string_pretty(&meta)
                            .map_err(Error::from)?;
                        std::fs::write(
                            config.out_dir.join(format!("instance_h{label}_meta.json")),
                            meta_json,
                        )?;
                        out.push((label, Ok(Arc::new(model))));
                    }
                    Err(e) => out.push((h.unwrap_or(0), Err(format!("error: {e}")))),
                }
            }
        }
    }
    Ok(out)
}

/// Runs every cell, writes per-cell trace CSVs and `summary.csv`, and
/// returns the outcomes sorted by (episodes, horizon, seed).
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<CellOutcome>> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let models = resolve_models(config)?;

    struct Cell {
        k: usize,
        h_idx: usize,
        seed: u64,
        ordinal: u64,
    }
    let n_h = config.horizons.len();
    let mut cells = Vec::new();
    for (k_idx, &k) in config.episodes.iter().enumerate() {
        for h_idx in 0..n_h {
            for &seed in &config.seeds {
                cells.push(Cell {
                    k,
                    h_idx,
                    seed,
                    ordinal: (k_idx * n_h + h_idx) as u64,
                });
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; cells.len()]);
    let workers = worker_count(cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let cell = &cells[i];
                let (h_label, model) = &models[cell.h_idx];
                let outcome = match model {
                    Err(status) => CellOutcome {
                        episodes: cell.k,
                        horizon: *h_label,
                        seed: cell.seed,
                        file: String::new(),
                        final_regret: None,
                        slope: None,
                        status: status.clone(),
                    },
                    Ok(model) => run_cell(config, model, *h_label, cell.k, cell.seed, cell.ordinal),
                };
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut outcomes: Vec<CellOutcome> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every cell produces an outcome"))
        .collect();
    outcomes.sort_by_key(|o| (o.episodes, o.horizon, o.seed));
    write_summary(&config.out_dir.join("summary.csv"), config, &outcomes)?;
    Ok(outcomes)
}

fn run_cell(
    config: &SweepConfig,
    model: &LmdpModel,
    h_label: usize,
    episodes: usize,
    seed: u64,
    ordinal: u64,
) -> CellOutcome {
    let file = format!("trace_k{episodes}_h{h_label}_s{seed}.csv");
    let mut outcome = CellOutcome {
        episodes,
        horizon: h_label,
        seed,
        file: String::new(),
        final_regret: None,
        slope: None,
        status: String::new(),
    };
    match run_learning(
        model,
        config.solver,
        config.class,
        episodes,
        config.delta,
        mix_seed(seed, ordinal),
        &config.caps,
    ) {
        Err(e) => outcome.status = format!("error: {e}"),
        Ok(trace) => match trace.save_csv(&config.out_dir.join(&file)) {
            Err(e) => outcome.status = format!("error: {e}"),
            Ok(()) => {
                outcome.file = file;
                outcome.final_regret = Some(trace.final_cumulative());
                outcome.slope = trace_slope(&trace);
                outcome.status = match &trace.aborted {
                    None => "ok".into(),
                    Some(e) => format!("aborted: {e}"),
                };
            }
        },
    }
    outcome
}

fn write_summary(path: &Path, config: &SweepConfig, outcomes: &[CellOutcome]) -> Result<()> {
    let mut text = String::from(
        "config_hash,solver,class,episodes,horizon,seed,file,final_regret,slope,status\n",
    );
    let hash = config.config_hash();
    for o in outcomes {
        let final_regret = o.final_regret.map(|v| v.to_string()).unwrap_or_default();
        let slope = o.slope.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{hash:016x},{},{},{},{},{},{},{final_regret},{slope},{}\n",
            config.solver.tag(),
            config.class.tag(),
            o.episodes,
            o.horizon,
            o.seed,
            o.file,
            o.status,
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

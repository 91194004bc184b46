//! Build a member of the permutation-encoded hard family and inspect it.
//!
//! The instance forces a learner to resolve a coin bias of `epsilon`
//! spread over `L x A` (leaf, action) choices per context: an encoding
//! chain first reveals the hidden context through a context-specific
//! permutation walk, then a binary tree descends to a leaf where exactly
//! one action per context tilts an otherwise fair coin toward the only
//! rewarding state. Run with:
//!
//! ```text
//! cargo run --example generate_hard_instance
//! ```

use lmdp::{build_hard_instance, LmdpModel, Result};

fn main() -> Result<()> {
    let (model, meta) = build_hard_instance(
        2,     // hidden contexts
        11,    // states
        2,     // actions
        0.04,  // blind-policy return variance
        4096,  // planned episode budget (calibrates epsilon)
        None,  // default horizon d1 + d2 + 3
        None,  // sample the answers
        7,     // generator seed
    )?;

    println!("layout: d1={} encoding states, d2={} tree levels", meta.d1, meta.d2);
    println!(
        "        {} tree states, {} leaves, {} (leaf, action) choices",
        meta.tree_states, meta.num_leaves, meta.num_choices
    );
    println!("reward x = {}, bias epsilon = {}", meta.x, meta.epsilon);
    println!("optimal value  = x(1/2 + eps) = {}", meta.optimal_value);
    println!("blind value    = x/2          = {}", meta.x * 0.5);
    println!("max variance   = x^2/4        = {}", meta.var_star);
    println!();
    for m in 0..2 {
        println!(
            "context {m}: permutation {:?}, answer leaf {} action {}",
            meta.permutations[m], meta.correct_leaf[m], meta.correct_action[m]
        );
    }

    // The JSON file round trips exactly.
    let dir = std::env::temp_dir().join("lmdp_hard_demo");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("hard.json");
    model.save(&path)?;
    let reloaded = LmdpModel::load(&path)?;
    assert_eq!(model, reloaded);
    println!("\nsaved and reloaded {} bytes at {}",
        std::fs::metadata(&path)?.len(), path.display());
    Ok(())
}

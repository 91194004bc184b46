//! Policy representations.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::history::HistoryTree;
use crate::model::LmdpModel;

/// The class a planner or solver optimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyClass {
    /// One action per state, independent of history and time.
    Stationary,
    /// One action per history-tree node.
    Tree,
}

impl PolicyClass {
    pub fn tag(&self) -> &'static str {
        match self {
            PolicyClass::Stationary => "stationary",
            PolicyClass::Tree => "tree",
        }
    }
}

impl FromStr for PolicyClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<PolicyClass> {
        match s {
            "stationary" => Ok(PolicyClass::Stationary),
            "tree" => Ok(PolicyClass::Tree),
            other => Err(Error::Domain(format!("unknown policy class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    /// `actions[s]` is the action taken in state `s` at every depth.
    Stationary(Vec<usize>),
    /// `actions[node]` is the action at that history-tree node; entries for
    /// depth-`H+1` leaves are present but never consulted. A tree policy is
    /// bound to the tree it was built from.
    Tree {
        tree: Arc<HistoryTree>,
        actions: Vec<usize>,
    },
}

impl Policy {
    pub fn class(&self) -> PolicyClass {
        match self {
            Policy::Stationary(_) => PolicyClass::Stationary,
            Policy::Tree { .. } => PolicyClass::Tree,
        }
    }

    /// Checks the action table is total over its domain and in range.
    pub fn check(&self, model: &LmdpModel) -> Result<()> {
        match self {
            Policy::Stationary(actions) => {
                if actions.len() != model.num_states {
                    return Err(Error::PolicyDomain(format!(
                        "stationary policy over {} states, model has {}",
                        actions.len(),
                        model.num_states
                    )));
                }
                if actions.iter().any(|&a| a >= model.num_actions) {
                    return Err(Error::PolicyDomain("action index out of range".into()));
                }
            }
            Policy::Tree { tree, actions } => {
                if actions.len() != tree.len() {
                    return Err(Error::PolicyDomain(format!(
                        "tree policy over {} nodes, tree has {}",
                        actions.len(),
                        tree.len()
                    )));
                }
                if actions.iter().any(|&a| a >= model.num_actions) {
                    return Err(Error::PolicyDomain("action index out of range".into()));
                }
            }
        }
        Ok(())
    }
}

/// Resource ceilings for tree construction and policy enumeration.
#[derive(Debug, Clone, Copy)]
pub struct Caps {
    /// Maximum history-tree nodes.
    pub max_tree_nodes: usize,
    /// Maximum enumerated policies (stationary assignments, or distinct
    /// reachable tree assignments).
    pub max_policies: u64,
}

impl Default for Caps {
    fn default() -> Caps {
        Caps {
            max_tree_nodes: crate::history::DEFAULT_NODE_CAP,
            max_policies: 1_000_000,
        }
    }
}

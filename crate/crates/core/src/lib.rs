//! Exact and Monte Carlo laboratory for adaptive influence maximization under the
//! independent cascade model with full-adoption feedback.
//!
//! The crate is layered bottom-up:
//!
//! * [`graph`] holds the influence-graph data model, structural validators and the
//!   generators for the graph families under study (arborescences, one-directional
//!   bipartite graphs, directed lines).
//! * [`cascade`] samples and enumerates live-edge graphs and computes influence
//!   spread exactly or by Monte Carlo.
//! * [`feedback`] models partial realizations observed under full-adoption feedback,
//!   together with active sets, boundaries and conditional marginal gains.
//! * [`policy`] provides adaptive and non-adaptive seeding policies, their evaluation,
//!   the Poisson-clock process and the random-walk transform.
//! * [`oracles`] holds the brute-force ground truth: exact optima, multilinear
//!   extensions, closed forms and bound calculators.
//! * [`lab`] runs the adaptivity-gap experiments and the invariant suite.
//! * [`cli`] wires everything to the `adgap` command line tool.

pub mod cascade;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod graph;
pub mod lab;
pub mod mc;
pub mod oracles;
pub mod poisson;
pub mod policy;
pub mod report;

pub use cascade::{LiveEdgeGraph, Method, SpreadEstimate};
pub use error::{AdgapError, Result};
pub use feedback::{EdgeState, PartialRealization};
pub use graph::{GraphKind, InfluenceGraph};
pub use oracles::OptResult;
pub use policy::{Configuration, Policy};

/// Node sets are dense bitsets over `[0, node_count)`.
pub type NodeSet = fixedbitset::FixedBitSet;

/// Default cap on the number of edges whose joint states are enumerated exactly.
pub const DEFAULT_EDGE_CAP: usize = 20;
/// Default cap on the number of nodes for subset enumeration (`2^n` terms).
pub const DEFAULT_NODE_CAP: usize = 16;

/// Enumeration limits shared by every exact routine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub edges: usize,
    pub nodes: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { edges: DEFAULT_EDGE_CAP, nodes: DEFAULT_NODE_CAP }
    }
}

impl Caps {
    /// Default caps with the edge cap overridden by `ADGAP_EDGE_CAP` when set.
    pub fn from_env() -> Self {
        let mut caps = Caps::default();
        if let Some(v) = std::env::var("ADGAP_EDGE_CAP").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
            if v >= 1 {
                caps.edges = v;
            }
        }
        caps
    }

    pub(crate) fn check_edges(&self, what: &'static str, count: usize) -> Result<()> {
        // u64 masks bound the exact enumerators regardless of the configured cap.
        let cap = self.edges.min(63);
        if count > cap {
            return Err(AdgapError::CapExceeded { what, count, cap });
        }
        Ok(())
    }

    pub(crate) fn check_nodes(&self, what: &'static str, count: usize) -> Result<()> {
        let cap = self.nodes.min(63);
        if count > cap {
            return Err(AdgapError::CapExceeded { what, count, cap });
        }
        Ok(())
    }
}

//! Partial realizations under full-adoption feedback.
//!
//! Seeding a node reveals the whole cascade it triggers: the state of every out-edge
//! of every node it activates. A partial realization therefore stores edge states
//! plus the seed list, which is a sufficient statistic for everything downstream.

use fixedbitset::FixedBitSet;
use rand::Rng;

use crate::cascade::{reachable, LiveEdgeGraph, Method};
use crate::error::{AdgapError, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::{mc, Caps, NodeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeState {
    Unobserved,
    Live,
    Blocked,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialRealization {
    edge_states: Vec<EdgeState>,
    seeds: Vec<NodeId>,
    active: NodeSet,
}

impl PartialRealization {
    /// Nothing seeded, nothing observed.
    pub fn empty(graph: &InfluenceGraph) -> Self {
        PartialRealization {
            edge_states: vec![EdgeState::Unobserved; graph.edge_count()],
            seeds: Vec::new(),
            active: NodeSet::with_capacity(graph.node_count()),
        }
    }

    /// Rebuilds a partial realization from raw parts, checking observation closure and
    /// that every listed seed exists.
    pub fn from_parts(graph: &InfluenceGraph, edge_states: Vec<EdgeState>, seeds: Vec<NodeId>) -> Result<Self> {
        if edge_states.len() != graph.edge_count() {
            return Err(AdgapError::invalid("edge state vector length mismatch"));
        }
        let n = graph.node_count();
        let mut active = NodeSet::with_capacity(n);
        let mut stack = Vec::new();
        for &s in &seeds {
            if s >= n {
                return Err(AdgapError::invalid(format!("seed {s} outside [0, {n})")));
            }
            if !active.put(s) {
                stack.push(s);
            } else if seeds.iter().filter(|&&x| x == s).count() > 1 {
                return Err(AdgapError::invalid(format!("seed {s} listed twice")));
            }
        }
        while let Some(v) = stack.pop() {
            for &e in graph.out_edges(v) {
                let w = graph.edge(e).dst;
                if edge_states[e] == EdgeState::Live && !active.put(w) {
                    stack.push(w);
                }
            }
        }
        let psi = PartialRealization { edge_states, seeds, active };
        for (e, edge) in graph.edges().iter().enumerate() {
            let observed = psi.edge_states[e] != EdgeState::Unobserved;
            if observed != psi.active.contains(edge.src) {
                return Err(AdgapError::Inconsistent(format!(
                    "edge {e} observation does not match activation of node {}",
                    edge.src
                )));
            }
        }
        Ok(psi)
    }

    pub fn edge_states(&self) -> &[EdgeState] {
        &self.edge_states
    }

    pub fn edge_state(&self, e: usize) -> EdgeState {
        self.edge_states[e]
    }

    /// `dom(psi)`, in seeding order.
    pub fn seeds(&self) -> &[NodeId] {
        &self.seeds
    }

    pub fn is_seed(&self, v: NodeId) -> bool {
        self.seeds.contains(&v)
    }

    /// `Gamma(psi)`: nodes reachable from the seeds over live edges.
    pub fn active(&self) -> &NodeSet {
        &self.active
    }

    /// `f(psi) = |Gamma(psi)|`.
    pub fn value(&self) -> usize {
        self.active.count_ones(..)
    }

    pub fn is_consistent_with(&self, live: &LiveEdgeGraph) -> bool {
        self.edge_states.iter().enumerate().all(|(e, s)| match s {
            EdgeState::Unobserved => true,
            EdgeState::Live => live.is_live(e),
            EdgeState::Blocked => !live.is_live(e),
        })
    }

    /// Observations of `self` are contained in `other` (`psi <= psi'`).
    pub fn is_subrealization_of(&self, other: &PartialRealization) -> bool {
        self.seeds.iter().all(|s| other.seeds.contains(s))
            && self.edge_states.iter().zip(&other.edge_states).all(|(a, b)| *a == EdgeState::Unobserved || a == b)
    }

    /// Canonical key: edge states plus the seed set, ignoring seed order.
    pub fn key(&self) -> (Vec<EdgeState>, Vec<NodeId>) {
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        (self.edge_states.clone(), seeds)
    }

    /// Seeds `u` and records the cascade it triggers in `live`.
    ///
    /// Only out-edges of newly activated nodes are read from `live`; consistency of the
    /// rest of `live` with `self` is not checked here (see [`observe`]).
    pub fn observe_in_place(&mut self, graph: &InfluenceGraph, live: &LiveEdgeGraph, u: NodeId) -> Result<()> {
        if u >= graph.node_count() {
            return Err(AdgapError::invalid(format!("node {u} out of range")));
        }
        if self.is_seed(u) {
            return Err(AdgapError::PolicyViolation(format!("node {u} is already a seed")));
        }
        self.seeds.push(u);
        if self.active.put(u) {
            return Ok(());
        }
        let mut stack = vec![u];
        while let Some(v) = stack.pop() {
            for &e in graph.out_edges(v) {
                if live.is_live(e) {
                    self.edge_states[e] = EdgeState::Live;
                    let w = graph.edge(e).dst;
                    if !self.active.put(w) {
                        stack.push(w);
                    }
                } else {
                    self.edge_states[e] = EdgeState::Blocked;
                }
            }
        }
        Ok(())
    }
}

/// `psi` extended by seeding `u` in realization `live`.
pub fn observe(
    graph: &InfluenceGraph,
    live: &LiveEdgeGraph,
    psi: &PartialRealization,
    u: NodeId,
) -> Result<PartialRealization> {
    if !psi.is_consistent_with(live) {
        return Err(AdgapError::Inconsistent("live-edge graph contradicts an observed edge".into()));
    }
    let mut next = psi.clone();
    next.observe_in_place(graph, live, u)?;
    Ok(next)
}

pub fn active_set(psi: &PartialRealization) -> &NodeSet {
    psi.active()
}

/// Active nodes with at least one out-edge leaving the active set.
///
/// Every such node must belong to any set through which all edges out of the active
/// set pass, so this is the unique minimum boundary.
pub fn boundary(graph: &InfluenceGraph, psi: &PartialRealization) -> NodeSet {
    let active = psi.active();
    let mut b = NodeSet::with_capacity(graph.node_count());
    for v in active.ones() {
        if graph.out_edges(v).iter().any(|&e| !active.contains(graph.edge(e).dst)) {
            b.insert(v);
        }
    }
    b
}

fn unobserved_edges(psi: &PartialRealization) -> Vec<usize> {
    psi.edge_states.iter().enumerate().filter(|(_, s)| **s == EdgeState::Unobserved).map(|(e, _)| e).collect()
}

fn fixed_part(graph: &InfluenceGraph, psi: &PartialRealization) -> FixedBitSet {
    let mut live = FixedBitSet::with_capacity(graph.edge_count());
    for (e, s) in psi.edge_states.iter().enumerate() {
        if *s == EdgeState::Live {
            live.insert(e);
        }
    }
    live
}

/// Every completion of the unobserved edges, weighted by the product prior.
pub fn consistent_extensions(
    graph: &InfluenceGraph,
    psi: &PartialRealization,
    caps: &Caps,
) -> Result<Vec<LiveEdgeGraph>> {
    let free = unobserved_edges(psi);
    caps.check_edges("unobserved edge", free.len())?;
    let base = fixed_part(graph, psi);
    let mut out = Vec::with_capacity(1 << free.len());
    for mask in 0u64..(1u64 << free.len()) {
        let mut live = base.clone();
        let mut w = 1.0;
        for (bit, &e) in free.iter().enumerate() {
            let p = graph.edge(e).p;
            if mask >> bit & 1 == 1 {
                live.insert(e);
                w *= p;
            } else {
                w *= 1.0 - p;
            }
        }
        let mut g = LiveEdgeGraph::new(live);
        g.weight = Some(w);
        out.push(g);
    }
    Ok(out)
}

/// A realization drawn from the prior conditioned on `psi`.
pub fn sample_extension<R: Rng + ?Sized>(
    graph: &InfluenceGraph,
    psi: &PartialRealization,
    rng: &mut R,
) -> LiveEdgeGraph {
    let mut live = fixed_part(graph, psi);
    for (e, s) in psi.edge_states.iter().enumerate() {
        if *s == EdgeState::Unobserved && rng.random::<f64>() < graph.edge(e).p {
            live.insert(e);
        }
    }
    LiveEdgeGraph::new(live)
}

fn gain_in(graph: &InfluenceGraph, psi: &PartialRealization, live: &LiveEdgeGraph, u: NodeId) -> usize {
    let mut from_u = NodeSet::with_capacity(graph.node_count());
    from_u.insert(u);
    let mut reached = reachable(graph, live, &from_u);
    reached.difference_with(psi.active());
    reached.count_ones(..)
}

/// `Delta(u | psi)`: expected number of newly activated nodes when seeding `u`,
/// conditioned on the observations in `psi`.
pub fn conditional_marginal_gain(
    graph: &InfluenceGraph,
    psi: &PartialRealization,
    u: NodeId,
    method: Method,
    caps: &Caps,
) -> Result<f64> {
    if u >= graph.node_count() {
        return Err(AdgapError::invalid(format!("node {u} out of range")));
    }
    if psi.active().contains(u) {
        return Ok(0.0);
    }
    match method {
        Method::Exact => Ok(consistent_extensions(graph, psi, caps)?
            .iter()
            .map(|live| live.weight.unwrap_or(0.0) * gain_in(graph, psi, live, u) as f64)
            .sum()),
        Method::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(AdgapError::invalid("samples must be at least 1"));
            }
            Ok(mc::estimate_mean(samples, seed, |rng| {
                let live = sample_extension(graph, psi, rng);
                gain_in(graph, psi, &live, u) as f64
            })
            .mean)
        }
    }
}

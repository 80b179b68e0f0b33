//! Live-edge realizations, reachability and influence spread.

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::Serialize;

use crate::error::{AdgapError, Result};
use crate::graph::{GraphKind, InfluenceGraph, NodeId};
use crate::mc::{self, SimRng};
use crate::{Caps, NodeSet};

/// One realization of edge liveness.
#[derive(Clone, Debug, PartialEq)]
pub struct LiveEdgeGraph {
    live: FixedBitSet,
    /// Prior probability of this exact realization; set only by the enumerator.
    pub weight: Option<f64>,
}

impl LiveEdgeGraph {
    pub fn new(live: FixedBitSet) -> Self {
        LiveEdgeGraph { live, weight: None }
    }

    pub fn from_mask(mask: u64, edge_count: usize) -> Self {
        let mut live = FixedBitSet::with_capacity(edge_count);
        for e in 0..edge_count {
            live.set(e, mask >> e & 1 == 1);
        }
        LiveEdgeGraph { live, weight: None }
    }

    pub fn all_live(edge_count: usize) -> Self {
        let mut live = FixedBitSet::with_capacity(edge_count);
        live.insert_range(..);
        LiveEdgeGraph { live, weight: None }
    }

    pub fn all_blocked(edge_count: usize) -> Self {
        LiveEdgeGraph::new(FixedBitSet::with_capacity(edge_count))
    }

    pub fn is_live(&self, e: usize) -> bool {
        self.live.contains(e)
    }

    pub fn set(&mut self, e: usize, live: bool) {
        self.live.set(e, live);
    }

    pub fn edge_count(&self) -> usize {
        self.live.len()
    }

    pub fn live_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.live.ones()
    }

    /// Low 64 edges as a bitmask.
    pub fn to_mask(&self) -> u64 {
        self.live.ones().take_while(|&e| e < 64).fold(0, |m, e| m | 1 << e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo {
        samples: usize,
    },
    /// Value of a specific policy or seed set, used as a lower bound on an optimum.
    LowerBound,
    ClosedForm,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::MonteCarlo { .. } => "monte_carlo",
            Provenance::LowerBound => "lower_bound",
            Provenance::ClosedForm => "closed_form",
        }
    }
}

/// How an expectation is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Method {
    pub fn mc(samples: usize, seed: u64) -> Self {
        Method::MonteCarlo { samples, seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpreadEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: Provenance,
}

impl SpreadEstimate {
    pub fn exact(value: f64) -> Self {
        SpreadEstimate { value, stderr: 0.0, method: Provenance::Exact }
    }

    pub fn from_moments(m: &mc::Moments) -> Self {
        SpreadEstimate {
            value: m.mean,
            stderr: m.stderr(),
            method: Provenance::MonteCarlo { samples: m.count as usize },
        }
    }
}

/// Each edge independently live with its probability.
pub fn sample_live_edges<R: Rng + ?Sized>(graph: &InfluenceGraph, rng: &mut R) -> LiveEdgeGraph {
    let mut live = FixedBitSet::with_capacity(graph.edge_count());
    for (e, edge) in graph.edges().iter().enumerate() {
        if rng.random::<f64>() < edge.p {
            live.insert(e);
        }
    }
    LiveEdgeGraph::new(live)
}

/// Every live-edge realization as a `(mask, weight)` pair; bit `e` of the mask is edge `e`.
pub(crate) fn live_mask_weights(graph: &InfluenceGraph, caps: &Caps) -> Result<Vec<(u64, f64)>> {
    let m = graph.edge_count();
    caps.check_edges("edge", m)?;
    let mut weights = vec![1.0f64];
    for edge in graph.edges() {
        let len = weights.len();
        weights.reserve(len);
        for i in 0..len {
            let w = weights[i];
            weights[i] = w * (1.0 - edge.p);
            weights.push(w * edge.p);
        }
    }
    Ok(weights.into_iter().enumerate().map(|(mask, w)| (mask as u64, w)).collect())
}

/// Realizations with positive weight only.
pub(crate) fn live_support(graph: &InfluenceGraph, caps: &Caps) -> Result<Vec<(u64, f64)>> {
    let mut all = live_mask_weights(graph, caps)?;
    all.retain(|&(_, w)| w > 0.0);
    Ok(all)
}

/// All `2^m` realizations with their prior weights.
pub fn enumerate_live_edges(graph: &InfluenceGraph, caps: &Caps) -> Result<impl Iterator<Item = LiveEdgeGraph>> {
    let m = graph.edge_count();
    let all = live_mask_weights(graph, caps)?;
    Ok(all.into_iter().map(move |(mask, w)| {
        let mut g = LiveEdgeGraph::from_mask(mask, m);
        g.weight = Some(w);
        g
    }))
}

pub(crate) fn node_set(n: usize, nodes: &[NodeId]) -> Result<NodeSet> {
    let mut set = NodeSet::with_capacity(n);
    for &v in nodes {
        if v >= n {
            return Err(AdgapError::invalid(format!("node {v} outside [0, {n})")));
        }
        set.insert(v);
    }
    Ok(set)
}

/// Forward closure of `seeds` over live edges.
pub fn reachable(graph: &InfluenceGraph, live: &LiveEdgeGraph, seeds: &NodeSet) -> NodeSet {
    let mut reached = NodeSet::with_capacity(graph.node_count());
    let mut stack: Vec<NodeId> = seeds.ones().collect();
    for &s in &stack {
        reached.insert(s);
    }
    while let Some(v) = stack.pop() {
        for &e in graph.out_edges(v) {
            let w = graph.edge(e).dst;
            if live.is_live(e) && !reached.put(w) {
                stack.push(w);
            }
        }
    }
    reached
}

/// Bitmask reachability for graphs with at most 64 nodes and 64 edges.
#[derive(Clone, Debug)]
pub(crate) struct SmallGraph {
    /// Per node: `(edge bit, destination bit)` of each out-edge.
    out: Vec<Vec<(u64, u64)>>,
    pub n: usize,
}

impl SmallGraph {
    pub fn new(graph: &InfluenceGraph) -> Option<Self> {
        if graph.node_count() > 64 || graph.edge_count() > 64 {
            return None;
        }
        let out = graph
            .nodes()
            .map(|v| graph.out_edges(v).iter().map(|&e| (1u64 << e, 1u64 << graph.edge(e).dst)).collect())
            .collect();
        Some(SmallGraph { out, n: graph.node_count() })
    }

    pub fn reach(&self, live: u64, seeds: u64) -> u64 {
        let mut reached = seeds;
        let mut frontier = seeds;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            for &(ebit, dbit) in &self.out[v] {
                if live & ebit != 0 && reached & dbit == 0 {
                    reached |= dbit;
                    frontier |= dbit;
                }
            }
        }
        reached
    }
}

pub(crate) fn mask_of(nodes: &NodeSet) -> u64 {
    nodes.ones().fold(0, |m, v| m | 1 << v)
}

/// Exact spread over an enumerated support, reusable across seed sets.
#[derive(Clone, Debug)]
pub(crate) struct ExactSpread {
    pub small: SmallGraph,
    pub support: Vec<(u64, f64)>,
}

impl ExactSpread {
    pub fn new(graph: &InfluenceGraph, caps: &Caps) -> Result<Self> {
        let support = live_support(graph, caps)?;
        let small = SmallGraph::new(graph).ok_or(AdgapError::CapExceeded {
            what: "node",
            count: graph.node_count(),
            cap: 64,
        })?;
        Ok(ExactSpread { small, support })
    }

    pub fn spread(&self, seeds: u64) -> f64 {
        if seeds == 0 {
            return 0.0;
        }
        self.support.iter().map(|&(live, w)| w * self.small.reach(live, seeds).count_ones() as f64).sum()
    }

    pub fn activation(&self, seeds: u64) -> Vec<f64> {
        let mut probs = vec![0.0; self.small.n];
        for &(live, w) in &self.support {
            let mut r = self.small.reach(live, seeds);
            while r != 0 {
                probs[r.trailing_zeros() as usize] += w;
                r &= r - 1;
            }
        }
        probs
    }
}

/// Expected number of active nodes, by enumeration of every live-edge graph.
pub fn spread_exact(graph: &InfluenceGraph, seeds: &[NodeId], caps: &Caps) -> Result<SpreadEstimate> {
    let seeds = node_set(graph.node_count(), seeds)?;
    if seeds.is_clear() {
        return Ok(SpreadEstimate::exact(0.0));
    }
    if graph.node_count() <= 64 {
        let oracle = ExactSpread::new(graph, caps)?;
        return Ok(SpreadEstimate::exact(oracle.spread(mask_of(&seeds))));
    }
    let value = enumerate_live_edges(graph, caps)?
        .map(|live| live.weight.unwrap_or(0.0) * reachable(graph, &live, &seeds).count_ones(..) as f64)
        .sum();
    Ok(SpreadEstimate::exact(value))
}

/// Monte Carlo spread with chunked substreams of `seed`.
pub fn spread_mc(graph: &InfluenceGraph, seeds: &[NodeId], samples: usize, seed: u64) -> Result<SpreadEstimate> {
    if samples == 0 {
        return Err(AdgapError::invalid("samples must be at least 1"));
    }
    let seeds = node_set(graph.node_count(), seeds)?;
    if seeds.is_clear() {
        return Ok(SpreadEstimate { value: 0.0, stderr: 0.0, method: Provenance::MonteCarlo { samples } });
    }
    let m = mc::estimate_mean(samples, seed, |rng: &mut SimRng| {
        let live = sample_live_edges(graph, rng);
        reachable(graph, &live, &seeds).count_ones(..) as f64
    });
    Ok(SpreadEstimate::from_moments(&m))
}

pub fn spread(graph: &InfluenceGraph, seeds: &[NodeId], method: Method, caps: &Caps) -> Result<SpreadEstimate> {
    match method {
        Method::Exact => spread_exact(graph, seeds, caps),
        Method::MonteCarlo { samples, seed } => spread_mc(graph, seeds, samples, seed),
    }
}

/// Activation probability of every node (`sigma_u(S)`).
pub fn per_node_activation(graph: &InfluenceGraph, seeds: &[NodeId], method: Method, caps: &Caps) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let seeds = node_set(n, seeds)?;
    match method {
        Method::Exact if n <= 64 => {
            let oracle = ExactSpread::new(graph, caps)?;
            Ok(oracle.activation(mask_of(&seeds)))
        }
        Method::Exact => {
            let mut probs = vec![0.0; n];
            for live in enumerate_live_edges(graph, caps)? {
                let w = live.weight.unwrap_or(0.0);
                for v in reachable(graph, &live, &seeds).ones() {
                    probs[v] += w;
                }
            }
            Ok(probs)
        }
        Method::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(AdgapError::invalid("samples must be at least 1"));
            }
            let parts = mc::run_chunks(samples, seed, |rng, len| {
                let mut counts = vec![0u64; n];
                for _ in 0..len {
                    let live = sample_live_edges(graph, rng);
                    for v in reachable(graph, &live, &seeds).ones() {
                        counts[v] += 1;
                    }
                }
                counts
            });
            let mut total = vec![0u64; n];
            for part in parts {
                total.iter_mut().zip(part).for_each(|(t, c)| *t += c);
            }
            Ok(total.into_iter().map(|c| c as f64 / samples as f64).collect())
        }
    }
}

/// Spread on a uniform-probability line: each node contributes `q^d`, where `d` is the
/// distance to its nearest seeded predecessor.
pub fn line_spread_closed_form(graph: &InfluenceGraph, seeds: &[NodeId]) -> Result<f64> {
    let order = graph
        .line_order()
        .ok_or_else(|| AdgapError::WrongKind { expected: "line", found: graph.shape().to_string() })?;
    let q = match (graph.edge_count(), graph.uniform_probability()) {
        (0, _) => 0.0,
        (_, Some(q)) => q,
        (_, None) => return Err(AdgapError::InvalidGraph("line edges do not share one probability".into())),
    };
    debug_assert_eq!(graph.shape(), GraphKind::Line);
    let seeds = node_set(graph.node_count(), seeds)?;
    let mut total = 0.0;
    let mut carry: Option<f64> = None;
    for v in order {
        carry = if seeds.contains(v) { Some(1.0) } else { carry.map(|c| c * q) };
        total += carry.unwrap_or(0.0);
    }
    Ok(total)
}

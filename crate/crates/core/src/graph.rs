//! Influence graphs, structural validators and generators for the graph families
//! under study.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AdgapError, Result};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    General,
    InArborescence,
    OutArborescence,
    Bipartite,
    Line,
}

impl GraphKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraphKind::General => "general",
            GraphKind::InArborescence => "in_arborescence",
            GraphKind::OutArborescence => "out_arborescence",
            GraphKind::Bipartite => "bipartite",
            GraphKind::Line => "line",
        }
    }

    pub fn parse(s: &str) -> Option<GraphKind> {
        Some(match s {
            "general" => GraphKind::General,
            "in_arborescence" => GraphKind::InArborescence,
            "out_arborescence" => GraphKind::OutArborescence,
            "bipartite" => GraphKind::Bipartite,
            "line" => GraphKind::Line,
            _ => return None,
        })
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub p: f64,
}

/// Directed graph with per-edge activation probabilities.
///
/// Edges keep their insertion order; edge index `e` is the bit position used by
/// live-edge masks and partial realizations.
#[derive(Clone, Debug)]
pub struct InfluenceGraph {
    node_count: usize,
    edges: Vec<Edge>,
    kind: GraphKind,
    shape: GraphKind,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl PartialEq for InfluenceGraph {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count && self.kind == other.kind && self.edges == other.edges
    }
}

impl InfluenceGraph {
    /// Builds a graph, rejecting malformed edge lists and kind tags whose structural
    /// predicate does not hold.
    pub fn new(node_count: usize, edges: Vec<Edge>, kind: GraphKind) -> Result<Self> {
        if node_count == 0 {
            return Err(AdgapError::InvalidGraph("node_count must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut out_edges = vec![Vec::new(); node_count];
        let mut in_edges = vec![Vec::new(); node_count];
        for (i, e) in edges.iter().enumerate() {
            if e.src >= node_count || e.dst >= node_count {
                return Err(AdgapError::InvalidGraph(format!(
                    "edge {i} ({} -> {}) references a node outside [0, {node_count})",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(AdgapError::InvalidGraph(format!("self-loop on node {}", e.src)));
            }
            if !(0.0..=1.0).contains(&e.p) {
                return Err(AdgapError::InvalidGraph(format!("edge {i} probability {} outside [0, 1]", e.p)));
            }
            if !seen.insert((e.src, e.dst)) {
                return Err(AdgapError::InvalidGraph(format!("duplicate edge {} -> {}", e.src, e.dst)));
            }
            out_edges[e.src].push(i);
            in_edges[e.dst].push(i);
        }
        let mut g = InfluenceGraph { node_count, edges, kind, shape: GraphKind::General, out_edges, in_edges };
        g.shape = g.structural_kind();
        if kind != GraphKind::General && !g.satisfies(kind) {
            return Err(AdgapError::InvalidGraph(format!(
                "edges do not form a {kind} graph (structure is {})",
                g.shape
            )));
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Declared kind tag.
    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Most specific kind whose structural predicate holds.
    pub fn shape(&self) -> GraphKind {
        self.shape
    }

    /// Edge indices leaving `v`.
    pub fn out_edges(&self, v: NodeId) -> &[usize] {
        &self.out_edges[v]
    }

    /// Edge indices entering `v`.
    pub fn in_edges(&self, v: NodeId) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.node_count
    }

    /// Whether the graph structurally belongs to `kind`.
    pub fn satisfies(&self, kind: GraphKind) -> bool {
        match kind {
            GraphKind::General => true,
            GraphKind::InArborescence => self.is_in_arborescence(),
            GraphKind::OutArborescence => self.is_out_arborescence(),
            GraphKind::Line => self.is_in_arborescence() && self.is_out_arborescence(),
            GraphKind::Bipartite => self.is_one_directional_bipartite(),
        }
    }

    fn structural_kind(&self) -> GraphKind {
        let inward = self.is_in_arborescence();
        let outward = self.is_out_arborescence();
        match (inward, outward) {
            (true, true) => GraphKind::Line,
            (true, false) => GraphKind::InArborescence,
            (false, true) => GraphKind::OutArborescence,
            _ if self.is_one_directional_bipartite() => GraphKind::Bipartite,
            _ => GraphKind::General,
        }
    }

    /// One root with out-degree 0, every other node with out-degree 1, and every
    /// out-path ending at the root.
    fn is_in_arborescence(&self) -> bool {
        Self::is_rooted_tree(self.node_count, self.edges.len(), &self.out_edges, |e| self.edges[e].dst)
    }

    fn is_out_arborescence(&self) -> bool {
        Self::is_rooted_tree(self.node_count, self.edges.len(), &self.in_edges, |e| self.edges[e].src)
    }

    fn is_rooted_tree(n: usize, m: usize, toward_root: &[Vec<usize>], next: impl Fn(usize) -> NodeId) -> bool {
        if m + 1 != n {
            return false;
        }
        let roots: Vec<_> = (0..n).filter(|&v| toward_root[v].is_empty()).collect();
        if roots.len() != 1 || (0..n).any(|v| toward_root[v].len() > 1) {
            return false;
        }
        let root = roots[0];
        // Each walk toward the root must terminate within n steps.
        let mut reaches = vec![false; n];
        reaches[root] = true;
        for start in 0..n {
            let mut path = Vec::new();
            let mut v = start;
            while !reaches[v] {
                if path.len() > n {
                    return false;
                }
                path.push(v);
                v = next(toward_root[v][0]);
            }
            for u in path {
                reaches[u] = true;
            }
        }
        true
    }

    /// True when no node has both incoming and outgoing edges.
    pub fn is_bipartite(&self) -> bool {
        self.is_one_directional_bipartite()
    }

    fn is_one_directional_bipartite(&self) -> bool {
        (0..self.node_count).all(|v| self.out_edges[v].is_empty() || self.in_edges[v].is_empty())
    }

    /// Node order along a directed path, origin first. `None` unless the graph is a line.
    pub fn line_order(&self) -> Option<Vec<NodeId>> {
        if self.shape != GraphKind::Line {
            return None;
        }
        let origin = self.nodes().find(|&v| self.in_edges[v].is_empty())?;
        let mut order = Vec::with_capacity(self.node_count);
        let mut v = origin;
        loop {
            order.push(v);
            match self.out_edges[v].first() {
                Some(&e) => v = self.edges[e].dst,
                None => break,
            }
        }
        Some(order)
    }

    /// Common edge probability of a graph whose edges all share one probability.
    pub fn uniform_probability(&self) -> Option<f64> {
        let first = self.edges.first()?.p;
        self.edges.iter().all(|e| e.p == first).then_some(first)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            version: 1,
            kind: self.kind.as_str().to_string(),
            nodes: self.node_count,
            edges: self.edges.clone(),
        }
    }

    pub fn from_file(file: GraphFile) -> Result<Self> {
        if file.version != 1 {
            return Err(AdgapError::InvalidGraph(format!("unsupported graph file version {}", file.version)));
        }
        let kind = GraphKind::parse(&file.kind)
            .ok_or_else(|| AdgapError::InvalidGraph(format!("unknown kind {:?}", file.kind)))?;
        InfluenceGraph::new(file.nodes, file.edges, kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// On-disk graph representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub version: u32,
    pub kind: String,
    pub nodes: usize,
    pub edges: Vec<Edge>,
}

/// Most specific kind whose structural predicate holds: line, then in- and
/// out-arborescence, then one-directional bipartite, with general as the fallback.
pub fn validate_kind(graph: &InfluenceGraph) -> GraphKind {
    graph.shape()
}

/// Directed line on `k * t` nodes, every edge live with probability `1 - 1/t`.
///
/// Block `j` (1-based) position `i` maps to node `(j - 1) * t + (i - 1)`.
pub fn make_line_instance(k: usize, t: usize) -> Result<InfluenceGraph> {
    if k == 0 || t == 0 {
        return Err(AdgapError::invalid("line instance needs k >= 1 and t >= 1"));
    }
    let p = 1.0 - 1.0 / t as f64;
    path_graph(&vec![p; k * t - 1])
}

/// Directed path `0 -> 1 -> ... -> probs.len()` with the given edge probabilities.
pub fn path_graph(probs: &[f64]) -> Result<InfluenceGraph> {
    let edges = probs.iter().enumerate().map(|(i, &p)| Edge { src: i, dst: i + 1, p }).collect();
    InfluenceGraph::new(probs.len() + 1, edges, GraphKind::Line)
}

/// How edge probabilities are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbSpec {
    /// Uniform on `[lo, hi]`; `lo == hi` fixes the probability.
    Range(f64, f64),
    /// Uniform choice among the listed values.
    Choice(Vec<f64>),
}

impl ProbSpec {
    fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        match self {
            ProbSpec::Range(lo, hi) if ok(*lo) && ok(*hi) && lo <= hi => Ok(()),
            ProbSpec::Choice(v) if !v.is_empty() && v.iter().all(|&p| ok(p)) => Ok(()),
            other => Err(AdgapError::invalid(format!("bad probability spec {other:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ProbSpec::Range(lo, hi) if lo == hi => *lo,
            ProbSpec::Range(lo, hi) => rng.random_range(*lo..=*hi),
            ProbSpec::Choice(v) => v[rng.random_range(0..v.len())],
        }
    }
}

/// Size parameters for [`random_family`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyParams {
    /// Node count for arborescences.
    Tree { n: usize },
    /// Left/right part sizes and the independent inclusion probability of each L x R pair.
    Bipartite { left: usize, right: usize, density: f64 },
    /// `m` distinct ordered pairs over `n` nodes, chosen uniformly.
    General { n: usize, m: usize },
}

/// Random member of a graph family, deterministic given the generator state.
///
/// Arborescences are random recursive trees with shuffled labels; bipartite graphs
/// flip one coin per left/right pair. Lines come from [`make_line_instance`].
pub fn random_family<R: Rng + ?Sized>(
    kind: GraphKind,
    params: FamilyParams,
    probs: &ProbSpec,
    rng: &mut R,
) -> Result<InfluenceGraph> {
    probs.validate()?;
    match (kind, params) {
        (GraphKind::InArborescence | GraphKind::OutArborescence, FamilyParams::Tree { n }) => {
            if n == 0 {
                return Err(AdgapError::invalid("tree needs at least one node"));
            }
            let mut labels: Vec<NodeId> = (0..n).collect();
            labels.shuffle(rng);
            let mut edges = Vec::with_capacity(n.saturating_sub(1));
            for i in 1..n {
                let parent = rng.random_range(0..i);
                let (child, parent) = (labels[i], labels[parent]);
                let p = probs.sample(rng);
                let (src, dst) = if kind == GraphKind::InArborescence { (child, parent) } else { (parent, child) };
                edges.push(Edge { src, dst, p });
            }
            // A path-shaped draw is still a valid member of the requested family.
            InfluenceGraph::new(n, edges, kind)
        }
        (GraphKind::Bipartite, FamilyParams::Bipartite { left, right, density }) => {
            if left + right == 0 || !(0.0..=1.0).contains(&density) {
                return Err(AdgapError::invalid("bipartite needs nodes and density in [0, 1]"));
            }
            let mut edges = Vec::new();
            for l in 0..left {
                for r in left..left + right {
                    if density >= 1.0 || rng.random_bool(density) {
                        edges.push(Edge { src: l, dst: r, p: probs.sample(rng) });
                    }
                }
            }
            InfluenceGraph::new(left + right, edges, GraphKind::Bipartite)
        }
        (GraphKind::General, FamilyParams::General { n, m }) => {
            if n == 0 || m > n * (n - 1) {
                return Err(AdgapError::invalid(format!("cannot place {m} edges on {n} nodes")));
            }
            let pairs = n * (n - 1);
            let mut picked = index::sample(rng, pairs, m).into_vec();
            picked.sort_unstable();
            let edges = picked
                .into_iter()
                .map(|code| {
                    let src = code / (n - 1);
                    let mut dst = code % (n - 1);
                    if dst >= src {
                        dst += 1;
                    }
                    Edge { src, dst, p: probs.sample(rng) }
                })
                .collect();
            InfluenceGraph::new(n, edges, GraphKind::General)
        }
        (GraphKind::Line, _) => Err(AdgapError::invalid("lines are built by make_line_instance, not random_family")),
        (kind, params) => Err(AdgapError::invalid(format!("size parameters {params:?} do not fit kind {kind}"))),
    }
}

/// Probability that `src` reaches `dst` along the unique directed path.
///
/// 1 when `src == dst`, 0 when no directed path exists. Defined for graphs whose
/// structure makes paths unique (arborescences, lines, one-directional bipartite).
pub fn reach_prob_path(graph: &InfluenceGraph, src: NodeId, dst: NodeId) -> Result<f64> {
    if graph.shape() == GraphKind::General {
        return Err(AdgapError::WrongKind { expected: "tree-shaped or bipartite", found: graph.shape().to_string() });
    }
    let n = graph.node_count();
    if src >= n || dst >= n {
        return Err(AdgapError::invalid("node id out of range"));
    }
    let mut prob = vec![None; n];
    prob[src] = Some(1.0);
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        if v == dst {
            break;
        }
        let pv = prob[v].unwrap_or(0.0);
        for &e in graph.out_edges(v) {
            let w = graph.edge(e).dst;
            if prob[w].is_none() {
                prob[w] = Some(pv * graph.edge(e).p);
                queue.push_back(w);
            }
        }
    }
    Ok(prob[dst].unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::substream;

    fn edge(src: usize, dst: usize, p: f64) -> Edge {
        Edge { src, dst, p }
    }

    #[test]
    fn line_instance_small_cases() {
        let g = make_line_instance(1, 2).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[edge(0, 1, 0.5)]);
        assert_eq!(g.kind(), GraphKind::Line);

        let g = make_line_instance(1, 1).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);

        let g = make_line_instance(2, 2).unwrap();
        assert_eq!(g.edges(), &[edge(0, 1, 0.5), edge(1, 2, 0.5), edge(2, 3, 0.5)]);
        assert!(make_line_instance(0, 3).is_err());
    }

    #[test]
    fn t_one_keeps_zero_probability_edges() {
        let g = make_line_instance(3, 1).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.edges().iter().all(|e| e.p == 0.0));
    }

    #[test]
    fn validate_kind_examples() {
        let g = InfluenceGraph::new(2, vec![edge(0, 1, 0.3)], GraphKind::General).unwrap();
        assert_eq!(validate_kind(&g), GraphKind::Line);

        let star = InfluenceGraph::new(3, vec![edge(1, 0, 0.5), edge(2, 0, 0.5)], GraphKind::General).unwrap();
        assert_eq!(validate_kind(&star), GraphKind::InArborescence);

        let out = InfluenceGraph::new(3, vec![edge(0, 1, 0.5), edge(0, 2, 0.5)], GraphKind::General).unwrap();
        assert_eq!(validate_kind(&out), GraphKind::OutArborescence);

        let tri = InfluenceGraph::new(3, vec![edge(0, 1, 0.5), edge(1, 2, 0.5), edge(2, 0, 0.5)], GraphKind::General)
            .unwrap();
        assert_eq!(validate_kind(&tri), GraphKind::General);

        let bip = InfluenceGraph::new(4, vec![edge(0, 2, 0.5), edge(0, 3, 0.5), edge(1, 2, 0.5)], GraphKind::General)
            .unwrap();
        assert_eq!(validate_kind(&bip), GraphKind::Bipartite);
    }

    #[test]
    fn constructor_rejects_malformed_graphs() {
        assert!(InfluenceGraph::new(2, vec![edge(0, 0, 0.5)], GraphKind::General).is_err());
        assert!(InfluenceGraph::new(2, vec![edge(0, 2, 0.5)], GraphKind::General).is_err());
        assert!(InfluenceGraph::new(2, vec![edge(0, 1, 1.5)], GraphKind::General).is_err());
        assert!(InfluenceGraph::new(2, vec![edge(0, 1, 0.5), edge(0, 1, 0.2)], GraphKind::General).is_err());
        // kind tag must match structure
        assert!(InfluenceGraph::new(3, vec![edge(0, 1, 0.5), edge(0, 2, 0.5)], GraphKind::InArborescence).is_err());
        assert!(InfluenceGraph::new(0, vec![], GraphKind::General).is_err());
    }

    #[test]
    fn random_family_examples() {
        let mut rng = substream(1, 0);
        let g =
            random_family(GraphKind::InArborescence, FamilyParams::Tree { n: 1 }, &ProbSpec::Range(0.1, 0.9), &mut rng)
                .unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));

        assert!(
            random_family(GraphKind::Line, FamilyParams::Tree { n: 4 }, &ProbSpec::Range(0.5, 0.5), &mut rng).is_err()
        );

        let g = random_family(
            GraphKind::Bipartite,
            FamilyParams::Bipartite { left: 2, right: 2, density: 1.0 },
            &ProbSpec::Range(0.5, 0.5),
            &mut rng,
        )
        .unwrap();
        let mut pairs: Vec<_> = g.edges().iter().map(|e| (e.src, e.dst, e.p)).collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pairs, vec![(0, 2, 0.5), (0, 3, 0.5), (1, 2, 0.5), (1, 3, 0.5)]);

        assert!(random_family(GraphKind::Bipartite, FamilyParams::Tree { n: 3 }, &ProbSpec::Range(0.5, 0.5), &mut rng)
            .is_err());
    }

    #[test]
    fn random_family_is_deterministic() {
        let make = || {
            let mut rng = substream(42, 3);
            random_family(
                GraphKind::General,
                FamilyParams::General { n: 6, m: 9 },
                &ProbSpec::Choice(vec![0.25, 0.5, 0.75]),
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(make(), make());
        assert_eq!(make().edge_count(), 9);
    }

    #[test]
    fn random_in_arborescence_degrees() {
        let mut rng = substream(5, 0);
        for n in 1..15 {
            let g = random_family(
                GraphKind::InArborescence,
                FamilyParams::Tree { n },
                &ProbSpec::Range(0.0, 1.0),
                &mut rng,
            )
            .unwrap();
            let degrees: Vec<_> = g.nodes().map(|v| g.out_edges(v).len()).collect();
            assert!(degrees.iter().all(|&d| d <= 1));
            assert_eq!(degrees.iter().filter(|&&d| d == 0).count(), 1);
        }
    }

    #[test]
    fn reach_prob_examples() {
        let g = make_line_instance(1, 2).unwrap();
        assert_eq!(reach_prob_path(&g, 0, 0).unwrap(), 1.0);
        assert_eq!(reach_prob_path(&g, 1, 0).unwrap(), 0.0);
        let g = make_line_instance(2, 2).unwrap();
        assert_eq!(reach_prob_path(&g, 0, 3).unwrap(), 0.125);

        let tri = InfluenceGraph::new(3, vec![edge(0, 1, 0.5), edge(1, 2, 0.5), edge(2, 0, 0.5)], GraphKind::General)
            .unwrap();
        assert!(reach_prob_path(&tri, 0, 2).is_err());
    }

    #[test]
    fn line_order_follows_path() {
        let g =
            InfluenceGraph::new(4, vec![edge(2, 0, 0.5), edge(3, 2, 0.5), edge(0, 1, 0.5)], GraphKind::Line).unwrap();
        assert_eq!(g.line_order().unwrap(), vec![3, 2, 0, 1]);
        assert_eq!(g.uniform_probability(), Some(0.5));
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let g = make_line_instance(2, 3).unwrap();
        let s = g.to_json().unwrap();
        assert!(
            s.starts_with(r#"{"version":1,"kind":"line","nodes":6,"edges":[{"src":0,"dst":1,"p":0.6666666666666667}"#)
        );
        assert_eq!(InfluenceGraph::from_json(&s).unwrap(), g);
        assert!(InfluenceGraph::from_json(r#"{"version":2,"kind":"line","nodes":1,"edges":[]}"#).is_err());
        assert!(InfluenceGraph::from_json(r#"{"version":1,"kind":"tree","nodes":1,"edges":[]}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn line_instances_validate_as_line(k in 1usize..6, t in 2usize..6) {
                let g = make_line_instance(k, t).unwrap();
                prop_assert_eq!(validate_kind(&g), GraphKind::Line);
            }

            #[test]
            fn reach_prob_is_multiplicative(k in 1usize..4, t in 2usize..5, a in 0usize..20, b in 0usize..20, c in 0usize..20) {
                let g = make_line_instance(k, t).unwrap();
                let n = g.node_count();
                let mut idx = [a % n, b % n, c % n];
                idx.sort_unstable();
                let [a, b, c] = idx;
                let ac = reach_prob_path(&g, a, c).unwrap();
                let ab = reach_prob_path(&g, a, b).unwrap();
                let bc = reach_prob_path(&g, b, c).unwrap();
                prop_assert!((ac - ab * bc).abs() <= 1e-12);
            }
        }
    }
}

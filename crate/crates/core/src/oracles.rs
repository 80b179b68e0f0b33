//! Brute-force ground truth: exact optima, multilinear extensions, closed forms and
//! bound calculators.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::cascade::{live_support, mask_of, ExactSpread, Provenance, SmallGraph};
use crate::error::{AdgapError, Result};
use crate::feedback::{consistent_extensions, PartialRealization};
use crate::graph::{reach_prob_path, InfluenceGraph, NodeId};
use crate::policy::{Decision, Policy};
use crate::Caps;

/// Relative tolerance used to break near-ties toward the lexicographically smallest witness.
const TIE_EPS: f64 = 1e-12;

pub const E_OVER_E_MINUS_1: f64 = std::f64::consts::E / (std::f64::consts::E - 1.0);

#[derive(Clone, Debug)]
pub enum Witness {
    Seeds(Vec<NodeId>),
    Policy(DpPolicy),
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub value: f64,
    pub witness: Witness,
    pub method: Provenance,
}

impl OptResult {
    pub fn seeds(&self) -> Option<&[NodeId]> {
        match &self.witness {
            Witness::Seeds(s) => Some(s),
            Witness::Policy(_) => None,
        }
    }
}

fn mask_to_nodes(mask: u64) -> Vec<NodeId> {
    (0..64).filter(|v| mask >> v & 1 == 1).collect()
}

/// `OPT_N(G, k)` by exhaustive search over seed sets of size at most `k`; the witness
/// is the lexicographically smallest maximizer.
pub fn opt_n_exact(graph: &InfluenceGraph, k: usize, caps: &Caps) -> Result<OptResult> {
    let n = graph.node_count();
    caps.check_nodes("node", n)?;
    let oracle = ExactSpread::new(graph, caps)?;
    let mut values: Vec<(u64, f64)> = Vec::new();
    let mut best = 0.0f64;
    for mask in 0u64..(1u64 << n) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let v = oracle.spread(mask);
        best = best.max(v);
        values.push((mask, v));
    }
    let witness = values
        .into_iter()
        .filter(|&(_, v)| v >= best - TIE_EPS * best.max(1.0))
        .map(|(mask, _)| mask_to_nodes(mask))
        .min()
        .unwrap_or_default();
    Ok(OptResult { value: best, witness: Witness::Seeds(witness), method: Provenance::Exact })
}

type StateKey = (u64, usize);

/// Optimal adaptive decisions keyed by `(active set, remaining budget)`.
#[derive(Clone, Debug, Default)]
pub struct DpPolicy {
    table: Arc<HashMap<StateKey, (f64, Option<NodeId>)>>,
    budget: usize,
}

impl DpPolicy {
    pub fn value(&self, active: u64, remaining: usize) -> Option<f64> {
        self.table.get(&(active, remaining)).map(|e| e.0)
    }

    pub fn states(&self) -> usize {
        self.table.len()
    }
}

impl Policy for DpPolicy {
    fn name(&self) -> String {
        format!("dp_optimal(k={})", self.budget)
    }

    fn next(&mut self, _graph: &InfluenceGraph, psi: &PartialRealization, remaining: usize) -> Result<Decision> {
        let key = (mask_of(psi.active()), remaining.min(self.budget));
        match self.table.get(&key) {
            Some((_, Some(u))) => Ok(Decision::Seed(*u)),
            Some((_, None)) => Ok(Decision::Stop),
            None => Err(AdgapError::PolicyViolation(format!("state {key:?} was not explored by the optimizer"))),
        }
    }
}

/// Out-edges per node as `(probability, destination)`.
struct Residual {
    out: Vec<Vec<(f64, usize)>>,
    n: usize,
}

impl Residual {
    fn new(graph: &InfluenceGraph) -> Self {
        let out = graph
            .nodes()
            .map(|v| graph.out_edges(v).iter().map(|&e| (graph.edge(e).p, graph.edge(e).dst)).collect())
            .collect();
        Residual { out, n: graph.node_count() }
    }

    /// Distribution of the active set after seeding `u` from active set `active`.
    ///
    /// Out-edges of `active` that leave it are known to be blocked and edges between
    /// active nodes are irrelevant, so only edges out of newly activated nodes are
    /// branched on, lazily, in discovery order.
    fn cascade(&self, active: u64, u: usize) -> Vec<(u64, f64)> {
        let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
        let pending: Vec<(f64, usize)> = self.out[u].clone();
        self.branch(active | 1 << u, pending, 1.0, &mut acc);
        acc.into_iter().collect()
    }

    fn branch(&self, active: u64, mut pending: Vec<(f64, usize)>, prob: f64, acc: &mut BTreeMap<u64, f64>) {
        loop {
            match pending.pop() {
                None => {
                    *acc.entry(active).or_insert(0.0) += prob;
                    return;
                }
                Some((_, w)) if active >> w & 1 == 1 => continue,
                Some((p, w)) => {
                    if p > 0.0 {
                        let mut live_pending = pending.clone();
                        live_pending.extend_from_slice(&self.out[w]);
                        self.branch(active | 1 << w, live_pending, prob * p, acc);
                    }
                    if p < 1.0 {
                        self.branch(active, pending, prob * (1.0 - p), acc);
                    }
                    return;
                }
            }
        }
    }
}

struct AdaptiveDp<'a> {
    residual: &'a Residual,
    memo: HashMap<StateKey, (f64, Option<NodeId>)>,
    full: u64,
}

impl AdaptiveDp<'_> {
    fn value(&mut self, active: u64, budget: usize) -> f64 {
        if let Some(&(v, _)) = self.memo.get(&(active, budget)) {
            return v;
        }
        let stop = active.count_ones() as f64;
        let mut best = (stop, None);
        if budget > 0 && active != self.full {
            for u in (0..self.residual.n).filter(|u| active >> u & 1 == 0) {
                let ev: f64 = self
                    .residual
                    .cascade(active, u)
                    .into_iter()
                    .map(|(next, p)| p * self.value(next, budget - 1))
                    .sum();
                if ev > best.0 + TIE_EPS * best.0.max(1.0) {
                    best = (ev, Some(u));
                }
            }
        }
        self.memo.insert((active, budget), best);
        best.0
    }
}

/// `OPT_A(G, k)` by backward induction over `(active set, remaining budget)`.
///
/// Under full-adoption feedback the only information that matters for the future is
/// the active set: its out-edges leaving it are blocked, and every other edge still
/// has its prior. The witness is the optimal policy table.
pub fn opt_a_exact(graph: &InfluenceGraph, k: usize, caps: &Caps) -> Result<OptResult> {
    let n = graph.node_count();
    caps.check_nodes("node", n)?;
    caps.check_edges("edge", graph.edge_count())?;
    let residual = Residual::new(graph);
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut dp = AdaptiveDp { residual: &residual, memo: HashMap::new(), full };
    let value = dp.value(0, k);
    let policy = DpPolicy { table: Arc::new(dp.memo), budget: k };
    Ok(OptResult { value, witness: Witness::Policy(policy), method: Provenance::Exact })
}

/// `OPT_A(G, k)` by exhaustive policy-tree search over full partial realizations,
/// without collapsing states. Exponential; meant for validating [`opt_a_exact`] on
/// graphs with a handful of edges.
pub fn opt_a_policy_tree(graph: &InfluenceGraph, k: usize, caps: &Caps) -> Result<f64> {
    caps.check_edges("edge", graph.edge_count())?;
    let mut memo = HashMap::new();
    policy_tree_value(graph, &PartialRealization::empty(graph), k, caps, &mut memo)
}

type TreeKey = ((Vec<crate::EdgeState>, Vec<NodeId>), usize);

fn policy_tree_value(
    graph: &InfluenceGraph,
    psi: &PartialRealization,
    budget: usize,
    caps: &Caps,
    memo: &mut HashMap<TreeKey, f64>,
) -> Result<f64> {
    let key = (psi.key(), budget);
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    let mut best = psi.value() as f64;
    if budget > 0 {
        let extensions = consistent_extensions(graph, psi, caps)?;
        for u in graph.nodes().filter(|&u| !psi.active().contains(u)) {
            let mut ev = 0.0;
            for live in &extensions {
                let mut next = psi.clone();
                next.observe_in_place(graph, live, u)?;
                ev += live.weight.unwrap_or(0.0) * policy_tree_value(graph, &next, budget - 1, caps, memo)?;
            }
            best = best.max(ev);
        }
    }
    memo.insert(key, best);
    Ok(best)
}

/// Subsets `S` with nonzero weight `prod_{i in S} x_i prod_{i not in S} (1 - x_i)`.
fn weighted_subsets(x: &[f64]) -> Vec<(u64, f64)> {
    let mut subsets = vec![(0u64, 1.0f64)];
    for (i, &xi) in x.iter().enumerate() {
        if xi <= 0.0 {
            continue;
        }
        if xi >= 1.0 {
            subsets.iter_mut().for_each(|s| s.0 |= 1 << i);
            continue;
        }
        let len = subsets.len();
        for j in 0..len {
            let (mask, w) = subsets[j];
            subsets[j].1 = w * (1.0 - xi);
            subsets.push((mask | 1 << i, w * xi));
        }
    }
    subsets
}

fn check_config(graph: &InfluenceGraph, x: &[f64], caps: &Caps) -> Result<()> {
    if x.len() != graph.node_count() {
        return Err(AdgapError::invalid("configuration length differs from node count"));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AdgapError::invalid("configuration entries must lie in [0, 1]"));
    }
    caps.check_nodes("node", graph.node_count())
}

/// `F(x) = sum_S prod_{i in S} x_i prod_{i not in S} (1 - x_i) sigma(S)`.
pub fn multilinear_exact(graph: &InfluenceGraph, x: &[f64], caps: &Caps) -> Result<f64> {
    check_config(graph, x, caps)?;
    let oracle = ExactSpread::new(graph, caps)?;
    Ok(weighted_subsets(x).into_iter().map(|(s, w)| w * oracle.spread(s)).sum())
}

/// `F_u(x)` for every node `u`: activation probability under independent rounding.
pub fn multilinear_activation(graph: &InfluenceGraph, x: &[f64], caps: &Caps) -> Result<Vec<f64>> {
    check_config(graph, x, caps)?;
    let oracle = ExactSpread::new(graph, caps)?;
    let mut f = vec![0.0; graph.node_count()];
    for (s, w) in weighted_subsets(x) {
        for (fu, a) in f.iter_mut().zip(oracle.activation(s)) {
            *fu += w * a;
        }
    }
    Ok(f)
}

/// `F_u(x)` for a single node.
pub fn multilinear_node_exact(graph: &InfluenceGraph, x: &[f64], u: NodeId, caps: &Caps) -> Result<f64> {
    if u >= graph.node_count() {
        return Err(AdgapError::invalid(format!("node {u} out of range")));
    }
    check_config(graph, x, caps)?;
    let oracle = ExactSpread::new(graph, caps)?;
    Ok(weighted_subsets(x)
        .into_iter()
        .map(|(s, w)| {
            let hit: f64 = oracle
                .support
                .iter()
                .filter(|&&(live, _)| oracle.small.reach(live, s) >> u & 1 == 1)
                .map(|&(_, lw)| lw)
                .sum();
            w * hit
        })
        .sum())
}

/// Per live-edge graph, the set of nodes that reach each node.
fn for_each_ancestry(graph: &InfluenceGraph, caps: &Caps, mut visit: impl FnMut(f64, &[u64])) -> Result<()> {
    let small =
        SmallGraph::new(graph).ok_or(AdgapError::CapExceeded { what: "node", count: graph.node_count(), cap: 64 })?;
    let n = graph.node_count();
    let mut ancestors = vec![0u64; n];
    for (live, w) in live_support(graph, caps)? {
        ancestors.iter_mut().for_each(|a| *a = 0);
        for a in 0..n {
            let mut r = small.reach(live, 1 << a);
            while r != 0 {
                ancestors[r.trailing_zeros() as usize] |= 1 << a;
                r &= r - 1;
            }
        }
        visit(w, &ancestors);
    }
    Ok(())
}

/// `F(x)` computed per live-edge graph: node `v` is active unless every node that
/// reaches it stays unseeded, which happens with probability `prod (1 - x_a)`.
///
/// Algebraically independent of the subset sum in [`multilinear_exact`].
pub fn multilinear_live_edge(graph: &InfluenceGraph, x: &[f64], caps: &Caps) -> Result<f64> {
    check_config(graph, x, caps)?;
    let mut total = 0.0;
    for_each_ancestry(graph, caps, |w, ancestors| {
        let active: f64 =
            ancestors.iter().map(|&anc| 1.0 - mask_to_nodes(anc).iter().map(|&a| 1.0 - x[a]).product::<f64>()).sum();
        total += w * active;
    })?;
    Ok(total)
}

/// Exact `E[f(Psi(1))]` of the Poisson-clock process with rates `x`: node `v` stays
/// inactive iff no clock of a node reaching it fires in `[0, 1]`.
pub fn poisson_expected_exact(graph: &InfluenceGraph, rates: &[f64], caps: &Caps) -> Result<f64> {
    if rates.len() != graph.node_count() || rates.iter().any(|r| r.is_nan() || *r < 0.0) {
        return Err(AdgapError::invalid("rates must be non-negative, one per node"));
    }
    let mut total = 0.0;
    for_each_ancestry(graph, caps, |w, ancestors| {
        let active: f64 = ancestors
            .iter()
            .map(|&anc| {
                let mass: f64 = mask_to_nodes(anc).iter().map(|&a| rates[a]).sum();
                -(-mass).exp_m1()
            })
            .sum();
        total += w * active;
    })?;
    Ok(total)
}

/// Closed form `F_u(x) = 1 - prod_i (1 - p_i x_i)` on a one-directional bipartite
/// graph, where `p_i` is the probability that `i` reaches `u` (`p_u = 1`).
pub fn bipartite_fu_closed_form(graph: &InfluenceGraph, x: &[f64], u: NodeId) -> Result<f64> {
    if !graph.is_bipartite() {
        return Err(AdgapError::WrongKind { expected: "bipartite", found: graph.shape().to_string() });
    }
    if x.len() != graph.node_count() || u >= graph.node_count() {
        return Err(AdgapError::invalid("configuration length or node out of range"));
    }
    let mut miss = 1.0 - x[u];
    for &e in graph.in_edges(u) {
        let edge = graph.edge(e);
        miss *= 1.0 - edge.p * x[edge.src];
    }
    Ok(1.0 - miss)
}

/// `min_i (sum_{j <= i} x_j p_j + p_{i+1})` with `p_{n+1} = 0`, indices in predecessor
/// order starting at the target node itself.
pub fn lemma41_upper_bound(x: &[f64], p: &[f64]) -> Result<f64> {
    if x.len() != p.len() || x.is_empty() {
        return Err(AdgapError::invalid("x and p must be non-empty and of equal length"));
    }
    let mut prefix = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..x.len() {
        prefix += x[i] * p[i];
        let next = p.get(i + 1).copied().unwrap_or(0.0);
        best = best.min(prefix + next);
    }
    Ok(best)
}

/// Predecessor chain of `target` on a line, target first, with reach probabilities.
pub fn predecessor_chain(graph: &InfluenceGraph, target: NodeId) -> Result<(Vec<NodeId>, Vec<f64>)> {
    let order = graph
        .line_order()
        .ok_or_else(|| AdgapError::WrongKind { expected: "line", found: graph.shape().to_string() })?;
    let pos = order.iter().position(|&v| v == target).ok_or_else(|| AdgapError::invalid("target out of range"))?;
    let chain: Vec<NodeId> = order[..=pos].iter().rev().copied().collect();
    let p = chain.iter().map(|&v| reach_prob_path(graph, v, target)).collect::<Result<Vec<_>>>()?;
    Ok((chain, p))
}

/// Largest residual of the telescoping identity
/// `F_1(0..0, x_i..) - F_1(0..0, x_{i+1}..) = x_i p_i (1 - F_i(0..0, x_{i+1}..))`
/// over all `i`, where node 1 is the end of the line and node `i` its `(i-1)`-th
/// predecessor.
pub fn telescoping_identity_check(graph: &InfluenceGraph, x: &[f64], caps: &Caps) -> Result<f64> {
    let order = graph
        .line_order()
        .ok_or_else(|| AdgapError::WrongKind { expected: "line", found: graph.shape().to_string() })?;
    check_config(graph, x, caps)?;
    let n = order.len();
    let target = order[n - 1];
    let (chain, p) = predecessor_chain(graph, target)?;
    // Zero out chain positions [0, upto): the target and its closest predecessors.
    let zeroed = |upto: usize| {
        let mut y = x.to_vec();
        for &v in &chain[..upto] {
            y[v] = 0.0;
        }
        y
    };
    let mut worst = 0.0f64;
    for i in 0..n {
        let with_i = multilinear_node_exact(graph, &zeroed(i), target, caps)?;
        let rest = zeroed(i + 1);
        let without_i = multilinear_node_exact(graph, &rest, target, caps)?;
        let fi = multilinear_node_exact(graph, &rest, chain[i], caps)?;
        let rhs = x[chain[i]] * p[i] * (1.0 - fi);
        worst = worst.max(((with_i - without_i) - rhs).abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `E[OPT_N(G, X)] <= e/(e-1) OPT_N(G, E[X])` for a finite budget distribution given
/// as `(budget, probability)` pairs with an integer mean.
pub fn weak_concavity_check(
    graph: &InfluenceGraph,
    distribution: &[(usize, f64)],
    caps: &Caps,
) -> Result<InequalityCheck> {
    let total: f64 = distribution.iter().map(|d| d.1).sum();
    if distribution.iter().any(|d| d.1 < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(AdgapError::invalid("budget probabilities must be non-negative and sum to 1"));
    }
    let mean: f64 = distribution.iter().map(|&(j, p)| j as f64 * p).sum();
    if (mean - mean.round()).abs() > 1e-9 {
        return Err(AdgapError::NonIntegerMean(mean));
    }
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut opt = |j: usize| -> Result<f64> {
        if let Some(&v) = cache.get(&j) {
            return Ok(v);
        }
        let v = opt_n_exact(graph, j, caps)?.value;
        cache.insert(j, v);
        Ok(v)
    };
    let mut lhs = 0.0;
    for &(j, p) in distribution {
        if p > 0.0 {
            lhs += p * opt(j)?;
        }
    }
    let rhs = E_OVER_E_MINUS_1 * opt(mean.round() as usize)?;
    Ok(InequalityCheck { lhs, rhs, pass: lhs <= rhs + 1e-9 })
}

/// `1 - prod (1 - y_i) >= (1 - 1/e) min{1, sum y_i}`.
pub fn eq15_inequality_check(y: &[f64]) -> Result<InequalityCheck> {
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AdgapError::invalid("y entries must lie in [0, 1]"));
    }
    let lhs = 1.0 - y.iter().map(|v| 1.0 - v).product::<f64>();
    let rhs = (1.0 - (-1.0f64).exp()) * y.iter().sum::<f64>().min(1.0);
    Ok(InequalityCheck { lhs, rhs, pass: lhs >= rhs - 1e-12 })
}

/// `E[min(Y_1 + ... + Y_k, kt)]` for i.i.d. `Y_i` geometric on `{1, 2, ...}` with
/// success probability `1/t`, by convolving truncated mass functions.
///
/// This is the front policy's spread on the `(k, t)` line instance.
pub fn front_spread_convolution(k: usize, t: usize) -> Result<f64> {
    if k == 0 || t == 0 {
        return Err(AdgapError::invalid("k and t must be positive"));
    }
    let cap = k * t;
    let q = 1.0 - 1.0 / t as f64;
    let stop = 1.0 / t as f64;
    // mass[z] = P(S = z) for z < cap; tail = P(S >= cap).
    let mut mass = vec![0.0f64; cap];
    mass[0] = 1.0;
    let mut tail = 0.0f64;
    for _ in 0..k {
        let mut next = vec![0.0f64; cap];
        // g(z) = sum_{j >= 1} mass[z - j] q^(j-1)
        let mut g = 0.0;
        for z in 1..cap {
            g = mass[z - 1] + q * g;
            next[z] = stop * g;
        }
        // P(Y >= cap - z) = q^(cap - z - 1), accumulated by Horner.
        let mut spill = 0.0;
        for &m in &mass {
            spill = spill * q + m;
        }
        tail += spill;
        mass = next;
    }
    let body: f64 = mass.iter().enumerate().map(|(z, m)| z as f64 * m).sum();
    Ok(body + cap as f64 * tail)
}

/// Optimal non-adaptive spread on the `(k, t)` line instance: `(1 - (1 - 1/t)^t) k t`.
pub fn line_opt_n_closed_form(k: usize, t: usize) -> f64 {
    let q = 1.0 - 1.0 / t as f64;
    (1.0 - q.powi(t as i32)) * (k * t) as f64
}

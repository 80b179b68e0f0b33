//! Seeding policies and their evaluation.

use std::ops::Deref;

use rand::Rng;

use crate::cascade::{live_support, sample_live_edges, spread, ExactSpread, LiveEdgeGraph, Method, SpreadEstimate};
use crate::error::{AdgapError, Result};
use crate::feedback::{conditional_marginal_gain, PartialRealization};
use crate::graph::{InfluenceGraph, NodeId};
use crate::mc::{self, substream, Moments, SimRng};
use crate::Caps;

/// Gains at or below this are treated as zero by adaptive greedy.
pub const GAIN_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Seed(NodeId),
    Stop,
}

/// A decision rule mapping the current partial realization to the next seed.
///
/// `begin` is called once per run, before any `next`; randomized policies draw all
/// their randomness there from the generator they are handed.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    fn begin(&mut self, _graph: &InfluenceGraph, _rng: &mut SimRng) -> Result<()> {
        Ok(())
    }

    fn next(&mut self, graph: &InfluenceGraph, psi: &PartialRealization, remaining: usize) -> Result<Decision>;

    fn is_randomized(&self) -> bool {
        false
    }
}

/// Per-node seeding probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    x: Vec<f64>,
}

impl Configuration {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AdgapError::invalid(format!("configuration entry {bad} outside [0, 1]")));
        }
        Ok(Configuration { x })
    }

    pub fn zeros(n: usize) -> Self {
        Configuration { x: vec![0.0; n] }
    }

    pub fn indicator(n: usize, set: &[NodeId]) -> Self {
        let mut x = vec![0.0; n];
        for &v in set {
            x[v] = 1.0;
        }
        Configuration { x }
    }

    pub fn budget_mass(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }
}

impl Deref for Configuration {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.x
    }
}

/// Outcome of running a policy on one realization.
#[derive(Clone, Debug)]
pub struct PolicyRun {
    pub seeds: Vec<NodeId>,
    pub psi: PartialRealization,
    pub value: usize,
}

/// Runs `policy` against realization `live` until it stops or `k` seeds are placed.
pub fn run_policy<P: Policy + ?Sized>(
    graph: &InfluenceGraph,
    policy: &mut P,
    k: usize,
    live: &LiveEdgeGraph,
    rng: &mut SimRng,
) -> Result<PolicyRun> {
    let mut psi = PartialRealization::empty(graph);
    policy.begin(graph, rng)?;
    while psi.seeds().len() < k {
        match policy.next(graph, &psi, k - psi.seeds().len())? {
            Decision::Stop => break,
            Decision::Seed(u) => {
                if u >= graph.node_count() || psi.is_seed(u) {
                    return Err(AdgapError::PolicyViolation(format!(
                        "{} chose node {u}, which is {}",
                        policy.name(),
                        if u >= graph.node_count() { "out of range" } else { "already seeded" }
                    )));
                }
                psi.observe_in_place(graph, live, u)?;
            }
        }
    }
    Ok(PolicyRun { seeds: psi.seeds().to_vec(), value: psi.value(), psi })
}

fn exact_runs<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    caps: &Caps,
    mut visit: impl FnMut(f64, &PolicyRun),
) -> Result<()> {
    if policy.is_randomized() {
        return Err(AdgapError::invalid(format!(
            "{} is randomized; exact evaluation needs a deterministic policy",
            policy.name()
        )));
    }
    let mut rng = substream(0, 0);
    let mut p = policy.clone();
    for (mask, w) in live_support(graph, caps)? {
        let live = LiveEdgeGraph::from_mask(mask, graph.edge_count());
        let run = run_policy(graph, &mut p, k, &live, &mut rng)?;
        visit(w, &run);
    }
    Ok(())
}

/// `sigma(pi)`: expected final active count of the policy with budget `k`.
pub fn policy_spread<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    method: Method,
    caps: &Caps,
) -> Result<SpreadEstimate> {
    match method {
        Method::Exact => {
            let mut total = 0.0;
            exact_runs(graph, policy, k, caps, |w, run| total += w * run.value as f64)?;
            Ok(SpreadEstimate::exact(total))
        }
        Method::MonteCarlo { samples, seed } => {
            let m = policy_mc(graph, policy, k, samples, seed, |run| run.value as f64)?;
            Ok(SpreadEstimate::from_moments(&m))
        }
    }
}

fn policy_mc<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    samples: usize,
    seed: u64,
    score: impl Fn(&PolicyRun) -> f64 + Sync,
) -> Result<Moments> {
    if samples == 0 {
        return Err(AdgapError::invalid("samples must be at least 1"));
    }
    let parts = mc::run_chunks(samples, seed, |rng, len| -> Result<Moments> {
        let mut p = policy.clone();
        let mut m = Moments::default();
        for _ in 0..len {
            let live = sample_live_edges(graph, rng);
            m.push(score(&run_policy(graph, &mut p, k, &live, rng)?));
        }
        Ok(m)
    });
    let mut total = Moments::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

/// Probability that each node is seeded by the policy.
pub fn policy_marginals<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    method: Method,
    caps: &Caps,
) -> Result<Configuration> {
    let n = graph.node_count();
    match method {
        Method::Exact => {
            let mut x = vec![0.0; n];
            exact_runs(graph, policy, k, caps, |w, run| {
                for &s in &run.seeds {
                    x[s] += w;
                }
            })?;
            // Rounding can push a certain event a hair above 1.
            Configuration::new(x.into_iter().map(|v| v.min(1.0)).collect())
        }
        Method::MonteCarlo { samples, seed } => {
            let counts = policy_counts(graph, policy, k, samples, seed, |run| run.seeds.clone())?;
            Configuration::new(counts.into_iter().map(|c| c as f64 / samples as f64).collect())
        }
    }
}

/// Probability that each node ends up active under the policy (`sigma_u(pi)`).
pub fn policy_activation<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    method: Method,
    caps: &Caps,
) -> Result<Vec<f64>> {
    let n = graph.node_count();
    match method {
        Method::Exact => {
            let mut x = vec![0.0; n];
            exact_runs(graph, policy, k, caps, |w, run| {
                for v in run.psi.active().ones() {
                    x[v] += w;
                }
            })?;
            Ok(x)
        }
        Method::MonteCarlo { samples, seed } => {
            let counts = policy_counts(graph, policy, k, samples, seed, |run| run.psi.active().ones().collect())?;
            Ok(counts.into_iter().map(|c| c as f64 / samples as f64).collect())
        }
    }
}

fn policy_counts<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    samples: usize,
    seed: u64,
    nodes: impl Fn(&PolicyRun) -> Vec<NodeId> + Sync,
) -> Result<Vec<u64>> {
    if samples == 0 {
        return Err(AdgapError::invalid("samples must be at least 1"));
    }
    let n = graph.node_count();
    let parts = mc::run_chunks(samples, seed, |rng, len| -> Result<Vec<u64>> {
        let mut p = policy.clone();
        let mut counts = vec![0u64; n];
        for _ in 0..len {
            let live = sample_live_edges(graph, rng);
            for v in nodes(&run_policy(graph, &mut p, k, &live, rng)?) {
                counts[v] += 1;
            }
        }
        Ok(counts)
    });
    let mut total = vec![0u64; n];
    for part in parts {
        total.iter_mut().zip(part?).for_each(|(t, c)| *t += c);
    }
    Ok(total)
}

/// Seeds the inactive node closest to the origin of a directed line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontPolicy {
    budget: Option<usize>,
    order: Option<Vec<NodeId>>,
}

impl FrontPolicy {
    pub fn budgeted(k: usize) -> Self {
        FrontPolicy { budget: Some(k), order: None }
    }

    /// Keeps seeding until the whole line is active.
    pub fn unbounded() -> Self {
        FrontPolicy { budget: None, order: None }
    }
}

pub fn front_policy(budget: Option<usize>) -> FrontPolicy {
    FrontPolicy { budget, order: None }
}

impl Policy for FrontPolicy {
    fn name(&self) -> String {
        match self.budget {
            Some(k) => format!("front(k={k})"),
            None => "front(unbounded)".into(),
        }
    }

    fn begin(&mut self, graph: &InfluenceGraph, _rng: &mut SimRng) -> Result<()> {
        let order = graph
            .line_order()
            .ok_or_else(|| AdgapError::WrongKind { expected: "line", found: graph.shape().to_string() })?;
        // Identity order lets `next` use the bitset's word scan.
        let identity = order.iter().enumerate().all(|(i, &v)| i == v);
        self.order = (!identity).then_some(order);
        Ok(())
    }

    fn next(&mut self, graph: &InfluenceGraph, psi: &PartialRealization, _remaining: usize) -> Result<Decision> {
        if self.budget.is_some_and(|b| psi.seeds().len() >= b) {
            return Ok(Decision::Stop);
        }
        let active = psi.active();
        let first = match &self.order {
            None => active.zeroes().next().filter(|&v| v < graph.node_count()),
            Some(order) => order.iter().copied().find(|&v| !active.contains(v)),
        };
        Ok(first.map_or(Decision::Stop, Decision::Seed))
    }
}

/// Seeds `argmax_u Delta(u | psi)`, lowest id on ties; stops once no gain is positive.
#[derive(Clone, Debug)]
pub struct AdaptiveGreedy {
    method: Method,
    caps: Caps,
}

pub fn adaptive_greedy_policy(method: Method, caps: Caps) -> AdaptiveGreedy {
    AdaptiveGreedy { method, caps }
}

impl Policy for AdaptiveGreedy {
    fn name(&self) -> String {
        "adaptive_greedy".into()
    }

    fn next(&mut self, graph: &InfluenceGraph, psi: &PartialRealization, remaining: usize) -> Result<Decision> {
        if remaining == 0 {
            return Ok(Decision::Stop);
        }
        let mut best: Option<(NodeId, f64)> = None;
        for u in graph.nodes().filter(|&u| !psi.active().contains(u)) {
            let method = match self.method {
                Method::Exact => Method::Exact,
                // Common random numbers across candidates, fresh per step.
                Method::MonteCarlo { samples, seed } => Method::MonteCarlo {
                    samples,
                    seed: seed ^ (psi.seeds().len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                },
            };
            let gain = conditional_marginal_gain(graph, psi, u, method, &self.caps)?;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((u, gain));
            }
        }
        Ok(match best {
            Some((u, g)) if g > GAIN_EPS => Decision::Seed(u),
            _ => Decision::Stop,
        })
    }
}

/// Non-adaptive policy seeding a fixed list in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedSetPolicy {
    seeds: Vec<NodeId>,
}

impl FixedSetPolicy {
    pub fn new(seeds: Vec<NodeId>) -> Self {
        FixedSetPolicy { seeds }
    }
}

impl Policy for FixedSetPolicy {
    fn name(&self) -> String {
        format!("fixed{:?}", self.seeds)
    }

    fn next(&mut self, _graph: &InfluenceGraph, psi: &PartialRealization, _remaining: usize) -> Result<Decision> {
        Ok(self.seeds.iter().copied().find(|v| !psi.is_seed(*v)).map_or(Decision::Stop, Decision::Seed))
    }
}

/// Non-adaptive randomized policy: each node independently included with probability `x_i`.
#[derive(Clone, Debug)]
pub struct IndependentRounding {
    x: Configuration,
    drawn: Vec<NodeId>,
}

pub fn independent_rounding_policy(x: Configuration) -> IndependentRounding {
    IndependentRounding { x, drawn: Vec::new() }
}

impl IndependentRounding {
    pub fn draw<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<NodeId> {
        x.iter().enumerate().filter(|&(_, &p)| rng.random::<f64>() < p).map(|(i, _)| i).collect()
    }
}

impl Policy for IndependentRounding {
    fn name(&self) -> String {
        "independent_rounding".into()
    }

    fn begin(&mut self, graph: &InfluenceGraph, rng: &mut SimRng) -> Result<()> {
        if self.x.len() != graph.node_count() {
            return Err(AdgapError::invalid("configuration length differs from node count"));
        }
        self.drawn = Self::draw(&self.x, rng);
        Ok(())
    }

    fn next(&mut self, _graph: &InfluenceGraph, psi: &PartialRealization, _remaining: usize) -> Result<Decision> {
        Ok(self.drawn.iter().copied().find(|v| !psi.is_seed(*v)).map_or(Decision::Stop, Decision::Seed))
    }

    fn is_randomized(&self) -> bool {
        true
    }
}

/// Greedy on `sigma`, lowest id on ties. Exact mode reuses one enumeration table; MC
/// mode evaluates every candidate on the same sample stream.
pub fn nonadaptive_greedy(graph: &InfluenceGraph, k: usize, method: Method, caps: &Caps) -> Result<Vec<NodeId>> {
    let n = graph.node_count();
    if k > n {
        return Err(AdgapError::invalid(format!("budget {k} exceeds node count {n}")));
    }
    let mut chosen: Vec<NodeId> = Vec::with_capacity(k);
    match method {
        Method::Exact => {
            let oracle = ExactSpread::new(graph, caps)?;
            let mut mask = 0u64;
            let mut current = 0.0;
            for _ in 0..k {
                let mut best: Option<(NodeId, f64)> = None;
                for u in (0..n).filter(|u| mask >> u & 1 == 0) {
                    let gain = oracle.spread(mask | 1 << u) - current;
                    if best.is_none_or(|(_, g)| gain > g + 1e-12) {
                        best = Some((u, gain));
                    }
                }
                let (u, gain) = best.expect("k <= n leaves a candidate");
                mask |= 1 << u;
                current += gain;
                chosen.push(u);
            }
        }
        Method::MonteCarlo { .. } => {
            let mut current = 0.0;
            for _ in 0..k {
                let mut best: Option<(NodeId, f64)> = None;
                for u in (0..n).filter(|u| !chosen.contains(u)) {
                    let mut trial = chosen.clone();
                    trial.push(u);
                    let value = spread(graph, &trial, method, caps)?.value;
                    if best.is_none_or(|(_, v)| value > v) {
                        best = Some((u, value));
                    }
                }
                let (u, value) = best.expect("k <= n leaves a candidate");
                current = value.max(current);
                chosen.push(u);
            }
        }
    }
    Ok(chosen)
}

/// Runs `policy` on one sampled realization and returns its seed set, to be reused
/// non-adaptively.
pub fn random_walk_transform<P: Policy + ?Sized>(
    graph: &InfluenceGraph,
    policy: &mut P,
    k: usize,
    rng: &mut SimRng,
) -> Result<Vec<NodeId>> {
    let live = sample_live_edges(graph, rng);
    let mut seeds = run_policy(graph, policy, k, &live, rng)?.seeds;
    seeds.sort_unstable();
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::spread_exact;
    use crate::graph::{make_line_instance, Edge, GraphKind};

    fn rng() -> SimRng {
        substream(0, 0)
    }

    #[test]
    fn run_policy_examples() {
        let g = make_line_instance(1, 2).unwrap();
        let live = LiveEdgeGraph::all_live(1);
        let run = run_policy(&g, &mut FrontPolicy::budgeted(1), 0, &live, &mut rng()).unwrap();
        assert!(run.seeds.is_empty() && run.value == 0);

        let run = run_policy(&g, &mut FrontPolicy::budgeted(1), 1, &live, &mut rng()).unwrap();
        assert_eq!((run.seeds.clone(), run.value), (vec![0], 2));

        let blocked = LiveEdgeGraph::all_blocked(1);
        let run = run_policy(&g, &mut FrontPolicy::budgeted(2), 2, &blocked, &mut rng()).unwrap();
        assert_eq!((run.seeds, run.value), (vec![0, 1], 2));
    }

    #[derive(Clone)]
    struct Stubborn;
    impl Policy for Stubborn {
        fn name(&self) -> String {
            "stubborn".into()
        }
        fn next(&mut self, _: &InfluenceGraph, _: &PartialRealization, _: usize) -> Result<Decision> {
            Ok(Decision::Seed(0))
        }
    }

    #[test]
    fn reseeding_is_a_violation() {
        let g = make_line_instance(1, 2).unwrap();
        let err = run_policy(&g, &mut Stubborn, 2, &LiveEdgeGraph::all_live(1), &mut rng());
        assert!(matches!(err, Err(AdgapError::PolicyViolation(_))));
    }

    #[test]
    fn front_policy_rejects_non_lines() {
        let star = InfluenceGraph::new(
            3,
            vec![Edge { src: 0, dst: 1, p: 0.5 }, Edge { src: 0, dst: 2, p: 0.5 }],
            GraphKind::General,
        )
        .unwrap();
        let r = run_policy(&star, &mut FrontPolicy::unbounded(), 3, &LiveEdgeGraph::all_live(2), &mut rng());
        assert!(matches!(r, Err(AdgapError::WrongKind { .. })));
    }

    #[test]
    fn front_policy_spread_on_short_line() {
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        assert_eq!(policy_spread(&g, &FrontPolicy::budgeted(2), 0, Method::Exact, &caps).unwrap().value, 0.0);
        let s = policy_spread(&g, &FrontPolicy::budgeted(2), 2, Method::Exact, &caps).unwrap();
        assert!((s.value - 3.25).abs() < 1e-12);
        let greedy = adaptive_greedy_policy(Method::Exact, caps);
        let sg = policy_spread(&g, &greedy, 2, Method::Exact, &caps).unwrap();
        assert!((sg.value - 3.25).abs() < 1e-12);
    }

    #[test]
    fn unbounded_front_marginals() {
        let caps = Caps::default();
        for (k, t) in [(1, 3), (2, 2), (2, 3)] {
            let g = make_line_instance(k, t).unwrap();
            let x = policy_marginals(&g, &FrontPolicy::unbounded(), g.node_count(), Method::Exact, &caps).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-12);
            for &xi in &x[1..] {
                assert!((xi - 1.0 / t as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budgeted_front_marginals_line_2_2() {
        // Node 0 always; the second seed is the first node after the first blocked
        // edge, so node j >= 1 is seeded with probability 2^-j.
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        let x = policy_marginals(&g, &FrontPolicy::budgeted(2), 2, Method::Exact, &caps).unwrap();
        let want = [1.0, 0.5, 0.25, 0.125];
        for (a, b) in x.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{x:?}");
        }
        assert!((x.budget_mass() - 1.875).abs() < 1e-12);
    }

    #[test]
    fn fixed_set_marginals_are_indicator() {
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        let x = policy_marginals(&g, &FixedSetPolicy::new(vec![0, 2]), 2, Method::Exact, &caps).unwrap();
        assert_eq!(x, Configuration::indicator(4, &[0, 2]));
    }

    #[test]
    fn adaptive_greedy_picks() {
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        let mut greedy = adaptive_greedy_policy(Method::Exact, caps);
        let psi = PartialRealization::empty(&g);
        assert_eq!(greedy.next(&g, &psi, 2).unwrap(), Decision::Seed(0));
        let full = crate::feedback::observe(&g, &LiveEdgeGraph::all_live(3), &psi, 0).unwrap();
        assert_eq!(greedy.next(&g, &full, 1).unwrap(), Decision::Stop);
    }

    #[test]
    fn nonadaptive_greedy_examples() {
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        assert!(nonadaptive_greedy(&g, 0, Method::Exact, &caps).unwrap().is_empty());
        let mut s = nonadaptive_greedy(&g, 2, Method::Exact, &caps).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 2]);

        let star = InfluenceGraph::new(
            3,
            vec![Edge { src: 0, dst: 1, p: 0.5 }, Edge { src: 0, dst: 2, p: 0.5 }],
            GraphKind::Bipartite,
        )
        .unwrap();
        assert_eq!(nonadaptive_greedy(&star, 1, Method::Exact, &caps).unwrap(), vec![0]);
        assert_eq!(nonadaptive_greedy(&star, 1, Method::mc(2000, 1), &caps).unwrap(), vec![0]);
        assert!(nonadaptive_greedy(&star, 4, Method::Exact, &caps).is_err());
    }

    #[test]
    fn independent_rounding_examples() {
        let caps = Caps::default();
        let g = InfluenceGraph::new(2, vec![Edge { src: 0, dst: 1, p: 0.5 }], GraphKind::General).unwrap();
        let mut r = rng();
        assert_eq!(IndependentRounding::draw(&[1.0, 1.0], &mut r), vec![0, 1]);
        assert!(IndependentRounding::draw(&[0.0, 0.0], &mut r).is_empty());

        let pol = independent_rounding_policy(Configuration::new(vec![0.5, 0.5]).unwrap());
        assert!(policy_spread(&g, &pol, 2, Method::Exact, &caps).is_err());
        let s = policy_spread(&g, &pol, 2, Method::mc(100_000, 5), &caps).unwrap();
        assert!((s.value - 1.125).abs() <= 3.0 * s.stderr, "{s:?}");
    }

    #[test]
    fn random_walk_examples() {
        let g = make_line_instance(2, 3).unwrap();
        let mut r = rng();
        let mut fixed = FixedSetPolicy::new(vec![3, 1]);
        for _ in 0..10 {
            assert_eq!(random_walk_transform(&g, &mut fixed, 2, &mut r).unwrap(), vec![1, 3]);
        }
        assert!(random_walk_transform(&g, &mut FrontPolicy::unbounded(), 0, &mut r).unwrap().is_empty());

        let t = 4usize;
        let g = make_line_instance(2, t).unwrap();
        let n = g.node_count();
        let mut counts = vec![0usize; n];
        let trials = 40_000;
        for _ in 0..trials {
            for v in random_walk_transform(&g, &mut FrontPolicy::unbounded(), n, &mut r).unwrap() {
                counts[v] += 1;
            }
        }
        assert_eq!(counts[0], trials);
        for &c in &counts[1..] {
            let f = c as f64 / trials as f64;
            let se = (0.25 * 0.75 / trials as f64).sqrt();
            assert!((f - 0.25).abs() <= 4.0 * se, "{f}");
        }
    }

    #[test]
    fn exact_policy_spread_of_fixed_set_matches_spread() {
        let caps = Caps::default();
        let g = make_line_instance(2, 3).unwrap();
        let s = policy_spread(&g, &FixedSetPolicy::new(vec![0, 3]), 2, Method::Exact, &caps).unwrap();
        let want = spread_exact(&g, &[0, 3], &caps).unwrap().value;
        assert!((s.value - want).abs() < 1e-12);
    }
}

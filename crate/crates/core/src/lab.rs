//! Experiment harness: adaptivity-gap measurement, the directed-line experiments and
//! the invariant suite.

use std::collections::hash_map::{Entry, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use crate::cascade::{reachable, sample_live_edges, spread_exact, spread_mc, Provenance};
use crate::error::{AdgapError, Result};
use crate::feedback::{boundary, conditional_marginal_gain, consistent_extensions, PartialRealization};
use crate::graph::{
    make_line_instance, random_family, Edge, FamilyParams, GraphKind, InfluenceGraph, NodeId, ProbSpec,
};
use crate::mc::{self, substream, Moments, SimRng};
use crate::oracles::{
    bipartite_fu_closed_form, eq15_inequality_check, front_spread_convolution, line_opt_n_closed_form,
    multilinear_exact, multilinear_node_exact, opt_a_exact, opt_a_policy_tree, opt_n_exact, poisson_expected_exact,
    telescoping_identity_check, weak_concavity_check, E_OVER_E_MINUS_1,
};
use crate::policy::{
    adaptive_greedy_policy, nonadaptive_greedy, policy_spread, random_walk_transform, run_policy, FrontPolicy, Policy,
};
use crate::report::{Report, Row};
use crate::{Caps, Method};

/// Tolerance for exact comparisons throughout the lab.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub kind: GraphKind,
    pub nodes: usize,
    pub edges: usize,
    pub k: usize,
    pub opt_a: f64,
    pub opt_a_stderr: Option<f64>,
    pub opt_a_method: Provenance,
    pub opt_n: f64,
    pub opt_n_stderr: Option<f64>,
    pub opt_n_method: Provenance,
    /// `opt_a / opt_n`, absent when `opt_n` is zero.
    pub ratio: Option<f64>,
    /// Tightest proven gap bound among the families the graph belongs to.
    pub applicable_bound: Option<f64>,
    pub bound_family: Option<GraphKind>,
    pub bound_satisfied: bool,
}

impl GapReport {
    pub fn to_report(&self, seed: u64) -> Report {
        let mut r = Report::new("gap", seed)
            .param("kind", self.kind.as_str())
            .param("nodes", self.nodes)
            .param("edges", self.edges)
            .param("k", self.k)
            .param("bound_family", self.bound_family.map(|k| k.as_str()));
        let mut a = Row::new("opt_a", self.opt_a).method(self.opt_a_method.label());
        a.stderr = self.opt_a_stderr;
        let mut n = Row::new("opt_n", self.opt_n).method(self.opt_n_method.label());
        n.stderr = self.opt_n_stderr;
        r.push(a);
        r.push(n);
        if let Some(ratio) = self.ratio {
            let mut row = Row::new("ratio", ratio).pass(self.bound_satisfied);
            row.bound = self.applicable_bound;
            r.push(row);
        }
        r
    }
}

/// Proven upper bound on the adaptivity gap for the tightest family `graph` belongs to.
pub fn applicable_bound(graph: &InfluenceGraph) -> Option<(GraphKind, f64)> {
    [
        (GraphKind::Bipartite, E_OVER_E_MINUS_1),
        (GraphKind::OutArborescence, 2.0),
        (GraphKind::InArborescence, 2.0 * E_OVER_E_MINUS_1),
    ]
    .into_iter()
    .find(|&(kind, _)| graph.satisfies(kind))
}

/// `(k, t)` when `graph` is the line instance `line(k, t)` up to relabelling.
pub fn line_instance_params(graph: &InfluenceGraph) -> Option<(usize, usize)> {
    graph.line_order()?;
    let n = graph.node_count();
    if n == 1 {
        return Some((1, 1));
    }
    let p = graph.uniform_probability()?;
    if p >= 1.0 {
        return None;
    }
    let t = (1.0 / (1.0 - p)).round() as usize;
    (t >= 1 && n.is_multiple_of(t) && (1.0 - 1.0 / t as f64 - p).abs() < 1e-12).then_some((n / t, t))
}

/// Compares the optimal adaptive and non-adaptive spreads of `graph` with budget `k`.
///
/// In Monte Carlo mode the adaptive side is the best implemented adaptive policy and
/// is labelled a lower bound; the non-adaptive side is the closed form on line
/// instances and greedy otherwise.
pub fn measure_gap(graph: &InfluenceGraph, k: usize, method: Method, caps: &Caps) -> Result<GapReport> {
    let (opt_a, opt_a_se, opt_a_method, opt_n, opt_n_se, opt_n_method) = match method {
        Method::Exact => {
            let a = opt_a_exact(graph, k, caps)?;
            let n = opt_n_exact(graph, k, caps)?;
            (a.value, None, Provenance::Exact, n.value, None, Provenance::Exact)
        }
        Method::MonteCarlo { samples, seed } => {
            let a = if graph.line_order().is_some() {
                policy_spread(graph, &FrontPolicy::budgeted(k), k, method, caps)?
            } else {
                let inner = if graph.edge_count() <= caps.edges { Method::Exact } else { Method::mc(256, seed) };
                policy_spread(graph, &adaptive_greedy_policy(inner, *caps), k, method, caps)?
            };
            let (n, n_se, n_method) = match line_instance_params(graph) {
                Some((lk, t)) if lk == k => (line_opt_n_closed_form(k, t), None, Provenance::ClosedForm),
                _ => {
                    let seeds = nonadaptive_greedy(graph, k, method, caps)?;
                    let est = spread_mc(graph, &seeds, samples, seed.wrapping_add(1))?;
                    (est.value, Some(est.stderr), est.method)
                }
            };
            (a.value, Some(a.stderr), Provenance::LowerBound, n, n_se, n_method)
        }
    };
    let ratio = (opt_n > 0.0).then(|| opt_a / opt_n);
    let bound = applicable_bound(graph);
    let bound_satisfied = match (ratio, bound) {
        (Some(r), Some((_, b))) => r <= b + EXACT_TOL,
        _ => true,
    };
    Ok(GapReport {
        kind: graph.shape(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        k,
        opt_a,
        opt_a_stderr: opt_a_se,
        opt_a_method,
        opt_n,
        opt_n_stderr: opt_n_se,
        opt_n_method,
        ratio,
        applicable_bound: bound.map(|b| b.1),
        bound_family: bound.map(|b| b.0),
        bound_satisfied,
    })
}

fn check_line_params(k: usize, t: usize, samples: usize) -> Result<()> {
    if k == 0 || t == 0 {
        return Err(AdgapError::invalid("k and t must be positive"));
    }
    if samples == 0 {
        return Err(AdgapError::invalid("samples must be at least 1"));
    }
    Ok(())
}

/// Failures before the first success of a `prob` coin, as a skip length.
fn geometric(prob: f64) -> Geometric {
    Geometric::new(prob).expect("probability in [0, 1]")
}

fn skip(geo: &Geometric, rng: &mut SimRng) -> usize {
    usize::try_from(geo.sample(rng)).unwrap_or(usize::MAX)
}

/// Sorted positions in `[from, len)` where an independent coin with success rate `geo.p` lands.
fn coin_positions(from: usize, len: usize, geo: &Geometric, rng: &mut SimRng, out: &mut Vec<usize>) {
    out.clear();
    let mut i = from;
    loop {
        i = i.saturating_add(skip(geo, rng));
        if i >= len {
            return;
        }
        out.push(i);
        i += 1;
    }
}

/// Active intervals `[start, end)` on a line of `n` nodes where edge `j` joins node `j`
/// to `j + 1`, given sorted blocked edges and sorted seeds.
fn line_active_intervals(n: usize, blocked: &[usize], seeds: &[usize], out: &mut Vec<(usize, usize)>) {
    out.clear();
    let mut si = 0;
    let mut start = 0;
    for end in blocked.iter().copied().chain(std::iter::once(n - 1)) {
        while si < seeds.len() && seeds[si] < start {
            si += 1;
        }
        if si < seeds.len() && seeds[si] <= end {
            out.push((seeds[si], end + 1));
        }
        start = end + 1;
    }
}

/// One draw of the budgeted front policy's spread on `line(k, t)`: each seed activates
/// itself and the run of live edges after it.
fn front_line_sample(n: usize, k: usize, live_run: &Geometric, rng: &mut SimRng) -> usize {
    let mut pos = 0usize;
    for _ in 0..k {
        if pos >= n {
            break;
        }
        pos = pos.saturating_add(skip(live_run, rng)).saturating_add(1);
    }
    pos.min(n)
}

/// Front-policy spread on `line(k, t)` by simulation, against the convolution value and
/// the optimal non-adaptive spread.
pub fn lower_bound_experiment(k: usize, t: usize, samples: usize, seed: u64) -> Result<Report> {
    check_line_params(k, t, samples)?;
    let n = k * t;
    let blocked = geometric(1.0 / t as f64);
    let m = mc::estimate_mean(samples, seed, |rng| front_line_sample(n, k, &blocked, rng) as f64);
    let conv = front_spread_convolution(k, t)?;
    let denom = line_opt_n_closed_form(k, t);
    let se = m.stderr();
    let agree = (m.mean - conv).abs() <= (4.0 * se).max(EXACT_TOL);
    let eps = (8.0 / k as f64).cbrt();
    let floor = ((1.0 - eps) * n as f64).max(0.0);

    let mut r = lower_bound_header(k, t, samples, seed);
    r.push(Row::new("front_spread_mc", m.mean).stderr(se).bound(conv).pass(agree).method("monte_carlo"));
    r.push(Row::new("front_spread_convolution", conv).method("exact"));
    r.push(Row::new("opt_n_closed_form", denom).method("closed_form"));
    r.push(Row::new("ratio", m.mean / denom).stderr(se / denom).bound(E_OVER_E_MINUS_1));
    r.push(Row::new("ratio_convolution", conv / denom).bound(E_OVER_E_MINUS_1));
    r.push(Row::new("epsilon", eps));
    r.push(Row::new("front_spread_floor", floor).bound(conv).pass(conv >= floor - EXACT_TOL));
    Ok(r)
}

fn lower_bound_header(k: usize, t: usize, samples: usize, seed: u64) -> Report {
    Report::new("lowerbound", seed).param("k", k).param("t", t).param("samples", samples)
}

/// Probability that a node far from the origin is active when every node is seeded
/// independently with probability `1/t`.
pub fn interior_activation_limit(t: usize) -> f64 {
    t as f64 / (2 * t - 1) as f64
}

/// Chunk-local accumulators for [`multilinear_ratio_experiment`].
struct MlChunk {
    spread: Moments,
    uniform: Moments,
    diff: Vec<i64>,
}

/// `f+(1, 1/t, ..., 1/t) / F(1, 1/t, ..., 1/t)` on `line(k, t)`.
///
/// The multilinear side is simulated by independent rounding. Per-node activation
/// frequencies are measured under the all-`1/t` configuration on coupled samples.
pub fn multilinear_ratio_experiment(k: usize, t: usize, samples: usize, seed: u64) -> Result<Report> {
    check_line_params(k, t, samples)?;
    let n = k * t;
    let rate = 1.0 / t as f64;
    let coin = geometric(rate);
    let parts = mc::run_chunks(samples, seed, |rng, len| {
        let mut acc = MlChunk { spread: Moments::default(), uniform: Moments::default(), diff: vec![0; n + 1] };
        let (mut blocked, mut seeds, mut intervals) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..len {
            coin_positions(0, n - 1, &coin, rng, &mut blocked);
            coin_positions(0, n, &coin, rng, &mut seeds);
            // All-1/t configuration.
            line_active_intervals(n, &blocked, &seeds, &mut intervals);
            let mut count = 0;
            for &(a, b) in &intervals {
                acc.diff[a] += 1;
                acc.diff[b] -= 1;
                count += b - a;
            }
            acc.uniform.push(count as f64 / n as f64);
            // Origin forced in.
            if seeds.first() != Some(&0) {
                seeds.insert(0, 0);
                line_active_intervals(n, &blocked, &seeds, &mut intervals);
                count = intervals.iter().map(|&(a, b)| b - a).sum();
            }
            acc.spread.push(count as f64);
        }
        acc
    });
    let mut spread = Moments::default();
    let mut uniform = Moments::default();
    let mut diff = vec![0i64; n + 1];
    for part in parts {
        spread.merge(&part.spread);
        uniform.merge(&part.uniform);
        diff.iter_mut().zip(&part.diff).for_each(|(d, p)| *d += p);
    }
    let mut max_freq = 0.0f64;
    let mut running = 0i64;
    let mut over_3se = 0u64;
    let limit = interior_activation_limit(t);
    let node_se = (limit * (1.0 - limit) / samples as f64).sqrt();
    for d in &diff[..n] {
        running += d;
        let f = running as f64 / samples as f64;
        max_freq = max_freq.max(f);
        if f > limit + 3.0 * node_se {
            over_3se += 1;
        }
    }
    // Hoeffding with a union bound over nodes at level 1e-3.
    let max_slack = ((n as f64 / 1e-3).ln() / (2.0 * samples as f64)).sqrt();

    let kt = n as f64;
    let f_hat = spread.mean;
    let f_bound = t as f64 + kt / 2.0 + k as f64;
    let (front_full, front_marginal) = front_unbounded_check(k, t, samples.min(200), seed)?;

    let mut r = Report::new("mlratio", seed).param("k", k).param("t", t).param("samples", samples);
    r.push(Row::new("f_plus", kt).method("closed_form"));
    r.push(Row::new("front_full_activation_rate", front_full.mean).bound(1.0).pass(front_full.mean == 1.0));
    r.push(
        Row::new("front_seed_marginal", front_marginal.mean)
            .stderr(front_marginal.stderr())
            .bound(rate)
            .pass((front_marginal.mean - rate).abs() <= (4.0 * front_marginal.stderr()).max(EXACT_TOL)),
    );
    r.push(
        Row::new("multilinear_mc", f_hat)
            .stderr(spread.stderr())
            .bound(f_bound)
            .pass(f_hat <= f_bound + 3.0 * spread.stderr()),
    );
    r.push(Row::new("ratio", kt / f_hat).stderr(kt * spread.stderr() / (f_hat * f_hat)).bound(2.0));
    r.push(
        Row::new("mean_node_activation", uniform.mean)
            .stderr(uniform.stderr())
            .bound(limit)
            .pass(uniform.mean <= limit + 3.0 * uniform.stderr()),
    );
    r.push(
        Row::new("max_node_activation", max_freq)
            .bound(limit + max_slack)
            .pass(max_freq <= limit + max_slack)
            .note("union-bound margin over all nodes"),
    );
    r.push(Row::new("nodes_above_3se", over_3se as f64).note("informational"));
    Ok(r)
}

/// Runs the unbounded front policy on sampled realizations of `line(k, t)` through the
/// generic policy runner: fraction of fully activated runs, and the seeding frequency
/// of nodes past the origin.
fn front_unbounded_check(k: usize, t: usize, runs: usize, seed: u64) -> Result<(Moments, Moments)> {
    let g = make_line_instance(k, t)?;
    let n = g.node_count();
    let parts = mc::run_chunks(runs, seed ^ 0x5eed_f0f0, |rng, len| -> Result<(Moments, Moments)> {
        let mut policy = FrontPolicy::unbounded();
        let (mut full, mut marg) = (Moments::default(), Moments::default());
        for _ in 0..len {
            let live = sample_live_edges(&g, rng);
            let run = run_policy(&g, &mut policy, n, &live, rng)?;
            full.push((run.value == n) as u8 as f64);
            if n > 1 {
                let rest = run.seeds.iter().filter(|&&s| s != 0).count();
                marg.push(rest as f64 / (n - 1) as f64);
            }
        }
        Ok((full, marg))
    });
    let (mut full, mut marg) = (Moments::default(), Moments::default());
    for part in parts {
        let (f, m) = part?;
        full.merge(&f);
        marg.merge(&m);
    }
    Ok((full, marg))
}

/// `sigma(W(pi))` for the unbounded front policy on `line(k, t)`: the seed set of one
/// realization is replayed non-adaptively on a fresh one.
pub fn random_walk_ratio_experiment(k: usize, t: usize, samples: usize, seed: u64) -> Result<Report> {
    check_line_params(k, t, samples)?;
    let n = k * t;
    let coin = geometric(1.0 / t as f64);
    let m = mc::estimate_mean_with(
        samples,
        seed,
        || (Vec::new(), Vec::new(), Vec::new()),
        |rng, buf| {
            let (blocked, seeds, intervals) = buf;
            coin_positions(0, n - 1, &coin, rng, blocked);
            seeds.clear();
            seeds.push(0);
            seeds.extend(blocked.iter().map(|b| b + 1));
            coin_positions(0, n - 1, &coin, rng, blocked);
            line_active_intervals(n, blocked, seeds, intervals);
            intervals.iter().map(|&(a, b)| b - a).sum::<usize>() as f64
        },
    );
    let kt = n as f64;
    let bound = t as f64 + k as f64 + kt / 2.0;
    let mut r = Report::new("rwratio", seed).param("k", k).param("t", t).param("samples", samples);
    r.push(
        Row::new("random_walk_spread", m.mean).stderr(m.stderr()).bound(bound).pass(m.mean <= bound + 3.0 * m.stderr()),
    );
    r.push(Row::new("f_plus", kt).method("closed_form"));
    r.push(Row::new("ratio", kt / m.mean).stderr(kt * m.stderr() / (m.mean * m.mean)).bound(2.0));
    Ok(r)
}

/// `sigma(W(pi))` for any policy: seed sets drawn by [`random_walk_transform`], scored
/// on independent cascades.
pub fn random_walk_spread<P: Policy + Clone>(
    graph: &InfluenceGraph,
    policy: &P,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<Moments> {
    if samples == 0 {
        return Err(AdgapError::invalid("samples must be at least 1"));
    }
    let parts = mc::run_chunks(samples, seed, |rng, len| -> Result<Moments> {
        let mut p = policy.clone();
        let mut m = Moments::default();
        for _ in 0..len {
            let seeds = random_walk_transform(graph, &mut p, k, rng)?;
            let live = sample_live_edges(graph, rng);
            let set = crate::cascade::node_set(graph.node_count(), &seeds)?;
            m.push(reachable(graph, &live, &set).count_ones(..) as f64);
        }
        Ok(m)
    });
    let mut total = Moments::default();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

/// Options for [`invariant_suite`].
#[derive(Clone, Debug, Default)]
pub struct SuiteOptions {
    /// Overrides every property's default trial count.
    pub trials: Option<usize>,
    /// Restricts the run to one property.
    pub only: Option<String>,
    /// Negates the boundary-size check so the harness must report a violation.
    pub inject_bug: bool,
    pub caps: Caps,
}

#[derive(Clone, Copy, Debug, Default)]
struct Outcome {
    trials: u64,
    violations: u64,
    max_residual: f64,
}

impl Outcome {
    fn record(&mut self, residual: f64, tol: f64) {
        self.max_residual = self.max_residual.max(residual);
        if residual > tol || residual.is_nan() {
            self.violations += 1;
        }
    }
}

type Check = fn(&mut SimRng, usize, &SuiteOptions) -> Result<Outcome>;

/// `(name, description, default trials, tolerance, check)`.
const PROPERTIES: &[(&str, &str, usize, f64, Check)] = &[
    (
        "adaptive_submodularity",
        "conditional gains shrink as observations grow, and stay non-negative",
        20,
        1e-9,
        check_adaptive_submodularity,
    ),
    (
        "poisson_identity",
        "Poisson-clock spread equals the multilinear extension at 1 - exp(-x)",
        20,
        1e-9,
        check_poisson_identity,
    ),
    (
        "boundary_size",
        "boundary of an in-arborescence realization has at most as many nodes as seeds",
        1000,
        0.0,
        check_boundary_size,
    ),
    (
        "two_hop_bound",
        "spread of the active set is at most its size plus the boundary spread",
        1000,
        1e-9,
        check_two_hop,
    ),
    (
        "weak_concavity",
        "expected optimum at a random budget is within e/(e-1) of the optimum at the mean",
        100,
        1e-9,
        check_weak_concavity,
    ),
    (
        "telescoping_identity",
        "per-predecessor telescoping of the end node's activation on a line",
        50,
        1e-9,
        check_telescoping,
    ),
    (
        "bipartite_closed_form",
        "closed-form activation on bipartite graphs matches enumeration",
        50,
        1e-9,
        check_bipartite,
    ),
    ("product_inequality", "1 - prod(1 - y) >= (1 - 1/e) min(1, sum y)", 10_000, 1e-12, check_product_inequality),
    ("seed_count_bound", "sum(1 - exp(-t x)) <= t sum(x) for t in [0, 1]", 1000, 1e-12, check_seed_count_bound),
    (
        "front_convolution",
        "front-policy spread on line(k, t) equals the geometric convolution",
        9,
        1e-9,
        check_front_convolution,
    ),
    ("line_closed_form", "optimal non-adaptive spread on line(k, t) and its witness", 6, 1e-9, check_line_closed_form),
    (
        "adaptive_dominates",
        "optimal adaptive spread is at least the non-adaptive optimum",
        30,
        1e-9,
        check_adaptive_dominates,
    ),
    ("state_collapse", "active-set dynamic program equals full policy-tree search", 20, 1e-9, check_state_collapse),
    (
        "gap_bounds",
        "exact adaptivity gap within the family bound on arborescences and bipartite graphs",
        20,
        1e-9,
        check_gap_bounds,
    ),
];

pub fn suite_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.0).collect()
}

/// Runs the property checks. Each property draws from its own substream of `seed`, so
/// results do not depend on which other properties run. Properties with zero trials
/// are omitted.
pub fn invariant_suite(seed: u64, opts: &SuiteOptions) -> Result<Report> {
    if let Some(name) = &opts.only {
        if !PROPERTIES.iter().any(|p| p.0 == name) {
            return Err(AdgapError::invalid(format!(
                "unknown suite {name}; expected all or one of {}",
                suite_names().join(", ")
            )));
        }
    }
    let mut report = Report::new("verify", seed).param("suite", opts.only.clone().unwrap_or_else(|| "all".into()));
    if let Some(t) = opts.trials {
        report = report.param("trials", t);
    }
    for (i, &(name, note, default_trials, tol, check)) in PROPERTIES.iter().enumerate() {
        if opts.only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let trials = opts.trials.unwrap_or(default_trials);
        if trials == 0 {
            continue;
        }
        let mut rng = substream(seed, i as u64);
        let out = check(&mut rng, trials, opts)?;
        let mut row = Row::new(name, out.max_residual).bound(tol).pass(out.violations == 0).note(note);
        row.trials = Some(out.trials);
        row.violations = Some(out.violations);
        report.push(row);
    }
    Ok(report)
}

const QUARTERS: [f64; 3] = [0.25, 0.5, 0.75];

fn random_general(rng: &mut SimRng, n_max: usize, m_max: usize, probs: &ProbSpec) -> Result<InfluenceGraph> {
    let n = rng.random_range(2..=n_max);
    let m = rng.random_range(1..=m_max.min(n * (n - 1)));
    random_family(GraphKind::General, FamilyParams::General { n, m }, probs, rng)
}

fn random_tree(rng: &mut SimRng, kind: GraphKind, n_max: usize) -> Result<InfluenceGraph> {
    let n = rng.random_range(1..=n_max);
    let probs = ProbSpec::Choice(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    random_family(kind, FamilyParams::Tree { n }, &probs, rng)
}

/// Seeds a random number of random nodes against a sampled realization.
fn random_partial(graph: &InfluenceGraph, rng: &mut SimRng) -> Result<PartialRealization> {
    let live = sample_live_edges(graph, rng);
    let mut nodes: Vec<NodeId> = graph.nodes().collect();
    nodes.shuffle(rng);
    let count = rng.random_range(0..=nodes.len());
    let mut psi = PartialRealization::empty(graph);
    for &u in &nodes[..count] {
        psi.observe_in_place(graph, &live, u)?;
    }
    Ok(psi)
}

/// Every partial realization reachable by seeding inactive nodes, deduplicated.
fn reachable_realizations(graph: &InfluenceGraph, caps: &Caps) -> Result<Vec<PartialRealization>> {
    let mut seen = HashMap::new();
    let mut states = vec![PartialRealization::empty(graph)];
    seen.insert(states[0].key(), 0usize);
    let mut i = 0;
    while i < states.len() {
        let psi = states[i].clone();
        let extensions = consistent_extensions(graph, &psi, caps)?;
        for u in graph.nodes().filter(|&u| !psi.active().contains(u)) {
            for live in &extensions {
                let mut next = psi.clone();
                next.observe_in_place(graph, live, u)?;
                if let Entry::Vacant(slot) = seen.entry(next.key()) {
                    slot.insert(states.len());
                    states.push(next);
                }
            }
        }
        i += 1;
    }
    Ok(states)
}

fn check_adaptive_submodularity(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let probs = ProbSpec::Choice(QUARTERS.to_vec());
    for _ in 0..trials {
        let g = random_general(rng, 5, 6, &probs)?;
        let states = reachable_realizations(&g, &opts.caps)?;
        let mut gains: Vec<Vec<f64>> = Vec::with_capacity(states.len());
        for psi in &states {
            let row = g
                .nodes()
                .map(|u| conditional_marginal_gain(&g, psi, u, Method::Exact, &opts.caps))
                .collect::<Result<Vec<_>>>()?;
            for &d in &row {
                out.record(-d, 1e-9);
            }
            gains.push(row);
        }
        for (a, small) in states.iter().enumerate() {
            for (b, large) in states.iter().enumerate() {
                if a == b || !small.is_subrealization_of(large) {
                    continue;
                }
                for u in g.nodes().filter(|&u| !large.active().contains(u)) {
                    out.record(gains[b][u] - gains[a][u], 1e-9);
                }
            }
        }
        out.trials += 1;
    }
    Ok(out)
}

fn check_poisson_identity(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let g = random_general(rng, 6, 10, &ProbSpec::Range(0.0, 1.0))?;
        let x: Vec<f64> = g.nodes().map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| -(-v).exp_m1()).collect();
        let lhs = poisson_expected_exact(&g, &x, &opts.caps)?;
        let rhs = multilinear_exact(&g, &y, &opts.caps)?;
        out.record((lhs - rhs).abs(), 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

fn check_boundary_size(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let g = random_tree(rng, GraphKind::InArborescence, 12)?;
        let psi = random_partial(&g, rng)?;
        let excess = boundary(&g, &psi).count_ones(..) as f64 - psi.seeds().len() as f64;
        let violated = if opts.inject_bug { excess <= 0.0 } else { excess > 0.0 };
        out.max_residual = out.max_residual.max(excess);
        out.violations += violated as u64;
        out.trials += 1;
    }
    Ok(out)
}

fn check_two_hop(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let g = random_tree(rng, GraphKind::InArborescence, 10)?;
        let psi = random_partial(&g, rng)?;
        let active: Vec<NodeId> = psi.active().ones().collect();
        let edge: Vec<NodeId> = boundary(&g, &psi).ones().collect();
        let lhs = spread_exact(&g, &active, &opts.caps)?.value;
        let rhs = active.len() as f64 + spread_exact(&g, &edge, &opts.caps)?.value;
        out.record(lhs - rhs, 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

/// Two-point budget distribution on `{0..=n}` with a random integer mean.
fn random_budget_distribution(rng: &mut SimRng, n: usize) -> Vec<(usize, f64)> {
    let mean = rng.random_range(0..=n);
    let lo = rng.random_range(0..=mean);
    let hi = rng.random_range(mean..=n);
    if lo == hi {
        return vec![(mean, 1.0)];
    }
    let p_hi = (mean - lo) as f64 / (hi - lo) as f64;
    vec![(lo, 1.0 - p_hi), (hi, p_hi)]
}

fn check_weak_concavity(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let g = random_general(rng, 7, 10, &ProbSpec::Range(0.0, 1.0))?;
        let dist = random_budget_distribution(rng, g.node_count());
        let r = weak_concavity_check(&g, &dist, &opts.caps)?;
        out.record(r.lhs - r.rhs, 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

/// Directed line with shuffled labels.
fn random_line(rng: &mut SimRng, n: usize, probs: &ProbSpec) -> Result<InfluenceGraph> {
    let mut labels: Vec<NodeId> = (0..n).collect();
    labels.shuffle(rng);
    let edges = labels.windows(2).map(|w| Edge { src: w[0], dst: w[1], p: probs.sample(rng) }).collect();
    InfluenceGraph::new(n, edges, GraphKind::Line)
}

fn check_telescoping(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let dyadic = ProbSpec::Choice((0..=8).map(|i| i as f64 / 8.0).collect());
    for _ in 0..trials {
        let n = rng.random_range(1..=8);
        let g = random_line(rng, n, &dyadic)?;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        out.record(telescoping_identity_check(&g, &x, &opts.caps)?, 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

fn check_bipartite(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let params =
            FamilyParams::Bipartite { left: rng.random_range(1..=4), right: rng.random_range(1..=4), density: 0.6 };
        let g = random_family(GraphKind::Bipartite, params, &ProbSpec::Range(0.0, 1.0), rng)?;
        let x: Vec<f64> = g.nodes().map(|_| rng.random::<f64>()).collect();
        for u in g.nodes() {
            let closed = bipartite_fu_closed_form(&g, &x, u)?;
            out.record((closed - multilinear_node_exact(&g, &x, u, &opts.caps)?).abs(), 1e-9);
        }
        out.trials += 1;
    }
    Ok(out)
}

fn check_product_inequality(rng: &mut SimRng, trials: usize, _: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let len = rng.random_range(1..=10);
        let scale: f64 = rng.random();
        let y: Vec<f64> = (0..len).map(|_| scale * rng.random::<f64>()).collect();
        let r = eq15_inequality_check(&y)?;
        out.record(r.rhs - r.lhs, 1e-12);
        out.trials += 1;
    }
    Ok(out)
}

fn check_seed_count_bound(rng: &mut SimRng, trials: usize, _: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let len = rng.random_range(1..=10);
        let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let t: f64 = rng.random();
        let lhs: f64 = x.iter().map(|v| -(-t * v).exp_m1()).sum();
        out.record(lhs - t * x.iter().sum::<f64>(), 1e-12);
        out.trials += 1;
    }
    Ok(out)
}

/// Line instances small enough for exact policy evaluation.
fn small_line_params(rng: &mut SimRng) -> (usize, usize) {
    loop {
        let (k, t) = (rng.random_range(1..=3), rng.random_range(1..=3));
        if k * t <= 9 {
            return (k, t);
        }
    }
}

fn check_front_convolution(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let (k, t) = small_line_params(rng);
        let g = make_line_instance(k, t)?;
        let exact = policy_spread(&g, &FrontPolicy::budgeted(k), k, Method::Exact, &opts.caps)?.value;
        out.record((exact - front_spread_convolution(k, t)?).abs(), 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

fn check_line_closed_form(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let (k, t) = small_line_params(rng);
        let r = opt_n_exact(&make_line_instance(k, t)?, k, &opts.caps)?;
        let expected: Vec<NodeId> = (0..k).map(|i| i * t).collect();
        out.record((r.value - line_opt_n_closed_form(k, t)).abs(), 1e-9);
        if r.seeds() != Some(&expected[..]) {
            out.violations += 1;
        }
        out.trials += 1;
    }
    Ok(out)
}

fn check_adaptive_dominates(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for _ in 0..trials {
        let g = random_general(rng, 6, 8, &ProbSpec::Range(0.0, 1.0))?;
        let k = rng.random_range(0..=3);
        let a = opt_a_exact(&g, k, &opts.caps)?.value;
        let n = opt_n_exact(&g, k, &opts.caps)?.value;
        out.record(n - a, 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

fn check_state_collapse(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let probs = ProbSpec::Choice(QUARTERS.to_vec());
    for _ in 0..trials {
        let g = random_general(rng, 5, 6, &probs)?;
        let k = rng.random_range(1..=3);
        let dp = opt_a_exact(&g, k, &opts.caps)?.value;
        let tree = opt_a_policy_tree(&g, k, &opts.caps)?;
        out.record((dp - tree).abs(), 1e-9);
        out.trials += 1;
    }
    Ok(out)
}

fn check_gap_bounds(rng: &mut SimRng, trials: usize, opts: &SuiteOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for i in 0..trials {
        let g = match i % 3 {
            0 => random_tree(rng, GraphKind::InArborescence, 7)?,
            1 => random_tree(rng, GraphKind::OutArborescence, 7)?,
            _ => {
                let params = FamilyParams::Bipartite {
                    left: rng.random_range(1..=4),
                    right: rng.random_range(1..=3),
                    density: 0.5,
                };
                random_family(GraphKind::Bipartite, params, &ProbSpec::Range(0.0, 1.0), rng)?
            }
        };
        let k = rng.random_range(1..=3);
        let gap = measure_gap(&g, k, Method::Exact, &opts.caps)?;
        if let (Some(r), Some(b)) = (gap.ratio, gap.applicable_bound) {
            out.record(r - b, 1e-9);
        }
        out.trials += 1;
    }
    Ok(out)
}

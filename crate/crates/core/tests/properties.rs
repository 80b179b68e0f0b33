//! Randomized invariants. Graphs are built from a proptest-chosen seed so failures
//! replay exactly.

use adgap::cascade::{per_node_activation, sample_live_edges, spread_exact, spread_mc};
use adgap::graph::{make_line_instance, path_graph, random_family, FamilyParams, GraphKind, ProbSpec};
use adgap::mc::{substream, SimRng};
use adgap::oracles::{
    lemma41_upper_bound, multilinear_exact, multilinear_live_edge, opt_a_exact, opt_n_exact, predecessor_chain,
};
use adgap::policy::{
    adaptive_greedy_policy, independent_rounding_policy, nonadaptive_greedy, policy_activation, policy_marginals,
    policy_spread, run_policy, FixedSetPolicy, FrontPolicy,
};
use adgap::{Caps, Configuration, InfluenceGraph, Method};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-9;
const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

fn small_graph(seed: u64, n_max: usize, m_max: usize) -> InfluenceGraph {
    let mut rng = substream(seed, 0);
    let n = rng.random_range(1..=n_max);
    let m = rng.random_range(0..=m_max.min(n * (n - 1)));
    random_family(GraphKind::General, FamilyParams::General { n, m }, &ProbSpec::Range(0.0, 1.0), &mut rng).unwrap()
}

fn random_x(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn subset(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|v| mask >> v & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn spread_is_monotone_and_submodular(seed in any::<u64>()) {
        let g = small_graph(seed, 5, 7);
        let n = g.node_count();
        let caps = Caps::default();
        let sigma: Vec<f64> = (0..1u64 << n)
            .map(|s| spread_exact(&g, &subset(s, n), &caps).unwrap().value)
            .collect();
        for a in 0..1u64 << n {
            for u in 0..n {
                if a >> u & 1 == 1 {
                    continue;
                }
                let gain_a = sigma[(a | 1 << u) as usize] - sigma[a as usize];
                prop_assert!(gain_a >= -TOL);
                // every superset b of a not containing u
                let free = !a & ((1u64 << n) - 1) & !(1 << u);
                let mut extra = free;
                loop {
                    let b = a | extra;
                    let gain_b = sigma[(b | 1 << u) as usize] - sigma[b as usize];
                    prop_assert!(gain_a >= gain_b - TOL);
                    if extra == 0 {
                        break;
                    }
                    extra = (extra - 1) & free;
                }
            }
        }
    }

    #[test]
    fn activation_sums_to_spread(seed in any::<u64>(), mask in any::<u64>()) {
        let g = small_graph(seed, 7, 10);
        let seeds = subset(mask, g.node_count());
        let caps = Caps::default();
        let act = per_node_activation(&g, &seeds, Method::Exact, &caps).unwrap();
        let total: f64 = act.iter().sum();
        prop_assert!((total - spread_exact(&g, &seeds, &caps).unwrap().value).abs() <= TOL);
        for &s in &seeds {
            prop_assert!((act[s] - 1.0).abs() <= TOL);
        }
    }

    #[test]
    fn monte_carlo_matches_exact(seed in any::<u64>(), mask in any::<u64>()) {
        let g = small_graph(seed, 6, 9);
        let seeds = subset(mask, g.node_count());
        let exact = spread_exact(&g, &seeds, &Caps::default()).unwrap().value;
        let mc = spread_mc(&g, &seeds, 4000, seed).unwrap();
        prop_assert!((mc.value - exact).abs() <= 5.0 * mc.stderr + 1e-12);
    }

    #[test]
    fn multilinear_agrees_at_vertices(seed in any::<u64>(), mask in any::<u64>()) {
        let g = small_graph(seed, 6, 8);
        let n = g.node_count();
        let caps = Caps::default();
        let x: Vec<f64> = (0..n).map(|v| (mask >> v & 1) as f64).collect();
        let f = multilinear_exact(&g, &x, &caps).unwrap();
        prop_assert!((f - spread_exact(&g, &subset(mask, n), &caps).unwrap().value).abs() <= TOL);
    }

    #[test]
    fn multilinear_formulas_agree(seed in any::<u64>()) {
        let g = small_graph(seed, 6, 8);
        let x = random_x(&mut substream(seed, 1), g.node_count());
        let caps = Caps::default();
        let a = multilinear_exact(&g, &x, &caps).unwrap();
        let b = multilinear_live_edge(&g, &x, &caps).unwrap();
        prop_assert!((a - b).abs() <= TOL);
    }

    #[test]
    fn multilinear_is_dr_submodular(seed in any::<u64>()) {
        let g = small_graph(seed, 5, 7);
        let n = g.node_count();
        prop_assume!(n >= 2);
        let mut rng = substream(seed, 2);
        let caps = Caps::default();
        let x: Vec<f64> = random_x(&mut rng, n).into_iter().map(|v| v / 3.0).collect();
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (rng.random::<f64>() / 3.0, rng.random::<f64>() / 3.0);
        let bump = |x: &[f64], v: usize, d: f64| {
            let mut y = x.to_vec();
            y[v] += d;
            y
        };
        let f = |y: &[f64]| multilinear_exact(&g, y, &caps).unwrap();
        let xa = bump(&x, j, b);
        // gain along i at x dominates gain along i at the larger point x + b e_j
        let lo = f(&bump(&x, i, a)) - f(&x);
        let hi = f(&bump(&xa, i, a)) - f(&xa);
        prop_assert!(lo >= hi - TOL);
        prop_assert!(lo >= -TOL);
    }

    /// Only the direction that holds for every instance: some configuration with budget
    /// mass `k` (the greedy indicator among them) reaches `(1 - 1/e) OPT_N`.
    #[test]
    fn multilinear_sup_reaches_fraction_of_optimum(seed in any::<u64>(), k in 1usize..=3) {
        let g = small_graph(seed, 6, 8);
        let n = g.node_count();
        let k = k.min(n);
        let caps = Caps::default();
        let opt = opt_n_exact(&g, k, &caps).unwrap().value;
        let greedy = nonadaptive_greedy(&g, k, Method::Exact, &caps).unwrap();
        let mut best = multilinear_exact(&g, &Configuration::indicator(n, &greedy), &caps).unwrap();
        let mut rng = substream(seed, 5);
        for _ in 0..8 {
            // uniform mass k, clipped coordinates redistributed
            let w = random_x(&mut rng, n);
            let total: f64 = w.iter().sum();
            let mut x: Vec<f64> = w.iter().map(|v| (v / total * k as f64).min(1.0)).collect();
            let short = k as f64 - x.iter().sum::<f64>();
            let room: f64 = x.iter().map(|v| 1.0 - v).sum();
            if room > 0.0 {
                x.iter_mut().for_each(|v| *v = (*v + (1.0 - *v) * short / room).clamp(0.0, 1.0));
            }
            best = best.max(multilinear_exact(&g, &x, &caps).unwrap());
        }
        prop_assert!(best >= ONE_MINUS_INV_E * opt - TOL);
    }

    #[test]
    fn adaptive_optimum_dominates(seed in any::<u64>(), k in 1usize..=3) {
        let g = small_graph(seed, 5, 6);
        let caps = Caps::default();
        let a = opt_a_exact(&g, k, &caps).unwrap();
        let na = opt_n_exact(&g, k, &caps).unwrap();
        prop_assert!(a.value >= na.value - TOL);
        // the DP witness attains its claimed value
        if let adgap::oracles::Witness::Policy(p) = &a.witness {
            let v = policy_spread(&g, p, k, Method::Exact, &caps).unwrap().value;
            prop_assert!((v - a.value).abs() <= TOL);
        } else {
            prop_assert!(false, "adaptive optimum without a policy witness");
        }
        // the fixed-set policy on the non-adaptive witness is just its spread
        let fixed = FixedSetPolicy::new(na.seeds().unwrap().to_vec());
        let v = policy_spread(&g, &fixed, k, Method::Exact, &caps).unwrap().value;
        prop_assert!((v - na.value).abs() <= TOL);
    }

    #[test]
    fn adaptive_greedy_guarantee(seed in any::<u64>(), k in 1usize..=3) {
        let g = small_graph(seed, 5, 6);
        let caps = Caps::default();
        let opt = opt_a_exact(&g, k, &caps).unwrap().value;
        let greedy = adaptive_greedy_policy(Method::Exact, caps);
        let v = policy_spread(&g, &greedy, k, Method::Exact, &caps).unwrap().value;
        prop_assert!(v >= ONE_MINUS_INV_E * opt - TOL);
        prop_assert!(v <= opt + TOL);
    }

    #[test]
    fn policies_respect_the_budget(seed in any::<u64>(), k in 0usize..=4) {
        let g = small_graph(seed, 7, 10);
        let mut rng = substream(seed, 3);
        let live = sample_live_edges(&g, &mut rng);
        let x = Configuration::new(random_x(&mut rng, g.node_count())).unwrap();
        let mut greedy = adaptive_greedy_policy(Method::Exact, Caps::default());
        let mut rounding = independent_rounding_policy(x);
        prop_assert!(run_policy(&g, &mut greedy, k, &live, &mut rng).unwrap().seeds.len() <= k);
        prop_assert!(run_policy(&g, &mut rounding, k, &live, &mut rng).unwrap().seeds.len() <= k);
    }

    #[test]
    fn seed_count_bound(x in prop::collection::vec(0.0f64..1.0, 1..12), t in 0.0f64..=1.0) {
        let lhs: f64 = x.iter().map(|v| -(-t * v).exp_m1()).sum();
        prop_assert!(lhs <= t * x.iter().sum::<f64>() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn adaptive_beats_front_on_lines(k in 1usize..=3, t in 1usize..=3) {
        let g = make_line_instance(k, t).unwrap();
        let caps = Caps::default();
        let front = policy_spread(&g, &FrontPolicy::budgeted(k), k, Method::Exact, &caps).unwrap().value;
        prop_assert!(opt_a_exact(&g, k, &caps).unwrap().value >= front - TOL);
    }

    /// Every policy's activation of a line node is squeezed by its seeding marginals.
    #[test]
    fn line_activation_below_marginal_bound(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = substream(seed, 4);
        let len = rng.random_range(2..=7);
        let probs: Vec<f64> = (1..len).map(|_| rng.random_range(0..=4) as f64 / 4.0).collect();
        let g = path_graph(&probs).unwrap();
        let caps = Caps::default();
        let greedy = adaptive_greedy_policy(Method::Exact, caps);
        let dp = match opt_a_exact(&g, k, &caps).unwrap().witness {
            adgap::oracles::Witness::Policy(p) => p,
            _ => unreachable!(),
        };
        let front = FrontPolicy::budgeted(k);
        let check = |x: &[f64], act: &[f64]| -> Result<(), TestCaseError> {
            for u in g.nodes() {
                let (chain, p) = predecessor_chain(&g, u).unwrap();
                let xs: Vec<f64> = chain.iter().map(|&v| x[v]).collect();
                let bound = lemma41_upper_bound(&xs, &p).unwrap();
                prop_assert!(act[u] <= bound + TOL, "node {}: {} > {}", u, act[u], bound);
            }
            Ok(())
        };
        check(
            &policy_marginals(&g, &greedy, k, Method::Exact, &caps).unwrap(),
            &policy_activation(&g, &greedy, k, Method::Exact, &caps).unwrap(),
        )?;
        check(
            &policy_marginals(&g, &dp, k, Method::Exact, &caps).unwrap(),
            &policy_activation(&g, &dp, k, Method::Exact, &caps).unwrap(),
        )?;
        check(
            &policy_marginals(&g, &front, k, Method::Exact, &caps).unwrap(),
            &policy_activation(&g, &front, k, Method::Exact, &caps).unwrap(),
        )?;
    }
}

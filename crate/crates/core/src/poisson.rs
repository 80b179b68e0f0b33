//! Poisson-clock seeding: node `i` fires at rate `x_i` over `[0, 1]`.
//!
//! Only first firings are sampled; a later firing of a seeded node changes nothing.

use rand::Rng;
use rand_distr::Exp1;

use crate::cascade::LiveEdgeGraph;
use crate::error::{AdgapError, Result};
use crate::feedback::{conditional_marginal_gain, PartialRealization};
use crate::graph::{InfluenceGraph, NodeId};
use crate::Caps;

#[derive(Clone, Debug)]
pub struct PoissonTrajectory {
    /// First firing times before `t = 1`, ascending.
    pub firings: Vec<(f64, NodeId)>,
    /// Partial realization at each requested snapshot time.
    pub snapshots: Vec<(f64, PartialRealization)>,
    /// `f(Psi(1))`.
    pub final_value: usize,
    pub final_state: PartialRealization,
}

/// First firing time of a clock with the given rate, `None` if it does not fire in `[0, 1)`.
pub fn first_firing<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Option<f64> {
    if rate <= 0.0 {
        return None;
    }
    if rate.is_infinite() {
        return Some(0.0);
    }
    let e: f64 = rng.sample(Exp1);
    let time = e / rate;
    (time < 1.0).then_some(time)
}

/// Simulates the clocks against realization `live`, seeding every firing node in time
/// order with full-adoption observation.
pub fn poisson_process_run<R: Rng + ?Sized>(
    graph: &InfluenceGraph,
    rates: &[f64],
    live: &LiveEdgeGraph,
    snapshot_times: &[f64],
    rng: &mut R,
) -> Result<PoissonTrajectory> {
    if rates.len() != graph.node_count() {
        return Err(AdgapError::invalid("rate vector length differs from node count"));
    }
    if let Some(r) = rates.iter().find(|r| r.is_nan() || **r < 0.0) {
        return Err(AdgapError::invalid(format!("negative or NaN rate {r}")));
    }
    let mut firings: Vec<(f64, NodeId)> =
        rates.iter().enumerate().filter_map(|(i, &r)| first_firing(r, rng).map(|t| (t, i))).collect();
    firings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut times: Vec<f64> = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut psi = PartialRealization::empty(graph);
    let mut next_snapshot = times.iter().peekable();
    for &(t, node) in &firings {
        while let Some(&&s) = next_snapshot.peek() {
            if s < t {
                snapshots.push((s, psi.clone()));
                next_snapshot.next();
            } else {
                break;
            }
        }
        psi.observe_in_place(graph, live, node)?;
    }
    for &s in next_snapshot {
        snapshots.push((s, psi.clone()));
    }
    Ok(PoissonTrajectory { firings, snapshots, final_value: psi.value(), final_state: psi })
}

/// Instantaneous expected gain rate at state `psi`: `sum_{i not active} x_i Delta(i | psi)`.
pub fn poisson_rate(graph: &InfluenceGraph, psi: &PartialRealization, x: &[f64], caps: &Caps) -> Result<f64> {
    if x.len() != graph.node_count() {
        return Err(AdgapError::invalid("rate vector length differs from node count"));
    }
    let mut total = 0.0;
    for i in graph.nodes().filter(|&i| !psi.active().contains(i)) {
        if x[i] != 0.0 {
            total += x[i] * conditional_marginal_gain(graph, psi, i, crate::Method::Exact, caps)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{sample_live_edges, spread_exact};
    use crate::feedback::observe;
    use crate::graph::make_line_instance;
    use crate::mc::{estimate_mean, substream};

    #[test]
    fn zero_rates_never_fire() {
        let g = make_line_instance(2, 2).unwrap();
        let mut rng = substream(1, 0);
        let run = poisson_process_run(&g, &[0.0; 4], &LiveEdgeGraph::all_live(3), &[0.5], &mut rng).unwrap();
        assert!(run.firings.is_empty());
        assert_eq!(run.final_value, 0);
        assert_eq!(run.snapshots.len(), 1);
    }

    #[test]
    fn infinite_rate_seeds_immediately() {
        let g = make_line_instance(2, 2).unwrap();
        let mut rng = substream(2, 0);
        let live = LiveEdgeGraph::from_mask(0b011, 3);
        let run = poisson_process_run(&g, &[0.0, f64::INFINITY, 0.0, 0.0], &live, &[], &mut rng).unwrap();
        assert_eq!(run.firings, vec![(0.0, 1)]);
        assert_eq!(run.final_value, 2);
    }

    #[test]
    fn seeding_frequency_matches_exponential_cdf() {
        let g = make_line_instance(1, 3).unwrap();
        let rates = [0.3, 1.0, 2.5];
        for (i, &r) in rates.iter().enumerate() {
            let m = estimate_mean(50_000, 10 + i as u64, |rng| {
                let live = sample_live_edges(&g, rng);
                let run = poisson_process_run(&g, &rates, &live, &[], rng).unwrap();
                run.firings.iter().any(|&(_, v)| v == i) as u8 as f64
            });
            let want = 1.0 - (-r).exp();
            assert!((m.mean - want).abs() <= 3.0 * m.stderr(), "node {i}: {} vs {want}", m.mean);
        }
    }

    #[test]
    fn snapshots_are_monotone() {
        let g = make_line_instance(3, 2).unwrap();
        let mut rng = substream(3, 0);
        for _ in 0..50 {
            let live = sample_live_edges(&g, &mut rng);
            let run = poisson_process_run(&g, &[0.7; 6], &live, &[0.0, 0.25, 0.5, 1.0], &mut rng).unwrap();
            assert!(run.firings.windows(2).all(|w| w[0].0 <= w[1].0));
            for w in run.snapshots.windows(2) {
                assert!(w[0].1.is_subrealization_of(&w[1].1));
            }
            assert_eq!(run.snapshots.last().unwrap().1.value(), run.final_value);
        }
    }

    #[test]
    fn rate_examples() {
        let caps = Caps::default();
        let g = make_line_instance(2, 2).unwrap();
        let full = observe(&g, &LiveEdgeGraph::all_live(3), &PartialRealization::empty(&g), 0).unwrap();
        assert_eq!(poisson_rate(&g, &full, &[0.5; 4], &caps).unwrap(), 0.0);

        let x = [0.1, 0.2, 0.3, 0.4];
        let empty = PartialRealization::empty(&g);
        let want: f64 = (0..4).map(|i| x[i] * spread_exact(&g, &[i], &caps).unwrap().value).sum();
        assert!((poisson_rate(&g, &empty, &x, &caps).unwrap() - want).abs() < 1e-12);

        let psi = observe(&g, &LiveEdgeGraph::from_mask(0b001, 3), &empty, 0).unwrap();
        let r = poisson_rate(&g, &psi, &[0.0, 0.0, 0.5, 0.5], &caps).unwrap();
        assert!((r - 1.25).abs() < 1e-12);
    }
}

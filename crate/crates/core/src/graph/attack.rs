use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::interactions::{Edge, InteractionGraph};

#[derive(Debug)]
struct Candidate {
    score: f64,
    edge: Edge,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| self.edge.cmp(&other.edge))
    }
}

/// Picks `count` implausible interactions to inject.
///
/// All pairs absent from `graph` are ranked by `score` (ascending, ties by
/// user then item); the `tail_factor·count` lowest form the candidate tail and
/// `count` of them are drawn uniformly. Returns the augmented graph and the
/// injected edges (sorted).
pub fn inject_adversarial_edges<R: Rng + ?Sized>(
    graph: &InteractionGraph,
    score: impl Fn(usize, usize) -> f64,
    count: usize,
    tail_factor: usize,
    rng: &mut R,
) -> Result<(InteractionGraph, Vec<Edge>)> {
    let available = graph.n_users() * graph.n_items() - graph.n_edges();
    if count > available {
        return Err(Error::InvalidArgument(format!(
            "requested {count} adversarial edges but only {available} non-edges exist"
        )));
    }
    if count == 0 {
        return Ok((graph.clone(), Vec::new()));
    }
    let tail_size = count.saturating_mul(tail_factor.max(1)).min(available);

    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(tail_size + 1);
    for user in 0..graph.n_users() {
        let seen = graph.user_items(user);
        for item in 0..graph.n_items() {
            if seen.binary_search(&item).is_ok() {
                continue;
            }
            let cand = Candidate {
                score: score(user, item),
                edge: Edge::new(user, item),
            };
            if heap.len() < tail_size {
                heap.push(cand);
            } else if cand < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    let tail = heap.into_sorted_vec();
    let mut injected: Vec<Edge> = sample(rng, tail.len(), count)
        .into_iter()
        .map(|k| tail[k].edge)
        .collect();
    injected.sort_unstable();
    let attacked = graph.with_edges(graph.edges().iter().chain(&injected).copied())?;
    Ok((attacked, injected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn globally_minimal_pair_is_chosen_with_unit_tail() {
        let g = InteractionGraph::new(3, 4, [Edge::new(0, 0)]).unwrap();
        for seed in 0..10 {
            let (_, adv) = inject_adversarial_edges(
                &g,
                |u, i| if (u, i) == (2, 1) { -5.0 } else { (u + i) as f64 },
                1,
                1,
                &mut seeded_rng(seed),
            )
            .unwrap();
            assert_eq!(adv, vec![Edge::new(2, 1)]);
        }
    }

    #[test]
    fn injected_edges_are_new_and_added() {
        let edges = (0..10).flat_map(|u| (0..5).map(move |i| Edge::new(u, (u + i) % 10)));
        let g = InteractionGraph::new(10, 10, edges).unwrap();
        let (attacked, adv) =
            inject_adversarial_edges(&g, |u, i| ((u * 7 + i * 3) % 11) as f64, 8, 10, &mut seeded_rng(1)).unwrap();
        assert_eq!(adv.len(), 8);
        assert!(adv.iter().all(|e| !g.contains(*e)));
        assert!(adv.iter().all(|e| attacked.contains(*e)));
        assert_eq!(attacked.n_edges(), g.n_edges() + 8);
    }

    #[test]
    fn too_many_requested_is_an_error() {
        let g = InteractionGraph::new(1, 2, [Edge::new(0, 0)]).unwrap();
        assert!(inject_adversarial_edges(&g, |_, _| 0.0, 2, 10, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn injected_scores_sit_in_the_low_tail() {
        // Exhaustive oracle on a 50x50 instance: score every pair, find the
        // 10th percentile, and compare with the injected mean.
        let mut rng = seeded_rng(4);
        let user_f: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let item_f: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let score = |u: usize, i: usize| user_f[u] * item_f[i];
        let edges = (0..50).flat_map(|u| (0..4).map(move |k| Edge::new(u, (u * 3 + k * 11) % 50)));
        let g = InteractionGraph::new(50, 50, edges).unwrap();

        let mut all: Vec<f64> = (0..50).flat_map(|u| (0..50).map(move |i| (u, i))).map(|(u, i)| score(u, i)).collect();
        all.sort_by(f64::total_cmp);
        let p10 = all[all.len() / 10];

        let (_, adv) = inject_adversarial_edges(&g, score, 25, 10, &mut seeded_rng(8)).unwrap();
        let mean = adv.iter().map(|e| score(e.user, e.item)).sum::<f64>() / adv.len() as f64;
        assert!(mean < p10, "mean {mean} vs p10 {p10}");
    }
}
